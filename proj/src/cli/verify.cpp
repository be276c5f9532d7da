#include <algorithm>
#include <cmath>
#include <cstdio>

#include "uwe/cli.hpp"
#include "uwe/color.hpp"

namespace uwe::cli {

namespace {

using diffusion::Tensor;

std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

RgbImage random_image(Rng& rng, std::size_t w, std::size_t h) {
  RgbImage img(w, h);
  for (double& v : img.storage()) v = rng.uniform();
  return img;
}

Tensor random_tensor(Rng& rng, std::size_t n) {
  Tensor t(n);
  for (double& v : t) v = rng.normal();
  return t;
}

struct Moments {
  double mean = 0.0, var = 0.0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  for (double x : v) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(v.size());
  return m;
}

// Sample mean and variance within `k` standard errors of the truth.
CheckResult moment_check(std::string name, const Moments& got, double mean, double var, std::size_t n, double k) {
  const double se_mean = std::sqrt(var / static_cast<double>(n));
  const double se_var = var * std::sqrt(2.0 / static_cast<double>(n - 1));
  const double zm = std::abs(got.mean - mean) / se_mean, zv = std::abs(got.var - var) / se_var;
  char buf[200];
  std::snprintf(buf, sizeof buf, "mean %.4f vs %.4f (%.2f SE), var %.4f vs %.4f (%.2f SE)", got.mean, mean, zm,
                got.var, var, zv);
  return {std::move(name), zm < k && zv < k, buf};
}

CheckResult color_round_trip(std::uint64_t seed) {
  Rng rng(seed, 1);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const RgbImage img = random_image(rng, 16, 16);
    const RgbImage back = lab_to_srgb(srgb_to_lab(img));
    for (std::size_t k = 0; k < img.data().size(); ++k) worst = std::max(worst, std::abs(back.data()[k] - img.data()[k]));
  }
  return {"color_round_trip", worst < 1e-4, fmt("max error %.3g", worst)};
}

CheckResult color_transfer_stats(std::uint64_t seed) {
  Rng rng(seed, 2);
  double worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    const LabImage src = srgb_to_lab(random_image(rng, 24, 16));
    const ChannelStats target = channel_stats(srgb_to_lab(random_image(rng, 8, 8)));
    const ChannelStats got = channel_stats(synthesis::color_transfer(src, target));
    for (int c = 0; c < 3; ++c) {
      worst = std::max(worst, std::abs(got.mean[c] - target.mean[c]));
      worst = std::max(worst, std::abs(got.std[c] - target.std[c]));
    }
  }
  return {"color_transfer_stats", worst < 1e-6, fmt("max Lab stat error %.3g", worst)};
}

CheckResult scatter_limits(std::uint64_t seed) {
  Rng rng(seed, 3);
  const RgbImage clean = random_image(rng, 8, 8);
  synthesis::DegradationParams p;
  p.beta_d = {0.4, 0.2, 0.1};
  p.beta_b = {0.3, 0.2, 0.1};
  p.veil = {0.1, 0.5, 0.6};
  p.depth = 0.0;
  const RgbImage near = synthesis::scatter_degrade(clean, p);
  p.depth = 1e6;
  const RgbImage far = synthesis::scatter_degrade(clean, p);
  double e0 = 0.0, e1 = 0.0;
  for (std::size_t k = 0; k < clean.data().size(); ++k) {
    e0 = std::max(e0, std::abs(near.data()[k] - clean.data()[k]));
    e1 = std::max(e1, std::abs(far.data()[k] - p.veil[k % 3]));
  }
  return {"scatter_limits", e0 == 0.0 && e1 < 1e-9, fmt("zero depth %.3g, far field %.3g", e0, e1)};
}

CheckResult schedule_match() {
  const auto ref = diffusion::make_linear_schedule(diffusion::kReferenceSteps, diffusion::kReferenceBetaStart,
                                                   diffusion::kReferenceBetaEnd);
  const auto s = diffusion::make_matched_schedule(200);
  const double a = ref.alpha_bar_at(ref.T), b = s.alpha_bar_at(s.T);
  const double rel = std::abs(a - b) / a;
  return {"schedule_terminal_match", rel < 1e-9, fmt("alpha_bar_T %.6g vs %.6g", b, a)};
}

CheckResult score_identity(std::uint64_t seed) {
  Rng rng(seed, 4);
  const auto s = diffusion::make_matched_schedule(200);
  const auto w = diffusion::AnalyticGaussianWorld::isotropic(4, 0.3, 1.7, 0.5);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const std::size_t t = 1 + rng.index(s.T);
    const Tensor x = random_tensor(rng, 4);
    const Tensor a = diffusion::score_from_noise(w.exact_eps(x, t, s), t, s), b = w.marginal_score(x, t, s);
    for (std::size_t k = 0; k < 4; ++k) worst = std::max(worst, std::abs(a[k] - b[k]) / std::max(1.0, std::abs(b[k])));
  }
  return {"score_noise_identity", worst < 1e-9, fmt("max relative error %.3g", worst)};
}

CheckResult guidance_algebra(std::uint64_t seed) {
  Rng rng(seed, 5);
  const auto s = diffusion::make_matched_schedule(200);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t t = 1 + rng.index(s.T);
    diffusion::GuidanceConfig cfg;
    cfg.lambda = rng.uniform();
    const Tensor eps = random_tensor(rng, 8), g1 = random_tensor(rng, 8), g2 = random_tensor(rng, 8);
    const Tensor via_noise =
        diffusion::score_from_noise(diffusion::guided_noise_prediction(eps, g1, g2, t, s, cfg), t, s);
    const Tensor direct = diffusion::combine_scores_lambda(diffusion::score_from_noise(eps, t, s), g1, g2, cfg.lambda);
    for (std::size_t k = 0; k < 8; ++k) worst = std::max(worst, std::abs(via_noise[k] - direct[k]));
  }
  return {"guidance_noise_vs_score", worst < 1e-12, fmt("max abs difference %.3g over 1000 draws", worst)};
}

diffusion::GuidedSampler world_sampler(const diffusion::NoiseSchedule& s, const diffusion::AnalyticGaussianWorld& w) {
  diffusion::GuidedSampler g;
  g.schedule = &s;
  g.eps_theta = [&s, &w](std::span<const double> x, std::size_t t) { return w.exact_eps(x, t, s); };
  return g;
}

std::vector<CheckResult> sampler_checks(std::uint64_t seed) {
  const auto s = diffusion::make_matched_schedule(200);
  const auto w = diffusion::AnalyticGaussianWorld::isotropic(1, 0.0, 1.0, 0.5);
  const std::size_t n = 10000;
  std::vector<CheckResult> out;

  const auto prior = world_sampler(s, w);
  out.push_back(moment_check("unguided_prior_recovery",
                             moments(diffusion::sample_trajectories(prior, n, 1, derive_seed(seed, 6),
                                                                    kernels::default_exec())),
                             w.mu0[0], w.var0[0], n, 4.0));

  const Tensor y{2.0};
  auto guided = world_sampler(s, w);
  guided.grad_y1 = [&](std::span<const double> x, std::size_t t) { return w.observation_gradient(x, y, t, s); };
  guided.guidance.lambda = 1.0;
  out.push_back(moment_check("guided_posterior_recovery",
                             moments(diffusion::sample_trajectories(guided, n, 1, derive_seed(seed, 7),
                                                                    kernels::default_exec())),
                             w.posterior_mean(y)[0], w.posterior_variance()[0], n, 4.0));

  const Tensor y1{-2.0}, y2{2.0};
  auto both = world_sampler(s, w);
  both.grad_y1 = [&](std::span<const double> x, std::size_t t) { return w.observation_gradient(x, y1, t, s); };
  both.grad_y2 = [&](std::span<const double> x, std::size_t t) { return w.observation_gradient(x, y2, t, s); };
  const double target = w.posterior_mean(y2)[0];
  double prev = INFINITY;
  bool monotone = true;
  std::string detail = "gap to second-condition posterior mean:";
  for (double lambda : {0.9, 0.7, 0.5, 0.3, 0.1}) {
    both.guidance.lambda = lambda;
    const double m =
        moments(diffusion::sample_trajectories(both, 4000, 1, derive_seed(seed, 8), kernels::default_exec())).mean;
    const double gap = std::abs(m - target);
    monotone = monotone && gap < prev;
    prev = gap;
    detail += fmt(" %.3f", gap);
  }
  out.push_back({"lambda_direction", monotone, detail});
  return out;
}

}  // namespace

std::vector<CheckResult> run_verification(std::uint64_t seed) {
  std::vector<CheckResult> out{color_round_trip(seed), color_transfer_stats(seed), scatter_limits(seed),
                               schedule_match(), score_identity(seed), guidance_algebra(seed)};
  for (auto& c : sampler_checks(seed)) out.push_back(std::move(c));
  return out;
}

}  // namespace uwe::cli
