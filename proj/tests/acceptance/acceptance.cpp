// Acceptance run: one pass/fail line per criterion, each timed against its
// runtime budget. Exit status is non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"
#include "uwe/cli.hpp"
#include "uwe/color.hpp"
#include "uwe/gradcheck.hpp"
#include "uwe/image_io.hpp"
#include "uwe/metrics.hpp"
#include "uwe/synthesis.hpp"
#include "uwe/training.hpp"

using namespace uwe;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

std::vector<double> normals(std::size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

// ---- 1. color round trip ---------------------------------------------------

Outcome color_round_trip() {
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const RgbImage x = test::random_image(64, 64, 1000 + i);
    const RgbImage back = lab_to_srgb(srgb_to_lab(x));
    worst = std::max(worst, test::max_abs_diff(x, back));
  }
  return {worst < 1e-4, fmt("max |rt(x) - x| = %.3g over 100 images (< 1e-4)", worst)};
}

// ---- 2. color transfer statistics ------------------------------------------

Outcome stats_matching() {
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 50; ++i) {
    const LabImage src = srgb_to_lab(test::random_image(48, 40, 2000 + i, 0.1, 0.8));
    const ChannelStats target = channel_stats(srgb_to_lab(test::random_image(32, 32, 3000 + i)));
    const ChannelStats got = channel_stats(synthesis::color_transfer(src, target));
    for (int c = 0; c < 3; ++c)
      worst = std::max({worst, std::abs(got.mean[c] - target.mean[c]), std::abs(got.std[c] - target.std[c])});
  }
  return {worst < 1e-6, fmt("max Lab mean/std error %.3g over 50 pairs (< 1e-6)", worst)};
}

// ---- 3. scatter model limits -----------------------------------------------

Outcome scatter_limits() {
  const RgbImage clean = test::random_image(32, 32, 31);
  synthesis::DegradationParams p;
  p.beta_d = {0.45, 0.2, 0.08};
  p.beta_b = p.beta_d;
  p.veil = {0.05, 0.45, 0.6};

  p.depth = 0.0;
  const bool identity = synthesis::scatter_degrade(clean, p) == clean;
  p.depth = 1e6;
  const RgbImage far = synthesis::scatter_degrade(clean, p);
  double far_err = 0.0;
  for (std::size_t k = 0; k < far.data().size(); ++k) far_err = std::max(far_err, std::abs(far.data()[k] - p.veil[k % 3]));

  bool monotone = true;
  std::vector<double> prev(clean.data().size(), INFINITY);
  double prev_max = INFINITY;
  for (int g = 0; g < 20; ++g) {
    p.depth = 0.5 * g;
    const RgbImage img = synthesis::scatter_degrade(clean, p);
    double mx = 0.0;
    for (std::size_t k = 0; k < img.data().size(); ++k) {
      const double d = std::abs(img.data()[k] - p.veil[k % 3]);
      monotone = monotone && d <= prev[k];
      prev[k] = d;
      mx = std::max(mx, d);
    }
    monotone = monotone && mx < prev_max;
    prev_max = mx;
  }
  return {identity && far_err < 1e-9 && monotone,
          fmt("z=0 identity %s, |I(1e6) - B| = %.3g (< 1e-9), monotone over 20 depths %s", identity ? "exact" : "NO",
              far_err, monotone ? "yes" : "NO")};
}

// ---- 4. posterior recovery -------------------------------------------------

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

diffusion::GuidedSampler world_sampler(const diffusion::NoiseSchedule& s, const diffusion::AnalyticGaussianWorld& w) {
  diffusion::GuidedSampler g;
  g.schedule = &s;
  g.eps_theta = [&s, &w](std::span<const double> x, std::size_t t) { return w.exact_eps(x, t, s); };
  return g;
}

// z-scores of the sample mean and variance against the truth.
std::pair<double, double> z_scores(const Moments& m, double mean, double var, std::size_t n) {
  const double se_mean = std::sqrt(var / static_cast<double>(n));
  const double se_var = var * std::sqrt(2.0 / static_cast<double>(n - 1));
  return {std::abs(m.mean - mean) / se_mean, std::abs(m.var - var) / se_var};
}

Outcome posterior_recovery() {
  const auto s = diffusion::make_matched_schedule(200);
  const auto w = diffusion::AnalyticGaussianWorld::isotropic(1, 0.0, 1.0, 0.5);
  const std::size_t n = 10000;
  const diffusion::Tensor y{2.0};

  const Moments prior = moments(diffusion::sample_trajectories(world_sampler(s, w), n, 1, 2024, kernels::default_exec()));
  auto guided = world_sampler(s, w);
  guided.grad_y1 = [&](std::span<const double> x, std::size_t t) { return w.observation_gradient(x, y, t, s); };
  guided.guidance.lambda = 1.0;
  const Moments post = moments(diffusion::sample_trajectories(guided, n, 1, 2024, kernels::default_exec()));

  const double pm = w.posterior_mean(y)[0], pv = w.posterior_variance()[0];
  const bool closed_form = std::abs(pm - 4.0 / 3.0) < 1e-12 && std::abs(pv - 1.0 / 3.0) < 1e-12;
  const auto [zpm, zpv] = z_scores(prior, 0.0, 1.0, n);
  const auto [zgm, zgv] = z_scores(post, pm, pv, n);
  const bool pass = closed_form && zpm < 3 && zpv < 3 && zgm < 3 && zgv < 3;
  return {pass, fmt("guided mean %.4f (%.2f SE) var %.4f (%.2f SE); unguided mean %.4f (%.2f SE) var %.4f (%.2f SE); "
                    "limit 3 SE, n = 1e4, T = 200",
                    post.mean, zgm, post.var, zgv, prior.mean, zpm, prior.var, zpv)};
}

// ---- 5. guidance algebra -----------------------------------------------------

Outcome guidance_algebra() {
  const auto s = diffusion::make_matched_schedule(200);
  Rng rng(55);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t t = 1 + rng.index(s.T);
    diffusion::GuidanceConfig cfg;
    cfg.lambda = rng.uniform();
    const std::size_t dim = 1 + rng.index(16);
    const auto eps = normals(dim, rng), g1 = normals(dim, rng, 3.0), g2 = normals(dim, rng, 3.0);
    const auto via_noise = diffusion::score_from_noise(diffusion::guided_noise_prediction(eps, g1, g2, t, s, cfg), t, s);
    const auto direct = diffusion::combine_scores_lambda(diffusion::score_from_noise(eps, t, s), g1, g2, cfg.lambda);
    for (std::size_t k = 0; k < dim; ++k) worst = std::max(worst, std::abs(via_noise[k] - direct[k]));
  }
  return {worst < 1e-12, fmt("max elementwise difference %.3g over 1000 instances (< 1e-12)", worst)};
}

// ---- 6. λ preference direction ---------------------------------------------

Outcome lambda_direction() {
  const auto s = diffusion::make_matched_schedule(200);
  const auto w = diffusion::AnalyticGaussianWorld::isotropic(1, 0.0, 1.0, 0.5);
  const diffusion::Tensor y1{-2.0}, y2{2.0};
  auto g = world_sampler(s, w);
  g.grad_y1 = [&](std::span<const double> x, std::size_t t) { return w.observation_gradient(x, y1, t, s); };
  g.grad_y2 = [&](std::span<const double> x, std::size_t t) { return w.observation_gradient(x, y2, t, s); };
  const double target = w.posterior_mean(y2)[0];
  double prev = INFINITY;
  bool monotone = true;
  std::string gaps;
  for (double lambda : {0.9, 0.7, 0.5, 0.3, 0.1}) {
    g.guidance.lambda = lambda;
    const double m = moments(diffusion::sample_trajectories(g, 10000, 1, 606, kernels::default_exec())).mean;
    const double gap = std::abs(m - target);
    monotone = monotone && gap < prev;
    prev = gap;
    gaps += fmt(" %.3f", gap);
  }
  return {monotone, "distance to the y2 posterior mean for lambda 0.9..0.1:" + gaps};
}

// ---- 7. prompt learning ------------------------------------------------------

// Independent separability check: full-batch gradient-descent logistic
// regression with a bias.
double logistic_accuracy(const std::vector<vlm::Embedding>& phi, const std::vector<double>& q, std::size_t n_train) {
  const std::size_t d = phi[0].v.size();
  std::vector<double> w(d, 0.0);
  double b = 0.0;
  for (int it = 0; it < 3000; ++it) {
    std::vector<double> gw(d, 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < n_train; ++i) {
      double z = b;
      for (std::size_t k = 0; k < d; ++k) z += w[k] * phi[i].v[k];
      const double err = 1.0 / (1.0 + std::exp(-z)) - q[i];
      for (std::size_t k = 0; k < d; ++k) gw[k] += err * phi[i].v[k];
      gb += err;
    }
    for (std::size_t k = 0; k < d; ++k) w[k] -= 2.0 * gw[k] / static_cast<double>(n_train);
    b -= 2.0 * gb / static_cast<double>(n_train);
  }
  std::size_t hits = 0;
  for (std::size_t i = n_train; i < phi.size(); ++i) {
    double z = b;
    for (std::size_t k = 0; k < d; ++k) z += w[k] * phi[i].v[k];
    hits += (z > 0) == (q[i] > 0.5);
  }
  return static_cast<double>(hits) / static_cast<double>(phi.size() - n_train);
}

Outcome prompt_learning() {
  const auto set = test::toy_domain_set(200, 32, 77);
  vlm::VlmModel m = vlm::init_model(vlm::VlmConfig{}, 78);
  std::vector<vlm::LabeledImage> data;
  for (std::size_t i = 0; i < set.images.size(); ++i) data.push_back({&set.images[i], set.labels[i]});
  const auto phi = vlm::embed_all(data, m);
  const double oracle = logistic_accuracy(phi, set.labels, 160);

  vlm::PromptTrainConfig cfg;
  cfg.seed = 79;
  const auto res = vlm::train_prompts(data, m, cfg);
  return {res.holdout_accuracy >= 0.95 && oracle >= 0.95,
          fmt("prompt holdout accuracy %.3f on %zu held out (>= 0.95); logistic oracle %.3f (>= 0.95)",
              res.holdout_accuracy, res.holdout_size, oracle)};
}

// ---- 8. gradient checks ------------------------------------------------------

vlm::VlmConfig small_vlm() {
  vlm::VlmConfig c;
  c.width = 4;
  c.embed_dim = 8;
  c.tokens = 5;
  c.token_width = 6;
  c.text_hidden = 7;
  return c;
}

// A differentiable path: builds a scalar from the tape, binding the model
// through `b` and registering extra inputs through `in`.
struct Inputs {
  std::vector<std::pair<std::string, std::vector<double>*>> buffers;
  std::vector<ad::Var> vars;
};

using PathFn = std::function<ad::Var(ad::Tape&, vlm::Binding&, Inputs&)>;

GradCheckReport check_path(TensorSet& params, std::vector<std::pair<std::string, std::vector<double>*>> buffers,
                           const PathFn& build) {
  ad::Tape t;
  vlm::Binding b(t, params);
  Inputs in{buffers, {}};
  const ad::Var out = build(t, b, in);
  t.backward(out);
  std::vector<GradGroup> groups;
  for (const auto& [name, v] : b.bound()) groups.push_back({name, &params.at(name).data, t.grad(v)});
  for (std::size_t i = 0; i < in.vars.size(); ++i)
    groups.push_back({in.buffers[i].first, in.buffers[i].second, t.grad(in.vars[i])});
  auto value = [&] {
    ad::Tape u;
    vlm::Binding bu(u, params);
    Inputs iu{buffers, {}};
    return u.item(build(u, bu, iu));
  };
  return grad_check(value, groups, 1e-4);
}

ad::Var input(ad::Tape& t, Inputs& in, std::size_t i, ad::Shape shape) {
  const ad::Var v = t.input(*in.buffers[i].second, std::move(shape));
  in.vars.push_back(v);
  return v;
}

// Reduces a tensor to a scalar through fixed random weights.
ad::Var project(ad::Tape& t, ad::Var v, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = t.value(v).size();
  return ad::dot(t, v, t.input(normals(n, rng), {n}));
}

Outcome gradient_checks() {
  vlm::VlmModel m = vlm::init_model(small_vlm(), 21);
  for (double& v : m.params.at("prompt.natural").data) v *= 50.0;
  for (double& v : m.params.at("prompt.underwater").data) v *= 50.0;
  for (double& v : m.params.at("attn.bias").data) v = 0.3;
  const std::size_t side = 16;
  Rng rng(22);
  std::vector<double> pixels = vlm::to_chw(test::random_image(side, side, 23));

  // Feature map size after the encoder: three stride-2 convolutions.
  ad::Tape probe;
  vlm::Binding pb(probe, m.params);
  const auto fshape = probe.shape(vlm::encoder_forward(probe, pb, probe.input(pixels, {3, side, side}), side, side,
                                                       m.config));
  std::size_t fsize = 1;
  for (auto d : fshape) fsize *= d;
  std::vector<double> feats = normals(fsize, rng), phi = normals(m.config.embed_dim, rng);
  std::vector<double> eps = normals(48, rng), eps_hat = normals(48, rng), emb_a = normals(8, rng),
                      emb_b = normals(8, rng);

  std::vector<std::pair<std::string, GradCheckReport>> reports;
  reports.emplace_back("encoder", check_path(m.params, {{"image", &pixels}}, [&](ad::Tape& t, vlm::Binding& b, Inputs& in) {
                         return project(t, vlm::encoder_forward(t, b, input(t, in, 0, {3, side, side}), side, side,
                                                                m.config), 1);
                       }));
  reports.emplace_back("attention", check_path(m.params, {{"features", &feats}}, [&](ad::Tape& t, vlm::Binding& b, Inputs& in) {
                         const ad::Var f = input(t, in, 0, fshape);
                         return project(t, ad::mask_mul(t, f, vlm::mask_forward(t, b, f)), 2);
                       }));
  reports.emplace_back("pooling", check_path(m.params, {{"features", &feats}}, [&](ad::Tape& t, vlm::Binding& b, Inputs& in) {
                         return project(t, vlm::pool_forward(t, b, input(t, in, 0, fshape)), 3);
                       }));
  auto probs = [&](ad::Tape& t, vlm::Binding& b, ad::Var p) {
    return vlm::prob_forward(t, ad::l2_normalize(t, p), vlm::prompt_forward(t, b, b("prompt.natural")),
                             vlm::prompt_forward(t, b, b("prompt.underwater")));
  };
  reports.emplace_back("prompt softmax", check_path(m.params, {{"phi", &phi}}, [&](ad::Tape& t, vlm::Binding& b, Inputs& in) {
                         return project(t, probs(t, b, input(t, in, 0, {phi.size()})), 4);
                       }));
  reports.emplace_back("bce", check_path(m.params, {{"phi", &phi}}, [&](ad::Tape& t, vlm::Binding& b, Inputs& in) {
                         const ad::Var p = probs(t, b, input(t, in, 0, {phi.size()}));
                         return ad::binary_cross_entropy(t, ad::pick(t, p, 0), 1.0, vlm::kProbClamp);
                       }));
  reports.emplace_back("image path", check_path(m.params, {{"image", &pixels}}, [&](ad::Tape& t, vlm::Binding& b, Inputs& in) {
                         const ad::Var e = vlm::image_embedding_forward(t, b, input(t, in, 0, {3, side, side}), side,
                                                                        side, m.config);
                         const ad::Var p = vlm::prob_forward(t, e, vlm::prompt_forward(t, b, b("prompt.natural")),
                                                             vlm::prompt_forward(t, b, b("prompt.underwater")));
                         return ad::binary_cross_entropy(t, ad::pick(t, p, 0), 0.0, vlm::kProbClamp);
                       }));
  TensorSet none;
  reports.emplace_back("l1", check_path(none, {{"eps_hat", &eps_hat}}, [&](ad::Tape& t, vlm::Binding&, Inputs& in) {
                         const ad::Var e = input(t, in, 0, {eps_hat.size()});
                         return train::udan_clip_loss_forward(t, t.input(eps, {eps.size()}), e, t.scalar(0.0),
                                                              t.scalar(0.0), {1.0, 0.0})
                             .total;
                       }));
  reports.emplace_back("d_clip", check_path(none, {{"gen", &emb_a}, {"target", &emb_b}},
                                            [&](ad::Tape& t, vlm::Binding&, Inputs& in) {
                                              const ad::Var a = ad::l2_normalize(t, input(t, in, 0, {8}));
                                              const ad::Var c = ad::l2_normalize(t, input(t, in, 1, {8}));
                                              return train::udan_clip_loss_forward(t, t.scalar(0.0), t.scalar(0.0), a,
                                                                                   c, {0.0, 1.0})
                                                  .total;
                                            }));

  // Full fine-tuning loss: denoiser, ε conversion, guidance shift, L1 and the
  // embedding distance through the frozen classifier.
  std::vector<RgbImage> clean, degraded;
  for (std::uint64_t i = 0; i < 2; ++i) {
    clean.push_back(test::random_image(side, side, 100 + i, 0.1, 0.9));
    degraded.push_back(test::random_image(side, side, 200 + i, 0.0, 0.5));
  }
  const std::vector<train::TrainingPair> pairs{{&clean[0], &degraded[0]}, {&clean[1], &degraded[1]}};
  const auto schedule = diffusion::make_matched_schedule(50);
  TensorSet den = train::init_denoiser({6, 3}, 9);
  Rng wr(10);
  for (double& v : den.at("conv2.weight").data) v = wr.uniform(-0.2, 0.2);
  const auto dcfg = train::denoiser_config_of(den);
  for (auto mode : {train::ClipInput::x0_hat, train::ClipInput::x_t}) {
    train::FineTuneConfig cfg;
    cfg.patch = side;
    cfg.optimizer.seed = 5;
    cfg.clip_input = mode;
    const auto sample = train::draw_sample(pairs, schedule, cfg, 3);
    reports.emplace_back("full loss (" + train::to_string(mode) + ")",
                         check_path(den, {}, [&](ad::Tape& t, vlm::Binding& b, Inputs&) {
                           vlm::Binding cls(t, m.params);
                           return train::step_loss(t, b, cls, sample, dcfg, m, schedule, cfg).total;
                         }));
  }

  bool pass = true;
  std::string detail;
  for (const auto& [name, rep] : reports) {
    double worst = 0.0;
    std::size_t checked = 0;
    for (const auto& g : rep.groups) {
      worst = std::max(worst, g.max_rel_error);
      checked += g.checked;
    }
    pass = pass && rep.passed && checked > 0;
    detail += fmt("%s%s %.1e/%zu", detail.empty() ? "" : ", ", name.c_str(), worst, checked);
  }
  return {pass, "max rel error/coordinates (< 1e-4): " + detail};
}

// ---- 9. loss decomposition ----------------------------------------------------

Outcome loss_decomposition() {
  Rng rng(99);
  const train::LossWeights defaults{};
  double worst = 0.0;
  bool collapses = defaults.lambda1 == 0.6 && defaults.lambda2 == 0.4;
  for (int i = 0; i < 100; ++i) {
    const auto eps = normals(48, rng), eps_hat = normals(48, rng);
    auto unit = [&] {
      auto v = normals(16, rng);
      double n = 0.0;
      for (double x : v) n += x * x;
      for (double& x : v) x /= std::sqrt(n);
      return vlm::Embedding{v, true};
    };
    const auto a = unit(), b = unit();
    const auto l = train::udan_clip_loss(eps, eps_hat, a, b, defaults);
    worst = std::max(worst, std::abs(l.total - (0.6 * l.l1 + 0.4 * l.clip)));
    collapses = collapses && train::udan_clip_loss(eps, eps_hat, a, b, {1.0, 0.0}).total == l.l1 &&
                train::udan_clip_loss(eps, eps_hat, a, b, {0.0, 1.0}).total == l.clip &&
                std::abs(train::udan_clip_loss(eps, eps_hat, a, b, {0.6, 0.0}).total - 0.6 * l.l1) < 1e-15 &&
                std::abs(train::udan_clip_loss(eps, eps_hat, a, b, {0.0, 0.4}).total - 0.4 * l.clip) < 1e-15;
  }
  return {worst < 1e-12 && collapses,
          fmt("max |total - (0.6 l1 + 0.4 clip)| = %.3g (< 1e-12); default weights (0.6, 0.4) %s; single-term "
              "collapses %s",
              worst, defaults.lambda1 == 0.6 && defaults.lambda2 == 0.4 ? "yes" : "NO", collapses ? "exact" : "NO")};
}

// ---- 10. metric oracles ---------------------------------------------------------

struct OracleRow {
  double uiqm, uciqe, cpbd;
};

// tests/oracles/metrics_oracle.py on oracle_image(0..4)
constexpr OracleRow kOracle[5] = {
    {4.164500564802, 15.226672338189, 0.820062047570}, {4.078816927138, 17.087917406899, 0.830612244898},
    {4.018712896857, 17.034979297050, 0.829655781112}, {4.131652282559, 15.291869737953, 0.838235294118},
    {4.092747530131, 17.081458688892, 0.832304526749},
};

Outcome metric_oracles() {
  const RgbImage a = test::random_image(64, 48, 10, 0.0, 0.9);
  RgbImage b = a;
  for (double& v : b.data()) v += 0.1;
  const double offset = metrics::psnr(a, b);
  const RgbImage x = test::oracle_image(1);
  const double self = metrics::ssim(x, x);

  double e_uiqm = 0.0, e_uciqe = 0.0, e_cpbd = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const RgbImage img = test::oracle_image(s);
    e_uiqm = std::max(e_uiqm, std::abs(metrics::uiqm(img).uiqm - kOracle[s].uiqm));
    e_uciqe = std::max(e_uciqe, std::abs(metrics::uciqe(img) - kOracle[s].uciqe));
    e_cpbd = std::max(e_cpbd, std::abs(metrics::cpbd(img) - kOracle[s].cpbd));
  }

  // Sharp step chart: CPBD 1 unblurred; a step blurred with σ >= 1 is wider
  // than the just-noticeable width, so CPBD drops to 0 and stays there.
  const RgbImage chart = test::checker_chart(128, 128, 16);
  double prev_uism = INFINITY, prev_cpbd = INFINITY, first_uism = 0.0, first_cpbd = 0.0;
  bool blur_monotone = true;
  std::string trail;
  for (double sigma : {0.0, 1.0, 2.0, 4.0}) {
    const RgbImage img = test::gaussian_blur(chart, sigma);
    const double u = metrics::uiqm(img).uism, c = metrics::cpbd(img);
    blur_monotone = blur_monotone && u <= prev_uism && c <= prev_cpbd;
    if (sigma == 0.0) first_uism = u, first_cpbd = c;
    prev_uism = u;
    prev_cpbd = c;
    trail += fmt(" (%.2f, %.3f)", u, c);
  }
  blur_monotone = blur_monotone && prev_uism < first_uism && prev_cpbd < first_cpbd;
  const bool pass = std::abs(offset - 20.0) < 1e-9 && std::abs(self - 1.0) < 1e-12 && e_uiqm < 1e-3 &&
                    e_uciqe < 1e-3 && e_cpbd < 5e-3 && blur_monotone;
  return {pass, fmt("PSNR offset %.12f dB, SSIM self %.12f, oracle error UIQM %.1e UCIQE %.1e CPBD %.1e; "
                    "(UISM, CPBD) over sigma 0,1,2,4:",
                    offset, self, e_uiqm, e_uciqe, e_cpbd) +
                    trail};
}

// ---- 11 and 12. command-line pipeline -----------------------------------------

struct Run {
  int code;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

// Runs synth → train-prompts → finetune → enhance into `out`; returns the
// first failing step or an empty string.
std::string pipeline(const std::string& cfg, const test::Corpus& corpus, const fs::path& out, std::uint64_t seed) {
  const std::string o = out.string(), s = std::to_string(seed), manifest = (out / "manifest.jsonl").string();
  const std::vector<std::vector<std::string>> steps{
      {"synth", "--clean", corpus.clean_dir.string(), "--templates", corpus.template_dir.string()},
      {"train-prompts", "--manifest", manifest},
      {"finetune", "--manifest", manifest, "--prompts", o + "/prompts.ckpt"},
      {"enhance", "--manifest", manifest, "--checkpoint", o + "/finetune.ckpt"},
  };
  for (auto args : steps) {
    args.insert(args.end(), {"--config", cfg, "--seed", s, "--out", o});
    const Run r = cli(args);
    if (r.code != 0) return args[0] + " exited " + std::to_string(r.code) + ": " + r.err;
  }
  return {};
}

const char* kDeterminismConfig = R"([synthesis]
method = scatter

[schedule]
steps = 50

[optimizer]
steps = 50

[model]
patch = 16
denoiser_hidden = 8

[classifier]
width = 8
encoder_layers = 2
embed_dim = 8
tokens = 4
token_width = 8
text_hidden = 16

[prompts]
epochs = 20
trend_window = 5
)";

Outcome determinism() {
  const fs::path root = test::scratch_dir("acceptance_determinism");
  const auto corpus = test::write_corpus(root / "corpus", 6, 24, 11);
  write_file(root / "toy.ini", kDeterminismConfig);
  const std::string cfg = (root / "toy.ini").string();
  for (const char* run : {"run_a", "run_b"})
    if (auto e = pipeline(cfg, corpus, root / run, 2024); !e.empty()) return {false, std::string(run) + ": " + e};

  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root / "run_a"))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root / "run_a"));
  std::sort(files.begin(), files.end());
  std::size_t images = 0, differing = 0;
  std::string first_diff;
  bool has_manifest = false, has_ckpts = false;
  for (const auto& f : files) {
    const bool same = fs::exists(root / "run_b" / f) && slurp(root / "run_a" / f) == slurp(root / "run_b" / f);
    if (!same && differing++ == 0) first_diff = f.string();
    images += f.extension() == ".png";
    has_manifest = has_manifest || f == "manifest.jsonl";
    has_ckpts = has_ckpts || f == "finetune.ckpt";
  }
  std::size_t b_count = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "run_b")) b_count += e.is_regular_file();
  const bool pass = differing == 0 && b_count == files.size() && has_manifest && has_ckpts && images == 12;
  return {pass, fmt("%zu files compared (manifest, checkpoints, logs, %zu images), %zu differ%s", files.size(), images,
                    differing, first_diff.empty() ? "" : (" first: " + first_diff).c_str())};
}

const char* kSmokeConfig = R"([synthesis]
method = scatter

[schedule]
steps = 100

[optimizer]
learning_rate = 0.002
steps = 400

[model]
patch = 32

[classifier]
width = 16
embed_dim = 16
tokens = 8
token_width = 16
text_hidden = 32

[prompts]
epochs = 150
)";

Outcome quality_smoke() {
  const fs::path root = test::scratch_dir("acceptance_smoke");
  const auto train_corpus = test::write_corpus(root / "train_corpus", 24, 32, 301);
  const auto test_corpus = test::write_corpus(root / "test_corpus", 8, 32, 302);
  write_file(root / "smoke.ini", kSmokeConfig);
  const std::string cfg = (root / "smoke.ini").string();
  const fs::path train = root / "train", test = root / "test";
  if (auto e = pipeline(cfg, train_corpus, train, 7); !e.empty()) return {false, "training pipeline: " + e};

  // Held-out pairs from different scenes, enhanced with the trained model.
  const std::string t = test.string();
  for (auto args : std::vector<std::vector<std::string>>{
           {"synth", "--clean", test_corpus.clean_dir.string(), "--templates", test_corpus.template_dir.string()},
           {"enhance", "--manifest", t + "/manifest.jsonl", "--checkpoint", (train / "finetune.ckpt").string()}}) {
    args.insert(args.end(), {"--config", cfg, "--seed", "8", "--out", t});
    if (const Run r = cli(args); r.code != 0) return {false, args[0] + " failed: " + r.err};
  }

  const auto m = synthesis::read_manifest(test / "manifest.jsonl");
  double psnr_in = 0.0, psnr_out = 0.0, uciqe_in = 0.0, uciqe_out = 0.0;
  for (const auto& e : m.entries) {
    const RgbImage clean = load_image(m.resolve(e.clean)), degraded = load_image(m.resolve(e.degraded));
    const RgbImage enhanced = load_image(test / "enhanced" / fs::path(e.degraded).filename());
    psnr_in += metrics::psnr(degraded, clean);
    psnr_out += metrics::psnr(enhanced, clean);
    uciqe_in += metrics::uciqe(degraded);
    uciqe_out += metrics::uciqe(enhanced);
  }
  const double n = static_cast<double>(m.entries.size());
  psnr_in /= n, psnr_out /= n, uciqe_in /= n, uciqe_out /= n;
  return {psnr_out > psnr_in && uciqe_out > uciqe_in,
          fmt("held-out mean PSNR %.3f -> %.3f dB, mean UCIQE %.3f -> %.3f over %zu pairs", psnr_in, psnr_out, uciqe_in,
              uciqe_out, m.entries.size())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "color round trip", 5, color_round_trip},
      {2, "color transfer statistics", 5, stats_matching},
      {3, "scatter model limits", 1, scatter_limits},
      {4, "guided posterior recovery", 60, posterior_recovery},
      {5, "noise/score guidance consistency", 1, guidance_algebra},
      {6, "lambda preference direction", 120, lambda_direction},
      {7, "prompt learning", 120, prompt_learning},
      {8, "gradient checks", 120, gradient_checks},
      {9, "loss decomposition", 1, loss_decomposition},
      {10, "metric oracles", 30, metric_oracles},
      {11, "end-to-end determinism", 300, determinism},
      {12, "enhancement smoke test", 600, quality_smoke},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::cout << (pass ? "PASS" : "FAIL") << "  criterion " << c.id << " " << c.name << ": " << o.detail
              << fmt(" [%.2f s, budget %.0f s%s]", secs, c.budget_s, in_time ? "" : ", OVER BUDGET") << std::endl;
  }
  std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criterion(s) failed" : "acceptance: all passed")
            << std::endl;
  return failed ? 1 : 0;
}
