#include "uwe/diffusion.hpp"

#include <cmath>
#include <exception>

#include "uwe/error.hpp"

namespace uwe::diffusion {

namespace {

void same_size(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), Errc::shape_mismatch, "tensor sizes differ");
}

double final_alpha_bar(std::size_t T, double start, double end) {
  double ab = 1.0;
  for (std::size_t i = 0; i < T; ++i) {
    const double f = T == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(T - 1);
    ab *= 1.0 - (start + f * (end - start));
  }
  return ab;
}

}  // namespace

double NoiseSchedule::posterior_variance(std::size_t t) const {
  check_step(t);
  return beta_at(t) * (1.0 - alpha_bar_prev(t)) / (1.0 - alpha_bar_at(t));
}

void NoiseSchedule::check_step(std::size_t t) const {
  require(t >= 1 && t <= T, Errc::out_of_range, "diffusion step outside 1..T");
}

NoiseSchedule make_linear_schedule(std::size_t T, double beta_start, double beta_end) {
  require(T >= 1, Errc::parameter, "schedule needs at least one step");
  require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0, Errc::parameter,
          "schedule needs 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.T = T;
  s.beta.resize(T);
  s.alpha.resize(T);
  s.alpha_bar.resize(T);
  double ab = 1.0;
  for (std::size_t i = 0; i < T; ++i) {
    const double f = T == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(T - 1);
    s.beta[i] = i == 0 ? beta_start : i + 1 == T ? beta_end : beta_start + f * (beta_end - beta_start);
    s.alpha[i] = 1.0 - s.beta[i];
    ab *= s.alpha[i];
    s.alpha_bar[i] = ab;
  }
  return s;
}

double matched_endpoint_scale(std::size_t T, std::size_t ref_T, double start, double end) {
  require(T >= 1 && ref_T >= 1, Errc::parameter, "schedule needs at least one step");
  require(start > 0.0 && start <= end && end < 1.0, Errc::parameter, "schedule needs 0 < start <= end < 1");
  const double target = final_alpha_bar(ref_T, start, end);
  // ᾱ_T falls monotonically in k; bisect on k·end < 1.
  double lo = 0.0, hi = (1.0 - 1e-12) / end;
  require(final_alpha_bar(T, hi * start, hi * end) <= target, Errc::parameter,
          "no endpoint scale reaches the reference noise level");
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (final_alpha_bar(T, mid * start, mid * end) > target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

NoiseSchedule make_matched_schedule(std::size_t T, std::size_t ref_T, double start, double end) {
  const double k = matched_endpoint_scale(T, ref_T, start, end);
  return make_linear_schedule(T, k * start, k * end);
}

Tensor forward_sample(std::span<const double> x0, std::size_t t, std::span<const double> eps,
                      const NoiseSchedule& s) {
  same_size(x0, eps);
  s.check_step(t);
  const double a = std::sqrt(s.alpha_bar_at(t)), b = std::sqrt(1.0 - s.alpha_bar_at(t));
  Tensor out(x0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

Tensor score_from_noise(std::span<const double> eps_hat, std::size_t t, const NoiseSchedule& s) {
  s.check_step(t);
  const double k = 1.0 / std::sqrt(1.0 - s.alpha_bar_at(t));
  Tensor out(eps_hat.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = -eps_hat[i] * k;
  return out;
}

Tensor combine_scores_lambda(std::span<const double> base, std::span<const double> grad_y1,
                             std::span<const double> grad_y2, double lambda) {
  same_size(base, grad_y1);
  same_size(base, grad_y2);
  require(lambda >= 0.0 && lambda <= 1.0, Errc::parameter, "lambda must be in [0,1]");
  Tensor out(base.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = base[i] + lambda * grad_y1[i] + (1.0 - lambda) * grad_y2[i];
  return out;
}

std::string to_string(GuidanceMode m) { return m == GuidanceMode::lambda_blend ? "lambda_blend" : "gamma_pair"; }

GuidanceMode parse_guidance_mode(const std::string& s) {
  if (s == "lambda_blend") return GuidanceMode::lambda_blend;
  if (s == "gamma_pair") return GuidanceMode::gamma_pair;
  throw Error(Errc::config, "unknown guidance mode '" + s + "' (expected lambda_blend or gamma_pair)");
}

std::pair<double, double> GuidanceConfig::weights() const {
  return mode == GuidanceMode::lambda_blend ? std::pair{lambda, 1.0 - lambda} : std::pair{gamma1, gamma2};
}

void GuidanceConfig::validate() const {
  if (mode == GuidanceMode::lambda_blend)
    require(lambda >= 0.0 && lambda <= 1.0, Errc::parameter, "lambda must be in [0,1]");
  else
    require(gamma1 >= 0.0 && gamma2 >= 0.0, Errc::parameter, "gamma weights must be non-negative");
}

Tensor guided_noise_prediction(std::span<const double> eps_theta, std::span<const double> grad_y1,
                               std::span<const double> grad_y2, std::size_t t, const NoiseSchedule& s,
                               const GuidanceConfig& cfg) {
  same_size(eps_theta, grad_y1);
  same_size(eps_theta, grad_y2);
  s.check_step(t);
  cfg.validate();
  const auto [w1, w2] = cfg.weights();
  const double k = std::sqrt(1.0 - s.alpha_bar_at(t));
  Tensor out(eps_theta.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = eps_theta[i] - w1 * k * grad_y1[i] - w2 * k * grad_y2[i];
  return out;
}

std::string to_string(StepVariance v) { return v == StepVariance::beta ? "beta" : "posterior"; }

StepVariance parse_step_variance(const std::string& s) {
  if (s == "beta") return StepVariance::beta;
  if (s == "posterior") return StepVariance::posterior;
  throw Error(Errc::config, "unknown step variance '" + s + "' (expected beta or posterior)");
}

Tensor reverse_mean(std::span<const double> x_t, std::span<const double> eps_prime, std::size_t t,
                    const NoiseSchedule& s) {
  same_size(x_t, eps_prime);
  s.check_step(t);
  const double c = s.beta_at(t) / std::sqrt(1.0 - s.alpha_bar_at(t));
  const double inv = 1.0 / std::sqrt(s.alpha_at(t));
  Tensor out(x_t.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x_t[i] - c * eps_prime[i]) * inv;
  return out;
}

Tensor reverse_step(std::span<const double> x_t, std::span<const double> eps_prime, std::size_t t,
                    const NoiseSchedule& s, Rng& rng, StepVariance var) {
  Tensor out = reverse_mean(x_t, eps_prime, t, s);
  if (t > 1) {
    const double sigma = std::sqrt(var == StepVariance::beta ? s.beta_at(t) : s.posterior_variance(t));
    for (double& v : out) v += sigma * rng.normal();
  }
  return out;
}

double diffusion_loss(std::span<const double> eps, std::span<const double> eps_hat) {
  same_size(eps, eps_hat);
  require(!eps.empty(), Errc::empty_input, "loss of empty tensors");
  double s = 0.0;
  for (std::size_t i = 0; i < eps.size(); ++i) s += (eps[i] - eps_hat[i]) * (eps[i] - eps_hat[i]);
  return s / static_cast<double>(eps.size());
}

Tensor GuidedSampler::run(Tensor x, Rng& rng) const {
  require(schedule != nullptr && static_cast<bool>(eps_theta), Errc::parameter,
          "sampler needs a schedule and a noise predictor");
  const Tensor zero(x.size(), 0.0);
  for (std::size_t t = schedule->T; t >= 1; --t) {
    const Tensor eps = eps_theta(x, t);
    const Tensor g1 = grad_y1 ? grad_y1(x, t) : zero;
    const Tensor g2 = grad_y2 ? grad_y2(x, t) : zero;
    const Tensor guided = guided_noise_prediction(eps, g1, g2, t, *schedule, guidance);
    x = reverse_step(x, guided, t, *schedule, rng, variance);
  }
  return x;
}

Tensor GuidedSampler::sample(std::size_t dim, Rng& rng) const {
  Tensor x(dim);
  for (double& v : x) v = rng.normal();
  return run(std::move(x), rng);
}

std::vector<double> sample_trajectories(const GuidedSampler& sampler, std::size_t n, std::size_t dim,
                                        std::uint64_t seed, kernels::Exec exec) {
  std::vector<double> out(n * dim);
  auto one = [&](std::size_t i) {
    Rng rng(seed, i);
    const Tensor x = sampler.sample(dim, rng);
    std::copy(x.begin(), x.end(), out.begin() + static_cast<std::ptrdiff_t>(i * dim));
  };
  if (exec == kernels::Exec::serial) {
    for (std::size_t i = 0; i < n; ++i) one(i);
    return out;
  }
  std::exception_ptr failure;
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      one(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical
      failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

AnalyticGaussianWorld AnalyticGaussianWorld::isotropic(std::size_t dim, double mu0, double var0, double var_y) {
  AnalyticGaussianWorld w{std::vector<double>(dim, mu0), std::vector<double>(dim, var0), var_y};
  w.validate();
  return w;
}

void AnalyticGaussianWorld::validate() const {
  require(!mu0.empty() && mu0.size() == var0.size(), Errc::shape_mismatch, "prior mean and variance sizes differ");
  for (double v : var0) require(v > 0.0, Errc::parameter, "prior variance must be positive");
  require(var_y > 0.0, Errc::parameter, "observation variance must be positive");
}

Tensor AnalyticGaussianWorld::exact_eps(std::span<const double> x_t, std::size_t t, const NoiseSchedule& s) const {
  require(x_t.size() == dim(), Errc::shape_mismatch, "state size differs from world dimension");
  s.check_step(t);
  const double ab = s.alpha_bar_at(t), ra = std::sqrt(ab), rb = std::sqrt(1.0 - ab);
  Tensor out(x_t.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = rb * (x_t[i] - ra * mu0[i]) / (ab * var0[i] + 1.0 - ab);
  return out;
}

Tensor AnalyticGaussianWorld::marginal_score(std::span<const double> x_t, std::size_t t,
                                             const NoiseSchedule& s) const {
  require(x_t.size() == dim(), Errc::shape_mismatch, "state size differs from world dimension");
  s.check_step(t);
  const double ab = s.alpha_bar_at(t), ra = std::sqrt(ab);
  Tensor out(x_t.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = -(x_t[i] - ra * mu0[i]) / (ab * var0[i] + 1.0 - ab);
  return out;
}

Tensor AnalyticGaussianWorld::observation_gradient(std::span<const double> x_t, std::span<const double> y,
                                                   std::size_t t, const NoiseSchedule& s) const {
  require(x_t.size() == dim() && y.size() == dim(), Errc::shape_mismatch, "state size differs from world dimension");
  s.check_step(t);
  const double ab = s.alpha_bar_at(t), ra = std::sqrt(ab);
  Tensor out(x_t.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    // x0 | x_t is Gaussian with variance v and mean m(x_t).
    const double v = 1.0 / (1.0 / var0[i] + ab / (1.0 - ab));
    const double m = v * (mu0[i] / var0[i] + ra * x_t[i] / (1.0 - ab));
    out[i] = (y[i] - m) / (v + var_y) * (v * ra / (1.0 - ab));
  }
  return out;
}

Tensor AnalyticGaussianWorld::posterior_mean(std::span<const double> y) const {
  require(y.size() == dim(), Errc::shape_mismatch, "observation size differs from world dimension");
  Tensor out(dim());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (var_y * mu0[i] + var0[i] * y[i]) / (var0[i] + var_y);
  return out;
}

Tensor AnalyticGaussianWorld::posterior_variance() const {
  Tensor out(dim());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = var0[i] * var_y / (var0[i] + var_y);
  return out;
}

Tensor flat_prior_observation_gradient(std::span<const double> x_t, std::span<const double> y, std::size_t t,
                                       const NoiseSchedule& s, double var_y) {
  same_size(x_t, y);
  s.check_step(t);
  require(var_y > 0.0, Errc::parameter, "observation variance must be positive");
  const double ab = s.alpha_bar_at(t), ra = std::sqrt(ab);
  const double den = 1.0 - ab + ab * var_y;
  Tensor out(x_t.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (ra * y[i] - x_t[i]) / den;
  return out;
}

}  // namespace uwe::diffusion
