#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "uwe/kernels.hpp"
#include "uwe/rng.hpp"

namespace uwe::diffusion {

using Tensor = std::vector<double>;

/// β, α and ᾱ for steps t = 1..T (stored at index t-1).
struct NoiseSchedule {
  std::size_t T = 0;
  std::vector<double> beta, alpha, alpha_bar;

  double beta_at(std::size_t t) const { return beta[t - 1]; }
  double alpha_at(std::size_t t) const { return alpha[t - 1]; }
  double alpha_bar_at(std::size_t t) const { return alpha_bar[t - 1]; }
  /// ᾱ_{t-1}, with ᾱ_0 = 1.
  double alpha_bar_prev(std::size_t t) const { return t == 1 ? 1.0 : alpha_bar[t - 2]; }
  /// β̃_t = β_t (1 - ᾱ_{t-1}) / (1 - ᾱ_t).
  double posterior_variance(std::size_t t) const;
  void check_step(std::size_t t) const;
};

inline constexpr std::size_t kReferenceSteps = 2000;
inline constexpr double kReferenceBetaStart = 1e-6;
inline constexpr double kReferenceBetaEnd = 1e-2;

/// β linearly interpolated from beta_start (t=1) to beta_end (t=T) inclusive.
NoiseSchedule make_linear_schedule(std::size_t T, double beta_start, double beta_end);

/// Factor k such that a T-step linear schedule from k·start to k·end ends at
/// the same ᾱ_T as the ref_T-step schedule from start to end.
double matched_endpoint_scale(std::size_t T, std::size_t ref_T = kReferenceSteps,
                              double start = kReferenceBetaStart, double end = kReferenceBetaEnd);

/// Shortened schedule with the reference endpoints scaled by
/// matched_endpoint_scale(T).
NoiseSchedule make_matched_schedule(std::size_t T, std::size_t ref_T = kReferenceSteps,
                                    double start = kReferenceBetaStart, double end = kReferenceBetaEnd);

/// x_t = √ᾱ_t·x0 + √(1-ᾱ_t)·eps.
Tensor forward_sample(std::span<const double> x0, std::size_t t, std::span<const double> eps,
                      const NoiseSchedule& s);

/// ∇ log p(x_t) = -eps_hat / √(1-ᾱ_t).
Tensor score_from_noise(std::span<const double> eps_hat, std::size_t t, const NoiseSchedule& s);

/// base + λ·grad_y1 + (1-λ)·grad_y2.
Tensor combine_scores_lambda(std::span<const double> base, std::span<const double> grad_y1,
                             std::span<const double> grad_y2, double lambda);

enum class GuidanceMode { lambda_blend, gamma_pair };

std::string to_string(GuidanceMode m);
GuidanceMode parse_guidance_mode(const std::string& s);

struct GuidanceConfig {
  GuidanceMode mode = GuidanceMode::lambda_blend;
  double lambda = 0.5;
  double gamma1 = 1.0;
  double gamma2 = 1.0;

  /// Weights applied to (grad_y1, grad_y2) under the active mode.
  std::pair<double, double> weights() const;
  void validate() const;
};

/// ε' = ε_θ - w1·√(1-ᾱ_t)·grad_y1 - w2·√(1-ᾱ_t)·grad_y2, with (w1, w2) =
/// (λ, 1-λ) or (γ1, γ2) by mode.
Tensor guided_noise_prediction(std::span<const double> eps_theta, std::span<const double> grad_y1,
                               std::span<const double> grad_y2, std::size_t t, const NoiseSchedule& s,
                               const GuidanceConfig& cfg);

/// Per-step noise variance of the ancestral sampler.
enum class StepVariance {
  beta,       // σ_t² = β_t
  posterior,  // σ_t² = β̃_t
};

std::string to_string(StepVariance v);
StepVariance parse_step_variance(const std::string& s);

/// (x_t - β_t/√(1-ᾱ_t)·eps_prime)/√α_t.
Tensor reverse_mean(std::span<const double> x_t, std::span<const double> eps_prime, std::size_t t,
                    const NoiseSchedule& s);

/// Ancestral DDPM step; adds σ_t·z for t > 1, nothing at t = 1.
Tensor reverse_step(std::span<const double> x_t, std::span<const double> eps_prime, std::size_t t,
                    const NoiseSchedule& s, Rng& rng, StepVariance var = StepVariance::beta);

/// Mean of (eps - eps_hat)² over elements.
double diffusion_loss(std::span<const double> eps, std::span<const double> eps_hat);

/// ε_θ(x_t, t); the condition is bound by the caller.
using NoisePredictor = std::function<Tensor(std::span<const double> x_t, std::size_t t)>;
/// ∇_{x_t} log p(y | x_t) for one condition.
using GuidanceGradient = std::function<Tensor(std::span<const double> x_t, std::size_t t)>;

struct GuidedSampler {
  const NoiseSchedule* schedule = nullptr;
  NoisePredictor eps_theta;
  GuidanceGradient grad_y1;  // empty → zero gradient
  GuidanceGradient grad_y2;
  GuidanceConfig guidance;
  StepVariance variance = StepVariance::beta;

  /// Runs t = T..1 starting from x_T.
  Tensor run(Tensor x_T, Rng& rng) const;
  /// Draws x_T ~ N(0, I) from rng, then runs.
  Tensor sample(std::size_t dim, Rng& rng) const;
};

/// n independent trajectories; trajectory i uses Rng(seed, i) so serial and
/// parallel runs agree exactly. Row-major n × dim.
std::vector<double> sample_trajectories(const GuidedSampler& sampler, std::size_t n, std::size_t dim,
                                        std::uint64_t seed, kernels::Exec exec);

/// Gaussian data prior N(μ0, diag σ0²) with observations y = x0 + N(0, σy²).
/// Every quantity the guided sampler needs has a closed form here.
struct AnalyticGaussianWorld {
  std::vector<double> mu0;
  std::vector<double> var0;
  double var_y = 1.0;

  static AnalyticGaussianWorld isotropic(std::size_t dim, double mu0, double var0, double var_y);
  std::size_t dim() const { return mu0.size(); }
  void validate() const;

  /// Exact ε-predictor of the marginal p(x_t).
  Tensor exact_eps(std::span<const double> x_t, std::size_t t, const NoiseSchedule& s) const;
  /// -(x_t - √ᾱ μ0)/(ᾱ σ0² + 1 - ᾱ).
  Tensor marginal_score(std::span<const double> x_t, std::size_t t, const NoiseSchedule& s) const;
  /// ∇_{x_t} log p(y | x_t) under the prior.
  Tensor observation_gradient(std::span<const double> x_t, std::span<const double> y, std::size_t t,
                              const NoiseSchedule& s) const;
  /// Product-of-Gaussians posterior of x0 given y.
  Tensor posterior_mean(std::span<const double> y) const;
  Tensor posterior_variance() const;
};

/// ∇_{x_t} log p(y | x_t) under an improper flat prior on x0, where
/// y | x_t ~ N(x_t/√ᾱ, (1-ᾱ)/ᾱ + var_y): (√ᾱ·y - x_t)/(1 - ᾱ + ᾱ·var_y).
Tensor flat_prior_observation_gradient(std::span<const double> x_t, std::span<const double> y, std::size_t t,
                                       const NoiseSchedule& s, double var_y);

}  // namespace uwe::diffusion
