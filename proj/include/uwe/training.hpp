#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "uwe/autodiff.hpp"
#include "uwe/diffusion.hpp"
#include "uwe/image.hpp"
#include "uwe/rng.hpp"
#include "uwe/tensor.hpp"
#include "uwe/vlmnet.hpp"

namespace uwe::train {

struct LossWeights {
  double lambda1 = 0.6;  // ε reconstruction
  double lambda2 = 0.4;  // embedding distance
  void validate() const;
};

struct LossTerms {
  double total = 0.0;
  double l1 = 0.0;
  double clip = 0.0;
};

/// 1 - cos(a, b); both embeddings must be unit length within 1e-6.
double clip_distance(const vlm::Embedding& a, const vlm::Embedding& b);

/// total = λ1·mean|eps - eps_hat| + λ2·clip_distance(gen, target).
LossTerms udan_clip_loss(std::span<const double> eps, std::span<const double> eps_hat, const vlm::Embedding& emb_gen,
                         const vlm::Embedding& emb_target, const LossWeights& w);

struct LossVars {
  ad::Var total, l1, clip;
};

/// Tape form of udan_clip_loss; eps is treated as data.
LossVars udan_clip_loss_forward(ad::Tape& t, ad::Var eps, ad::Var eps_hat, ad::Var emb_gen, ad::Var emb_target,
                                const LossWeights& w);

struct OptimizerConfig {
  double learning_rate = 1e-3;
  bool linear_decay = true;
  std::size_t steps = 1000;
  std::uint64_t seed = 0;

  void validate() const;
  /// Rate used by update k (0-based): lr₀·(1 - k/K) when decaying.
  double rate_at(std::size_t k) const;
};

struct AugmentationConfig {
  bool rotation = true;  // quarter turns only
  bool hflip = true;
  double probability = 0.5;
  void validate() const;
};

struct AugmentDraw {
  int quarter_turns = 0;
  bool flip = false;
};

/// One coin per enabled transform; a rotation, when taken, is uniform over
/// 90°, 180° and 270°.
AugmentDraw draw_augmentation(const AugmentationConfig& cfg, Rng& rng);
/// Rotates, then flips.
RgbImage apply_augmentation(const RgbImage& img, const AugmentDraw& d);
RgbImage augment(const RgbImage& img, const AugmentationConfig& cfg, Rng& rng);

// Conditional denoiser predicting the clean image x̂0 (in [-1,1]) from the
// noisy state, the degraded condition and the noise level. It is a residual
// over the condition: x̂0 = y + f(x_t, y, ŷ, √ᾱ, √(1-ᾱ)), where ŷ is y with
// each channel standardised over the image, and the last convolution is
// zero-initialised so training starts from x̂0 = y.
struct DenoiserConfig {
  std::size_t hidden = 16;
  std::size_t layers = 3;  // 3×3 convolutions, SiLU between them
  void validate() const;
};

inline constexpr std::size_t kDenoiserInputs = 11;

TensorSet init_denoiser(const DenoiserConfig& cfg, std::uint64_t seed);
/// Sizes recovered from tensor shapes.
DenoiserConfig denoiser_config_of(const TensorSet& params);

/// CHW network input for state x_t and condition y (both CHW, 3×h×w).
std::vector<double> denoiser_input(std::span<const double> x_t, std::span<const double> y, std::size_t width,
                                   std::size_t height, double alpha_bar);

/// x̂0 on the tape; input comes from denoiser_input().
ad::Var denoiser_forward(ad::Tape& t, vlm::Binding& b, ad::Var input, std::span<const double> y, std::size_t width,
                         std::size_t height, const DenoiserConfig& cfg);

/// ε_θ = (x_t - √ᾱ·x̂0)/√(1-ᾱ).
ad::Var eps_from_x0(ad::Tape& t, ad::Var x0_hat, std::span<const double> x_t, double alpha_bar);

diffusion::Tensor predict_x0(const TensorSet& params, std::span<const double> x_t, std::span<const double> y,
                             std::size_t width, std::size_t height, std::size_t t, const diffusion::NoiseSchedule& s);
diffusion::Tensor predict_eps(const TensorSet& params, std::span<const double> x_t, std::span<const double> y,
                              std::size_t width, std::size_t height, std::size_t t, const diffusion::NoiseSchedule& s);

/// The two guidance conditions: y1 is the degraded source under a Gaussian
/// observation model, y2 is the classifier's preference for in-air images.
struct GuidanceSetup {
  diffusion::GuidanceConfig weights{diffusion::GuidanceMode::gamma_pair, 0.5, 0.05, 0.05};
  double source_variance = 0.05;
  vlm::GuidanceObjective objective = vlm::GuidanceObjective::log_natural;
  void validate() const;
};

/// ∇_{x_t} log p(y1 | x_t) in the [-1,1] domain.
diffusion::Tensor source_gradient(std::span<const double> x_t, std::span<const double> y, std::size_t t,
                                  const diffusion::NoiseSchedule& s, const GuidanceSetup& g);
/// Classifier guidance gradient w.r.t. x_t (CHW, [-1,1] domain); the
/// classifier sees (x_t + 1)/2.
diffusion::Tensor classifier_gradient(std::span<const double> x_t, std::size_t width, std::size_t height,
                                      const vlm::VlmModel& m, const GuidanceSetup& g);

enum class ClipInput { x0_hat, x_t };

std::string to_string(ClipInput c);
ClipInput parse_clip_input(const std::string& s);

struct FineTuneConfig {
  GuidanceSetup guidance;
  LossWeights loss;
  OptimizerConfig optimizer;
  AugmentationConfig augmentation;
  std::size_t patch = 32;  // square crop side; whole image when smaller
  ClipInput clip_input = ClipInput::x0_hat;
  void validate() const;
};

struct TrainingPair {
  const RgbImage* clean = nullptr;
  const RgbImage* degraded = nullptr;
};

/// One drawn training example, in CHW [-1,1].
struct StepSample {
  std::size_t width = 0, height = 0;
  std::size_t t = 1;
  std::vector<double> x0, y, eps, x_t;
};

/// Pair choice, augmentation, crop, t and ε for sample `index`; depends only
/// on (seed, index).
StepSample draw_sample(std::span<const TrainingPair> data, const diffusion::NoiseSchedule& s,
                       const FineTuneConfig& cfg, std::size_t index);

/// Builds the full loss for one sample; guidance gradients enter ε' as
/// constants. Denoiser leaves are created through `den`, classifier leaves
/// through `cls`.
LossVars step_loss(ad::Tape& t, vlm::Binding& den, vlm::Binding& cls, const StepSample& sample,
                   const DenoiserConfig& dcfg, const vlm::VlmModel& classifier, const diffusion::NoiseSchedule& s,
                   const FineTuneConfig& cfg);

struct StepRecord {
  std::size_t step = 0;
  std::size_t t = 0;
  double l1 = 0.0;
  double clip = 0.0;
  double total = 0.0;
  double lr = 0.0;
  std::uint64_t seed = 0;
};

/// One JSON object per line.
std::string to_jsonl(const StepRecord& r);

struct FineTuneResult {
  std::vector<StepRecord> log;
};

/// Sequential Adam over the denoiser parameters; the classifier is frozen.
/// Throws non_finite naming the step when the loss or a gradient is not
/// finite.
FineTuneResult fine_tune(TensorSet& denoiser, const vlm::VlmModel& classifier, std::span<const TrainingPair> data,
                         const diffusion::NoiseSchedule& s, const FineTuneConfig& cfg);

struct EnhanceConfig {
  GuidanceSetup guidance;
  diffusion::StepVariance variance = diffusion::StepVariance::beta;
};

/// Guided ancestral sampling from x_T ~ N(0, I) conditioned on the degraded
/// image; returns the clamped sRGB result.
RgbImage enhance(const RgbImage& degraded, const TensorSet& denoiser, const vlm::VlmModel& classifier,
                 const diffusion::NoiseSchedule& s, const EnhanceConfig& cfg, std::uint64_t seed);

/// Checkpoint tensors: denoiser under "den." plus the classifier under "vlm.".
TensorSet bundle(const TensorSet& denoiser, const vlm::VlmModel& classifier);
TensorSet unbundle_denoiser(const TensorSet& tensors);
vlm::VlmModel unbundle_classifier(const TensorSet& tensors);

}  // namespace uwe::train
