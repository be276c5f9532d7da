#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "uwe/autodiff.hpp"
#include "uwe/image.hpp"
#include "uwe/tensor.hpp"

namespace uwe::vlm {

enum class Activation { silu, identity };

struct VlmConfig {
  std::size_t width = 64;          // encoder channels C
  std::size_t encoder_layers = 3;  // 3×3 stride-2 convolutions
  Activation activation = Activation::silu;
  std::size_t embed_dim = 32;    // D
  std::size_t tokens = 77;       // N
  std::size_t token_width = 32;  // M
  std::size_t text_hidden = 64;  // H

  void validate() const;
};

inline constexpr std::size_t kMinImageSide = 8;
inline constexpr double kProbClamp = 1e-7;
inline constexpr double kPromptInitRange = 0.01;

struct FeatureMap {
  std::size_t channels = 0, height = 0, width = 0;
  std::vector<double> data;  // CHW
};

struct AttentionMask {
  std::size_t height = 0, width = 0;
  std::vector<double> data;
};

struct Embedding {
  std::vector<double> v;
  bool normalized = false;
};

struct PromptTensor {
  std::size_t tokens = 0, width = 0;
  std::vector<double> data;  // tokens × width
};

/// Encoder, attention, projection, text-encoder and prompt tensors. Tensor
/// names: conv{i}.weight/bias, attn.weight/bias, proj.weight/bias,
/// text.token.weight/bias, text.proj.weight/bias, prompt.natural,
/// prompt.underwater.
struct VlmModel {
  VlmConfig config;
  TensorSet params;

  PromptTensor prompt(bool natural) const;
  void set_prompt(bool natural, const PromptTensor& p);
};

/// Random initialisation from seed: He-uniform convolutions, Glorot-uniform
/// projections, zero biases, prompts uniform in ±kPromptInitRange.
VlmModel init_model(const VlmConfig& cfg, std::uint64_t seed);

/// Parameters plus a "meta.activation" entry, each name prefixed; enough to
/// rebuild the model with import_model().
TensorSet export_model(const VlmModel& m, const std::string& prefix = "");
/// Inverse of export_model(); sizes are inferred from tensor shapes.
VlmModel import_model(const TensorSet& tensors, const std::string& prefix = "");

std::vector<double> to_chw(const RgbImage& img);
RgbImage from_chw(std::span<const double> chw, std::size_t width, std::size_t height);

FeatureMap encode_image(const RgbImage& img, const VlmModel& m);
AttentionMask attention_mask(const FeatureMap& f, const VlmModel& m);
FeatureMap apply_attention(const FeatureMap& f, const AttentionMask& a);
Embedding attention_pool(const FeatureMap& f, const VlmModel& m);
/// encode_image → attention → pooling.
Embedding image_embedding(const RgbImage& img, const VlmModel& m);
Embedding encode_prompt(const PromptTensor& p, const VlmModel& m);

struct ProbPair {
  double natural = 0.5;
  double underwater = 0.5;
};

/// Two-way softmax over cos(θ_t, φ).
ProbPair predict_prob(const Embedding& phi, const Embedding& theta_n, const Embedding& theta_u);
/// Binary cross-entropy of P_n against q (1 = in-air natural), P_n clamped
/// to [kProbClamp, 1 - kProbClamp].
double prompt_loss(double p_natural, double q);
/// d(prompt_loss)/d(P_n); zero where the clamp is active.
double prompt_loss_grad(double p_natural, double q);
/// Softmax mass on the underwater prompt.
double classifier_alignment(const Embedding& phi_g, const Embedding& theta_n, const Embedding& theta_u);

/// Which scalar the guidance gradient ascends.
enum class GuidanceObjective {
  log_natural,    // log(1 - alignment) = log P_n
  neg_alignment,  // -alignment
};

std::string to_string(GuidanceObjective g);
GuidanceObjective parse_guidance_objective(const std::string& s);

struct AlignmentGradient {
  double alignment = 0.0;          // P_u
  std::vector<double> gradient;    // interleaved like RgbImage::data()
};

/// ∇_x of the alignment itself (the raw probability) through the image path.
AlignmentGradient alignment_input_gradient(const RgbImage& img, const VlmModel& m);
/// ∇_x of the chosen guidance objective.
AlignmentGradient guidance_input_gradient(const RgbImage& img, const VlmModel& m, GuidanceObjective obj);

// Tape-level building blocks, shared with fine-tuning and gradient checks.
class Binding {
 public:
  Binding(ad::Tape& t, const TensorSet& params) : tape_(t), params_(params) {}
  /// Tape leaf for the named tensor; created on first use.
  ad::Var operator()(const std::string& name);
  const std::vector<std::pair<std::string, ad::Var>>& bound() const noexcept { return bound_; }

 private:
  ad::Tape& tape_;
  const TensorSet& params_;
  std::vector<std::pair<std::string, ad::Var>> bound_;
};

/// Returns the encoder feature map for a CHW image variable.
ad::Var encoder_forward(ad::Tape& t, Binding& b, ad::Var image_chw, std::size_t width, std::size_t height,
                        const VlmConfig& cfg);
ad::Var mask_forward(ad::Tape& t, Binding& b, ad::Var features);
ad::Var pool_forward(ad::Tape& t, Binding& b, ad::Var attended);
/// Normalised image embedding.
ad::Var image_embedding_forward(ad::Tape& t, Binding& b, ad::Var image_chw, std::size_t width, std::size_t height,
                                const VlmConfig& cfg);
/// Normalised prompt embedding.
ad::Var prompt_forward(ad::Tape& t, Binding& b, ad::Var prompt);
/// [P_n, P_u] from normalised embeddings.
ad::Var prob_forward(ad::Tape& t, ad::Var phi, ad::Var theta_n, ad::Var theta_u);

struct LabeledImage {
  const RgbImage* image = nullptr;
  double label = 0.0;  // 1 = in-air natural, 0 = underwater
};

struct PromptTrainConfig {
  std::size_t epochs = 200;
  double learning_rate = 1e-2;
  double holdout_fraction = 0.2;
  std::size_t trend_window = 20;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
};

struct PromptTrainResult {
  std::vector<EpochRecord> log;
  double holdout_accuracy = 0.0;
  std::size_t train_size = 0, holdout_size = 0;
  /// Mean loss of the last window is below that of the first.
  bool trend_decreasing = false;
};

/// Embeds every image once with the frozen encoder.
std::vector<Embedding> embed_all(std::span<const LabeledImage> data, const VlmModel& m);

/// Full-batch Adam on the mean BCE over the training split, updating only
/// prompt.natural and prompt.underwater. Throws single_class when a label is
/// missing and divergence when the loss exceeds 10× its initial value.
PromptTrainResult train_prompts(std::span<const LabeledImage> data, VlmModel& m, const PromptTrainConfig& cfg);
/// Same, on precomputed embeddings.
PromptTrainResult train_prompts_on_embeddings(std::span<const Embedding> phi, std::span<const double> labels,
                                              VlmModel& m, const PromptTrainConfig& cfg);

/// Fraction of embeddings whose argmax class matches the label.
double accuracy(std::span<const Embedding> phi, std::span<const double> labels, const VlmModel& m);

}  // namespace uwe::vlm
