#include "uwe/vlmnet.hpp"

#include <cmath>
#include <exception>

#include "uwe/error.hpp"
#include "uwe/optim.hpp"
#include "uwe/rng.hpp"

namespace uwe::vlm {

namespace {

constexpr double kUnitTolerance = 1e-6;

std::string conv_name(std::size_t i, const char* what) { return "conv" + std::to_string(i) + "." + what; }

kernels::ConvShape encoder_layer(std::size_t i, std::size_t w, std::size_t h, const VlmConfig& cfg) {
  kernels::ConvShape s;
  s.in_c = i == 0 ? 3 : cfg.width;
  s.in_h = h;
  s.in_w = w;
  s.out_c = cfg.width;
  s.kernel = 3;
  s.stride = 2;
  s.pad = 1;
  return s;
}

void fill_uniform(std::vector<double>& v, Rng& rng, double bound) {
  for (double& e : v) e = rng.uniform(-bound, bound);
}

void require_unit(const Embedding& e, const char* what) {
  double n2 = 0.0;
  for (double x : e.v) n2 += x * x;
  require(e.normalized && std::abs(std::sqrt(n2) - 1.0) <= kUnitTolerance, Errc::parameter,
          std::string(what) + " embedding is not unit-normalised");
}

double cosine(const Embedding& a, const Embedding& b) {
  require(a.v.size() == b.v.size(), Errc::shape_mismatch, "embedding dimensions differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) s += a.v[i] * b.v[i];
  return s;
}

ad::Var constant_vector(ad::Tape& t, const Embedding& e) { return t.input(e.v, {e.v.size()}); }

}  // namespace

void VlmConfig::validate() const {
  require(width >= 1 && encoder_layers >= 1 && embed_dim >= 1 && tokens >= 1 && token_width >= 1 && text_hidden >= 1,
          Errc::parameter, "vision-language model sizes must be positive");
}

PromptTensor VlmModel::prompt(bool natural) const {
  const auto& t = params.at(natural ? "prompt.natural" : "prompt.underwater");
  return {t.shape[0], t.shape[1], t.data};
}

void VlmModel::set_prompt(bool natural, const PromptTensor& p) {
  auto& t = params.at(natural ? "prompt.natural" : "prompt.underwater");
  require(p.tokens == t.shape[0] && p.width == t.shape[1] && p.data.size() == t.data.size(), Errc::shape_mismatch,
          "prompt tensor shape mismatch");
  t.data = p.data;
}

VlmModel init_model(const VlmConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  VlmModel m{cfg, {}};
  Rng rng(seed, 0x766c6dULL);
  for (std::size_t i = 0; i < cfg.encoder_layers; ++i) {
    const std::size_t in_c = i == 0 ? 3 : cfg.width;
    auto& w = m.params.add(conv_name(i, "weight"), {cfg.width, in_c, 3, 3});
    fill_uniform(w.data, rng, std::sqrt(6.0 / static_cast<double>(in_c * 9)));
    m.params.add(conv_name(i, "bias"), {cfg.width});
  }
  auto glorot = [&](const std::string& name, std::size_t out, std::size_t in) {
    auto& w = m.params.add(name, {out, in});
    fill_uniform(w.data, rng, std::sqrt(6.0 / static_cast<double>(in + out)));
  };
  glorot("attn.weight", 1, cfg.width);
  m.params.add("attn.bias", {1});
  glorot("proj.weight", cfg.embed_dim, cfg.width);
  m.params.add("proj.bias", {cfg.embed_dim});
  glorot("text.token.weight", cfg.text_hidden, cfg.token_width);
  m.params.add("text.token.bias", {cfg.text_hidden});
  glorot("text.proj.weight", cfg.embed_dim, cfg.text_hidden);
  m.params.add("text.proj.bias", {cfg.embed_dim});
  for (const char* name : {"prompt.natural", "prompt.underwater"}) {
    auto& p = m.params.add(name, {cfg.tokens, cfg.token_width});
    fill_uniform(p.data, rng, kPromptInitRange);
  }
  return m;
}

TensorSet export_model(const VlmModel& m, const std::string& prefix) {
  TensorSet out;
  for (const auto& t : m.params.items()) out.add(prefix + t.name, t.shape, t.data);
  out.add(prefix + "meta.activation", {1}, m.config.activation == Activation::silu ? 0.0 : 1.0);
  return out;
}

VlmModel import_model(const TensorSet& tensors, const std::string& prefix) {
  auto get = [&](const std::string& name) -> const NamedTensor& { return tensors.at(prefix + name); };
  VlmConfig cfg;
  cfg.activation = get("meta.activation").data.at(0) == 0.0 ? Activation::silu : Activation::identity;
  cfg.encoder_layers = 0;
  while (tensors.contains(prefix + conv_name(cfg.encoder_layers, "weight"))) ++cfg.encoder_layers;
  require(cfg.encoder_layers >= 1, Errc::unsupported_format, "checkpoint has no encoder layers");
  cfg.width = get("conv0.weight").shape.at(0);
  cfg.embed_dim = get("proj.weight").shape.at(0);
  cfg.tokens = get("prompt.natural").shape.at(0);
  cfg.token_width = get("prompt.natural").shape.at(1);
  cfg.text_hidden = get("text.token.weight").shape.at(0);
  // Re-initialise to obtain the canonical layout, then copy values with a
  // shape check per tensor.
  VlmModel m = init_model(cfg, 0);
  for (auto& t : m.params.items()) {
    const auto& src = get(t.name);
    require(src.shape == t.shape, Errc::shape_mismatch, "checkpoint tensor '" + t.name + "' has an unexpected shape");
    t.data = src.data;
  }
  return m;
}

std::vector<double> to_chw(const RgbImage& img) {
  const std::size_t n = img.pixels();
  std::vector<double> out(3 * n);
  const auto d = img.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 3; ++c) out[c * n + i] = d[3 * i + c];
  return out;
}

RgbImage from_chw(std::span<const double> chw, std::size_t width, std::size_t height) {
  const std::size_t n = width * height;
  require(chw.size() == 3 * n, Errc::shape_mismatch, "CHW buffer does not match image size");
  RgbImage img(width, height);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 3; ++c) img.data()[3 * i + c] = chw[c * n + i];
  return img;
}

ad::Var Binding::operator()(const std::string& name) {
  for (const auto& [n, v] : bound_)
    if (n == name) return v;
  const auto& t = params_.at(name);
  const ad::Var v = tape_.input(t.data, t.shape);
  bound_.emplace_back(name, v);
  return v;
}

ad::Var encoder_forward(ad::Tape& t, Binding& b, ad::Var image_chw, std::size_t width, std::size_t height,
                        const VlmConfig& cfg) {
  require(width >= kMinImageSide && height >= kMinImageSide, Errc::parameter,
          "image smaller than the encoder's minimum size of 8x8");
  ad::Var x = image_chw;
  std::size_t w = width, h = height;
  for (std::size_t i = 0; i < cfg.encoder_layers; ++i) {
    const auto s = encoder_layer(i, w, h, cfg);
    x = ad::conv2d(t, x, b(conv_name(i, "weight")), b(conv_name(i, "bias")), s);
    if (cfg.activation == Activation::silu) x = ad::silu(t, x);
    w = s.out_w();
    h = s.out_h();
  }
  return x;
}

ad::Var mask_forward(ad::Tape& t, Binding& b, ad::Var features) {
  const ad::Shape fs = t.shape(features);
  require(fs.size() == 3, Errc::shape_mismatch, "feature map must be CHW");
  require(t.size(b("attn.weight")) == fs[0], Errc::shape_mismatch, "attention weights do not match feature channels");
  kernels::ConvShape s{fs[0], fs[1], fs[2], 1, 1, 1, 0};
  return ad::sigmoid(t, ad::conv2d(t, features, b("attn.weight"), b("attn.bias"), s));
}

ad::Var pool_forward(ad::Tape& t, Binding& b, ad::Var attended) {
  const ad::Var pooled = ad::spatial_mean(t, attended);
  return ad::l2_normalize(t, ad::linear(t, pooled, b("proj.weight"), b("proj.bias")));
}

ad::Var image_embedding_forward(ad::Tape& t, Binding& b, ad::Var image_chw, std::size_t width, std::size_t height,
                                const VlmConfig& cfg) {
  const ad::Var f = encoder_forward(t, b, image_chw, width, height, cfg);
  const ad::Var a = mask_forward(t, b, f);
  return pool_forward(t, b, ad::mask_mul(t, f, a));
}

ad::Var prompt_forward(ad::Tape& t, Binding& b, ad::Var prompt) {
  const ad::Var tokens = ad::rows_linear(t, prompt, b("text.token.weight"), b("text.token.bias"));
  const ad::Var mixed = ad::mean_rows(t, tokens);
  return ad::l2_normalize(t, ad::linear(t, mixed, b("text.proj.weight"), b("text.proj.bias")));
}

ad::Var prob_forward(ad::Tape& t, ad::Var phi, ad::Var theta_n, ad::Var theta_u) {
  const ad::Var logits[2] = {ad::dot(t, theta_n, phi), ad::dot(t, theta_u, phi)};
  return ad::softmax(t, ad::stack(t, logits));
}

FeatureMap encode_image(const RgbImage& img, const VlmModel& m) {
  require(!img.empty(), Errc::empty_input, "encoder input image is empty");
  ad::Tape t;
  Binding b(t, m.params);
  const ad::Var x = t.input(to_chw(img), {3, img.height(), img.width()});
  const ad::Var f = encoder_forward(t, b, x, img.width(), img.height(), m.config);
  const auto& s = t.shape(f);
  return {s[0], s[1], s[2], t.value(f)};
}

AttentionMask attention_mask(const FeatureMap& f, const VlmModel& m) {
  ad::Tape t;
  Binding b(t, m.params);
  require(f.data.size() == f.channels * f.height * f.width && !f.data.empty(), Errc::shape_mismatch,
          "feature map data does not match its shape");
  const ad::Var a = mask_forward(t, b, t.input(f.data, {f.channels, f.height, f.width}));
  return {f.height, f.width, t.value(a)};
}

FeatureMap apply_attention(const FeatureMap& f, const AttentionMask& a) {
  require(f.height == a.height && f.width == a.width && a.data.size() == a.height * a.width, Errc::shape_mismatch,
          "attention mask does not match the feature map");
  FeatureMap out = f;
  const std::size_t hw = f.height * f.width;
  for (std::size_t c = 0; c < f.channels; ++c)
    for (std::size_t i = 0; i < hw; ++i) out.data[c * hw + i] *= a.data[i];
  return out;
}

Embedding attention_pool(const FeatureMap& f, const VlmModel& m) {
  ad::Tape t;
  Binding b(t, m.params);
  require(f.data.size() == f.channels * f.height * f.width && !f.data.empty(), Errc::shape_mismatch,
          "feature map data does not match its shape");
  const ad::Var e = pool_forward(t, b, t.input(f.data, {f.channels, f.height, f.width}));
  return {t.value(e), true};
}

Embedding image_embedding(const RgbImage& img, const VlmModel& m) {
  require(!img.empty(), Errc::empty_input, "encoder input image is empty");
  ad::Tape t;
  Binding b(t, m.params);
  const ad::Var x = t.input(to_chw(img), {3, img.height(), img.width()});
  return {t.value(image_embedding_forward(t, b, x, img.width(), img.height(), m.config)), true};
}

Embedding encode_prompt(const PromptTensor& p, const VlmModel& m) {
  require(p.tokens >= 1 && p.data.size() == p.tokens * p.width, Errc::shape_mismatch, "prompt data does not match its shape");
  require(p.width == m.config.token_width, Errc::shape_mismatch, "prompt width differs from the text encoder input");
  ad::Tape t;
  Binding b(t, m.params);
  return {t.value(prompt_forward(t, b, t.input(p.data, {p.tokens, p.width}))), true};
}

ProbPair predict_prob(const Embedding& phi, const Embedding& theta_n, const Embedding& theta_u) {
  require_unit(phi, "image");
  require_unit(theta_n, "natural prompt");
  require_unit(theta_u, "underwater prompt");
  const double cn = cosine(theta_n, phi), cu = cosine(theta_u, phi);
  const double m = std::max(cn, cu);
  const double en = std::exp(cn - m), eu = std::exp(cu - m);
  return {en / (en + eu), eu / (en + eu)};
}

double prompt_loss(double p_natural, double q) {
  const double p = std::clamp(p_natural, kProbClamp, 1.0 - kProbClamp);
  return -(q * std::log(p) + (1.0 - q) * std::log(1.0 - p));
}

double prompt_loss_grad(double p_natural, double q) {
  if (p_natural < kProbClamp || p_natural > 1.0 - kProbClamp) return 0.0;
  return -q / p_natural + (1.0 - q) / (1.0 - p_natural);
}

double classifier_alignment(const Embedding& phi_g, const Embedding& theta_n, const Embedding& theta_u) {
  return predict_prob(phi_g, theta_n, theta_u).underwater;
}

std::string to_string(GuidanceObjective g) {
  return g == GuidanceObjective::log_natural ? "log_natural" : "neg_alignment";
}

GuidanceObjective parse_guidance_objective(const std::string& s) {
  if (s == "log_natural") return GuidanceObjective::log_natural;
  if (s == "neg_alignment") return GuidanceObjective::neg_alignment;
  throw Error(Errc::config, "unknown guidance objective '" + s + "' (expected log_natural or neg_alignment)");
}

namespace {

struct AlignmentPass {
  double alignment;
  std::vector<double> grad_chw;
};

// mode 0: alignment, 1: log(1 - alignment), 2: -alignment.
AlignmentPass alignment_pass(const RgbImage& img, const VlmModel& m, int mode) {
  require(!img.empty(), Errc::empty_input, "classifier input image is empty");
  ad::Tape t;
  Binding b(t, m.params);
  const ad::Var x = t.input(to_chw(img), {3, img.height(), img.width()});
  const ad::Var phi = image_embedding_forward(t, b, x, img.width(), img.height(), m.config);
  const ad::Var tn = prompt_forward(t, b, b("prompt.natural"));
  const ad::Var tu = prompt_forward(t, b, b("prompt.underwater"));
  const ad::Var probs = prob_forward(t, phi, tn, tu);
  const ad::Var pu = ad::pick(t, probs, 1);
  ad::Var out = pu;
  if (mode == 1) out = ad::affine(t, ad::neg_log(t, ad::pick(t, probs, 0), kProbClamp), -1.0);
  if (mode == 2) out = ad::affine(t, pu, -1.0);
  t.backward(out);
  return {t.item(pu), t.grad(x)};
}

std::vector<double> interleave(const std::vector<double>& chw, std::size_t n) {
  std::vector<double> out(3 * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 3; ++c) out[3 * i + c] = chw[c * n + i];
  return out;
}

}  // namespace

AlignmentGradient alignment_input_gradient(const RgbImage& img, const VlmModel& m) {
  auto p = alignment_pass(img, m, 0);
  return {p.alignment, interleave(p.grad_chw, img.pixels())};
}

AlignmentGradient guidance_input_gradient(const RgbImage& img, const VlmModel& m, GuidanceObjective obj) {
  auto p = alignment_pass(img, m, obj == GuidanceObjective::log_natural ? 1 : 2);
  return {p.alignment, interleave(p.grad_chw, img.pixels())};
}

std::vector<Embedding> embed_all(std::span<const LabeledImage> data, const VlmModel& m) {
  std::vector<Embedding> out(data.size());
  std::vector<std::exception_ptr> errors(data.size());
  const auto n = static_cast<std::ptrdiff_t>(data.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = image_embedding(*data[i].image, m);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

double accuracy(std::span<const Embedding> phi, std::span<const double> labels, const VlmModel& m) {
  require(phi.size() == labels.size(), Errc::shape_mismatch, "embedding and label counts differ");
  if (phi.empty()) return 0.0;
  const Embedding tn = encode_prompt(m.prompt(true), m), tu = encode_prompt(m.prompt(false), m);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < phi.size(); ++i) {
    const bool natural = predict_prob(phi[i], tn, tu).natural > 0.5;
    hits += natural == (labels[i] > 0.5);
  }
  return static_cast<double>(hits) / static_cast<double>(phi.size());
}

PromptTrainResult train_prompts_on_embeddings(std::span<const Embedding> phi, std::span<const double> labels,
                                              VlmModel& m, const PromptTrainConfig& cfg) {
  require(phi.size() == labels.size(), Errc::shape_mismatch, "embedding and label counts differ");
  require(!phi.empty(), Errc::empty_input, "prompt training needs data");
  require(cfg.epochs >= 1 && cfg.learning_rate >= 0.0 && cfg.holdout_fraction >= 0.0 && cfg.holdout_fraction < 1.0,
          Errc::parameter, "invalid prompt training configuration");
  for (double q : labels) require(q == 0.0 || q == 1.0, Errc::parameter, "labels must be 0 or 1");

  // Seeded Fisher-Yates split.
  std::vector<std::size_t> order(phi.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(cfg.seed, 0x73706c6974ULL);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  const auto n_hold = static_cast<std::size_t>(std::floor(cfg.holdout_fraction * static_cast<double>(phi.size())));
  std::vector<Embedding> train_phi, hold_phi;
  std::vector<double> train_q, hold_q;
  for (std::size_t k = 0; k < order.size(); ++k) {
    auto& dst_phi = k < n_hold ? hold_phi : train_phi;
    auto& dst_q = k < n_hold ? hold_q : train_q;
    dst_phi.push_back(phi[order[k]]);
    dst_q.push_back(labels[order[k]]);
  }
  bool has0 = false, has1 = false;
  for (double q : train_q) (q > 0.5 ? has1 : has0) = true;
  require(has0 && has1, Errc::single_class, "prompt training needs both classes in the training split");
  for (const auto& e : train_phi) require_unit(e, "image");

  PromptTrainResult res;
  res.train_size = train_phi.size();
  res.holdout_size = hold_phi.size();
  auto& pn = m.params.at("prompt.natural").data;
  auto& pu = m.params.at("prompt.underwater").data;
  Adam adam({pn.size(), pu.size()});
  double initial = 0.0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    ad::Tape t(kernels::Exec::serial);
    Binding b(t, m.params);
    const ad::Var vn = b("prompt.natural"), vu = b("prompt.underwater");
    const ad::Var tn = prompt_forward(t, b, vn), tu = prompt_forward(t, b, vu);
    std::vector<ad::Var> losses;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < train_phi.size(); ++i) {
      const ad::Var probs = prob_forward(t, constant_vector(t, train_phi[i]), tn, tu);
      const ad::Var p_nat = ad::pick(t, probs, 0);
      hits += (t.item(p_nat) > 0.5) == (train_q[i] > 0.5);
      losses.push_back(ad::binary_cross_entropy(t, p_nat, train_q[i], kProbClamp));
    }
    const ad::Var loss = ad::mean(t, ad::stack(t, losses));
    const double value = t.item(loss);
    require(std::isfinite(value), Errc::non_finite, "prompt loss became non-finite at epoch " + std::to_string(epoch));
    if (epoch == 1) initial = value;
    require(value <= 10.0 * initial, Errc::divergence,
            "prompt training diverged at epoch " + std::to_string(epoch) + ": loss " + std::to_string(value) +
                " exceeds 10x the initial " + std::to_string(initial));
    res.log.push_back({epoch, value, static_cast<double>(hits) / static_cast<double>(train_phi.size())});
    t.backward(loss);
    adam.step({&pn, &pu}, {&t.grad(vn), &t.grad(vu)}, cfg.learning_rate);
  }

  const std::size_t w = std::max<std::size_t>(1, std::min(cfg.trend_window, res.log.size() / 2));
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < w; ++i) {
    first += res.log[i].loss;
    last += res.log[res.log.size() - 1 - i].loss;
  }
  res.trend_decreasing = last < first;
  res.holdout_accuracy = accuracy(hold_phi, hold_q, m);
  return res;
}

PromptTrainResult train_prompts(std::span<const LabeledImage> data, VlmModel& m, const PromptTrainConfig& cfg) {
  std::vector<double> labels;
  for (const auto& d : data) labels.push_back(d.label);
  const auto phi = embed_all(data, m);
  return train_prompts_on_embeddings(phi, labels, m, cfg);
}

}  // namespace uwe::vlm
