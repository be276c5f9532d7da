#include "uwe/training.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "uwe/error.hpp"
#include "uwe/optim.hpp"

namespace uwe::train {

namespace {

constexpr double kUnitTolerance = 1e-6;
constexpr double kNormFloor = 1e-3;
constexpr std::uint64_t kDenoiserInitStream = 0x64656eULL;
constexpr std::uint64_t kSampleStream = 0x73616d706c65ULL;
constexpr const char* kDenoiserPrefix = "den.";
constexpr const char* kClassifierPrefix = "vlm.";

std::string conv_name(std::size_t i, const char* what) { return "conv" + std::to_string(i) + "." + what; }

void require_unit(const vlm::Embedding& e, const char* what) {
  double n2 = 0.0;
  for (double x : e.v) n2 += x * x;
  require(e.normalized && std::abs(std::sqrt(n2) - 1.0) <= kUnitTolerance, Errc::parameter,
          std::string(what) + " embedding is not unit-normalised");
}

kernels::ConvShape denoiser_layer(std::size_t i, std::size_t w, std::size_t h, const DenoiserConfig& cfg) {
  kernels::ConvShape s;
  s.in_c = i == 0 ? kDenoiserInputs : cfg.hidden;
  s.in_h = h;
  s.in_w = w;
  s.out_c = i + 1 == cfg.layers ? 3 : cfg.hidden;
  s.kernel = 3;
  s.stride = 1;
  s.pad = 1;
  return s;
}

std::vector<double> to_unit_range(const RgbImage& img) {
  auto v = vlm::to_chw(img);
  for (double& x : v) x = 2.0 * x - 1.0;
  return v;
}

RgbImage crop(const RgbImage& img, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) {
  RgbImage out(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x0 + x, y0 + y, c);
  return out;
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

void LossWeights::validate() const {
  require(lambda1 >= 0.0 && lambda2 >= 0.0 && std::isfinite(lambda1) && std::isfinite(lambda2), Errc::parameter,
          "loss weights must be finite and non-negative");
  require(lambda1 > 0.0 || lambda2 > 0.0, Errc::parameter, "at least one loss weight must be positive");
}

double clip_distance(const vlm::Embedding& a, const vlm::Embedding& b) {
  require_unit(a, "generated");
  require_unit(b, "target");
  require(a.v.size() == b.v.size(), Errc::shape_mismatch, "embedding dimensions differ");
  double c = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) c += a.v[i] * b.v[i];
  return 1.0 - c;
}

LossTerms udan_clip_loss(std::span<const double> eps, std::span<const double> eps_hat, const vlm::Embedding& emb_gen,
                         const vlm::Embedding& emb_target, const LossWeights& w) {
  w.validate();
  require(eps.size() == eps_hat.size(), Errc::shape_mismatch, "noise and prediction sizes differ");
  require(!eps.empty(), Errc::empty_input, "noise tensor is empty");
  LossTerms out;
  for (std::size_t i = 0; i < eps.size(); ++i) out.l1 += std::abs(eps[i] - eps_hat[i]);
  out.l1 /= static_cast<double>(eps.size());
  out.clip = clip_distance(emb_gen, emb_target);
  out.total = w.lambda1 * out.l1 + w.lambda2 * out.clip;
  return out;
}

LossVars udan_clip_loss_forward(ad::Tape& t, ad::Var eps, ad::Var eps_hat, ad::Var emb_gen, ad::Var emb_target,
                                const LossWeights& w) {
  w.validate();
  const ad::Var l1 = ad::mean_abs_diff(t, eps, eps_hat);
  const ad::Var clip = ad::affine(t, ad::dot(t, emb_gen, emb_target), -1.0, 1.0);
  return {ad::lincomb(t, w.lambda1, l1, w.lambda2, clip), l1, clip};
}

void OptimizerConfig::validate() const {
  // Zero is allowed: it turns a run into a reproducible no-op.
  require(learning_rate >= 0.0 && std::isfinite(learning_rate), Errc::parameter,
          "learning rate must be finite and non-negative");
  require(steps >= 1, Errc::parameter, "optimizer needs at least one step");
}

double OptimizerConfig::rate_at(std::size_t k) const {
  return linear_decay ? uwe::linear_decay(learning_rate, k, steps) : learning_rate;
}

void AugmentationConfig::validate() const {
  require(probability >= 0.0 && probability <= 1.0, Errc::parameter, "augmentation probability must lie in [0,1]");
}

AugmentDraw draw_augmentation(const AugmentationConfig& cfg, Rng& rng) {
  cfg.validate();
  AugmentDraw d;
  if (cfg.rotation && rng.coin(cfg.probability)) d.quarter_turns = 1 + static_cast<int>(rng.index(3));
  if (cfg.hflip && rng.coin(cfg.probability)) d.flip = true;
  return d;
}

RgbImage apply_augmentation(const RgbImage& img, const AugmentDraw& d) {
  RgbImage out = d.quarter_turns ? rotate90(img, d.quarter_turns) : img;
  return d.flip ? flip_horizontal(out) : out;
}

RgbImage augment(const RgbImage& img, const AugmentationConfig& cfg, Rng& rng) {
  return apply_augmentation(img, draw_augmentation(cfg, rng));
}

void DenoiserConfig::validate() const {
  require(hidden >= 1 && layers >= 2, Errc::parameter, "denoiser needs a positive width and at least two layers");
}

TensorSet init_denoiser(const DenoiserConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  TensorSet p;
  Rng rng(seed, kDenoiserInitStream);
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    const auto s = denoiser_layer(i, 1, 1, cfg);
    auto& w = p.add(conv_name(i, "weight"), {s.out_c, s.in_c, 3, 3});
    if (i + 1 < cfg.layers) {
      const double bound = std::sqrt(6.0 / static_cast<double>(s.in_c * 9));
      for (double& e : w.data) e = rng.uniform(-bound, bound);
    }
    p.add(conv_name(i, "bias"), {s.out_c});
  }
  return p;
}

DenoiserConfig denoiser_config_of(const TensorSet& params) {
  DenoiserConfig cfg;
  cfg.layers = 0;
  while (params.contains(conv_name(cfg.layers, "weight"))) ++cfg.layers;
  require(cfg.layers >= 2, Errc::unsupported_format, "denoiser tensors are missing");
  cfg.hidden = params.at("conv0.weight").shape.at(0);
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    const auto s = denoiser_layer(i, 1, 1, cfg);
    const std::vector<std::size_t> want{s.out_c, s.in_c, 3, 3};
    require(params.at(conv_name(i, "weight")).shape == want && params.at(conv_name(i, "bias")).shape.size() == 1 &&
                params.at(conv_name(i, "bias")).shape[0] == s.out_c,
            Errc::shape_mismatch, "denoiser layer " + std::to_string(i) + " has an unexpected shape");
  }
  return cfg;
}

std::vector<double> denoiser_input(std::span<const double> x_t, std::span<const double> y, std::size_t width,
                                   std::size_t height, double alpha_bar) {
  const std::size_t n = width * height;
  require(n > 0 && x_t.size() == 3 * n && y.size() == 3 * n, Errc::shape_mismatch,
          "denoiser state and condition must be 3×h×w");
  std::vector<double> in(kDenoiserInputs * n);
  std::copy(x_t.begin(), x_t.end(), in.begin());
  std::copy(y.begin(), y.end(), in.begin() + 3 * n);
  for (std::size_t c = 0; c < 3; ++c) {
    const auto ch = y.subspan(c * n, n);
    double m = 0.0, v = 0.0;
    for (double e : ch) m += e;
    m /= static_cast<double>(n);
    for (double e : ch) v += (e - m) * (e - m);
    const double inv = 1.0 / (std::sqrt(v / static_cast<double>(n)) + kNormFloor);
    for (std::size_t i = 0; i < n; ++i) in[(6 + c) * n + i] = (ch[i] - m) * inv;
  }
  std::fill_n(in.begin() + 9 * n, n, std::sqrt(alpha_bar));
  std::fill_n(in.begin() + 10 * n, n, std::sqrt(1.0 - alpha_bar));
  return in;
}

ad::Var denoiser_forward(ad::Tape& t, vlm::Binding& b, ad::Var input, std::span<const double> y, std::size_t width,
                         std::size_t height, const DenoiserConfig& cfg) {
  require(y.size() == 3 * width * height, Errc::shape_mismatch, "condition does not match the denoiser input");
  ad::Var x = input;
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    x = ad::conv2d(t, x, b(conv_name(i, "weight")), b(conv_name(i, "bias")), denoiser_layer(i, width, height, cfg));
    if (i + 1 < cfg.layers) x = ad::silu(t, x);
  }
  return ad::add_const(t, x, y);
}

ad::Var eps_from_x0(ad::Tape& t, ad::Var x0_hat, std::span<const double> x_t, double alpha_bar) {
  const double inv = 1.0 / std::sqrt(1.0 - alpha_bar);
  std::vector<double> offset(x_t.begin(), x_t.end());
  for (double& v : offset) v *= inv;
  return ad::add_const(t, ad::affine(t, x0_hat, -std::sqrt(alpha_bar) * inv), offset);
}

diffusion::Tensor predict_x0(const TensorSet& params, std::span<const double> x_t, std::span<const double> y,
                             std::size_t width, std::size_t height, std::size_t t, const diffusion::NoiseSchedule& s) {
  s.check_step(t);
  const auto cfg = denoiser_config_of(params);
  ad::Tape tape;
  vlm::Binding b(tape, params);
  const ad::Var in = tape.input(denoiser_input(x_t, y, width, height, s.alpha_bar_at(t)),
                                {kDenoiserInputs, height, width});
  return tape.value(denoiser_forward(tape, b, in, y, width, height, cfg));
}

diffusion::Tensor predict_eps(const TensorSet& params, std::span<const double> x_t, std::span<const double> y,
                              std::size_t width, std::size_t height, std::size_t t, const diffusion::NoiseSchedule& s) {
  auto x0 = predict_x0(params, x_t, y, width, height, t, s);
  const double ab = s.alpha_bar_at(t), inv = 1.0 / std::sqrt(1.0 - ab), sa = std::sqrt(ab);
  for (std::size_t i = 0; i < x0.size(); ++i) x0[i] = (x_t[i] - sa * x0[i]) * inv;
  return x0;
}

void GuidanceSetup::validate() const {
  weights.validate();
  require(source_variance > 0.0 && std::isfinite(source_variance), Errc::parameter,
          "source observation variance must be positive");
}

diffusion::Tensor source_gradient(std::span<const double> x_t, std::span<const double> y, std::size_t t,
                                  const diffusion::NoiseSchedule& s, const GuidanceSetup& g) {
  return diffusion::flat_prior_observation_gradient(x_t, y, t, s, g.source_variance);
}

diffusion::Tensor classifier_gradient(std::span<const double> x_t, std::size_t width, std::size_t height,
                                      const vlm::VlmModel& m, const GuidanceSetup& g) {
  std::vector<double> img(x_t.begin(), x_t.end());
  for (double& v : img) v = 0.5 * (v + 1.0);
  const auto grad = vlm::guidance_input_gradient(vlm::from_chw(img, width, height), m, g.objective);
  auto chw = vlm::to_chw(RgbImage(width, height, grad.gradient));
  for (double& v : chw) v *= 0.5;
  return chw;
}

std::string to_string(ClipInput c) { return c == ClipInput::x0_hat ? "x0_hat" : "x_t"; }

ClipInput parse_clip_input(const std::string& s) {
  if (s == "x0_hat") return ClipInput::x0_hat;
  if (s == "x_t") return ClipInput::x_t;
  throw Error(Errc::config, "unknown clip input '" + s + "' (expected x0_hat or x_t)");
}

void FineTuneConfig::validate() const {
  guidance.validate();
  loss.validate();
  optimizer.validate();
  augmentation.validate();
  require(patch >= vlm::kMinImageSide, Errc::parameter, "training patch is smaller than the classifier accepts");
}

StepSample draw_sample(std::span<const TrainingPair> data, const diffusion::NoiseSchedule& s,
                       const FineTuneConfig& cfg, std::size_t index) {
  require(!data.empty(), Errc::empty_input, "training set is empty");
  Rng rng(derive_seed(cfg.optimizer.seed, kSampleStream), index);
  const TrainingPair& pair = data[rng.index(data.size())];
  require(pair.clean && pair.degraded && pair.clean->same_shape(*pair.degraded) && !pair.clean->empty(),
          Errc::shape_mismatch, "training pair images must be non-empty and the same size");
  // Identical transforms on both halves keep the pair aligned.
  const AugmentDraw d = draw_augmentation(cfg.augmentation, rng);
  RgbImage clean = apply_augmentation(*pair.clean, d);
  RgbImage degraded = apply_augmentation(*pair.degraded, d);
  const std::size_t w = std::min(cfg.patch, clean.width()), h = std::min(cfg.patch, clean.height());
  const std::size_t ox = rng.index(clean.width() - w + 1), oy = rng.index(clean.height() - h + 1);
  clean = crop(clean, ox, oy, w, h);
  degraded = crop(degraded, ox, oy, w, h);

  StepSample out;
  out.width = w;
  out.height = h;
  out.t = 1 + rng.index(s.T);
  out.x0 = to_unit_range(clean);
  out.y = to_unit_range(degraded);
  out.eps.resize(out.x0.size());
  for (double& e : out.eps) e = rng.normal();
  out.x_t = diffusion::forward_sample(out.x0, out.t, out.eps, s);
  return out;
}

LossVars step_loss(ad::Tape& t, vlm::Binding& den, vlm::Binding& cls, const StepSample& sample,
                   const DenoiserConfig& dcfg, const vlm::VlmModel& classifier, const diffusion::NoiseSchedule& s,
                   const FineTuneConfig& cfg) {
  const std::size_t w = sample.width, h = sample.height;
  const double ab = s.alpha_bar_at(sample.t);
  const ad::Var in = t.input(denoiser_input(sample.x_t, sample.y, w, h, ab), {kDenoiserInputs, h, w});
  const ad::Var x0_hat = denoiser_forward(t, den, in, sample.y, w, h, dcfg);
  const ad::Var eps_theta = eps_from_x0(t, x0_hat, sample.x_t, ab);

  const auto g1 = source_gradient(sample.x_t, sample.y, sample.t, s, cfg.guidance);
  const auto g2 = classifier_gradient(sample.x_t, w, h, classifier, cfg.guidance);
  // ε' = ε_θ - √(1-ᾱ)(w1·g1 + w2·g2); zero ε_θ isolates the guidance shift.
  const std::vector<double> zero(g1.size(), 0.0);
  const auto shift = diffusion::guided_noise_prediction(zero, g1, g2, sample.t, s, cfg.guidance.weights);
  const ad::Var eps_prime = ad::add_const(t, eps_theta, shift);

  const ad::Var gen_source = cfg.clip_input == ClipInput::x0_hat ? x0_hat : t.input(sample.x_t, {3, h, w});
  const ad::Var gen_image = ad::affine(t, gen_source, 0.5, 0.5);
  const ad::Var emb_gen = vlm::image_embedding_forward(t, cls, gen_image, w, h, classifier.config);
  std::vector<double> clean01(sample.x0);
  for (double& v : clean01) v = 0.5 * (v + 1.0);
  const auto target = vlm::image_embedding(vlm::from_chw(clean01, w, h), classifier);
  const ad::Var emb_target = t.input(target.v, {target.v.size()});

  const ad::Var eps = t.input(sample.eps, {3, h, w});
  return udan_clip_loss_forward(t, eps, eps_prime, emb_gen, emb_target, cfg.loss);
}

std::string to_jsonl(const StepRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["t"] = r.t;
  j["l1_term"] = r.l1;
  j["clip_term"] = r.clip;
  j["total"] = r.total;
  j["lr"] = r.lr;
  j["seed"] = r.seed;
  return j.dump();
}

FineTuneResult fine_tune(TensorSet& denoiser, const vlm::VlmModel& classifier, std::span<const TrainingPair> data,
                         const diffusion::NoiseSchedule& s, const FineTuneConfig& cfg) {
  cfg.validate();
  require(!data.empty(), Errc::empty_input, "training set is empty");
  const DenoiserConfig dcfg = denoiser_config_of(denoiser);

  std::vector<std::size_t> sizes;
  for (const auto& p : denoiser.items()) sizes.push_back(p.data.size());
  Adam adam(sizes);

  FineTuneResult result;
  result.log.reserve(cfg.optimizer.steps);
  for (std::size_t k = 0; k < cfg.optimizer.steps; ++k) {
    const StepSample sample = draw_sample(data, s, cfg, k);
    ad::Tape t;
    vlm::Binding den(t, denoiser), cls(t, classifier.params);
    const LossVars loss = step_loss(t, den, cls, sample, dcfg, classifier, s, cfg);
    const double total = t.item(loss.total);
    require(std::isfinite(total), Errc::non_finite, "training loss is not finite at step " + std::to_string(k));
    t.backward(loss.total);

    std::vector<std::vector<double>*> params;
    std::vector<const std::vector<double>*> grads;
    for (auto& p : denoiser.items()) {
      const auto& g = t.grad(den(p.name));
      require(all_finite(g), Errc::non_finite,
              "gradient of '" + p.name + "' is not finite at step " + std::to_string(k));
      params.push_back(&p.data);
      grads.push_back(&g);
    }
    const double lr = cfg.optimizer.rate_at(k);
    adam.step(params, grads, lr);
    result.log.push_back({k, sample.t, t.item(loss.l1), t.item(loss.clip), total, lr, cfg.optimizer.seed});
  }
  return result;
}

RgbImage enhance(const RgbImage& degraded, const TensorSet& denoiser, const vlm::VlmModel& classifier,
                 const diffusion::NoiseSchedule& s, const EnhanceConfig& cfg, std::uint64_t seed) {
  require(!degraded.empty(), Errc::empty_input, "image to enhance is empty");
  cfg.guidance.validate();
  const std::size_t w = degraded.width(), h = degraded.height();
  require(w >= vlm::kMinImageSide && h >= vlm::kMinImageSide, Errc::parameter,
          "image is smaller than the classifier accepts");
  denoiser_config_of(denoiser);
  const auto y = to_unit_range(degraded);

  diffusion::GuidedSampler sampler;
  sampler.schedule = &s;
  sampler.guidance = cfg.guidance.weights;
  sampler.variance = cfg.variance;
  sampler.eps_theta = [&](std::span<const double> x, std::size_t t) {
    return predict_eps(denoiser, x, y, w, h, t, s);
  };
  sampler.grad_y1 = [&](std::span<const double> x, std::size_t t) {
    return source_gradient(x, y, t, s, cfg.guidance);
  };
  sampler.grad_y2 = [&](std::span<const double> x, std::size_t) {
    return classifier_gradient(x, w, h, classifier, cfg.guidance);
  };
  Rng rng(seed);
  auto x0 = sampler.sample(y.size(), rng);
  for (double& v : x0) v = 0.5 * (v + 1.0);
  return clamp01(vlm::from_chw(x0, w, h));
}

TensorSet bundle(const TensorSet& denoiser, const vlm::VlmModel& classifier) {
  TensorSet out;
  for (const auto& p : denoiser.items()) out.add(kDenoiserPrefix + p.name, p.shape, p.data);
  const TensorSet cls = vlm::export_model(classifier, kClassifierPrefix);
  for (const auto& p : cls.items()) out.add(p.name, p.shape, p.data);
  return out;
}

TensorSet unbundle_denoiser(const TensorSet& tensors) {
  TensorSet out;
  const std::string prefix = kDenoiserPrefix;
  for (const auto& p : tensors.items())
    if (p.name.rfind(prefix, 0) == 0) out.add(p.name.substr(prefix.size()), p.shape, p.data);
  denoiser_config_of(out);
  return out;
}

vlm::VlmModel unbundle_classifier(const TensorSet& tensors) { return vlm::import_model(tensors, kClassifierPrefix); }

}  // namespace uwe::train
