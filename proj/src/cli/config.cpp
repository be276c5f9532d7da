#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "uwe/cli.hpp"
#include "uwe/error.hpp"

namespace uwe::cli {

namespace {

[[noreturn]] void bad_value(const std::string& section, const std::string& key, const std::string& value,
                            const std::string& expected) {
  throw Error(Errc::config, "[" + section + "] " + key + " = '" + value + "': expected " + expected);
}

std::string format_real(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_real(const std::string& s, const std::string& sec, const std::string& key) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc{} || r.ptr != s.data() + s.size() || !std::isfinite(v))
    bad_value(sec, key, s, "a finite number");
  return v;
}

std::uint64_t parse_unsigned(const std::string& s, const std::string& sec, const std::string& key) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc{} || r.ptr != s.data() + s.size())
    bad_value(sec, key, s, "a non-negative integer");
  return v;
}

bool parse_flag(const std::string& s, const std::string& sec, const std::string& key) {
  if (s == "true") return true;
  if (s == "false") return false;
  bad_value(sec, key, s, "true or false");
}

Triple parse_triple(const std::string& s, const std::string& sec, const std::string& key) {
  Triple t{};
  std::stringstream in(s);
  std::string part;
  std::size_t i = 0;
  while (std::getline(in, part, ',')) {
    const auto a = part.find_first_not_of(" \t"), b = part.find_last_not_of(" \t");
    if (i == 3 || a == std::string::npos) bad_value(sec, key, s, "three comma-separated numbers");
    t[i++] = parse_real(part.substr(a, b - a + 1), sec, key);
  }
  if (i != 3) bad_value(sec, key, s, "three comma-separated numbers");
  return t;
}

std::string format_triple(const Triple& t) {
  return format_real(t[0]) + ", " + format_real(t[1]) + ", " + format_real(t[2]);
}

std::string to_string(vlm::Activation a) { return a == vlm::Activation::silu ? "silu" : "identity"; }

vlm::Activation parse_activation(const std::string& s) {
  if (s == "silu") return vlm::Activation::silu;
  if (s == "identity") return vlm::Activation::identity;
  throw Error(Errc::config, "unknown activation '" + s + "' (expected silu or identity)");
}

// One schema row per key. Accessors are generic lambdas so the same code
// reads a const config and writes a mutable one.
struct Field {
  std::string section, key, doc;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <class Acc>
Field real(const char* sec, const char* key, const char* doc, Acc acc) {
  return {sec, key, doc, [acc](const RunConfig& c) { return format_real(acc(c)); },
          [acc, sec, key](RunConfig& c, const std::string& v) { acc(c) = parse_real(v, sec, key); }};
}

template <class Acc>
Field count(const char* sec, const char* key, const char* doc, Acc acc) {
  return {sec, key, doc, [acc](const RunConfig& c) { return std::to_string(acc(c)); },
          [acc, sec, key](RunConfig& c, const std::string& v) {
            acc(c) = static_cast<std::remove_reference_t<decltype(acc(c))>>(parse_unsigned(v, sec, key));
          }};
}

template <class Acc>
Field flag(const char* sec, const char* key, const char* doc, Acc acc) {
  return {sec, key, doc, [acc](const RunConfig& c) { return std::string(acc(c) ? "true" : "false"); },
          [acc, sec, key](RunConfig& c, const std::string& v) { acc(c) = parse_flag(v, sec, key); }};
}

template <class Acc>
Field text(const char* sec, const char* key, const char* doc, Acc acc) {
  return {sec, key, doc, [acc](const RunConfig& c) { return std::string(acc(c)); },
          [acc](RunConfig& c, const std::string& v) { acc(c) = v; }};
}

template <class Acc>
Field triple(const char* sec, const char* key, const char* doc, Acc acc) {
  return {sec, key, doc, [acc](const RunConfig& c) { return format_triple(acc(c)); },
          [acc, sec, key](RunConfig& c, const std::string& v) { acc(c) = parse_triple(v, sec, key); }};
}

template <class Acc, class Parse>
Field choice(const char* sec, const char* key, const char* doc, Acc acc, Parse parse) {
  return {sec, key, doc, [acc](const RunConfig& c) { return to_string(acc(c)); },
          [acc, parse, sec, key](RunConfig& c, const std::string& v) {
            try {
              acc(c) = parse(v);
            } catch (const Error& e) {
              throw Error(Errc::config, std::string("[") + sec + "] " + key + ": " + e.what());
            }
          }};
}

template <class Acc>
Field optional_real(const char* sec, const char* key, const char* doc, Acc acc) {
  return {sec, key, doc,
          [acc](const RunConfig& c) { return acc(c) ? format_real(*acc(c)) : std::string("auto"); },
          [acc, sec, key](RunConfig& c, const std::string& v) {
            if (v == "auto")
              acc(c).reset();
            else
              acc(c) = parse_real(v, sec, key);
          }};
}

const std::vector<Field>& schema() {
  static const std::vector<Field> fields = [] {
    std::vector<Field> f;
    f.push_back(count("run", "seed", "global seed; every random stream derives from it",
                      [](auto& c) -> auto& { return c.seed; }));
    f.push_back(text("run", "out_dir", "output directory (overridden by --out, then by UWE_OUT_DIR)",
                     [](auto& c) -> auto& { return c.out_dir; }));

    f.push_back(text("paths", "clean_dir", "synth: directory of clean in-air images",
                     [](auto& c) -> auto& { return c.paths.clean_dir; }));
    f.push_back(text("paths", "template_dir", "synth: directory of underwater template images",
                     [](auto& c) -> auto& { return c.paths.template_dir; }));
    f.push_back(text("paths", "manifest", "train-prompts/finetune/enhance/eval: dataset manifest",
                     [](auto& c) -> auto& { return c.paths.manifest; }));
    f.push_back(text("paths", "prompts", "finetune: checkpoint written by train-prompts",
                     [](auto& c) -> auto& { return c.paths.prompts; }));
    f.push_back(text("paths", "checkpoint", "enhance: checkpoint written by finetune",
                     [](auto& c) -> auto& { return c.paths.checkpoint; }));
    f.push_back(text("paths", "input_dir", "enhance/eval: directory of images to process",
                     [](auto& c) -> auto& { return c.paths.input_dir; }));
    f.push_back(text("paths", "reference_dir", "eval: references matched by file name",
                     [](auto& c) -> auto& { return c.paths.reference_dir; }));

    f.push_back(choice("synthesis", "method", "color_transfer or scatter",
                       [](auto& c) -> auto& { return c.method; }, synthesis::parse_method));
    f.push_back(real("synthesis", "depth_min", "scene depth range, metres",
                     [](auto& c) -> auto& { return c.ranges.depth_min; }));
    f.push_back(real("synthesis", "depth_max", "upper end of the depth range", [](auto& c) -> auto& { return c.ranges.depth_max; }));
    f.push_back(real("synthesis", "beta_d_min", "attenuation range, 1/m",
                     [](auto& c) -> auto& { return c.ranges.beta_d_min; }));
    f.push_back(real("synthesis", "beta_d_max", "upper end of the attenuation range", [](auto& c) -> auto& { return c.ranges.beta_d_max; }));
    f.push_back(real("synthesis", "beta_b_min", "backscatter range, 1/m",
                     [](auto& c) -> auto& { return c.ranges.beta_b_min; }));
    f.push_back(real("synthesis", "beta_b_max", "upper end of the backscatter range", [](auto& c) -> auto& { return c.ranges.beta_b_max; }));
    f.push_back(triple("synthesis", "veil_min", "veiling light range per RGB channel",
                       [](auto& c) -> auto& { return c.ranges.veil_min; }));
    f.push_back(triple("synthesis", "veil_max", "upper end of the veiling light range", [](auto& c) -> auto& { return c.ranges.veil_max; }));
    f.push_back(flag("synthesis", "veil_from_template", "veiling light = mean color of the drawn template",
                     [](auto& c) -> auto& { return c.ranges.veil_from_template; }));

    f.push_back(count("schedule", "steps", "diffusion steps T", [](auto& c) -> auto& { return c.steps; }));
    f.push_back(optional_real("schedule", "beta_start",
                              "first beta; auto scales 1e-6 so the last alpha_bar matches the 2000-step schedule",
                              [](auto& c) -> auto& { return c.beta_start; }));
    f.push_back(optional_real("schedule", "beta_end", "last beta; auto scales 1e-2 the same way",
                              [](auto& c) -> auto& { return c.beta_end; }));

    f.push_back(choice("guidance", "mode", "lambda_blend or gamma_pair",
                       [](auto& c) -> auto& { return c.guidance.weights.mode; }, diffusion::parse_guidance_mode));
    f.push_back(real("guidance", "lambda", "lambda_blend: weight of the source condition",
                     [](auto& c) -> auto& { return c.guidance.weights.lambda; }));
    f.push_back(real("guidance", "gamma1", "gamma_pair: weight of the source condition",
                     [](auto& c) -> auto& { return c.guidance.weights.gamma1; }));
    f.push_back(real("guidance", "gamma2", "gamma_pair: weight of the classifier condition",
                     [](auto& c) -> auto& { return c.guidance.weights.gamma2; }));
    f.push_back(real("guidance", "source_variance", "observation variance of the degraded source",
                     [](auto& c) -> auto& { return c.guidance.source_variance; }));
    f.push_back(choice("guidance", "objective", "log_natural or neg_alignment",
                       [](auto& c) -> auto& { return c.guidance.objective; }, vlm::parse_guidance_objective));
    f.push_back(choice("guidance", "step_variance", "beta or posterior",
                       [](auto& c) -> auto& { return c.variance; }, diffusion::parse_step_variance));

    f.push_back(real("loss", "lambda1", "weight of the noise L1 term", [](auto& c) -> auto& { return c.loss.lambda1; }));
    f.push_back(real("loss", "lambda2", "weight of the embedding distance term",
                     [](auto& c) -> auto& { return c.loss.lambda2; }));
    f.push_back(choice("loss", "clip_input", "x0_hat or x_t: image embedded for the distance term",
                       [](auto& c) -> auto& { return c.clip_input; }, train::parse_clip_input));

    f.push_back(real("optimizer", "learning_rate", "Adam learning rate",
                     [](auto& c) -> auto& { return c.optimizer.learning_rate; }));
    f.push_back(flag("optimizer", "linear_decay", "decay the rate linearly to zero",
                     [](auto& c) -> auto& { return c.optimizer.linear_decay; }));
    f.push_back(count("optimizer", "steps", "fine-tuning steps, one pair each",
                      [](auto& c) -> auto& { return c.optimizer.steps; }));

    f.push_back(flag("augmentation", "rotation", "random quarter-turn rotations",
                     [](auto& c) -> auto& { return c.augmentation.rotation; }));
    f.push_back(flag("augmentation", "hflip", "random horizontal flips",
                     [](auto& c) -> auto& { return c.augmentation.hflip; }));
    f.push_back(real("augmentation", "probability", "probability of each enabled transform",
                     [](auto& c) -> auto& { return c.augmentation.probability; }));

    f.push_back(count("model", "patch", "training crop side, pixels", [](auto& c) -> auto& { return c.patch; }));
    f.push_back(count("model", "denoiser_hidden", "denoiser channels",
                      [](auto& c) -> auto& { return c.denoiser.hidden; }));
    f.push_back(count("model", "denoiser_layers", "denoiser 3x3 convolutions",
                      [](auto& c) -> auto& { return c.denoiser.layers; }));

    f.push_back(count("classifier", "width", "encoder channels", [](auto& c) -> auto& { return c.vlm.width; }));
    f.push_back(count("classifier", "encoder_layers", "stride-2 encoder convolutions",
                      [](auto& c) -> auto& { return c.vlm.encoder_layers; }));
    f.push_back(count("classifier", "embed_dim", "joint embedding size",
                      [](auto& c) -> auto& { return c.vlm.embed_dim; }));
    f.push_back(count("classifier", "tokens", "prompt tokens", [](auto& c) -> auto& { return c.vlm.tokens; }));
    f.push_back(count("classifier", "token_width", "prompt token width",
                      [](auto& c) -> auto& { return c.vlm.token_width; }));
    f.push_back(count("classifier", "text_hidden", "text encoder width",
                      [](auto& c) -> auto& { return c.vlm.text_hidden; }));
    f.push_back(choice("classifier", "activation", "silu or identity",
                       [](auto& c) -> auto& { return c.vlm.activation; }, parse_activation));

    f.push_back(count("prompts", "epochs", "full-batch epochs", [](auto& c) -> auto& { return c.prompts.epochs; }));
    f.push_back(real("prompts", "learning_rate", "Adam learning rate",
                     [](auto& c) -> auto& { return c.prompts.learning_rate; }));
    f.push_back(real("prompts", "holdout_fraction", "share of images held out for accuracy",
                     [](auto& c) -> auto& { return c.prompts.holdout_fraction; }));
    f.push_back(count("prompts", "trend_window", "epochs compared by the loss trend check",
                      [](auto& c) -> auto& { return c.prompts.trend_window; }));

    f.push_back(flag("metrics", "psnr", "report PSNR (needs a reference)", [](auto& c) -> auto& { return c.metrics.psnr; }));
    f.push_back(flag("metrics", "ssim", "report SSIM (needs a reference)", [](auto& c) -> auto& { return c.metrics.ssim; }));
    f.push_back(flag("metrics", "uiqm", "report UIQM", [](auto& c) -> auto& { return c.metrics.uiqm; }));
    f.push_back(flag("metrics", "uciqe", "report UCIQE", [](auto& c) -> auto& { return c.metrics.uciqe; }));
    f.push_back(flag("metrics", "cpbd", "report CPBD (images of at least 64x64)", [](auto& c) -> auto& { return c.metrics.cpbd; }));
    return f;
  }();
  return fields;
}

bool location_dependent(const Field& f) { return f.section == "paths" || (f.section == "run" && f.key == "out_dir"); }

}  // namespace

diffusion::NoiseSchedule RunConfig::schedule() const {
  const double k = diffusion::matched_endpoint_scale(steps);
  return diffusion::make_linear_schedule(steps, beta_start.value_or(k * diffusion::kReferenceBetaStart),
                                         beta_end.value_or(k * diffusion::kReferenceBetaEnd));
}

train::FineTuneConfig RunConfig::fine_tune_config() const {
  train::FineTuneConfig f;
  f.guidance = guidance;
  f.loss = loss;
  f.optimizer = optimizer;
  f.optimizer.seed = seed;
  f.augmentation = augmentation;
  f.patch = patch;
  f.clip_input = clip_input;
  return f;
}

void RunConfig::validate() const {
  try {
    require(steps >= 1, Errc::parameter, "[schedule] steps must be at least 1");
    schedule();
    fine_tune_config().validate();
    denoiser.validate();
    vlm.validate();
    require(prompts.epochs >= 1 && prompts.learning_rate >= 0.0, Errc::parameter,
            "[prompts] needs at least one epoch and a non-negative rate");
    require(prompts.holdout_fraction >= 0.0 && prompts.holdout_fraction < 1.0, Errc::parameter,
            "[prompts] holdout_fraction must lie in [0,1)");
    const auto& r = ranges;
    require(0.0 <= r.depth_min && r.depth_min <= r.depth_max && 0.0 <= r.beta_d_min && r.beta_d_min <= r.beta_d_max &&
                0.0 <= r.beta_b_min && r.beta_b_min <= r.beta_b_max,
            Errc::parameter, "[synthesis] ranges need 0 <= min <= max");
    for (std::size_t c = 0; c < 3; ++c)
      require(0.0 <= r.veil_min[c] && r.veil_min[c] <= r.veil_max[c] && r.veil_max[c] <= 1.0, Errc::parameter,
              "[synthesis] veil ranges need 0 <= min <= max <= 1");
  } catch (const Error& e) {
    if (e.code() == Errc::config) throw;
    throw Error(Errc::config, e.what());
  }
}

RunConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(Errc::config, "line " + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig c;
  std::set<std::string> sections;
  for (const auto& f : schema()) sections.insert(f.section);
  for (const auto& [section, body] : tree) {
    require(!body.empty() || body.data().empty(), Errc::config, "key '" + section + "' is outside any section");
    require(sections.count(section) > 0, Errc::config, "unknown section [" + section + "]");
    for (const auto& [key, value] : body) {
      const Field* field = nullptr;
      for (const auto& f : schema())
        if (f.section == section && f.key == key) field = &f;
      require(field != nullptr, Errc::config, "unknown key '" + key + "' in [" + section + "]");
      field->set(c, value.data());
    }
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), Errc::io, "cannot read config file " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return parse_config(s.str());
}

std::string render_config(const RunConfig& c, bool with_paths) {
  std::ostringstream out;
  std::string section;
  for (const auto& f : schema()) {
    if (!with_paths && location_dependent(f)) continue;
    if (f.section != section) {
      if (!section.empty()) out << "\n";
      section = f.section;
      out << "[" << section << "]\n";
    }
    out << f.key << " = " << f.get(c) << "\n";
  }
  return out.str();
}

std::vector<KeyDoc> documented_keys() {
  const RunConfig defaults;
  std::vector<KeyDoc> docs;
  for (const auto& f : schema()) docs.push_back({f.section, f.key, f.get(defaults), f.doc});
  return docs;
}

}  // namespace uwe::cli
