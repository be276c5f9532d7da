#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "uwe/diffusion.hpp"
#include "uwe/metrics.hpp"
#include "uwe/synthesis.hpp"
#include "uwe/training.hpp"
#include "uwe/vlmnet.hpp"

namespace uwe::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // verification or assertion failure
inline constexpr int kExitUsage = 2;    // usage or input error

inline constexpr const char* kOutDirEnv = "UWE_OUT_DIR";

struct Paths {
  std::string clean_dir, template_dir, manifest, prompts, checkpoint, input_dir, reference_dir;
};

/// Every knob of every subcommand. Each field has a default; a config file
/// only lists what it changes.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  Paths paths;

  synthesis::Method method = synthesis::Method::color_transfer;
  synthesis::ScatterRanges ranges;

  std::size_t steps = diffusion::kReferenceSteps;
  std::optional<double> beta_start, beta_end;  // empty: matched to the reference schedule

  train::GuidanceSetup guidance;
  diffusion::StepVariance variance = diffusion::StepVariance::beta;

  train::LossWeights loss;
  train::ClipInput clip_input = train::ClipInput::x0_hat;
  train::OptimizerConfig optimizer;
  train::AugmentationConfig augmentation;
  std::size_t patch = 32;

  train::DenoiserConfig denoiser;
  vlm::VlmConfig vlm;
  vlm::PromptTrainConfig prompts;

  metrics::MetricToggles metrics;

  diffusion::NoiseSchedule schedule() const;
  train::FineTuneConfig fine_tune_config() const;
  void validate() const;
};

/// Sectioned `key = value` text (';' starts a comment line). Unknown
/// sections or keys and malformed values raise Errc::config.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical text listing every key in schema order. Without paths, the
/// output directory and [paths] are omitted so the echo stored in artifacts
/// does not depend on where a run happened.
std::string render_config(const RunConfig& c, bool with_paths = true);

/// Full documented key list: section, key, default and description.
struct KeyDoc {
  std::string section, key, default_value, description;
};
std::vector<KeyDoc> documented_keys();

/// Entry point shared by the executable and the tests; args exclude the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Analytic-oracle self checks behind `verify`.
struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};
std::vector<CheckResult> run_verification(std::uint64_t seed);

}  // namespace uwe::cli
