#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "uwe/color.hpp"
#include "uwe/image.hpp"
#include "uwe/rng.hpp"

namespace uwe::synthesis {

/// Symbols of the underwater image-formation model
///   I_c = J_c·exp(-beta_d_c·z) + veil_c·(1 - exp(-beta_b_c·z)).
struct DegradationParams {
  Triple beta_d{};  // attenuation, 1/m
  Triple beta_b{};  // backscatter, 1/m
  Triple veil{};    // veiling light at infinite distance, [0,1]
  std::variant<double, Plane> depth = 0.0;  // metres; scalar or per-pixel map
};

void validate(const DegradationParams& p);

/// Statistical color transfer in CIELAB: each channel is shifted/scaled so its
/// mean and std match `target`. A channel with source std below 1e-8 maps to
/// the target mean.
LabImage color_transfer(const LabImage& source, const ChannelStats& target);

RgbImage scatter_degrade(const RgbImage& clean, const DegradationParams& params);

/// Sampling ranges for randomized scatter degradation. Toolkit defaults, not
/// measured water properties.
struct ScatterRanges {
  double depth_min = 0.5, depth_max = 5.0;
  double beta_d_min = 0.05, beta_d_max = 0.6;
  double beta_b_min = 0.05, beta_b_max = 0.5;
  Triple veil_min{0.0, 0.3, 0.4};
  Triple veil_max{0.2, 0.6, 0.7};
  /// When set, the veiling light is the drawn template's mean color instead
  /// of a draw from veil_min..veil_max.
  bool veil_from_template = true;
};

/// "Wavelength-realistic" draw: attenuation sorted so red >= green >= blue.
DegradationParams sample_degradation(Rng& rng, const ScatterRanges& ranges,
                                     const std::optional<Triple>& template_color = std::nullopt);

struct TemplatePool {
  std::vector<ChannelStats> templates;
  std::vector<std::filesystem::path> sources;

  std::size_t size() const noexcept { return templates.size(); }
};

/// Image files (.png/.ppm) of a directory, sorted lexicographically by name.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

struct SkippedFile {
  std::filesystem::path path;
  std::string reason;
};

/// Loads every decodable image of `dir`; undecodable files land in `skipped`.
TemplatePool build_template_pool(const std::filesystem::path& dir, std::vector<SkippedFile>* skipped = nullptr);

enum class Method { color_transfer, scatter };
std::string to_string(Method m);
Method parse_method(const std::string& s);

/// Uniform template draw for image `index` of a run seeded with `seed`.
std::size_t choose_template(std::uint64_t seed, std::uint64_t index, std::size_t n_templates);

struct ManifestEntry {
  std::string degraded;  // relative to the manifest directory
  std::string clean;     // relative to the manifest directory
  std::int64_t template_index = 0;
  std::uint64_t seed = 0;
  Method method = Method::color_transfer;
};

struct DatasetManifest {
  std::uint64_t global_seed = 0;
  Method method = Method::color_transfer;
  std::vector<std::string> template_sources;
  ScatterRanges ranges;
  std::vector<ManifestEntry> entries;
  std::vector<SkippedFile> skipped;
  std::filesystem::path directory;  // where the manifest lives; not serialized

  std::filesystem::path resolve(const std::string& rel) const { return directory / rel; }
};

inline constexpr const char* kManifestName = "manifest.jsonl";

/// UTF-8 JSON lines: one header record, then one record per entry with fields
/// (degraded, clean, template_index, seed, method), then skip records.
std::string serialize_manifest(const DatasetManifest& m);
DatasetManifest parse_manifest(const std::string& text);
void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

struct SynthesisOptions {
  std::filesystem::path clean_dir, template_dir, out_dir;
  std::uint64_t seed = 0;
  Method method = Method::color_transfer;
  ScatterRanges ranges;
};

/// Builds the paired dataset: one degraded 8-bit PNG per decodable clean image
/// under out_dir/degraded, plus out_dir/manifest.jsonl. Output is a pure
/// function of the sorted directory listings, the seed and the options.
DatasetManifest synthesize_dataset(const SynthesisOptions& options);

}  // namespace uwe::synthesis
