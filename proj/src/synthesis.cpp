#include "uwe/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"

#include "uwe/image_io.hpp"

namespace uwe::synthesis {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

void validate(const DegradationParams& p) {
  for (int c = 0; c < 3; ++c) {
    require(std::isfinite(p.beta_d[c]) && p.beta_d[c] >= 0.0, Errc::parameter, "attenuation must be >= 0");
    require(std::isfinite(p.beta_b[c]) && p.beta_b[c] >= 0.0, Errc::parameter, "backscatter must be >= 0");
    require(p.veil[c] >= 0.0 && p.veil[c] <= 1.0, Errc::parameter, "veiling light must lie in [0,1]");
  }
  if (const double* z = std::get_if<double>(&p.depth)) {
    require(std::isfinite(*z) && *z >= 0.0, Errc::parameter, "depth must be >= 0");
  } else {
    for (double z : std::get<Plane>(p.depth).data)
      require(std::isfinite(z) && z >= 0.0, Errc::parameter, "depth map entries must be >= 0");
  }
}

LabImage color_transfer(const LabImage& source, const ChannelStats& target) {
  require(source.pixels() > 0, Errc::empty_input, "color_transfer on a zero-pixel image");
  require(is_finite(target), Errc::parameter, "target statistics must be finite");
  const ChannelStats src = channel_stats(source);
  LabImage out(source.width(), source.height());
  const auto in = source.data();
  auto o = out.data();
  for (int c = 0; c < 3; ++c) {
    if (src.std[c] < 1e-8) {
      for (std::size_t i = 0; i < source.pixels(); ++i) o[3 * i + c] = target.mean[c];
      continue;
    }
    const double gain = target.std[c] / src.std[c];
    for (std::size_t i = 0; i < source.pixels(); ++i) o[3 * i + c] = gain * (in[3 * i + c] - src.mean[c]) + target.mean[c];
  }
  return out;
}

RgbImage scatter_degrade(const RgbImage& clean, const DegradationParams& params) {
  validate(params);
  const Plane* map = std::get_if<Plane>(&params.depth);
  require(!map || (map->width == clean.width() && map->height == clean.height()), Errc::shape_mismatch,
          "depth map must match the image dimensions");
  RgbImage out(clean.width(), clean.height());
  const auto in = clean.data();
  auto o = out.data();
  for (std::size_t i = 0; i < clean.pixels(); ++i) {
    const double z = map ? map->data[i] : std::get<double>(params.depth);
    for (int c = 0; c < 3; ++c) {
      const double direct = in[3 * i + c] * std::exp(-params.beta_d[c] * z);
      const double back = params.veil[c] * (1.0 - std::exp(-params.beta_b[c] * z));
      o[3 * i + c] = std::clamp(direct + back, 0.0, 1.0);
    }
  }
  return out;
}

DegradationParams sample_degradation(Rng& rng, const ScatterRanges& r, const std::optional<Triple>& template_color) {
  DegradationParams p;
  Triple bd{rng.uniform(r.beta_d_min, r.beta_d_max), rng.uniform(r.beta_d_min, r.beta_d_max),
            rng.uniform(r.beta_d_min, r.beta_d_max)};
  std::sort(bd.begin(), bd.end(), std::greater<>());
  p.beta_d = bd;
  for (int c = 0; c < 3; ++c) p.beta_b[c] = rng.uniform(r.beta_b_min, r.beta_b_max);
  for (int c = 0; c < 3; ++c) {
    const double v = rng.uniform(r.veil_min[c], r.veil_max[c]);
    p.veil[c] = (r.veil_from_template && template_color) ? (*template_color)[c] : v;
  }
  p.depth = rng.uniform(r.depth_min, r.depth_max);
  return p;
}

std::vector<fs::path> list_images(const fs::path& dir) {
  require(fs::is_directory(dir), Errc::io, "not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && has_image_extension(e.path())) files.push_back(e.path());
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  return files;
}

TemplatePool build_template_pool(const fs::path& dir, std::vector<SkippedFile>* skipped) {
  TemplatePool pool;
  for (const auto& path : list_images(dir)) {
    try {
      pool.templates.push_back(channel_stats(srgb_to_lab(load_image(path))));
      pool.sources.push_back(path);
    } catch (const Error& e) {
      std::cerr << "warning: skipping template " << path.string() << ": " << e.what() << "\n";
      if (skipped) skipped->push_back({path, e.what()});
    }
  }
  return pool;
}

std::string to_string(Method m) { return m == Method::scatter ? "scatter" : "color_transfer"; }

Method parse_method(const std::string& s) {
  if (s == "color_transfer") return Method::color_transfer;
  if (s == "scatter") return Method::scatter;
  throw Error(Errc::parameter, "unknown synthesis method '" + s + "'");
}

std::size_t choose_template(std::uint64_t seed, std::uint64_t index, std::size_t n_templates) {
  require(n_templates > 0, Errc::empty_input, "template pool is empty");
  Rng rng(seed, index);
  return rng.index(n_templates);
}

// ---- manifest --------------------------------------------------------------

namespace {

ojson triple_json(const Triple& t) { return ojson::array({t[0], t[1], t[2]}); }
Triple triple_from(const ojson& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

ojson ranges_json(const ScatterRanges& r) {
  ojson j;
  j["depth_min"] = r.depth_min;
  j["depth_max"] = r.depth_max;
  j["beta_d_min"] = r.beta_d_min;
  j["beta_d_max"] = r.beta_d_max;
  j["beta_b_min"] = r.beta_b_min;
  j["beta_b_max"] = r.beta_b_max;
  j["veil_min"] = triple_json(r.veil_min);
  j["veil_max"] = triple_json(r.veil_max);
  j["veil_from_template"] = r.veil_from_template;
  return j;
}

ScatterRanges ranges_from(const ojson& j) {
  ScatterRanges r;
  r.depth_min = j.at("depth_min");
  r.depth_max = j.at("depth_max");
  r.beta_d_min = j.at("beta_d_min");
  r.beta_d_max = j.at("beta_d_max");
  r.beta_b_min = j.at("beta_b_min");
  r.beta_b_max = j.at("beta_b_max");
  r.veil_min = triple_from(j.at("veil_min"));
  r.veil_max = triple_from(j.at("veil_max"));
  r.veil_from_template = j.at("veil_from_template");
  return r;
}

}  // namespace

std::string serialize_manifest(const DatasetManifest& m) {
  std::ostringstream out;
  ojson header;
  header["record"] = "header";
  header["version"] = 1;
  header["global_seed"] = m.global_seed;
  header["method"] = to_string(m.method);
  header["templates"] = m.template_sources;
  header["scatter_ranges"] = ranges_json(m.ranges);
  out << header.dump() << "\n";
  for (const auto& e : m.entries) {
    ojson j;
    j["degraded"] = e.degraded;
    j["clean"] = e.clean;
    j["template_index"] = e.template_index;
    j["seed"] = e.seed;
    j["method"] = to_string(e.method);
    out << j.dump() << "\n";
  }
  for (const auto& s : m.skipped) {
    ojson j;
    j["skipped"] = s.path.generic_string();
    j["reason"] = s.reason;
    out << j.dump() << "\n";
  }
  return out.str();
}

DatasetManifest parse_manifest(const std::string& text) {
  DatasetManifest m;
  std::istringstream in(text);
  std::string line;
  bool seen_header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = ojson::parse(line);
      if (j.contains("record")) {
        m.global_seed = j.at("global_seed");
        m.method = parse_method(j.at("method"));
        m.template_sources = j.at("templates").get<std::vector<std::string>>();
        m.ranges = ranges_from(j.at("scatter_ranges"));
        seen_header = true;
      } else if (j.contains("skipped")) {
        m.skipped.push_back({j.at("skipped").get<std::string>(), j.at("reason").get<std::string>()});
      } else {
        ManifestEntry e;
        e.degraded = j.at("degraded");
        e.clean = j.at("clean");
        e.template_index = j.at("template_index");
        e.seed = j.at("seed");
        e.method = parse_method(j.at("method"));
        m.entries.push_back(std::move(e));
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::parameter, "manifest line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  require(seen_header, Errc::parameter, "manifest has no header record");
  return m;
}

void write_manifest(const DatasetManifest& m, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), Errc::io, "cannot write manifest " + path.string());
  out << serialize_manifest(m);
  require(static_cast<bool>(out), Errc::io, "manifest write failed: " + path.string());
}

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), Errc::io, "cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  auto m = parse_manifest(ss.str());
  m.directory = path.parent_path();
  return m;
}

// ---- dataset ---------------------------------------------------------------

DatasetManifest synthesize_dataset(const SynthesisOptions& opt) {
  require(fs::is_directory(opt.clean_dir), Errc::io, "clean directory does not exist: " + opt.clean_dir.string());
  require(fs::is_directory(opt.template_dir), Errc::io,
          "template directory does not exist: " + opt.template_dir.string());
  const auto clean_files = list_images(opt.clean_dir);
  require(!clean_files.empty(), Errc::empty_input, "no PNG/PPM images in " + opt.clean_dir.string());

  DatasetManifest m;
  m.global_seed = opt.seed;
  m.method = opt.method;
  m.ranges = opt.ranges;
  m.directory = opt.out_dir;

  const TemplatePool pool = build_template_pool(opt.template_dir, &m.skipped);
  require(pool.size() > 0, Errc::empty_input, "no decodable template images in " + opt.template_dir.string());

  std::error_code ec;
  fs::create_directories(opt.out_dir / "degraded", ec);
  require(!ec && fs::is_directory(opt.out_dir / "degraded"), Errc::io,
          "cannot create output directory " + opt.out_dir.string());

  for (const auto& p : pool.sources) m.template_sources.push_back(fs::proximate(p, opt.out_dir).generic_string());

  struct Outcome {
    std::optional<ManifestEntry> entry;
    std::string error;
    bool fatal = false;
  };
  std::vector<Outcome> outcomes(clean_files.size());

  // Per-image work is independent; each image draws from its own stream.
  const auto n = static_cast<std::ptrdiff_t>(clean_files.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const fs::path& src = clean_files[idx];
    RgbImage clean;
    try {
      clean = load_image(src);
    } catch (const Error& e) {
      outcomes[idx].error = e.what();
      continue;
    }
    try {
      const std::uint64_t image_seed = derive_seed(opt.seed, idx);
      Rng rng(image_seed);
      const std::size_t t = rng.index(pool.size());
      RgbImage degraded;
      if (opt.method == Method::color_transfer) {
        degraded = lab_to_srgb(color_transfer(srgb_to_lab(clean), pool.templates[t]));
      } else {
        const auto& stats = pool.templates[t];
        const Triple tc = lab_to_srgb_pixel(stats.mean);
        degraded = scatter_degrade(clean, sample_degradation(rng, opt.ranges, tc));
      }
      char prefix[16];
      std::snprintf(prefix, sizeof prefix, "%06zu_", idx);
      const std::string rel = "degraded/" + std::string(prefix) + src.stem().string() + ".png";
      save_image(degraded, opt.out_dir / rel, 8);
      outcomes[idx].entry = ManifestEntry{rel, fs::proximate(src, opt.out_dir).generic_string(),
                                          static_cast<std::int64_t>(t), image_seed, opt.method};
    } catch (const Error& e) {
      outcomes[idx].error = e.what();
      outcomes[idx].fatal = true;
    }
  }

  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (outcomes[i].entry) {
      m.entries.push_back(*outcomes[i].entry);
    } else {
      // Undecodable inputs are skipped; failures after decoding are not.
      require(!outcomes[i].fatal, Errc::io, outcomes[i].error);
      std::cerr << "warning: skipping " << clean_files[i].string() << ": " << outcomes[i].error << "\n";
      m.skipped.push_back({fs::proximate(clean_files[i], opt.out_dir), outcomes[i].error});
    }
  }
  require(!m.entries.empty(), Errc::empty_input, "no decodable clean images in " + opt.clean_dir.string());
  write_manifest(m, opt.out_dir / kManifestName);
  return m;
}

}  // namespace uwe::synthesis
