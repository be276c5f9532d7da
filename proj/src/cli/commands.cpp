#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "uwe/checkpoint.hpp"
#include "uwe/cli.hpp"
#include "uwe/error.hpp"
#include "uwe/image_io.hpp"

namespace uwe::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kPromptsKind = "prompts";
constexpr const char* kFinetuneKind = "finetune";
constexpr const char* kScheduleTensor = "meta.schedule";

struct Options {
  std::string config, out;
  std::uint64_t seed = 0;
  Paths paths;
};

struct Context {
  std::string command;
  RunConfig cfg;
  fs::path out_dir;
  std::ostream& out;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), Errc::io, "cannot write " + path.string());
  f << text;
  require(static_cast<bool>(f), Errc::io, "failed writing " + path.string());
}

fs::path need_path(const std::string& value, const char* what) {
  require(!value.empty(), Errc::config, std::string("missing ") + what);
  return value;
}

void need_file(const fs::path& p, const char* what) {
  require(fs::is_regular_file(p), Errc::io, std::string(what) + " not found: " + p.string());
}

struct PairSet {
  std::vector<RgbImage> clean, degraded;
};

PairSet load_pairs(const fs::path& manifest_path) {
  need_file(manifest_path, "manifest");
  const auto m = synthesis::read_manifest(manifest_path);
  require(!m.entries.empty(), Errc::empty_input, "manifest lists no pairs: " + manifest_path.string());
  PairSet set;
  for (const auto& e : m.entries) {
    set.clean.push_back(load_image(m.resolve(e.clean)));
    set.degraded.push_back(load_image(m.resolve(e.degraded)));
  }
  return set;
}

std::vector<train::TrainingPair> as_pairs(const PairSet& s) {
  std::vector<train::TrainingPair> out;
  for (std::size_t i = 0; i < s.clean.size(); ++i) out.push_back({&s.clean[i], &s.degraded[i]});
  return out;
}

std::vector<double> schedule_signature(const diffusion::NoiseSchedule& s) {
  return {static_cast<double>(s.T), s.beta.front(), s.beta.back()};
}

// ---- synth -----------------------------------------------------------------

int cmd_synth(Context& ctx) {
  synthesis::SynthesisOptions o;
  o.clean_dir = need_path(ctx.cfg.paths.clean_dir, "clean image directory (--clean or [paths] clean_dir)");
  o.template_dir = need_path(ctx.cfg.paths.template_dir, "template directory (--templates or [paths] template_dir)");
  o.out_dir = ctx.out_dir;
  o.seed = ctx.cfg.seed;
  o.method = ctx.cfg.method;
  o.ranges = ctx.cfg.ranges;
  const auto m = synthesis::synthesize_dataset(o);
  ctx.out << "manifest: " << (ctx.out_dir / synthesis::kManifestName).string() << " (" << m.entries.size()
          << " pairs, " << m.skipped.size() << " skipped)\n";
  return kExitOk;
}

// ---- train-prompts -----------------------------------------------------------

int cmd_train_prompts(Context& ctx) {
  const PairSet data =
      load_pairs(need_path(ctx.cfg.paths.manifest, "dataset manifest (--manifest or [paths] manifest)"));
  std::vector<vlm::LabeledImage> labeled;
  for (std::size_t i = 0; i < data.clean.size(); ++i) {
    labeled.push_back({&data.clean[i], 1.0});
    labeled.push_back({&data.degraded[i], 0.0});
  }
  vlm::VlmModel model = vlm::init_model(ctx.cfg.vlm, ctx.cfg.seed);
  vlm::PromptTrainConfig pc = ctx.cfg.prompts;
  pc.seed = ctx.cfg.seed;
  const auto result = vlm::train_prompts(labeled, model, pc);

  std::ostringstream log;
  for (const auto& r : result.log) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["loss"] = r.loss;
    j["train_accuracy"] = r.train_accuracy;
    j["seed"] = ctx.cfg.seed;
    log << j.dump() << "\n";
  }
  write_text(ctx.out_dir / "prompts_log.jsonl", log.str());
  write_checkpoint(ctx.out_dir / "prompts.ckpt",
                   {kPromptsKind, render_config(ctx.cfg, false), vlm::export_model(model)});
  char line[160];
  std::snprintf(line, sizeof line, "prompts: %zu train / %zu held out, final loss %.6f, holdout accuracy %.4f%s\n",
                result.train_size, result.holdout_size, result.log.back().loss, result.holdout_accuracy,
                result.trend_decreasing ? "" : " (warning: loss trend not decreasing)");
  ctx.out << line << "checkpoint: " << (ctx.out_dir / "prompts.ckpt").string() << "\n";
  return kExitOk;
}

// ---- finetune ------------------------------------------------------------------

vlm::VlmModel load_classifier(const fs::path& path) {
  need_file(path, "prompt checkpoint");
  const Checkpoint ck = read_checkpoint(path);
  if (ck.kind == kFinetuneKind) return train::unbundle_classifier(ck.tensors);
  require(ck.kind == kPromptsKind, Errc::unsupported_format,
          "expected a '" + std::string(kPromptsKind) + "' checkpoint, got '" + ck.kind + "'");
  return vlm::import_model(ck.tensors);
}

int cmd_finetune(Context& ctx) {
  const PairSet data =
      load_pairs(need_path(ctx.cfg.paths.manifest, "dataset manifest (--manifest or [paths] manifest)"));
  const vlm::VlmModel classifier =
      load_classifier(need_path(ctx.cfg.paths.prompts, "prompt checkpoint (--prompts or [paths] prompts)"));
  const auto schedule = ctx.cfg.schedule();
  TensorSet denoiser = train::init_denoiser(ctx.cfg.denoiser, ctx.cfg.seed);
  const auto pairs = as_pairs(data);

  const auto result = train::fine_tune(denoiser, classifier, pairs, schedule, ctx.cfg.fine_tune_config());
  std::ostringstream log;
  for (const auto& r : result.log) log << train::to_jsonl(r) << "\n";
  write_text(ctx.out_dir / "train_log.jsonl", log.str());

  TensorSet tensors = train::bundle(denoiser, classifier);
  tensors.add(kScheduleTensor, {3}, schedule_signature(schedule));
  write_checkpoint(ctx.out_dir / "finetune.ckpt", {kFinetuneKind, render_config(ctx.cfg, false), tensors});

  const std::size_t n = result.log.size(), w = std::max<std::size_t>(1, std::min<std::size_t>(50, n / 2));
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < w; ++i) {
    first += result.log[i].total;
    last += result.log[n - 1 - i].total;
  }
  char line[160];
  std::snprintf(line, sizeof line, "finetune: %zu steps, mean loss first %zu %.6f, last %zu %.6f\n", n, w,
                first / static_cast<double>(w), w, last / static_cast<double>(w));
  ctx.out << line << "checkpoint: " << (ctx.out_dir / "finetune.ckpt").string() << "\n";
  return kExitOk;
}

// ---- enhance -----------------------------------------------------------------

// Images named on the command line: an input directory, else the degraded
// half of a manifest.
std::vector<fs::path> input_images(const RunConfig& cfg) {
  if (!cfg.paths.input_dir.empty()) {
    require(fs::is_directory(cfg.paths.input_dir), Errc::io, "input directory not found: " + cfg.paths.input_dir);
    auto files = synthesis::list_images(cfg.paths.input_dir);
    require(!files.empty(), Errc::empty_input, "no PNG/PPM images in " + cfg.paths.input_dir);
    return files;
  }
  const fs::path mp = need_path(cfg.paths.manifest, "input images (--input or --manifest)");
  need_file(mp, "manifest");
  const auto m = synthesis::read_manifest(mp);
  std::vector<fs::path> files;
  for (const auto& e : m.entries) files.push_back(m.resolve(e.degraded));
  require(!files.empty(), Errc::empty_input, "manifest lists no pairs: " + mp.string());
  return files;
}

int cmd_enhance(Context& ctx) {
  const fs::path ckpt = need_path(ctx.cfg.paths.checkpoint, "checkpoint (--checkpoint or [paths] checkpoint)");
  need_file(ckpt, "checkpoint");
  const Checkpoint ck = read_checkpoint(ckpt);
  require(ck.kind == kFinetuneKind, Errc::unsupported_format,
          "expected a '" + std::string(kFinetuneKind) + "' checkpoint, got '" + ck.kind + "'");
  const TensorSet denoiser = train::unbundle_denoiser(ck.tensors);
  const vlm::VlmModel classifier = train::unbundle_classifier(ck.tensors);
  const auto schedule = ctx.cfg.schedule();
  if (ck.tensors.contains(kScheduleTensor))
    require(ck.tensors.at(kScheduleTensor).data == schedule_signature(schedule), Errc::config,
            "[schedule] differs from the one the checkpoint was trained with");

  const auto files = input_images(ctx.cfg);
  const fs::path dir = ctx.out_dir / "enhanced";
  fs::create_directories(dir);
  const train::EnhanceConfig ec{ctx.cfg.guidance, ctx.cfg.variance};
  for (std::size_t i = 0; i < files.size(); ++i) {
    const RgbImage img = load_image(files[i]);
    const RgbImage result = train::enhance(img, denoiser, classifier, schedule, ec, derive_seed(ctx.cfg.seed, i));
    const fs::path target = dir / (files[i].stem().string() + ".png");
    save_image(result, target);
    ctx.out << "[" << (i + 1) << "/" << files.size() << "] " << target.string() << "\n";
  }
  return kExitOk;
}

// ---- eval --------------------------------------------------------------------

std::string cell(double v, bool markdown) {
  if (std::isinf(v)) return markdown ? "∞" : "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

int cmd_eval(Context& ctx) {
  const auto files = input_images(ctx.cfg);
  // Reference lookup by file name: a reference directory, else the clean
  // image a manifest pairs with each degraded file name.
  std::map<std::string, fs::path> by_name;
  if (ctx.cfg.paths.reference_dir.empty() && !ctx.cfg.paths.manifest.empty()) {
    need_file(ctx.cfg.paths.manifest, "manifest");
    const auto m = synthesis::read_manifest(ctx.cfg.paths.manifest);
    for (const auto& e : m.entries) by_name[fs::path(e.degraded).filename().string()] = m.resolve(e.clean);
  }
  std::vector<RgbImage> images(files.size());
  std::vector<std::optional<RgbImage>> refs(files.size());
  for (std::size_t i = 0; i < files.size(); ++i) {
    images[i] = load_image(files[i]);
    const std::string name = files[i].filename().string();
    fs::path ref;
    if (!ctx.cfg.paths.reference_dir.empty()) {
      ref = fs::path(ctx.cfg.paths.reference_dir) / name;
      need_file(ref, "reference image");
    } else if (auto it = by_name.find(name); it != by_name.end()) {
      ref = it->second;
    }
    if (!ref.empty()) refs[i] = load_image(ref);
  }
  std::vector<metrics::EvalItem> items;
  for (std::size_t i = 0; i < files.size(); ++i) items.push_back({&images[i], refs[i] ? &*refs[i] : nullptr});
  auto reports = metrics::evaluate_batch(items, ctx.cfg.metrics);
  const metrics::MetricReport mean = metrics::mean_report(reports);

  const auto& on = ctx.cfg.metrics;
  std::vector<std::string> header{"image"};
  if (on.psnr) header.push_back("PSNR");
  if (on.ssim) header.push_back("SSIM");
  if (on.uiqm) header.push_back("UIQM");
  if (on.uciqe) header.push_back("UCIQE");
  if (on.cpbd) header.push_back("CPBD");
  auto row = [&](const std::string& name, const metrics::MetricReport& r, bool md) {
    std::vector<std::string> cells{name};
    if (on.psnr) cells.push_back(r.psnr ? cell(*r.psnr, md) : "-");
    if (on.ssim) cells.push_back(r.ssim ? cell(*r.ssim, md) : "-");
    if (on.uiqm) cells.push_back(cell(r.uiqm, md));
    if (on.uciqe) cells.push_back(cell(r.uciqe, md));
    if (on.cpbd) cells.push_back(cell(r.cpbd, md));
    return cells;
  };
  std::ostringstream tsv, md;
  auto emit = [](std::ostream& o, const std::vector<std::string>& cells, const char* sep, const char* lead,
                 const char* tail) {
    o << lead;
    for (std::size_t i = 0; i < cells.size(); ++i) o << (i ? sep : "") << cells[i];
    o << tail << "\n";
  };
  emit(tsv, header, "\t", "", "");
  emit(md, header, " | ", "| ", " |");
  emit(md, std::vector<std::string>(header.size(), "---"), " | ", "| ", " |");
  for (std::size_t i = 0; i < files.size(); ++i) {
    emit(tsv, row(files[i].filename().string(), reports[i], false), "\t", "", "");
    emit(md, row(files[i].filename().string(), reports[i], true), " | ", "| ", " |");
  }
  emit(tsv, row("mean", mean, false), "\t", "", "");
  emit(md, row("**mean**", mean, true), " | ", "| ", " |");
  write_text(ctx.out_dir / "metrics.tsv", tsv.str());
  write_text(ctx.out_dir / "metrics.md", md.str());
  ctx.out << md.str() << "tables: " << (ctx.out_dir / "metrics.tsv").string() << ", "
          << (ctx.out_dir / "metrics.md").string() << "\n";
  return kExitOk;
}

// ---- verify --------------------------------------------------------------------

int cmd_verify(Context& ctx) {
  const auto checks = run_verification(ctx.cfg.seed);
  std::ostringstream report;
  std::vector<std::string> failed;
  for (const auto& c : checks) {
    report << "check " << c.name << ": " << (c.passed ? "pass" : "FAIL") << " (" << c.detail << ")\n";
    if (!c.passed) failed.push_back(c.name);
  }
  ctx.out << report.str();
  write_text(ctx.out_dir / "verify.txt", report.str());
  if (failed.empty()) {
    ctx.out << "verify: all " << checks.size() << " checks pass\n";
    return kExitOk;
  }
  ctx.out << "verify: failed:";
  for (const auto& f : failed) ctx.out << " " << f;
  ctx.out << "\n";
  return kExitFailure;
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case Errc::non_finite:
    case Errc::divergence:
      return kExitFailure;
    default:
      return kExitUsage;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Underwater image enhancement toolkit", "uwe"};
  app.require_subcommand(1);
  Options opt;
  struct Sub {
    const char* name;
    const char* help;
    int (*fn)(Context&);
  };
  const Sub subs[] = {
      {"synth", "synthesize degraded/clean training pairs", cmd_synth},
      {"train-prompts", "learn the in-air and underwater prompts", cmd_train_prompts},
      {"finetune", "train the guided denoiser", cmd_finetune},
      {"enhance", "enhance degraded images by guided sampling", cmd_enhance},
      {"eval", "write the quality-metric table", cmd_eval},
      {"verify", "run the analytic self checks", cmd_verify},
  };
  std::map<std::string, CLI::Option*> given;
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    given[std::string(s.name) + ":--config"] = sub->add_option("--config", opt.config, "config file")->check(CLI::ExistingFile);
    given[std::string(s.name) + ":--seed"] = sub->add_option("--seed", opt.seed, "global seed (overrides the config)");
    given[std::string(s.name) + ":--out"] = sub->add_option("--out", opt.out, "output directory");
    auto path = [&](const char* flag, std::string& target, const char* help) {
      given[std::string(s.name) + ":" + flag] = sub->add_option(flag, target, help);
    };
    const std::string n = s.name;
    if (n == "synth") {
      path("--clean", opt.paths.clean_dir, "directory of clean images");
      path("--templates", opt.paths.template_dir, "directory of underwater templates");
    }
    if (n == "train-prompts" || n == "finetune" || n == "enhance" || n == "eval")
      path("--manifest", opt.paths.manifest, "dataset manifest");
    if (n == "finetune") path("--prompts", opt.paths.prompts, "prompt checkpoint");
    if (n == "enhance") path("--checkpoint", opt.paths.checkpoint, "fine-tuned checkpoint");
    if (n == "enhance" || n == "eval") path("--input", opt.paths.input_dir, "directory of input images");
    if (n == "eval") path("--reference", opt.paths.reference_dir, "directory of reference images");
  }

  std::vector<std::string> storage{"uwe"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << "run 'uwe --help' for usage\n";
    return kExitUsage;
  }

  const Sub* chosen = nullptr;
  for (const auto& s : subs)
    if (app.got_subcommand(s.name)) chosen = &s;
  const std::string name = chosen->name;
  auto was_given = [&](const char* flag) {
    auto it = given.find(name + ":" + flag);
    return it != given.end() && it->second->count() > 0;
  };

  try {
    RunConfig cfg = was_given("--config") ? load_config(opt.config) : RunConfig{};
    if (was_given("--seed")) cfg.seed = opt.seed;
    if (was_given("--out")) cfg.out_dir = opt.out;
    if (const char* env = std::getenv(kOutDirEnv); env && *env) cfg.out_dir = env;
    if (was_given("--clean")) cfg.paths.clean_dir = opt.paths.clean_dir;
    if (was_given("--templates")) cfg.paths.template_dir = opt.paths.template_dir;
    if (was_given("--manifest")) cfg.paths.manifest = opt.paths.manifest;
    if (was_given("--prompts")) cfg.paths.prompts = opt.paths.prompts;
    if (was_given("--checkpoint")) cfg.paths.checkpoint = opt.paths.checkpoint;
    if (was_given("--input")) cfg.paths.input_dir = opt.paths.input_dir;
    if (was_given("--reference")) cfg.paths.reference_dir = opt.paths.reference_dir;
    cfg.validate();

    out << "uwe " << name << "\nseed: " << cfg.seed << "\n# resolved config\n" << render_config(cfg) << "# end config\n";
    out.flush();
    require(!cfg.out_dir.empty(), Errc::config, "output directory is empty");
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    require(!ec && fs::is_directory(cfg.out_dir), Errc::io, "cannot create output directory " + cfg.out_dir);
    Context ctx{name, cfg, cfg.out_dir, out};
    return chosen->fn(ctx);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace uwe::cli
