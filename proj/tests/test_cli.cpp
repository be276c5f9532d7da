#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "support.hpp"
#include "uwe/checkpoint.hpp"
#include "uwe/cli.hpp"
#include "uwe/error.hpp"
#include "uwe/image_io.hpp"

using namespace uwe;
using namespace uwe::cli;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome call(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

Errc config_error_code(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::io;
}

const char* kToyConfig = R"([synthesis]
method = scatter

[schedule]
steps = 40

[optimizer]
steps = 12

[model]
patch = 16
denoiser_hidden = 8

[classifier]
width = 8
encoder_layers = 2
embed_dim = 8
tokens = 4
token_width = 8
text_hidden = 16

[prompts]
epochs = 10
trend_window = 3
)";

}  // namespace

TEST_CASE("config parsing") {
  const RunConfig d = parse_config("");
  CHECK(d.seed == 0);
  CHECK(d.loss.lambda1 == 0.6);
  CHECK(d.loss.lambda2 == 0.4);
  CHECK(d.steps == 2000);

  const RunConfig c = parse_config("; comment\n[run]\nseed = 42\n[loss]\nlambda1 = 0.5\n[schedule]\nsteps = 200\n");
  CHECK(c.seed == 42);
  CHECK(c.loss.lambda1 == 0.5);
  CHECK(c.schedule().T == 200);
  const auto matched = diffusion::make_matched_schedule(200);
  CHECK(c.schedule().beta == matched.beta);

  CHECK(config_error_code("[nope]\nx = 1\n") == Errc::config);
  CHECK(config_error_code("[run]\nsead = 1\n") == Errc::config);
  CHECK(config_error_code("seed = 1\n") == Errc::config);
  CHECK(config_error_code("[run]\nseed = -3\n") == Errc::config);
  CHECK(config_error_code("[loss]\nlambda1 = abc\n") == Errc::config);
  CHECK(config_error_code("[guidance]\nmode = sideways\n") == Errc::config);
  CHECK(config_error_code("[guidance]\nmode = lambda_blend\nlambda = 1.5\n") == Errc::config);
  CHECK(config_error_code("[run\nseed = 1\n") == Errc::config);
  CHECK(config_error_code("[metrics]\npsnr = maybe\n") == Errc::config);
}

TEST_CASE("rendered config parses back to itself") {
  RunConfig c = parse_config(kToyConfig);
  c.seed = 17;
  c.paths.manifest = "data/manifest.jsonl";
  c.beta_end = 0.02;
  const std::string text = render_config(c);
  CHECK(render_config(parse_config(text)) == text);
  const std::string portable = render_config(c, false);
  CHECK(portable.find("manifest") == std::string::npos);
  CHECK(portable.find("out_dir") == std::string::npos);
  CHECK(portable.find("seed = 17") != std::string::npos);
  for (const auto& k : documented_keys()) CHECK(!k.description.empty());
}

TEST_CASE("usage errors exit with 2") {
  CHECK(call({}).code == kExitUsage);
  CHECK(call({"bogus"}).code == kExitUsage);
  CHECK(call({"synth", "--seed", "x"}).code == kExitUsage);
  CHECK(call({"synth", "--config", "/nonexistent/uwe.ini"}).code == kExitUsage);
  CHECK(call({"--help"}).code == kExitOk);

  const fs::path dir = test::scratch_dir("cli_empty");
  fs::create_directories(dir / "clean");
  fs::create_directories(dir / "templates");
  const Outcome r = call({"synth", "--clean", (dir / "clean").string(), "--templates", (dir / "templates").string(),
                          "--out", (dir / "out").string()});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find((dir / "clean").string()) != std::string::npos);
  CHECK(r.out.find("seed: 0") != std::string::npos);
}

TEST_CASE("eval of identical pairs") {
  const fs::path dir = test::scratch_dir("cli_eval");
  fs::create_directories(dir / "a");
  fs::create_directories(dir / "b");
  for (int i = 0; i < 2; ++i) {
    const RgbImage img = test::checker_chart(64, 64, 4 + i);
    const std::string name = "img" + std::to_string(i) + ".png";
    save_image(img, dir / "a" / name);
    save_image(img, dir / "b" / name);
  }
  const Outcome r = call({"eval", "--input", (dir / "a").string(), "--reference", (dir / "b").string(), "--out",
                          (dir / "out").string(), "--seed", "3"});
  REQUIRE(r.code == kExitOk);
  const std::string tsv = slurp(dir / "out" / "metrics.tsv");
  CHECK(tsv.rfind("image\tPSNR\tSSIM\tUIQM\tUCIQE\tCPBD\n", 0) == 0);
  CHECK(tsv.find("img0.png\tinf\t1.0000\t") != std::string::npos);
  CHECK(tsv.find("mean\tinf\t1.0000\t") != std::string::npos);
  CHECK(slurp(dir / "out" / "metrics.md").find("∞") != std::string::npos);

  // Without references the full-reference columns are blank.
  REQUIRE(call({"eval", "--input", (dir / "a").string(), "--out", (dir / "out2").string()}).code == kExitOk);
  CHECK(slurp(dir / "out2" / "metrics.tsv").find("img1.png\t-\t-\t") != std::string::npos);
}

TEST_CASE("verify passes") {
  const fs::path dir = test::scratch_dir("cli_verify");
  const Outcome r = call({"verify", "--out", dir.string(), "--seed", "1"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(fs::exists(dir / "verify.txt"));
}

TEST_CASE("toy pipeline through every subcommand") {
  const fs::path dir = test::scratch_dir("cli_pipeline");
  const auto corpus = test::write_corpus(dir, 6, 64, 5);
  {
    std::ofstream f(dir / "toy.ini");
    f << kToyConfig;
  }
  const std::string cfg = (dir / "toy.ini").string(), out = (dir / "run").string();
  auto step = [&](std::vector<std::string> args) {
    const Outcome r = call(args);
    INFO(r.err);
    REQUIRE(r.code == kExitOk);
    CHECK(r.out.find("seed: 9") != std::string::npos);
    return r;
  };
  step({"synth", "--config", cfg, "--seed", "9", "--out", out, "--clean", corpus.clean_dir.string(), "--templates",
        corpus.template_dir.string()});
  const std::string manifest = out + "/manifest.jsonl";
  step({"train-prompts", "--config", cfg, "--seed", "9", "--out", out, "--manifest", manifest});
  step({"finetune", "--config", cfg, "--seed", "9", "--out", out, "--manifest", manifest, "--prompts",
        out + "/prompts.ckpt"});
  CHECK(read_checkpoint(out + "/prompts.ckpt").kind == "prompts");
  const Checkpoint ft = read_checkpoint(out + "/finetune.ckpt");
  CHECK(ft.kind == "finetune");
  CHECK(ft.config_echo.find(dir.string()) == std::string::npos);

  std::size_t lines = 0;
  std::istringstream log(slurp(out + "/train_log.jsonl"));
  for (std::string l; std::getline(log, l);) ++lines;
  CHECK(lines == 12);

  step({"enhance", "--config", cfg, "--seed", "9", "--out", out, "--checkpoint", out + "/finetune.ckpt",
        "--manifest", manifest});
  const auto enhanced = synthesis::list_images(out + "/enhanced");
  CHECK(enhanced.size() == 6);
  step({"eval", "--config", cfg, "--seed", "9", "--out", out, "--input", out + "/enhanced", "--manifest", manifest});
  CHECK(slurp(out + "/metrics.tsv").find("\t-\t") == std::string::npos);

  // An explicit input directory takes precedence over the manifest.
  const Outcome direct = call({"enhance", "--config", cfg, "--seed", "9", "--out", out, "--checkpoint",
                            out + "/finetune.ckpt", "--manifest", manifest, "--input", corpus.clean_dir.string()});
  CHECK(direct.code == kExitOk);
  CHECK(fs::exists(out + "/enhanced/scene_000.png"));

  // A different schedule than the one trained with is rejected.
  std::ofstream(dir / "other.ini") << "[schedule]\nsteps = 30\n";
  const Outcome mismatch = call({"enhance", "--config", (dir / "other.ini").string(), "--out", out, "--checkpoint",
                                 out + "/finetune.ckpt", "--input", corpus.clean_dir.string()});
  CHECK(mismatch.code == kExitUsage);
  CHECK(mismatch.err.find("[schedule]") != std::string::npos);
}

TEST_CASE("output directory from the environment wins") {
  const fs::path dir = test::scratch_dir("cli_env");
  ::setenv(kOutDirEnv, (dir / "env").string().c_str(), 1);
  const Outcome r = call({"verify", "--out", (dir / "flag").string()});
  ::unsetenv(kOutDirEnv);
  CHECK(r.code == kExitOk);
  CHECK(fs::exists(dir / "env" / "verify.txt"));
  CHECK(!fs::exists(dir / "flag"));
}
