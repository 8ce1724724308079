#include "testing.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "condvc/commands.hpp"
#include "condvc/errors.hpp"
#include "condvc/run_config.hpp"

using namespace condvc;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("condvc_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) { std::ofstream(path) << text; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Run {
  int code;
  std::string err;
};

Run run_cli(const std::string& args, const fs::path& dir) {
  const auto err = dir / "stderr.txt";
  const std::string cmd = std::string(CONDVC_CLI_PATH) + " " + args + " >" + (dir / "stdout.txt").string() + " 2>" +
                          err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

ErrorCategory category_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.category();
  }
  FAIL("expected condvc::Error");
  return ErrorCategory::kUsage;
}

}  // namespace

TEST_CASE("run config round-trips through json") {
  RunConfig a;
  a.codec.lambda = 512.0;
  a.train.batch_size = 8;
  a.augment.p_shuffle = 0.25;
  a.eval.datasets = {"uvg", "mcl"};
  a.io.seed = 42;
  const auto b = RunConfig::from_json(a.to_json());
  CHECK(b.to_json() == a.to_json());
  CHECK(b.train.lambda == 512.0);
  CHECK(b.train.seed == 42u);
}

TEST_CASE("unknown keys and wrong types are rejected by name") {
  auto expect = [](const nlohmann::json& j, const std::string& needle) {
    try {
      RunConfig::from_json(j);
      FAIL("expected a config error");
    } catch (const Error& e) {
      CHECK(e.category() == ErrorCategory::kConfig);
      CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, e.what());
    }
  };
  expect({{"train", {{"batchsize", 4}}}}, "train.batchsize");
  expect({{"bogus", 1}}, "bogus");
  expect({{"train", {{"batch_size", "four"}}}}, "train.batch_size");
  expect({{"codec", {{"entropy_family", "cauchy"}}}}, "codec.entropy_family");
}

TEST_CASE("overrides parse json values and keep strings") {
  auto tree = RunConfig{}.to_json();
  apply_override(tree, "train.batch_size=16");
  apply_override(tree, "io.checkpoint_dir=/tmp/x");
  apply_override(tree, "train.index=123");
  CHECK(tree["train"]["batch_size"] == 16);
  CHECK(tree["io"]["checkpoint_dir"] == "/tmp/x");
  CHECK(tree["train"]["index"] == "123");
  CHECK(category_of([&] { apply_override(tree, "train.nope=1"); }) == ErrorCategory::kConfig);
  CHECK(category_of([&] { apply_override(tree, "train=1"); }) == ErrorCategory::kConfig);
  CHECK(category_of([&] { apply_override(tree, "novalue"); }) == ErrorCategory::kUsage);
}

TEST_CASE("config files accept comments and validate") {
  const auto dir = scratch_dir("files");
  write_text(dir / "ok.json", "{\n  // smaller batches\n  \"train\": {\"batch_size\": 2}\n}\n");
  CHECK(load_run_config(dir / "ok.json", {}).train.batch_size == 2);
  write_text(dir / "bad.json", "{\"codec\": {\"lambda\": -3}}");
  CHECK(category_of([&] { load_run_config(dir / "bad.json", {}); }) == ErrorCategory::kConfig);
  write_text(dir / "broken.json", "{");
  CHECK(category_of([&] { load_run_config(dir / "broken.json", {}); }) == ErrorCategory::kConfig);
  CHECK(category_of([&] { load_run_config(dir / "missing.json", {}); }) == ErrorCategory::kIo);
}

TEST_CASE("resolution parsing") {
  CHECK(parse_resolution("1920x1080") == std::pair<int64_t, int64_t>{1920, 1080});
  for (const char* bad : {"1920", "x1080", "0x10", "12x", "axb", "10x10x"}) {
    CHECK_MESSAGE(category_of([&] { parse_resolution(bad); }) == ErrorCategory::kUsage, bad);
  }
}

TEST_CASE("device selection accepts cpu only") {
  ::setenv("CONDVC_DEVICE", "cuda", 1);
  CHECK(category_of([] { select_device(); }) == ErrorCategory::kConfig);
  ::setenv("CONDVC_DEVICE", "cpu", 1);
  CHECK(select_device().is_cpu());
  ::unsetenv("CONDVC_DEVICE");
}

TEST_CASE("exit codes follow the error category") {
  const auto dir = scratch_dir("exit");
  CHECK(run_cli("", dir).code == 2);
  CHECK(run_cli("frobnicate", dir).code == 2);

  auto r = run_cli("train --set train.nope=1", dir);
  CHECK(r.code == 3);
  CHECK(r.err.rfind("error[config]:", 0) == 0);

  r = run_cli("eval --checkpoint " + (dir / "none.ckpt").string() + " " + dir.string(), dir);
  CHECK(r.code == 4);
  CHECK(r.err.rfind("error[io]:", 0) == 0);

  write_text(dir / "a.csv", "lambda,bpp,psnr\n1,0.1,30\n2,0.2,32\n");
  r = run_cli("bdrate --pair x " + (dir / "a.csv").string() + " " + (dir / "a.csv").string(), dir);
  CHECK(r.code == 9);
  CHECK(r.err.rfind("error[bdrate]:", 0) == 0);

  write_text(dir / "bad.csv", "lambda,bpp,psnr\n1,zero,30\n");
  CHECK(run_cli("plot " + (dir / "bad.csv").string() + " -o " + (dir / "p.svg").string(), dir).code == 5);
  CHECK(run_cli("profile --resolution 12", dir).code == 2);
}

TEST_CASE("bdrate and plot commands write their outputs") {
  const auto dir = scratch_dir("outputs");
  write_text(dir / "anchor.csv", "lambda,bpp,psnr\n256,0.05,32\n512,0.1,35\n1024,0.2,38\n2048,0.4,41\n");
  write_text(dir / "test.csv", "lambda,bpp,psnr\n256,0.1,32\n512,0.2,35\n1024,0.4,38\n2048,0.8,41\n");
  auto r = run_cli("bdrate --pair uvg " + (dir / "anchor.csv").string() + " " + (dir / "test.csv").string() +
                       " --out " + (dir / "report.json").string(),
                   dir);
  REQUIRE(r.code == 0);
  const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
  CHECK(report.at("bd_rate_percent").at("uvg").get<double>() == doctest::Approx(100.0).epsilon(1e-9));
  CHECK(slurp(dir / "stdout.txt").find("Average") != std::string::npos);

  r = run_cli("plot " + (dir / "anchor.csv").string() + " " + (dir / "test.csv").string() + " -o " +
                  (dir / "rd.svg").string() + " -o " + (dir / "rd.png").string(),
              dir);
  CHECK(r.code == 0);
  CHECK(fs::file_size(dir / "rd.svg") > 0);
  CHECK(fs::file_size(dir / "rd.png") > 0);
}

TEST_CASE("train, resume, eval and profile on a tiny synthetic run") {
  const auto dir = scratch_dir("pipeline");
  REQUIRE(run_cli("synth " + (dir / "data").string() + " --clips 5 --frames 3 --size 64 --seed 1", dir).code == 0);
  auto cfg = RunConfig{}.to_json();
  cfg["codec"] = codec_config_to_json(CodecConfig::toy());
  cfg["train"]["index"] = (dir / "data" / "index.txt").string();
  cfg["train"]["crop"] = 64;
  cfg["train"]["batch_size"] = 2;
  cfg["train"]["val_clips"] = 1;
  cfg["io"]["checkpoint_dir"] = (dir / "ckpt").string();
  cfg["io"]["metrics_dir"] = (dir / "metrics").string();
  write_text(dir / "config.json", cfg.dump(2));
  const auto config = " -c " + (dir / "config.json").string();

  REQUIRE(run_cli("train" + config + " --stage me --max-steps 2", dir).code == 0);
  CHECK(fs::exists(dir / "ckpt" / "latest.ckpt"));
  CHECK(fs::exists(dir / "metrics" / "train.jsonl"));

  REQUIRE(run_cli("train" + config + " --stage me --resume", dir).code == 0);
  CHECK(slurp(dir / "stdout.txt").find("nothing to do") != std::string::npos);

  // Finetuning needs stage all.
  CHECK(run_cli("finetune" + config + " --max-steps 1", dir).code == 2);

  const auto ckpt = (dir / "ckpt" / "latest.ckpt").string();
  const auto seq = (dir / "data" / "clip_0000").string();
  REQUIRE(run_cli("eval --checkpoint " + ckpt + " " + seq + " --frames 3 --intra-period 2 -o " +
                      (dir / "eval").string(),
                  dir)
              .code == 0);
  const auto metrics = slurp(dir / "eval" / "metrics.jsonl");
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 3);
  CHECK(metrics.find("encode_time_s") == std::string::npos);
  CHECK(fs::exists(dir / "eval" / "summary.csv"));
  CHECK(fs::exists(dir / "eval" / "rd_point.csv"));

  const auto r = run_cli("profile --checkpoint " + ckpt + " --resolution 64x64 --warmup 1 --runs 2 --out " +
                             (dir / "profile.json").string(),
                         dir);
  REQUIRE(r.code == 0);
  const auto profile = nlohmann::json::parse(slurp(dir / "profile.json"));
  CHECK(profile.at("parameter_count").get<int64_t>() > 0);
  CHECK(profile.at("mean_time_s").get<double>() > 0.0);
}
