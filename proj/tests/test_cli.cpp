#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "defcor/calib.hpp"
#include "defcor/checkpoint.hpp"
#include "defcor/image.hpp"
#include "helpers.hpp"

using namespace defcor;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(DEFCOR_CLI_PATH) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p);
  std::string out;
  char buf[4096];
  while (size_t n = fread(buf, 1, sizeof buf, p)) out.append(buf, n);
  const int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kTinyConfig = R"({"seed": 11,
  "synth": {"image_sets": 4, "train_sets": 2, "val_sets": 1, "width": 32, "height": 48, "force_bins": [3, 6]},
  "train": {"steps": 2, "batch_size": 1, "widths": [2, 2, 2], "checkpoint_interval": 0, "validation_interval": 1},
  "eval": {"force_bins": [3, 6]}})";

}  // namespace

TEST_CASE("synth is deterministic and guards its output directory") {
  const auto dir = testutil::temp_dir("cli_synth");
  std::ofstream(dir / "cfg.json") << kTinyConfig;
  const auto cfg = (dir / "cfg.json").string();
  REQUIRE(cli("synth --config " + cfg + " --out " + (dir / "a").string()).code == 0);
  REQUIRE(cli("synth --config " + cfg + " --out " + (dir / "b").string()).code == 0);
  CHECK(slurp(dir / "a" / "manifest.json") == slurp(dir / "b" / "manifest.json"));
  CHECK(fs::exists(dir / "a" / "config.json"));
  int files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    CHECK(slurp(e.path()) == slurp(dir / "b" / fs::relative(e.path(), dir / "a")));
  }
  CHECK(files > 10);

  const auto refused = cli("synth --config " + cfg + " --out " + (dir / "a").string());
  CHECK(refused.code != 0);
  CHECK(refused.out.find("error:") != std::string::npos);
  CHECK(cli("synth --force --config " + cfg + " --out " + (dir / "a").string()).code == 0);

  // --seed overrides the config seed.
  REQUIRE(cli("synth --config " + cfg + " --seed 12 --out " + (dir / "c").string()).code == 0);
  CHECK(slurp(dir / "a" / "manifest.json") != slurp(dir / "c" / "manifest.json"));
  fs::remove_all(dir);
}

TEST_CASE("calib, flowviz, correct, train and eval") {
  const auto dir = testutil::temp_dir("cli_all");

  PalpationTrace tr;
  for (int i = 0; i < 20; ++i) tr.samples.push_back({0.1 * i, 0.25 * i, 1.6 * 0.25 * i + 0.3});
  write_palpation_csv(dir / "trace.csv", tr);
  const auto cal = cli("calib --trace " + (dir / "trace.csv").string());
  REQUIRE(cal.code == 0);
  CHECK(cal.out.find("c2 1.6") != std::string::npos);
  CHECK(cal.out.find("r2 1") != std::string::npos);

  write_dff(dir / "zero.dff", FlowField(10, 8));
  REQUIRE(cli("flowviz --flow " + (dir / "zero.dff").string() + " --out " + (dir / "z.ppm").string()).code == 0);
  const auto rgb = read_ppm(dir / "z.ppm");
  for (const auto& c : rgb.data) CHECK(c == Rgb{255, 255, 255});

  std::ofstream(dir / "cfg.json") << kTinyConfig;
  const auto cfg = (dir / "cfg.json").string();
  const auto data = (dir / "data").string();
  REQUIRE(cli("synth --config " + cfg + " --out " + data).code == 0);
  const auto ckpt = (dir / "model.ckpt").string();
  const auto tr_run = cli("train --config " + cfg + " --data " + data + " --out " + ckpt);
  INFO(tr_run.out);
  REQUIRE(tr_run.code == 0);
  CHECK(fs::exists(ckpt));
  CHECK(fs::exists(ckpt + ".best"));
  CHECK(fs::exists(ckpt + ".metrics.csv"));
  CHECK(load_checkpoint(ckpt).step == 2);

  const auto img = testutil::random_image(32, 48, 4);
  write_pgm(dir / "in.pgm", quantize(img));
  const std::string base = "correct --ckpt " + ckpt + " --image " + (dir / "in.pgm").string() + " --palpation " +
                           (dir / "trace.csv").string();
  REQUIRE(cli(base + " --force-n 0 --out " + (dir / "o0.pgm").string() + " --flow-out " +
              (dir / "f0.dff").string())
              .code == 0);
  CHECK(slurp(dir / "o0.pgm") == slurp(dir / "in.pgm"));
  for (const auto& v : read_dff(dir / "f0.dff").dx.data) CHECK(v == 0.0);
  REQUIRE(cli(base + " --force-n 4 --out " + (dir / "o4.pgm").string() + " --flow-out " +
              (dir / "f4.dff").string())
              .code == 0);
  CHECK(read_pgm(dir / "o4.pgm").width() == 32);
  CHECK(fs::exists(dir / "f4.dff"));
  CHECK(cli(base + " --force-n 4 --out " + (dir / "bad.pgm").string() + " --image /nonexistent.pgm").code != 0);

  const auto ev = cli("eval --config " + cfg + " --data " + data + " --predictor gt --out " + (dir / "rep").string());
  INFO(ev.out);
  REQUIRE(ev.code == 0);
  const auto report = slurp(dir / "rep" / "report.csv");
  CHECK(report.find("all,epe_mean,0,0,") != std::string::npos);
  CHECK(fs::exists(dir / "rep" / "error_maps"));
  CHECK(cli("eval --config " + cfg + " --data " + data + " --predictor model --ckpt " + ckpt + " --out " +
            (dir / "rep2").string())
            .code == 0);
  CHECK(cli("eval --data " + data + " --predictor model --out " + (dir / "rep3").string()).code != 0);
  CHECK(cli("bogus").code != 0);
  fs::remove_all(dir);
}
