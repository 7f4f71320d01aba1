#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

#include "helpers.hpp"
#include "symlabel/scenegen.hpp"
#include "symlabel/so3.hpp"

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(SYMLABEL_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("cli exit codes") {
  CHECK(run("--help") == 0);
  CHECK(run("frobnicate") == 2);
  CHECK(run("grid --level 9 --out /dev/null") == 2);
  CHECK(run("eval --model /nonexistent --dataset /nonexistent") == 2);
}

TEST_CASE("cli grid") {
  const auto dir = testing::temp_dir("cli_grid");
  REQUIRE(run("grid --level 2 --out " + (dir / "g.bin").string()) == 0);
  CHECK(symlabel::read_grid(dir / "g.bin").size() == 4608);
  CHECK(std::filesystem::exists(dir / "g.bin.manifest.json"));
}

TEST_CASE("cli synth, train, eval, infer, viz") {
  const auto dir = testing::temp_dir("cli_flow");
  const std::string d = dir.string();
  std::ofstream(dir / "cfg.json") << R"({"network": {"extractor": "pool", "image_size": 16, "feature_dim": 8,
    "hidden": [16]}, "training": {"train_grid_level": 0}, "eval": {"grid_level": 1}})";
  const std::string cfg = "--config " + d + "/cfg.json ";
  REQUIRE(run(cfg + "synth --shape can --n 6 --out " + d + "/ds") == 0);
  REQUIRE(run(cfg + "train --dataset " + d + "/ds --gt-mode single --epochs 1 --iterations 2 --batch 2 --out " + d +
              "/m.ipdf") == 0);
  REQUIRE(run(cfg + "eval --model " + d + "/m.ipdf --dataset " + d + "/ds --split all --out " + d + "/e.json") == 0);
  const auto e = nlohmann::json::parse(testing::slurp(dir / "e.json"));
  CHECK(e.contains("llh"));
  CHECK(e.contains("recall_maad"));
  const std::string frame = symlabel::frame_id_for(symlabel::Shape::kCan, 0);
  CHECK(run(cfg + "infer --model " + d + "/m.ipdf --dataset " + d + "/ds --frame " + frame + " --mode --out " + d +
            "/mode.json") == 0);
  CHECK(nlohmann::json::parse(testing::slurp(dir / "mode.json")).contains("rotation_wxyz"));
  CHECK(run(cfg + "viz --model " + d + "/m.ipdf --dataset " + d + "/ds --frame " + frame + " --gt analytic --out " +
            d + "/v.svg") == 0);
  CHECK(testing::slurp(dir / "v.svg").find("<g id=\"gt\"") != std::string::npos);
  CHECK(run(cfg + "infer --model " + d + "/m.ipdf --dataset " + d + "/ds --frame nope") == 3);
  // Unknown config keys are usage errors.
  std::ofstream(dir / "bad.json") << R"({"netwrk": {}})";
  CHECK(run("--config " + d + "/bad.json grid --out " + d + "/g.bin") == 2);
  CHECK(run(cfg + "eval --model " + d + "/m.ipdf --dataset " + d + "/ds --gt " + d + "/missing.json") == 3);
}
