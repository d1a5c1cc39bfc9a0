// End-to-end checks of the mspn binary: exit codes, artifacts, determinism and
// the render quantization contract. The binary path comes from the build system.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mspn/checkpoint.hpp"
#include "mspn/config.hpp"
#include "mspn/image_io.hpp"
#include "mspn/network.hpp"

using namespace mspn;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MSPN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return (status >= 0 && WIFEXITED(status)) ? WEXITSTATUS(status) : -1;
}

fs::path temp_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("mspn_cli_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_toy_config(const fs::path& dir, bool with_max_steps = false) {
  nlohmann::json j{
      {"seed", 11},
      {"precision", "float"},
      {"data",
       {{"kind", "synthetic"},
        {"count_train", 8},
        {"count_test", 4},
        {"digits", 1},
        {"canvas", {16, 16}},
        {"seq_len", 5},
        {"vel_min", 1.0},
        {"vel_max", 2.0}}},
      {"model", {{"levels", 2}, {"hidden", 4}, {"bottleneck", 8}}},
      {"train",
       {{"epochs", 2}, {"batch_size", 4}, {"context", 3}, {"horizon", 2}, {"lr_g", 1e-3},
        {"eval_batch", 4}}}};
  if (with_max_steps) j["train"]["max_steps"] = 2;
  const fs::path path = dir / "config.json";
  std::ofstream(path) << j.dump(2);
  return path;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("help exits zero, bad usage exits one") {
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("no-such-command") == 1);
  CHECK(run_cli("train") == 1);                       // missing required --config
  CHECK(run_cli("eval") == 1);                        // missing required --checkpoint
}

TEST_CASE("gen-data is deterministic and writes a manifest") {
  auto dir = temp_dir("gen");
  auto cfg = write_toy_config(dir);
  auto out1 = dir / "out1";
  auto out2 = dir / "out2";
  CHECK(run_cli("gen-data --config " + cfg.string() + " --out " + out1.string()) == 0);
  CHECK(run_cli("gen-data --config " + cfg.string() + " --out " + out2.string()) == 0);
  REQUIRE(fs::exists(out1 / "manifest.json"));
  CHECK(fs::exists(out1 / "config.resolved.json"));
  CHECK(fs::exists(out1 / "train" / "seq_00000" / "frame_000.pgm"));
  CHECK(slurp(out1 / "manifest.json") == slurp(out2 / "manifest.json"));
  // byte-identical frames across runs
  CHECK(slurp(out1 / "train" / "seq_00003" / "frame_002.pgm") ==
        slurp(out2 / "train" / "seq_00003" / "frame_002.pgm"));
  fs::remove_all(dir);
}

TEST_CASE("unknown device is a usage error") {
  auto dir = temp_dir("device");
  auto cfg = write_toy_config(dir);
  CHECK(run_cli("gen-data --config " + cfg.string() + " --out " + (dir / "o").string() + " --device gpu") ==
        1);
  fs::remove_all(dir);
}

TEST_CASE("missing dataset path gives an actionable usage error") {
  auto dir = temp_dir("nopath");
  auto cfg = write_toy_config(dir);
  CHECK(run_cli("train --config " + cfg.string() + " --out " + (dir / "o").string() +
                " --override data.kind=directory") == 1);
  fs::remove_all(dir);
}

TEST_CASE("train / eval / predict / render pipeline") {
  auto dir = temp_dir("pipeline");
  auto cfg = write_toy_config(dir);
  auto out = dir / "run";
  REQUIRE(run_cli("train --config " + cfg.string() + " --out " + out.string()) == 0);
  REQUIRE(fs::exists(out / "latest.mspnckpt"));
  CHECK(fs::exists(out / "train_log.jsonl"));
  CHECK(fs::exists(out / "config.resolved.json"));
  const std::string ck = (out / "latest.mspnckpt").string();

  SUBCASE("eval writes a report and unknown checkpoints fail") {
    auto eval_out = dir / "eval";
    CHECK(run_cli("eval --checkpoint " + ck + " --out " + eval_out.string()) == 0);
    REQUIRE(fs::exists(eval_out / "report.jsonl"));
    std::ifstream f(eval_out / "report.jsonl");
    std::string line, last;
    int lines = 0;
    while (std::getline(f, line))
      if (!line.empty()) {
        last = line;
        ++lines;
      }
    CHECK(lines == 2 + 1);  // horizon 2 steps + summary
    CHECK(nlohmann::json::parse(last)["kind"] == "summary");
    CHECK(run_cli("eval --checkpoint " + (dir / "nope.mspnckpt").string() + " --out " +
                  (dir / "e2").string()) == 1);
  }

  SUBCASE("predict dumps frames; render writes grid and animation") {
    auto pred_out = dir / "pred";
    CHECK(run_cli("predict --checkpoint " + ck + " --sequence 1 --out " + pred_out.string()) == 0);
    CHECK(fs::exists(pred_out / "pred_000.ppm"));
    CHECK(fs::exists(pred_out / "pred_001.ppm"));
    CHECK(fs::exists(pred_out / "gt_001.ppm"));

    auto render_out = dir / "render";
    CHECK(run_cli("render --checkpoint " + ck + " --sequence 1 --out " + render_out.string()) == 0);
    CHECK(fs::exists(render_out / "grid.png"));
    CHECK(fs::exists(render_out / "grid.ppm"));
    CHECK(fs::exists(render_out / "anim.gif"));
    {
      // two rows (ground truth over prediction) x horizon columns, 2px padding
      Image8 grid = read_pnm(render_out / "grid.ppm");
      CHECK(grid.h == 2 * 16 + 3 * 2);
      CHECK(grid.w == 2 * 16 + 3 * 2);  // horizon 2 columns of 16px frames
    }

    // quantization oracle: the dumped prediction equals the rollout output
    // quantized by round-half-even
    auto loaded = Checkpoint<float>::load(ck);
    RunConfig rc = RunConfig::from_json(nlohmann::json::parse(loaded.config_json));
    MovingDigitsConfig dc;
    dc.digits_per_frame = rc.data.digits;
    dc.canvas_h = rc.data.canvas_h;
    dc.canvas_w = rc.data.canvas_w;
    dc.seq_len = rc.data.seq_len;
    dc.vel_min = rc.data.vel_min;
    dc.vel_max = rc.data.vel_max;
    dc.seed = rc.seed;
    auto splits = make_synthetic_splits(dc, rc.data.count_train, rc.data.count_test);
    MSPN<float> model(rc.model, rc.seed);
    auto params = model.parameters();
    loaded.load_params("model", params);
    std::vector<Tensor<float>> frames;
    for (const auto& img : splits.test.sequence(1)) frames.push_back(image_to_tensor<float>(img));
    NoGradGuard ng;
    auto roll = model.rollout(frames, rc.train.context, rc.train.horizon, RolloutMode::predicted_feedback);
    for (int j = 0; j < rc.train.horizon; ++j) {
      char name[32];
      std::snprintf(name, sizeof(name), "pred_%03d.ppm", j);
      Image8 from_cli = read_pnm(pred_out / name);
      Image8 expect = tensor_to_image(roll.horizon_preds[std::size_t(j)].value());
      CHECK(image_hash(from_cli) == image_hash(expect));
    }

    // deterministic re-render
    auto render_out2 = dir / "render2";
    CHECK(run_cli("render --checkpoint " + ck + " --sequence 1 --out " + render_out2.string()) == 0);
    CHECK(slurp(render_out / "grid.ppm") == slurp(render_out2 / "grid.ppm"));
  }

  SUBCASE("out-of-range sequence index is a usage error") {
    CHECK(run_cli("predict --checkpoint " + ck + " --sequence 99 --out " + (dir / "p2").string()) == 1);
  }
  fs::remove_all(dir);
}

TEST_CASE("interrupted training resumes and continues the step counter") {
  auto dir = temp_dir("resume");
  auto cfg_short = write_toy_config(dir, true);  // max_steps = 2 of epochs 2
  auto out = dir / "run";
  REQUIRE(run_cli("train --config " + cfg_short.string() + " --out " + out.string()) == 0);
  {
    auto ck = Checkpoint<float>::load(out / "latest.mspnckpt");
    CHECK(ck.global_step == 2);
    CHECK(ck.epoch == 1);
  }
  // lift the cap and resume to completion
  REQUIRE(run_cli("train --config " + cfg_short.string() + " --out " + out.string() +
                  " --override train.max_steps=0 --resume latest") == 0);
  auto ck = Checkpoint<float>::load(out / "latest.mspnckpt");
  CHECK(ck.global_step == 4);  // 8 sequences / batch 4 = 2 steps per epoch, 2 epochs
  CHECK(ck.epoch == 2);
  fs::remove_all(dir);
}
