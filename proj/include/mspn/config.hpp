// Run configuration: JSON schema, key=value overrides, validation and the
// canonical fingerprint used by checkpoints and reports.
#pragma once

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "mspn/data.hpp"
#include "mspn/network.hpp"

namespace mspn {

struct DataConfig {
  std::string kind = "synthetic";  // synthetic | directory
  // synthetic
  int count_train = 100, count_test = 20;
  int digits = 2;
  int canvas_h = 64, canvas_w = 64;
  int seq_len = 20;
  double vel_min = 1.0, vel_max = 3.0;
  std::string idx_images, idx_labels;
  // directory
  std::string path;
  int resize_h = 0, resize_w = 0;
  int stride = 10;
  double train_fraction = 0.9;
};

struct TrainSettings {
  int epochs = 2;
  int batch_size = 4;
  int context = 10;
  int horizon = 10;
  double lr_g = 1e-3;            // generator learning rate
  double lr_d = 1e-8;            // discriminator learning rate (middle of the 1e-7..1e-9 range)
  double lambda_adv = 100.0;
  bool adversarial = false;
  bool long_term = false;        // predicted-feedback rollouts in the second half of training
  int guard = 200;               // per-phase update limit
  double ema_decay = 0.9;        // smoothing of the real score driving the tolerances
  int eval_every = 0;            // optimizer steps between eval snapshots; 0 disables
  int eval_sequences = 0;        // 0 = full test split
  int eval_batch = 8;
  long max_steps = 0;            // 0 = no cap
  double max_seconds = 0;        // 0 = no cap
  int disc_base = 16;
  int disc_stages = 4;
  bool disc_norm = false;        // normalization hook in the score head
  int checkpoint_every = 1;      // epochs between checkpoints
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string precision = "float";  // float | double
  DataConfig data;
  ModelConfig model;
  TrainSettings train;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["precision"] = precision;
    auto& d = j["data"];
    d["kind"] = data.kind;
    d["count_train"] = data.count_train;
    d["count_test"] = data.count_test;
    d["digits"] = data.digits;
    d["canvas"] = {data.canvas_h, data.canvas_w};
    d["seq_len"] = data.seq_len;
    d["vel_min"] = data.vel_min;
    d["vel_max"] = data.vel_max;
    d["idx_images"] = data.idx_images;
    d["idx_labels"] = data.idx_labels;
    d["path"] = data.path;
    d["resize"] = {data.resize_h, data.resize_w};
    d["stride"] = data.stride;
    d["train_fraction"] = data.train_fraction;
    auto& m = j["model"];
    m["levels"] = model.levels;
    m["hidden"] = model.hidden_channels;
    m["bottleneck"] = model.bottleneck_channels;
    m["kernel"] = model.kernel;
    m["downsample"] = to_string(model.downsample);
    m["codec_norm"] = to_string(model.codec_norm);
    auto& t = j["train"];
    t["epochs"] = train.epochs;
    t["batch_size"] = train.batch_size;
    t["context"] = train.context;
    t["horizon"] = train.horizon;
    t["lr_g"] = train.lr_g;
    t["lr_d"] = train.lr_d;
    t["lambda_adv"] = train.lambda_adv;
    t["adversarial"] = train.adversarial;
    t["long_term"] = train.long_term;
    t["guard"] = train.guard;
    t["ema_decay"] = train.ema_decay;
    t["eval_every"] = train.eval_every;
    t["eval_sequences"] = train.eval_sequences;
    t["eval_batch"] = train.eval_batch;
    t["max_steps"] = train.max_steps;
    t["max_seconds"] = train.max_seconds;
    t["disc_base"] = train.disc_base;
    t["disc_stages"] = train.disc_stages;
    t["disc_norm"] = train.disc_norm;
    t["checkpoint_every"] = train.checkpoint_every;
    return j;
  }

  static RunConfig from_json(const nlohmann::json& j) {
    RunConfig c;
    c.seed = j.value("seed", std::uint64_t(1));
    c.precision = j.value("precision", std::string("float"));
    if (j.contains("data")) {
      const auto& d = j.at("data");
      c.data.kind = d.value("kind", c.data.kind);
      c.data.count_train = d.value("count_train", c.data.count_train);
      c.data.count_test = d.value("count_test", c.data.count_test);
      c.data.digits = d.value("digits", c.data.digits);
      if (d.contains("canvas")) {
        c.data.canvas_h = d.at("canvas").at(0).get<int>();
        c.data.canvas_w = d.at("canvas").at(1).get<int>();
      }
      c.data.seq_len = d.value("seq_len", c.data.seq_len);
      c.data.vel_min = d.value("vel_min", c.data.vel_min);
      c.data.vel_max = d.value("vel_max", c.data.vel_max);
      c.data.idx_images = d.value("idx_images", c.data.idx_images);
      c.data.idx_labels = d.value("idx_labels", c.data.idx_labels);
      c.data.path = d.value("path", c.data.path);
      if (d.contains("resize")) {
        c.data.resize_h = d.at("resize").at(0).get<int>();
        c.data.resize_w = d.at("resize").at(1).get<int>();
      }
      c.data.stride = d.value("stride", c.data.stride);
      c.data.train_fraction = d.value("train_fraction", c.data.train_fraction);
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      c.model.levels = m.value("levels", c.model.levels);
      c.model.hidden_channels = m.value("hidden", c.model.hidden_channels);
      c.model.bottleneck_channels = m.value("bottleneck", c.model.bottleneck_channels);
      c.model.kernel = m.value("kernel", c.model.kernel);
      const std::string ds = m.value("downsample", std::string("average"));
      if (ds == "average")
        c.model.downsample = DownsampleOp::average;
      else if (ds == "subsample")
        c.model.downsample = DownsampleOp::subsample;
      else
        throw InputError("config: unknown downsample operator '" + ds + "'");
      const std::string nk = m.value("codec_norm", std::string("none"));
      if (nk == "none")
        c.model.codec_norm = NormKind::none;
      else if (nk == "instance")
        c.model.codec_norm = NormKind::instance;
      else
        throw InputError("config: unknown codec_norm '" + nk + "'");
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      c.train.epochs = t.value("epochs", c.train.epochs);
      c.train.batch_size = t.value("batch_size", c.train.batch_size);
      c.train.context = t.value("context", c.train.context);
      c.train.horizon = t.value("horizon", c.train.horizon);
      c.train.lr_g = t.value("lr_g", c.train.lr_g);
      c.train.lr_d = t.value("lr_d", c.train.lr_d);
      c.train.lambda_adv = t.value("lambda_adv", c.train.lambda_adv);
      c.train.adversarial = t.value("adversarial", c.train.adversarial);
      c.train.long_term = t.value("long_term", c.train.long_term);
      c.train.guard = t.value("guard", c.train.guard);
      c.train.ema_decay = t.value("ema_decay", c.train.ema_decay);
      c.train.eval_every = t.value("eval_every", c.train.eval_every);
      c.train.eval_sequences = t.value("eval_sequences", c.train.eval_sequences);
      c.train.eval_batch = t.value("eval_batch", c.train.eval_batch);
      c.train.max_steps = t.value("max_steps", c.train.max_steps);
      c.train.max_seconds = t.value("max_seconds", c.train.max_seconds);
      c.train.disc_base = t.value("disc_base", c.train.disc_base);
      c.train.disc_stages = t.value("disc_stages", c.train.disc_stages);
      c.train.disc_norm = t.value("disc_norm", c.train.disc_norm);
      c.train.checkpoint_every = t.value("checkpoint_every", c.train.checkpoint_every);
    }
    c.validate();
    return c;
  }

  void validate() const {
    if (precision != "float" && precision != "double")
      throw InputError("config: precision must be 'float' or 'double'");
    if (data.kind != "synthetic" && data.kind != "directory")
      throw InputError("config: data.kind must be 'synthetic' or 'directory'");
    if (model.levels < 1) throw InputError("config: model.levels must be >= 1");
    if (model.hidden_channels < 1 || model.bottleneck_channels < 1)
      throw InputError("config: model channel counts must be positive");
    if (train.context < 1 || train.horizon < 0)
      throw InputError("config: train.context must be >= 1 and train.horizon >= 0");
    if (data.kind == "synthetic") {
      const int div = 1 << model.levels;
      if (data.canvas_h % div != 0 || data.canvas_w % div != 0)
        throw InputError("config: canvas " + std::to_string(data.canvas_h) + "x" +
                         std::to_string(data.canvas_w) + " must divide by 2^levels = " + std::to_string(div));
      if (data.seq_len < train.context + train.horizon)
        throw InputError("config: data.seq_len must cover context + horizon");
    }
    if (train.epochs < 1 || train.batch_size < 1) throw InputError("config: epochs and batch_size must be >= 1");
    if (train.lr_g <= 0 || train.lr_d <= 0) throw InputError("config: learning rates must be positive");
    if (train.ema_decay < 0 || train.ema_decay >= 1) throw InputError("config: ema_decay must be in [0,1)");
    if (train.guard < 1) throw InputError("config: guard must be >= 1");
  }

  // Identity of the run's semantics: model, data, seed and optimization
  // settings. Runtime controls (step/time caps, eval cadence, checkpoint
  // cadence) are excluded so a resumed run may extend or observe differently.
  std::uint64_t fingerprint() const {
    nlohmann::json j = to_json();
    auto& t = j["train"];
    for (const char* key : {"max_steps", "max_seconds", "eval_every", "eval_sequences", "eval_batch",
                            "checkpoint_every"})
      t.erase(key);
    const std::string s = j.dump();
    return hash_bytes(s.data(), s.size());
  }
};

// "a.b.c=value" overrides; values parse as JSON when possible, else as strings.
inline void apply_override(nlohmann::json& j, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) throw InputError("override must look like key.path=value: " + kv);
  const std::string path = kv.substr(0, eq);
  const std::string raw = kv.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (...) {
    value = raw;
  }
  nlohmann::json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw InputError("override has an empty key segment: " + kv);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      break;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

inline RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {},
                             const std::uint64_t* seed_override = nullptr) {
  std::ifstream f(path);
  if (!f) throw InputError("config: cannot open " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw InputError("config: parse error in " + path.string() + ": " + e.what());
  }
  for (const auto& kv : overrides) apply_override(j, kv);
  if (seed_override) j["seed"] = *seed_override;
  return RunConfig::from_json(j);
}

inline void write_resolved_config(const RunConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream f(dir / "config.resolved.json");
  f << cfg.to_json().dump(2) << "\n";
}

}  // namespace mspn
