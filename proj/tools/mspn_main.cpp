// mspn command-line tool: dataset generation, training, evaluation, prediction
// dumps and qualitative rendering. Every command writes a resolved-config
// snapshot into its output directory; outputs are deterministic under
// (seed, config, checkpoint).
#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <memory>

#include "mspn/checkpoint.hpp"
#include "mspn/config.hpp"
#include "mspn/image_io.hpp"
#include "mspn/metrics.hpp"
#include "mspn/trainer.hpp"

namespace fs = std::filesystem;
using namespace mspn;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  std::string checkpoint;
  std::string device = "cpu";
};

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_config) {
  auto* cfg = cmd->add_option("--config", o.config_path, "JSON config file");
  if (needs_config) cfg->required();
  cmd->add_option("--override", o.overrides, "config override, key.path=value (repeatable)");
  cmd->add_option("--seed", o.seed, "seed override")->each([&o](const std::string&) { o.seed_set = true; });
  cmd->add_option("--out", o.out, "output directory (default: $MSPN_OUT_ROOT/<command> or ./runs/<command>)");
  cmd->add_option("--device", o.device, "compute device (only 'cpu' is available)");
}

fs::path resolve_out(const CommonOpts& o, const std::string& command) {
  if (!o.out.empty()) return o.out;
  const char* root = std::getenv("MSPN_OUT_ROOT");
  return fs::path(root ? root : "./runs") / command;
}

void check_device(const CommonOpts& o) {
  if (o.device != "cpu") throw InputError("unknown device '" + o.device + "'; this build is CPU-only");
}

RunConfig config_from_opts(const CommonOpts& o) {
  return load_config(o.config_path, o.overrides, o.seed_set ? &o.seed : nullptr);
}

// config embedded in a checkpoint, with CLI overrides applied on top
RunConfig config_from_checkpoint_json(const std::string& json_text, const CommonOpts& o) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  for (const auto& kv : o.overrides) apply_override(j, kv);
  if (o.seed_set) j["seed"] = o.seed;
  return RunConfig::from_json(j);
}

struct Datasets {
  std::unique_ptr<SequenceDataset> train, test;
  nlohmann::json manifest;  // present for directory ingestion
};

Datasets build_datasets(const RunConfig& cfg) {
  Datasets out;
  if (cfg.data.kind == "synthetic") {
    MovingDigitsConfig dc;
    dc.digits_per_frame = cfg.data.digits;
    dc.canvas_h = cfg.data.canvas_h;
    dc.canvas_w = cfg.data.canvas_w;
    dc.seq_len = cfg.data.seq_len;
    dc.vel_min = cfg.data.vel_min;
    dc.vel_max = cfg.data.vel_max;
    dc.seed = cfg.seed;
    dc.idx_images = cfg.data.idx_images;
    dc.idx_labels = cfg.data.idx_labels;
    auto splits = make_synthetic_splits(dc, cfg.data.count_train, cfg.data.count_test);
    out.train = std::make_unique<SyntheticDataset>(std::move(splits.train));
    out.test = std::make_unique<SyntheticDataset>(std::move(splits.test));
  } else {
    if (cfg.data.path.empty())
      throw InputError("data.kind is 'directory' but data.path is empty; point it at a frame directory");
    IngestConfig ic;
    ic.path = cfg.data.path;
    ic.resize_h = cfg.data.resize_h;
    ic.resize_w = cfg.data.resize_w;
    ic.seq_len = cfg.data.seq_len;
    ic.stride = cfg.data.stride;
    ic.divisor = 1 << cfg.model.levels;
    ic.train_fraction = cfg.data.train_fraction;
    ic.seed = cfg.seed;
    auto res = ingest_directory(ic);
    out.manifest = std::move(res.manifest);
    out.train = std::make_unique<DirectoryDataset>(std::move(res.train));
    out.test = std::make_unique<DirectoryDataset>(std::move(res.test));
  }
  return out;
}

template <class Fn>
int with_precision(const RunConfig& cfg, Fn&& fn) {
  if (cfg.precision == "double") return fn(double{});
  return fn(float{});
}

template <class S>
void load_model_params(MSPN<S>& model, const Checkpoint<S>& ck) {
  auto params = model.parameters();
  ck.load_params("model", params);
}

template <class S>
std::vector<Tensor<S>> sequence_frames(const SequenceDataset& ds, int index) {
  if (index < 0 || index >= ds.size())
    throw InputError("sequence index " + std::to_string(index) + " out of range (test split has " +
                     std::to_string(ds.size()) + " sequences)");
  std::vector<Tensor<S>> frames;
  for (const auto& img : ds.sequence(index)) frames.push_back(image_to_tensor<S>(img));
  return frames;
}

Image8 grid_2xN(const std::vector<Image8>& top, const std::vector<Image8>& bottom, int pad = 2) {
  const int n = int(top.size());
  const int h = top.front().h, w = top.front().w;
  Image8 grid(3, 2 * h + 3 * pad, n * w + (n + 1) * pad);
  auto blit = [&](const Image8& src, int oy, int ox) {
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < src.h; ++y)
        for (int x = 0; x < src.w; ++x) grid.at(c, oy + y, ox + x) = src.at(src.c == 1 ? 0 : c, y, x);
  };
  for (int i = 0; i < n; ++i) {
    blit(top[std::size_t(i)], pad, pad + i * (w + pad));
    blit(bottom[std::size_t(i)], 2 * pad + h, pad + i * (w + pad));
  }
  return grid;
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const CommonOpts& opts) {
  check_device(opts);
  RunConfig cfg = config_from_opts(opts);
  const fs::path out = resolve_out(opts, "gen-data");
  fs::create_directories(out);
  write_resolved_config(cfg, out);
  Datasets ds = build_datasets(cfg);
  nlohmann::json manifest;
  if (cfg.data.kind == "synthetic") {
    manifest["version"] = 1;
    manifest["kind"] = "synthetic";
    manifest["config_fingerprint"] = cfg.fingerprint();
    manifest["seq_len"] = ds.train->seq_len();
    manifest["frame_size"] = {ds.train->height(), ds.train->width()};
    manifest["train"] = write_dataset_directory(*ds.train, out / "train");
    manifest["test"] = write_dataset_directory(*ds.test, out / "test");
  } else {
    manifest = ds.manifest;
  }
  std::ofstream(out / "manifest.json") << manifest.dump(2) << "\n";
  std::cout << "gen-data: " << ds.train->size() << " train / " << ds.test->size() << " test sequences -> "
            << out.string() << "\n";
  return 0;
}

int cmd_train(const CommonOpts& opts, const std::string& resume) {
  check_device(opts);
  RunConfig cfg = config_from_opts(opts);
  const fs::path out = resolve_out(opts, "train");
  fs::create_directories(out);
  write_resolved_config(cfg, out);
  return with_precision(cfg, [&](auto tag) {
    using S = decltype(tag);
    Datasets ds = build_datasets(cfg);
    if (!ds.manifest.is_null()) std::ofstream(out / "manifest.json") << ds.manifest.dump(2) << "\n";
    MSPN<S> model(cfg.model, cfg.seed);
    Trainer<S> trainer(cfg, model, *ds.train, *ds.test, out);
    if (!resume.empty()) {
      const fs::path ck_path = resume == "latest" ? out / "latest.mspnckpt" : fs::path(resume);
      trainer.restore(Checkpoint<S>::load(ck_path));
      std::cout << "train: resumed from " << ck_path.string() << "\n";
    }
    trainer.train();
    const auto& rep = trainer.last_report();
    std::cout << "train: done after " << trainer.total_steps() << " optimizer steps";
    if (rep) std::cout << "; test mean ssim " << rep->mean_ssim << ", mse " << rep->mean_mse;
    std::cout << "; checkpoints in " << out.string() << "\n";
    return 0;
  });
}

// checkpoint precision tag + embedded config, without loading tensors twice
std::pair<char, std::string> probe_checkpoint(const std::string& path) {
  try {
    return {'f', Checkpoint<float>::load(path).config_json};
  } catch (const InputError&) {
  }
  return {'d', Checkpoint<double>::load(path).config_json};
}

int cmd_eval(const CommonOpts& opts) {
  check_device(opts);
  if (opts.checkpoint.empty()) throw InputError("eval needs --checkpoint");
  auto [precision, config_json] = probe_checkpoint(opts.checkpoint);
  RunConfig cfg =
      opts.config_path.empty() ? config_from_checkpoint_json(config_json, opts) : config_from_opts(opts);
  if ((precision == 'f') != (cfg.precision == "float"))
    throw InputError("eval: config precision does not match the checkpoint");
  const fs::path out = resolve_out(opts, "eval");
  fs::create_directories(out);
  write_resolved_config(cfg, out);
  return with_precision(cfg, [&](auto tag) {
    using S = decltype(tag);
    auto ck = Checkpoint<S>::load(opts.checkpoint);
    Datasets ds = build_datasets(cfg);
    MSPN<S> model(cfg.model, cfg.seed);
    load_model_params(model, ck);
    MetricProtocol proto{cfg.train.context, cfg.train.horizon, cfg.train.eval_batch};
    auto rep = evaluate(model, *ds.test, proto, cfg.fingerprint(), nullptr, cfg.train.eval_sequences);
    rep.write(out / "report.jsonl");
    std::cout << "eval: " << rep.sequences << " sequences, mean ssim " << rep.mean_ssim << ", mean mse "
              << rep.mean_mse << ", baseline ssim " << rep.baseline_mean_ssim << " -> "
              << (out / "report.jsonl").string() << "\n";
    return 0;
  });
}

template <class S>
std::pair<std::vector<Image8>, std::vector<Image8>> rollout_images(const RunConfig& cfg,
                                                                   const SequenceDataset& test, int sequence,
                                                                   int horizon, MSPN<S>& model) {
  auto frames = sequence_frames<S>(test, sequence);
  if (int(frames.size()) < cfg.train.context + horizon)
    throw InputError("sequence too short for context " + std::to_string(cfg.train.context) + " + horizon " +
                     std::to_string(horizon));
  NoGradGuard ng;
  auto roll = model.rollout(frames, cfg.train.context, horizon, RolloutMode::predicted_feedback);
  std::vector<Image8> gt, pred;
  for (int j = 0; j < horizon; ++j) {
    gt.push_back(tensor_to_image(frames[std::size_t(cfg.train.context + j)]));
    pred.push_back(tensor_to_image(roll.horizon_preds[std::size_t(j)].value()));
  }
  return {gt, pred};
}

int cmd_predict(const CommonOpts& opts, int sequence, int horizon) {
  check_device(opts);
  if (opts.checkpoint.empty()) throw InputError("predict needs --checkpoint");
  auto [precision, config_json] = probe_checkpoint(opts.checkpoint);
  RunConfig cfg =
      opts.config_path.empty() ? config_from_checkpoint_json(config_json, opts) : config_from_opts(opts);
  if ((precision == 'f') != (cfg.precision == "float"))
    throw InputError("predict: config precision does not match the checkpoint");
  const fs::path out = resolve_out(opts, "predict");
  fs::create_directories(out);
  write_resolved_config(cfg, out);
  return with_precision(cfg, [&](auto tag) {
    using S = decltype(tag);
    auto ck = Checkpoint<S>::load(opts.checkpoint);
    Datasets ds = build_datasets(cfg);
    MSPN<S> model(cfg.model, cfg.seed);
    load_model_params(model, ck);
    const int m = horizon > 0 ? horizon : cfg.train.horizon;
    auto [gt, pred] = rollout_images(cfg, *ds.test, sequence, m, model);
    for (int j = 0; j < m; ++j) {
      char name[48];
      std::snprintf(name, sizeof(name), "pred_%03d.ppm", j);
      write_pnm(pred[std::size_t(j)], out / name);
      std::snprintf(name, sizeof(name), "gt_%03d.ppm", j);
      write_pnm(gt[std::size_t(j)], out / name);
    }
    std::cout << "predict: wrote " << m << " predicted frames for sequence " << sequence << " -> "
              << out.string() << "\n";
    return 0;
  });
}

int cmd_render(const CommonOpts& opts, int sequence, int horizon) {
  check_device(opts);
  if (opts.checkpoint.empty()) throw InputError("render needs --checkpoint");
  auto [precision, config_json] = probe_checkpoint(opts.checkpoint);
  RunConfig cfg =
      opts.config_path.empty() ? config_from_checkpoint_json(config_json, opts) : config_from_opts(opts);
  if ((precision == 'f') != (cfg.precision == "float"))
    throw InputError("render: config precision does not match the checkpoint");
  const fs::path out = resolve_out(opts, "render");
  fs::create_directories(out);
  write_resolved_config(cfg, out);
  return with_precision(cfg, [&](auto tag) {
    using S = decltype(tag);
    auto ck = Checkpoint<S>::load(opts.checkpoint);
    Datasets ds = build_datasets(cfg);
    MSPN<S> model(cfg.model, cfg.seed);
    load_model_params(model, ck);
    const int m = horizon > 0 ? horizon : cfg.train.horizon;
    auto [gt, pred] = rollout_images(cfg, *ds.test, sequence, m, model);
    Image8 grid = grid_2xN(gt, pred);
    write_png(grid, out / "grid.png");
    write_pnm(grid, out / "grid.ppm");
    std::vector<Image8> anim;
    for (int j = 0; j < m; ++j) anim.push_back(grid_2xN({gt[std::size_t(j)]}, {pred[std::size_t(j)]}));
    write_gif_animation(anim, out / "anim.gif", 20);
    std::cout << "render: ground-truth row over prediction row, " << m << " columns -> " << out.string()
              << "\n";
    return 0;
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mspn: multi-scale predictive video prediction"};
  app.require_subcommand(1);

  CommonOpts gen_o, train_o, eval_o, predict_o, render_o;
  std::string resume;
  int sequence = 0, horizon = 0;

  auto* gen = app.add_subcommand("gen-data", "generate a dataset directory with a split manifest");
  add_common(gen, gen_o, true);

  auto* train = app.add_subcommand("train", "train a model; writes checkpoints and a jsonl log");
  add_common(train, train_o, true);
  train->add_option("--resume", resume, "checkpoint path, or 'latest' for <out>/latest.mspnckpt");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common(eval, eval_o, false);
  eval->add_option("--checkpoint", eval_o.checkpoint, "checkpoint file")->required();

  auto* predict = app.add_subcommand("predict", "dump predicted frames for one test sequence");
  add_common(predict, predict_o, false);
  predict->add_option("--checkpoint", predict_o.checkpoint, "checkpoint file")->required();
  predict->add_option("--sequence", sequence, "test sequence index");
  predict->add_option("--horizon", horizon, "frames to predict (default: config horizon)");

  auto* render = app.add_subcommand("render", "render a ground-truth/prediction grid and animation");
  add_common(render, render_o, false);
  render->add_option("--checkpoint", render_o.checkpoint, "checkpoint file")->required();
  render->add_option("--sequence", sequence, "test sequence index");
  render->add_option("--horizon", horizon, "frames to predict (default: config horizon)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_o);
    if (train->parsed()) return cmd_train(train_o, resume);
    if (eval->parsed()) return cmd_eval(eval_o);
    if (predict->parsed()) return cmd_predict(predict_o, sequence, horizon);
    if (render->parsed()) return cmd_render(render_o, sequence, horizon);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
