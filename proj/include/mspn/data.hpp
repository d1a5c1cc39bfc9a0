// Sequence datasets: synthetic bouncing-digit generation, generic
// frame-directory ingestion with sliding windows, and split manifests.
#pragma once

#include <algorithm>
#include <filesystem>
#include <json.hpp>
#include <map>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "mspn/glyphs.hpp"
#include "mspn/image_io.hpp"
#include "mspn/rng.hpp"
#include "mspn/tensor.hpp"

namespace mspn {

class SequenceDataset {
 public:
  virtual ~SequenceDataset() = default;
  virtual int size() const = 0;
  virtual int seq_len() const = 0;
  virtual int height() const = 0;
  virtual int width() const = 0;
  virtual std::vector<Image8> sequence(int i) const = 0;
  virtual std::string id(int i) const = 0;

  std::uint64_t sequence_hash(int i) const {
    std::uint64_t h = 14695981039346656037ULL;
    for (const auto& img : sequence(i)) h = image_hash(img, h);
    return h;
  }
};

// per-timestep batches (B,channels,H,W) in [0,1]
template <class S>
std::vector<Tensor<S>> stack_sequences(const SequenceDataset& ds, const std::vector<int>& indices,
                                       int channels = 3) {
  if (indices.empty()) throw InputError("stack_sequences: empty batch");
  const int T = ds.seq_len(), B = int(indices.size());
  std::vector<Tensor<S>> out;
  out.reserve(std::size_t(T));
  std::vector<std::vector<Image8>> seqs;
  seqs.reserve(indices.size());
  for (int idx : indices) seqs.push_back(ds.sequence(idx));
  for (int t = 0; t < T; ++t) {
    Tensor<S> batch(B, channels, ds.height(), ds.width());
    for (int b = 0; b < B; ++b) {
      Tensor<S> one = image_to_tensor<S>(seqs[std::size_t(b)][std::size_t(t)], channels);
      std::copy_n(one.ptr(), one.size(), batch.plane(b, 0));
    }
    out.push_back(std::move(batch));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic moving digits

struct MovingDigitsConfig {
  int count = 100;
  int digits_per_frame = 2;
  int canvas_h = 64, canvas_w = 64;
  int seq_len = 20;
  double vel_min = 1.0, vel_max = 3.0;
  std::uint64_t seed = 0;
  std::string idx_images, idx_labels;  // optional local digit corpus (idx format)
};

// Reflecting linear motion: fold p into [0, range] with period 2*range.
inline double bounce_fold(double p, double range) {
  if (range <= 0.0) return 0.0;
  double u = std::fmod(p, 2.0 * range);
  if (u < 0.0) u += 2.0 * range;
  return u <= range ? u : 2.0 * range - u;
}

struct DigitTrack {
  int glyph = 0;  // index into the glyph pool
  double x0 = 0.0, y0 = 0.0;
  double vx = 0.0, vy = 0.0;
};

// Overlapping digits composite by pixel max.
inline Image8 render_digits_frame(const std::vector<DigitTrack>& tracks, const std::vector<Image8>& glyphs,
                                  int canvas_h, int canvas_w, int t) {
  Image8 frame(1, canvas_h, canvas_w);
  for (const auto& tr : tracks) {
    const Image8& g = glyphs[std::size_t(tr.glyph)];
    const double rx = double(canvas_w - g.w), ry = double(canvas_h - g.h);
    const int px = int(std::lround(bounce_fold(tr.x0 + tr.vx * t, rx)));
    const int py = int(std::lround(bounce_fold(tr.y0 + tr.vy * t, ry)));
    for (int y = 0; y < g.h; ++y)
      for (int x = 0; x < g.w; ++x) {
        std::uint8_t& dst = frame.at(0, py + y, px + x);
        dst = std::max(dst, g.at(0, y, x));
      }
  }
  return frame;
}

// idx-format loaders (big-endian headers), for use when the standard digit
// corpus files are present locally.
inline std::vector<Image8> load_idx_images(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("load_idx_images: cannot open " + path.string());
  auto rd32 = [&]() {
    std::uint8_t b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | b[3];
  };
  if (rd32() != 0x00000803u) throw InputError("load_idx_images: bad magic in " + path.string());
  const int count = int(rd32()), h = int(rd32()), w = int(rd32());
  std::vector<Image8> out;
  out.reserve(std::size_t(count));
  for (int i = 0; i < count; ++i) {
    Image8 img(1, h, w);
    f.read(reinterpret_cast<char*>(img.px.data()), std::streamsize(img.px.size()));
    if (!f) throw InputError("load_idx_images: truncated file " + path.string());
    out.push_back(std::move(img));
  }
  return out;
}

inline std::vector<int> load_idx_labels(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("load_idx_labels: cannot open " + path.string());
  auto rd32 = [&]() {
    std::uint8_t b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | b[3];
  };
  if (rd32() != 0x00000801u) throw InputError("load_idx_labels: bad magic in " + path.string());
  const int count = int(rd32());
  std::vector<int> out(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    char c;
    f.get(c);
    out[std::size_t(i)] = int(std::uint8_t(c));
  }
  if (!f) throw InputError("load_idx_labels: truncated file " + path.string());
  return out;
}

class SyntheticDataset final : public SequenceDataset {
 public:
  SyntheticDataset() = default;

  static SyntheticDataset generate(const MovingDigitsConfig& cfg,
                                   const std::unordered_set<std::uint64_t>* exclude = nullptr,
                                   std::uint64_t stream_salt = 0) {
    SyntheticDataset ds;
    ds.cfg_ = cfg;
    ds.glyphs_ = load_glyph_pool(cfg);
    int max_gh = 0, max_gw = 0;
    for (const auto& g : ds.glyphs_) {
      max_gh = std::max(max_gh, g.h);
      max_gw = std::max(max_gw, g.w);
    }
    if (max_gh > cfg.canvas_h || max_gw > cfg.canvas_w)
      throw InputError("generate_moving_digits: canvas " + std::to_string(cfg.canvas_h) + "x" +
                       std::to_string(cfg.canvas_w) + " smaller than glyph " + std::to_string(max_gh) + "x" +
                       std::to_string(max_gw));
    if (cfg.seq_len < 1 || cfg.count < 0 || cfg.digits_per_frame < 1)
      throw InputError("generate_moving_digits: bad counts in config");

    Rng base = Rng(cfg.seed).fork(stream_salt);
    std::unordered_set<std::uint64_t> used;
    ds.seqs_.reserve(std::size_t(cfg.count));
    for (int i = 0; i < cfg.count; ++i) {
      Rng rng = base.fork(std::uint64_t(i) + 1);
      for (int attempt = 0;; ++attempt) {
        if (attempt > 100)
          throw InputError("generate_moving_digits: could not find a unique sequence (space too small?)");
        auto tracks = ds.sample_tracks(rng);
        std::vector<Image8> seq;
        seq.reserve(std::size_t(cfg.seq_len));
        for (int t = 0; t < cfg.seq_len; ++t)
          seq.push_back(render_digits_frame(tracks, ds.glyphs_, cfg.canvas_h, cfg.canvas_w, t));
        std::uint64_t h = 14695981039346656037ULL;
        for (const auto& img : seq) h = image_hash(img, h);
        if (used.count(h) || (exclude && exclude->count(h))) continue;
        used.insert(h);
        ds.hashes_.push_back(h);
        ds.seqs_.push_back(std::move(seq));
        break;
      }
    }
    return ds;
  }

  int size() const override { return int(seqs_.size()); }
  int seq_len() const override { return cfg_.seq_len; }
  int height() const override { return cfg_.canvas_h; }
  int width() const override { return cfg_.canvas_w; }
  std::vector<Image8> sequence(int i) const override { return seqs_[std::size_t(i)]; }
  std::string id(int i) const override {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "seq_%05d", i);
    return buf;
  }
  const std::vector<std::uint64_t>& hashes() const { return hashes_; }
  const MovingDigitsConfig& config() const { return cfg_; }

 private:
  static std::vector<Image8> load_glyph_pool(const MovingDigitsConfig& cfg) {
    namespace fs = std::filesystem;
    if (!cfg.idx_images.empty() && fs::exists(cfg.idx_images) && !cfg.idx_labels.empty() &&
        fs::exists(cfg.idx_labels)) {
      auto images = load_idx_images(cfg.idx_images);
      auto labels = load_idx_labels(cfg.idx_labels);
      const std::size_t n = std::min(images.size(), labels.size());
      std::vector<Image8> pool;
      std::array<int, 10> per_class{};
      for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || labels[i] > 9) continue;
        if (per_class[std::size_t(labels[i])] >= 50) continue;  // keep the pool small
        ++per_class[std::size_t(labels[i])];
        pool.push_back(std::move(images[i]));
      }
      if (!pool.empty()) return pool;
    }
    const auto& bundled = digit_glyphs();
    return std::vector<Image8>(bundled.begin(), bundled.end());
  }

  std::vector<DigitTrack> sample_tracks(Rng& rng) const {
    std::vector<DigitTrack> tracks;
    tracks.reserve(std::size_t(cfg_.digits_per_frame));
    for (int d = 0; d < cfg_.digits_per_frame; ++d) {
      DigitTrack tr;
      tr.glyph = rng.uniform_int(0, int(glyphs_.size()) - 1);
      const auto& g = glyphs_[std::size_t(tr.glyph)];
      tr.x0 = rng.uniform(0.0, double(cfg_.canvas_w - g.w));
      tr.y0 = rng.uniform(0.0, double(cfg_.canvas_h - g.h));
      tr.vx = rng.uniform(cfg_.vel_min, cfg_.vel_max) * (rng.coin() ? 1.0 : -1.0);
      tr.vy = rng.uniform(cfg_.vel_min, cfg_.vel_max) * (rng.coin() ? 1.0 : -1.0);
      tracks.push_back(tr);
    }
    return tracks;
  }

  MovingDigitsConfig cfg_;
  std::vector<Image8> glyphs_;
  std::vector<std::vector<Image8>> seqs_;
  std::vector<std::uint64_t> hashes_;
};

inline SyntheticDataset generate_moving_digits(const MovingDigitsConfig& cfg) {
  return SyntheticDataset::generate(cfg);
}

struct SyntheticSplits {
  SyntheticDataset train, test;
};

// Disjoint train/test splits from one seed; test generation excludes every
// train sequence hash, and the result is checked.
inline SyntheticSplits make_synthetic_splits(MovingDigitsConfig cfg, int train_count, int test_count) {
  SyntheticSplits out;
  MovingDigitsConfig tc = cfg;
  tc.count = train_count;
  out.train = SyntheticDataset::generate(tc, nullptr, 1);
  std::unordered_set<std::uint64_t> seen(out.train.hashes().begin(), out.train.hashes().end());
  MovingDigitsConfig ec = cfg;
  ec.count = test_count;
  out.test = SyntheticDataset::generate(ec, &seen, 2);
  for (auto h : out.test.hashes())
    if (seen.count(h)) throw Error("make_synthetic_splits: train/test overlap slipped through");
  return out;
}

// ---------------------------------------------------------------------------
// Directory ingestion

struct IngestConfig {
  std::string path;
  int resize_h = 0, resize_w = 0;  // 0 keeps the source size
  int seq_len = 20;
  int stride = 10;
  int divisor = 1;  // center-crop height/width to a multiple (network needs 2^levels)
  double train_fraction = 0.9;
  std::uint64_t seed = 0;
  bool skip_bad = false;  // skip unreadable videos instead of aborting
};

struct ClipRef {
  std::string video;
  int start = 0;
  std::uint64_t hash = 0;
};

class DirectoryDataset final : public SequenceDataset {
 public:
  DirectoryDataset() = default;
  DirectoryDataset(std::filesystem::path root, IngestConfig cfg, std::vector<ClipRef> clips,
                   std::map<std::string, std::vector<std::string>> frames, int h, int w)
      : root_(std::move(root)),
        cfg_(std::move(cfg)),
        clips_(std::move(clips)),
        frames_(std::move(frames)),
        h_(h),
        w_(w) {}

  int size() const override { return int(clips_.size()); }
  int seq_len() const override { return cfg_.seq_len; }
  int height() const override { return h_; }
  int width() const override { return w_; }

  std::vector<Image8> sequence(int i) const override {
    const ClipRef& clip = clips_[std::size_t(i)];
    const auto& files = frames_.at(clip.video);
    std::vector<Image8> out;
    out.reserve(std::size_t(cfg_.seq_len));
    for (int t = 0; t < cfg_.seq_len; ++t)
      out.push_back(load_frame(root_ / clip.video / files[std::size_t(clip.start + t)], cfg_));
    return out;
  }

  std::string id(int i) const override {
    const ClipRef& c = clips_[std::size_t(i)];
    return c.video + "@" + std::to_string(c.start);
  }

  const std::vector<ClipRef>& clips() const { return clips_; }

  static Image8 load_frame(const std::filesystem::path& file, const IngestConfig& cfg) {
    Image8 img = read_pnm(file);
    if (cfg.resize_h > 0 && cfg.resize_w > 0) img = resize_bilinear(img, cfg.resize_h, cfg.resize_w);
    if (cfg.divisor > 1) img = center_crop_to_multiple(img, cfg.divisor);
    return img;
  }

 private:
  std::filesystem::path root_;
  IngestConfig cfg_;
  std::vector<ClipRef> clips_;
  std::map<std::string, std::vector<std::string>> frames_;
  int h_ = 0, w_ = 0;
};

struct IngestResult {
  DirectoryDataset train, test;
  nlohmann::json manifest;
};

inline IngestResult ingest_directory(const IngestConfig& cfg) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(cfg.path)) throw InputError("ingest: not a directory: " + cfg.path);
  if (cfg.seq_len < 1 || cfg.stride < 1) throw InputError("ingest: seq_len and stride must be positive");

  std::vector<std::string> videos;
  for (const auto& e : fs::directory_iterator(cfg.path))
    if (e.is_directory()) videos.push_back(e.path().filename().string());
  std::sort(videos.begin(), videos.end());
  if (videos.empty()) throw InputError("ingest: no per-video subdirectories under " + cfg.path);

  std::map<std::string, std::vector<std::string>> frames;
  std::vector<std::string> usable;
  int fh = -1, fw = -1;
  for (const auto& v : videos) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(fs::path(cfg.path) / v)) {
      const auto ext = e.path().extension().string();
      if (e.is_regular_file() && (ext == ".pgm" || ext == ".ppm")) files.push_back(e.path().filename().string());
    }
    std::sort(files.begin(), files.end());
    if (int(files.size()) < cfg.seq_len) continue;
    try {
      Image8 probe = DirectoryDataset::load_frame(fs::path(cfg.path) / v / files.front(), cfg);
      if (fh < 0) {
        fh = probe.h;
        fw = probe.w;
      } else if (probe.h != fh || probe.w != fw) {
        throw InputError("ingest: frame size mismatch in video " + v);
      }
    } catch (const InputError&) {
      if (cfg.skip_bad) continue;  // logged by the caller via manifest
      throw;
    }
    frames[v] = std::move(files);
    usable.push_back(v);
  }
  if (usable.empty()) throw InputError("ingest: no usable videos (need >= seq_len readable frames each)");

  // split at video granularity
  std::vector<std::string> order = usable;
  Rng rng(cfg.seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[std::size_t(rng.next_u64() % i)]);
  const std::size_t train_n =
      std::min(order.size(), std::size_t(std::ceil(cfg.train_fraction * double(order.size()))));
  std::unordered_set<std::string> train_videos(order.begin(), order.begin() + std::ptrdiff_t(train_n));

  auto window_clips = [&](const std::string& video) {
    std::vector<ClipRef> clips;
    const int F = int(frames[video].size());
    for (int start = 0; start + cfg.seq_len <= F; start += cfg.stride) clips.push_back({video, start, 0});
    return clips;
  };

  std::vector<ClipRef> train_clips, test_clips;
  for (const auto& v : usable) {
    auto clips = window_clips(v);
    auto& dst = train_videos.count(v) ? train_clips : test_clips;
    dst.insert(dst.end(), clips.begin(), clips.end());
  }

  DirectoryDataset train(cfg.path, cfg, train_clips, frames, fh, fw);
  DirectoryDataset test(cfg.path, cfg, test_clips, frames, fh, fw);

  // hashes for the manifest and the overlap check
  std::unordered_set<std::uint64_t> train_hashes;
  nlohmann::json jclips = nlohmann::json::array();
  for (int i = 0; i < train.size(); ++i) {
    const std::uint64_t h = train.sequence_hash(i);
    train_hashes.insert(h);
    jclips.push_back({{"id", train.id(i)}, {"split", "train"}, {"hash", h}});
  }
  for (int i = 0; i < test.size(); ++i) {
    const std::uint64_t h = test.sequence_hash(i);
    if (train_hashes.count(h)) throw InputError("ingest: identical clip found in both splits: " + test.id(i));
    jclips.push_back({{"id", test.id(i)}, {"split", "test"}, {"hash", h}});
  }

  nlohmann::json manifest{{"version", 1},
                          {"kind", "ingest"},
                          {"source", cfg.path},
                          {"seq_len", cfg.seq_len},
                          {"stride", cfg.stride},
                          {"resize", {cfg.resize_h, cfg.resize_w}},
                          {"divisor", cfg.divisor},
                          {"train_fraction", cfg.train_fraction},
                          {"seed", cfg.seed},
                          {"frame_size", {fh, fw}},
                          {"skipped_videos", int(videos.size() - usable.size())},
                          {"clips", std::move(jclips)}};
  return IngestResult{std::move(train), std::move(test), std::move(manifest)};
}

// Materializes a dataset as per-sequence frame directories (PGM), so synthetic
// data can be inspected and re-ingested with the directory pipeline.
inline nlohmann::json write_dataset_directory(const SequenceDataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json entries = nlohmann::json::array();
  for (int i = 0; i < ds.size(); ++i) {
    const fs::path seq_dir = dir / ds.id(i);
    fs::create_directories(seq_dir);
    auto frames = ds.sequence(i);
    for (std::size_t t = 0; t < frames.size(); ++t) {
      char name[32];
      std::snprintf(name, sizeof(name), "frame_%03d.pgm", int(t));
      write_pnm(frames[t], seq_dir / name);
    }
    entries.push_back({{"id", ds.id(i)}, {"hash", ds.sequence_hash(i)}});
  }
  return entries;
}

}  // namespace mspn
