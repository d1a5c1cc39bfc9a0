// Versioned binary checkpoint: every parameter group keyed by (level,
// submodule) name, optimizer moments, trainer scalars, RNG state and the
// resolved config. Writes are atomic (tmp file + rename).
#pragma once

#include <array>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "mspn/nn.hpp"

namespace mspn {

namespace detail {

inline void write_u32(std::ostream& f, std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }
inline void write_u64(std::ostream& f, std::uint64_t v) { f.write(reinterpret_cast<const char*>(&v), 8); }
inline void write_f64(std::ostream& f, double v) { f.write(reinterpret_cast<const char*>(&v), 8); }
inline void write_str(std::ostream& f, const std::string& s) {
  write_u64(f, s.size());
  f.write(s.data(), std::streamsize(s.size()));
}
inline std::uint32_t read_u32(std::istream& f) {
  std::uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
inline std::uint64_t read_u64(std::istream& f) {
  std::uint64_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
inline double read_f64(std::istream& f) {
  double v = 0;
  f.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
inline std::string read_str(std::istream& f) {
  const std::uint64_t n = read_u64(f);
  std::string s(n, '\0');
  f.read(s.data(), std::streamsize(n));
  return s;
}

}  // namespace detail

template <class S>
struct Checkpoint {
  static constexpr char kMagic[9] = "MSPNCKPT";
  static constexpr std::uint32_t kVersion = 1;

  std::uint64_t config_fingerprint = 0;
  std::uint64_t global_step = 0;
  std::uint32_t epoch = 0;  // next epoch to run when resuming
  std::string config_json;
  std::array<std::uint64_t, 4> rng_state{};
  std::map<std::string, double> scalars;
  std::vector<std::pair<std::string, Tensor<S>>> tensors;

  void add_tensor(const std::string& name, const Tensor<S>& t) { tensors.emplace_back(name, t); }
  void add_params(const std::string& prefix, const ParamList<S>& params) {
    for (const auto& [name, p] : params) add_tensor(prefix + "/" + name, p.value());
  }
  void add_adam(const std::string& prefix, Adam<S>& opt) {
    for (std::size_t i = 0; i < opt.size(); ++i) {
      add_tensor(prefix + "/" + opt.name(i) + ".m", opt.moment1(i));
      add_tensor(prefix + "/" + opt.name(i) + ".v", opt.moment2(i));
    }
    scalars[prefix + ".steps"] = double(opt.steps_taken());
  }

  const Tensor<S>* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }

  void load_params(const std::string& prefix, ParamList<S>& params) const {
    for (auto& [name, p] : params) {
      const Tensor<S>* t = find(prefix + "/" + name);
      if (!t) throw InputError("checkpoint: missing tensor " + prefix + "/" + name);
      if (!t->same_shape(p.value()))
        throw InputError("checkpoint: shape mismatch for " + name + ": " + t->shape_str() + " vs " +
                         p.value().shape_str());
      p.value() = *t;
    }
  }

  void load_adam(const std::string& prefix, Adam<S>& opt) const {
    for (std::size_t i = 0; i < opt.size(); ++i) {
      const Tensor<S>* m = find(prefix + "/" + opt.name(i) + ".m");
      const Tensor<S>* v = find(prefix + "/" + opt.name(i) + ".v");
      if (!m || !v) throw InputError("checkpoint: missing optimizer state for " + opt.name(i));
      opt.moment1(i) = *m;
      opt.moment2(i) = *v;
    }
    auto it = scalars.find(prefix + ".steps");
    if (it == scalars.end()) throw InputError("checkpoint: missing optimizer step count for " + prefix);
    opt.set_steps_taken(long(it->second));
  }

  void save(const std::filesystem::path& path) const {
    namespace fs = std::filesystem;
    const fs::path tmp = path.string() + ".tmp";
    {
      std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
      if (!f) throw InputError("checkpoint: cannot open " + tmp.string());
      f.write(kMagic, 8);
      detail::write_u32(f, kVersion);
      f.put(sizeof(S) == 4 ? 'f' : 'd');
      detail::write_u64(f, config_fingerprint);
      detail::write_u64(f, global_step);
      detail::write_u32(f, epoch);
      detail::write_str(f, config_json);
      for (auto s : rng_state) detail::write_u64(f, s);
      detail::write_u64(f, scalars.size());
      for (const auto& [k, v] : scalars) {
        detail::write_str(f, k);
        detail::write_f64(f, v);
      }
      detail::write_u64(f, tensors.size());
      for (const auto& [name, t] : tensors) {
        detail::write_str(f, name);
        detail::write_u32(f, std::uint32_t(t.n));
        detail::write_u32(f, std::uint32_t(t.c));
        detail::write_u32(f, std::uint32_t(t.h));
        detail::write_u32(f, std::uint32_t(t.w));
        f.write(reinterpret_cast<const char*>(t.ptr()), std::streamsize(sizeof(S) * t.size()));
      }
      if (!f) throw InputError("checkpoint: write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
  }

  static Checkpoint load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("checkpoint: cannot open " + path.string());
    char magic[8];
    f.read(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0) throw InputError("checkpoint: bad magic in " + path.string());
    const std::uint32_t version = detail::read_u32(f);
    if (version != kVersion)
      throw InputError("checkpoint: unsupported version " + std::to_string(version));
    const char tag = char(f.get());
    if (tag != (sizeof(S) == 4 ? 'f' : 'd'))
      throw InputError("checkpoint: precision mismatch (file holds '" + std::string(1, tag) + "')");
    Checkpoint ck;
    ck.config_fingerprint = detail::read_u64(f);
    ck.global_step = detail::read_u64(f);
    ck.epoch = detail::read_u32(f);
    ck.config_json = detail::read_str(f);
    for (auto& s : ck.rng_state) s = detail::read_u64(f);
    const std::uint64_t n_scalars = detail::read_u64(f);
    for (std::uint64_t i = 0; i < n_scalars; ++i) {
      std::string k = detail::read_str(f);
      ck.scalars[k] = detail::read_f64(f);
    }
    const std::uint64_t n_tensors = detail::read_u64(f);
    for (std::uint64_t i = 0; i < n_tensors; ++i) {
      std::string name = detail::read_str(f);
      const int n = int(detail::read_u32(f)), c = int(detail::read_u32(f));
      const int h = int(detail::read_u32(f)), w = int(detail::read_u32(f));
      Tensor<S> t(n, c, h, w);
      f.read(reinterpret_cast<char*>(t.ptr()), std::streamsize(sizeof(S) * t.size()));
      ck.tensors.emplace_back(std::move(name), std::move(t));
    }
    if (!f) throw InputError("checkpoint: truncated file " + path.string());
    return ck;
  }
};

}  // namespace mspn
