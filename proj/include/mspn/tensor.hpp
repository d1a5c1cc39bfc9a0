// Dense NCHW tensor on Eigen storage, plus the error types used across the library.
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace mspn {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Shape disagreement between maps that must align.
struct DimensionError : Error {
  using Error::Error;
};
// API misuse: calls out of order, uninitialized state, etc.
struct ContractViolation : Error {
  using Error::Error;
};
// NaN/Inf where a finite value is required.
struct NumericError : Error {
  using Error::Error;
};
// Bad user-supplied data or configuration.
struct InputError : Error {
  using Error::Error;
};

// A batch of channel-major maps: index (n, c, y, x), row-major within a map.
template <class S>
struct Tensor {
  using Scalar = S;
  using Array = Eigen::Array<S, Eigen::Dynamic, 1>;

  int n = 0, c = 0, h = 0, w = 0;
  Array data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_), data(std::int64_t(n_) * c_ * h_ * w_) {}

  static Tensor zeros(int n, int c, int h, int w) {
    Tensor t(n, c, h, w);
    t.data.setZero();
    return t;
  }
  static Tensor full(int n, int c, int h, int w, S value) {
    Tensor t(n, c, h, w);
    t.data.setConstant(value);
    return t;
  }
  static Tensor scalar(S value) { return full(1, 1, 1, 1, value); }

  std::int64_t size() const { return std::int64_t(n) * c * h * w; }
  bool empty() const { return size() == 0; }

  S& at(int in, int ic, int iy, int ix) { return data[((std::int64_t(in) * c + ic) * h + iy) * w + ix]; }
  S at(int in, int ic, int iy, int ix) const { return data[((std::int64_t(in) * c + ic) * h + iy) * w + ix]; }

  S* ptr() { return data.data(); }
  const S* ptr() const { return data.data(); }
  // start of sample in's channel ic
  S* plane(int in, int ic) { return data.data() + (std::int64_t(in) * c + ic) * h * w; }
  const S* plane(int in, int ic) const { return data.data() + (std::int64_t(in) * c + ic) * h * w; }

  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
  bool all_finite() const { return data.isFinite().all(); }

  std::string shape_str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
  }
};

template <class S>
void require_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* what) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

// FNV-1a over raw bytes; used for dataset hashes, config fingerprints and wiring traces.
inline std::uint64_t hash_bytes(const void* p, std::size_t len, std::uint64_t seed = 14695981039346656037ULL) {
  const unsigned char* b = static_cast<const unsigned char*>(p);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= b[i];
    h *= 1099511628211ULL;
  }
  return h;
}

template <class S>
std::uint64_t tensor_hash(const Tensor<S>& t) {
  std::uint64_t h = hash_bytes(&t.n, sizeof(int));
  h = hash_bytes(&t.c, sizeof(int), h);
  h = hash_bytes(&t.h, sizeof(int), h);
  h = hash_bytes(&t.w, sizeof(int), h);
  return hash_bytes(t.ptr(), sizeof(S) * t.size(), h);
}

}  // namespace mspn
