// 8-bit image container plus the file formats the tools speak: binary netpbm
// (PGM/PPM) read/write, a lossless PNG writer (stored deflate blocks), and an
// animated GIF writer (9-bit literal LZW stream, 256-level gray palette).
#pragma once

#include <cfenv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mspn/tensor.hpp"

namespace mspn {

// planar layout: px[(c*h + y)*w + x]
struct Image8 {
  int c = 0, h = 0, w = 0;
  std::vector<std::uint8_t> px;

  Image8() = default;
  Image8(int c_, int h_, int w_) : c(c_), h(h_), w(w_), px(std::size_t(c_) * h_ * w_, 0) {}

  std::uint8_t& at(int ic, int iy, int ix) { return px[(std::size_t(ic) * h + iy) * w + ix]; }
  std::uint8_t at(int ic, int iy, int ix) const { return px[(std::size_t(ic) * h + iy) * w + ix]; }
  std::size_t size() const { return px.size(); }
};

// round-half-even quantization of a unit-range value
inline std::uint8_t quantize_unit(double v) {
  if (v < 0.0) v = 0.0;
  if (v > 1.0) v = 1.0;
  return std::uint8_t(std::nearbyint(v * 255.0));
}

template <class S>
Image8 tensor_to_image(const Tensor<S>& t, int sample = 0) {
  Image8 img(t.c, t.h, t.w);
  for (int c = 0; c < t.c; ++c)
    for (int y = 0; y < t.h; ++y)
      for (int x = 0; x < t.w; ++x) img.at(c, y, x) = quantize_unit(double(t.at(sample, c, y, x)));
  return img;
}

// unit-range tensor; gray images replicate to `channels`
template <class S>
Tensor<S> image_to_tensor(const Image8& img, int channels = 3) {
  Tensor<S> t(1, channels, img.h, img.w);
  for (int c = 0; c < channels; ++c) {
    const int src = img.c == 1 ? 0 : (c < img.c ? c : img.c - 1);
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) t.at(0, c, y, x) = S(img.at(src, y, x)) / S(255);
  }
  return t;
}

inline std::uint64_t image_hash(const Image8& img, std::uint64_t seed = 14695981039346656037ULL) {
  std::uint64_t h = hash_bytes(&img.c, sizeof(int), seed);
  h = hash_bytes(&img.h, sizeof(int), h);
  h = hash_bytes(&img.w, sizeof(int), h);
  return hash_bytes(img.px.data(), img.px.size(), h);
}

// ---------------------------------------------------------------------------
// netpbm

inline void write_pnm(const Image8& img, const std::filesystem::path& path) {
  if (img.c != 1 && img.c != 3) throw InputError("write_pnm: only 1- or 3-channel images");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("write_pnm: cannot open " + path.string());
  f << (img.c == 1 ? "P5" : "P6") << "\n" << img.w << " " << img.h << "\n255\n";
  std::vector<std::uint8_t> row(std::size_t(img.w) * img.c);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < img.c; ++c) row[std::size_t(x) * img.c + c] = img.at(c, y, x);
    f.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
  }
  if (!f) throw InputError("write_pnm: write failed for " + path.string());
}

inline Image8 read_pnm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("read_pnm: cannot open " + path.string());
  std::string magic;
  f >> magic;
  if (magic != "P5" && magic != "P6") throw InputError("read_pnm: unsupported format in " + path.string());
  auto next_int = [&]() {
    int v;
    while (true) {
      f >> std::ws;
      if (f.peek() == '#') {
        std::string line;
        std::getline(f, line);
        continue;
      }
      if (!(f >> v)) throw InputError("read_pnm: malformed header in " + path.string());
      return v;
    }
  };
  const int w = next_int(), h = next_int(), maxval = next_int();
  if (maxval != 255) throw InputError("read_pnm: only maxval 255 supported, got " + std::to_string(maxval));
  f.get();  // single whitespace after maxval
  const int c = magic == "P5" ? 1 : 3;
  Image8 img(c, h, w);
  std::vector<std::uint8_t> row(std::size_t(w) * c);
  for (int y = 0; y < h; ++y) {
    f.read(reinterpret_cast<char*>(row.data()), std::streamsize(row.size()));
    if (!f) throw InputError("read_pnm: truncated data in " + path.string());
    for (int x = 0; x < w; ++x)
      for (int ci = 0; ci < c; ++ci) img.at(ci, y, x) = row[std::size_t(x) * c + ci];
  }
  return img;
}

// bilinear resize, per channel
inline Image8 resize_bilinear(const Image8& src, int oh, int ow) {
  if (oh == src.h && ow == src.w) return src;
  Image8 out(src.c, oh, ow);
  for (int c = 0; c < src.c; ++c)
    for (int y = 0; y < oh; ++y) {
      double sy = (y + 0.5) * double(src.h) / oh - 0.5;
      sy = std::min(std::max(sy, 0.0), double(src.h - 1));
      const int y0 = int(sy), y1 = std::min(y0 + 1, src.h - 1);
      const double fy = sy - y0;
      for (int x = 0; x < ow; ++x) {
        double sx = (x + 0.5) * double(src.w) / ow - 0.5;
        sx = std::min(std::max(sx, 0.0), double(src.w - 1));
        const int x0 = int(sx), x1 = std::min(x0 + 1, src.w - 1);
        const double fx = sx - x0;
        const double v = (1 - fy) * ((1 - fx) * src.at(c, y0, x0) + fx * src.at(c, y0, x1)) +
                         fy * ((1 - fx) * src.at(c, y1, x0) + fx * src.at(c, y1, x1));
        out.at(c, y, x) = std::uint8_t(std::lround(std::min(std::max(v, 0.0), 255.0)));
      }
    }
  return out;
}

inline Image8 center_crop_to_multiple(const Image8& src, int divisor) {
  const int ch = (src.h / divisor) * divisor;
  const int cw = (src.w / divisor) * divisor;
  if (ch < divisor || cw < divisor)
    throw InputError("center_crop: image " + std::to_string(src.h) + "x" + std::to_string(src.w) +
                     " smaller than divisor " + std::to_string(divisor));
  if (ch == src.h && cw == src.w) return src;
  const int oy = (src.h - ch) / 2, ox = (src.w - cw) / 2;
  Image8 out(src.c, ch, cw);
  for (int c = 0; c < src.c; ++c)
    for (int y = 0; y < ch; ++y)
      for (int x = 0; x < cw; ++x) out.at(c, y, x) = src.at(c, y + oy, x + ox);
  return out;
}

// ---------------------------------------------------------------------------
// PNG (lossless, stored deflate blocks)

namespace detail {

inline std::uint32_t crc32_table(std::uint8_t i) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t n = 0; n < 256; ++n) {
      std::uint32_t c = n;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[n] = c;
    }
    return t;
  }();
  return table[i];
}

inline std::uint32_t crc32(const std::uint8_t* data, std::size_t len, std::uint32_t crc = 0xFFFFFFFFu) {
  for (std::size_t i = 0; i < len; ++i) crc = crc32_table(std::uint8_t((crc ^ data[i]) & 0xFF)) ^ (crc >> 8);
  return crc;
}

inline void push_be32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back(std::uint8_t(x >> 24));
  v.push_back(std::uint8_t(x >> 16));
  v.push_back(std::uint8_t(x >> 8));
  v.push_back(std::uint8_t(x));
}

inline void png_chunk(std::ofstream& f, const char type[4], const std::vector<std::uint8_t>& data) {
  std::vector<std::uint8_t> head;
  push_be32(head, std::uint32_t(data.size()));
  f.write(reinterpret_cast<const char*>(head.data()), 4);
  std::vector<std::uint8_t> body(type, type + 4);
  body.insert(body.end(), data.begin(), data.end());
  f.write(reinterpret_cast<const char*>(body.data()), std::streamsize(body.size()));
  std::vector<std::uint8_t> crc;
  push_be32(crc, crc32(body.data(), body.size()) ^ 0xFFFFFFFFu);
  f.write(reinterpret_cast<const char*>(crc.data()), 4);
}

}  // namespace detail

inline void write_png(const Image8& img, const std::filesystem::path& path) {
  if (img.c != 1 && img.c != 3) throw InputError("write_png: only 1- or 3-channel images");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("write_png: cannot open " + path.string());
  static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  f.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<std::uint8_t> ihdr;
  detail::push_be32(ihdr, std::uint32_t(img.w));
  detail::push_be32(ihdr, std::uint32_t(img.h));
  ihdr.push_back(8);                            // bit depth
  ihdr.push_back(img.c == 1 ? 0 : 2);           // gray / truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  detail::png_chunk(f, "IHDR", ihdr);

  // raw scanlines, filter 0
  std::vector<std::uint8_t> raw;
  raw.reserve(std::size_t(img.h) * (1 + std::size_t(img.w) * img.c));
  for (int y = 0; y < img.h; ++y) {
    raw.push_back(0);
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < img.c; ++c) raw.push_back(img.at(c, y, x));
  }

  std::vector<std::uint8_t> idat;
  idat.push_back(0x78);
  idat.push_back(0x01);
  std::size_t off = 0;
  while (off < raw.size() || raw.empty()) {
    const std::size_t n = std::min<std::size_t>(65535, raw.size() - off);
    const bool last = off + n == raw.size();
    idat.push_back(last ? 1 : 0);
    idat.push_back(std::uint8_t(n & 0xFF));
    idat.push_back(std::uint8_t(n >> 8));
    idat.push_back(std::uint8_t(~n & 0xFF));
    idat.push_back(std::uint8_t((~n >> 8) & 0xFF));
    idat.insert(idat.end(), raw.begin() + std::ptrdiff_t(off), raw.begin() + std::ptrdiff_t(off + n));
    off += n;
    if (raw.empty()) break;
  }
  std::uint32_t a = 1, b = 0;
  for (std::uint8_t byte : raw) {
    a = (a + byte) % 65521;
    b = (b + a) % 65521;
  }
  detail::push_be32(idat, (b << 16) | a);
  detail::png_chunk(f, "IDAT", idat);
  detail::png_chunk(f, "IEND", {});
  if (!f) throw InputError("write_png: write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// animated GIF (grayscale palette; literal-only LZW stream)

inline void write_gif_animation(const std::vector<Image8>& frames, const std::filesystem::path& path,
                                int delay_cs = 10) {
  if (frames.empty()) throw InputError("write_gif_animation: no frames");
  const int h = frames.front().h, w = frames.front().w;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("write_gif_animation: cannot open " + path.string());
  auto put = [&](std::uint8_t v) { f.put(char(v)); };
  auto put16 = [&](int v) {
    put(std::uint8_t(v & 0xFF));
    put(std::uint8_t((v >> 8) & 0xFF));
  };
  f.write("GIF89a", 6);
  put16(w);
  put16(h);
  put(0xF7);  // global table, 256 entries
  put(0);
  put(0);
  for (int i = 0; i < 256; ++i) {
    put(std::uint8_t(i));
    put(std::uint8_t(i));
    put(std::uint8_t(i));
  }
  // loop forever
  put(0x21);
  put(0xFF);
  put(11);
  f.write("NETSCAPE2.0", 11);
  put(3);
  put(1);
  put16(0);
  put(0);

  for (const auto& img : frames) {
    if (img.h != h || img.w != w) throw DimensionError("write_gif_animation: frame size mismatch");
    put(0x21);
    put(0xF9);
    put(4);
    put(0x04);  // do not dispose
    put16(delay_cs);
    put(0);
    put(0);
    put(0x2C);
    put16(0);
    put16(0);
    put16(w);
    put16(h);
    put(0);
    put(8);  // LZW minimum code size

    // 9-bit codes, LSB-first; clear every 120 literals so the code width never grows
    std::vector<std::uint8_t> stream;
    std::uint32_t bitbuf = 0;
    int bits = 0;
    auto emit = [&](int code) {
      bitbuf |= std::uint32_t(code) << bits;
      bits += 9;
      while (bits >= 8) {
        stream.push_back(std::uint8_t(bitbuf & 0xFF));
        bitbuf >>= 8;
        bits -= 8;
      }
    };
    emit(256);  // initial clear
    int since_clear = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        int v;
        if (img.c == 1) {
          v = img.at(0, y, x);
        } else {
          v = int(std::lround(0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) + 0.114 * img.at(2, y, x)));
          v = std::min(v, 255);
        }
        emit(v);
        if (++since_clear >= 120) {
          emit(256);
          since_clear = 0;
        }
      }
    emit(257);  // end of information
    if (bits > 0) stream.push_back(std::uint8_t(bitbuf & 0xFF));
    std::size_t off = 0;
    while (off < stream.size()) {
      const std::size_t n = std::min<std::size_t>(255, stream.size() - off);
      put(std::uint8_t(n));
      f.write(reinterpret_cast<const char*>(stream.data() + off), std::streamsize(n));
      off += n;
    }
    put(0);  // block terminator
  }
  put(0x3B);
  if (!f) throw InputError("write_gif_animation: write failed for " + path.string());
}

}  // namespace mspn
