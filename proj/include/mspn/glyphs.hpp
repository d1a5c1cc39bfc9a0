// Bundled 12x12 digit bitmaps so synthetic sequence generation needs no
// external corpus. A loader for idx-format digit files can replace these when
// the files are available locally (see data.hpp).
#pragma once

#include <array>

#include "mspn/image_io.hpp"

namespace mspn {

namespace detail {
inline const char* const* glyph_rows(int digit) {
  static const char* g0[12] = {"...######...", "..##....##..", "..##....##..", "..##....##..",
                               "..##....##..", "..##....##..", "..##....##..", "..##....##..",
                               "..##....##..", "..##....##..", "..##....##..", "...######..."};
  static const char* g1[12] = {".....##.....", "....###.....", "...####.....", ".....##.....",
                               ".....##.....", ".....##.....", ".....##.....", ".....##.....",
                               ".....##.....", ".....##.....", "...######...", "...######..."};
  static const char* g2[12] = {"..#######...", ".##.....##..", "........##..", "........##..",
                               ".......##...", "......##....", ".....##.....", "....##......",
                               "...##.......", "..##........", "..#########.", "..#########."};
  static const char* g3[12] = {"..########..", ".........##.", ".........##.", ".........##.",
                               "...######...", "...######...", ".........##.", ".........##.",
                               ".........##.", ".........##.", "..########..", "............"};
  static const char* g4[12] = {"......###...", ".....####...", "....##.##...", "...##..##...",
                               "..##...##...", ".##....##...", ".##########.", ".##########.",
                               ".......##...", ".......##...", ".......##...", "............"};
  static const char* g5[12] = {"..#########.", "..##........", "..##........", "..##........",
                               "..########..", ".........##.", ".........##.", ".........##.",
                               ".........##.", ".........##.", "..########..", "............"};
  static const char* g6[12] = {"...#######..", "..##........", "..##........", "..##........",
                               "..########..", "..##.....##.", "..##.....##.", "..##.....##.",
                               "..##.....##.", "..##.....##.", "...#######..", "............"};
  static const char* g7[12] = {"..#########.", "..#########.", "........##..", ".......##...",
                               "......##....", "......##....", ".....##.....", ".....##.....",
                               "....##......", "....##......", "....##......", "............"};
  static const char* g8[12] = {"...#######..", "..##.....##.", "..##.....##.", "..##.....##.",
                               "...#######..", "...#######..", "..##.....##.", "..##.....##.",
                               "..##.....##.", "..##.....##.", "...#######..", "............"};
  static const char* g9[12] = {"...#######..", "..##.....##.", "..##.....##.", "..##.....##.",
                               "..##.....##.", "...########.", ".........##.", ".........##.",
                               ".........##.", "........##..", "...######...", "............"};
  static const char* const* all[10] = {g0, g1, g2, g3, g4, g5, g6, g7, g8, g9};
  return all[digit];
}
}  // namespace detail

inline const std::array<Image8, 10>& digit_glyphs() {
  static const std::array<Image8, 10> glyphs = [] {
    std::array<Image8, 10> out;
    for (int d = 0; d < 10; ++d) {
      Image8 img(1, 12, 12);
      const char* const* rows = detail::glyph_rows(d);
      for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 12; ++x) img.at(0, y, x) = rows[y][x] == '#' ? 255 : 0;
      out[std::size_t(d)] = std::move(img);
    }
    return out;
  }();
  return glyphs;
}

}  // namespace mspn
