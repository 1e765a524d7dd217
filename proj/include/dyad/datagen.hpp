#pragma once
// Deterministic synthetic digit corpus in IDX format. Ten fixed 5x7 glyph
// bitmaps are rendered onto a 28x28 canvas through a jittered affine map
// (shift, scale, rotation, intensity) plus pixel noise, all driven by one
// seed. The classes are clearly separable yet non-trivial, which makes the
// corpus suitable for end-to-end training runs on machines where the real
// handwritten-digit files are unavailable. Writers emit the classic
// big-endian IDX layout, so the loader treats generated and downloaded data
// identically.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dyad/rng.hpp"

namespace dyad {

namespace detail {

// 5x7 digit glyphs, '#' = ink.
inline const char* const kGlyphRows[10][7] = {
    {".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."},  // 0
    {"..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."},  // 1
    {".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"},  // 2
    {"#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."},  // 3
    {"...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."},  // 4
    {"#####", "#....", "####.", "....#", "....#", "#...#", ".###."},  // 5
    {"..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."},  // 6
    {"#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."},  // 7
    {".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."},  // 8
    {".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."},  // 9
};

inline double glyph_bit(int digit, double row, double col) {
  const int r = static_cast<int>(row), c = static_cast<int>(col);
  if (r < 0 || r > 6 || c < 0 || c > 4) return 0.0;
  return kGlyphRows[digit][r][c] == '#' ? 1.0 : 0.0;
}

// Bilinear sample of the glyph at fractional template coordinates.
inline double glyph_sample(int digit, double row, double col) {
  const double r0 = std::floor(row), c0 = std::floor(col);
  const double fr = row - r0, fc = col - c0;
  return (1 - fr) * (1 - fc) * glyph_bit(digit, r0, c0) +
         (1 - fr) * fc * glyph_bit(digit, r0, c0 + 1) +
         fr * (1 - fc) * glyph_bit(digit, r0 + 1, c0) +
         fr * fc * glyph_bit(digit, r0 + 1, c0 + 1);
}

}  // namespace detail

struct SyntheticDigits {
  std::vector<unsigned char> pixels;  // n * 28 * 28, row-major per example
  std::vector<unsigned char> labels;  // n values in 0..9
};

// Renders n jittered digit images. Fully determined by the seed.
inline SyntheticDigits generate_digits(index_t n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("generate_digits: n must be >= 1");
  constexpr int kSide = 28;
  SyntheticDigits out;
  out.pixels.resize(static_cast<std::size_t>(n) * kSide * kSide);
  out.labels.resize(static_cast<std::size_t>(n));
  SplitMix64 rng(seed);

  for (index_t e = 0; e < n; ++e) {
    const int digit = static_cast<int>(rng.below(10));
    out.labels[e] = static_cast<unsigned char>(digit);
    const double angle = rng.uniform(-0.15, 0.15);
    const double scale = rng.uniform(0.9, 1.1);
    const double dx = rng.uniform(-2.0, 2.0);
    const double dy = rng.uniform(-2.0, 2.0);
    const double intensity = rng.uniform(0.7, 1.0);
    const double ca = std::cos(angle), sa = std::sin(angle);
    // template cell extent on the canvas before jitter (glyph ~ 14 x 20 px)
    const double cell = 2.8;
    unsigned char* img = out.pixels.data() + static_cast<std::size_t>(e) * kSide * kSide;
    for (int r = 0; r < kSide; ++r) {
      for (int c = 0; c < kSide; ++c) {
        const double u = c - 13.5 - dx;
        const double v = r - 13.5 - dy;
        const double ru = ca * u + sa * v;   // unrotate
        const double rv = -sa * u + ca * v;
        const double gcol = ru / (scale * cell) + 2.0;  // template center (3, 2)
        const double grow = rv / (scale * cell) + 3.0;
        double val = intensity * detail::glyph_sample(digit, grow, gcol);
        val += rng.uniform(0.0, 0.06);  // sensor-style additive noise
        if (val < 0) val = 0;
        if (val > 1) val = 1;
        img[r * kSide + c] = static_cast<unsigned char>(std::lround(val * 255.0));
      }
    }
  }
  return out;
}

namespace detail {

inline void write_u32_be(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace detail

inline void write_idx_images(const std::string& path,
                             const std::vector<unsigned char>& pixels, index_t count,
                             index_t rows = 28, index_t cols = 28) {
  if (static_cast<index_t>(pixels.size()) != count * rows * cols)
    throw std::invalid_argument("write_idx_images: pixel count mismatch");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("write_idx_images: cannot open " + path);
  detail::write_u32_be(os, 0x00000803u);
  detail::write_u32_be(os, static_cast<std::uint32_t>(count));
  detail::write_u32_be(os, static_cast<std::uint32_t>(rows));
  detail::write_u32_be(os, static_cast<std::uint32_t>(cols));
  os.write(reinterpret_cast<const char*>(pixels.data()),
           static_cast<std::streamsize>(pixels.size()));
  if (!os) throw std::runtime_error("write_idx_images: write failed for " + path);
}

inline void write_idx_labels(const std::string& path,
                             const std::vector<unsigned char>& labels) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("write_idx_labels: cannot open " + path);
  detail::write_u32_be(os, 0x00000801u);
  detail::write_u32_be(os, static_cast<std::uint32_t>(labels.size()));
  os.write(reinterpret_cast<const char*>(labels.data()),
           static_cast<std::streamsize>(labels.size()));
  if (!os) throw std::runtime_error("write_idx_labels: write failed for " + path);
}

// Writes the four canonical files into dir unless all are already present.
// Train and test use disjoint seeds. Returns true if files were generated.
inline bool ensure_digit_files(const std::string& dir, index_t n_train = 20000,
                               index_t n_test = 4000, std::uint64_t seed = 20240601) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  const fs::path names[4] = {root / "train-images-idx3-ubyte", root / "train-labels-idx1-ubyte",
                             root / "t10k-images-idx3-ubyte", root / "t10k-labels-idx1-ubyte"};
  bool all_present = true;
  for (const fs::path& p : names)
    if (!fs::exists(p)) all_present = false;
  if (all_present) return false;
  fs::create_directories(root);
  SyntheticDigits train = generate_digits(n_train, seed);
  SyntheticDigits test = generate_digits(n_test, seed + 0x517cc1b727220a95ull);
  write_idx_images(names[0].string(), train.pixels, n_train);
  write_idx_labels(names[1].string(), train.labels);
  write_idx_images(names[2].string(), test.pixels, n_test);
  write_idx_labels(names[3].string(), test.labels);
  return true;
}

}  // namespace dyad
