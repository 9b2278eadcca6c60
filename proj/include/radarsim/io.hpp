#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "radarsim/grid.hpp"

namespace radarsim {

// The frame file format is little-endian float32; this library writes host
// byte order directly.
static_assert(std::endian::native == std::endian::little,
              "frame file IO assumes a little-endian host");

inline void write_bytes(const std::filesystem::path& path, const void* data, size_t bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

inline std::vector<char> read_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw std::runtime_error("cannot open for reading: " + path.string());
  const std::streamsize n = f.tellg();
  f.seekg(0);
  std::vector<char> buf(static_cast<size_t>(n));
  f.read(buf.data(), n);
  if (!f) throw std::runtime_error("read failed: " + path.string());
  return buf;
}

// Raw float32, row-major, azimuth outer; no header.
inline void write_f32_grid(const std::filesystem::path& path, const Grid& g) {
  write_bytes(path, g.v.data(), g.v.size() * sizeof(float));
}

inline Grid read_f32_grid(const std::filesystem::path& path, int rows, int cols) {
  const std::vector<char> buf = read_bytes(path);
  const size_t expect = static_cast<size_t>(rows) * cols * sizeof(float);
  if (buf.size() != expect)
    throw std::runtime_error("frame file " + path.string() + ": expected " +
                             std::to_string(expect) + " bytes, found " +
                             std::to_string(buf.size()));
  Grid g(rows, cols);
  std::memcpy(g.v.data(), buf.data(), expect);
  return g;
}

// Shortest round-trip decimal rendering; used everywhere a float reaches a
// text file so reruns are byte-identical.
inline std::string format_double(double x) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

// 8-bit binary PGM; values in [lo, hi] map linearly to 0..255.
inline void write_pgm(const std::filesystem::path& path, const float* data, int width,
                      int height, float lo = -1.0f, float hi = 1.0f) {
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.reserve(out.size() + static_cast<size_t>(width) * height);
  const float scale = 255.0f / (hi - lo);
  for (size_t k = 0; k < static_cast<size_t>(width) * height; ++k) {
    const float x = std::min(hi, std::max(lo, data[k]));
    out.push_back(static_cast<char>(static_cast<unsigned char>((x - lo) * scale + 0.5f)));
  }
  write_bytes(path, out.data(), out.size());
}

inline void write_pgm(const std::filesystem::path& path, const RasterImage& img,
                      float lo = -1.0f, float hi = 1.0f) {
  write_pgm(path, img.v.data(), img.size, img.size, lo, hi);
}

}  // namespace radarsim
