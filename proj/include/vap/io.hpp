#pragma once

// File formats:
//   * embedding matrices: "VAPE", version byte 1, u32 LE rows, u32 LE cols,
//     then rows*cols IEEE-754 binary32 LE values, row-major, no padding;
//   * images: binary PPM (P6) for RGB, binary PGM (P5) for masks with 0/255.

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "vap/embedalign.hpp"
#include "vap/error.hpp"
#include "vap/scene.hpp"

namespace vap::io {

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Embedding matrices

inline constexpr char kMatrixMagic[4] = {'V', 'A', 'P', 'E'};
inline constexpr std::uint8_t kMatrixVersion = 1;
inline constexpr std::size_t kMatrixHeaderSize = 4 + 1 + 4 + 4;

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

inline std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(in[at + k]) << (8 * k);
  return v;
}

}  // namespace detail

/// Values are stored as binary32, so doubles are narrowed on write.
inline std::vector<std::uint8_t> encode_matrix(const EmbeddingMatrix& m) {
  std::vector<std::uint8_t> out(std::begin(kMatrixMagic), std::end(kMatrixMagic));
  out.push_back(kMatrixVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
  detail::put_u32(out, static_cast<std::uint32_t>(m.cols()));
  out.reserve(out.size() + 4 * m.values().size());
  for (double v : m.values()) detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

inline EmbeddingMatrix decode_matrix(const std::vector<std::uint8_t>& in) {
  if (in.size() < 4) throw FormatError("embedding matrix: file shorter than magic", in.size());
  for (std::size_t i = 0; i < 4; ++i)
    if (in[i] != static_cast<std::uint8_t>(kMatrixMagic[i])) throw FormatError("embedding matrix: bad magic", i);
  if (in.size() < 5) throw FormatError("embedding matrix: missing version byte", 4);
  if (in[4] != kMatrixVersion)
    throw FormatError("embedding matrix: unsupported version " + std::to_string(in[4]), 4);
  if (in.size() < kMatrixHeaderSize) throw FormatError("embedding matrix: truncated header", in.size());
  const std::uint64_t rows = detail::get_u32(in, 5);
  const std::uint64_t cols = detail::get_u32(in, 9);
  if (rows == 0 || cols == 0) throw FormatError("embedding matrix: zero dimension", 5);
  const std::uint64_t expected = kMatrixHeaderSize + 4 * rows * cols;
  if (in.size() != expected)
    throw FormatError("embedding matrix: expected " + std::to_string(expected) + " bytes, found " +
                          std::to_string(in.size()),
                      std::min<std::uint64_t>(in.size(), expected));
  std::vector<double> values(rows * cols);
  for (std::size_t k = 0; k < values.size(); ++k) {
    const float f = std::bit_cast<float>(detail::get_u32(in, kMatrixHeaderSize + 4 * k));
    if (!std::isfinite(f)) throw FormatError("embedding matrix: non-finite value", kMatrixHeaderSize + 4 * k);
    values[k] = f;
  }
  return EmbeddingMatrix(rows, cols, std::move(values));
}

inline EmbeddingMatrix load_embedding_matrix(const std::filesystem::path& path) {
  return decode_matrix(read_bytes(path));
}

inline void save_embedding_matrix(const std::filesystem::path& path, const EmbeddingMatrix& m) {
  write_bytes(path, encode_matrix(m));
}

// ---------------------------------------------------------------------------
// Netpbm

namespace detail {

struct PnmHeader {
  char kind = 0;  // '5' or '6'
  int width = 0;
  int height = 0;
  std::size_t data_offset = 0;
};

inline void skip_space_and_comments(const std::vector<std::uint8_t>& in, std::size_t& at) {
  while (at < in.size()) {
    if (std::isspace(in[at])) {
      ++at;
    } else if (in[at] == '#') {
      while (at < in.size() && in[at] != '\n') ++at;
    } else {
      break;
    }
  }
}

inline int read_header_int(const std::vector<std::uint8_t>& in, std::size_t& at) {
  skip_space_and_comments(in, at);
  const std::size_t start = at;
  long long v = 0;
  while (at < in.size() && std::isdigit(in[at])) {
    v = v * 10 + (in[at] - '0');
    if (v > (1 << 24)) throw FormatError("netpbm: header value too large", start);
    ++at;
  }
  if (at == start) throw FormatError("netpbm: expected a decimal header field", start);
  return static_cast<int>(v);
}

inline PnmHeader parse_header(const std::vector<std::uint8_t>& in) {
  if (in.size() < 2 || in[0] != 'P' || (in[1] != '5' && in[1] != '6'))
    throw FormatError("netpbm: unsupported header (only P5 and P6 are accepted)", 0);
  PnmHeader h;
  h.kind = static_cast<char>(in[1]);
  std::size_t at = 2;
  h.width = read_header_int(in, at);
  h.height = read_header_int(in, at);
  const std::size_t maxval_at = at;
  const int maxval = read_header_int(in, at);
  if (h.width <= 0 || h.height <= 0) throw FormatError("netpbm: zero image dimension", 2);
  if (maxval != 255) throw FormatError("netpbm: maxval must be 255", maxval_at);
  if (at >= in.size() || !std::isspace(in[at])) throw FormatError("netpbm: missing separator after maxval", at);
  h.data_offset = at + 1;
  const std::size_t channels = h.kind == '6' ? 3 : 1;
  const std::size_t need = h.data_offset + channels * static_cast<std::size_t>(h.width) * h.height;
  if (in.size() < need)
    throw FormatError("netpbm: expected " + std::to_string(need) + " bytes, found " + std::to_string(in.size()),
                      in.size());
  return h;
}

inline std::vector<std::uint8_t> header_bytes(const char* magic, int w, int h) {
  const std::string s = std::string(magic) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  return {s.begin(), s.end()};
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_ppm(const RasterImage& img) {
  auto out = detail::header_bytes("P6", img.width(), img.height());
  out.insert(out.end(), img.bytes().begin(), img.bytes().end());
  return out;
}

inline RasterImage decode_ppm(const std::vector<std::uint8_t>& in) {
  const auto h = detail::parse_header(in);
  if (h.kind != '6') throw FormatError("expected a P6 (RGB) image", 1);
  RasterImage img(h.width, h.height);
  std::memcpy(img.bytes().data(), in.data() + h.data_offset, img.bytes().size());
  return img;
}

inline std::vector<std::uint8_t> encode_pgm_mask(const Mask& m) {
  auto out = detail::header_bytes("P5", m.width(), m.height());
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) out.push_back(m.at(x, y) ? 255 : 0);
  return out;
}

/// Masks are strict: every sample must be 0 (clear) or 255 (set).
inline Mask decode_pgm_mask(const std::vector<std::uint8_t>& in) {
  const auto h = detail::parse_header(in);
  if (h.kind != '5') throw FormatError("expected a P5 (grey) mask", 1);
  Mask m(h.width, h.height);
  for (int y = 0; y < h.height; ++y)
    for (int x = 0; x < h.width; ++x) {
      const std::size_t at = h.data_offset + static_cast<std::size_t>(y) * h.width + x;
      const auto v = in[at];
      if (v != 0 && v != 255) throw FormatError("mask sample " + std::to_string(v) + " is neither 0 nor 255", at);
      m.set(x, y, v == 255);
    }
  return m;
}

inline RasterImage load_image(const std::filesystem::path& path) { return decode_ppm(read_bytes(path)); }
inline void save_image(const std::filesystem::path& path, const RasterImage& img) { write_bytes(path, encode_ppm(img)); }
inline Mask load_mask(const std::filesystem::path& path) { return decode_pgm_mask(read_bytes(path)); }
inline void save_mask(const std::filesystem::path& path, const Mask& m) { write_bytes(path, encode_pgm_mask(m)); }

}  // namespace vap::io
