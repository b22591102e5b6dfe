#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "qnn/stn1.hpp"

namespace qnn {

/// One picture component, row-major, integer samples.
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<std::int32_t> samples;

  Plane() = default;
  Plane(int w, int h, std::int32_t value = 0) : width(w), height(h), samples(static_cast<std::size_t>(w) * h, value) {
    check(w > 0 && h > 0, ErrorKind::InvalidArgument, "plane extents must be positive");
  }

  std::int32_t& at(int x, int y) { return samples[static_cast<std::size_t>(y) * width + x]; }
  std::int32_t at(int x, int y) const { return samples[static_cast<std::size_t>(y) * width + x]; }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  /// Edge-replicated read.
  std::int32_t clamped(int x, int y) const { return at(std::clamp(x, 0, width - 1), std::clamp(y, 0, height - 1)); }

  bool operator==(const Plane&) const = default;
};

inline void require_same_dims(const Plane& a, const Plane& b, const std::string& what) {
  check(a.width == b.width && a.height == b.height, ErrorKind::ShapeMismatch,
        what + ": " + std::to_string(b.width) + "x" + std::to_string(b.height) + " vs " + std::to_string(a.width) + "x" +
            std::to_string(a.height));
}

// ---------------------------------------------------------------------------------------------
// STN1 planes are rank-2 integer tensors [H, W] with q = 0.

inline Plane plane_from_tensor(const AnyTensor& t) {
  const Dims& d = dims_of_any(t);
  check(d.size() == 2, ErrorKind::ShapeMismatch, "plane tensor must be rank 2 [H, W], got " + to_string(d));
  Plane p(d[1], d[0]);
  std::visit(
      [&](const auto& x) {
        for (std::size_t i = 0; i < x.size(); ++i) p.samples[i] = static_cast<std::int32_t>(std::lround(static_cast<double>(x[i])));
      },
      t);
  return p;
}

inline Tensor<std::int32_t> plane_to_tensor(const Plane& p) {
  return Tensor<std::int32_t>({p.height, p.width}, p.samples, 0);
}

inline Plane load_plane_stn1(const std::string& path) { return plane_from_tensor(load_stn1(path)); }

inline void save_plane_stn1(const std::string& path, const Plane& p) { save_stn1(path, plane_to_tensor(p)); }

// ---------------------------------------------------------------------------------------------
// PGM (P5) and Y4M luma readers. `bit_depth` receives the stored precision.

namespace detail {

inline std::string pnm_token(const std::vector<std::uint8_t>& b, std::size_t& pos) {
  for (;;) {
    while (pos < b.size() && std::isspace(b[pos])) ++pos;
    if (pos < b.size() && b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  std::string tok;
  while (pos < b.size() && !std::isspace(b[pos])) tok += static_cast<char>(b[pos++]);
  check(!tok.empty(), ErrorKind::Truncated, "PGM header cut short");
  return tok;
}

inline int parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    check(used == s.size(), ErrorKind::BadMagic, "bad " + what + " '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    fail(ErrorKind::BadMagic, "bad " + what + " '" + s + "'");
  }
}

inline void read_samples(const std::vector<std::uint8_t>& b, std::size_t pos, bool wide, bool big_endian, Plane& p) {
  const std::size_t n = p.samples.size() * (wide ? 2 : 1);
  check(b.size() >= pos && b.size() - pos >= n, ErrorKind::Truncated, "sample payload cut short");
  for (std::size_t i = 0; i < p.samples.size(); ++i) {
    if (!wide) {
      p.samples[i] = b[pos + i];
    } else {
      const std::uint8_t b0 = b[pos + 2 * i], b1 = b[pos + 2 * i + 1];
      p.samples[i] = big_endian ? (b0 << 8 | b1) : (b1 << 8 | b0);
    }
  }
}

}  // namespace detail

inline Plane decode_pgm(const std::vector<std::uint8_t>& b, int* bit_depth = nullptr) {
  std::size_t pos = 0;
  check(b.size() >= 2 && b[0] == 'P' && b[1] == '5', ErrorKind::BadMagic, "not a binary PGM (P5)");
  pos = 2;
  const int w = detail::parse_int(detail::pnm_token(b, pos), "width");
  const int h = detail::parse_int(detail::pnm_token(b, pos), "height");
  const int maxval = detail::parse_int(detail::pnm_token(b, pos), "maxval");
  check(w > 0 && h > 0 && maxval > 0 && maxval < 65536, ErrorKind::BadMagic, "bad PGM header");
  ++pos;  // single whitespace before the raster
  Plane p(w, h);
  detail::read_samples(b, pos, maxval > 255, true, p);
  if (bit_depth) {
    int bits = 1;
    while ((1 << bits) - 1 < maxval) ++bits;
    *bit_depth = bits;
  }
  return p;
}

/// Luma of the first frame of a Y4M stream (8-bit or the 10-bit "p10" colour spaces, little-endian).
inline Plane decode_y4m(const std::vector<std::uint8_t>& b, int* bit_depth = nullptr) {
  const std::string magic = "YUV4MPEG2";
  check(b.size() >= magic.size() && std::equal(magic.begin(), magic.end(), b.begin()), ErrorKind::BadMagic, "not a Y4M stream");
  auto eol = std::find(b.begin(), b.end(), '\n');
  check(eol != b.end(), ErrorKind::Truncated, "Y4M header has no end");
  std::istringstream header(std::string(b.begin(), eol));
  int w = 0, h = 0, bits = 8;
  std::string tok;
  while (header >> tok) {
    if (tok[0] == 'W') w = detail::parse_int(tok.substr(1), "Y4M width");
    if (tok[0] == 'H') h = detail::parse_int(tok.substr(1), "Y4M height");
    if (tok[0] == 'C' && tok.find("p10") != std::string::npos) bits = 10;
    if (tok[0] == 'C' && tok.find("p12") != std::string::npos) bits = 12;
  }
  check(w > 0 && h > 0, ErrorKind::BadMagic, "Y4M header lacks W/H");
  std::size_t pos = static_cast<std::size_t>(eol - b.begin()) + 1;
  const std::string frame = "FRAME";
  check(b.size() >= pos + frame.size() && std::equal(frame.begin(), frame.end(), b.begin() + static_cast<long>(pos)),
        ErrorKind::Truncated, "Y4M stream has no frame");
  auto fe = std::find(b.begin() + static_cast<long>(pos), b.end(), '\n');
  check(fe != b.end(), ErrorKind::Truncated, "Y4M frame header has no end");
  pos = static_cast<std::size_t>(fe - b.begin()) + 1;
  Plane p(w, h);
  detail::read_samples(b, pos, bits > 8, false, p);
  if (bit_depth) *bit_depth = bits;
  return p;
}

inline std::vector<std::uint8_t> encode_pgm(const Plane& p, int bit_depth) {
  const int maxval = (1 << bit_depth) - 1;
  std::string header = "P5\n" + std::to_string(p.width) + " " + std::to_string(p.height) + "\n" + std::to_string(maxval) + "\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (std::int32_t s : p.samples) {
    const int v = std::clamp(s, 0, maxval);
    if (maxval > 255) out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
  }
  return out;
}

/// Reads a frame, choosing the reader from the file extension (.pgm, .y4m, .stn1).
inline Plane load_frame(const std::string& path, int* bit_depth = nullptr) {
  auto ends_with = [&](const std::string& s) {
    return path.size() >= s.size() && path.compare(path.size() - s.size(), s.size(), s) == 0;
  };
  if (ends_with(".pgm")) return decode_pgm(io::read_file(path), bit_depth);
  if (ends_with(".y4m")) return decode_y4m(io::read_file(path), bit_depth);
  if (ends_with(".stn1")) {
    if (bit_depth) *bit_depth = 0;
    return load_plane_stn1(path);
  }
  fail(ErrorKind::InvalidArgument, "unknown frame extension for " + path + " (expected .pgm, .y4m or .stn1)");
}

/// Rescales samples from one bit depth to another (left shift up, rounded right shift down).
inline Plane rescale_bit_depth(const Plane& p, int from, int to) {
  if (from == to) return p;
  Plane out = p;
  for (auto& s : out.samples) s = to > from ? s << (to - from) : static_cast<std::int32_t>(round_shift(s, from - to));
  return out;
}

}  // namespace qnn
