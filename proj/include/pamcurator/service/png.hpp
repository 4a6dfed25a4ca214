#pragma once

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pamcurator/core/error.hpp"

namespace pam::service {

/// 8-bit RGB raster, rows top to bottom.
struct RgbImage {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> rgb;  ///< width * height * 3

  RgbImage() = default;
  RgbImage(std::size_t w, std::size_t h, std::array<std::uint8_t, 3> fill = {0, 0, 0}) : width(w), height(h), rgb(w * h * 3) {
    for (std::size_t i = 0; i < w * h; ++i)
      for (int c = 0; c < 3; ++c) rgb[i * 3 + c] = fill[c];
  }

  std::uint8_t* at(std::size_t x, std::size_t y) noexcept { return rgb.data() + (y * width + x) * 3; }
  const std::uint8_t* at(std::size_t x, std::size_t y) const noexcept { return rgb.data() + (y * width + x) * 3; }
  void set(std::size_t x, std::size_t y, std::array<std::uint8_t, 3> c) noexcept {
    if (x >= width || y >= height) return;
    auto* p = at(x, y);
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }
};

namespace detail {

inline void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

inline void put_chunk(std::vector<std::uint8_t>& out, const char (&type)[5], const std::vector<std::uint8_t>& data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const auto crc = ::crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  put_be32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace detail

/// Encodes as PNG (colour type 2, bit depth 8, filter 0 on every row).
/// Compression level is fixed, so equal images give equal bytes.
inline std::vector<std::uint8_t> encode_png(const RgbImage& img) {
  if (img.width == 0 || img.height == 0 || img.rgb.size() != img.width * img.height * 3)
    throw ArgumentError("encode_png: malformed image");
  std::vector<std::uint8_t> raw;
  raw.reserve(img.height * (img.width * 3 + 1));
  for (std::size_t y = 0; y < img.height; ++y) {
    raw.push_back(0);
    const auto* row = img.at(0, y);
    raw.insert(raw.end(), row, row + img.width * 3);
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> z(zlen);
  if (compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw Error(ErrorKind::internal, "encode_png: deflate failed");
  z.resize(zlen);

  std::vector<std::uint8_t> out{0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  std::vector<std::uint8_t> ihdr;
  detail::put_be32(ihdr, static_cast<std::uint32_t>(img.width));
  detail::put_be32(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});
  detail::put_chunk(out, "IHDR", ihdr);
  detail::put_chunk(out, "IDAT", z);
  detail::put_chunk(out, "IEND", {});
  return out;
}

/// Inverse of encode_png for the subset it writes (used by tests and tools).
inline RgbImage decode_png(const std::vector<std::uint8_t>& bytes) {
  auto be32 = [&](std::size_t p) {
    if (p + 4 > bytes.size()) throw DecodeError("truncated PNG", p);
    return (std::uint32_t{bytes[p]} << 24) | (std::uint32_t{bytes[p + 1]} << 16) | (std::uint32_t{bytes[p + 2]} << 8) | bytes[p + 3];
  };
  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  if (bytes.size() < 8 || !std::equal(sig, sig + 8, bytes.begin())) throw DecodeError("not a PNG", 0);
  RgbImage img;
  std::vector<std::uint8_t> z;
  for (std::size_t p = 8; p + 8 <= bytes.size();) {
    const std::uint32_t len = be32(p);
    const std::string type(bytes.begin() + static_cast<std::ptrdiff_t>(p + 4), bytes.begin() + static_cast<std::ptrdiff_t>(p + 8));
    const std::size_t body = p + 8;
    if (body + len + 4 > bytes.size()) throw DecodeError("truncated PNG chunk", p);
    if (type == "IHDR") {
      img.width = be32(body);
      img.height = be32(body + 4);
      if (bytes[body + 8] != 8 || bytes[body + 9] != 2) throw UnsupportedFormatError("PNG: only 8-bit RGB is supported");
    } else if (type == "IDAT") {
      z.insert(z.end(), bytes.begin() + static_cast<std::ptrdiff_t>(body), bytes.begin() + static_cast<std::ptrdiff_t>(body + len));
    } else if (type == "IEND") {
      break;
    }
    p = body + len + 4;
  }
  std::vector<std::uint8_t> raw(img.height * (img.width * 3 + 1));
  uLongf rlen = static_cast<uLongf>(raw.size());
  if (raw.empty() || uncompress(raw.data(), &rlen, z.data(), static_cast<uLong>(z.size())) != Z_OK || rlen != raw.size())
    throw DecodeError("PNG: bad image data", 0);
  img.rgb.resize(img.width * img.height * 3);
  for (std::size_t y = 0; y < img.height; ++y) {
    if (raw[y * (img.width * 3 + 1)] != 0) throw UnsupportedFormatError("PNG: only filter type 0 is supported");
    std::copy_n(raw.data() + y * (img.width * 3 + 1) + 1, img.width * 3, img.at(0, y));
  }
  return img;
}

}  // namespace pam::service
