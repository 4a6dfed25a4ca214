#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "pamcurator/audio/pcm.hpp"
#include "pamcurator/core/error.hpp"

namespace pam::audio {

namespace flac_detail {

class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> bytes, std::size_t pos = 0) : bytes_(bytes), pos_(pos) {}

  std::size_t byte_pos() const noexcept { return pos_; }
  bool byte_aligned() const noexcept { return bit_ == 0; }

  void align() noexcept {
    if (bit_ != 0) {
      bit_ = 0;
      ++pos_;
    }
  }

  std::uint32_t bit() {
    need(1);
    const std::uint32_t v = (bytes_[pos_] >> (7 - bit_)) & 1u;
    if (++bit_ == 8) {
      bit_ = 0;
      ++pos_;
    }
    return v;
  }

  /// Reads n <= 32 bits MSB-first.
  std::uint32_t bits(int n) {
    std::uint64_t v = 0;
    while (n > 0) {
      need(1);
      if (bit_ == 0 && n >= 8) {
        v = (v << 8) | bytes_[pos_++];
        n -= 8;
        continue;
      }
      v = (v << 1) | bit();
      --n;
    }
    return static_cast<std::uint32_t>(v);
  }

  std::int32_t signed_bits(int n) {
    if (n == 0) return 0;
    const std::uint32_t v = bits(n);
    if (n == 32) return static_cast<std::int32_t>(v);
    const std::uint32_t sign = 1u << (n - 1);
    return static_cast<std::int32_t>((v ^ sign) - sign);
  }

  std::uint32_t unary() {
    std::uint32_t zeros = 0;
    while (true) {
      need(1);
      if (bit_ == 0) {
        // Fast path over zero bytes.
        while (pos_ < bytes_.size() && bytes_[pos_] == 0) {
          zeros += 8;
          ++pos_;
        }
        need(1);
      }
      if (bit()) return zeros;
      ++zeros;
    }
  }

 private:
  void need(std::size_t) const {
    if (pos_ >= bytes_.size()) throw DecodeError("unexpected end of FLAC stream", pos_);
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_;
  int bit_ = 0;
};

inline std::uint8_t crc8(std::span<const std::uint8_t> data) {
  std::uint8_t crc = 0;
  for (std::uint8_t b : data) {
    crc ^= b;
    for (int i = 0; i < 8; ++i) crc = static_cast<std::uint8_t>((crc & 0x80) ? (crc << 1) ^ 0x07 : crc << 1);
  }
  return crc;
}

inline std::uint16_t crc16(std::span<const std::uint8_t> data) {
  static const auto table = [] {
    std::array<std::uint16_t, 256> t{};
    for (unsigned i = 0; i < 256; ++i) {
      std::uint16_t c = static_cast<std::uint16_t>(i << 8);
      for (int k = 0; k < 8; ++k) c = static_cast<std::uint16_t>((c & 0x8000) ? (c << 1) ^ 0x8005 : c << 1);
      t[i] = c;
    }
    return t;
  }();
  std::uint16_t crc = 0;
  for (std::uint8_t b : data) crc = static_cast<std::uint16_t>((crc << 8) ^ table[((crc >> 8) ^ b) & 0xFF]);
  return crc;
}

struct StreamInfo {
  std::uint32_t sample_rate = 0;
  int channels = 0;
  int bits_per_sample = 0;
  std::uint64_t total_samples = 0;
};

inline void decode_residual(BitReader& br, std::size_t block_size, int order, std::int64_t* out) {
  const std::uint32_t method = br.bits(2);
  if (method > 1) throw DecodeError("reserved FLAC residual coding method", br.byte_pos());
  const int param_bits = method == 0 ? 4 : 5;
  const std::uint32_t escape = method == 0 ? 0xF : 0x1F;
  const std::uint32_t partition_order = br.bits(4);
  const std::size_t partitions = std::size_t{1} << partition_order;
  const std::size_t per_partition = block_size >> partition_order;
  if ((per_partition << partition_order) != block_size || per_partition < static_cast<std::size_t>(order))
    throw DecodeError("invalid FLAC residual partitioning", br.byte_pos());
  std::size_t i = static_cast<std::size_t>(order);
  for (std::size_t p = 0; p < partitions; ++p) {
    const std::size_t count = p == 0 ? per_partition - order : per_partition;
    const std::uint32_t param = br.bits(param_bits);
    if (param == escape) {
      const int raw = static_cast<int>(br.bits(5));
      for (std::size_t k = 0; k < count; ++k) out[i++] = br.signed_bits(raw);
      continue;
    }
    for (std::size_t k = 0; k < count; ++k) {
      const std::uint64_t q = br.unary();
      const std::uint64_t u = (q << param) | (param ? br.bits(static_cast<int>(param)) : 0u);
      out[i++] = static_cast<std::int64_t>(u >> 1) ^ -static_cast<std::int64_t>(u & 1);
    }
  }
}

inline void decode_subframe(BitReader& br, std::size_t block_size, int bps, std::int64_t* out) {
  if (br.bit() != 0) throw DecodeError("FLAC subframe padding bit set", br.byte_pos());
  const std::uint32_t type = br.bits(6);
  int wasted = 0;
  if (br.bit()) wasted = static_cast<int>(br.unary()) + 1;
  bps -= wasted;
  if (bps <= 0) throw DecodeError("FLAC wasted bits exceed sample size", br.byte_pos());

  if (type == 0) {
    const std::int64_t v = br.signed_bits(bps);
    for (std::size_t i = 0; i < block_size; ++i) out[i] = v;
  } else if (type == 1) {
    for (std::size_t i = 0; i < block_size; ++i) out[i] = br.signed_bits(bps);
  } else if (type >= 8 && type <= 12) {
    const int order = static_cast<int>(type - 8);
    if (static_cast<std::size_t>(order) > block_size) throw DecodeError("FLAC fixed order exceeds block", br.byte_pos());
    for (int i = 0; i < order; ++i) out[i] = br.signed_bits(bps);
    decode_residual(br, block_size, order, out);
    for (std::size_t i = static_cast<std::size_t>(order); i < block_size; ++i) {
      switch (order) {
        case 1: out[i] += out[i - 1]; break;
        case 2: out[i] += 2 * out[i - 1] - out[i - 2]; break;
        case 3: out[i] += 3 * out[i - 1] - 3 * out[i - 2] + out[i - 3]; break;
        case 4: out[i] += 4 * out[i - 1] - 6 * out[i - 2] + 4 * out[i - 3] - out[i - 4]; break;
        default: break;
      }
    }
  } else if (type >= 32) {
    const int order = static_cast<int>(type - 31);
    if (static_cast<std::size_t>(order) > block_size) throw DecodeError("FLAC LPC order exceeds block", br.byte_pos());
    for (int i = 0; i < order; ++i) out[i] = br.signed_bits(bps);
    const std::uint32_t precision = br.bits(4) + 1;
    if (precision == 16) throw DecodeError("invalid FLAC LPC precision", br.byte_pos());
    const int shift = br.signed_bits(5);
    if (shift < 0) throw DecodeError("negative FLAC LPC shift", br.byte_pos());
    std::array<std::int64_t, 32> coef{};
    for (int i = 0; i < order; ++i) coef[static_cast<std::size_t>(i)] = br.signed_bits(static_cast<int>(precision));
    decode_residual(br, block_size, order, out);
    for (std::size_t i = static_cast<std::size_t>(order); i < block_size; ++i) {
      std::int64_t acc = 0;
      for (int j = 0; j < order; ++j) acc += coef[static_cast<std::size_t>(j)] * out[i - 1 - j];
      out[i] += acc >> shift;
    }
  } else {
    throw DecodeError("reserved FLAC subframe type " + std::to_string(type), br.byte_pos());
  }
  if (wasted)
    for (std::size_t i = 0; i < block_size; ++i) out[i] *= std::int64_t{1} << wasted;
}

inline std::uint64_t read_utf8_number(BitReader& br) {
  const std::uint32_t first = br.bits(8);
  if ((first & 0x80) == 0) return first;
  int extra = 0;
  std::uint32_t mask = 0x40;
  while (first & mask) {
    ++extra;
    mask >>= 1;
  }
  if (extra == 0 || extra > 6) throw DecodeError("invalid FLAC frame number", br.byte_pos());
  std::uint64_t v = first & (mask - 1);
  for (int i = 0; i < extra; ++i) {
    const std::uint32_t b = br.bits(8);
    if ((b & 0xC0) != 0x80) throw DecodeError("invalid FLAC frame number continuation", br.byte_pos());
    v = (v << 6) | (b & 0x3F);
  }
  return v;
}

}  // namespace flac_detail

/// Decodes a native FLAC stream (fLaC marker, optional leading ID3v2 tag).
/// Frame header CRC-8 and frame CRC-16 are verified; a mismatch is a
/// DecodeError carrying the frame's byte offset.
inline PcmStream decode_flac(std::span<const std::uint8_t> bytes) {
  using namespace flac_detail;
  PcmStream out;
  if (bytes.empty()) return out;
  std::size_t pos = 0;
  if (bytes.size() >= 10 && std::memcmp(bytes.data(), "ID3", 3) == 0) {
    const std::size_t tag = (std::size_t{bytes[6]} << 21) | (std::size_t{bytes[7]} << 14) |
                            (std::size_t{bytes[8]} << 7) | bytes[9];
    pos = 10 + tag;
  }
  if (bytes.size() < pos + 4 || std::memcmp(bytes.data() + pos, "fLaC", 4) != 0)
    throw DecodeError("missing fLaC marker", pos);
  pos += 4;

  StreamInfo info;
  bool have_info = false;
  bool last = false;
  while (!last) {
    if (pos + 4 > bytes.size()) throw DecodeError("truncated FLAC metadata block header", pos);
    last = (bytes[pos] & 0x80) != 0;
    const int type = bytes[pos] & 0x7F;
    const std::size_t len = (std::size_t{bytes[pos + 1]} << 16) | (std::size_t{bytes[pos + 2]} << 8) | bytes[pos + 3];
    if (pos + 4 + len > bytes.size()) throw DecodeError("truncated FLAC metadata block", pos);
    if (type == 0) {
      if (len < 34) throw DecodeError("short STREAMINFO block", pos);
      BitReader br(bytes, pos + 4 + 10);
      info.sample_rate = br.bits(20);
      info.channels = static_cast<int>(br.bits(3)) + 1;
      info.bits_per_sample = static_cast<int>(br.bits(5)) + 1;
      info.total_samples = (std::uint64_t{br.bits(4)} << 32) | br.bits(32);
      have_info = true;
    }
    pos += 4 + len;
  }
  if (!have_info) throw DecodeError("FLAC stream without STREAMINFO", pos);
  if (info.bits_per_sample < 4 || info.bits_per_sample > 32)
    throw UnsupportedFormatError("unsupported FLAC bit depth " + std::to_string(info.bits_per_sample));

  out.sample_rate_hz = static_cast<int>(info.sample_rate);
  out.channels = info.channels;
  out.bits_per_sample = info.bits_per_sample;
  if (info.total_samples) out.mono.reserve(static_cast<std::size_t>(info.total_samples));

  std::vector<std::vector<std::int64_t>> chan(static_cast<std::size_t>(info.channels));
  while (pos + 2 <= bytes.size()) {
    if (bytes[pos] != 0xFF || (bytes[pos + 1] & 0xFE) != 0xF8) {
      // Trailing tags (e.g. ID3v1) or padding after the last frame.
      if (info.total_samples && out.mono.size() >= info.total_samples) break;
      throw DecodeError("lost FLAC frame sync", pos);
    }
    const std::size_t frame_start = pos;
    BitReader br(bytes, pos);
    br.bits(16);
    const std::uint32_t bs_code = br.bits(4);
    const std::uint32_t sr_code = br.bits(4);
    const std::uint32_t ch_code = br.bits(4);
    const std::uint32_t ss_code = br.bits(3);
    if (br.bit() != 0) throw DecodeError("reserved FLAC header bit set", frame_start);
    read_utf8_number(br);
    std::size_t block_size = 0;
    if (bs_code == 0) throw DecodeError("reserved FLAC block size", frame_start);
    if (bs_code == 1) block_size = 192;
    else if (bs_code <= 5) block_size = std::size_t{576} << (bs_code - 2);
    else if (bs_code == 6) block_size = br.bits(8) + 1;
    else if (bs_code == 7) block_size = br.bits(16) + 1;
    else block_size = std::size_t{256} << (bs_code - 8);
    if (sr_code == 12) br.bits(8);
    else if (sr_code == 13 || sr_code == 14) br.bits(16);
    else if (sr_code == 15) throw DecodeError("invalid FLAC sample rate code", frame_start);
    static constexpr int kSizes[8] = {0, 8, 12, 0, 16, 20, 24, 32};
    int bps = ss_code == 0 ? info.bits_per_sample : kSizes[ss_code];
    if (ss_code == 3 || bps == 0) throw DecodeError("reserved FLAC sample size", frame_start);
    const std::size_t header_end = br.byte_pos();
    const std::uint32_t header_crc = br.bits(8);
    if (crc8(bytes.subspan(frame_start, header_end - frame_start)) != header_crc)
      throw DecodeError("FLAC frame header CRC mismatch", frame_start);

    int channels = 0;
    if (ch_code < 8) channels = static_cast<int>(ch_code) + 1;
    else if (ch_code <= 10) channels = 2;
    else throw DecodeError("reserved FLAC channel assignment", frame_start);
    if (channels != info.channels) throw DecodeError("FLAC frame channel count differs from STREAMINFO", frame_start);

    for (int c = 0; c < channels; ++c) {
      auto& buf = chan[static_cast<std::size_t>(c)];
      buf.resize(block_size);
      int sub_bps = bps;
      if ((ch_code == 8 && c == 1) || (ch_code == 9 && c == 0) || (ch_code == 10 && c == 1)) ++sub_bps;
      decode_subframe(br, block_size, sub_bps, buf.data());
    }
    br.align();
    const std::size_t crc_pos = br.byte_pos();
    const std::uint32_t frame_crc = br.bits(16);
    if (crc16(bytes.subspan(frame_start, crc_pos - frame_start)) != frame_crc)
      throw DecodeError("FLAC frame CRC mismatch", frame_start);
    pos = br.byte_pos();

    if (ch_code >= 8) {
      auto& a = chan[0];
      auto& b = chan[1];
      for (std::size_t i = 0; i < block_size; ++i) {
        if (ch_code == 8) {
          b[i] = a[i] - b[i];  // left/side
        } else if (ch_code == 9) {
          a[i] = a[i] + b[i];  // side/right
        } else {
          const std::int64_t mid = (a[i] * 2) | (b[i] & 1);  // mid/side
          const std::int64_t side = b[i];
          a[i] = (mid + side) >> 1;
          b[i] = (mid - side) >> 1;
        }
      }
    }
    const double scale = 1.0 / (std::ldexp(1.0, bps - 1) * channels);
    for (std::size_t i = 0; i < block_size; ++i) {
      std::int64_t acc = 0;
      for (int c = 0; c < channels; ++c) acc += chan[static_cast<std::size_t>(c)][i];
      out.mono.push_back(static_cast<float>(static_cast<double>(acc) * scale));
    }
  }
  if (info.total_samples && out.mono.size() > info.total_samples) out.mono.resize(static_cast<std::size_t>(info.total_samples));
  return out;
}

}  // namespace pam::audio
