#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "pamcurator/audio/pcm.hpp"
#include "pamcurator/core/error.hpp"
#include "pamcurator/core/io.hpp"

namespace pam::audio {

enum class WavSampleFormat { pcm16, pcm24, pcm32, float32 };

namespace detail {

inline constexpr std::uint16_t kFormatPcm = 1;
inline constexpr std::uint16_t kFormatFloat = 3;
inline constexpr std::uint16_t kFormatExtensible = 0xFFFE;

inline std::int32_t read_int_sample(const std::uint8_t* p, int bytes) {
  switch (bytes) {
    case 2:
      return static_cast<std::int16_t>(p[0] | (p[1] << 8));
    case 3: {
      std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
      if (v & 0x800000) v -= 0x1000000;
      return v;
    }
    default:
      return static_cast<std::int32_t>(le::get_u32(p));
  }
}

}  // namespace detail

/// Parses a RIFF WAVE image. Accepts PCM 16/24/32-bit integer and 32-bit
/// float (plain or WAVE_FORMAT_EXTENSIBLE). Multichannel input is averaged
/// to mono. An empty image decodes to an empty stream.
inline PcmStream decode_wav(std::span<const std::uint8_t> bytes) {
  PcmStream out;
  if (bytes.empty()) return out;
  if (bytes.size() < 12) throw DecodeError("truncated RIFF header", bytes.size());
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0) throw DecodeError("missing RIFF tag", 0);
  if (std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) throw DecodeError("missing WAVE tag", 8);

  bool have_fmt = false;
  std::uint16_t format = 0;
  int bits = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* hdr = bytes.data() + pos;
    const std::uint32_t size = le::get_u32(hdr + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (size < 16 || body + size > bytes.size()) throw DecodeError("truncated fmt chunk", pos);
      const std::uint8_t* f = bytes.data() + body;
      format = le::get_u16(f);
      out.channels = le::get_u16(f + 2);
      out.sample_rate_hz = static_cast<int>(le::get_u32(f + 4));
      bits = le::get_u16(f + 14);
      if (format == detail::kFormatExtensible) {
        if (size < 40) throw DecodeError("truncated WAVE_FORMAT_EXTENSIBLE block", pos);
        format = le::get_u16(f + 24);
      }
      if (out.channels < 1) throw DecodeError("zero channels", body + 2);
      if (out.sample_rate_hz < 1) throw DecodeError("zero sample rate", body + 4);
      const bool supported = (format == detail::kFormatPcm && (bits == 16 || bits == 24 || bits == 32)) ||
                             (format == detail::kFormatFloat && bits == 32);
      if (!supported)
        throw UnsupportedFormatError("unsupported WAV sample format (tag " + std::to_string(format) + ", " +
                                     std::to_string(bits) + "-bit)");
      out.bits_per_sample = bits;
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      if (!have_fmt) throw DecodeError("data chunk before fmt chunk", pos);
      std::size_t avail = size;
      // Streaming writers leave 0 or 0xFFFFFFFF; take the rest of the file.
      if (size == 0xFFFFFFFFu || (size == 0 && bytes.size() > body)) avail = bytes.size() - body;
      if (body + avail > bytes.size()) throw DecodeError("data chunk runs past end of file", bytes.size());
      const int width = bits / 8;
      const std::size_t frame_bytes = static_cast<std::size_t>(width) * out.channels;
      if (avail % frame_bytes != 0) throw DecodeError("partial sample frame in data chunk", body + avail - avail % frame_bytes);
      const std::size_t frames = avail / frame_bytes;
      out.mono.resize(frames);
      const std::uint8_t* p = bytes.data() + body;
      const double int_scale = 1.0 / std::ldexp(1.0, bits - 1);
      for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (int c = 0; c < out.channels; ++c, p += width) {
          if (format == detail::kFormatFloat) {
            const float v = le::get_f32(p);
            if (!std::isfinite(v)) throw DecodeError("non-finite float sample", static_cast<std::size_t>(p - bytes.data()));
            acc += v;
          } else {
            acc += detail::read_int_sample(p, width) * int_scale;
          }
        }
        out.mono[i] = static_cast<float>(acc / out.channels);
      }
      return out;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw DecodeError("no fmt chunk", pos);
  return out;  // fmt without data: zero-length
}

/// Serializes mono samples as a canonical 44-byte-header RIFF WAVE.
inline std::vector<std::uint8_t> encode_wav(std::span<const float> samples, int rate_hz,
                                            WavSampleFormat fmt = WavSampleFormat::float32) {
  const int bits = fmt == WavSampleFormat::pcm16 ? 16 : fmt == WavSampleFormat::pcm24 ? 24 : 32;
  const int width = bits / 8;
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * width);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  le::put_u32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  le::put_u32(out, 16);
  le::put_u16(out, fmt == WavSampleFormat::float32 ? detail::kFormatFloat : detail::kFormatPcm);
  le::put_u16(out, 1);
  le::put_u32(out, static_cast<std::uint32_t>(rate_hz));
  le::put_u32(out, static_cast<std::uint32_t>(rate_hz * width));
  le::put_u16(out, static_cast<std::uint16_t>(width));
  le::put_u16(out, static_cast<std::uint16_t>(bits));
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  le::put_u32(out, data_bytes);
  const double full = std::ldexp(1.0, bits - 1);
  for (float s : samples) {
    if (fmt == WavSampleFormat::float32) {
      le::put_f32(out, s);
      continue;
    }
    const double clipped = std::fmax(-1.0, std::fmin(1.0, static_cast<double>(s)));
    auto v = static_cast<std::int64_t>(std::llround(clipped * full));
    v = std::min<std::int64_t>(v, static_cast<std::int64_t>(full) - 1);
    for (int b = 0; b < width; ++b) out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(v) >> (8 * b)));
  }
  return out;
}

}  // namespace pam::audio
