#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <string>
#include <vector>

#include "pamcurator/audio/flac.hpp"
#include "pamcurator/audio/segment.hpp"
#include "pamcurator/audio/wav.hpp"
#include "pamcurator/core/io.hpp"

namespace pam::audio {

enum class ContainerFormat { automatic, wav, flac };

struct DecodeOptions {
  ContainerFormat format = ContainerFormat::automatic;
  Timestamp start_time{};
  std::string sample_id;  ///< defaults to the file stem
};

inline ContainerFormat sniff_format(std::span<const std::uint8_t> bytes, const std::filesystem::path& path) {
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), "RIFF", 4) == 0) return ContainerFormat::wav;
  if (bytes.size() >= 4 && (std::memcmp(bytes.data(), "fLaC", 4) == 0 || std::memcmp(bytes.data(), "ID3", 3) == 0))
    return ContainerFormat::flac;
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".flac") return ContainerFormat::flac;
  if (ext == ".wav" || ext == ".wave") return ContainerFormat::wav;
  throw UnsupportedFormatError("cannot determine container format of '" + path.string() + "'");
}

inline PcmStream decode_stream(std::span<const std::uint8_t> bytes, ContainerFormat format,
                               const std::filesystem::path& hint = {}) {
  if (bytes.empty()) return {};
  if (format == ContainerFormat::automatic) format = sniff_format(bytes, hint);
  return format == ContainerFormat::flac ? decode_flac(bytes) : decode_wav(bytes);
}

/// Decodes a WAV or FLAC file into chronological segments of at most 300 s.
inline std::vector<AudioSegment> decode(const std::filesystem::path& path, const DecodeOptions& opts = {}) {
  const auto bytes = read_file_bytes(path);
  const PcmStream pcm = decode_stream(bytes, opts.format, path);
  const std::string id = opts.sample_id.empty() ? path.stem().string() : opts.sample_id;
  return split_segments(pcm.mono, pcm.sample_rate_hz, opts.start_time, id);
}

}  // namespace pam::audio
