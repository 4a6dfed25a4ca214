#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <regex>
#include <string>

#include "pamcurator/audio/decode.hpp"
#include "pamcurator/core/error.hpp"

namespace pam::service {

/// Resolves a sample id to its audio; throws NotFoundError when absent.
using AudioSource = std::function<audio::AudioSegment(const std::string& sample_id)>;

namespace detail {

inline audio::AudioSegment pick_segment(const std::filesystem::path& file, const std::string& id, std::size_t index) {
  auto segs = audio::decode(file);
  if (index >= segs.size()) throw NotFoundError("no audio for sample '" + id + "'");
  auto seg = std::move(segs[index]);
  seg.sample_id = id;
  return seg;
}

inline const std::regex& segment_id_re() {
  static const std::regex re(R"((.+)_s(\d{3}))");
  return re;
}

}  // namespace detail

/// `<dir>/<id>.wav|.flac`; an id ending in `_sNNN` also matches segment NNN
/// of `<dir>/<base>.wav|.flac`.
inline AudioSource directory_audio_source(std::filesystem::path dir) {
  return [dir = std::move(dir)](const std::string& id) -> audio::AudioSegment {
    if (id.empty() || id.find('/') != std::string::npos || id.find("..") != std::string::npos)
      throw NotFoundError("no audio for sample '" + id + "'");
    for (const char* ext : {".wav", ".flac"}) {
      const auto p = dir / (id + ext);
      if (std::filesystem::is_regular_file(p)) return detail::pick_segment(p, id, 0);
    }
    std::smatch m;
    if (std::regex_match(id, m, detail::segment_id_re()))
      for (const char* ext : {".wav", ".flac"}) {
        const auto p = dir / (m[1].str() + ext);
        if (std::filesystem::is_regular_file(p)) return detail::pick_segment(p, id, std::stoul(m[2].str()));
      }
    throw NotFoundError("no audio for sample '" + id + "'");
  };
}

/// Explicit id -> file map (e.g. from a manifest), same segment rule.
inline AudioSource mapped_audio_source(std::map<std::string, std::filesystem::path> files) {
  return [files = std::move(files)](const std::string& id) -> audio::AudioSegment {
    if (const auto it = files.find(id); it != files.end()) return detail::pick_segment(it->second, id, 0);
    std::smatch m;
    if (std::regex_match(id, m, detail::segment_id_re()))
      if (const auto it = files.find(m[1].str()); it != files.end())
        return detail::pick_segment(it->second, id, std::stoul(m[2].str()));
    throw NotFoundError("no audio for sample '" + id + "'");
  };
}

inline AudioSource no_audio_source() {
  return [](const std::string& id) -> audio::AudioSegment { throw NotFoundError("no audio for sample '" + id + "'"); };
}

}  // namespace pam::service
