#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "pamcurator/audio/highpass.hpp"
#include "pamcurator/audio/segment.hpp"
#include "pamcurator/core/error.hpp"
#include "pamcurator/dsp/binarize.hpp"
#include "pamcurator/dsp/click_filter.hpp"
#include "pamcurator/dsp/denoise.hpp"
#include "pamcurator/dsp/regions.hpp"
#include "pamcurator/dsp/spectrogram.hpp"

namespace pam::dsp {

/// Whistle-and-moan detector hyperparameters. Defaults were checked against
/// `pam-curator tune-detector` searches on held-out synthetic corpora.
struct DetectorParams {
  double gamma = 6.0;   ///< click filter: deviation scale in units of std
  double p = 2.0;       ///< click filter: gain exponent
  double alpha = 0.95;  ///< tonal background decay per frame
  int kappa = 15;       ///< median kernel along time (odd, frames)
  double beta = 10.0;   ///< binarization threshold (dB above background)
  int min_length = 8;   ///< minimum region time extent (frames)
  int min_count = 40;   ///< minimum region pixel count
  bool use_highpass_1khz = false;
  double gauss_sigma = 1.5;
  int click_window = kDefaultClickWindow;

  void validate() const {
    if (!(gamma > 0.0) || !(p > 0.0)) throw ArgumentError("detector: gamma and p must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("detector: alpha must lie in (0, 1)");
    if (kappa < 3 || kappa % 2 == 0) throw ArgumentError("detector: kappa must be an odd integer >= 3");
    if (min_length < 1 || min_count < 1) throw ArgumentError("detector: min_length and min_count must be >= 1");
    if (!(gauss_sigma > 0.0)) throw ArgumentError("detector: gauss_sigma must be positive");
    if (click_window < 16) throw ArgumentError("detector: click_window must be >= 16");
  }
};

inline void to_json(nlohmann::json& j, const DetectorParams& d) {
  j = {{"gamma", d.gamma},         {"p", d.p},
       {"alpha", d.alpha},         {"kappa", d.kappa},
       {"beta", d.beta},           {"min_length", d.min_length},
       {"min_count", d.min_count}, {"use_highpass_1khz", d.use_highpass_1khz},
       {"gauss_sigma", d.gauss_sigma}, {"click_window", d.click_window}};
}

inline void from_json(const nlohmann::json& j, DetectorParams& d) {
  DetectorParams def;
  d.gamma = j.value("gamma", def.gamma);
  d.p = j.value("p", def.p);
  d.alpha = j.value("alpha", def.alpha);
  d.kappa = j.value("kappa", def.kappa);
  d.beta = j.value("beta", def.beta);
  d.min_length = j.value("min_length", def.min_length);
  d.min_count = j.value("min_count", def.min_count);
  d.use_highpass_1khz = j.value("use_highpass_1khz", def.use_highpass_1khz);
  d.gauss_sigma = j.value("gauss_sigma", def.gauss_sigma);
  d.click_window = j.value("click_window", def.click_window);
  d.validate();
}

struct Detection {
  Spectrogram denoised;
  std::vector<ContourRegion> regions;
};

/// Full chain: click filter, optional 1 kHz high-pass, spectrogram,
/// median/tonal denoising, smoothing + threshold, region extraction.
inline Detection detect_full(const audio::AudioSegment& seg, const DetectorParams& params, const StftConfig& stft = {}) {
  params.validate();
  audio::AudioSegment x = click_filter(seg, params.gamma, params.p, params.click_window);
  if (params.use_highpass_1khz) x = audio::highpass(x, 1000.0);
  Detection out;
  out.denoised = denoise(compute_spectrogram(x, stft), params.kappa, params.alpha);
  const BinaryMask mask = binarize(out.denoised, params.gauss_sigma, params.beta);
  out.regions = extract_regions(mask, {params.min_length, params.min_count}, Connectivity::eight, &out.denoised.values_db);
  return out;
}

inline std::vector<ContourRegion> detect(const audio::AudioSegment& seg, const DetectorParams& params,
                                         const StftConfig& stft = {}) {
  return detect_full(seg, params, stft).regions;
}

/// One JSON-lines record per region; times are seconds from segment start.
inline nlohmann::json region_to_json(const std::string& sample_id, const ContourRegion& r) {
  nlohmann::json ridge = nlohmann::json::array();
  for (const RidgePoint& p : r.ridge) ridge.push_back({p.time_s, p.freq_hz});
  return {{"sample_id", sample_id}, {"t_min_s", r.t_min_s()}, {"t_max_s", r.t_max_s()},
          {"f_min_hz", r.f_min_hz()}, {"f_max_hz", r.f_max_hz()}, {"pixel_count", r.pixel_count()},
          {"ridge", std::move(ridge)}};
}

}  // namespace pam::dsp
