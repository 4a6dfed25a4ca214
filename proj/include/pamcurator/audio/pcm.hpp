#pragma once

#include <cstdint>
#include <vector>

namespace pam::audio {

/// Decoded container contents before segmentation.
struct PcmStream {
  int sample_rate_hz = 0;
  int channels = 0;
  int bits_per_sample = 0;
  std::vector<float> mono;  ///< channel average, normalized to [-1, 1]
};

}  // namespace pam::audio
