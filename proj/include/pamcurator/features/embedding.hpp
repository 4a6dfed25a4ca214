#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pamcurator/core/error.hpp"

namespace pam::features {

enum class FeatureKind { embedding, lda9, rocca };

inline std::string_view to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::embedding: return "embedding";
    case FeatureKind::lda9: return "lda9";
    case FeatureKind::rocca: return "rocca";
  }
  return "embedding";
}

inline FeatureKind parse_feature_kind(std::string_view s) {
  if (s == "embedding") return FeatureKind::embedding;
  if (s == "lda9") return FeatureKind::lda9;
  if (s == "rocca" || s == "rocca_v1") return FeatureKind::rocca;
  throw ArgumentError("unknown feature kind '" + std::string(s) + "'");
}

struct FeatureVector {
  std::string sample_id;
  FeatureKind kind = FeatureKind::embedding;
  std::vector<float> values;
  nlohmann::json meta = nlohmann::json::object();

  std::size_t size() const noexcept { return values.size(); }
  bool finite() const {
    for (float v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

/// Encoder output for one file: [chunks x hidden_steps x hidden_size], row-major.
struct ChunkEmbeddingMatrix {
  std::string sample_id;
  std::uint32_t chunks = 0;
  std::uint32_t hidden_steps = 0;
  std::uint32_t hidden_size = 0;
  std::vector<float> data;

  float& at(std::size_t c, std::size_t s, std::size_t h) { return data[(c * hidden_steps + s) * hidden_size + h]; }
  float at(std::size_t c, std::size_t s, std::size_t h) const { return data[(c * hidden_steps + s) * hidden_size + h]; }

  void validate() const {
    if (chunks == 0 || hidden_steps == 0 || hidden_size == 0)
      throw DataError("embedding matrix '" + sample_id + "': dimensions must be positive");
    if (data.size() != static_cast<std::size_t>(chunks) * hidden_steps * hidden_size)
      throw DataError("embedding matrix '" + sample_id + "': data size does not match dimensions");
    for (float v : data)
      if (!std::isfinite(v)) throw DataError("embedding matrix '" + sample_id + "': non-finite value");
  }
};

inline constexpr double kLayerNormEps = 1e-5;

/// Layer norm over hidden_size for every (chunk, step) vector, then the mean
/// over steps and chunks. Accumulates in double.
inline FeatureVector pool_embeddings(const ChunkEmbeddingMatrix& m) {
  m.validate();
  if (m.hidden_size < 2) throw ArgumentError("pool_embeddings: hidden_size must be >= 2");
  const std::size_t H = m.hidden_size;
  std::vector<double> acc(H, 0.0);
  for (std::size_t c = 0; c < m.chunks; ++c) {
    for (std::size_t s = 0; s < m.hidden_steps; ++s) {
      const float* v = &m.data[(c * m.hidden_steps + s) * H];
      double mean = 0.0;
      for (std::size_t h = 0; h < H; ++h) mean += v[h];
      mean /= static_cast<double>(H);
      double var = 0.0;
      for (std::size_t h = 0; h < H; ++h) var += (v[h] - mean) * (v[h] - mean);
      var /= static_cast<double>(H);
      const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
      for (std::size_t h = 0; h < H; ++h) acc[h] += (v[h] - mean) * inv;
    }
  }
  const double n = static_cast<double>(m.chunks) * m.hidden_steps;
  FeatureVector out;
  out.sample_id = m.sample_id;
  out.kind = FeatureKind::embedding;
  out.values.resize(H);
  for (std::size_t h = 0; h < H; ++h) out.values[h] = static_cast<float>(acc[h] / n);
  out.meta = {{"chunks", m.chunks}, {"hidden_steps", m.hidden_steps}};
  return out;
}

}  // namespace pam::features
