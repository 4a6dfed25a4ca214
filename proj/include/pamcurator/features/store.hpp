#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pamcurator/core/error.hpp"
#include "pamcurator/core/io.hpp"
#include "pamcurator/features/embedding.hpp"

namespace pam::features {

// Binary containers:
//   DORIEMB1  u32 count, u32 hidden_size, count x hidden_size f32
//   DORICHK1  u32 count, u32 hidden_size, then per record
//             u32 chunks, u32 hidden_steps, chunks x hidden_steps x hidden_size f32
// All little-endian. Sample ids live in "<file>.ids.json": a bare array for
// embeddings, or {"kind": ..., "sample_ids": [...]} for other feature kinds.

inline constexpr char kEmbMagic[8] = {'D', 'O', 'R', 'I', 'E', 'M', 'B', '1'};
inline constexpr char kChunkMagic[8] = {'D', 'O', 'R', 'I', 'C', 'H', 'K', '1'};

inline std::filesystem::path sidecar_path(const std::filesystem::path& p) {
  auto s = p;
  s += ".ids.json";
  return s;
}

namespace detail {

class ByteCursor {
 public:
  explicit ByteCursor(std::span<const std::uint8_t> b) : b_(b) {}
  void need(std::size_t n, const char* what) const {
    if (b_.size() - pos_ < n) throw DecodeError(std::string("truncated feature file: ") + what, pos_);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    const auto v = le::get_u32(b_.data() + pos_);
    pos_ += 4;
    return v;
  }
  void floats(float* dst, std::size_t n, const char* what) {
    need(n * 4, what);
    for (std::size_t i = 0; i < n; ++i) dst[i] = le::get_f32(b_.data() + pos_ + 4 * i);
    pos_ += n * 4;
  }
  void magic(const char (&m)[8]) {
    need(8, "magic");
    if (std::memcmp(b_.data(), m, 8) != 0)
      throw UnsupportedFormatError("feature file: expected magic " + std::string(m, 8));
    pos_ = 8;
  }
  std::size_t pos() const noexcept { return pos_; }
  bool done() const noexcept { return pos_ == b_.size(); }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

struct Sidecar {
  FeatureKind kind = FeatureKind::embedding;
  std::vector<std::string> ids;
};

inline Sidecar read_sidecar(const std::filesystem::path& file) {
  const auto path = sidecar_path(file);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("sidecar '" + path.string() + "': " + e.what());
  }
  Sidecar s;
  const nlohmann::json* ids = &j;
  if (j.is_object()) {
    s.kind = parse_feature_kind(j.value("kind", "embedding"));
    if (!j.contains("sample_ids")) throw DataError("sidecar '" + path.string() + "': missing sample_ids");
    ids = &j["sample_ids"];
  }
  if (!ids->is_array()) throw DataError("sidecar '" + path.string() + "': sample ids must be an array");
  for (const auto& v : *ids) {
    if (!v.is_string()) throw DataError("sidecar '" + path.string() + "': sample ids must be strings");
    s.ids.push_back(v.get<std::string>());
  }
  return s;
}

inline void write_sidecar(const std::filesystem::path& file, FeatureKind kind, const std::vector<std::string>& ids) {
  nlohmann::json j = ids;
  if (kind != FeatureKind::embedding) j = {{"kind", to_string(kind)}, {"sample_ids", ids}};
  write_file_atomic(sidecar_path(file), j.dump() + "\n");
}

}  // namespace detail

/// Pooled vectors (any kind, all the same length) to DORIEMB1 + sidecar.
inline void write_feature_store(const std::filesystem::path& path, const std::vector<FeatureVector>& rows) {
  const std::uint32_t dim = rows.empty() ? 0 : static_cast<std::uint32_t>(rows.front().values.size());
  const FeatureKind kind = rows.empty() ? FeatureKind::embedding : rows.front().kind;
  std::vector<std::uint8_t> out(kEmbMagic, kEmbMagic + 8);
  out.reserve(16 + rows.size() * dim * 4);
  le::put_u32(out, static_cast<std::uint32_t>(rows.size()));
  le::put_u32(out, dim);
  std::vector<std::string> ids;
  for (const auto& r : rows) {
    if (r.values.size() != dim) throw DataError("feature store: row '" + r.sample_id + "' has a different length");
    if (r.kind != kind) throw DataError("feature store: mixed feature kinds");
    if (!r.finite()) throw DataError("feature store: row '" + r.sample_id + "' has non-finite values");
    for (float v : r.values) le::put_f32(out, v);
    ids.push_back(r.sample_id);
  }
  write_file_atomic(path, out);
  detail::write_sidecar(path, kind, ids);
}

inline std::vector<FeatureVector> read_feature_store(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  detail::ByteCursor cur(bytes);
  cur.magic(kEmbMagic);
  const std::uint32_t count = cur.u32("count");
  const std::uint32_t dim = cur.u32("hidden_size");
  const auto side = detail::read_sidecar(path);
  if (side.ids.size() != count)
    throw DataError("feature store '" + path.string() + "': sidecar lists " + std::to_string(side.ids.size()) +
                    " ids for " + std::to_string(count) + " rows");
  std::vector<FeatureVector> rows(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    rows[i].sample_id = side.ids[i];
    rows[i].kind = side.kind;
    rows[i].values.resize(dim);
    cur.floats(rows[i].values.data(), dim, "row data");
  }
  if (!cur.done()) throw DecodeError("feature store: trailing bytes", cur.pos());
  return rows;
}

inline void write_chunk_embeddings(const std::filesystem::path& path, const std::vector<ChunkEmbeddingMatrix>& recs) {
  const std::uint32_t dim = recs.empty() ? 0 : recs.front().hidden_size;
  std::vector<std::uint8_t> out(kChunkMagic, kChunkMagic + 8);
  le::put_u32(out, static_cast<std::uint32_t>(recs.size()));
  le::put_u32(out, dim);
  std::vector<std::string> ids;
  for (const auto& m : recs) {
    m.validate();
    if (m.hidden_size != dim) throw DataError("chunk embeddings: record '" + m.sample_id + "' has a different hidden_size");
    le::put_u32(out, m.chunks);
    le::put_u32(out, m.hidden_steps);
    for (float v : m.data) le::put_f32(out, v);
    ids.push_back(m.sample_id);
  }
  write_file_atomic(path, out);
  detail::write_sidecar(path, FeatureKind::embedding, ids);
}

inline std::vector<ChunkEmbeddingMatrix> read_chunk_embeddings(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  detail::ByteCursor cur(bytes);
  cur.magic(kChunkMagic);
  const std::uint32_t count = cur.u32("count");
  const std::uint32_t dim = cur.u32("hidden_size");
  const auto side = detail::read_sidecar(path);
  if (side.ids.size() != count) throw DataError("chunk embeddings '" + path.string() + "': sidecar id count mismatch");
  std::vector<ChunkEmbeddingMatrix> recs(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto& m = recs[i];
    m.sample_id = side.ids[i];
    m.hidden_size = dim;
    m.chunks = cur.u32("chunks");
    m.hidden_steps = cur.u32("hidden_steps");
    const std::uint64_t n = static_cast<std::uint64_t>(m.chunks) * m.hidden_steps * dim;
    cur.need(static_cast<std::size_t>(n * 4), "record data");
    m.data.resize(static_cast<std::size_t>(n));
    cur.floats(m.data.data(), m.data.size(), "record data");
  }
  if (!cur.done()) throw DecodeError("chunk embeddings: trailing bytes", cur.pos());
  return recs;
}

/// Reads either container; chunk-level files are pooled on the way in.
inline std::vector<FeatureVector> load_embeddings(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kChunkMagic, 8) == 0) {
    std::vector<FeatureVector> out;
    for (const auto& m : read_chunk_embeddings(path)) out.push_back(pool_embeddings(m));
    return out;
  }
  return read_feature_store(path);
}

}  // namespace pam::features
