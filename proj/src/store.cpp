#include "turneval/store.hpp"

#include <algorithm>
#include <cstring>

#include "turneval/binary_io.hpp"

namespace turneval {

namespace {
constexpr char kMagic[4] = {'T', 'E', 'V', 'S'};
}

VectorStore::VectorStore(std::vector<FewShotExample> examples) : entries_(std::move(examples)) {
  if (entries_.empty()) throw DataError("cannot build a store from zero examples");
  dimension_ = static_cast<std::size_t>(entries_.front().embedding.size());
  if (dimension_ == 0) throw DataError("store embeddings must be non-empty");
  for (std::size_t id = 0; id < entries_.size(); ++id) {
    const auto& e = entries_[id];
    if (static_cast<std::size_t>(e.embedding.size()) != dimension_) {
      throw DataError("example " + std::to_string(id) + " has dimension " +
                      std::to_string(e.embedding.size()) + ", store dimension is " +
                      std::to_string(dimension_));
    }
    if (!(e.score >= kScoreMin && e.score <= kScoreMax)) {
      throw DataError("example " + std::to_string(id) + " score outside [1,5]");
    }
    if (!e.embedding.allFinite()) throw DataError("example " + std::to_string(id) + " has non-finite embedding");
    partitions_[index(e.quality)].push_back(id);
  }
}

std::vector<Neighbor> VectorStore::nearest(const Embedding& probe, Quality quality,
                                           std::size_t k) const {
  if (k == 0) throw DataError("k must be at least 1");
  if (static_cast<std::size_t>(probe.size()) != dimension_) {
    throw DataError("probe dimension " + std::to_string(probe.size()) +
                    " does not match store dimension " + std::to_string(dimension_));
  }
  const auto& ids = partitions_[index(quality)];
  std::vector<Neighbor> scored;
  scored.reserve(ids.size());
  for (auto id : ids) scored.push_back({id, cosine_similarity(probe, entries_[id].embedding)});
  const auto take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                    scored.end(), neighbor_before);
  scored.resize(take);
  return scored;
}

std::vector<FewShotExample> VectorStore::query(const Embedding& probe, Quality quality,
                                               std::size_t k) const {
  std::vector<FewShotExample> out;
  for (const auto& n : nearest(probe, quality, k)) out.push_back(entries_[n.id]);
  return out;
}

std::vector<std::size_t> VectorStore::siblings(std::size_t id) const {
  const auto& self = entries_.at(id);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].context_text == self.context_text &&
        entries_[i].response_text == self.response_text) {
      out.push_back(i);
    }
  }
  return out;
}

void VectorStore::save(const std::filesystem::path& path) const {
  ByteWriter w;
  w.raw(std::span(reinterpret_cast<const std::uint8_t*>(kMagic), 4));
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(dimension_));
  w.u64(entries_.size());
  for (const auto& e : entries_) {
    w.string(e.context_text);
    w.string(e.response_text);
    w.string(e.source_split);
    w.u8(static_cast<std::uint8_t>(e.quality));
    w.f64(e.score);
    for (Eigen::Index i = 0; i < e.embedding.size(); ++i) w.f32(e.embedding[i]);
  }
  w.append_checksum();
  w.write_file(path);
}

VectorStore VectorStore::load(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  const std::string where = path.string() + ": ";
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CorruptFileError(where + "not a vector store file");
  }
  {
    ByteReader header{std::span(bytes).subspan(4, 4)};
    const auto version = header.u32();
    if (version != kFormatVersion) {
      throw VersionMismatchError(where + "store format version " + std::to_string(version) +
                                 ", expected " + std::to_string(kFormatVersion));
    }
  }
  try {
    ByteReader r(verify_checksum(bytes));
    r.skip(8);
    const auto dim = r.u32();
    const auto count = r.u64();
    std::vector<FewShotExample> entries;
    for (std::uint64_t i = 0; i < count; ++i) {
      FewShotExample e;
      e.context_text = r.string();
      e.response_text = r.string();
      e.source_split = r.string();
      e.quality = quality_from_tag(r.u8());
      e.score = r.f64();
      e.embedding.resize(dim);
      for (std::uint32_t j = 0; j < dim; ++j) e.embedding[j] = r.f32();
      entries.push_back(std::move(e));
    }
    if (r.remaining() != 0) throw CorruptFileError("trailing bytes");
    return VectorStore(std::move(entries));
  } catch (const CorruptFileError& e) {
    throw CorruptFileError(where + e.what());
  }
}

}  // namespace turneval
