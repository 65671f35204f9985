#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "turneval/embedding.hpp"
#include "turneval/quality.hpp"

namespace turneval {

struct FewShotExample {
  std::string context_text;
  std::string response_text;
  Quality quality = Quality::Appropriateness;
  double score = 3.0;
  Embedding embedding;
  std::string source_split;
};

struct Neighbor {
  std::size_t id = 0;
  double similarity = 0.0;
};

/// Orders by similarity descending, then by lower id.
inline bool neighbor_before(const Neighbor& a, const Neighbor& b) {
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.id < b.id;
}

/// Immutable exact-search store. Entry ids are insertion positions.
class VectorStore {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  explicit VectorStore(std::vector<FewShotExample> examples);

  std::size_t size() const { return entries_.size(); }
  std::size_t dimension() const { return dimension_; }
  std::size_t partition_size(Quality q) const { return partitions_[index(q)].size(); }
  const FewShotExample& entry(std::size_t id) const { return entries_.at(id); }
  const std::vector<FewShotExample>& entries() const { return entries_; }

  /// Full cosine scan of the quality partition; top k by neighbor_before.
  std::vector<Neighbor> nearest(const Embedding& probe, Quality quality, std::size_t k) const;
  std::vector<FewShotExample> query(const Embedding& probe, Quality quality, std::size_t k) const;

  /// Ids of entries sharing this entry's context and response text, in id
  /// order (includes `id` itself).
  std::vector<std::size_t> siblings(std::size_t id) const;

  void save(const std::filesystem::path& path) const;
  static VectorStore load(const std::filesystem::path& path);

 private:
  static std::size_t index(Quality q) { return static_cast<std::size_t>(q); }

  std::size_t dimension_ = 0;
  std::vector<FewShotExample> entries_;
  std::array<std::vector<std::size_t>, 4> partitions_;
};

inline VectorStore build_store(std::vector<FewShotExample> examples) {
  return VectorStore(std::move(examples));
}
inline std::vector<FewShotExample> query(const VectorStore& store, const Embedding& probe,
                                         Quality quality, std::size_t k) {
  return store.query(probe, quality, k);
}
inline void save_store(const VectorStore& store, const std::filesystem::path& path) {
  store.save(path);
}
inline VectorStore load_store(const std::filesystem::path& path) { return VectorStore::load(path); }

}  // namespace turneval
