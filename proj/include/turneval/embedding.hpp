#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "turneval/errors.hpp"
#include "turneval/retry.hpp"

namespace turneval {

using Embedding = Eigen::VectorXf;

template <typename Scalar>
using PositionMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Decoder hidden states, one row per (layer, timestep) position, layer-major.
struct HiddenStates {
  std::uint32_t layers = 0;
  std::uint32_t timesteps = 0;
  PositionMatrix<float> values;  // (layers * timesteps) x hidden

  std::uint32_t hidden() const { return static_cast<std::uint32_t>(values.cols()); }
};

/// Global max and mean over all positions (rows), concatenated as
/// [max_0..max_{H-1}, mean_0..mean_{H-1}].
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> pool_positions(
    const Eigen::MatrixBase<Derived>& positions) {
  using Scalar = typename Derived::Scalar;
  if (positions.rows() == 0 || positions.cols() == 0) {
    throw DataError("cannot pool an empty tensor");
  }
  const auto h = positions.cols();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(2 * h);
  out.head(h) = positions.colwise().maxCoeff().transpose();
  out.tail(h) = positions.colwise().mean().transpose();
  return out;
}

inline Embedding pool_hidden_states(const HiddenStates& states) {
  return pool_positions(states.values);
}

/// dot(a, b) / (|a| |b|), accumulated in double.
template <typename DerivedA, typename DerivedB>
double cosine_similarity(const Eigen::MatrixBase<DerivedA>& a,
                         const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size()) {
    throw DataError("cosine_similarity: dimension mismatch " + std::to_string(a.size()) +
                    " vs " + std::to_string(b.size()));
  }
  const auto ad = a.template cast<double>();
  const auto bd = b.template cast<double>();
  const double na = ad.norm();
  const double nb = bd.norm();
  if (na == 0.0 || nb == 0.0) throw DataError("cosine_similarity: zero vector");
  return std::clamp(ad.dot(bd) / (na * nb), -1.0, 1.0);
}

HiddenStates read_hidden_states(const std::filesystem::path& path);
void write_hidden_states(const HiddenStates& states, const std::filesystem::path& path);

/// Pooled feature rows keyed by (dialogue_id, turn_index).
struct EmbeddingCache {
  std::vector<std::string> dialogue_ids;
  std::vector<std::uint32_t> turn_indices;
  PositionMatrix<float> features;  // rows x dim
};

EmbeddingCache read_embedding_cache(const std::filesystem::path& path);
void write_embedding_cache(const EmbeddingCache& cache, const std::filesystem::path& path);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string name() const = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::vector<Embedding> embed_batch(std::span<const std::string> texts) = 0;
};

Embedding embed_text(EmbeddingProvider& provider, std::string_view text);

/// Deterministic offline provider: SHA-256 of (seed, text) seeds a Gaussian
/// draw that is then scaled to unit length.
class MockEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit MockEmbeddingProvider(std::size_t dimension, std::uint64_t seed = 0);
  std::string name() const override;
  std::size_t dimension() const override { return dimension_; }
  std::vector<Embedding> embed_batch(std::span<const std::string> texts) override;

 private:
  std::size_t dimension_;
  std::uint64_t seed_;
};

/// POST {"texts": [...]} -> {"embeddings": [[...]]}.
class RemoteEmbeddingProvider final : public EmbeddingProvider {
 public:
  struct Options {
    std::string url;
    std::size_t dimension = 768;
    BackoffPolicy backoff{};
    int max_in_flight = 4;
    Sleeper sleeper = real_sleeper();
  };

  explicit RemoteEmbeddingProvider(Options options);
  std::string name() const override { return "remote:" + options_.url; }
  std::size_t dimension() const override { return options_.dimension; }
  std::vector<Embedding> embed_batch(std::span<const std::string> texts) override;

 private:
  Options options_;
  ConcurrencyLimiter limiter_;
};

/// "mock:<dim>[:<seed>]" or "remote:<dim>:<url>".
std::unique_ptr<EmbeddingProvider> make_embedding_provider(std::string_view spec);

}  // namespace turneval
