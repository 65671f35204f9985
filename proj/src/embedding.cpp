#include "turneval/embedding.hpp"

#include <cstring>
#include <random>

#include <nlohmann/json.hpp>

#include "turneval/binary_io.hpp"
#include "turneval/http.hpp"

namespace turneval {

namespace {

void write_tensor_header(ByteWriter& w, std::uint32_t l, std::uint32_t t, std::uint32_t h) {
  w.u32(l);
  w.u32(t);
  w.u32(h);
}

PositionMatrix<float> read_tensor_body(ByteReader& r, std::size_t rows, std::size_t cols) {
  if (r.remaining() / 4 < rows * cols) throw CorruptFileError("tensor data truncated");
  PositionMatrix<float> m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const float v = r.f32();
      if (!std::isfinite(v)) throw DataError("non-finite tensor entry");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
  }
  return m;
}

}  // namespace

HiddenStates read_hidden_states(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes);
  HiddenStates s;
  s.layers = r.u32();
  s.timesteps = r.u32();
  const auto h = r.u32();
  if (s.layers == 0 || s.timesteps == 0 || h == 0) {
    throw DataError(path.string() + ": empty hidden-state tensor");
  }
  s.values = read_tensor_body(r, std::size_t{s.layers} * s.timesteps, h);
  if (r.remaining() != 0) throw CorruptFileError(path.string() + ": trailing bytes");
  return s;
}

void write_hidden_states(const HiddenStates& states, const std::filesystem::path& path) {
  ByteWriter w;
  write_tensor_header(w, states.layers, states.timesteps, states.hidden());
  for (Eigen::Index i = 0; i < states.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < states.values.cols(); ++j) w.f32(states.values(i, j));
  }
  w.write_file(path);
}

EmbeddingCache read_embedding_cache(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw DataError("embedding cache not found: " + path.string());
  }
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes);
  const auto layers = r.u32();
  const auto rows = r.u32();
  const auto dim = r.u32();
  if (layers != 1 || dim == 0) {
    throw DataError(path.string() + ": embedding cache must be a (1, rows, dim) tensor");
  }
  EmbeddingCache cache;
  cache.features = read_tensor_body(r, rows, dim);
  for (std::uint32_t i = 0; i < rows; ++i) {
    cache.dialogue_ids.push_back(r.string());
    cache.turn_indices.push_back(r.u32());
  }
  if (r.remaining() != 0) throw CorruptFileError(path.string() + ": trailing bytes");
  return cache;
}

void write_embedding_cache(const EmbeddingCache& cache, const std::filesystem::path& path) {
  const auto rows = static_cast<std::uint32_t>(cache.features.rows());
  if (cache.dialogue_ids.size() != rows || cache.turn_indices.size() != rows) {
    throw DataError("embedding cache keys do not match row count");
  }
  ByteWriter w;
  write_tensor_header(w, 1, rows, static_cast<std::uint32_t>(cache.features.cols()));
  for (Eigen::Index i = 0; i < cache.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < cache.features.cols(); ++j) w.f32(cache.features(i, j));
  }
  for (std::uint32_t i = 0; i < rows; ++i) {
    w.string(cache.dialogue_ids[i]);
    w.u32(cache.turn_indices[i]);
  }
  w.write_file(path);
}

Embedding embed_text(EmbeddingProvider& provider, std::string_view text) {
  if (text.empty()) throw DataError("cannot embed empty text");
  const std::string owned(text);
  auto out = provider.embed_batch(std::span(&owned, 1));
  return std::move(out.at(0));
}

MockEmbeddingProvider::MockEmbeddingProvider(std::size_t dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed) {
  if (dimension == 0) throw DataError("embedding dimension must be positive");
}

std::string MockEmbeddingProvider::name() const {
  return "mock:" + std::to_string(dimension_) + ":" + std::to_string(seed_);
}

std::vector<Embedding> MockEmbeddingProvider::embed_batch(std::span<const std::string> texts) {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    const auto digest = sha256(std::to_string(seed_) + '\0' + text);
    std::uint64_t state;
    std::memcpy(&state, digest.data(), sizeof(state));
    std::mt19937_64 rng(state);
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    Embedding e(static_cast<Eigen::Index>(dimension_));
    for (Eigen::Index i = 0; i < e.size(); ++i) e[i] = gauss(rng);
    e.normalize();
    out.push_back(std::move(e));
  }
  return out;
}

RemoteEmbeddingProvider::RemoteEmbeddingProvider(Options options)
    : options_(std::move(options)), limiter_(options_.max_in_flight) {
  if (options_.dimension == 0) throw DataError("embedding dimension must be positive");
}

std::vector<Embedding> RemoteEmbeddingProvider::embed_batch(std::span<const std::string> texts) {
  using nlohmann::json;
  const std::string body = json{{"texts", std::vector<std::string>(texts.begin(), texts.end())}}.dump();

  int attempts = 0;
  const auto response = with_retries(
      options_.backoff, options_.sleeper,
      [&] {
        ConcurrencyLimiter::Guard guard(limiter_);
        auto res = post_json(options_.url, body);
        if (res.status == 429 || res.status >= 500) {
          throw TransientError("embedding service returned HTTP " + std::to_string(res.status));
        }
        if (res.status != 200) {
          throw BackendError("embedding service returned HTTP " + std::to_string(res.status), false);
        }
        return res.body;
      },
      attempts);

  json parsed;
  try {
    parsed = json::parse(response);
  } catch (const json::exception& e) {
    throw BackendError(std::string("embedding service sent invalid JSON: ") + e.what(), false);
  }
  if (!parsed.contains("embeddings") || !parsed["embeddings"].is_array() ||
      parsed["embeddings"].size() != texts.size()) {
    throw BackendError("embedding service response lacks one embedding per text", false);
  }
  std::vector<Embedding> out;
  for (const auto& row : parsed["embeddings"]) {
    if (row.size() != options_.dimension) {
      throw DimensionMismatchError("embedding service returned " + std::to_string(row.size()) +
                                   " values, expected " + std::to_string(options_.dimension));
    }
    Embedding e(static_cast<Eigen::Index>(row.size()));
    for (std::size_t i = 0; i < row.size(); ++i) {
      e[static_cast<Eigen::Index>(i)] = row[i].get<float>();
      if (!std::isfinite(e[static_cast<Eigen::Index>(i)])) {
        throw BackendError("embedding service returned a non-finite value", false);
      }
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::unique_ptr<EmbeddingProvider> make_embedding_provider(std::string_view spec) {
  const auto fail = [&] {
    return DataError("bad embedder spec `" + std::string(spec) +
                     "` (expected mock:<dim>[:<seed>] or remote:<dim>:<url>)");
  };
  const auto colon = spec.find(':');
  if (colon == std::string_view::npos) throw fail();
  const auto kind = spec.substr(0, colon);
  auto rest = std::string(spec.substr(colon + 1));
  try {
    if (kind == "mock") {
      const auto c2 = rest.find(':');
      const auto dim = std::stoul(rest.substr(0, c2));
      const std::uint64_t seed = c2 == std::string::npos ? 0 : std::stoull(rest.substr(c2 + 1));
      return std::make_unique<MockEmbeddingProvider>(dim, seed);
    }
    if (kind == "remote") {
      const auto c2 = rest.find(':');
      if (c2 == std::string::npos) throw fail();
      RemoteEmbeddingProvider::Options opts;
      opts.dimension = std::stoul(rest.substr(0, c2));
      opts.url = rest.substr(c2 + 1);
      return std::make_unique<RemoteEmbeddingProvider>(std::move(opts));
    }
  } catch (const std::logic_error&) {
    throw fail();
  }
  throw fail();
}

}  // namespace turneval
