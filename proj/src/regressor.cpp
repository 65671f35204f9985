#include "turneval/regressor.hpp"

#include <cstring>

#include "turneval/binary_io.hpp"

namespace turneval {

namespace {
constexpr char kMagic[4] = {'T', 'E', 'V', 'M'};
}

void save_model(const FeedForward<double>& model, const std::filesystem::path& path) {
  ByteWriter w;
  w.raw(std::span(reinterpret_cast<const std::uint8_t*>(kMagic), 4));
  w.u32(kModelFormatVersion);
  w.u8(static_cast<std::uint8_t>(model.quality));
  w.u32(static_cast<std::uint32_t>(model.input_dim()));
  w.u32(static_cast<std::uint32_t>(model.layers.size()));
  for (const auto& layer : model.layers) {
    w.u32(static_cast<std::uint32_t>(layer.weight.rows()));
    w.u32(static_cast<std::uint32_t>(layer.weight.cols()));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) w.f64(layer.weight(r, c));
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) w.f64(layer.bias(r));
  }
  w.append_checksum();
  w.write_file(path);
}

FeedForward<double> load_model(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  const std::string where = path.string() + ": ";
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CorruptFileError(where + "not a model file");
  }
  ByteReader header{std::span(bytes).subspan(4, 4)};
  if (const auto v = header.u32(); v != kModelFormatVersion) {
    throw VersionMismatchError(where + "model format version " + std::to_string(v));
  }
  try {
    ByteReader r(verify_checksum(bytes));
    r.skip(8);
    FeedForward<double> m;
    m.quality = quality_from_tag(r.u8());
    const auto input_dim = r.u32();
    if (r.u32() != m.layers.size()) throw CorruptFileError("unexpected layer count");
    Eigen::Index expected_in = input_dim;
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
      const Eigen::Index rows = r.u32();
      const Eigen::Index cols = r.u32();
      if (cols != expected_in || (i + 1 == m.layers.size() && rows != 1)) {
        throw CorruptFileError("inconsistent layer shapes");
      }
      auto& layer = m.layers[i];
      layer.weight.resize(rows, cols);
      for (Eigen::Index rr = 0; rr < rows; ++rr) {
        for (Eigen::Index c = 0; c < cols; ++c) layer.weight(rr, c) = r.f64();
      }
      layer.bias.resize(rows);
      for (Eigen::Index rr = 0; rr < rows; ++rr) layer.bias(rr) = r.f64();
      if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
        throw DataError(where + "non-finite parameters");
      }
      expected_in = rows;
    }
    if (r.remaining() != 0) throw CorruptFileError("trailing bytes");
    return m;
  } catch (const CorruptFileError& e) {
    throw CorruptFileError(where + e.what());
  }
}

}  // namespace turneval
