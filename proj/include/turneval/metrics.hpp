#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "turneval/data.hpp"
#include "turneval/errors.hpp"
#include "turneval/scoring.hpp"

namespace turneval {

/// Raised when a correlation is undefined (n < 2 or a constant input).
class UndefinedStatisticError : public DataError {
 public:
  using DataError::DataError;
};

/// 1-based ranks; tied values share the mean of their rank block.
template <typename Derived>
Eigen::VectorXd average_ranks(const Eigen::DenseBase<Derived>& values) {
  const auto n = values.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return values(a) < values(b);
  });
  Eigen::VectorXd ranks(n);
  for (Eigen::Index i = 0; i < n;) {
    Eigen::Index j = i + 1;
    while (j < n && values(order[static_cast<std::size_t>(j)]) == values(order[static_cast<std::size_t>(i)])) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of i+1 .. j
    for (Eigen::Index k = i; k < j; ++k) ranks(order[static_cast<std::size_t>(k)]) = rank;
    i = j;
  }
  return ranks;
}

template <typename DerivedX, typename DerivedY>
double pearson(const Eigen::DenseBase<DerivedX>& x, const Eigen::DenseBase<DerivedY>& y) {
  if (x.size() != y.size()) throw DataError("correlation inputs differ in length");
  if (x.size() < 2) throw UndefinedStatisticError("correlation needs at least two pairs");
  const Eigen::ArrayXd xd = x.derived().template cast<double>().array();
  const Eigen::ArrayXd yd = y.derived().template cast<double>().array();
  const Eigen::ArrayXd dx = xd - xd.mean();
  const Eigen::ArrayXd dy = yd - yd.mean();
  const double sxx = dx.square().sum();
  const double syy = dy.square().sum();
  if (sxx == 0.0 || syy == 0.0) throw UndefinedStatisticError("correlation of a constant vector");
  return std::clamp((dx * dy).sum() / std::sqrt(sxx * syy), -1.0, 1.0);
}

template <typename DerivedX, typename DerivedY>
double spearman(const Eigen::DenseBase<DerivedX>& x, const Eigen::DenseBase<DerivedY>& y) {
  if (x.size() != y.size()) throw DataError("correlation inputs differ in length");
  return pearson(average_ranks(x), average_ranks(y));
}

inline double spearman(std::span<const double> x, std::span<const double> y) {
  using Map = Eigen::Map<const Eigen::VectorXd>;
  return spearman(Map(x.data(), static_cast<Eigen::Index>(x.size())),
                  Map(y.data(), static_cast<Eigen::Index>(y.size())));
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  using Map = Eigen::Map<const Eigen::VectorXd>;
  return pearson(Map(x.data(), static_cast<Eigen::Index>(x.size())),
                 Map(y.data(), static_cast<Eigen::Index>(y.size())));
}

/// Split name of the pooled row computed over every split.
inline constexpr std::string_view kPooledSplit = "ALL";

struct CorrelationCell {
  Quality quality = Quality::Appropriateness;
  std::string split;
  std::optional<double> scc;
  std::optional<double> pcc;
  std::size_t n = 0;
  std::string diagnostic;  // set when scc/pcc are absent
};

struct CorrelationReport {
  std::vector<CorrelationCell> cells;
  /// Mean of the four pooled SCCs; absent unless all four exist.
  std::optional<double> overall_avg_scc;

  const CorrelationCell* find(Quality q, std::string_view split) const;
};

class UnjoinableError : public DataError {
 public:
  UnjoinableError(const std::string& what, std::vector<std::string> keys)
      : DataError(what), keys_(std::move(keys)) {}
  const std::vector<std::string>& keys() const { return keys_; }

 private:
  std::vector<std::string> keys_;
};

/// Joins predictions to gold turns by (dialogue_id, turn_index) and computes
/// SCC/PCC per (quality, split) plus the pooled row. Turns without a gold
/// score for a quality are skipped; (quality, split) cells with no gold at
/// all are omitted.
CorrelationReport build_report(std::span<const PredictionRecord> predictions, const Corpus& gold);

std::string report_to_json(const CorrelationReport& report);
/// Aligned SCC and PCC tables (splits x qualities) and the average SCC line.
std::string report_to_table(const CorrelationReport& report);

}  // namespace turneval
