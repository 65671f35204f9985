#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "turneval/errors.hpp"
#include "turneval/metrics.hpp"
#include "turneval/quality.hpp"

namespace turneval {

/// Numerically safe ln(cosh(r)) = |r| + log1p(exp(-2|r|)) - ln 2.
inline double log_cosh(double r) {
  const double a = std::abs(r);
  return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

template <typename DerivedP, typename DerivedT>
double log_cosh_loss(const Eigen::DenseBase<DerivedP>& pred, const Eigen::DenseBase<DerivedT>& target) {
  if (pred.size() != target.size()) throw DataError("log_cosh_loss: length mismatch");
  if (pred.size() == 0) throw DataError("log_cosh_loss: empty input");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    sum += log_cosh(static_cast<double>(pred(i)) - static_cast<double>(target(i)));
  }
  return sum / static_cast<double>(pred.size());
}

/// Input -> hidden (ReLU) -> hidden (ReLU) -> scalar, one network per quality.
template <typename Scalar>
struct FeedForward {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

  struct Layer {
    Matrix weight;  // out x in
    Vector bias;    // out
  };

  Quality quality = Quality::Appropriateness;
  std::array<Layer, 3> layers;

  Eigen::Index input_dim() const { return layers[0].weight.cols(); }

  /// Zero-valued parameters with this model's shapes.
  FeedForward zeros_like() const {
    FeedForward z;
    z.quality = quality;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      z.layers[i].weight = Matrix::Zero(layers[i].weight.rows(), layers[i].weight.cols());
      z.layers[i].bias = Vector::Zero(layers[i].bias.size());
    }
    return z;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  template <typename To>
  FeedForward<To> cast() const {
    FeedForward<To> out;
    out.quality = quality;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      out.layers[i].weight = layers[i].weight.template cast<To>();
      out.layers[i].bias = layers[i].bias.template cast<To>();
    }
    return out;
  }
};

/// Visits matching parameter arrays of models with identical shapes.
template <typename Fn, typename First, typename... Rest>
void for_each_parameter(Fn&& fn, First& first, Rest&... rest) {
  for (std::size_t i = 0; i < first.layers.size(); ++i) {
    fn(first.layers[i].weight.array(), rest.layers[i].weight.array()...);
    fn(first.layers[i].bias.array(), rest.layers[i].bias.array()...);
  }
}

inline constexpr Eigen::Index kDefaultHidden = 1024;

/// He-uniform hidden layers, Glorot-uniform output layer, zero biases.
template <typename Scalar>
FeedForward<Scalar> init_model(Eigen::Index input_dim, Quality quality, std::uint64_t seed,
                               Eigen::Index hidden1 = kDefaultHidden,
                               Eigen::Index hidden2 = kDefaultHidden) {
  if (input_dim < 1 || hidden1 < 1 || hidden2 < 1) throw DataError("layer sizes must be positive");
  std::mt19937_64 rng(seed);
  FeedForward<Scalar> m;
  m.quality = quality;
  const std::array<std::pair<Eigen::Index, Eigen::Index>, 3> shapes{
      {{hidden1, input_dim}, {hidden2, hidden1}, {1, hidden2}}};
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto [out, in] = shapes[i];
    const double limit = i + 1 < shapes.size() ? std::sqrt(6.0 / static_cast<double>(in))
                                               : std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    auto& layer = m.layers[i];
    layer.weight.resize(out, in);
    for (Eigen::Index c = 0; c < in; ++c) {
      for (Eigen::Index r = 0; r < out; ++r) layer.weight(r, c) = static_cast<Scalar>(dist(rng));
    }
    layer.bias = FeedForward<Scalar>::Vector::Zero(out);
  }
  return m;
}

/// Predictions for a batch whose columns are samples.
template <typename Scalar, typename Derived>
typename FeedForward<Scalar>::RowVector forward_batch(const FeedForward<Scalar>& model,
                                                      const Eigen::MatrixBase<Derived>& inputs) {
  if (inputs.rows() != model.input_dim()) {
    throw DataError("input dimension " + std::to_string(inputs.rows()) + " does not match model input " +
                    std::to_string(model.input_dim()));
  }
  using Matrix = typename FeedForward<Scalar>::Matrix;
  Matrix a = ((model.layers[0].weight * inputs).colwise() + model.layers[0].bias).cwiseMax(Scalar(0));
  Matrix b = ((model.layers[1].weight * a).colwise() + model.layers[1].bias).cwiseMax(Scalar(0));
  return (model.layers[2].weight * b).array() + model.layers[2].bias(0);
}

template <typename Scalar, typename Derived>
Scalar forward(const FeedForward<Scalar>& model, const Eigen::MatrixBase<Derived>& x) {
  return forward_batch(model, x.template cast<Scalar>())(0);
}

template <typename Scalar>
struct GradientResult {
  FeedForward<Scalar> grad;
  double loss = 0.0;
};

/// Exact gradient of the mean log-cosh loss over the batch (columns of
/// `inputs`), using d/dr ln cosh r = tanh r.
template <typename Scalar, typename DerivedX, typename DerivedY>
GradientResult<Scalar> gradient(const FeedForward<Scalar>& model,
                                const Eigen::MatrixBase<DerivedX>& inputs,
                                const Eigen::MatrixBase<DerivedY>& targets) {
  using Matrix = typename FeedForward<Scalar>::Matrix;
  using RowVector = typename FeedForward<Scalar>::RowVector;
  const auto n = inputs.cols();
  if (n == 0) throw DataError("gradient of an empty batch");
  if (targets.size() != n) throw DataError("gradient: target count does not match batch");
  if (inputs.rows() != model.input_dim()) throw DataError("gradient: input dimension mismatch");

  const auto& l0 = model.layers[0];
  const auto& l1 = model.layers[1];
  const auto& l2 = model.layers[2];
  const Matrix z1 = (l0.weight * inputs).colwise() + l0.bias;
  const Matrix a1 = z1.cwiseMax(Scalar(0));
  const Matrix z2 = (l1.weight * a1).colwise() + l1.bias;
  const Matrix a2 = z2.cwiseMax(Scalar(0));
  const RowVector out = (l2.weight * a2).array() + l2.bias(0);

  GradientResult<Scalar> result;
  const RowVector residual = out - targets.template cast<Scalar>().reshaped().transpose();
  result.loss = log_cosh_loss(residual, RowVector::Zero(n));
  const RowVector d_out = residual.array().tanh() / static_cast<Scalar>(n);

  auto& g = result.grad;
  g.quality = model.quality;
  g.layers[2].weight = d_out * a2.transpose();
  g.layers[2].bias = FeedForward<Scalar>::Vector::Constant(1, d_out.sum());
  const Matrix d_z2 = ((l2.weight.transpose() * d_out).array() * (z2.array() > Scalar(0)).template cast<Scalar>()).matrix();
  g.layers[1].weight = d_z2 * a1.transpose();
  g.layers[1].bias = d_z2.rowwise().sum();
  const Matrix d_z1 = ((l1.weight.transpose() * d_z2).array() * (z1.array() > Scalar(0)).template cast<Scalar>()).matrix();
  g.layers[0].weight = d_z1 * inputs.transpose();
  g.layers[0].bias = d_z1.rowwise().sum();
  return result;
}

enum class Optimizer { Sgd, Adam };

struct TrainConfig {
  Eigen::Index batch_size = 2048;
  double learning_rate = 5e-5;
  int max_epochs = 200;
  int patience = 10;
  std::uint64_t seed = 0;
  bool center_output_bias = true;  // start the output bias at the mean training target
  Optimizer optimizer = Optimizer::Sgd;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::optional<double> val_scc;  // absent when predictions are constant
};

template <typename Scalar>
struct TrainResult {
  FeedForward<Scalar> model;  // snapshot with the best validation SCC
  std::vector<EpochStats> history;
  int best_epoch = 0;  // 0 when no epoch produced a defined SCC
};

/// Minibatch descent on log-cosh loss with early stopping on validation
/// Spearman. Columns of the input matrices are samples.
template <typename Scalar>
TrainResult<Scalar> train(FeedForward<Scalar> model,
                          const typename FeedForward<Scalar>::Matrix& train_x,
                          const Eigen::VectorXd& train_y,
                          const typename FeedForward<Scalar>::Matrix& val_x,
                          const Eigen::VectorXd& val_y, const TrainConfig& config) {
  using Matrix = typename FeedForward<Scalar>::Matrix;
  if (train_x.cols() == 0 || val_x.cols() == 0) throw DataError("training and validation sets must be non-empty");
  if (train_x.cols() != train_y.size() || val_x.cols() != val_y.size()) {
    throw DataError("feature and target counts differ");
  }
  if (config.batch_size < 1 || !(config.learning_rate > 0.0) || config.patience < 1 || config.max_epochs < 1) {
    throw DataError("invalid training configuration");
  }
  {
    std::vector<double> distinct(val_y.data(), val_y.data() + val_y.size());
    std::sort(distinct.begin(), distinct.end());
    if (std::unique(distinct.begin(), distinct.end()) - distinct.begin() < 3) {
      throw DataError("validation targets need at least three distinct values");
    }
  }

  if (config.center_output_bias) model.layers[2].bias(0) = static_cast<Scalar>(train_y.mean());

  FeedForward<Scalar> first_moment = model.zeros_like();
  FeedForward<Scalar> second_moment = model.zeros_like();
  long step = 0;
  std::mt19937_64 shuffle_rng(config.seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(train_x.cols()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  TrainResult<Scalar> result;
  result.model = model;
  std::optional<double> best_scc;
  int since_best = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch_size)) {
      const auto end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      const auto count = static_cast<Eigen::Index>(end - begin);
      Matrix batch_x(train_x.rows(), count);
      Eigen::VectorXd batch_y(count);
      for (Eigen::Index j = 0; j < count; ++j) {
        const auto src = order[begin + static_cast<std::size_t>(j)];
        batch_x.col(j) = train_x.col(src);
        batch_y(j) = train_y(src);
      }
      auto [grad, loss] = gradient(model, batch_x, batch_y);
      if (!std::isfinite(loss)) {
        throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch));
      }
      loss_sum += loss * static_cast<double>(count);
      ++step;
      const auto lr = static_cast<Scalar>(config.learning_rate);
      if (config.optimizer == Optimizer::Sgd) {
        for_each_parameter([&](auto p, auto g) { p -= lr * g; }, model, grad);
      } else {
        const auto b1 = static_cast<Scalar>(config.adam_beta1);
        const auto b2 = static_cast<Scalar>(config.adam_beta2);
        const auto eps = static_cast<Scalar>(config.adam_epsilon);
        const auto c1 = static_cast<Scalar>(1.0 - std::pow(config.adam_beta1, step));
        const auto c2 = static_cast<Scalar>(1.0 - std::pow(config.adam_beta2, step));
        for_each_parameter(
            [&](auto p, auto g, auto m, auto v) {
              m = b1 * m + (Scalar(1) - b1) * g;
              v = b2 * v + (Scalar(1) - b2) * g.square();
              p -= lr * (m / c1) / ((v / c2).sqrt() + eps);
            },
            model, grad, first_moment, second_moment);
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(order.size());
    const Eigen::VectorXd val_pred = forward_batch(model, val_x).transpose().template cast<double>();
    stats.val_loss = log_cosh_loss(val_pred, val_y);
    if (!std::isfinite(stats.val_loss) || !val_pred.allFinite()) {
      throw DivergenceError("non-finite validation output at epoch " + std::to_string(epoch));
    }
    try {
      stats.val_scc = spearman(val_pred, val_y);
    } catch (const UndefinedStatisticError&) {
      stats.val_scc.reset();
    }
    result.history.push_back(stats);

    if (stats.val_scc && (!best_scc || *stats.val_scc > *best_scc)) {
      best_scc = stats.val_scc;
      result.best_epoch = epoch;
      result.model = model;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  if (!best_scc) result.model = model;
  return result;
}

/// Model file: magic, format version, quality tag, input_dim, per-layer
/// shapes and float64 parameters, trailing SHA-256.
inline constexpr std::uint32_t kModelFormatVersion = 1;
void save_model(const FeedForward<double>& model, const std::filesystem::path& path);
FeedForward<double> load_model(const std::filesystem::path& path);

}  // namespace turneval
