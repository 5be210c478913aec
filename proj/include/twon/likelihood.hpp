#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "twon/embedding.hpp"
#include "twon/error.hpp"
#include "twon/rng.hpp"

namespace twon::likelihood {

// Reply-likelihood scorer. Two branches over frozen embeddings:
//
//   H' = relu(relu(H W_h1 + b_h1) W_h2 + b_h2)      history, n x d, row-wise
//   p' = relu(relu(p W_p1 + b_p1) W_p2 + b_p2)      post, 1 x d
//   pooled = mean over rows of (H' * repeat(p'))     element-wise interaction
//   score  = sigmoid(w_out . pooled + b_out)
//
// All square layers keep the encoder dimension d.

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;
using RowMap = Eigen::Map<RowVector>;
using ConstRowMap = Eigen::Map<const RowVector>;

/// Parameter tensors, stored flat in this fixed order.
enum class Tensor : std::size_t { W_h1, b_h1, W_h2, b_h2, W_p1, b_p1, W_p2, b_p2, w_out, b_out };
inline constexpr std::size_t kTensorCount = 10;
inline constexpr std::array<const char*, kTensorCount> kTensorNames = {
    "W_h1", "b_h1", "W_h2", "b_h2", "W_p1", "b_p1", "W_p2", "b_p2", "w_out", "b_out"};

struct TensorSlice {
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
};

class ScorerParams {
 public:
  ScorerParams() = default;
  explicit ScorerParams(std::size_t d) : d_(d), data_(total_size(d), 0.0) {
    if (d == 0) throw InputError("scorer dimension must be positive");
  }

  static std::size_t total_size(std::size_t d) { return 4 * d * d + 5 * d + 1; }

  std::size_t dim() const { return d_; }
  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  TensorSlice slice(Tensor t) const {
    const std::size_t dd = d_ * d_;
    const std::size_t layer = dd + d_;
    const auto i = static_cast<std::size_t>(t);
    if (i < 8) {
      const std::size_t base = (i / 2) * layer;
      return i % 2 == 0 ? TensorSlice{base, d_, d_} : TensorSlice{base + dd, 1, d_};
    }
    if (t == Tensor::w_out) return {4 * layer, 1, d_};
    return {4 * layer + d_, 1, 1};
  }

  std::span<double> tensor(Tensor t) {
    const auto s = slice(t);
    return {data_.data() + s.offset, s.size()};
  }
  std::span<const double> tensor(Tensor t) const {
    const auto s = slice(t);
    return {data_.data() + s.offset, s.size()};
  }

  ConstMatrixMap weight(Tensor t) const {
    const auto s = slice(t);
    return ConstMatrixMap(data_.data() + s.offset, static_cast<Eigen::Index>(s.rows), static_cast<Eigen::Index>(s.cols));
  }
  MatrixMap weight(Tensor t) {
    const auto s = slice(t);
    return MatrixMap(data_.data() + s.offset, static_cast<Eigen::Index>(s.rows), static_cast<Eigen::Index>(s.cols));
  }
  ConstRowMap row(Tensor t) const {
    const auto s = slice(t);
    return ConstRowMap(data_.data() + s.offset, static_cast<Eigen::Index>(s.size()));
  }
  RowMap row(Tensor t) {
    const auto s = slice(t);
    return RowMap(data_.data() + s.offset, static_cast<Eigen::Index>(s.size()));
  }
  double bias_out() const { return data_[slice(Tensor::b_out).offset]; }
  double& bias_out() { return data_[slice(Tensor::b_out).offset]; }

  bool operator==(const ScorerParams&) const = default;

 private:
  std::size_t d_ = 0;
  std::vector<double> data_;
};

/// One training example: the user's interaction history, a candidate post,
/// and whether the user replied to it.
struct LikelihoodExample {
  std::vector<EmbeddingVector> history;
  EmbeddingVector post;
  int label = 0;
  std::string user;
};

/// Example converted to dense matrices once, ahead of training.
struct DenseExample {
  Matrix history;
  RowVector post;
  int label = 0;
};

inline DenseExample to_dense(const LikelihoodExample& ex, std::size_t d) {
  if (ex.history.empty()) throw InputError("example history must hold at least one vector");
  if (ex.post.dim() != d) throw InputError("post embedding has dimension " + std::to_string(ex.post.dim()) +
                                           ", model expects " + std::to_string(d));
  DenseExample out;
  out.history.resize(static_cast<Eigen::Index>(ex.history.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < ex.history.size(); ++i) {
    if (ex.history[i].dim() != d) throw InputError("history embedding dimension mismatch");
    out.history.row(static_cast<Eigen::Index>(i)) = ConstRowMap(ex.history[i].values.data(), static_cast<Eigen::Index>(d));
  }
  out.post = ConstRowMap(ex.post.values.data(), static_cast<Eigen::Index>(d));
  out.label = ex.label;
  return out;
}

namespace detail {

struct Branch {
  Matrix z1, a1, z2, out;
};

inline Branch run_branch(const ScorerParams& p, Tensor w1, Tensor b1, Tensor w2, Tensor b2, const Matrix& x) {
  Branch br;
  br.z1 = (x * p.weight(w1)).rowwise() + p.row(b1);
  br.a1 = br.z1.cwiseMax(0.0);
  br.z2 = (br.a1 * p.weight(w2)).rowwise() + p.row(b2);
  br.out = br.z2.cwiseMax(0.0);
  return br;
}

struct Forward {
  Branch history, post;
  RowVector pooled;
  double logit = 0.0;
};

inline Forward run_forward(const ScorerParams& p, const Matrix& history, const RowVector& post) {
  const auto d = static_cast<Eigen::Index>(p.dim());
  if (history.rows() < 1) throw InputError("history must hold at least one row");
  if (history.cols() != d || post.size() != d)
    throw InputError("input width does not match scorer dimension " + std::to_string(p.dim()));
  Forward f;
  f.history = run_branch(p, Tensor::W_h1, Tensor::b_h1, Tensor::W_h2, Tensor::b_h2, history);
  f.post = run_branch(p, Tensor::W_p1, Tensor::b_p1, Tensor::W_p2, Tensor::b_p2, Matrix(post));
  const RowVector p_out = f.post.out.row(0);
  f.pooled = (f.history.out.array().rowwise() * p_out.array()).colwise().mean();
  f.logit = f.pooled.dot(p.row(Tensor::w_out)) + p.bias_out();
  if (!std::isfinite(f.logit)) throw NumericError("non-finite logit in scorer forward pass");
  return f;
}

inline double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

/// Binary cross-entropy written in terms of the logit, stable for large |z|.
inline double bce_from_logit(double z, int y) {
  return std::max(z, 0.0) - z * static_cast<double>(y) + std::log1p(std::exp(-std::abs(z)));
}

inline void backprop_branch(const ScorerParams& p, ScorerParams& g, Tensor w1, Tensor b1, Tensor w2, Tensor b2,
                            const Matrix& x, const Branch& br, const Matrix& d_out) {
  const Matrix dz2 = d_out.cwiseProduct((br.z2.array() > 0.0).cast<double>().matrix());
  g.weight(w2).noalias() += br.a1.transpose() * dz2;
  g.row(b2) += dz2.colwise().sum();
  const Matrix da1 = dz2 * p.weight(w2).transpose();
  const Matrix dz1 = da1.cwiseProduct((br.z1.array() > 0.0).cast<double>().matrix());
  g.weight(w1).noalias() += x.transpose() * dz1;
  g.row(b1) += dz1.colwise().sum();
}

}  // namespace detail

inline double forward(const ScorerParams& params, const Matrix& history, const RowVector& post) {
  const double s = detail::sigmoid(detail::run_forward(params, history, post).logit);
  // Keep the score inside the open interval even when the logit saturates.
  return std::clamp(s, std::nextafter(0.0, 1.0), std::nextafter(1.0, 0.0));
}

inline double forward(const ScorerParams& params, const LikelihoodExample& ex) {
  const auto dense = to_dense(ex, params.dim());
  return forward(params, dense.history, dense.post);
}

struct LossAndGrad {
  double loss = 0.0;
  ScorerParams grad;
};

/// Mean binary cross-entropy over the batch and its exact gradient.
inline LossAndGrad loss_and_grad(const ScorerParams& params, std::span<const DenseExample> batch) {
  if (batch.empty()) throw InputError("loss_and_grad needs a non-empty batch");
  LossAndGrad out{0.0, ScorerParams(params.dim())};
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch) {
    if (ex.label != 0 && ex.label != 1) throw InputError("label must be 0 or 1, got " + std::to_string(ex.label));
    const auto f = detail::run_forward(params, ex.history, ex.post);
    out.loss += detail::bce_from_logit(f.logit, ex.label) * inv_b;

    const double dlogit = (detail::sigmoid(f.logit) - static_cast<double>(ex.label)) * inv_b;
    auto& g = out.grad;
    g.row(Tensor::w_out) += dlogit * f.pooled;
    g.bias_out() += dlogit;

    const RowVector dpooled = dlogit * params.row(Tensor::w_out);
    const double inv_n = 1.0 / static_cast<double>(ex.history.rows());
    const RowVector p_out = f.post.out.row(0);
    // d interaction = dpooled / n on every row.
    const Matrix dh_out = (Matrix::Ones(ex.history.rows(), 1) * (dpooled * inv_n)).array().rowwise() * p_out.array();
    const Matrix dp_out = (f.history.out.colwise().sum().array() * dpooled.array() * inv_n).matrix();

    detail::backprop_branch(params, g, Tensor::W_h1, Tensor::b_h1, Tensor::W_h2, Tensor::b_h2, ex.history, f.history,
                            dh_out);
    detail::backprop_branch(params, g, Tensor::W_p1, Tensor::b_p1, Tensor::W_p2, Tensor::b_p2, Matrix(ex.post), f.post,
                            dp_out);
  }
  if (!std::isfinite(out.loss)) throw NumericError("non-finite loss");
  return out;
}

inline LossAndGrad loss_and_grad(const ScorerParams& params, std::span<const LikelihoodExample> batch) {
  std::vector<DenseExample> dense;
  dense.reserve(batch.size());
  for (const auto& ex : batch) dense.push_back(to_dense(ex, params.dim()));
  return loss_and_grad(params, std::span<const DenseExample>(dense));
}

/// Uniform in [-1/sqrt(d), 1/sqrt(d)] for every entry, biases included.
inline ScorerParams initialize(std::size_t d, std::uint64_t seed) {
  ScorerParams p(d);
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  for (double& v : p.flat()) v = rng.uniform(-bound, bound);
  return p;
}

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 0.01;
  int epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainResult {
  ScorerParams params;
  std::vector<double> loss_curve;  // mean training loss per epoch
};

/// AdamW: Adam moments with weight decay applied directly to the parameters.
class AdamW {
 public:
  AdamW(std::size_t n, const TrainConfig& c) : c_(c), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad) {
    ++t_;
    const double bc1 = 1.0 - std::pow(c_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(c_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = c_.beta1 * m_[i] + (1.0 - c_.beta1) * grad[i];
      v_[i] = c_.beta2 * v_[i] + (1.0 - c_.beta2) * grad[i] * grad[i];
      const double mhat = m_[i] / bc1;
      const double vhat = v_[i] / bc2;
      params[i] -= c_.lr * (mhat / (std::sqrt(vhat) + c_.eps) + c_.weight_decay * params[i]);
    }
  }

 private:
  TrainConfig c_;
  std::vector<double> m_, v_;
  long long t_ = 0;
};

inline TrainResult train(std::span<const LikelihoodExample> dataset, std::size_t d, const TrainConfig& config) {
  if (dataset.empty()) throw InputError("training set is empty");
  if (config.batch_size == 0) throw InputError("batch_size must be positive");
  if (config.epochs < 0) throw InputError("epochs must be non-negative");

  std::vector<DenseExample> dense;
  dense.reserve(dataset.size());
  for (const auto& ex : dataset) {
    if (ex.label != 0 && ex.label != 1) throw InputError("label must be 0 or 1");
    dense.push_back(to_dense(ex, d));
  }

  TrainResult result{initialize(d, config.seed), {}};
  AdamW opt(result.params.flat().size(), config);
  std::vector<std::size_t> order(dense.size());
  std::vector<DenseExample> batch;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(epoch) + 1));
    rng.shuffle(std::span<std::size_t>(order));

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(dense[order[i]]);
      LossAndGrad lg;
      try {
        lg = loss_and_grad(result.params, std::span<const DenseExample>(batch));
      } catch (const NumericError& e) {
        throw TrainingError(epoch, e.what());
      }
      epoch_loss += lg.loss * static_cast<double>(end - start);
      opt.step(result.params.flat(), lg.grad.flat());
    }
    epoch_loss /= static_cast<double>(order.size());
    if (!std::isfinite(epoch_loss)) throw TrainingError(epoch, "training loss diverged");
    for (double v : result.params.flat())
      if (!std::isfinite(v)) throw TrainingError(epoch, "parameters diverged");
    result.loss_curve.push_back(epoch_loss);
  }
  return result;
}

struct ClassifierMetrics {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double accuracy = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

/// Confusion counts from predicted scores; score >= threshold is positive.
inline ClassifierMetrics classification_metrics(std::span<const double> scores, std::span<const int> labels,
                                                double threshold = 0.5) {
  if (scores.size() != labels.size()) throw InputError("scores and labels differ in length");
  if (scores.empty()) throw InputError("cannot evaluate an empty dataset");
  ClassifierMetrics m;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    const bool truth = labels[i] == 1;
    if (pred && truth) ++m.tp;
    else if (pred) ++m.fp;
    else if (truth) ++m.fn;
    else ++m.tn;
  }
  const auto tp = static_cast<double>(m.tp);
  m.precision = m.tp + m.fp == 0 ? 0.0 : tp / static_cast<double>(m.tp + m.fp);
  m.recall = m.tp + m.fn == 0 ? 0.0 : tp / static_cast<double>(m.tp + m.fn);
  m.f1 = m.precision + m.recall == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(scores.size());
  return m;
}

inline ClassifierMetrics evaluate_classifier(const ScorerParams& params, std::span<const LikelihoodExample> dataset,
                                             double threshold = 0.5) {
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& ex : dataset) {
    scores.push_back(forward(params, ex));
    labels.push_back(ex.label);
  }
  return classification_metrics(scores, labels, threshold);
}

inline nlohmann::ordered_json to_json(const ClassifierMetrics& m) {
  return {{"f1", m.f1}, {"precision", m.precision}, {"recall", m.recall}, {"accuracy", m.accuracy},
          {"tp", m.tp}, {"fp", m.fp}, {"tn", m.tn}, {"fn", m.fn}};
}

// --- persistence -------------------------------------------------------------
//
// Binary layout: 8-byte magic "TWONSCR\0", uint32 version, uint64 d, then
// every tensor in Tensor order as little-endian IEEE-754 doubles, matrices
// row-major.

inline constexpr std::array<char, 8> kMagic = {'T', 'W', 'O', 'N', 'S', 'C', 'R', '\0'};
inline constexpr std::uint32_t kFormatVersion = 1;

namespace detail {

template <typename T>
void write_le(std::ostream& os, T value) {
  std::array<char, sizeof(T)> bytes;
  auto u = std::bit_cast<std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((u >> (8 * i)) & 0xff);
  os.write(bytes.data(), bytes.size());
}

template <typename T>
T read_le(std::istream& is) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  std::array<unsigned char, sizeof(T)> bytes;
  if (!is.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) throw DataError("truncated params file");
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(bytes[i]) << (8 * i);
  return std::bit_cast<T>(u);
}

}  // namespace detail

inline void save_params(std::ostream& os, const ScorerParams& p) {
  os.write(kMagic.data(), kMagic.size());
  detail::write_le<std::uint32_t>(os, kFormatVersion);
  detail::write_le<std::uint64_t>(os, p.dim());
  for (double v : p.flat()) detail::write_le<double>(os, v);
}

inline ScorerParams load_params(std::istream& is) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) throw DataError("not a scorer params file");
  const auto version = detail::read_le<std::uint32_t>(is);
  if (version != kFormatVersion) throw DataError("unsupported params version " + std::to_string(version));
  const auto d = detail::read_le<std::uint64_t>(is);
  if (d == 0 || d > 100000) throw DataError("implausible scorer dimension " + std::to_string(d));
  ScorerParams p(static_cast<std::size_t>(d));
  for (double& v : p.flat()) v = detail::read_le<double>(is);
  return p;
}

inline nlohmann::ordered_json params_metadata(const ScorerParams& p, const TrainConfig& c,
                                              std::span<const double> loss_curve) {
  nlohmann::ordered_json j;
  j["format"] = "twon-scorer";
  j["version"] = kFormatVersion;
  j["d"] = p.dim();
  j["tensor_order"] = kTensorNames;
  j["config"] = {{"lr", c.lr},         {"weight_decay", c.weight_decay}, {"epochs", c.epochs},
                 {"batch_size", c.batch_size}, {"seed", c.seed},     {"beta1", c.beta1},
                 {"beta2", c.beta2},   {"eps", c.eps}};
  j["loss_curve"] = std::vector<double>(loss_curve.begin(), loss_curve.end());
  return j;
}

}  // namespace twon::likelihood
