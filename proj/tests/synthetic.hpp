#pragma once

#include <cmath>
#include <vector>

#include "twon/likelihood.hpp"
#include "twon/rng.hpp"

namespace twon::testing {

/// Linearly separable reply-likelihood data, balanced overall and per user.
/// The label is the side of a fixed hyperplane the post falls on (margin
/// >= 0.5); history rows are non-negative noise so the history branch stays
/// active.
inline std::vector<likelihood::LikelihoodExample> separable_set(std::size_t d, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> u(d);
  Rng dir(12345);
  for (auto& x : u) x = dir.normal();
  std::vector<likelihood::LikelihoodExample> out;
  std::size_t pos = 0, neg = 0;
  while (out.size() < count) {
    std::vector<double> p(d);
    double dot = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      p[i] = rng.normal();
      dot += p[i] * u[i];
    }
    if (std::abs(dot) < 0.5) continue;
    const int label = dot > 0 ? 1 : 0;
    if (label == 1 && pos >= count / 2) continue;
    if (label == 0 && neg >= count / 2) continue;
    const std::size_t rank = label ? pos++ : neg++;
    likelihood::LikelihoodExample ex;
    ex.user = "u" + std::to_string(rank % 10);  // balanced per user as well
    ex.label = label;
    ex.post = EmbeddingVector(p);
    const std::size_t n = 1 + rng.below(3);
    for (std::size_t r = 0; r < n; ++r) {
      std::vector<double> h(d);
      for (auto& x : h) x = rng.uniform(0.0, 1.0);
      ex.history.emplace_back(h);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

/// Scalar re-implementation of the scorer's logit with plain loops.
inline double reference_logit(const likelihood::ScorerParams& p, const likelihood::LikelihoodExample& ex) {
  using likelihood::Tensor;
  const std::size_t d = p.dim();
  auto layer = [&](const std::vector<double>& x, Tensor w, Tensor b) {
    const auto W = p.tensor(w);
    const auto B = p.tensor(b);
    std::vector<double> y(d);
    for (std::size_t j = 0; j < d; ++j) {
      double s = B[j];
      for (std::size_t i = 0; i < d; ++i) s += x[i] * W[i * d + j];
      y[j] = s > 0 ? s : 0.0;
    }
    return y;
  };
  const auto pp = layer(layer(ex.post.values, Tensor::W_p1, Tensor::b_p1), Tensor::W_p2, Tensor::b_p2);
  std::vector<double> pooled(d, 0.0);
  for (const auto& h : ex.history) {
    const auto hh = layer(layer(h.values, Tensor::W_h1, Tensor::b_h1), Tensor::W_h2, Tensor::b_h2);
    for (std::size_t j = 0; j < d; ++j) pooled[j] += hh[j] * pp[j] / static_cast<double>(ex.history.size());
  }
  const auto w = p.tensor(Tensor::w_out);
  double z = p.tensor(Tensor::b_out)[0];
  for (std::size_t j = 0; j < d; ++j) z += w[j] * pooled[j];
  return z;
}

/// Mean BCE computed from reference_logit, the naive way.
inline double reference_loss(const likelihood::ScorerParams& p, const std::vector<likelihood::LikelihoodExample>& batch) {
  double s = 0.0;
  for (const auto& ex : batch) {
    const double z = reference_logit(p, ex);
    const double q = 1.0 / (1.0 + std::exp(-z));
    s += ex.label ? -std::log(q) : -std::log(1.0 - q);
  }
  return s / static_cast<double>(batch.size());
}

/// Smallest |pre-activation| over every ReLU in the batch; central
/// differences are only meaningful away from the kinks.
inline double min_preactivation(const likelihood::ScorerParams& p,
                                const std::vector<likelihood::LikelihoodExample>& batch) {
  using likelihood::Tensor;
  const std::size_t d = p.dim();
  double best = 1e300;
  auto layer = [&](const std::vector<double>& x, Tensor w, Tensor b) {
    const auto W = p.tensor(w);
    const auto B = p.tensor(b);
    std::vector<double> y(d);
    for (std::size_t j = 0; j < d; ++j) {
      double s = B[j];
      for (std::size_t i = 0; i < d; ++i) s += x[i] * W[i * d + j];
      best = std::min(best, std::abs(s));
      y[j] = s > 0 ? s : 0.0;
    }
    return y;
  };
  for (const auto& ex : batch) {
    layer(layer(ex.post.values, Tensor::W_p1, Tensor::b_p1), Tensor::W_p2, Tensor::b_p2);
    for (const auto& h : ex.history) layer(layer(h.values, Tensor::W_h1, Tensor::b_h1), Tensor::W_h2, Tensor::b_h2);
  }
  return best;
}

inline std::vector<likelihood::LikelihoodExample> random_batch(std::size_t d, Rng& rng) {
  std::vector<likelihood::LikelihoodExample> batch(1 + rng.below(4));
  for (auto& ex : batch) {
    ex.label = static_cast<int>(rng.below(2));
    std::vector<double> p(d);
    for (auto& x : p) x = rng.normal();
    ex.post = EmbeddingVector(p);
    const std::size_t n = 1 + rng.below(3);
    for (std::size_t r = 0; r < n; ++r) {
      std::vector<double> h(d);
      for (auto& x : h) x = rng.normal();
      ex.history.emplace_back(h);
    }
  }
  return batch;
}

struct GradCheck {
  double worst_relative_error = 0.0;
  std::size_t draws = 0;
  std::size_t skipped_near_kink = 0;
};

/// Analytic gradient vs central differences of reference_loss, per tensor:
/// ||g_a - g_fd|| / max(||g_a||, ||g_fd||, 1e-12).
inline GradCheck gradient_check(std::size_t draws, std::uint64_t seed, double step = 1e-4) {
  using namespace likelihood;
  GradCheck gc;
  Rng rng(seed);
  while (gc.draws < draws) {
    const std::size_t d = 2 + rng.below(3);
    ScorerParams params(d);
    for (double& v : params.flat()) v = rng.uniform(-1.0, 1.0);
    const auto batch = random_batch(d, rng);
    // A kink within a few steps of any pre-activation breaks the finite
    // difference, not the gradient; such draws are replaced.
    if (min_preactivation(params, batch) < 50 * step) {
      ++gc.skipped_near_kink;
      continue;
    }
    const auto analytic = loss_and_grad(params, std::span<const LikelihoodExample>(batch)).grad;
    for (std::size_t t = 0; t < kTensorCount; ++t) {
      const auto tensor = static_cast<Tensor>(t);
      const auto slice = params.slice(tensor);
      double diff2 = 0.0, a2 = 0.0, f2 = 0.0;
      for (std::size_t i = 0; i < slice.size(); ++i) {
        ScorerParams plus = params, minus = params;
        plus.flat()[slice.offset + i] += step;
        minus.flat()[slice.offset + i] -= step;
        const double fd = (reference_loss(plus, batch) - reference_loss(minus, batch)) / (2 * step);
        const double a = analytic.flat()[slice.offset + i];
        diff2 += (a - fd) * (a - fd);
        a2 += a * a;
        f2 += fd * fd;
      }
      const double rel = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(f2), 1e-12});
      // Tensors with no gradient at all (dead units) compare absolute error.
      const double err = std::max(std::sqrt(a2), std::sqrt(f2)) < 1e-9 ? std::sqrt(diff2) : rel;
      gc.worst_relative_error = std::max(gc.worst_relative_error, err);
    }
    ++gc.draws;
  }
  return gc;
}

}  // namespace twon::testing
