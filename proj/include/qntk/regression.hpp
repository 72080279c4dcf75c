#pragma once

#include "qntk/activation.hpp"
#include "qntk/kernel.hpp"
#include "qntk/linalg.hpp"
#include "qntk/ntk.hpp"
#include "qntk/parallel.hpp"
#include "qntk/rng.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace qntk {

enum class PredictionMode { exact, sparsified, diagonal };

inline const char* to_string(PredictionMode m) {
  switch (m) {
    case PredictionMode::exact: return "exact";
    case PredictionMode::sparsified: return "sparsified";
    case PredictionMode::diagonal: return "diagonal";
  }
  return "?";
}

struct PredictionBatch {
  Vector scores;
  std::vector<int> signs;  // +1 / -1 / 0 (zero score, indeterminate)
  PredictionMode mode = PredictionMode::exact;
  bool any_zero = false;
};

inline PredictionBatch make_prediction_batch(Vector scores, PredictionMode mode) {
  PredictionBatch b;
  b.signs.resize(scores.size());
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    b.signs[i] = (scores[i] > 0.0) ? 1 : (scores[i] < 0.0 ? -1 : 0);
    if (b.signs[i] == 0) b.any_zero = true;
  }
  b.scores = std::move(scores);
  b.mode = mode;
  return b;
}

// K^{-1} y via Cholesky; shared by every exact prediction against the same
// training set.
inline Vector exact_weights(const KernelMatrix& k, const Vector& y) {
  if (k.size() != y.size()) throw std::invalid_argument("exact_weights: size mismatch");
  return cholesky_solve(k.entries, y);
}

inline double predict_exact(const KernelMatrix& k, const Vector& k_star, const Vector& y) {
  if (k_star.size() != k.size()) throw std::invalid_argument("predict_exact: size mismatch");
  return k_star.dot(exact_weights(k, y));
}

// Plain inner product; the K11 scaling is dropped because only the sign
// matters for classification.
inline double predict_diagonal(const Vector& k_star, const Vector& y) {
  if (k_star.size() != y.size()) throw std::invalid_argument("predict_diagonal: size mismatch");
  return k_star.dot(y);
}

// K~^{-1} y by conjugate gradient on the sparse rows.
inline Vector sparsified_weights(const KernelMatrix& k_tilde, const Vector& y,
                                 double tol = 1e-12) {
  if (k_tilde.size() != y.size())
    throw std::invalid_argument("sparsified_weights: size mismatch");
  const SparseSym csr = SparseSym::from_dense(k_tilde.entries);
  const GershgorinBounds g = gershgorin_bounds(k_tilde);
  const double kappa_ub = std::isfinite(g.kappa_ub) ? g.kappa_ub
                                                    : static_cast<double>(k_tilde.size());
  const int max_it = std::max<int>(
      64, static_cast<int>(std::ceil(10.0 * std::sqrt(kappa_ub) * std::log(1.0 / tol))));
  const CgResult r = conjugate_gradient(csr, y, tol, max_it);
  if (!r.converged)
    throw std::runtime_error("sparsified_weights: CG did not converge (ill-conditioned kernel)");
  return r.x;
}

inline double predict_sparsified(const KernelMatrix& k_tilde, const Vector& k_star,
                                 const Vector& y) {
  if (k_star.size() != k_tilde.size())
    throw std::invalid_argument("predict_sparsified: size mismatch");
  return k_star.dot(sparsified_weights(k_tilde, y));
}

struct AccuracyEstimate {
  double accuracy = 0.0;
  double two_sigma = 0.0;
};

// Test accuracy with a two-standard-deviation bar from Poisson bootstrapping:
// each round reweights examples by Poisson(1) counts.
inline AccuracyEstimate evaluate_accuracy(const PredictionBatch& batch,
                                          const Eigen::VectorXi& labels, int bootstrap_rounds,
                                          std::uint64_t seed = 0x9a3c71fULL) {
  const auto n = static_cast<Eigen::Index>(batch.signs.size());
  if (n == 0) throw std::invalid_argument("evaluate_accuracy: empty batch");
  if (labels.size() != n) throw std::invalid_argument("evaluate_accuracy: label size mismatch");
  if (bootstrap_rounds < 100)
    throw std::invalid_argument("evaluate_accuracy: need at least 100 bootstrap rounds");

  std::vector<char> correct(n);
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    correct[i] = (batch.signs[i] == labels[i]);
    hits += correct[i];
  }
  AccuracyEstimate out;
  out.accuracy = static_cast<double>(hits) / static_cast<double>(n);

  CounterRng rng(seed, 0xb005);
  double sum = 0.0, sum_sq = 0.0;
  for (int r = 0; r < bootstrap_rounds; ++r) {
    double weight_total = 0.0, weight_hit = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int w = rng.poisson_unit();
      weight_total += w;
      if (correct[i]) weight_hit += w;
    }
    const double acc = (weight_total > 0.0) ? weight_hit / weight_total : out.accuracy;
    sum += acc;
    sum_sq += acc * acc;
  }
  const double mean = sum / bootstrap_rounds;
  const double var = std::max(0.0, sum_sq / bootstrap_rounds - mean * mean);
  out.two_sigma = 2.0 * std::sqrt(var);
  return out;
}

// Width-m realization of the depth-L erf network with the 1/sqrt(m) scaling
// of the infinite-width parameterization. kernel() returns the parameter
// gradient inner product, the finite-width counterpart of ntk_element.
//
// The gradient never gets materialized: with per-layer activations h and
// sensitivities delta, the kernel is
//   (d1 . d1') (x . y) + sum_{l>=2} (1/m)(dl . dl')(h_{l-1} . h'_{l-1})
//                      + (1/m)(h_L . h'_L).
class FiniteWidthNet {
 public:
  FiniteWidthNet(Eigen::Index dim, int depth, Eigen::Index width, std::uint64_t seed)
      : d_(dim), depth_(depth), m_(width) {
    if (depth < 1) throw std::invalid_argument("FiniteWidthNet: depth must be >= 1");
    if (width < 64) throw std::invalid_argument("FiniteWidthNet: width must be >= 64");
    sigma_scale_ = std::sqrt(2.0 / kPi * detail::asin_two_thirds());
    layers_.resize(depth_);
    fill_gaussian(layers_[0], m_ * d_, seed, 1);
    for (int l = 2; l <= depth_; ++l) fill_gaussian(layers_[l - 1], m_ * m_, seed, l);
    fill_gaussian(output_, m_, seed, depth_ + 1);
  }

  double kernel(const Vector& x, const Vector& y) const {
    const PointPass px = pass(x);
    const PointPass py = pass(y);
    double acc = px.delta[0].dot(py.delta[0]) * x.dot(y);
    const double inv_m = 1.0 / static_cast<double>(m_);
    for (int l = 2; l <= depth_; ++l)
      acc += inv_m * px.delta[l - 1].dot(py.delta[l - 1]) * px.h[l - 2].dot(py.h[l - 2]);
    acc += inv_m * px.h[depth_ - 1].dot(py.h[depth_ - 1]);
    return acc;
  }

  double value(const Vector& x) const {
    const PointPass p = pass(x);
    double f = 0.0;
    for (Eigen::Index i = 0; i < m_; ++i) f += output_[i] * p.h[depth_ - 1][i];
    return f / std::sqrt(static_cast<double>(m_));
  }

 private:
  struct PointPass {
    std::vector<Vector> h;      // post-activation per layer
    std::vector<Vector> delta;  // df/da per layer
  };

  double sigma(double u) const { return std::erf(u) / sigma_scale_; }
  double sigma_prime(double u) const {
    return 1.1283791670955126 /* 2/sqrt(pi) */ * std::exp(-u * u) / sigma_scale_;
  }

  void fill_gaussian(std::vector<float>& w, Eigen::Index count, std::uint64_t seed, int layer) {
    w.resize(count);
    const Eigen::Index rows = count / std::max<Eigen::Index>(1, (layer == 1 ? d_ : m_));
    const Eigen::Index cols = count / std::max<Eigen::Index>(1, rows);
    parallel_chunks(static_cast<std::size_t>(rows), 64, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t r = lo; r < hi; ++r) {
        CounterRng rng(seed, (static_cast<std::uint64_t>(layer) << 40) | r);
        for (Eigen::Index c = 0; c < cols; ++c)
          w[static_cast<Eigen::Index>(r) * cols + c] = static_cast<float>(rng.gaussian());
      }
    });
  }

  // y = W v with double accumulation over float rows.
  void apply(const std::vector<float>& w, Eigen::Index rows, Eigen::Index cols,
             const Vector& v, Vector& out) const {
    out.resize(rows);
    parallel_chunks(static_cast<std::size_t>(rows), 128, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t r = lo; r < hi; ++r) {
        const float* row = w.data() + r * static_cast<std::size_t>(cols);
        double acc = 0.0;
        for (Eigen::Index c = 0; c < cols; ++c) acc += static_cast<double>(row[c]) * v[c];
        out[static_cast<Eigen::Index>(r)] = acc;
      }
    });
  }

  // y = W^T v; fixed row blocks with ordered combination keep the sum
  // identical for every thread count.
  void apply_transposed(const std::vector<float>& w, Eigen::Index rows, Eigen::Index cols,
                        const Vector& v, Vector& out) const {
    constexpr std::size_t kBlock = 256;
    const std::size_t blocks = (static_cast<std::size_t>(rows) + kBlock - 1) / kBlock;
    std::vector<Vector> partial(blocks);
    parallel_chunks(static_cast<std::size_t>(rows), kBlock, [&](std::size_t lo, std::size_t hi) {
      Vector p = Vector::Zero(cols);
      for (std::size_t r = lo; r < hi; ++r) {
        const float* row = w.data() + r * static_cast<std::size_t>(cols);
        const double vr = v[static_cast<Eigen::Index>(r)];
        for (Eigen::Index c = 0; c < cols; ++c) p[c] += vr * static_cast<double>(row[c]);
      }
      partial[lo / kBlock] = std::move(p);
    });
    out = Vector::Zero(cols);
    for (const Vector& p : partial) out += p;
  }

  PointPass pass(const Vector& x) const {
    if (x.size() != d_) throw std::invalid_argument("FiniteWidthNet: input dimension mismatch");
    PointPass p;
    p.h.resize(depth_);
    p.delta.resize(depth_);
    std::vector<Vector> pre(depth_);
    const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m_));

    apply(layers_[0], m_, d_, x, pre[0]);
    p.h[0] = pre[0].unaryExpr([&](double u) { return sigma(u); });
    for (int l = 2; l <= depth_; ++l) {
      apply(layers_[l - 1], m_, m_, p.h[l - 2], pre[l - 1]);
      pre[l - 1] *= inv_sqrt_m;
      p.h[l - 1] = pre[l - 1].unaryExpr([&](double u) { return sigma(u); });
    }

    Vector top(m_);
    for (Eigen::Index i = 0; i < m_; ++i)
      top[i] = inv_sqrt_m * static_cast<double>(output_[i]) * sigma_prime(pre[depth_ - 1][i]);
    p.delta[depth_ - 1] = std::move(top);
    for (int l = depth_ - 1; l >= 1; --l) {
      Vector back;
      apply_transposed(layers_[l], m_, m_, p.delta[l], back);
      back *= inv_sqrt_m;
      for (Eigen::Index i = 0; i < m_; ++i) back[i] *= sigma_prime(pre[l - 1][i]);
      p.delta[l - 1] = std::move(back);
    }
    return p;
  }

  Eigen::Index d_;
  int depth_;
  Eigen::Index m_;
  double sigma_scale_;
  std::vector<std::vector<float>> layers_;  // [0]: m x d, [l-1]: m x m
  std::vector<float> output_;
};

// Single-pair convenience wrapper; experiments reuse one FiniteWidthNet per
// seed instead.
inline double finite_width_ntk(const Vector& x_i, const Vector& x_j, int depth,
                               Eigen::Index width, std::uint64_t seed) {
  FiniteWidthNet net(x_i.size(), depth, width, seed);
  return net.kernel(x_i, x_j);
}

}  // namespace qntk
