#pragma once

#include "qntk/kernel.hpp"
#include "qntk/linalg.hpp"
#include "qntk/ntk.hpp"
#include "qntk/sparsity.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace qntk {

// K~_ij = K_ij on the pattern, 0 elsewhere; the diagonal always survives.
inline KernelMatrix sparsify(const KernelMatrix& k, const SparsityPattern& pattern) {
  if (static_cast<std::size_t>(k.size()) != pattern.n)
    throw std::invalid_argument("sparsify: kernel/pattern size mismatch");
  KernelMatrix out;
  out.entries = Matrix::Zero(k.size(), k.size());
  for (std::size_t i = 0; i < pattern.n; ++i)
    for (std::uint32_t j : pattern.rows[i])
      out.entries(static_cast<Eigen::Index>(i), j) = k.entries(static_cast<Eigen::Index>(i), j);
  out.entries.diagonal() = k.entries.diagonal();
  out.source = k.source;
  out.diag_value = k.diag_value;
  return out;
}

// Diagonal approximation: K11 * I for kernels with a shared diagonal, the
// per-entry diagonal otherwise (ingested convolutional kernels).
inline KernelMatrix diagonalize(const KernelMatrix& k) {
  KernelMatrix out;
  if (k.diag_value) {
    out.entries = Matrix::Identity(k.size(), k.size()) * (*k.diag_value);
    out.diag_value = k.diag_value;
  } else {
    out.entries = k.entries.diagonal().asDiagonal();
    out.diag_value = detail::shared_diagonal(out.entries);
  }
  out.source = k.source;
  return out;
}

// Off-diagonal suppression factor beta * (ln n)^exponent; exponent 0.9 tracks
// the empirically sufficient (log n)^{9/10} growth.
struct PreconditionSpec {
  double beta = 1.0;
  double exponent = 0.9;
  Eigen::Index reference_n = 16;

  double factor(Eigen::Index n) const {
    if (n < 2) throw std::invalid_argument("PreconditionSpec: n must be >= 2");
    return beta * std::pow(std::log(static_cast<double>(n)), exponent);
  }

  void validate() const {
    if (beta <= 0.0) throw std::invalid_argument("PreconditionSpec: beta must be positive");
    if (factor(reference_n) < 1.0)
      throw std::invalid_argument("PreconditionSpec: suppression factor below 1 at reference n");
  }
};

inline KernelMatrix precondition(const KernelMatrix& k_sparse, const PreconditionSpec& spec,
                                 Eigen::Index n) {
  spec.validate();
  const double f = spec.factor(n);
  if (f < 1.0)
    throw std::invalid_argument("precondition: factor below 1 would amplify off-diagonals");
  KernelMatrix out = k_sparse;
  for (Eigen::Index i = 0; i < out.size(); ++i)
    for (Eigen::Index j = 0; j < out.size(); ++j)
      if (i != j) out.entries(i, j) /= f;
  return out;
}

// Smallest beta whose suppression brings the reference kernel's condition
// number to kappa_target. Errors when even full suppression (the bare
// diagonal) stays above the target.
inline PreconditionSpec calibrate_precondition(const KernelMatrix& k_reference,
                                               double exponent, double kappa_target,
                                               Eigen::Index reference_n) {
  if (kappa_target < 1.0)
    throw std::invalid_argument("calibrate_precondition: target below 1");
  if (k_reference.size() != reference_n)
    throw std::invalid_argument("calibrate_precondition: reference kernel size mismatch");
  const double log_pow = std::pow(std::log(static_cast<double>(reference_n)), exponent);

  const double kappa_diag = condition_number(diagonalize(k_reference));
  if (kappa_diag > kappa_target)
    throw std::runtime_error(
        "calibrate_precondition: diagonal spread alone exceeds the target; off-diagonal "
        "suppression cannot reach it");

  auto kappa_at = [&](double factor) {
    Matrix m = k_reference.entries / factor;
    m.diagonal() = k_reference.entries.diagonal();
    return condition_number_dense(m);
  };

  PreconditionSpec spec;
  spec.exponent = exponent;
  spec.reference_n = reference_n;
  if (kappa_at(1.0) <= kappa_target) {
    spec.beta = 1.0 / log_pow;
    return spec;
  }
  double lo = 1.0, hi = 2.0;
  while (kappa_at(hi) > kappa_target) {
    hi *= 2.0;
    if (hi > 1e12)
      throw std::runtime_error("calibrate_precondition: no finite factor reaches the target");
  }
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    (kappa_at(mid) <= kappa_target ? hi : lo) = mid;
  }
  spec.beta = hi / log_pow;
  return spec;
}

// Drops pattern entries whose kernel magnitude falls strictly below the q-th
// percentile of the subset's off-diagonal magnitudes (ties kept, diagonal
// never removed). The subset stands in for the training distribution, so the
// threshold is an estimate, not a per-pattern statistic.
inline SparsityPattern percentile_bias(const SparsityPattern& pattern,
                                       const KernelMatrix& kernel,
                                       const KernelMatrix& subset, double q) {
  if (q < 0.0 || q > 100.0)
    throw std::invalid_argument("percentile_bias: percentile outside [0, 100]");
  if (static_cast<std::size_t>(kernel.size()) != pattern.n)
    throw std::invalid_argument("percentile_bias: kernel/pattern size mismatch");
  if (subset.size() < 2)
    throw std::invalid_argument("percentile_bias: subset has no off-diagonal entries");

  std::vector<double> magnitudes;
  magnitudes.reserve(static_cast<std::size_t>(subset.size()) * (subset.size() - 1) / 2);
  for (Eigen::Index i = 0; i < subset.size(); ++i)
    for (Eigen::Index j = i + 1; j < subset.size(); ++j)
      magnitudes.push_back(std::abs(subset.entries(i, j)));
  std::sort(magnitudes.begin(), magnitudes.end());
  const auto idx = static_cast<std::size_t>(
      std::llround(q / 100.0 * static_cast<double>(magnitudes.size() - 1)));
  const double threshold = magnitudes[idx];

  SparsityPattern out;
  out.n = pattern.n;
  out.seed = pattern.seed;
  out.degree_target = pattern.degree_target;
  out.rows.resize(pattern.n);
  for (std::size_t i = 0; i < pattern.n; ++i)
    for (std::uint32_t j : pattern.rows[i]) {
      if (j == i ||
          std::abs(kernel.entries(static_cast<Eigen::Index>(i), j)) >= threshold)
        out.rows[i].push_back(j);
    }
  return out;
}

// Relative spectral-norm error of the inverse: ||M^-1 - K^-1|| / ||K^-1||.
// Dense eigendecomposition route; this is the oracle side of the
// approximation story, so it never goes through the CG solver.
inline double inverse_error(const KernelMatrix& k, const KernelMatrix& m) {
  if (k.size() != m.size()) throw std::invalid_argument("inverse_error: size mismatch");
  if (k.size() > 2048)
    throw std::invalid_argument("inverse_error: dense route capped at n = 2048");

  auto inverse_sym = [](const Matrix& a, const char* who) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(a);
    if (es.info() != Eigen::Success)
      throw std::runtime_error(std::string(who) + ": eigensolver failed");
    const Vector& ev = es.eigenvalues();
    const double scale = std::max(std::abs(ev[0]), std::abs(ev[ev.size() - 1]));
    Vector inv(ev.size());
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
      if (std::abs(ev[i]) <= 1e-13 * scale)
        throw std::runtime_error(std::string(who) + ": singular input");
      inv[i] = 1.0 / ev[i];
    }
    return Matrix(es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose());
  };

  const Matrix k_inv = inverse_sym(k.entries, "inverse_error(K)");
  const Matrix m_inv = inverse_sym(m.entries, "inverse_error(M)");
  return spectral_norm_sym(m_inv - k_inv) / spectral_norm_sym(k_inv);
}

}  // namespace qntk
