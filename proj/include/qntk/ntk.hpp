#pragma once

#include "qntk/activation.hpp"
#include "qntk/data.hpp"
#include "qntk/kernel.hpp"
#include "qntk/parallel.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace qntk {

struct NtkParams {
  int depth = 1;  // hidden layers
  DualActivation dual = DualActivation::erf();
};

// Kernel element of the infinite-width network at inner product rho:
//
//   K(rho) = sum_{h=1}^{L+1} c_{h-1} * prod_{h'=h}^{L} dual'(c_{h'})
//
// where c_0 = rho and c_k is the k-fold composition of the dual activation.
// Evaluated by the equivalent forward recursion k <- k * dual'(c) + c, one
// composition per hidden layer, so the cost is O(L) with O(1) state.
inline double ntk_element(double rho, int depth, const DualActivation& dual) {
  if (depth < 0) throw std::invalid_argument("ntk_element: negative depth");
  rho = detail::check_correlation(rho, "ntk_element");
  double composed = rho;
  double k = rho;
  for (int level = 1; level <= depth; ++level) {
    composed = dual.eval(composed);
    k = k * dual.deriv(composed) + composed;
  }
  return k;
}

// Shared diagonal of a depth-L kernel: (g^{L+1} - 1) / (g - 1), g = dual'(1).
inline double ntk_diagonal_value(int depth, const DualActivation& dual) {
  return ntk_element(1.0, depth, dual);
}

inline KernelMatrix assemble_kernel(const Dataset& data, const NtkParams& params) {
  if (params.depth < 1) throw std::invalid_argument("assemble_kernel: depth must be >= 1");
  const Eigen::Index n = data.size();
  for (Eigen::Index i = 0; i < n; ++i)
    if (std::abs(data.features.row(i).norm() - 1.0) > 1e-9)
      throw std::invalid_argument("assemble_kernel: row " + std::to_string(i) +
                                  " not unit norm");
  Matrix entries(n, n);
  const double diag = ntk_diagonal_value(params.depth, params.dual);
  parallel_chunks(static_cast<std::size_t>(n), 8, [&](std::size_t lo, std::size_t hi) {
    for (Eigen::Index i = static_cast<Eigen::Index>(lo); i < static_cast<Eigen::Index>(hi); ++i) {
      entries(i, i) = diag;
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double rho =
            std::clamp(data.features.row(i).dot(data.features.row(j)), -1.0, 1.0);
        entries(i, j) = ntk_element(rho, params.depth, params.dual);
      }
    }
  });
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) entries(j, i) = entries(i, j);
  KernelMatrix k;
  k.entries = std::move(entries);
  k.source = KernelSource::computed;
  k.diag_value = diag;
  return k;
}

// Test-point kernel vector: k*_i = K(x_star . x_i).
inline Vector test_kernel(const Dataset& data, const Vector& x_star, const NtkParams& params) {
  if (x_star.size() != data.dim())
    throw std::invalid_argument("test_kernel: dimension mismatch");
  const Eigen::Index n = data.size();
  Vector k(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double rho = std::clamp(data.features.row(i).dot(x_star), -1.0, 1.0);
    k[i] = ntk_element(rho, params.depth, params.dual);
  }
  return k;
}

// Depth at which gradient-descent convergence (and the conditioning bounds)
// kick in: 8 ln(n / delta) / mu.
inline double l_conv(Eigen::Index n, double delta, double mu) {
  if (n < 2) throw std::invalid_argument("l_conv: n must be >= 2");
  if (delta <= 0.0 || delta >= 1.0) throw std::invalid_argument("l_conv: delta outside (0, 1)");
  if (mu <= 0.0 || mu > 1.0) throw std::invalid_argument("l_conv: mu outside (0, 1]");
  return 8.0 * std::log(static_cast<double>(n) / delta) / mu;
}

inline double l_zero(double delta, double mu) {
  if (delta <= 0.0 || delta >= 1.0) throw std::invalid_argument("l_zero: delta outside (0, 1)");
  if (mu <= 0.0 || mu > 1.0) throw std::invalid_argument("l_zero: mu outside (0, 1]");
  const double raw = std::log(1.0 / (2.0 * delta)) / std::log(1.0 + mu / 2.0);
  return std::max(std::ceil(raw), 0.0);
}

// B(L, delta, mu) = (1/2) (1 - mu/2)^{L - L0}; valid only for L >= L0.
inline double b_bound(double depth, double delta, double mu) {
  const double l0 = l_zero(delta, mu);
  if (depth < l0)
    throw std::domain_error("b_bound: depth below L0, bound not valid");
  return 0.5 * std::pow(1.0 - mu / 2.0, depth - l0);
}

// Off-diagonal bound |K_ij / K_11| valid for L >= L_conv.
inline double element_bound(double delta_ij, double delta, Eigen::Index n) {
  if (delta_ij <= 0.0 || delta_ij > 1.0)
    throw std::invalid_argument("element_bound: delta_ij outside (0, 1]");
  if (delta <= 0.0 || delta > delta_ij)
    throw std::invalid_argument("element_bound: need 0 < delta <= delta_ij");
  const double base = delta / static_cast<double>(n);
  if (delta_ij < 0.5) {
    const double v = delta / (delta_ij * static_cast<double>(n));
    return v * v;
  }
  return base * base;
}

struct GershgorinBounds {
  double lambda_min_lb = 0.0;
  double lambda_max_ub = 0.0;
  double kappa_ub = 0.0;
};

inline GershgorinBounds gershgorin_bounds(const KernelMatrix& k) {
  const Eigen::Index n = k.size();
  GershgorinBounds out;
  out.lambda_min_lb = std::numeric_limits<double>::infinity();
  out.lambda_max_ub = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    double radius = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) radius += std::abs(k.entries(i, j));
    out.lambda_min_lb = std::min(out.lambda_min_lb, k.entries(i, i) - radius);
    out.lambda_max_ub = std::max(out.lambda_max_ub, k.entries(i, i) + radius);
  }
  out.kappa_ub = (out.lambda_min_lb > 0.0)
                     ? out.lambda_max_ub / out.lambda_min_lb
                     : std::numeric_limits<double>::infinity();
  return out;
}

// Exact condition number by symmetric eigen-decomposition; the test oracle
// for the Gershgorin route. Entries are rescaled by the largest diagonal
// first, which leaves the ratio unchanged but keeps deep kernels (diagonals
// of order g^L) well inside double range for the solver.
inline double condition_number_dense(const Matrix& a) {
  if (a.rows() > 4096)
    throw std::invalid_argument("condition_number: dense eigen-solve capped at n = 4096");
  const double scale = std::max(a.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  const Vector ev = symmetric_eigenvalues(a / scale);
  const double lo = ev[0];
  const double hi = ev[ev.size() - 1];
  if (lo <= 0.0)
    throw std::runtime_error("condition_number: smallest eigenvalue not positive");
  return hi / lo;
}

inline double condition_number(const KernelMatrix& k) {
  return condition_number_dense(k.entries);
}

}  // namespace qntk
