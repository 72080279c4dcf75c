#pragma once

#include "qntk/linalg.hpp"

#include <stdexcept>
#include <vector>

namespace qntk {

// Quadrature rule for expectations over the standard normal:
//   E[f(X)] = sum_i weight[i] * f(node[i]),  X ~ N(0,1).
struct GaussianQuadrature {
  std::vector<double> nodes;
  std::vector<double> weights;

  template <typename Fn>
  double expectation(Fn&& f) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) acc += weights[i] * f(nodes[i]);
    return acc;
  }
};

namespace detail {

// Golub–Welsch: nodes are the eigenvalues of the Jacobi matrix, weights the
// squared first eigenvector components times the weight-function mass.
inline GaussianQuadrature golub_welsch(const Matrix& jacobi, double total_mass) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(jacobi);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("golub_welsch: eigensolver failed");
  GaussianQuadrature q;
  const auto n = jacobi.rows();
  q.nodes.resize(n);
  q.weights.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    q.nodes[i] = es.eigenvalues()[i];
    const double v = es.eigenvectors()(0, i);
    q.weights[i] = total_mass * v * v;
  }
  return q;
}

}  // namespace detail

// Probabilists' Gauss-Hermite rule: E[f(X)] directly, X ~ N(0,1). Spectrally
// accurate for smooth f.
inline GaussianQuadrature gauss_hermite(int point_count) {
  if (point_count < 1) throw std::invalid_argument("gauss_hermite: point count must be >= 1");
  Matrix jacobi = Matrix::Zero(point_count, point_count);
  for (int k = 1; k < point_count; ++k) {
    const double b = std::sqrt(static_cast<double>(k));
    jacobi(k, k - 1) = b;
    jacobi(k - 1, k) = b;
  }
  return detail::golub_welsch(jacobi, 1.0);
}

// Gauss-Legendre on [-1, 1].
inline GaussianQuadrature gauss_legendre(int point_count) {
  if (point_count < 1) throw std::invalid_argument("gauss_legendre: point count must be >= 1");
  Matrix jacobi = Matrix::Zero(point_count, point_count);
  for (int k = 1; k < point_count; ++k) {
    const double b = static_cast<double>(k) /
                     std::sqrt(4.0 * static_cast<double>(k) * static_cast<double>(k) - 1.0);
    jacobi(k, k - 1) = b;
    jacobi(k - 1, k) = b;
  }
  return detail::golub_welsch(jacobi, 2.0);
}

// Composite Gauss-Legendre rule against the N(0,1) density over [-12, 12]
// with a panel boundary pinned at zero. Activations with a kink at the
// origin (ReLU and friends) stay smooth inside every panel, so the rule
// keeps spectral accuracy where a plain Gauss-Hermite rule stalls near 1e-3.
inline GaussianQuadrature gaussian_panel_rule(int panels = 48, int points_per_panel = 16,
                                              double half_range = 12.0) {
  if (panels < 2 || panels % 2 != 0)
    throw std::invalid_argument("gaussian_panel_rule: panel count must be even and >= 2");
  const GaussianQuadrature gl = gauss_legendre(points_per_panel);
  GaussianQuadrature q;
  q.nodes.reserve(static_cast<std::size_t>(panels) * points_per_panel);
  q.weights.reserve(q.nodes.capacity());
  const double width = 2.0 * half_range / panels;
  const double inv_sqrt_2pi = 0.3989422804014327;
  for (int p = 0; p < panels; ++p) {
    const double a = -half_range + p * width;
    for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
      const double x = a + 0.5 * width * (gl.nodes[i] + 1.0);
      q.nodes.push_back(x);
      q.weights.push_back(0.5 * width * gl.weights[i] * inv_sqrt_2pi * std::exp(-0.5 * x * x));
    }
  }
  return q;
}

}  // namespace qntk
