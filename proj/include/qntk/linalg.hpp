#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace qntk {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Compressed sparse rows of a symmetric matrix; only the stored entries are
// touched by apply(), so a matvec costs O(nnz).
struct SparseSym {
  Eigen::Index n = 0;
  std::vector<std::size_t> row_start;   // n + 1
  std::vector<std::uint32_t> col;
  std::vector<double> val;

  static SparseSym from_dense(const Matrix& a, double drop_below_abs = 0.0) {
    SparseSym s;
    s.n = a.rows();
    s.row_start.assign(static_cast<std::size_t>(s.n) + 1, 0);
    for (Eigen::Index i = 0; i < s.n; ++i) {
      for (Eigen::Index j = 0; j < s.n; ++j)
        if (i == j || std::abs(a(i, j)) > drop_below_abs) {
          s.col.push_back(static_cast<std::uint32_t>(j));
          s.val.push_back(a(i, j));
        }
      s.row_start[static_cast<std::size_t>(i) + 1] = s.col.size();
    }
    return s;
  }

  Vector apply(const Vector& x) const {
    Vector y = Vector::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t k = row_start[i]; k < row_start[i + 1]; ++k)
        acc += val[k] * x[col[k]];
      y[i] = acc;
    }
    return y;
  }

  Eigen::Index max_row_nnz() const {
    std::size_t m = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      m = std::max(m, row_start[i + 1] - row_start[i]);
    return static_cast<Eigen::Index>(m);
  }
};

struct CgResult {
  Vector x;
  int iterations = 0;
  double residual = 0.0;   // ||Ax - b|| / ||b||
  bool converged = false;
};

// Plain conjugate gradient for SPD systems; relative-residual stopping rule.
inline CgResult conjugate_gradient(const SparseSym& a, const Vector& b,
                                   double rel_tol, int max_iterations) {
  CgResult out;
  const double norm_b = b.norm();
  out.x = Vector::Zero(a.n);
  if (norm_b == 0.0) {
    out.converged = true;
    return out;
  }
  Vector r = b;
  Vector p = r;
  double rho = r.squaredNorm();
  const double tol = rel_tol * norm_b;
  int it = 0;
  while (std::sqrt(rho) > tol && it < max_iterations) {
    const Vector q = a.apply(p);
    const double denom = p.dot(q);
    if (denom <= 0.0)
      throw std::runtime_error("conjugate_gradient: matrix not positive definite");
    const double alpha = rho / denom;
    out.x += alpha * p;
    r -= alpha * q;
    const double rho_next = r.squaredNorm();
    p = r + (rho_next / rho) * p;
    rho = rho_next;
    ++it;
  }
  out.iterations = it;
  out.residual = std::sqrt(rho) / norm_b;
  out.converged = std::sqrt(rho) <= tol;
  return out;
}

// Dense SPD solve via Cholesky; the oracle route paired with the CG solver.
inline Vector cholesky_solve(const Matrix& a, const Vector& b) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("cholesky_solve: matrix not positive definite");
  return llt.solve(b);
}

inline Vector symmetric_eigenvalues(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("symmetric_eigenvalues: eigensolver failed");
  return es.eigenvalues();  // ascending
}

inline double spectral_norm_sym(const Matrix& a) {
  const Vector ev = symmetric_eigenvalues(a);
  return std::max(std::abs(ev[0]), std::abs(ev[ev.size() - 1]));
}

}  // namespace qntk
