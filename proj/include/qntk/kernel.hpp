#pragma once

#include "qntk/linalg.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>

namespace qntk {

enum class KernelSource { computed, ingested };

// Symmetric n x n kernel. diag_value is set when every diagonal entry agrees
// with the first within 1e-9 relative (always the case for kernels computed
// from unit-norm data; ingested convolutional kernels may have distinct
// diagonals).
struct KernelMatrix {
  Matrix entries;
  KernelSource source = KernelSource::computed;
  std::optional<double> diag_value;

  Eigen::Index size() const { return entries.rows(); }
};

namespace detail {

inline std::optional<double> shared_diagonal(const Matrix& e) {
  if (e.rows() == 0) return std::nullopt;
  const double d0 = e(0, 0);
  const double ref = std::max(std::abs(d0), 1e-300);
  for (Eigen::Index i = 1; i < e.rows(); ++i)
    if (std::abs(e(i, i) - d0) > 1e-9 * ref) return std::nullopt;
  return d0;
}

}  // namespace detail

inline KernelMatrix make_kernel_matrix(Matrix entries, KernelSource source) {
  if (entries.rows() != entries.cols())
    throw std::invalid_argument("KernelMatrix: entries must be square");
  const double scale = std::max(entries.cwiseAbs().maxCoeff(), 1e-300);
  for (Eigen::Index i = 0; i < entries.rows(); ++i)
    for (Eigen::Index j = i + 1; j < entries.cols(); ++j)
      if (std::abs(entries(i, j) - entries(j, i)) > 1e-12 * scale)
        throw std::invalid_argument("KernelMatrix: entries not symmetric");
  KernelMatrix k;
  k.entries = std::move(entries);
  k.source = source;
  k.diag_value = detail::shared_diagonal(k.entries);
  return k;
}

}  // namespace qntk
