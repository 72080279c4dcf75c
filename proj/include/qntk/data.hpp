#pragma once

#include "qntk/linalg.hpp"
#include "qntk/parallel.hpp"
#include "qntk/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace qntk {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Unit-norm example matrix with +/-1 labels.
struct Dataset {
  RowMatrix features;  // n x d, every row on the unit sphere
  Eigen::VectorXi labels;
  std::string name;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }

  void validate() const {
    if (features.rows() != labels.size())
      throw std::invalid_argument("Dataset: feature/label count mismatch");
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
      if (std::abs(features.row(i).norm() - 1.0) > 1e-9)
        throw std::invalid_argument("Dataset: row " + std::to_string(i) + " not unit norm");
      if (labels[i] != 1 && labels[i] != -1)
        throw std::invalid_argument("Dataset: labels must be +1 or -1");
    }
  }

  // First n examples; experiments grow the training set along a doubling grid.
  Dataset head(Eigen::Index n) const {
    if (n < 1 || n > size()) throw std::invalid_argument("Dataset::head: bad size");
    Dataset d;
    d.features = features.topRows(n);
    d.labels = labels.head(n);
    d.name = name;
    return d;
  }
};

inline RowMatrix project_unit_sphere(const RowMatrix& features) {
  RowMatrix out = features;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double norm = out.row(i).norm();
    if (norm < 1e-300)
      throw std::invalid_argument("project_unit_sphere: zero row " + std::to_string(i));
    out.row(i) /= norm;
  }
  return out;
}

// Uniform points on S^{d-1} via normalized Gaussian draws; labels alternate.
inline Dataset sample_sphere(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  if (d < 3) throw std::invalid_argument("sample_sphere: dimension must be >= 3");
  if (n < 1) throw std::invalid_argument("sample_sphere: need at least one point");
  Dataset data;
  data.features.resize(n, d);
  data.labels.resize(n);
  data.name = "sphere_d" + std::to_string(d);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    CounterRng rng(seed, i);
    for (Eigen::Index j = 0; j < d; ++j) data.features(i, j) = rng.gaussian();
    data.features.row(i) /= data.features.row(i).norm();
    data.labels[static_cast<Eigen::Index>(i)] = (i % 2 == 0) ? 1 : -1;
  });
  return data;
}

namespace detail {

inline std::uint32_t read_u32_be(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error("idx: truncated header in " + path);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace detail

// Reads the big-endian IDX pair (images magic 2051, labels magic 2049),
// keeps the first `limit` examples whose label is digit_a or digit_b,
// maps digit_a -> +1 and digit_b -> -1, scales pixels to [0,1] and projects
// each flattened image onto the unit sphere.
inline Dataset load_mnist_idx(const std::string& image_path, const std::string& label_path,
                              int digit_a, int digit_b, Eigen::Index limit) {
  if (limit < 1) throw std::invalid_argument("load_mnist_idx: limit must be >= 1");
  if (digit_a == digit_b || digit_a < 0 || digit_a > 9 || digit_b < 0 || digit_b > 9)
    throw std::invalid_argument("load_mnist_idx: digit pair must be two distinct digits");

  std::ifstream images(image_path, std::ios::binary);
  if (!images) throw std::runtime_error("load_mnist_idx: cannot open " + image_path);
  std::ifstream labels(label_path, std::ios::binary);
  if (!labels) throw std::runtime_error("load_mnist_idx: cannot open " + label_path);

  if (detail::read_u32_be(images, image_path) != 2051)
    throw std::runtime_error("load_mnist_idx: bad image magic in " + image_path);
  const std::uint32_t image_count = detail::read_u32_be(images, image_path);
  const std::uint32_t rows = detail::read_u32_be(images, image_path);
  const std::uint32_t cols = detail::read_u32_be(images, image_path);
  if (rows != 28 || cols != 28)
    throw std::runtime_error("load_mnist_idx: expected 28x28 pixels in " + image_path);

  if (detail::read_u32_be(labels, label_path) != 2049)
    throw std::runtime_error("load_mnist_idx: bad label magic in " + label_path);
  const std::uint32_t label_count = detail::read_u32_be(labels, label_path);
  if (label_count != image_count)
    throw std::runtime_error("load_mnist_idx: image/label count mismatch");

  constexpr Eigen::Index kPixels = 28 * 28;
  Dataset data;
  data.features.resize(limit, kPixels);
  data.labels.resize(limit);
  data.name = "mnist_" + std::to_string(digit_a) + "v" + std::to_string(digit_b);

  std::vector<unsigned char> pixel(kPixels);
  Eigen::Index kept = 0;
  for (std::uint32_t i = 0; i < image_count && kept < limit; ++i) {
    if (!images.read(reinterpret_cast<char*>(pixel.data()), kPixels))
      throw std::runtime_error("load_mnist_idx: truncated image data in " + image_path);
    char raw_label;
    if (!labels.read(&raw_label, 1))
      throw std::runtime_error("load_mnist_idx: truncated label data in " + label_path);
    const int digit = static_cast<unsigned char>(raw_label);
    if (digit != digit_a && digit != digit_b) continue;
    for (Eigen::Index j = 0; j < kPixels; ++j)
      data.features(kept, j) = static_cast<double>(pixel[j]) / 255.0;
    data.labels[kept] = (digit == digit_a) ? 1 : -1;
    ++kept;
  }
  if (kept < limit)
    throw std::runtime_error("load_mnist_idx: only " + std::to_string(kept) + " of " +
                             std::to_string(limit) + " requested examples have labels " +
                             std::to_string(digit_a) + "/" + std::to_string(digit_b));
  data.features = project_unit_sphere(data.features);
  return data;
}

struct Separability {
  double delta = 0.0;
  Eigen::Index i = 0;
  Eigen::Index j = 0;
};

// delta = min_{i != j} (1 - |x_i . x_j|) with the attaining pair. Parallel
// over fixed row chunks; ties go to the lexicographically smallest pair so
// the result is independent of thread count.
inline Separability separability(const Dataset& data) {
  const Eigen::Index n = data.size();
  if (n < 2) throw std::invalid_argument("separability: need at least two points");
  constexpr std::size_t kChunk = 16;
  const std::size_t chunks = (static_cast<std::size_t>(n) + kChunk - 1) / kChunk;
  std::vector<Separability> best(chunks,
                                 {std::numeric_limits<double>::infinity(), 0, 0});
  parallel_chunks(static_cast<std::size_t>(n), kChunk, [&](std::size_t lo, std::size_t hi) {
    Separability b{std::numeric_limits<double>::infinity(), 0, 0};
    for (Eigen::Index i = static_cast<Eigen::Index>(lo); i < static_cast<Eigen::Index>(hi); ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double d = 1.0 - std::abs(data.features.row(i).dot(data.features.row(j)));
        if (d < b.delta || (d == b.delta && std::tie(i, j) < std::tie(b.i, b.j)))
          b = {d, i, j};
      }
    best[lo / kChunk] = b;
  });
  Separability result = best[0];
  for (std::size_t c = 1; c < chunks; ++c) {
    const Separability& b = best[c];
    if (b.delta < result.delta ||
        (b.delta == result.delta && std::tie(b.i, b.j) < std::tie(result.i, result.j)))
      result = b;
  }
  if (result.delta <= 1e-12)
    throw std::runtime_error(
        "separability: duplicate or antipodal points (|x_i . x_j| = 1 violates the "
        "separated-data assumption), pair (" +
        std::to_string(result.i) + ", " + std::to_string(result.j) + ")");
  return result;
}

struct SeparabilityFit {
  double a1 = 0.0;        // delta(n) ~ a1 * n^{-a2}
  double a2 = 0.0;
  double r_squared = 0.0;
};

// Least squares on (ln n, ln delta).
inline SeparabilityFit fit_power_law(const std::vector<double>& ns,
                                     const std::vector<double>& deltas) {
  if (ns.size() != deltas.size())
    throw std::invalid_argument("fit_power_law: length mismatch");
  if (ns.size() < 3) throw std::invalid_argument("fit_power_law: need at least 3 points");
  const std::size_t m = ns.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::vector<double> xs(m), ys(m);
  for (std::size_t k = 0; k < m; ++k) {
    if (ns[k] <= 0.0 || deltas[k] <= 0.0)
      throw std::invalid_argument("fit_power_law: inputs must be positive");
    xs[k] = std::log(ns[k]);
    ys[k] = std::log(deltas[k]);
    sx += xs[k]; sy += ys[k]; sxx += xs[k] * xs[k]; sxy += xs[k] * ys[k];
  }
  const double denom = m * sxx - sx * sx;
  if (std::abs(denom) < 1e-12) throw std::invalid_argument("fit_power_law: degenerate abscissae");
  const double slope = (m * sxy - sx * sy) / denom;
  const double intercept = (sy - slope * sx) / m;
  double ss_res = 0, ss_tot = 0;
  const double ybar = sy / m;
  for (std::size_t k = 0; k < m; ++k) {
    const double fit = intercept + slope * xs[k];
    ss_res += (ys[k] - fit) * (ys[k] - fit);
    ss_tot += (ys[k] - ybar) * (ys[k] - ybar);
  }
  SeparabilityFit out;
  out.a2 = -slope;
  out.a1 = std::exp(intercept);
  out.r_squared = (ss_tot > 0.0) ? 1.0 - ss_res / ss_tot : 1.0;
  if (out.a2 <= 0.0)
    throw std::runtime_error("fit_power_law: separability does not decrease with n");
  return out;
}

// Order-statistics exponent for uniform data on S^{d-1}: delta(n) ~ n^{-4/(d-1)}.
inline double predicted_exponent(int d) {
  if (d < 3) throw std::invalid_argument("predicted_exponent: dimension must be >= 3");
  return 4.0 / (static_cast<double>(d) - 1.0);
}

}  // namespace qntk
