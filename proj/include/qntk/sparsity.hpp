#pragma once

#include "qntk/parallel.hpp"
#include "qntk/rng.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace qntk {

// Seeded symmetric adjacency with the diagonal always present and row degree
// capped at 2 * degree_target + 1. Regenerating with the same
// (n, seed, c, labels) yields an identical pattern for any thread count.
struct SparsityPattern {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  int degree_target = 0;  // s = ceil(c ln n)
  std::vector<std::vector<std::uint32_t>> rows;  // sorted, diagonal included

  std::size_t max_degree() const {
    std::size_t m = 0;
    for (const auto& r : rows) m = std::max(m, r.size());
    return m;
  }

  bool contains(std::uint32_t i, std::uint32_t j) const {
    const auto& r = rows[i];
    return std::binary_search(r.begin(), r.end(), j);
  }

  bool operator==(const SparsityPattern& other) const {
    return n == other.n && rows == other.rows;
  }
};

// Draws s = ceil(c ln n) candidate column indices per row from a counter
// generator keyed by (seed, row), keeps upper-triangle picks, symmetrizes by
// union and inserts the diagonal. Candidate edges are applied in sorted order
// with a hard per-row cap of 2s + 1 entries, which both enforces the degree
// invariant and keeps the result schedule-independent. With labels given,
// cross-class edges are dropped before the cap pass.
inline SparsityPattern generate_pattern(std::size_t n, double c, std::uint64_t seed,
                                        const Eigen::VectorXi* labels = nullptr) {
  if (n < 1) throw std::invalid_argument("generate_pattern: n must be >= 1");
  if (c <= 0.0) throw std::invalid_argument("generate_pattern: c must be positive");
  if (labels && static_cast<std::size_t>(labels->size()) != n)
    throw std::invalid_argument("generate_pattern: label length mismatch");

  SparsityPattern p;
  p.n = n;
  p.seed = seed;
  p.degree_target = (n > 1) ? static_cast<int>(std::ceil(c * std::log(static_cast<double>(n))))
                            : 0;
  const std::size_t cap = 2 * static_cast<std::size_t>(p.degree_target) + 1;

  std::vector<std::vector<std::uint64_t>> drawn(n);
  parallel_for(n, [&](std::size_t j) {
    CounterRng rng(seed, j);
    auto& edges = drawn[j];
    for (int k = 0; k < p.degree_target; ++k) {
      const std::uint64_t col = rng.uniform_index(n);
      if (col <= j) continue;  // keep upper triangle; the diagonal is implicit
      if (labels && (*labels)[static_cast<Eigen::Index>(j)] !=
                        (*labels)[static_cast<Eigen::Index>(col)])
        continue;
      edges.push_back((static_cast<std::uint64_t>(j) << 32) | col);
    }
  });

  std::vector<std::uint64_t> edges;
  for (auto& e : drawn) edges.insert(edges.end(), e.begin(), e.end());
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  std::vector<std::size_t> degree(n, 1);  // diagonal counts toward the cap
  p.rows.resize(n);
  for (std::size_t j = 0; j < n; ++j) p.rows[j].push_back(static_cast<std::uint32_t>(j));
  for (std::uint64_t e : edges) {
    const auto a = static_cast<std::uint32_t>(e >> 32);
    const auto b = static_cast<std::uint32_t>(e & 0xffffffffULL);
    if (degree[a] >= cap || degree[b] >= cap) continue;
    p.rows[a].push_back(b);
    p.rows[b].push_back(a);
    ++degree[a];
    ++degree[b];
  }
  for (auto& r : p.rows) std::sort(r.begin(), r.end());
  return p;
}

inline SparsityPattern identity_pattern(std::size_t n) {
  SparsityPattern p;
  p.n = n;
  p.degree_target = 0;
  p.rows.resize(n);
  for (std::size_t j = 0; j < n; ++j) p.rows[j] = {static_cast<std::uint32_t>(j)};
  return p;
}

// Row index of the l-th nonzero entry of column j (columns equal rows by
// symmetry). Ordinal access into the sorted row.
inline std::uint32_t nu_lookup(const SparsityPattern& pattern, std::size_t j, std::size_t l) {
  if (j >= pattern.n) throw std::out_of_range("nu_lookup: column out of range");
  const auto& row = pattern.rows[j];
  if (l >= row.size())
    throw std::out_of_range("nu_lookup: ordinal " + std::to_string(l) + " out of range for column " +
                            std::to_string(j) + " (degree " + std::to_string(row.size()) + ")");
  return row[l];
}

}  // namespace qntk
