#pragma once

#include "qntk/data.hpp"
#include "qntk/kernel.hpp"
#include "qntk/qsim.hpp"
#include "qntk/regression.hpp"
#include "qntk/sparsity.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace qntk {

namespace detail {

template <typename T>
T byteswap_integral(T v) {
  T out;
  auto* src = reinterpret_cast<const unsigned char*>(&v);
  auto* dst = reinterpret_cast<unsigned char*>(&out);
  for (std::size_t i = 0; i < sizeof(T); ++i) dst[i] = src[sizeof(T) - 1 - i];
  return out;
}

template <typename T>
void write_le(std::ostream& out, T v) {
  if constexpr (std::endian::native == std::endian::big) v = byteswap_integral(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::string& path) {
  T v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw std::runtime_error("truncated file: " + path);
  if constexpr (std::endian::native == std::endian::big) v = byteswap_integral(v);
  return v;
}

inline void write_f64_le(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  write_le(out, bits);
}

inline double read_f64_le(std::istream& in, const std::string& path) {
  const std::uint64_t bits = read_le<std::uint64_t>(in, path);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

}  // namespace detail

// Stable short formatting for CSV cells; the same bits always print the same
// bytes, which is what the determinism contract needs.
inline std::string fmt_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// QNTK kernel container: "QNTK", u32 version = 1, u64 n, n^2 f64 row-major,
// little-endian throughout.

inline void write_kernel_qntk(const std::string& path, const KernelMatrix& kernel) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_kernel_qntk: cannot open " + path);
  out.write("QNTK", 4);
  detail::write_le<std::uint32_t>(out, 1);
  detail::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(kernel.size()));
  for (Eigen::Index i = 0; i < kernel.size(); ++i)
    for (Eigen::Index j = 0; j < kernel.size(); ++j)
      detail::write_f64_le(out, kernel.entries(i, j));
  if (!out) throw std::runtime_error("write_kernel_qntk: write failed for " + path);
}

struct IngestReport {
  Eigen::Index n = 0;
  double max_asymmetry = 0.0;
  Eigen::Index asym_i = 0, asym_j = 0;
  double min_eigenvalue = 0.0;
  double diag_min = 0.0, diag_max = 0.0;
  bool shared_diagonal = false;
};

// Reads and validates a QNTK file: magic/version, symmetry within 1e-9 of
// the matrix scale, positive semidefinite up to -1e-8 * max diagonal.
inline KernelMatrix read_kernel_qntk(const std::string& path, IngestReport* report = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_kernel_qntk: cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "QNTK", 4) != 0)
    throw std::runtime_error("read_kernel_qntk: bad magic in " + path);
  const auto version = detail::read_le<std::uint32_t>(in, path);
  if (version != 1)
    throw std::runtime_error("read_kernel_qntk: unsupported version " + std::to_string(version));
  const auto n64 = detail::read_le<std::uint64_t>(in, path);
  if (n64 == 0 || n64 > 65536) throw std::runtime_error("read_kernel_qntk: implausible size");
  const auto n = static_cast<Eigen::Index>(n64);
  Matrix entries(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) entries(i, j) = detail::read_f64_le(in, path);

  const double scale = std::max(entries.cwiseAbs().maxCoeff(), 1e-300);
  double worst = 0.0;
  Eigen::Index wi = 0, wj = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double a = std::abs(entries(i, j) - entries(j, i));
      if (a > worst) { worst = a; wi = i; wj = j; }
    }
  if (worst > 1e-9 * scale)
    throw std::runtime_error("read_kernel_qntk: asymmetric at (" + std::to_string(wi) + ", " +
                             std::to_string(wj) + "), |K_ij - K_ji| = " + fmt_double(worst));
  // exact symmetry downstream
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      entries(j, i) = entries(i, j) = 0.5 * (entries(i, j) + entries(j, i));

  const double diag_max = entries.diagonal().maxCoeff();
  const double min_eig = symmetric_eigenvalues(entries / std::max(scale, 1e-300))[0] * scale;
  if (min_eig < -1e-8 * std::max(diag_max, 0.0))
    throw std::runtime_error("read_kernel_qntk: not positive semidefinite (min eigenvalue " +
                             fmt_double(min_eig) + ")");

  KernelMatrix k;
  k.entries = std::move(entries);
  k.source = KernelSource::ingested;
  k.diag_value = detail::shared_diagonal(k.entries);
  if (report) {
    report->n = n;
    report->max_asymmetry = worst;
    report->asym_i = wi;
    report->asym_j = wj;
    report->min_eigenvalue = min_eig;
    report->diag_min = k.entries.diagonal().minCoeff();
    report->diag_max = diag_max;
    report->shared_diagonal = k.diag_value.has_value();
  }
  return k;
}

// ---------------------------------------------------------------------------
// QSPR pattern container: "QSPR", u32 version = 1, u64 n, then per row a u32
// degree followed by that many sorted u64 indices. Little-endian.

inline void write_pattern_qspr(const std::string& path, const SparsityPattern& pattern) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_pattern_qspr: cannot open " + path);
  out.write("QSPR", 4);
  detail::write_le<std::uint32_t>(out, 1);
  detail::write_le<std::uint64_t>(out, pattern.n);
  for (const auto& row : pattern.rows) {
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(row.size()));
    for (std::uint32_t idx : row) detail::write_le<std::uint64_t>(out, idx);
  }
  if (!out) throw std::runtime_error("write_pattern_qspr: write failed for " + path);
}

inline SparsityPattern read_pattern_qspr(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_pattern_qspr: cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "QSPR", 4) != 0)
    throw std::runtime_error("read_pattern_qspr: bad magic in " + path);
  const auto version = detail::read_le<std::uint32_t>(in, path);
  if (version != 1)
    throw std::runtime_error("read_pattern_qspr: unsupported version " + std::to_string(version));
  SparsityPattern p;
  p.n = detail::read_le<std::uint64_t>(in, path);
  p.rows.resize(p.n);
  std::size_t max_degree = 0;
  for (std::size_t i = 0; i < p.n; ++i) {
    const auto degree = detail::read_le<std::uint32_t>(in, path);
    p.rows[i].resize(degree);
    for (std::uint32_t k = 0; k < degree; ++k)
      p.rows[i][k] = static_cast<std::uint32_t>(detail::read_le<std::uint64_t>(in, path));
    max_degree = std::max<std::size_t>(max_degree, degree);
  }
  p.degree_target = static_cast<int>(max_degree / 2);
  return p;
}

// ---------------------------------------------------------------------------
// Dataset sidecar: a labels CSV ("index,label") next to a raw f64 feature
// blob (n*d little-endian doubles, row-major).

inline void write_dataset_sidecar(const Dataset& data, const std::string& csv_path,
                                  const std::string& blob_path) {
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("write_dataset_sidecar: cannot open " + csv_path);
  csv << "index,label\n";
  for (Eigen::Index i = 0; i < data.size(); ++i)
    csv << i << ',' << data.labels[i] << '\n';
  std::ofstream blob(blob_path, std::ios::binary);
  if (!blob) throw std::runtime_error("write_dataset_sidecar: cannot open " + blob_path);
  for (Eigen::Index i = 0; i < data.size(); ++i)
    for (Eigen::Index j = 0; j < data.dim(); ++j)
      detail::write_f64_le(blob, data.features(i, j));
}

inline Eigen::VectorXi read_labels_csv(const std::string& csv_path) {
  std::ifstream csv(csv_path);
  if (!csv) throw std::runtime_error("read_labels_csv: cannot open " + csv_path);
  std::string line;
  if (!std::getline(csv, line) || line != "index,label")
    throw std::runtime_error("read_labels_csv: missing 'index,label' header in " + csv_path);
  std::vector<int> labels;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw std::runtime_error("read_labels_csv: malformed row '" + line + "'");
    const int label = std::stoi(line.substr(comma + 1));
    if (label != 1 && label != -1)
      throw std::runtime_error("read_labels_csv: labels must be +1 or -1");
    labels.push_back(label);
  }
  Eigen::VectorXi out(static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) out[static_cast<Eigen::Index>(i)] = labels[i];
  return out;
}

// ---------------------------------------------------------------------------
// PredictionBatch rows.

inline std::string prediction_batch_csv(const PredictionBatch& batch,
                                        const Eigen::VectorXi& labels) {
  if (labels.size() != static_cast<Eigen::Index>(batch.signs.size()))
    throw std::invalid_argument("prediction_batch_csv: label size mismatch");
  std::string out = "test_index,score,sign,label,mode\n";
  for (Eigen::Index i = 0; i < batch.scores.size(); ++i) {
    out += std::to_string(i);
    out += ',';
    out += fmt_double(batch.scores[i]);
    out += ',';
    out += std::to_string(batch.signs[static_cast<std::size_t>(i)]);
    out += ',';
    out += std::to_string(labels[i]);
    out += ',';
    out += to_string(batch.mode);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// PipelineCostReport rows.

inline std::string pipeline_report_csv_header() {
  return "n,mode,depth,P,postselect_shots,kappa,s,cg_iters,hhl_queries,overlap,"
         "readout_shots,sign";
}

inline std::string pipeline_report_csv_row(const PipelineCostReport& r) {
  std::string row;
  row += std::to_string(r.n);
  row += ',';
  row += to_string(r.mode);
  row += ',';
  row += std::to_string(r.depth);
  row += ',';
  row += fmt_double(r.p_norm);
  row += ',';
  row += std::to_string(r.postselect_shots);
  row += ',';
  row += fmt_double(r.kappa);
  row += ',';
  row += std::to_string(r.sparsity);
  row += ',';
  row += std::to_string(r.cg_iterations);
  row += ',';
  row += fmt_double(r.hhl_queries);
  row += ',';
  row += fmt_double(r.overlap);
  row += ',';
  row += fmt_double(r.readout_shots_needed);
  row += ',';
  row += std::to_string(r.predicted_sign);
  return row;
}

}  // namespace qntk
