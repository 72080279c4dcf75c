#pragma once

#include "qntk/activation.hpp"
#include "qntk/approx.hpp"
#include "qntk/data.hpp"
#include "qntk/kernel.hpp"
#include "qntk/linalg.hpp"
#include "qntk/ntk.hpp"
#include "qntk/rng.hpp"
#include "qntk/sparsity.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

namespace qntk {

// Statistical knobs of the emulated quantum subroutines. Amplitude
// estimation runs P iterations, median evaluation drives the failure
// probability below Delta, readout samples m shots.
struct NoiseModel {
  int ae_iterations = 100;
  double failure_prob = 0.01;     // Delta
  std::int64_t readout_shots = 4096;
  std::uint64_t rng_seed = 1;

  void validate() const {
    if (ae_iterations < 1) throw std::invalid_argument("NoiseModel: ae_iterations must be >= 1");
    if (failure_prob <= 0.0 || failure_prob >= 0.5)
      throw std::invalid_argument("NoiseModel: failure probability outside (0, 1/2)");
    if (readout_shots < 1) throw std::invalid_argument("NoiseModel: readout_shots must be >= 1");
  }
};

// Success amplitude of amplitude estimation (the 8/pi^2 of its guarantee);
// also the alpha_0 handed to median evaluation.
inline constexpr double kAmplitudeEstimationAlpha = 0.81056946913870217;

// Normalization threshold for the test-kernel state: the kernel evaluated at
// the estimated closest approach 1 - delta_hat.
inline double estimate_kmax(double delta_hat, const DualActivation& dual, int depth) {
  if (delta_hat <= 0.0 || delta_hat > 1.0)
    throw std::invalid_argument("estimate_kmax: delta_hat outside (0, 1]");
  return ntk_element(1.0 - delta_hat, depth, dual);
}

struct KernelState {
  Vector amplitudes;      // unit vector
  double p_norm = 0.0;    // P = sum k_i^2 after clipping
  double postselect_cost = 0.0;  // 1 / P
};

// Amplitude encoding of the test kernel: k_i = clip(k*_i / k_max, -1, 1),
// post-selection succeeds with probability P = sum k_i^2.
inline KernelState kernel_state(const Vector& k_star, double k_max) {
  if (k_max <= 0.0)
    throw std::invalid_argument("kernel_state: normalization threshold must be positive");
  if (k_star.size() == 0) throw std::invalid_argument("kernel_state: empty kernel vector");
  KernelState out;
  out.amplitudes.resize(k_star.size());
  double p = 0.0;
  for (Eigen::Index i = 0; i < k_star.size(); ++i) {
    const double k = std::clamp(k_star[i] / k_max, -1.0, 1.0);
    out.amplitudes[i] = k;
    p += k * k;
  }
  if (p == 0.0) throw std::runtime_error("kernel_state: all-zero test kernel");
  out.p_norm = p;
  out.postselect_cost = 1.0 / p;
  out.amplitudes /= std::sqrt(p);
  return out;
}

// Estimate p~ within the amplitude-estimation band
//   |p~ - p| <= 2 pi sqrt(p(1-p)) / P + (pi / P)^2,
// exact at p = 0 and p = 1. Uniform sampling within the band: the guarantee
// is only a bound, so the least-informative distribution is used.
inline double amplitude_estimation_noise(double p, int iterations, CounterRng& rng) {
  if (iterations < 1) throw std::invalid_argument("amplitude_estimation_noise: iterations >= 1");
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("amplitude_estimation_noise: p outside [0, 1]");
  if (p == 0.0 || p == 1.0) return p;
  const double band = 2.0 * kPi * std::sqrt(p * (1.0 - p)) / iterations +
                      (kPi / iterations) * (kPi / iterations);
  return std::clamp(rng.uniform(p - band, p + band), 0.0, 1.0);
}

// Repetition multiplier of median evaluation: ceil(ln(1/Delta) / (2 (a0 - 1/2)^2)).
inline std::int64_t median_repetitions(double delta, double alpha0) {
  if (delta <= 0.0 || delta >= 1.0)
    throw std::invalid_argument("median_repetitions: Delta outside (0, 1)");
  if (alpha0 <= 0.5 || alpha0 > 1.0)
    throw std::invalid_argument("median_repetitions: alpha0 outside (1/2, 1]");
  const double r = std::log(1.0 / delta) / (2.0 * (alpha0 - 0.5) * (alpha0 - 0.5));
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(r)));
}

struct QlspInstance {
  KernelMatrix matrix;  // sparsified, SPD
  Vector rhs;           // unit vector |y>
  double tolerance = 1e-10;
};

struct QlspSolution {
  Vector v;  // unit vector
  int cg_iterations = 0;
};

// Classical QLSP stand-in: conjugate gradient to relative residual epsilon,
// then normalize. The iteration budget follows the sqrt(kappa) convergence
// of CG; exceeding it signals an ill-conditioned instance.
inline QlspSolution solve_qlsp(const QlspInstance& instance) {
  if (instance.tolerance <= 0.0) throw std::invalid_argument("solve_qlsp: tolerance must be > 0");
  if (std::abs(instance.rhs.norm() - 1.0) > 1e-9)
    throw std::invalid_argument("solve_qlsp: rhs must be a unit vector");
  const GershgorinBounds g = gershgorin_bounds(instance.matrix);
  const double kappa_ub =
      std::isfinite(g.kappa_ub) ? g.kappa_ub : static_cast<double>(instance.matrix.size());
  const int max_it = std::max<int>(
      16, static_cast<int>(std::ceil(10.0 * std::sqrt(kappa_ub) *
                                     std::log(1.0 / instance.tolerance))));
  const SparseSym csr = SparseSym::from_dense(instance.matrix.entries);
  const CgResult r = conjugate_gradient(csr, instance.rhs, instance.tolerance, max_it);
  if (!r.converged)
    throw std::runtime_error("solve_qlsp: CG exceeded the iteration budget (ill-conditioned)");
  QlspSolution out;
  const double norm = r.x.norm();
  if (norm == 0.0) throw std::runtime_error("solve_qlsp: zero solution");
  out.v = r.x / norm;
  out.cg_iterations = r.iterations;
  return out;
}

struct HhlCost {
  double queries_matrix = 0.0;  // kappa^2 s ln(s kappa / eps) / eps
  double queries_rhs = 0.0;     // kappa   s ln(s kappa / eps) / eps
  double improved_time = 0.0;   // ln(n) kappa s ln^3(s kappa / eps)
};

// Unit-constant instantiation of the asymptotic query counts; model
// estimates for reporting, not simulated circuit counts.
inline HhlCost hhl_cost(Eigen::Index n, double kappa, Eigen::Index s, double epsilon) {
  if (n < 1 || kappa < 1.0 || s < 1 || epsilon <= 0.0)
    throw std::invalid_argument("hhl_cost: arguments must be positive (kappa >= 1)");
  const double lg = std::log(static_cast<double>(s) * kappa / epsilon);
  HhlCost c;
  c.queries_matrix = kappa * kappa * static_cast<double>(s) * lg / epsilon;
  c.queries_rhs = kappa * static_cast<double>(s) * lg / epsilon;
  c.improved_time = std::log(static_cast<double>(n)) * kappa * static_cast<double>(s) * lg * lg * lg;
  return c;
}

struct ReadoutResult {
  double estimate = 0.0;
  int sign = 0;  // +1 / -1 / 0 when the estimate is exactly zero
  bool sign_defined = false;
  double shots_needed = 0.0;  // ceil(1 / overlap^2); +inf sentinel at zero overlap
};

// Swap-test style sign readout: m shots of a Bernoulli((1 + <s|y>)/2),
// estimate = 2 (successes / m) - 1.
inline ReadoutResult readout_sign(const Vector& s_state, const Vector& y_state,
                                  std::int64_t shots, CounterRng& rng) {
  if (shots < 1) throw std::invalid_argument("readout_sign: shots must be >= 1");
  if (s_state.size() != y_state.size())
    throw std::invalid_argument("readout_sign: state size mismatch");
  if (std::abs(s_state.norm() - 1.0) > 1e-9 || std::abs(y_state.norm() - 1.0) > 1e-9)
    throw std::invalid_argument("readout_sign: states must be unit vectors");
  const double overlap = s_state.dot(y_state);
  const double p = std::clamp(0.5 * (1.0 + overlap), 0.0, 1.0);
  const std::int64_t successes = rng.binomial(shots, p);
  ReadoutResult out;
  out.estimate = 2.0 * static_cast<double>(successes) / static_cast<double>(shots) - 1.0;
  out.sign = (out.estimate > 0.0) ? 1 : (out.estimate < 0.0 ? -1 : 0);
  out.sign_defined = out.sign != 0 && overlap != 0.0;
  out.shots_needed = (overlap == 0.0) ? std::numeric_limits<double>::infinity()
                                      : std::ceil(1.0 / (overlap * overlap));
  return out;
}

// QRAM bookkeeping: per-entry insertion cost (ln n)^2, query cost (ln(nd))^2.
struct QramCost {
  double insert_cost = 0.0;
  double query_cost = 0.0;
};

inline QramCost qram_cost_model(Eigen::Index n, Eigen::Index d) {
  if (n < 1 || d < 1) throw std::invalid_argument("qram_cost_model: sizes must be positive");
  const double ln_n = std::log(static_cast<double>(n));
  const double ln_nd = std::log(static_cast<double>(n) * static_cast<double>(d));
  return {ln_n * ln_n, ln_nd * ln_nd};
}

enum class PipelineMode { diagonal, sparsified };

inline const char* to_string(PipelineMode m) {
  return m == PipelineMode::diagonal ? "diagonal" : "sparsified";
}

// Everything Algorithm 1 needs for one test prediction.
struct PipelineCostReport {
  Eigen::Index n = 0;
  PipelineMode mode = PipelineMode::diagonal;
  int depth = 0;
  double p_norm = 0.0;
  std::int64_t postselect_shots = 0;
  double kappa = 1.0;
  Eigen::Index sparsity = 1;
  int cg_iterations = 0;
  double hhl_queries = 0.0;
  double overlap = 0.0;
  double readout_shots_needed = 0.0;
  int predicted_sign = 0;
  bool sign_defined = false;
};

struct PipelineOptions {
  std::optional<int> depth;              // exactly one of depth / depth_fraction
  std::optional<double> depth_fraction;  // of l_conv(n, delta_data, mu)
  DualActivation dual = DualActivation::erf();
  double delta_hat = 0.1;                // k_max normalization (power-law estimate)
  std::optional<double> data_delta;      // measured separability; computed when absent
  double pattern_c = 2.0;
  std::uint64_t pattern_seed = 1;
  bool class_bias = false;
  double percentile = 0.0;
  Eigen::Index percentile_subset = 16;
  std::optional<PreconditionSpec> precondition;
  NoiseModel noise;
  bool noiseless = false;
  double epsilon = 1e-10;
  std::optional<double> kmax_override;  // bypass the delta_hat estimate
};

// Per-configuration state shared by all test points: the approximate kernel,
// its solve, and the cost-model constants.
struct PipelineContext {
  PipelineMode mode = PipelineMode::diagonal;
  Eigen::Index n = 0;
  int depth = 0;
  DualActivation dual = DualActivation::erf();
  double kmax = 1.0;
  Vector y_state;          // labels / sqrt(n)
  Vector v_state;          // K~^{-1} |y>, unit (sparsified mode)
  KernelMatrix k_approx;   // the matrix Algorithm 1 actually inverts
  SparsityPattern pattern; // sparsified mode
  double kappa = 1.0;
  double kappa_bound = 1.0;
  Eigen::Index sparsity = 1;
  int cg_iterations = 0;
  double hhl_queries = 0.0;
  NoiseModel noise;
  bool noiseless = false;
};

inline int resolve_depth(const Dataset& data, const PipelineOptions& options) {
  const bool has_fraction = options.depth_fraction.has_value();
  if (options.depth.has_value() == has_fraction)
    throw std::invalid_argument("pipeline: exactly one of depth / depth_fraction required");
  if (options.depth) {
    if (*options.depth < 1) throw std::invalid_argument("pipeline: depth must be >= 1");
    return *options.depth;
  }
  const double delta =
      options.data_delta ? *options.data_delta : separability(data).delta;
  const double mu = nonlinearity_coefficient(options.dual);
  const double lc = l_conv(data.size(), delta, mu);
  return std::max(1, static_cast<int>(std::ceil(*options.depth_fraction * lc)));
}

namespace detail {

// Everything after the exact training kernel is known: approximation,
// conditioning figures, and the shared linear solve.
inline void finish_pipeline_context(PipelineContext& ctx, const KernelMatrix& k_train,
                                    const Eigen::VectorXi& labels, PipelineMode mode,
                                    const PipelineOptions& options) {
  ctx.mode = mode;
  ctx.n = k_train.size();
  ctx.noise = options.noise;
  ctx.noiseless = options.noiseless;
  ctx.y_state = labels.cast<double>() / std::sqrt(static_cast<double>(ctx.n));

  if (mode == PipelineMode::diagonal) {
    ctx.k_approx = diagonalize(k_train);
    const auto diag = ctx.k_approx.entries.diagonal();
    ctx.kappa = diag.maxCoeff() / diag.minCoeff();
    ctx.kappa_bound = ctx.kappa;
    ctx.sparsity = 1;
    ctx.hhl_queries = 0.0;  // no linear solve in the diagonal branch
    return;
  }

  ctx.pattern = generate_pattern(static_cast<std::size_t>(ctx.n), options.pattern_c,
                                 options.pattern_seed,
                                 options.class_bias ? &labels : nullptr);
  if (options.percentile > 0.0) {
    const Eigen::Index sub = std::min<Eigen::Index>(options.percentile_subset, ctx.n);
    if (sub >= 2) {
      KernelMatrix subset;
      subset.entries = k_train.entries.topLeftCorner(sub, sub);
      subset.source = k_train.source;
      ctx.pattern = percentile_bias(ctx.pattern, k_train, subset, options.percentile);
    }
  }
  ctx.k_approx = sparsify(k_train, ctx.pattern);
  if (options.precondition)
    ctx.k_approx = precondition(ctx.k_approx, *options.precondition, ctx.n);

  ctx.sparsity = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(ctx.pattern.max_degree()));
  ctx.kappa = condition_number(ctx.k_approx);
  ctx.kappa_bound = gershgorin_bounds(ctx.k_approx).kappa_ub;

  QlspInstance instance{ctx.k_approx, ctx.y_state, options.epsilon};
  const QlspSolution sol = solve_qlsp(instance);
  ctx.v_state = sol.v;
  ctx.cg_iterations = sol.cg_iterations;
  ctx.hhl_queries = hhl_cost(ctx.n, ctx.kappa, ctx.sparsity, options.epsilon).queries_matrix;
}

}  // namespace detail

inline PipelineContext prepare_pipeline(const Dataset& data, PipelineMode mode,
                                        const PipelineOptions& options) {
  options.noise.validate();
  PipelineContext ctx;
  ctx.depth = resolve_depth(data, options);
  ctx.dual = options.dual;
  ctx.kmax = options.kmax_override ? *options.kmax_override
                                   : estimate_kmax(options.delta_hat, options.dual, ctx.depth);
  const KernelMatrix k_train = assemble_kernel(data, {ctx.depth, ctx.dual});
  detail::finish_pipeline_context(ctx, k_train, data.labels, mode, options);
  return ctx;
}

// Context for an externally computed (ingested) training kernel. The kernel
// function itself is not available, so the normalization threshold defaults
// to the largest training off-diagonal (an upper bound on typical test-train
// couplings) and the test kernel rows must come from the same file.
inline PipelineContext prepare_pipeline_from_kernel(const KernelMatrix& k_train,
                                                    const Eigen::VectorXi& labels,
                                                    PipelineMode mode,
                                                    const PipelineOptions& options) {
  options.noise.validate();
  if (k_train.size() != labels.size())
    throw std::invalid_argument("prepare_pipeline_from_kernel: kernel/label size mismatch");
  PipelineContext ctx;
  ctx.depth = 0;  // external kernel, depth unknown
  if (options.kmax_override) {
    ctx.kmax = *options.kmax_override;
  } else {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < k_train.size(); ++i)
      for (Eigen::Index j = i + 1; j < k_train.size(); ++j)
        worst = std::max(worst, std::abs(k_train.entries(i, j)));
    if (worst <= 0.0)
      throw std::invalid_argument(
          "prepare_pipeline_from_kernel: no off-diagonal mass to normalize by (set kmax)");
    ctx.kmax = worst;
  }
  detail::finish_pipeline_context(ctx, k_train, labels, mode, options);
  return ctx;
}

// Runs PrepareTestKernel + the mode branch for one test kernel vector.
// Stochastic steps draw from a stream keyed by (seed, test_index), so
// batches are reproducible and order-free.
inline PipelineCostReport simulate_from_test_kernel(const PipelineContext& ctx,
                                                    const Vector& k_star,
                                                    std::uint64_t test_index) {
  PipelineCostReport report;
  report.n = ctx.n;
  report.mode = ctx.mode;
  report.depth = ctx.depth;
  report.kappa = ctx.kappa;
  report.sparsity = ctx.sparsity;
  report.cg_iterations = ctx.cg_iterations;
  report.hhl_queries = ctx.hhl_queries;

  const KernelState state = kernel_state(k_star, ctx.kmax);
  report.p_norm = state.p_norm;
  report.postselect_shots =
      static_cast<std::int64_t>(std::ceil(state.postselect_cost)) *
      median_repetitions(ctx.noise.failure_prob, kAmplitudeEstimationAlpha);

  const Vector& target = (ctx.mode == PipelineMode::diagonal) ? ctx.y_state : ctx.v_state;
  const double overlap = state.amplitudes.dot(target);
  report.overlap = overlap;
  report.readout_shots_needed = (overlap == 0.0)
                                    ? std::numeric_limits<double>::infinity()
                                    : std::ceil(1.0 / (overlap * overlap));
  if (ctx.noiseless) {
    report.predicted_sign = (overlap > 0.0) ? 1 : (overlap < 0.0 ? -1 : 0);
    report.sign_defined = report.predicted_sign != 0;
  } else {
    CounterRng rng(ctx.noise.rng_seed, test_index ^ 0x7ead007ULL);
    const ReadoutResult r = readout_sign(state.amplitudes, target, ctx.noise.readout_shots, rng);
    report.predicted_sign = r.sign;
    report.sign_defined = r.sign_defined;
  }
  return report;
}

// Full Algorithm 1 emulation for a feature-space test point: inner products,
// amplitude-estimation noise on them, the kernel map, then the mode branch.
inline PipelineCostReport simulate_pipeline(const PipelineContext& ctx, const Dataset& data,
                                            const Vector& x_star, std::uint64_t test_index) {
  if (ctx.depth < 1)
    throw std::invalid_argument(
        "simulate_pipeline: context built for an external kernel; pass its test kernel rows "
        "to simulate_from_test_kernel instead");
  if (x_star.size() != data.dim())
    throw std::invalid_argument("simulate_pipeline: test point dimension mismatch");
  Vector k_star(ctx.n);
  CounterRng rng(ctx.noise.rng_seed, test_index);
  for (Eigen::Index i = 0; i < ctx.n; ++i) {
    double rho = std::clamp(data.features.row(i).dot(x_star), -1.0, 1.0);
    if (!ctx.noiseless) {
      const double p = 0.5 * (1.0 - rho);
      const double noisy = amplitude_estimation_noise(p, ctx.noise.ae_iterations, rng);
      rho = std::clamp(1.0 - 2.0 * noisy, -1.0, 1.0);
    }
    k_star[i] = ntk_element(rho, ctx.depth, ctx.dual);
  }
  return simulate_from_test_kernel(ctx, k_star, test_index);
}

// One-shot form of the pipeline for a single test point.
inline PipelineCostReport simulate_pipeline(const Dataset& data, const Vector& x_star,
                                            PipelineMode mode, const PipelineOptions& options,
                                            std::uint64_t test_index = 0) {
  const PipelineContext ctx = prepare_pipeline(data, mode, options);
  return simulate_pipeline(ctx, data, x_star, test_index);
}

}  // namespace qntk
