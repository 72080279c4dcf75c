#pragma once

#include "qntk/quadrature.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qntk {

inline constexpr double kPi = 3.14159265358979323846;

namespace detail {

inline double asin_two_thirds() {
  static const double v = std::asin(2.0 / 3.0);
  return v;
}

inline double check_correlation(double rho, const char* who) {
  if (std::abs(rho) > 1.0 + 1e-12)
    throw std::domain_error(std::string(who) + ": correlation outside [-1, 1]");
  return std::clamp(rho, -1.0, 1.0);
}

}  // namespace detail

enum class ActivationKind { erf_normalized, relu_normalized, hermite_series };

// Config-facing description of an activation. hermite_series carries the
// coefficients a_i for i >= 1 (a_0 is implicitly zero); their squares must
// sum to one.
struct ActivationSpec {
  ActivationKind kind = ActivationKind::erf_normalized;
  std::vector<double> coefficients;

  void validate() const {
    if (kind != ActivationKind::hermite_series) {
      if (!coefficients.empty())
        throw std::invalid_argument("ActivationSpec: closed-form kinds carry no coefficients");
      return;
    }
    if (coefficients.empty())
      throw std::invalid_argument("ActivationSpec: hermite_series needs coefficients");
    double sum = 0.0;
    for (double a : coefficients) sum += a * a;
    if (std::abs(sum - 1.0) > 1e-10)
      throw std::invalid_argument(
          "ActivationSpec: squared Hermite coefficients must sum to 1 (got " +
          std::to_string(sum) + ")");
  }
};

// Dual of erf normalized to unit Gaussian variance: arcsin(2*rho/3) / arcsin(2/3).
inline double dual_erf(double rho) {
  rho = detail::check_correlation(rho, "dual_erf");
  return std::asin(2.0 * rho / 3.0) / detail::asin_two_thirds();
}

inline double dual_erf_derivative(double rho) {
  rho = detail::check_correlation(rho, "dual_erf_derivative");
  return (2.0 / 3.0) / (detail::asin_two_thirds() * std::sqrt(1.0 - 4.0 * rho * rho / 9.0));
}

// Dual of ReLU after mean/variance normalization. Derived from the order-1
// arc-cosine kernel: (sqrt(1-rho^2) + rho*(pi - acos rho) - 1) / (pi - 1).
inline double dual_relu(double rho) {
  rho = detail::check_correlation(rho, "dual_relu");
  return (std::sqrt(std::max(0.0, 1.0 - rho * rho)) + rho * (kPi - std::acos(rho)) - 1.0) /
         (kPi - 1.0);
}

inline double dual_relu_derivative(double rho) {
  rho = detail::check_correlation(rho, "dual_relu_derivative");
  return (kPi - std::acos(rho)) / (kPi - 1.0);
}

// The pair (dual, dual') for one activation, plus the constants the depth
// formulas need. Immutable after construction; cheap to copy and safe to
// share across threads.
class DualActivation {
 public:
  static DualActivation erf() {
    DualActivation d;
    d.kind_ = Kind::erf;
    d.mu_ = 1.0 - dual_erf_derivative(0.0);
    d.deriv_at_one_ = dual_erf_derivative(1.0);
    return d;
  }

  static DualActivation relu() {
    DualActivation d;
    d.kind_ = Kind::relu;
    d.mu_ = 1.0 - dual_relu_derivative(0.0);
    d.deriv_at_one_ = dual_relu_derivative(1.0);
    return d;
  }

  // Coefficients a_i for i >= 1; the dual is sum_i a_i^2 rho^i.
  static DualActivation hermite(const std::vector<double>& coefficients) {
    ActivationSpec spec{ActivationKind::hermite_series, coefficients};
    spec.validate();
    DualActivation d;
    d.kind_ = Kind::series;
    d.squared_.reserve(coefficients.size());
    double d1 = 0.0;
    for (std::size_t i = 0; i < coefficients.size(); ++i) {
      const double sq = coefficients[i] * coefficients[i];
      d.squared_.push_back(sq);
      d1 += static_cast<double>(i + 1) * sq;
    }
    d.mu_ = 1.0 - d.squared_[0];
    d.deriv_at_one_ = d1;
    return d;
  }

  static DualActivation from_spec(const ActivationSpec& spec) {
    spec.validate();
    switch (spec.kind) {
      case ActivationKind::erf_normalized: return erf();
      case ActivationKind::relu_normalized: return relu();
      case ActivationKind::hermite_series: return hermite(spec.coefficients);
    }
    throw std::logic_error("DualActivation: unknown kind");
  }

  double eval(double rho) const {
    switch (kind_) {
      case Kind::erf: return dual_erf(rho);
      case Kind::relu: return dual_relu(rho);
      case Kind::series: {
        rho = detail::check_correlation(rho, "DualActivation::eval");
        double acc = 0.0, power = rho;
        for (double sq : squared_) {
          acc += sq * power;
          power *= rho;
        }
        return acc;
      }
    }
    return 0.0;
  }

  double deriv(double rho) const {
    switch (kind_) {
      case Kind::erf: return dual_erf_derivative(rho);
      case Kind::relu: return dual_relu_derivative(rho);
      case Kind::series: {
        rho = detail::check_correlation(rho, "DualActivation::deriv");
        double acc = 0.0, power = 1.0;
        for (std::size_t i = 0; i < squared_.size(); ++i) {
          acc += static_cast<double>(i + 1) * squared_[i] * power;
          power *= rho;
        }
        return acc;
      }
    }
    return 0.0;
  }

  double mu() const { return mu_; }
  double deriv_at_one() const { return deriv_at_one_; }

 private:
  enum class Kind { erf, relu, series };
  Kind kind_ = Kind::erf;
  std::vector<double> squared_;  // a_i^2, index 0 <-> i = 1
  double mu_ = 0.0;
  double deriv_at_one_ = 1.0;
};

inline double dual_from_hermite(const ActivationSpec& spec, double rho) {
  if (spec.kind != ActivationKind::hermite_series)
    throw std::invalid_argument("dual_from_hermite: spec is not a Hermite series");
  return DualActivation::from_spec(spec).eval(rho);
}

inline double dual_derivative(const DualActivation& dual, double rho) {
  return dual.deriv(rho);
}

// mu = 1 - dual'(0), in (0, 1]. A purely linear activation (mu = 0) is
// rejected; every depth bound divides by mu.
inline double nonlinearity_coefficient(const DualActivation& dual) {
  const double mu = 1.0 - dual.deriv(0.0);
  if (mu <= 0.0)
    throw std::domain_error("nonlinearity_coefficient: linear activation has mu = 0");
  return mu;
}

// Number of Gauss-Hermite nodes used for normalization and coefficient
// extraction.
inline constexpr int kQuadraturePoints = 128;

// Returns (shift, scale) such that (raw(x) - shift) / scale has zero Gaussian
// mean and unit Gaussian variance. Uses the panel rule so activations with a
// kink at the origin still normalize to full precision.
template <typename Fn>
std::pair<double, double> normalize_activation(Fn&& raw) {
  const GaussianQuadrature q = gaussian_panel_rule();
  const double mean = q.expectation(raw);
  const double second = q.expectation([&](double x) {
    const double v = raw(x);
    return v * v;
  });
  const double var = second - mean * mean;
  if (var < 1e-12)
    throw std::domain_error("normalize_activation: activation has (near-)zero Gaussian variance");
  return {mean, std::sqrt(var)};
}

// Hermite coefficients a_i = E[f(X) he_i(X)] for i >= 1, orthonormal
// probabilists' basis, f already normalized. Truncates once the squared tail
// drops below tail_tol.
template <typename Fn>
std::vector<double> hermite_coefficients(Fn&& normalized, int max_degree = 64,
                                         double tail_tol = 1e-10) {
  const GaussianQuadrature q = gauss_hermite(kQuadraturePoints);
  const std::size_t m = q.nodes.size();
  std::vector<double> he_prev(m, 1.0), he(m);
  for (std::size_t k = 0; k < m; ++k) he[k] = q.nodes[k];
  std::vector<double> fx(m);
  for (std::size_t k = 0; k < m; ++k) fx[k] = normalized(q.nodes[k]);

  double a0 = 0.0;
  for (std::size_t k = 0; k < m; ++k) a0 += q.weights[k] * fx[k];
  if (std::abs(a0) > 1e-8)
    throw std::invalid_argument("hermite_coefficients: function has nonzero Gaussian mean");

  // Quadrature drift leaves the squared sum a hair off 1; renormalize so the
  // coefficients meet the series contract exactly.
  auto renormalized = [](std::vector<double> c, double sum_sq) {
    const double inv = 1.0 / std::sqrt(sum_sq);
    for (double& a : c) a *= inv;
    return c;
  };
  std::vector<double> coefficients;
  double cumulative = 0.0;
  for (int degree = 1; degree <= max_degree; ++degree) {
    double a = 0.0;
    for (std::size_t k = 0; k < m; ++k) a += q.weights[k] * fx[k] * he[k];
    coefficients.push_back(a);
    cumulative += a * a;
    if (1.0 - cumulative < tail_tol) return renormalized(std::move(coefficients), cumulative);
    // he_{d+1} = (x he_d - sqrt(d) he_{d-1}) / sqrt(d+1)
    const double sd = std::sqrt(static_cast<double>(degree));
    const double sd1 = std::sqrt(static_cast<double>(degree + 1));
    for (std::size_t k = 0; k < m; ++k) {
      const double next = (q.nodes[k] * he[k] - sd * he_prev[k]) / sd1;
      he_prev[k] = he[k];
      he[k] = next;
    }
  }
  throw std::runtime_error(
      "hermite_coefficients: squared tail above tolerance at max degree (use a closed form)");
}

}  // namespace qntk
