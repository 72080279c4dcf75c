#include "qntk/activation.hpp"

#include "support/fixtures.hpp"

#include <catch2/catch.hpp>

#include <cmath>

using namespace qntk;
using testsupport::monte_carlo_dual;

namespace {

double erf_sigma_scale() { return std::sqrt(2.0 / kPi * std::asin(2.0 / 3.0)); }

double erf_normalized(double x) { return std::erf(x) / erf_sigma_scale(); }

double relu_normalized(double x) {
  const double shift = 1.0 / std::sqrt(2.0 * kPi);
  const double scale = std::sqrt(0.5 - 1.0 / (2.0 * kPi));
  return ((x > 0.0 ? x : 0.0) - shift) / scale;
}

}  // namespace

TEST_CASE("dual_erf closed form") {
  CHECK(dual_erf(1.0) == Approx(1.0).margin(1e-12));
  CHECK(dual_erf(0.0) == Approx(0.0).margin(1e-12));
  CHECK(dual_erf(-1.0) == Approx(-1.0).margin(1e-12));
  CHECK(dual_erf(0.5) == Approx(std::asin(1.0 / 3.0) / std::asin(2.0 / 3.0)).epsilon(1e-12));
  CHECK_THROWS_AS(dual_erf(1.0 + 1e-9), std::domain_error);
  CHECK_THROWS_AS(dual_erf(-1.5), std::domain_error);
  // boundary slack: values within 1e-12 of the domain edge are accepted
  CHECK_NOTHROW(dual_erf(1.0 + 1e-13));
}

TEST_CASE("duals match the defining Gaussian expectation") {
  // gentle quadratic component: the product estimator's variance grows with
  // the fourth-moment weight a_2^4, and the sample count is pinned at 1e6
  const double a1 = std::sqrt(0.91), a2 = 0.3;
  const auto series = DualActivation::hermite({a1, a2});
  auto series_sigma = [=](double x) {
    return a1 * x + a2 * (x * x - 1.0) / std::sqrt(2.0);
  };
  const DualActivation erf_dual = DualActivation::erf();
  const DualActivation relu_dual = DualActivation::relu();
  for (double rho : {-0.9, -0.5, 0.0, 0.5, 0.9}) {
    const double mc_erf = monte_carlo_dual(erf_normalized, rho, 1'000'000, 11);
    CHECK(std::abs(erf_dual.eval(rho) - mc_erf) <= 5e-3);
    const double mc_relu = monte_carlo_dual(relu_normalized, rho, 1'000'000, 12);
    CHECK(std::abs(relu_dual.eval(rho) - mc_relu) <= 5e-3);
    const double mc_series = monte_carlo_dual(series_sigma, rho, 1'000'000, 15);
    CHECK(std::abs(series.eval(rho) - mc_series) <= 5e-3);
  }
}

TEST_CASE("hermite series dual") {
  ActivationSpec identity{ActivationKind::hermite_series, {1.0}};
  CHECK(dual_from_hermite(identity, 0.7) == Approx(0.7).epsilon(1e-14));

  ActivationSpec quad{ActivationKind::hermite_series, {0.0, 1.0}};
  CHECK(dual_from_hermite(quad, 0.5) == Approx(0.25).epsilon(1e-14));

  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  ActivationSpec two_term{ActivationKind::hermite_series, {inv_sqrt2, inv_sqrt2}};
  CHECK(dual_from_hermite(two_term, 0.6) == Approx(0.48).epsilon(1e-12));

  ActivationSpec bad{ActivationKind::hermite_series, {0.5, 0.5}};
  CHECK_THROWS_AS(dual_from_hermite(bad, 0.5), std::invalid_argument);
  ActivationSpec empty{ActivationKind::hermite_series, {}};
  CHECK_THROWS_AS(DualActivation::from_spec(empty), std::invalid_argument);
  ActivationSpec stray{ActivationKind::erf_normalized, {1.0}};
  CHECK_THROWS_AS(stray.validate(), std::invalid_argument);
}

TEST_CASE("dual derivatives: closed forms and finite differences") {
  const DualActivation erf_dual = DualActivation::erf();
  CHECK(dual_derivative(erf_dual, 0.0) ==
        Approx((2.0 / 3.0) / std::asin(2.0 / 3.0)).epsilon(1e-12));
  CHECK(dual_derivative(erf_dual, 1.0) ==
        Approx(2.0 / (std::sqrt(5.0) * std::asin(2.0 / 3.0))).epsilon(1e-12));

  const DualActivation series = DualActivation::hermite({1.0});
  for (double rho : {-0.8, 0.0, 0.3, 1.0}) CHECK(dual_derivative(series, rho) == 1.0);

  const DualActivation relu_dual = DualActivation::relu();
  const double h = 1e-5;
  for (const DualActivation& dual : {erf_dual, relu_dual, DualActivation::hermite({0.6, 0.8})}) {
    for (int k = 0; k <= 66; ++k) {
      const double rho = -0.99 + 0.03 * k;
      const double fd = (dual.eval(rho + h) - dual.eval(rho - h)) / (2.0 * h);
      CHECK(std::abs(dual.deriv(rho) - fd) <= 1e-4);
    }
  }
}

TEST_CASE("dual is a contraction with nonnegative series coefficients") {
  for (const DualActivation& dual :
       {DualActivation::erf(), DualActivation::relu(), DualActivation::hermite({0.5, 0.5, std::sqrt(0.5)})}) {
    CHECK(dual.eval(1.0) == Approx(1.0).margin(1e-10));
    double previous = 0.0;
    for (int k = 0; k <= 1000; ++k) {
      const double rho = k / 1000.0;
      const double v = dual.eval(rho);
      CHECK(v >= previous - 1e-12);  // nondecreasing on [0, 1]
      CHECK(v <= rho + 1e-12);
      CHECK(v >= 0.0 - 1e-12);
      CHECK(std::abs(dual.eval(-rho)) <= dual.eval(rho) + 1e-12);
      previous = v;
    }
  }
}

TEST_CASE("nonlinearity coefficient") {
  const double mu_erf = nonlinearity_coefficient(DualActivation::erf());
  CHECK(mu_erf == Approx(1.0 - (2.0 / 3.0) / std::asin(2.0 / 3.0)).epsilon(1e-12));
  CHECK(mu_erf > 0.0);
  CHECK(mu_erf <= 1.0);
  // finite-difference cross-check of dual'(0)
  const auto erf_dual = DualActivation::erf();
  const double fd = (erf_dual.eval(1e-5) - erf_dual.eval(-1e-5)) / 2e-5;
  CHECK(mu_erf == Approx(1.0 - fd).margin(1e-8));

  CHECK(nonlinearity_coefficient(DualActivation::hermite({0.0, 1.0})) == Approx(1.0));
  CHECK_THROWS_AS(nonlinearity_coefficient(DualActivation::hermite({1.0})), std::domain_error);
}

TEST_CASE("normalize_activation") {
  auto [shift_id, scale_id] = normalize_activation([](double x) { return x; });
  CHECK(shift_id == Approx(0.0).margin(1e-10));
  CHECK(scale_id == Approx(1.0).epsilon(1e-10));

  auto [shift_relu, scale_relu] = normalize_activation([](double x) { return x > 0 ? x : 0.0; });
  CHECK(shift_relu == Approx(1.0 / std::sqrt(2.0 * kPi)).epsilon(1e-9));
  CHECK(scale_relu == Approx(std::sqrt(0.5 - 1.0 / (2.0 * kPi))).epsilon(1e-9));

  auto [shift_2erf, scale_2erf] =
      normalize_activation([](double x) { return 2.0 * erf_normalized(x); });
  CHECK(shift_2erf == Approx(0.0).margin(1e-10));
  CHECK(scale_2erf == Approx(2.0).epsilon(1e-9));

  CHECK_THROWS_AS(normalize_activation([](double) { return 3.5; }), std::domain_error);
}

TEST_CASE("hermite extraction reproduces the erf dual") {
  const auto coefficients = hermite_coefficients(erf_normalized);
  double sum = 0.0;
  for (double a : coefficients) sum += a * a;
  CHECK(sum == Approx(1.0).margin(1e-9));
  // erf is odd: even-degree coefficients are quadrature noise and carry no
  // squared weight
  double even_weight = 0.0;
  for (std::size_t i = 1; i < coefficients.size(); i += 2) {
    CHECK(std::abs(coefficients[i]) < 1e-5);
    even_weight += coefficients[i] * coefficients[i];
  }
  CHECK(even_weight < 1e-10);

  const auto series = DualActivation::hermite(coefficients);
  for (double rho : {-0.95, -0.4, 0.1, 0.65, 0.99})
    CHECK(series.eval(rho) == Approx(dual_erf(rho)).margin(1e-8));

  CHECK_THROWS_AS(hermite_coefficients([](double x) { return x + 0.5; }),
                  std::invalid_argument);  // nonzero mean
  // kinked activations are rejected (quadrature mean drift or slow tail)
  CHECK_THROWS(hermite_coefficients(relu_normalized));
}
