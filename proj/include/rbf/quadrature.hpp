#pragma once

#include <Eigen/Dense>
#include <vector>

#include "rbf/basis.hpp"

namespace rbf {

// Quadrature order used when a caller does not request one explicitly.
inline constexpr int kDefaultQuadratureOrder = 32;

// Highest monomial degree integral_exp_monomial accepts.
inline constexpr int kMaxMonomialDegree = 12;

// A closed form evaluation loses this many decimal digits before it is
// reported as degraded and callers switch to quadrature.
inline constexpr double kDegradedDigitsThreshold = 8.0;

// Integral of exp(lambda) over [lo, hi], evaluated without cancellation
// as exp(hi) * (1 - exp(lo - hi)).
double integral_exp_const(double lo, double hi);

// Integral of exp(lambda) * lambda^k over [lo, hi] for 0 <= k <= 12.
// Short intervals use a shifted all-positive series, longer ones the
// polynomial antiderivative.
double integral_exp_monomial(double lo, double hi, int k);

// Result of the closed form exponentially weighted Gaussian integral.
// digits_lost estimates the decimal digits cancelled inside the erfc
// difference; degraded is set once that estimate crosses the threshold
// above, signalling that a quadrature route should be preferred.
struct GaussianIntegralResult {
  double value = 0.0;
  double digits_lost = 0.0;
  bool degraded = false;
};

// Integral of exp(lambda) * exp(-((lambda - center) / (gamma * width))^2)
// over [lo, hi] in closed form. Completing the square turns the integrand
// into a shifted Gaussian, so the value is an erfc difference evaluated in
// log space. All exponents in the evaluation are algebraically bounded by
// max(lo, hi), so the routine cannot overflow before the true value does.
GaussianIntegralResult integral_exp_gaussian_closed(double lo, double hi,
                                                    double center,
                                                    double gamma,
                                                    double width);

// Gauss-Legendre rule on [-1, 1]. Nodes are Newton-refined roots of the
// Legendre polynomial and rules are cached after first use; order must
// lie in [2, 128].
struct QuadratureRule {
  int order = 0;
  std::vector<double> nodes;
  std::vector<double> weights;
};

const QuadratureRule& gauss_legendre_rule(int order);

// Same integrand as integral_exp_gaussian_closed via an affine map onto
// the reference interval. Serves as the independent route for cross
// checking the closed form and as its fallback in the degraded regime.
double integral_exp_gaussian_quadrature(double lo, double hi, double center,
                                        double gamma, double width,
                                        const QuadratureRule& rule);

// Moment vector of the kernel basis over [lo, hi]: entry j is the
// exponentially weighted integral of the Gaussian centred at node j, and
// with the constant term enabled a trailing entry holds the integral of
// exp(lambda) itself. Entries whose closed form reports degradation are
// recomputed with the default quadrature rule.
Eigen::VectorXd build_integral_vector(const NodeSet& nodes, double lo,
                                      double hi, double gamma,
                                      bool include_constant = true);

}  // namespace rbf
