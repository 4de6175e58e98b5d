#pragma once

#include <Eigen/Dense>
#include <optional>

#include "rbf/basis.hpp"

namespace rbf {

// Which construction produced a coefficient vector. Recorded so sampler
// traces and fallback decisions can be audited after the fact.
enum class CoefficientProvenance { rbf_gaussian, adams, equal_weight, unipc };

const char* provenance_name(CoefficientProvenance provenance);

// Quadrature weights for one exponential integrator update on [lo, hi].
// values(j) multiplies the model evaluation stored at stencil node j, in
// the same most-recent-first order as the NodeSet. gamma is the kernel
// shape used to build them and is NaN for constructions without one.
struct CoefficientVector {
  Eigen::VectorXd values;
  double lo = 0.0;
  double hi = 0.0;
  CoefficientProvenance provenance = CoefficientProvenance::adams;
  double gamma = std::numeric_limits<double>::quiet_NaN();

  int p() const { return static_cast<int>(values.size()); }
};

// Gaussian kernel coefficients: solve the symmetric collocation system
// against the moment vector of the basis over [lo, hi]. With the constant
// term enabled the coefficients reproduce the plain exponential integral
// exactly, sum_j values(j) == integral_exp_const(lo, hi). Returns nullopt
// when the kernel system is singular at working precision, in which case
// the caller is expected to fall back to the polynomial construction.
std::optional<CoefficientVector> rbf_coefficients(const NodeSet& nodes,
                                                  double lo, double hi,
                                                  double gamma,
                                                  bool include_constant = true);

// Polynomial (Adams style) coefficients: moment matching against the
// monomial basis shifted to the interval start. This is the flat limit of
// the Gaussian construction as gamma tends to infinity.
CoefficientVector adams_coefficients(const NodeSet& nodes, double lo,
                                     double hi);

// Spike limit of the Gaussian construction as gamma tends to zero: every
// node receives an equal share of the total exponential mass.
CoefficientVector equal_coefficients(const NodeSet& nodes, double lo,
                                     double hi);

// Coefficients built the way the UniPC family writes them, from scaled
// node offsets r_j = (lambda_j - lo) / (hi - lo) and the incomplete
// exponential moments of the step. Algebraically identical to the Adams
// construction on the same stencil; kept as an independent cross check.
// Requires nodes.lambdas[0] == lo.
CoefficientVector unipc_coefficients(const NodeSet& nodes, double lo,
                                     double hi);

// Share of the total absolute mass carried by each coefficient. Entries
// lie in [0, 1] and sum to one; a flat profile means the update spreads
// its weight evenly across the stencil.
Eigen::VectorXd coefficient_magnitude_ratio(const CoefficientVector& coeffs);

}  // namespace rbf
