#include "rbf/coeffs.hpp"

#include <cmath>
#include <stdexcept>

#include "rbf/quadrature.hpp"

namespace rbf {
namespace {

// I(k) = Integral_0^1 exp(-h (1 - tau)) tau^k dtau expanded as
// exp(-h) * sum_n h^n / (n! (n + k + 1)). Every term is positive, which
// sidesteps the cancellation in the usual downward recurrence.
double incomplete_exp_moment(double h, int k) {
  double power = 1.0;
  double factorial = 1.0;
  double sum = 0.0;
  for (int n = 0; n < 500; ++n) {
    double term = power / (factorial * (n + k + 1));
    sum += term;
    if (term < sum * 1e-18) break;
    power *= h;
    factorial *= n + 1;
  }
  return std::exp(-h) * sum;
}

}  // namespace

const char* provenance_name(CoefficientProvenance provenance) {
  switch (provenance) {
    case CoefficientProvenance::rbf_gaussian: return "rbf";
    case CoefficientProvenance::adams: return "adams";
    case CoefficientProvenance::equal_weight: return "equal";
    case CoefficientProvenance::unipc: return "unipc";
  }
  return "unknown";
}

std::optional<CoefficientVector> rbf_coefficients(const NodeSet& nodes,
                                                  double lo, double hi,
                                                  double gamma,
                                                  bool include_constant) {
  KernelSystem system = build_kernel_system(nodes, gamma, include_constant);
  if (system.singular()) return std::nullopt;

  Eigen::VectorXd moments =
      build_integral_vector(nodes, lo, hi, gamma, include_constant);
  Eigen::VectorXd solved = system.phi.partialPivLu().solve(moments);

  CoefficientVector coeffs;
  coeffs.values = solved.head(nodes.p());
  coeffs.lo = lo;
  coeffs.hi = hi;
  coeffs.provenance = CoefficientProvenance::rbf_gaussian;
  coeffs.gamma = gamma;
  return coeffs;
}

CoefficientVector adams_coefficients(const NodeSet& nodes, double lo,
                                     double hi) {
  if (!(lo < hi)) {
    throw std::domain_error("integration interval must satisfy lo < hi");
  }
  int p = nodes.p();
  double H = hi - lo;

  // A single node carries the whole exponential mass; this is the Euler
  // (DDIM) update written as a one point quadrature.
  if (p == 1) {
    CoefficientVector euler;
    euler.values = Eigen::VectorXd::Constant(1, integral_exp_const(lo, hi));
    euler.lo = lo;
    euler.hi = hi;
    euler.provenance = CoefficientProvenance::adams;
    return euler;
  }

  // Moment matching in coordinates shifted to lo and scaled by the step,
  // which keeps the Vandermonde system well conditioned on the stencils
  // the sampler produces.
  Eigen::MatrixXd vander(p, p);
  Eigen::VectorXd rhs(p);
  double exp_lo = std::exp(lo);
  for (int k = 0; k < p; ++k) {
    for (int j = 0; j < p; ++j) {
      double u = (nodes.lambdas[j] - lo) / H;
      double u_power = 1.0;
      for (int i = 0; i < k; ++i) u_power *= u;
      vander(k, j) = u_power;
    }
    // Integral_lo^hi exp(l) ((l - lo)/H)^k dl reduces to the shifted
    // moment Integral_0^H exp(u) u^k du scaled by exp(lo) / H^k.
    rhs(k) = exp_lo * integral_exp_monomial(0.0, H, k);
    for (int i = 0; i < k; ++i) rhs(k) /= H;
  }

  CoefficientVector coeffs;
  coeffs.values = vander.partialPivLu().solve(rhs);
  coeffs.lo = lo;
  coeffs.hi = hi;
  coeffs.provenance = CoefficientProvenance::adams;
  return coeffs;
}

CoefficientVector equal_coefficients(const NodeSet& nodes, double lo,
                                     double hi) {
  int p = nodes.p();
  CoefficientVector coeffs;
  coeffs.values =
      Eigen::VectorXd::Constant(p, integral_exp_const(lo, hi) / p);
  coeffs.lo = lo;
  coeffs.hi = hi;
  coeffs.provenance = CoefficientProvenance::equal_weight;
  return coeffs;
}

CoefficientVector unipc_coefficients(const NodeSet& nodes, double lo,
                                     double hi) {
  if (!(lo < hi)) {
    throw std::domain_error("integration interval must satisfy lo < hi");
  }
  int p = nodes.p();
  double h = hi - lo;
  if (std::fabs(nodes.lambdas[0] - lo) >
      1e-9 * std::max({1.0, std::fabs(lo), h})) {
    throw std::invalid_argument(
        "unipc_coefficients expects the newest node at the interval start");
  }

  Eigen::VectorXd a(p);
  double I0 = incomplete_exp_moment(h, 0);
  if (p == 1) {
    a(0) = I0;
  } else {
    // Two stage solve in the scaled offsets r_j = (lambda_j - lo)/h with
    // r_0 = 0: rows k >= 1 decouple from a_0, and the k = 0 row then
    // fixes a_0 as the residual of the zeroth moment.
    Eigen::MatrixXd r_system(p - 1, p - 1);
    Eigen::VectorXd r_rhs(p - 1);
    for (int k = 1; k < p; ++k) {
      for (int m = 1; m < p; ++m) {
        double r = (nodes.lambdas[m] - lo) / h;
        double r_power = 1.0;
        for (int i = 0; i < k; ++i) r_power *= r;
        r_system(k - 1, m - 1) = r_power;
      }
      r_rhs(k - 1) = incomplete_exp_moment(h, k);
    }
    a.tail(p - 1) = r_system.partialPivLu().solve(r_rhs);
    a(0) = I0 - a.tail(p - 1).sum();
  }

  CoefficientVector coeffs;
  coeffs.values = std::exp(hi) * h * a;
  coeffs.lo = lo;
  coeffs.hi = hi;
  coeffs.provenance = CoefficientProvenance::unipc;
  return coeffs;
}

Eigen::VectorXd coefficient_magnitude_ratio(const CoefficientVector& coeffs) {
  Eigen::VectorXd magnitudes = coeffs.values.cwiseAbs();
  double total = magnitudes.sum();
  if (total <= 0.0) {
    return Eigen::VectorXd::Constant(coeffs.p(), 1.0 / coeffs.p());
  }
  return magnitudes / total;
}

}  // namespace rbf
