#include "rbf/quadrature.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "rbf/special_functions.hpp"

namespace rbf {
namespace {

void check_interval(double lo, double hi) {
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw std::domain_error("integration interval must satisfy lo < hi");
  }
}

// S(H, m) = Integral_0^H exp(u) u^m du as an all-positive series,
// sum_n H^(n+m+1) / (n! (n+m+1)). Every term is positive, so the sum
// carries no cancellation for any H > 0.
double exp_moment_series(double H, int m) {
  double power = 1.0;
  for (int i = 0; i <= m; ++i) power *= H;
  double factorial = 1.0;
  double sum = 0.0;
  for (int n = 0; n < 500; ++n) {
    double term = power / (factorial * (n + m + 1));
    sum += term;
    if (term < sum * 1e-18) break;
    power *= H;
    factorial *= n + 1;
  }
  return sum;
}

double binomial(int n, int k) {
  double value = 1.0;
  for (int i = 1; i <= k; ++i) value *= double(n - k + i) / double(i);
  return value;
}

}  // namespace

double integral_exp_const(double lo, double hi) {
  check_interval(lo, hi);
  return -std::exp(hi) * std::expm1(lo - hi);
}

double integral_exp_monomial(double lo, double hi, int k) {
  check_interval(lo, hi);
  if (k < 0 || k > kMaxMonomialDegree) {
    std::ostringstream msg;
    msg << "monomial degree " << k << " outside [0, " << kMaxMonomialDegree
        << "]";
    throw std::invalid_argument(msg.str());
  }
  if (k == 0) return integral_exp_const(lo, hi);

  double H = hi - lo;
  if (H <= 1.0) {
    // Shift to u = lambda - lo and expand (lo + u)^k, reducing the
    // integral to the stable moment series above.
    double sum = 0.0;
    double lo_power = 1.0;
    for (int m = k; m >= 0; --m) {
      sum += binomial(k, m) * lo_power * exp_moment_series(H, m);
      lo_power *= lo;
    }
    return std::exp(lo) * sum;
  }

  // Antiderivative exp(l) * sum_m (-1)^m k!/(k-m)! l^(k-m), evaluated at
  // both endpoints. The exp(hi) term dominates on wide intervals, so the
  // endpoint difference is benign there.
  auto antiderivative = [k](double l) {
    double falling = 1.0;
    double sum = 0.0;
    double sign = 1.0;
    for (int m = 0; m <= k; ++m) {
      double l_power = 1.0;
      for (int i = 0; i < k - m; ++i) l_power *= l;
      sum += sign * falling * l_power;
      falling *= k - m;
      sign = -sign;
    }
    return std::exp(l) * sum;
  };
  return antiderivative(hi) - antiderivative(lo);
}

GaussianIntegralResult integral_exp_gaussian_closed(double lo, double hi,
                                                    double center,
                                                    double gamma,
                                                    double width) {
  check_interval(lo, hi);
  if (!(gamma > 0.0) || !(width > 0.0)) {
    throw std::domain_error("gamma and width must be positive");
  }

  const double sqrt_pi = std::sqrt(std::numbers::pi);
  double s = gamma * width;

  // Completing the square: exp(l) exp(-((l-c)/s)^2) is a Gaussian with
  // mean mu = c + s^2/2 carrying mass (sqrt(pi) s / 2) exp(c + s^2/4).
  double mu = center + 0.5 * s * s;
  double a = (hi - mu) / s;
  double b = (lo - mu) / s;
  double mass_exponent = center + 0.25 * s * s;

  GaussianIntegralResult result;

  if (b >= 0.0) {
    // Interval lies in the right tail of the shifted Gaussian. Work with
    // log erfc so the difference of two nearby tails keeps its leading
    // digits: erfc(a) = erfc(b) * exp(delta) with delta <= 0.
    double delta = log_erfc(a) - log_erfc(b);
    double remainder = -std::expm1(delta);
    if (std::isnan(remainder)) remainder = 1.0;
    result.value = 0.5 * sqrt_pi * s * erfcx_approx(b) *
                   std::exp(mass_exponent - b * b) * remainder;
    result.digits_lost = remainder > 0.0
                             ? -std::log10(remainder)
                             : std::numeric_limits<double>::infinity();
  } else if (a <= 0.0) {
    // Left tail: reflect through erfc(x) = 2 - erfc(-x) and apply the
    // same log space difference on the mirrored arguments.
    double delta = log_erfc(-b) - log_erfc(-a);
    double remainder = -std::expm1(delta);
    if (std::isnan(remainder)) remainder = 1.0;
    result.value = 0.5 * sqrt_pi * s * erfcx_approx(-a) *
                   std::exp(mass_exponent - a * a) * remainder;
    result.digits_lost = remainder > 0.0
                             ? -std::log10(remainder)
                             : std::numeric_limits<double>::infinity();
  } else {
    // The mean lies inside the interval, so the erfc difference spans the
    // central region and subtracts nothing of comparable size.
    double diff = erfc_approx(b) - erfc_approx(a);
    result.value = 0.5 * sqrt_pi * s * std::exp(mass_exponent) * diff;
    double ratio = diff / erfc_approx(b);
    result.digits_lost = ratio > 0.0
                             ? std::max(0.0, -std::log10(ratio))
                             : std::numeric_limits<double>::infinity();
  }

  if (result.digits_lost < 0.0) result.digits_lost = 0.0;
  result.degraded = !(result.digits_lost <= kDegradedDigitsThreshold);
  return result;
}

namespace {

// Legendre polynomial value and derivative via the three term recurrence.
std::pair<double, double> legendre_with_derivative(int n, double x) {
  double p_prev = 1.0;
  double p = x;
  for (int k = 2; k <= n; ++k) {
    double p_next = ((2 * k - 1) * x * p - (k - 1) * p_prev) / k;
    p_prev = p;
    p = p_next;
  }
  double dp = n * (x * p - p_prev) / (x * x - 1.0);
  return {p, dp};
}

QuadratureRule compute_gauss_legendre(int order) {
  QuadratureRule rule;
  rule.order = order;
  rule.nodes.resize(order);
  rule.weights.resize(order);

  for (int i = 0; i < (order + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (order + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      auto [p, d] = legendre_with_derivative(order, x);
      dp = d;
      double step = p / d;
      x -= step;
      if (std::fabs(step) < 1e-15) {
        std::tie(p, dp) = legendre_with_derivative(order, x);
        break;
      }
    }
    double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.weights[i] = w;
    rule.nodes[order - 1 - i] = x;
    rule.weights[order - 1 - i] = w;
  }
  if (order % 2 == 1) {
    auto [p, dp] = legendre_with_derivative(order, 0.0);
    (void)p;
    rule.nodes[order / 2] = 0.0;
    rule.weights[order / 2] = 2.0 / (dp * dp);
  }
  return rule;
}

}  // namespace

const QuadratureRule& gauss_legendre_rule(int order) {
  if (order < 2 || order > 128) {
    throw std::invalid_argument("quadrature order must lie in [2, 128]");
  }
  static std::map<int, QuadratureRule> cache;
  static std::mutex mutex;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(order);
  if (it == cache.end()) {
    it = cache.emplace(order, compute_gauss_legendre(order)).first;
  }
  return it->second;
}

double integral_exp_gaussian_quadrature(double lo, double hi, double center,
                                        double gamma, double width,
                                        const QuadratureRule& rule) {
  check_interval(lo, hi);
  if (!(gamma > 0.0) || !(width > 0.0)) {
    throw std::domain_error("gamma and width must be positive");
  }
  double mid = 0.5 * (lo + hi);
  double half = 0.5 * (hi - lo);
  double s = gamma * width;
  double sum = 0.0;
  for (int i = 0; i < rule.order; ++i) {
    double lambda = mid + half * rule.nodes[i];
    double r = (lambda - center) / s;
    sum += rule.weights[i] * std::exp(lambda - r * r);
  }
  return half * sum;
}

Eigen::VectorXd build_integral_vector(const NodeSet& nodes, double lo,
                                      double hi, double gamma,
                                      bool include_constant) {
  check_interval(lo, hi);
  int p = nodes.p();
  Eigen::VectorXd result(include_constant ? p + 1 : p);
  for (int j = 0; j < p; ++j) {
    GaussianIntegralResult entry = integral_exp_gaussian_closed(
        lo, hi, nodes.lambdas[j], gamma, nodes.width_scale);
    if (entry.degraded) {
      result(j) = integral_exp_gaussian_quadrature(
          lo, hi, nodes.lambdas[j], gamma, nodes.width_scale,
          gauss_legendre_rule(kDefaultQuadratureOrder));
    } else {
      result(j) = entry.value;
    }
  }
  if (include_constant) {
    result(p) = integral_exp_const(lo, hi);
  }
  return result;
}

}  // namespace rbf
