#include "rbf/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <utility>

#include <json.hpp>

#include "rbf/basis.hpp"
#include "rbf/coeffs.hpp"
#include "rbf/quadrature.hpp"
#include "rbf/shapeopt.hpp"

namespace rbf {
namespace {

class ConstantModel : public ModelEvaluator {
 public:
  explicit ConstantModel(Eigen::VectorXd value)
      : ModelEvaluator(static_cast<int>(value.size())),
        value_(std::move(value)) {}

 private:
  Eigen::VectorXd evaluate(const Eigen::VectorXd&, double) override {
    return value_;
  }

  Eigen::VectorXd value_;
};

// Prediction is a polynomial in lambda per component; coefficient (d, k)
// multiplies lambda^k in component d.
class PolynomialModel : public ModelEvaluator {
 public:
  explicit PolynomialModel(Eigen::MatrixXd coefficients)
      : ModelEvaluator(static_cast<int>(coefficients.rows())),
        coefficients_(std::move(coefficients)) {}

 private:
  Eigen::VectorXd evaluate(const Eigen::VectorXd&, double lambda) override {
    Eigen::VectorXd value = Eigen::VectorXd::Zero(dimension());
    double power = 1.0;
    for (int k = 0; k < coefficients_.cols(); ++k) {
      value += power * coefficients_.col(k);
      power *= lambda;
    }
    return value;
  }

  Eigen::MatrixXd coefficients_;
};

class SinusoidModel : public ModelEvaluator {
 public:
  explicit SinusoidModel(double omega) : ModelEvaluator(1), omega_(omega) {}

 private:
  Eigen::VectorXd evaluate(const Eigen::VectorXd&, double lambda) override {
    return Eigen::VectorXd::Constant(1, std::sin(omega_ * lambda));
  }

  double omega_;
};

class AffineModel : public ModelEvaluator {
 public:
  AffineModel(Eigen::MatrixXd feedback, Eigen::VectorXd offset)
      : ModelEvaluator(static_cast<int>(offset.size())),
        feedback_(std::move(feedback)),
        offset_(std::move(offset)) {}

 private:
  Eigen::VectorXd evaluate(const Eigen::VectorXd& x, double) override {
    return feedback_ * x + offset_;
  }

  Eigen::MatrixXd feedback_;
  Eigen::VectorXd offset_;
};

std::string format_detail(const char* fmt, double a, double b = 0.0) {
  char buffer[160];
  std::snprintf(buffer, sizeof(buffer), fmt, a, b);
  return buffer;
}

}  // namespace

TestProblem constant_problem() {
  Eigen::VectorXd value(3);
  value << 1.25, -0.4, 0.8;

  TestProblem problem;
  problem.name = "constant";
  problem.description = "prediction fixed at a constant vector";
  problem.dimension = 3;
  problem.make_model = [value] {
    return std::make_unique<ConstantModel>(value);
  };
  problem.exact_final = [value](const TimeGrid& grid,
                                const Eigen::VectorXd& x_init) {
    double lambda0 = grid.lambdas.front();
    double lambda1 = grid.lambdas.back();
    double sigma0 = grid.sigmas.front();
    double sigma1 = grid.sigmas.back();
    return Eigen::VectorXd(sigma1 / sigma0 * x_init +
                           sigma1 * integral_exp_const(lambda0, lambda1) *
                               value);
  };
  return problem;
}

TestProblem polynomial_problem() {
  Eigen::MatrixXd coefficients(2, 3);
  coefficients << 0.4, -0.25, 0.1,
                 -0.2, 0.3, -0.05;

  TestProblem problem;
  problem.name = "polynomial";
  problem.description = "prediction quadratic in lambda per component";
  problem.dimension = 2;
  problem.make_model = [coefficients] {
    return std::make_unique<PolynomialModel>(coefficients);
  };
  problem.exact_final = [coefficients](const TimeGrid& grid,
                                       const Eigen::VectorXd& x_init) {
    double lambda0 = grid.lambdas.front();
    double lambda1 = grid.lambdas.back();
    double sigma0 = grid.sigmas.front();
    double sigma1 = grid.sigmas.back();
    Eigen::VectorXd accumulated = Eigen::VectorXd::Zero(coefficients.rows());
    for (int k = 0; k < coefficients.cols(); ++k) {
      accumulated +=
          integral_exp_monomial(lambda0, lambda1, k) * coefficients.col(k);
    }
    return Eigen::VectorXd(sigma1 / sigma0 * x_init + sigma1 * accumulated);
  };
  return problem;
}

TestProblem sinusoid_problem() {
  const double omega = 3.0;

  TestProblem problem;
  problem.name = "sinusoid";
  problem.description = "prediction sin(3 lambda)";
  problem.dimension = 1;
  problem.make_model = [omega] {
    return std::make_unique<SinusoidModel>(omega);
  };
  problem.exact_final = [omega](const TimeGrid& grid,
                                const Eigen::VectorXd& x_init) {
    double lambda0 = grid.lambdas.front();
    double lambda1 = grid.lambdas.back();
    double sigma0 = grid.sigmas.front();
    double sigma1 = grid.sigmas.back();
    auto antiderivative = [omega](double l) {
      return std::exp(l) * (std::sin(omega * l) - omega * std::cos(omega * l)) /
             (1.0 + omega * omega);
    };
    double mass = antiderivative(lambda1) - antiderivative(lambda0);
    return Eigen::VectorXd(sigma1 / sigma0 * x_init +
                           Eigen::VectorXd::Constant(1, sigma1 * mass));
  };
  return problem;
}

TestProblem linear_problem() {
  const int dim = 4;
  Eigen::MatrixXd feedback = -0.5 * Eigen::MatrixXd::Identity(dim, dim);
  Eigen::VectorXd offset = Eigen::VectorXd::Constant(dim, 0.3);

  TestProblem problem;
  problem.name = "linear";
  problem.description = "mild state feedback, rate -0.5";
  problem.dimension = dim;
  problem.make_model = [feedback, offset] {
    return std::make_unique<AffineModel>(feedback, offset);
  };
  return problem;
}

TestProblem stiff_problem() {
  Eigen::MatrixXd feedback(2, 2);
  feedback << -1.0, 0.0,
               0.5, -3.0;
  Eigen::VectorXd offset(2);
  offset << 0.2, -0.1;

  TestProblem problem;
  problem.name = "stiff";
  problem.description = "triangular state feedback, rates -1 and -3";
  problem.dimension = 2;
  problem.make_model = [feedback, offset] {
    return std::make_unique<AffineModel>(feedback, offset);
  };
  return problem;
}

std::vector<TestProblem> builtin_problems() {
  std::vector<TestProblem> problems;
  problems.push_back(constant_problem());
  problems.push_back(polynomial_problem());
  problems.push_back(sinusoid_problem());
  problems.push_back(linear_problem());
  problems.push_back(stiff_problem());
  return problems;
}

std::optional<TestProblem> find_problem(const std::string& name) {
  for (TestProblem& problem : builtin_problems()) {
    if (problem.name == name) return std::move(problem);
  }
  return std::nullopt;
}

Eigen::VectorXd default_start_state(const TestProblem& problem) {
  return Eigen::VectorXd::Ones(problem.dimension);
}

Eigen::VectorXd reference_solve(const TestProblem& problem,
                                const NoiseSchedule& schedule,
                                const Eigen::VectorXd& x_init,
                                long resolution) {
  if (resolution < 2) {
    throw std::invalid_argument("reference resolution too small");
  }
  double lambda0 = schedule.lambda_of_t(schedule.horizon());
  double lambda1 = schedule.lambda_of_t(schedule.t_min());

  // Explicit Euler on y = x / sigma, whose exact flow in lambda is
  // dy/dlambda = exp(lambda) * prediction(sigma y, lambda). First order
  // in 1/R, so one Richardson step cancels the leading error term.
  auto euler_chart = [&](long steps_count) {
    auto model = problem.make_model();
    double sigma0 = alpha_sigma_from_lambda(lambda0).second;
    Eigen::VectorXd y = x_init / sigma0;
    double h = (lambda1 - lambda0) / double(steps_count);
    for (long n = 0; n < steps_count; ++n) {
      double lambda = lambda0 + double(n) * h;
      double sigma = alpha_sigma_from_lambda(lambda).second;
      y += h * std::exp(lambda) * (*model)(sigma * y, lambda);
    }
    return Eigen::VectorXd(alpha_sigma_from_lambda(lambda1).second * y);
  };

  Eigen::VectorXd coarse = euler_chart(resolution);
  Eigen::VectorXd medium = euler_chart(2 * resolution);
  Eigen::VectorXd fine = euler_chart(4 * resolution);
  Eigen::VectorXd extrapolated_low = 2.0 * medium - coarse;
  Eigen::VectorXd extrapolated_high = 2.0 * fine - medium;

  double disagreement = (extrapolated_high - extrapolated_low).norm();
  double scale = std::max(1.0, extrapolated_high.norm());
  if (!(disagreement <= 1e-9 * scale)) {
    std::ostringstream msg;
    msg << "reference solve did not converge: extrapolations disagree by "
        << disagreement << " at resolution " << resolution;
    throw std::runtime_error(msg.str());
  }
  return extrapolated_high;
}

ConvergenceReport convergence_study(const TestProblem& problem,
                                    const NoiseSchedule& schedule,
                                    const SolverConfig& config,
                                    const std::vector<int>& step_counts,
                                    const Eigen::VectorXd& x_init,
                                    long reference_resolution) {
  if (step_counts.empty()) {
    throw std::invalid_argument("convergence study needs step counts");
  }

  ConvergenceReport report;
  report.problem = problem.name;
  report.method = solver_method_name(config.method);
  report.order = config.method == SolverMethod::euler ? 1 : config.order;

  Eigen::VectorXd exact;
  bool have_exact = false;
  if (!problem.has_closed_form()) {
    exact = reference_solve(problem, schedule, x_init, reference_resolution);
    have_exact = true;
  }

  for (int steps : step_counts) {
    TimeGrid grid =
        build_time_grid(schedule, steps, GridSpacing::uniform_lambda);
    if (!have_exact) {
      exact = problem.exact_final(grid, x_init);
    }
    auto model = problem.make_model();
    SampleResult run = sample(*model, grid, config, x_init);

    double scale = exact.norm();
    double error = (run.state - exact).norm() / (scale > 0.0 ? scale : 1.0);

    double h_max = 0.0;
    for (int i = 0; i < grid.steps(); ++i) {
      h_max = std::max(h_max, grid.step_width(i));
    }
    report.points.push_back(ConvergencePoint{steps, h_max, error});
  }

  // Slope of log error against log h over the three finest grids.
  int count = static_cast<int>(report.points.size());
  int fit = std::min(3, count);
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (int k = count - fit; k < count; ++k) {
    double x = std::log(report.points[k].h_max);
    double y = std::log(std::max(report.points[k].error, 1e-300));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  double denom = fit * sxx - sx * sx;
  report.slope = denom != 0.0 ? (fit * sxy - sx * sy) / denom : 0.0;
  return report;
}

void write_convergence_csv(const std::vector<ConvergenceReport>& reports,
                           std::ostream& out) {
  out << "problem,method,p,M,h_max,error,slope\n";
  out.precision(17);
  for (const ConvergenceReport& report : reports) {
    for (const ConvergencePoint& point : report.points) {
      out << report.problem << ',' << report.method << ',' << report.order
          << ',' << point.steps << ',' << point.h_max << ',' << point.error
          << ',' << report.slope << '\n';
    }
  }
}

int InvariantReport::failures() const {
  int count = 0;
  for (const InvariantCheck& check : checks) {
    if (!check.pass) ++count;
  }
  return count;
}

namespace {

struct FaultFlags {
  bool coefficient_sum = false;
  bool grid_monotone = false;
  bool route_agreement = false;
};

InvariantCheck check_schedule_lambda_monotone() {
  bool pass = true;
  double worst = 0.0;
  std::vector<NoiseSchedule> schedules;
  schedules.push_back(NoiseSchedule::vp_linear_logsnr());
  schedules.push_back(NoiseSchedule::vp_cosine());
  schedules.push_back(NoiseSchedule::custom_tabulated(
      {0.0, 0.2, 0.5, 0.8, 1.0}, {5.0, 2.4, -0.3, -3.1, -5.0}));
  for (const NoiseSchedule& schedule : schedules) {
    double t_lo = schedule.t_min();
    double previous = schedule.lambda_of_t(t_lo);
    for (int k = 1; k <= 64; ++k) {
      double t = t_lo + (schedule.horizon() - t_lo) * k / 64.0;
      double lambda = schedule.lambda_of_t(t);
      worst = std::max(worst, lambda - previous);
      if (!(lambda < previous)) pass = false;
      previous = lambda;
    }
  }
  return {"schedule", "lambda-monotone", pass,
          format_detail("largest upward move %.3e", worst)};
}

InvariantCheck check_schedule_roundtrip() {
  double worst = 0.0;
  std::vector<NoiseSchedule> schedules;
  schedules.push_back(NoiseSchedule::vp_linear_logsnr());
  schedules.push_back(NoiseSchedule::vp_cosine());
  schedules.push_back(NoiseSchedule::custom_tabulated(
      {0.0, 0.2, 0.5, 0.8, 1.0}, {5.0, 2.4, -0.3, -3.1, -5.0}));
  for (const NoiseSchedule& schedule : schedules) {
    for (int k = 0; k <= 40; ++k) {
      double t = schedule.t_min() +
                 (schedule.horizon() - schedule.t_min()) * k / 40.0;
      double roundtrip = schedule.t_of_lambda(schedule.lambda_of_t(t));
      worst = std::max(worst, std::fabs(roundtrip - t) / schedule.horizon());
    }
  }
  return {"schedule", "time-roundtrip", worst <= 1e-10,
          format_detail("worst relative roundtrip error %.3e", worst)};
}

InvariantCheck check_schedule_vp_identity() {
  double worst = 0.0;
  for (int k = 0; k <= 64; ++k) {
    double lambda = -8.0 + 16.0 * k / 64.0;
    auto [alpha, sigma] = alpha_sigma_from_lambda(lambda);
    worst = std::max(worst, std::fabs(alpha * alpha + sigma * sigma - 1.0));
  }
  return {"schedule", "vp-identity", worst <= 1e-14,
          format_detail("worst |alpha^2 + sigma^2 - 1| = %.3e", worst)};
}

InvariantCheck check_schedule_grid_monotone(bool fault) {
  bool pass = true;
  std::string detail = "times decrease, lambdas increase on all grids";
  struct Case {
    NoiseSchedule schedule;
    int steps;
    GridSpacing spacing;
  };
  std::vector<Case> cases;
  cases.push_back({NoiseSchedule::vp_linear_logsnr(), 17,
                   GridSpacing::uniform_lambda});
  cases.push_back({NoiseSchedule::vp_cosine(), 9, GridSpacing::uniform_time});
  cases.push_back({NoiseSchedule::custom_tabulated(
                       {0.0, 0.2, 0.5, 0.8, 1.0}, {5.0, 2.4, -0.3, -3.1, -5.0}),
                   7, GridSpacing::uniform_lambda});
  for (const Case& c : cases) {
    TimeGrid grid = build_time_grid(c.schedule, c.steps, c.spacing);
    if (fault && grid.steps() > 3) {
      std::swap(grid.lambdas[2], grid.lambdas[3]);
    }
    for (int i = 0; i < grid.steps(); ++i) {
      if (!(grid.times[i] > grid.times[i + 1]) ||
          !(grid.lambdas[i] < grid.lambdas[i + 1])) {
        pass = false;
        detail = format_detail("monotonicity broken at interval %g",
                               double(i));
      }
    }
  }
  return {"schedule", "grid-monotone", pass, detail};
}

InvariantCheck check_basis_kernel_symmetry() {
  NodeSet nodes = make_node_set({0.4, 0.1, -0.3, -0.9}, 0.5);
  KernelSystem system = build_kernel_system(nodes, 1.7, true);
  double worst = 0.0;
  int n = static_cast<int>(system.phi.rows());
  worst = std::max(worst, (system.phi - system.phi.transpose()).norm());
  for (int i = 0; i < n - 1; ++i) {
    worst = std::max(worst, std::fabs(system.phi(i, i) - 1.0));
    worst = std::max(worst, std::fabs(system.phi(i, n - 1) - 1.0));
  }
  worst = std::max(worst, std::fabs(system.phi(n - 1, n - 1)));
  return {"basis", "kernel-symmetry", worst == 0.0,
          format_detail("largest structural defect %.3e", worst)};
}

InvariantCheck check_basis_partition_of_unity() {
  NodeSet nodes = make_node_set({0.4, 0.1, -0.3, -0.9}, 0.5);
  KernelSystem system = build_kernel_system(nodes, 1.3, true);
  Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(nodes.p(), 1);
  RbfInterpolant interpolant =
      solve_interpolation_weights(system, nodes, ones);
  double worst = 0.0;
  for (int k = 0; k <= 50; ++k) {
    double lambda = -1.2 + 2.0 * k / 50.0;
    worst = std::max(worst,
                     std::fabs(evaluate_interpolant(interpolant, lambda)(0) -
                               1.0));
  }
  return {"basis", "partition-of-unity", worst <= 1e-12,
          format_detail("worst |interpolated 1 - 1| = %.3e", worst)};
}

InvariantCheck check_basis_lagrange_cardinal() {
  NodeSet nodes = make_node_set({0.6, 0.2, -0.1, -0.7}, 0.3);
  double worst = 0.0;
  for (int j = 0; j < nodes.p(); ++j) {
    for (int m = 0; m < nodes.p(); ++m) {
      double value = lagrange_basis(nodes, j, nodes.lambdas[m]);
      worst = std::max(worst, std::fabs(value - (j == m ? 1.0 : 0.0)));
    }
  }
  return {"basis", "lagrange-cardinal", worst <= 1e-12,
          format_detail("worst cardinality defect %.3e", worst)};
}

InvariantCheck check_quadrature_gl_weights() {
  const QuadratureRule& rule = gauss_legendre_rule(32);
  double weight_sum = 0.0;
  for (double w : rule.weights) weight_sum += w;
  double moment = 0.0;
  for (int i = 0; i < rule.order; ++i) {
    moment += rule.weights[i] * std::pow(rule.nodes[i], 62);
  }
  double weight_defect = std::fabs(weight_sum - 2.0);
  double moment_defect = std::fabs(moment - 2.0 / 63.0) / (2.0 / 63.0);
  bool pass = weight_defect <= 1e-14 && moment_defect <= 1e-12;
  return {"quadrature", "gl-rule", pass,
          format_detail("weight sum defect %.3e, degree 62 moment defect %.3e",
                        weight_defect, moment_defect)};
}

InvariantCheck check_quadrature_route_agreement(bool fault) {
  std::mt19937_64 rng(91);
  std::uniform_real_distribution<double> gamma_dist(0.1, 5.0);
  std::uniform_real_distribution<double> lo_dist(-3.0, 1.0);
  std::uniform_real_distribution<double> width_dist(0.1, 0.8);
  std::uniform_int_distribution<int> offset_dist(0, 3);

  const QuadratureRule& check_rule = gauss_legendre_rule(32);
  const QuadratureRule& scale_rule = gauss_legendre_rule(64);
  double worst = 0.0;
  bool pass = true;
  for (int trial = 0; trial < 100; ++trial) {
    double gamma = gamma_dist(rng);
    double lo = lo_dist(rng);
    double width = width_dist(rng);
    double hi = lo + width;
    double center = lo - offset_dist(rng) * width;

    GaussianIntegralResult closed =
        integral_exp_gaussian_closed(lo, hi, center, gamma, width);
    if (closed.degraded) continue;
    double closed_value = closed.value;

    double quad32 =
        integral_exp_gaussian_quadrature(lo, hi, center, gamma, width,
                                         check_rule);
    double quad64 =
        integral_exp_gaussian_quadrature(lo, hi, center, gamma, width,
                                         scale_rule);
    double scale = std::fabs(quad64);
    if (scale < 1e-30 * integral_exp_const(lo, hi)) continue;

    if (fault) {
      closed_value *= 1.0 + 1e-8;
      fault = false;
    }

    double defect = std::fabs(closed_value - quad32) / scale;
    worst = std::max(worst, defect);
    if (!(defect <= 1e-10)) pass = false;
  }
  return {"quadrature", "route-agreement", pass,
          format_detail("worst closed-form vs quadrature defect %.3e", worst)};
}

InvariantCheck check_quadrature_monomial_routes() {
  const QuadratureRule& rule = gauss_legendre_rule(64);
  double worst = 0.0;
  std::vector<std::pair<double, double>> intervals = {
      {-2.0, -1.2}, {-0.5, 0.45}, {-3.0, -0.5}, {0.2, 1.9}};
  for (auto [lo, hi] : intervals) {
    for (int k = 0; k <= 6; ++k) {
      double closed = integral_exp_monomial(lo, hi, k);
      double mid = 0.5 * (lo + hi);
      double half = 0.5 * (hi - lo);
      double quad = 0.0;
      for (int i = 0; i < rule.order; ++i) {
        double lambda = mid + half * rule.nodes[i];
        quad += rule.weights[i] * std::exp(lambda) * std::pow(lambda, k);
      }
      quad *= half;
      worst = std::max(worst, std::fabs(closed - quad) /
                                  std::max(1e-30, std::fabs(quad)));
    }
  }
  return {"quadrature", "monomial-routes", worst <= 1e-12,
          format_detail("worst relative route disagreement %.3e", worst)};
}

InvariantCheck check_coeffs_summation(bool fault) {
  std::mt19937_64 rng(137);
  std::uniform_real_distribution<double> base_dist(-4.0, 1.0);
  std::uniform_real_distribution<double> gap_dist(0.05, 0.6);
  std::uniform_real_distribution<double> log_gamma_dist(-2.0, 2.0);
  std::uniform_int_distribution<int> order_dist(1, 5);

  double worst = 0.0;
  bool pass = true;
  for (int trial = 0; trial < 40; ++trial) {
    int p = order_dist(rng);
    double lo = base_dist(rng);
    double h = gap_dist(rng);
    std::vector<double> lambdas;
    double node = lo;
    for (int j = 0; j < p; ++j) {
      lambdas.push_back(node);
      node -= gap_dist(rng);
    }
    NodeSet nodes = make_node_set(lambdas, h);
    double gamma = std::pow(10.0, log_gamma_dist(rng));
    auto coeffs = rbf_coefficients(nodes, lo, lo + h, gamma);
    if (!coeffs) continue;

    Eigen::VectorXd values = coeffs->values;
    if (fault) {
      values(0) += 1e-6;
      fault = false;
    }

    double mass = integral_exp_const(lo, lo + h);
    double defect = std::fabs(values.sum() - mass) / mass;
    worst = std::max(worst, defect);
    if (!(defect <= 1e-10)) pass = false;
  }
  return {"coeffs", "summation", pass,
          format_detail("worst relative sum defect %.3e", worst)};
}

InvariantCheck check_coeffs_euler_limit() {
  double lo = -1.3;
  double hi = -0.85;
  NodeSet nodes = make_node_set({lo}, hi - lo);
  double euler = integral_exp_const(lo, hi);

  CoefficientVector adams = adams_coefficients(nodes, lo, hi);
  bool adams_exact = adams.values(0) == euler;

  auto rbf = rbf_coefficients(nodes, lo, hi, 1.0);
  double rbf_defect =
      rbf ? std::fabs(rbf->values(0) - euler) / euler : 1.0;

  bool pass = adams_exact && rbf_defect <= 1e-14;
  return {"coeffs", "euler-limit", pass,
          format_detail("one point rule matches exp integral to %.3e rel",
                        rbf_defect)};
}

InvariantCheck check_coeffs_adams_limit() {
  NodeSet nodes = make_node_set({-3.0, -3.1, -3.2}, 0.1);
  double lo = -3.0;
  double hi = -2.9;
  CoefficientVector adams = adams_coefficients(nodes, lo, hi);

  double previous = std::numeric_limits<double>::infinity();
  bool monotone = true;
  double last_gap = 0.0;
  for (double gamma : {1.0, 3.0, 10.0, 30.0, 100.0}) {
    auto coeffs = rbf_coefficients(nodes, lo, hi, gamma);
    if (!coeffs) return {"coeffs", "adams-limit", false, "kernel singular"};
    double gap = (coeffs->values - adams.values).lpNorm<Eigen::Infinity>();
    if (!(gap < previous)) monotone = false;
    previous = gap;
    last_gap = gap;
  }
  bool pass = monotone && last_gap < 2e-3;
  return {"coeffs", "adams-limit", pass,
          format_detail("gap to polynomial weights at gamma=100: %.3e",
                        last_gap)};
}

InvariantCheck check_coeffs_equal_limit() {
  NodeSet nodes = make_node_set({-3.0, -3.1, -3.2}, 0.1);
  double lo = -3.0;
  double hi = -2.9;
  CoefficientVector equal = equal_coefficients(nodes, lo, hi);
  auto coeffs = rbf_coefficients(nodes, lo, hi, 1e-3);
  if (!coeffs) return {"coeffs", "equal-limit", false, "kernel singular"};
  double gap = (coeffs->values - equal.values).lpNorm<Eigen::Infinity>();
  return {"coeffs", "equal-limit", gap < 1e-5,
          format_detail("gap to equal weights at gamma=1e-3: %.3e", gap)};
}

InvariantCheck check_coeffs_unipc_match() {
  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> base_dist(-4.0, 1.0);
  std::uniform_real_distribution<double> gap_dist(0.05, 0.6);
  std::uniform_int_distribution<int> order_dist(1, 4);

  double worst = 0.0;
  bool pass = true;
  for (int trial = 0; trial < 10; ++trial) {
    int p = order_dist(rng);
    double lo = base_dist(rng);
    std::vector<double> lambdas;
    double node = lo;
    for (int j = 0; j < p; ++j) {
      lambdas.push_back(node);
      node -= gap_dist(rng);
    }
    NodeSet nodes = make_node_set(lambdas, gap_dist(rng));
    double hi = lo + gap_dist(rng);

    CoefficientVector adams = adams_coefficients(nodes, lo, hi);
    CoefficientVector unipc = unipc_coefficients(nodes, lo, hi);
    double scale = std::max(1.0, adams.values.lpNorm<Eigen::Infinity>());
    double gap =
        (adams.values - unipc.values).lpNorm<Eigen::Infinity>() / scale;
    worst = std::max(worst, gap);
    if (!(gap <= 1e-10)) pass = false;
  }
  return {"coeffs", "predictor-equivalence", pass,
          format_detail("worst gap between equivalent derivations %.3e",
                        worst)};
}

InvariantCheck check_sampler_nfe_budget() {
  TestProblem problem = constant_problem();
  NoiseSchedule schedule = NoiseSchedule::vp_linear_logsnr();
  TimeGrid grid = build_time_grid(schedule, 7, GridSpacing::uniform_lambda);
  auto model = problem.make_model();
  SolverConfig config;
  config.order = 3;
  SampleResult result =
      sample(*model, grid, config, default_start_state(problem));
  bool pass = result.evaluations == 7 && model->evaluation_count() == 7;
  return {"sampler", "evaluation-budget", pass,
          format_detail("used %g evaluations for 7 steps",
                        double(result.evaluations))};
}

InvariantCheck check_sampler_constant_exact() {
  TestProblem problem = constant_problem();
  NoiseSchedule schedule = NoiseSchedule::vp_linear_logsnr();
  Eigen::VectorXd x_init = default_start_state(problem);
  double worst = 0.0;
  for (int steps : {1, 5, 20}) {
    TimeGrid grid =
        build_time_grid(schedule, steps, GridSpacing::uniform_lambda);
    auto model = problem.make_model();
    SolverConfig config;
    config.order = 3;
    SampleResult result = sample(*model, grid, config, x_init);
    Eigen::VectorXd exact = problem.exact_final(grid, x_init);
    worst = std::max(worst,
                     (result.state - exact).norm() / exact.norm());
  }
  return {"sampler", "constant-exact", worst <= 1e-10,
          format_detail("worst relative error on constant data %.3e", worst)};
}

InvariantCheck check_sampler_trace_shape() {
  TestProblem problem = linear_problem();
  NoiseSchedule schedule = NoiseSchedule::vp_linear_logsnr();
  const int steps = 6;
  TimeGrid grid =
      build_time_grid(schedule, steps, GridSpacing::uniform_lambda);
  auto model = problem.make_model();
  SolverConfig config;
  config.order = 3;
  config.record_trace = true;
  SampleResult result =
      sample(*model, grid, config, default_start_state(problem));

  bool pass = static_cast<int>(result.trace.size()) == steps;
  for (int i = 0; i < static_cast<int>(result.trace.size()); ++i) {
    const StepRecord& record = result.trace[i];
    if (record.index != i) pass = false;
    if (!std::isfinite(record.x_norm)) pass = false;
    std::size_t expected_p = std::size_t(std::min(config.order, i + 1));
    if (record.coefficients.size() != expected_p) pass = false;
    if (record.magnitude_ratio.size() != expected_p) pass = false;
    double share_sum = 0.0;
    for (double share : record.magnitude_ratio) {
      share_sum += share;
      if (!(share >= 0.0 && share <= 1.0)) pass = false;
    }
    if (std::fabs(share_sum - 1.0) > 1e-12) pass = false;
  }
  return {"sampler", "trace-shape", pass,
          format_detail("%g trace rows for %g steps",
                        double(result.trace.size()), double(steps))};
}

struct ShapeoptCheckBundle {
  InvariantCheck candidate_count;
  InvariantCheck never_worse;
  InvariantCheck evaluation_budget;
};

ShapeoptCheckBundle check_shapeopt_bundle() {
  TestProblem problem = linear_problem();
  NoiseSchedule schedule = NoiseSchedule::vp_linear_logsnr();
  const int steps = 4;
  TimeGrid grid =
      build_time_grid(schedule, steps, GridSpacing::uniform_lambda);

  SolverConfig config;
  config.order = 3;

  SearchSpec spec;
  auto model = problem.make_model();
  std::vector<TargetPair> targets =
      generate_target_pairs(*model, schedule, 400, 2, 7);
  model->reset_evaluation_count();
  OptimizeResult result =
      optimize_shape_parameters(*model, grid, config, spec, targets);

  long expected_pairs =
      static_cast<long>(spec.resolution) * spec.resolution;
  bool count_pass = !result.steps.empty();
  for (const StepSearchRecord& record : result.steps) {
    if (record.pairs_evaluated != expected_pairs) count_pass = false;
  }
  InvariantCheck candidate_count{
      "shapeopt", "candidate-count", count_pass,
      format_detail("each searched step scored %g candidate pairs",
                    double(expected_pairs))};

  bool worse_pass = true;
  double worst_margin = 0.0;
  for (const StepSearchRecord& record : result.steps) {
    double margin = record.best_loss - record.adams_loss;
    worst_margin = std::max(worst_margin, margin);
    if (!(record.best_loss <=
          record.adams_loss + 1e-12 * (1.0 + record.adams_loss))) {
      worse_pass = false;
    }
  }
  InvariantCheck never_worse{
      "shapeopt", "never-worse-than-polynomial", worse_pass,
      format_detail("worst loss margin over polynomial weights %.3e",
                    worst_margin)};

  long expected_evals = 2L * steps;
  bool budget_pass = result.model_evaluations == expected_evals &&
                     model->evaluation_count() == expected_evals;
  InvariantCheck budget{
      "shapeopt", "evaluation-budget", budget_pass,
      format_detail("search used %g evaluations, budget %g",
                    double(result.model_evaluations),
                    double(expected_evals))};

  return {candidate_count, never_worse, budget};
}

InvariantCheck check_harness_reference_consistency() {
  TestProblem problem = linear_problem();
  NoiseSchedule schedule = NoiseSchedule::vp_linear_logsnr();
  Eigen::VectorXd x_init = default_start_state(problem);
  Eigen::VectorXd coarse = reference_solve(problem, schedule, x_init, 2000);
  Eigen::VectorXd fine = reference_solve(problem, schedule, x_init, 4000);
  double gap = (coarse - fine).norm() / std::max(1.0, fine.norm());
  return {"harness", "reference-consistency", gap <= 1e-9,
          format_detail("extrapolated references differ by %.3e", gap)};
}

}  // namespace

InvariantReport run_invariant_suite(const InvariantOptions& options) {
  FaultFlags faults;
  if (!options.inject_fault.empty()) {
    if (options.inject_fault == "coefficient-sum") {
      faults.coefficient_sum = true;
    } else if (options.inject_fault == "grid-monotone") {
      faults.grid_monotone = true;
    } else if (options.inject_fault == "route-agreement") {
      faults.route_agreement = true;
    } else {
      throw std::invalid_argument("unknown fault name: " +
                                  options.inject_fault);
    }
  }

  InvariantReport report;
  auto add = [&](InvariantCheck check) {
    if (!options.only_module.empty() && check.module != options.only_module) {
      return;
    }
    report.checks.push_back(std::move(check));
  };

  bool want_shapeopt =
      options.only_module.empty() || options.only_module == "shapeopt";

  add(check_schedule_lambda_monotone());
  add(check_schedule_roundtrip());
  add(check_schedule_vp_identity());
  add(check_schedule_grid_monotone(faults.grid_monotone));
  add(check_basis_kernel_symmetry());
  add(check_basis_partition_of_unity());
  add(check_basis_lagrange_cardinal());
  add(check_quadrature_gl_weights());
  add(check_quadrature_route_agreement(faults.route_agreement));
  add(check_quadrature_monomial_routes());
  add(check_coeffs_summation(faults.coefficient_sum));
  add(check_coeffs_euler_limit());
  add(check_coeffs_adams_limit());
  add(check_coeffs_equal_limit());
  add(check_coeffs_unipc_match());
  add(check_sampler_nfe_budget());
  add(check_sampler_constant_exact());
  add(check_sampler_trace_shape());
  if (want_shapeopt) {
    ShapeoptCheckBundle bundle = check_shapeopt_bundle();
    add(bundle.candidate_count);
    add(bundle.never_worse);
    add(bundle.evaluation_budget);
  }
  add(check_harness_reference_consistency());
  return report;
}

std::string invariant_report_json(const InvariantReport& report) {
  nlohmann::json root;
  root["failures"] = report.failures();
  nlohmann::json checks = nlohmann::json::array();
  for (const InvariantCheck& check : report.checks) {
    nlohmann::json row;
    row["module"] = check.module;
    row["name"] = check.name;
    row["pass"] = check.pass;
    row["detail"] = check.detail;
    checks.push_back(std::move(row));
  }
  root["checks"] = std::move(checks);
  return root.dump(2);
}

}  // namespace rbf
