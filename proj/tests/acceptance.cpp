// Acceptance suite: one behavior per check, one printed line per check,
// exit code equal to the number of failures. Tolerances are pinned next
// to each check.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rbf/coeffs.hpp"
#include "rbf/harness.hpp"
#include "rbf/quadrature.hpp"
#include "rbf/sampler.hpp"
#include "rbf/schedule.hpp"
#include "rbf/shapeopt.hpp"

namespace {

struct CheckResult {
  bool pass = false;
  std::string detail;
};

std::string sci(double value) {
  std::ostringstream out;
  out << std::scientific << std::setprecision(2) << value;
  return out.str();
}

// Weights of the three point history construction on nodes 0, -0.1, -0.2
// over [0, 0.1] have the closed form (78e - 86, 180 - 163e, 86e - 95)
// with e = exp(0.1). Also times the construction, which sits on the
// sampler's per-step hot path.
CheckResult golden_three_point_weights() {
  const double kTol = 1e-10;
  const double kBudgetMicros = 1000.0;
  const int kRepeats = 2000;

  rbf::NodeSet nodes = rbf::make_node_set({0.0, -0.1, -0.2}, 0.1);
  const double e = std::exp(0.1);
  Eigen::Vector3d expected(78.0 * e - 86.0, 180.0 - 163.0 * e,
                           86.0 * e - 95.0);

  rbf::CoefficientVector coeffs = rbf::adams_coefficients(nodes, 0.0, 0.1);
  double err = (coeffs.values - expected).cwiseAbs().maxCoeff();

  double sink = 0.0;
  auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < kRepeats; ++r) {
    sink += rbf::adams_coefficients(nodes, 0.0, 0.1).values(0);
  }
  auto t1 = std::chrono::steady_clock::now();
  double mean_micros =
      std::chrono::duration<double, std::micro>(t1 - t0).count() / kRepeats;

  CheckResult result;
  result.pass = err <= kTol && mean_micros < kBudgetMicros &&
                std::isfinite(sink);
  result.detail = "max|dc|=" + sci(err) + " build=" + sci(mean_micros) + "us";
  return result;
}

// Every kernel coefficient vector sums to the exponential mass of its
// step, across random stencils, intervals, and shapes. Singular kernel
// systems are allowed to bow out; most draws must survive.
CheckResult coefficient_summation_condition() {
  const double kTol = 1e-10;
  const int kCases = 200;
  const int kMinValid = 150;

  std::mt19937_64 rng(271828);
  std::uniform_int_distribution<int> pick_p(1, 5);
  std::uniform_real_distribution<double> pick_lambda0(-4.0, 2.0);
  std::uniform_real_distribution<double> pick_gap(0.05, 0.8);
  std::uniform_real_distribution<double> pick_log_gamma(-2.0, 2.0);

  int valid = 0;
  double worst = 0.0;
  for (int n = 0; n < kCases; ++n) {
    int p = pick_p(rng);
    std::vector<double> lambdas(1, pick_lambda0(rng));
    for (int j = 1; j < p; ++j) {
      lambdas.push_back(lambdas.back() - pick_gap(rng));
    }
    rbf::NodeSet nodes = rbf::make_node_set(lambdas, pick_gap(rng));
    double lo = lambdas[0];
    double hi = lo + pick_gap(rng);
    double gamma = std::exp(pick_log_gamma(rng));

    auto coeffs = rbf::rbf_coefficients(nodes, lo, hi, gamma);
    if (!coeffs) continue;
    double mass = rbf::integral_exp_const(lo, hi);
    worst = std::max(worst, std::abs(coeffs->values.sum() - mass) / mass);
    ++valid;
  }

  CheckResult result;
  result.pass = worst <= kTol && valid >= kMinValid;
  result.detail =
      "worst rel=" + sci(worst) + " valid=" + std::to_string(valid);
  return result;
}

// Widening the kernel walks the coefficients monotonically onto the
// polynomial ones; shrinking it collapses them onto the equal split.
CheckResult flat_and_spike_limits() {
  const double kAdamsTol = 2e-3;
  const double kEqualTol = 1e-5;
  const double kSpikeGamma = 1e-3;
  const double kGammas[] = {1.0, 3.0, 10.0, 30.0, 100.0};

  const double lo = -3.0;
  const double hi = -2.9;
  const double step = 0.1;

  bool pass = true;
  double worst_adams = 0.0;
  double worst_equal = 0.0;
  for (int p : {2, 3}) {
    std::vector<double> lambdas;
    for (int j = 0; j < p; ++j) lambdas.push_back(lo - j * step);
    rbf::NodeSet nodes = rbf::make_node_set(lambdas, step);

    rbf::CoefficientVector adams = rbf::adams_coefficients(nodes, lo, hi);
    rbf::CoefficientVector equal = rbf::equal_coefficients(nodes, lo, hi);

    double previous = std::numeric_limits<double>::infinity();
    double gap = previous;
    for (double gamma : kGammas) {
      auto coeffs = rbf::rbf_coefficients(nodes, lo, hi, gamma);
      if (!coeffs) {
        pass = false;
        break;
      }
      gap = (coeffs->values - adams.values).lpNorm<Eigen::Infinity>();
      if (!(gap < previous)) pass = false;
      previous = gap;
    }
    if (!(gap < kAdamsTol)) pass = false;
    worst_adams = std::max(worst_adams, gap);

    auto spike = rbf::rbf_coefficients(nodes, lo, hi, kSpikeGamma);
    if (!spike) {
      pass = false;
      continue;
    }
    double equal_gap =
        (spike->values - equal.values).lpNorm<Eigen::Infinity>();
    if (!(equal_gap < kEqualTol)) pass = false;
    worst_equal = std::max(worst_equal, equal_gap);
  }

  CheckResult result;
  result.pass = pass;
  result.detail =
      "adams gap=" + sci(worst_adams) + " equal gap=" + sci(worst_equal);
  return result;
}

// Affine model with a cosine forcing term, so a solver that evaluated at
// the wrong state or the wrong lambda could not match by accident.
class ForcedAffineModel final : public rbf::ModelEvaluator {
 public:
  ForcedAffineModel(Eigen::MatrixXd a, Eigen::VectorXd b)
      : rbf::ModelEvaluator(static_cast<int>(b.size())),
        a_(std::move(a)),
        b_(std::move(b)) {}

 private:
  Eigen::VectorXd evaluate(const Eigen::VectorXd& x, double lambda) override {
    return a_ * x + std::cos(lambda) * b_;
  }

  Eigen::MatrixXd a_;
  Eigen::VectorXd b_;
};

// The single history point path must coincide bit for bit with a plain
// Euler loop written independently of the sampler.
CheckResult first_order_path_matches_euler() {
  const int kCases = 10;

  std::mt19937_64 rng(424242);
  std::uniform_int_distribution<int> pick_dim(1, 4);
  std::uniform_int_distribution<int> pick_steps(5, 14);
  std::normal_distribution<double> gauss(0.0, 1.0);

  rbf::NoiseSchedule schedule = rbf::NoiseSchedule::vp_linear_logsnr();

  rbf::SolverConfig config;
  config.method = rbf::SolverMethod::euler;
  config.order = 1;
  config.use_corrector = false;

  bool identical = true;
  double worst = 0.0;
  for (int n = 0; n < kCases; ++n) {
    int dim = pick_dim(rng);
    Eigen::MatrixXd a(dim, dim);
    for (int r = 0; r < dim; ++r) {
      for (int c = 0; c < dim; ++c) a(r, c) = 0.5 * gauss(rng) / dim;
    }
    Eigen::VectorXd b(dim);
    for (int r = 0; r < dim; ++r) b(r) = gauss(rng);
    Eigen::VectorXd x_init(dim);
    for (int r = 0; r < dim; ++r) x_init(r) = gauss(rng);

    rbf::TimeGrid grid = rbf::build_time_grid(schedule, pick_steps(rng));
    ForcedAffineModel model(a, b);
    Eigen::VectorXd sampled = rbf::sample(model, grid, config, x_init).state;

    Eigen::VectorXd x = x_init;
    for (int i = 0; i < grid.steps(); ++i) {
      Eigen::VectorXd v = model(x, grid.lambdas[i]);
      double weight =
          rbf::integral_exp_const(grid.lambdas[i], grid.lambdas[i + 1]);
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(dim);
      acc += weight * v;
      double sigma_ratio = grid.sigmas[i + 1] / grid.sigmas[i];
      x = sigma_ratio * x + grid.sigmas[i + 1] * acc;
    }

    if (!sampled.cwiseEqual(x).all()) identical = false;
    worst = std::max(worst, (sampled - x).cwiseAbs().maxCoeff());
  }

  CheckResult result;
  result.pass = identical;
  result.detail = "max|dx|=" + sci(worst) + " over " +
                  std::to_string(kCases) + " trajectories";
  return result;
}

// Closed form and 32 point quadrature agree on random exponentially
// weighted Gaussian integrals. Draws whose value is below 1e-30 of the
// step's exponential mass are redrawn: both routes underflow there and
// the comparison would be noise over noise. Degraded closed forms are
// skipped, matching how the moment assembly routes them to quadrature.
CheckResult gaussian_integral_route_agreement() {
  const double kTol = 1e-10;
  const int kCases = 500;
  const int kMinChecked = 400;
  const double kFloor = 1e-30;

  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> pick_gamma(0.05, 20.0);
  std::uniform_real_distribution<double> pick_lo(-4.0, 2.0);
  std::uniform_real_distribution<double> pick_h(0.05, 1.0);
  std::uniform_int_distribution<int> pick_offset(0, 3);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  const rbf::QuadratureRule& rule32 = rbf::gauss_legendre_rule(32);
  const rbf::QuadratureRule& rule64 = rbf::gauss_legendre_rule(64);

  int checked = 0;
  double worst = 0.0;
  for (int n = 0; n < kCases; ++n) {
    double gamma = 0.0, lo = 0.0, hi = 0.0, h = 0.0, center = 0.0;
    double reference = 0.0;
    for (;;) {
      gamma = pick_gamma(rng);
      lo = pick_lo(rng);
      h = pick_h(rng);
      hi = lo + h;
      int offset = pick_offset(rng);
      center = lo - offset * h;
      if (offset == 0 && coin(rng) < 0.25) center = hi;
      reference =
          rbf::integral_exp_gaussian_quadrature(lo, hi, center, gamma, h,
                                                rule64);
      if (std::abs(reference) >= kFloor * rbf::integral_exp_const(lo, hi)) {
        break;
      }
    }

    rbf::GaussianIntegralResult closed =
        rbf::integral_exp_gaussian_closed(lo, hi, center, gamma, h);
    if (closed.degraded) continue;
    double gl32 = rbf::integral_exp_gaussian_quadrature(lo, hi, center,
                                                        gamma, h, rule32);
    worst = std::max(worst,
                     std::abs(closed.value - gl32) / std::abs(reference));
    ++checked;
  }

  CheckResult result;
  result.pass = worst <= kTol && checked >= kMinChecked;
  result.detail =
      "worst rel=" + sci(worst) + " checked=" + std::to_string(checked);
  return result;
}

// A constant prediction is integrated exactly by every construction at
// every step count, because each one reproduces the exponential mass.
CheckResult constant_model_sampled_exactly() {
  const double kTol = 1e-10;

  rbf::TestProblem problem = rbf::constant_problem();
  rbf::NoiseSchedule schedule = rbf::NoiseSchedule::vp_linear_logsnr();
  Eigen::VectorXd x_init = rbf::default_start_state(problem);

  double worst = 0.0;
  for (rbf::SolverMethod method :
       {rbf::SolverMethod::rbf, rbf::SolverMethod::adams,
        rbf::SolverMethod::equal, rbf::SolverMethod::euler}) {
    for (int steps : {1, 5, 20}) {
      rbf::TimeGrid grid = rbf::build_time_grid(schedule, steps);
      rbf::SolverConfig config;
      config.method = method;
      config.order = 3;
      auto model = problem.make_model();
      Eigen::VectorXd state = rbf::sample(*model, grid, config, x_init).state;
      Eigen::VectorXd exact = problem.exact_final(grid, x_init);
      double error =
          (state - exact).norm() / std::max(1.0, exact.norm());
      worst = std::max(worst, error);
    }
  }

  CheckResult result;
  result.pass = worst <= kTol;
  result.detail = "worst rel error=" + sci(worst);
  return result;
}

// Refining the grid on the oscillatory problem recovers the expected
// order for stencil sizes one through three.
CheckResult empirical_convergence_order() {
  const double kSlopeFloor[] = {0.7, 1.7, 2.7};

  rbf::TestProblem problem = rbf::sinusoid_problem();
  rbf::NoiseSchedule schedule = rbf::NoiseSchedule::vp_linear_logsnr();
  Eigen::VectorXd x_init = rbf::default_start_state(problem);

  bool pass = true;
  std::string slopes;
  for (int p = 1; p <= 3; ++p) {
    rbf::SolverConfig config;
    config.method = rbf::SolverMethod::adams;
    config.order = p;
    config.use_corrector = false;
    rbf::ConvergenceReport report = rbf::convergence_study(
        problem, schedule, config, {10, 20, 40, 80, 160}, x_init);
    if (!(report.slope >= kSlopeFloor[p - 1])) pass = false;
    if (!slopes.empty()) slopes += "/";
    slopes += sci(report.slope);
  }

  CheckResult result;
  result.pass = pass;
  result.detail = "slopes=" + slopes;
  return result;
}

// The scaled offset construction used by the UniPC family lands on the
// polynomial coefficients on every random stencil.
CheckResult unipc_construction_matches_adams() {
  const double kTol = 1e-10;
  const int kCases = 50;

  std::mt19937_64 rng(31415);
  std::uniform_int_distribution<int> pick_p(1, 4);
  std::uniform_real_distribution<double> pick_lo(-4.0, 2.0);
  std::uniform_real_distribution<double> pick_gap(0.05, 0.8);

  double worst = 0.0;
  for (int n = 0; n < kCases; ++n) {
    int p = pick_p(rng);
    double lo = pick_lo(rng);
    std::vector<double> lambdas(1, lo);
    for (int j = 1; j < p; ++j) {
      lambdas.push_back(lambdas.back() - pick_gap(rng));
    }
    double h = pick_gap(rng);
    rbf::NodeSet nodes = rbf::make_node_set(lambdas, h);

    rbf::CoefficientVector adams = rbf::adams_coefficients(nodes, lo, lo + h);
    rbf::CoefficientVector unipc = rbf::unipc_coefficients(nodes, lo, lo + h);
    double scale = std::max(1.0, adams.values.lpNorm<Eigen::Infinity>());
    worst = std::max(worst, (adams.values - unipc.values)
                                    .lpNorm<Eigen::Infinity>() /
                                scale);
  }

  CheckResult result;
  result.pass = worst <= kTol;
  result.detail = "worst rel=" + sci(worst);
  return result;
}

// The per-step search always scores the polynomial fallback among its
// candidates, so the chosen pair can never lose to it on the training
// batch, and a full run under the optimized schedule must land at least
// as close to the forward diffused targets as the pure polynomial run.
CheckResult optimized_schedule_never_loses() {
  const int kBatch = 4;
  const int kReferenceSteps = 400;

  rbf::TestProblem problem = rbf::linear_problem();
  rbf::NoiseSchedule schedule = rbf::NoiseSchedule::vp_linear_logsnr();

  bool pass = true;
  double worst_step_ratio = 0.0;
  double worst_mse_ratio = 0.0;
  for (int steps : {5, 10}) {
    for (std::uint64_t seed : {0, 1, 2}) {
      rbf::TimeGrid grid = rbf::build_time_grid(schedule, steps);
      auto model = problem.make_model();
      std::vector<rbf::TargetPair> targets = rbf::generate_target_pairs(
          *model, schedule, kReferenceSteps, kBatch, seed);
      model->reset_evaluation_count();

      rbf::SolverConfig config;
      rbf::SearchSpec spec;
      rbf::OptimizeResult result = rbf::optimize_shape_parameters(
          *model, grid, config, spec, targets);

      for (const rbf::StepSearchRecord& record : result.steps) {
        if (!(record.best_loss <= record.adams_loss)) pass = false;
        if (record.adams_loss > 0.0) {
          worst_step_ratio = std::max(
              worst_step_ratio, record.best_loss / record.adams_loss);
        }
      }

      rbf::SolverConfig optimized = config;
      optimized.shape_schedule = result.schedule;
      rbf::SolverConfig polynomial = config;
      polynomial.method = rbf::SolverMethod::adams;

      double opt_mse = 0.0;
      double adams_mse = 0.0;
      for (const rbf::TargetPair& pair : targets) {
        Eigen::VectorXd goal =
            rbf::intermediate_target(schedule, pair, grid.times.back());
        opt_mse += (rbf::sample(*model, grid, optimized, pair.terminal).state -
                    goal)
                       .squaredNorm();
        adams_mse +=
            (rbf::sample(*model, grid, polynomial, pair.terminal).state - goal)
                .squaredNorm();
      }
      if (!(opt_mse <= adams_mse)) pass = false;
      if (adams_mse > 0.0) {
        worst_mse_ratio = std::max(worst_mse_ratio, opt_mse / adams_mse);
      }
    }
  }

  CheckResult result;
  result.pass = pass;
  result.detail = "worst step ratio=" + sci(worst_step_ratio) +
                  " worst mse ratio=" + sci(worst_mse_ratio);
  return result;
}

// Cardinal bases sum to one everywhere, and the polynomial weights
// inherit the summation condition from that identity.
CheckResult partition_of_unity_and_weight_sums() {
  const double kTol = 1e-12;
  const int kPoints = 100;

  std::mt19937_64 rng(8128);
  std::uniform_real_distribution<double> pick_lambda0(-3.0, 1.0);
  std::uniform_real_distribution<double> pick_gap(0.1, 0.5);

  double worst_unity = 0.0;
  double worst_sum = 0.0;
  for (int p = 2; p <= 5; ++p) {
    std::vector<double> lambdas(1, pick_lambda0(rng));
    for (int j = 1; j < p; ++j) {
      lambdas.push_back(lambdas.back() - pick_gap(rng));
    }
    rbf::NodeSet nodes = rbf::make_node_set(lambdas, pick_gap(rng));

    std::uniform_real_distribution<double> pick_point(lambdas.back() - 0.5,
                                                      lambdas.front() + 0.5);
    for (int n = 0; n < kPoints; ++n) {
      double lambda = pick_point(rng);
      double sum = 0.0;
      for (int j = 0; j < p; ++j) {
        sum += rbf::lagrange_basis(nodes, j, lambda);
      }
      worst_unity = std::max(worst_unity, std::abs(sum - 1.0));
    }

    double lo = lambdas.front();
    double hi = lo + pick_gap(rng);
    rbf::CoefficientVector adams = rbf::adams_coefficients(nodes, lo, hi);
    double mass = rbf::integral_exp_const(lo, hi);
    worst_sum =
        std::max(worst_sum, std::abs(adams.values.sum() - mass) / mass);
  }

  CheckResult result;
  result.pass = worst_unity <= kTol && worst_sum <= kTol;
  result.detail =
      "unity gap=" + sci(worst_unity) + " sum gap=" + sci(worst_sum);
  return result;
}

// The default search sweeps a 33 point axis for each side of the pair,
// 1089 combinations per step, while spending exactly one model call per
// trajectory node per batch element.
CheckResult search_budget_and_candidate_count() {
  const long kExpectedPairs = 1089;
  const int kSteps = 5;
  const int kBatch = 2;

  rbf::TestProblem problem = rbf::linear_problem();
  rbf::NoiseSchedule schedule = rbf::NoiseSchedule::vp_linear_logsnr();
  rbf::TimeGrid grid = rbf::build_time_grid(schedule, kSteps);

  auto model = problem.make_model();
  std::vector<rbf::TargetPair> targets =
      rbf::generate_target_pairs(*model, schedule, 400, kBatch, 7);
  model->reset_evaluation_count();

  rbf::SolverConfig config;
  rbf::SearchSpec spec;
  rbf::OptimizeResult result =
      rbf::optimize_shape_parameters(*model, grid, config, spec, targets);

  bool pass = !result.steps.empty();
  long pairs = 0;
  for (const rbf::StepSearchRecord& record : result.steps) {
    pairs = record.pairs_evaluated;
    if (record.pairs_evaluated != kExpectedPairs) pass = false;
  }
  long expected_evals = static_cast<long>(kSteps) * kBatch;
  if (result.model_evaluations != expected_evals) pass = false;
  if (model->evaluation_count() != expected_evals) pass = false;

  CheckResult result_out;
  result_out.pass = pass;
  result_out.detail = "pairs/step=" + std::to_string(pairs) +
                      " model evals=" +
                      std::to_string(result.model_evaluations);
  return result_out;
}

struct Entry {
  const char* label;
  CheckResult (*run)();
  double budget_ms;
};

}  // namespace

int main() {
  const Entry entries[] = {
      {"golden three point weights", golden_three_point_weights, 5000.0},
      {"coefficient summation condition", coefficient_summation_condition,
       1000.0},
      {"flat and spike limits", flat_and_spike_limits, 1000.0},
      {"first order path matches euler", first_order_path_matches_euler,
       1000.0},
      {"gaussian integral route agreement",
       gaussian_integral_route_agreement, 1000.0},
      {"constant model sampled exactly", constant_model_sampled_exactly,
       1000.0},
      {"empirical convergence order", empirical_convergence_order, 5000.0},
      {"unipc construction matches adams", unipc_construction_matches_adams,
       1000.0},
      {"optimized schedule never loses", optimized_schedule_never_loses,
       30000.0},
      {"partition of unity and weight sums",
       partition_of_unity_and_weight_sums, 1000.0},
      {"search budget and candidate count",
       search_budget_and_candidate_count, 1000.0},
  };
  const int total = static_cast<int>(sizeof(entries) / sizeof(entries[0]));

  int failures = 0;
  for (int i = 0; i < total; ++i) {
    CheckResult check;
    auto t0 = std::chrono::steady_clock::now();
    try {
      check = entries[i].run();
    } catch (const std::exception& error) {
      check.pass = false;
      check.detail = std::string("threw: ") + error.what();
    }
    auto t1 = std::chrono::steady_clock::now();
    double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    if (ms > entries[i].budget_ms) {
      check.pass = false;
      check.detail += " exceeded time budget";
    }
    if (!check.pass) ++failures;
    std::printf("[%s] %2d/%d %-36s %s (%.0f ms)\n",
                check.pass ? "PASS" : "FAIL", i + 1, total, entries[i].label,
                check.detail.c_str(), ms);
  }

  std::printf("%d of %d checks passed, %d failure(s)\n", total - failures,
              total, failures);
  return failures;
}
