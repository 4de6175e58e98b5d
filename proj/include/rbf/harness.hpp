#pragma once

#include <Eigen/Dense>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rbf/sampler.hpp"
#include "rbf/schedule.hpp"

namespace rbf {

// Analytic model problem for exercising the sampler. make_model returns a
// fresh evaluator with its own call counter. exact_final, when set, maps
// the grid endpoints and an initial state to the exact transported state;
// problems without a closed form are measured against reference_solve.
struct TestProblem {
  std::string name;
  std::string description;
  int dimension = 1;
  std::function<std::unique_ptr<ModelEvaluator>()> make_model;
  std::function<Eigen::VectorXd(const TimeGrid&, const Eigen::VectorXd&)>
      exact_final;

  bool has_closed_form() const { return static_cast<bool>(exact_final); }
};

// The five built-in problems:
//   constant    prediction fixed at a constant vector
//   polynomial  prediction is a quadratic in lambda per component
//   sinusoid    prediction sin(3 lambda), oscillatory but smooth
//   linear      mild state feedback, 4 components
//   stiff       lower triangular 2x2 feedback, rates -1 and -3
TestProblem constant_problem();
TestProblem polynomial_problem();
TestProblem sinusoid_problem();
TestProblem linear_problem();
TestProblem stiff_problem();

std::vector<TestProblem> builtin_problems();
std::optional<TestProblem> find_problem(const std::string& name);

// Deterministic start state used by studies that need one.
Eigen::VectorXd default_start_state(const TestProblem& problem);

// High accuracy solution of the sampling trajectory by explicit Euler in
// the noise-scaled chart, Richardson extrapolated from runs at the given
// resolution and twice it. A third run at four times the resolution
// cross-checks the extrapolation; disagreement beyond 1e-9 throws.
Eigen::VectorXd reference_solve(const TestProblem& problem,
                                const NoiseSchedule& schedule,
                                const Eigen::VectorXd& x_init,
                                long resolution);

struct ConvergencePoint {
  int steps = 0;
  double h_max = 0.0;
  double error = 0.0;
};

struct ConvergenceReport {
  std::string problem;
  std::string method;
  int order = 0;
  std::vector<ConvergencePoint> points;
  double slope = 0.0;
};

// Runs the solver across the given step counts and fits the error decay
// slope over the three finest grids. Errors are final-state L2 distances
// normalized by the exact solution norm.
ConvergenceReport convergence_study(const TestProblem& problem,
                                    const NoiseSchedule& schedule,
                                    const SolverConfig& config,
                                    const std::vector<int>& step_counts,
                                    const Eigen::VectorXd& x_init,
                                    long reference_resolution = 20000);

// CSV rows "problem,method,p,M,h_max,error,slope".
void write_convergence_csv(const std::vector<ConvergenceReport>& reports,
                           std::ostream& out);

// Machine-checkable statement about one module.
struct InvariantCheck {
  std::string module;
  std::string name;
  bool pass = false;
  std::string detail;
};

struct InvariantReport {
  std::vector<InvariantCheck> checks;

  int failures() const;
};

// Selects a subset of checks and optionally injects a known corruption
// to demonstrate that the corresponding detector fires. Supported fault
// names: "coefficient-sum", "grid-monotone", "route-agreement".
struct InvariantOptions {
  std::string only_module;
  std::string inject_fault;
};

// Runs every module's invariant checks and reports each outcome with the
// measured quantity in the detail string.
InvariantReport run_invariant_suite(const InvariantOptions& options = {});

std::string invariant_report_json(const InvariantReport& report);

}  // namespace rbf
