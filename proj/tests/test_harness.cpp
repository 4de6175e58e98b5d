#include <doctest.h>

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "rbf/harness.hpp"

TEST_CASE("built in problems") {
  std::vector<rbf::TestProblem> problems = rbf::builtin_problems();
  REQUIRE(problems.size() == 5);

  for (const rbf::TestProblem& problem : problems) {
    CAPTURE(problem.name);
    CHECK(!problem.description.empty());
    CHECK(problem.dimension >= 1);
    auto model = problem.make_model();
    CHECK(model->dimension() == problem.dimension);
    Eigen::VectorXd start = rbf::default_start_state(problem);
    CHECK(start.size() == problem.dimension);
  }

  CHECK(rbf::find_problem("constant").has_value());
  CHECK(rbf::find_problem("stiff").has_value());
  CHECK(!rbf::find_problem("does-not-exist").has_value());

  CHECK(rbf::constant_problem().has_closed_form());
  CHECK(rbf::polynomial_problem().has_closed_form());
  CHECK(rbf::sinusoid_problem().has_closed_form());
  CHECK(!rbf::linear_problem().has_closed_form());
  CHECK(!rbf::stiff_problem().has_closed_form());
}

TEST_CASE("models are deterministic and count their calls") {
  rbf::TestProblem problem = rbf::stiff_problem();
  auto model = problem.make_model();
  Eigen::VectorXd x = Eigen::VectorXd::Ones(2);
  Eigen::VectorXd first = (*model)(x, -1.0);
  Eigen::VectorXd second = (*model)(x, -1.0);
  CHECK(first.cwiseEqual(second).all());
  CHECK(model->evaluation_count() == 2);
  model->reset_evaluation_count();
  CHECK(model->evaluation_count() == 0);
}

TEST_CASE("the reference solve reproduces the closed forms") {
  rbf::NoiseSchedule schedule = rbf::NoiseSchedule::vp_linear_logsnr();
  rbf::TimeGrid grid = rbf::build_time_grid(schedule, 4);

  for (const rbf::TestProblem& problem : rbf::builtin_problems()) {
    if (!problem.has_closed_form()) continue;
    CAPTURE(problem.name);
    Eigen::VectorXd x_init = rbf::default_start_state(problem);
    Eigen::VectorXd reference =
        rbf::reference_solve(problem, schedule, x_init, 150000);
    Eigen::VectorXd exact = problem.exact_final(grid, x_init);
    CHECK((reference - exact).norm() <= 1e-9 * std::max(1.0, exact.norm()));
  }
}

TEST_CASE("the reference solve rejects a hopeless resolution") {
  CHECK_THROWS_AS(rbf::reference_solve(rbf::linear_problem(),
                                       rbf::NoiseSchedule::vp_linear_logsnr(),
                                       Eigen::VectorXd::Ones(4), 1),
                  std::invalid_argument);
}

TEST_CASE("convergence studies report shrinking errors") {
  rbf::TestProblem problem = rbf::sinusoid_problem();
  rbf::NoiseSchedule schedule = rbf::NoiseSchedule::vp_linear_logsnr();

  rbf::SolverConfig config;
  config.method = rbf::SolverMethod::adams;
  config.order = 2;
  config.use_corrector = false;

  rbf::ConvergenceReport report = rbf::convergence_study(
      problem, schedule, config, {40, 80, 160},
      rbf::default_start_state(problem));

  REQUIRE(report.points.size() == 3);
  CHECK(report.problem == "sinusoid");
  CHECK(report.method == "adams");
  CHECK(report.order == 2);
  CHECK(report.points[0].error > report.points[1].error);
  CHECK(report.points[1].error > report.points[2].error);
  CHECK(report.slope > 1.5);
  for (const rbf::ConvergencePoint& point : report.points) {
    CHECK(point.h_max > 0.0);
  }
}

TEST_CASE("convergence reports serialize as CSV") {
  rbf::ConvergenceReport report;
  report.problem = "constant";
  report.method = "rbf";
  report.order = 3;
  report.points.push_back(rbf::ConvergencePoint{10, 1.0, 1e-3});
  report.points.push_back(rbf::ConvergencePoint{20, 0.5, 1e-4});
  report.slope = 3.2;

  std::ostringstream out;
  rbf::write_convergence_csv({report}, out);
  std::istringstream in(out.str());
  std::string header;
  std::getline(in, header);
  CHECK(header == "problem,method,p,M,h_max,error,slope");
  std::string row;
  int rows = 0;
  while (std::getline(in, row)) {
    CHECK(row.rfind("constant,rbf,3,", 0) == 0);
    ++rows;
  }
  CHECK(rows == 2);
}

TEST_CASE("the invariant suite passes clean") {
  rbf::InvariantReport report = rbf::run_invariant_suite();
  CHECK(report.checks.size() >= 20);
  for (const rbf::InvariantCheck& check : report.checks) {
    CAPTURE(check.module);
    CAPTURE(check.name);
    CAPTURE(check.detail);
    CHECK(check.pass);
  }
  CHECK(report.failures() == 0);
}

TEST_CASE("module filtering narrows the invariant suite") {
  rbf::InvariantOptions options;
  options.only_module = "basis";
  rbf::InvariantReport report = rbf::run_invariant_suite(options);
  CHECK(!report.checks.empty());
  for (const rbf::InvariantCheck& check : report.checks) {
    CHECK(check.module == "basis");
  }
}

TEST_CASE("injected faults are caught by exactly one check") {
  struct Case {
    const char* fault;
    const char* module;
    const char* name;
  };
  for (const Case& c : {Case{"coefficient-sum", "coeffs", "summation"},
                        Case{"grid-monotone", "schedule", "grid-monotone"},
                        Case{"route-agreement", "quadrature",
                             "route-agreement"}}) {
    CAPTURE(c.fault);
    rbf::InvariantOptions options;
    options.inject_fault = c.fault;
    rbf::InvariantReport report = rbf::run_invariant_suite(options);
    CHECK(report.failures() == 1);
    for (const rbf::InvariantCheck& check : report.checks) {
      if (!check.pass) {
        CHECK(check.module == c.module);
        CHECK(check.name == c.name);
      }
    }
  }

  rbf::InvariantOptions bad;
  bad.inject_fault = "no-such-fault";
  CHECK_THROWS_AS(rbf::run_invariant_suite(bad), std::invalid_argument);
}

TEST_CASE("invariant reports serialize as JSON") {
  rbf::InvariantOptions options;
  options.only_module = "schedule";
  rbf::InvariantReport report = rbf::run_invariant_suite(options);

  nlohmann::json parsed = nlohmann::json::parse(
      rbf::invariant_report_json(report));
  CHECK(parsed["failures"] == 0);
  REQUIRE(parsed["checks"].is_array());
  CHECK(parsed["checks"].size() == report.checks.size());
  for (const nlohmann::json& row : parsed["checks"]) {
    CHECK(row["module"] == "schedule");
    CHECK(row.contains("name"));
    CHECK(row.contains("pass"));
    CHECK(row.contains("detail"));
  }
}
