#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "rbf/harness.hpp"
#include "rbf/sampler.hpp"
#include "rbf/schedule.hpp"

namespace {

rbf::TimeGrid linear_grid(int steps) {
  return rbf::build_time_grid(rbf::NoiseSchedule::vp_linear_logsnr(), steps,
                              rbf::GridSpacing::uniform_lambda);
}

}  // namespace

TEST_CASE("evaluation history keeps the newest entries first") {
  rbf::EvaluationHistory history(3);
  history.push(-2.0, Eigen::VectorXd::Constant(1, 10.0));
  history.push(-1.5, Eigen::VectorXd::Constant(1, 11.0));
  history.push(-1.0, Eigen::VectorXd::Constant(1, 12.0));
  history.push(-0.5, Eigen::VectorXd::Constant(1, 13.0));

  CHECK(history.size() == 3);
  CHECK(history.lambda_at(0) == -0.5);
  CHECK(history.lambda_at(2) == -1.5);
  CHECK(history.value_at(0)(0) == 13.0);

  rbf::NodeSet nodes = history.node_set(2, 0.5);
  REQUIRE(nodes.p() == 2);
  CHECK(nodes.lambdas[0] == -0.5);
  CHECK(nodes.lambdas[1] == -1.0);
  CHECK(nodes.width_scale == 0.5);
}

TEST_CASE("shape schedule slots apply the marker threshold") {
  rbf::ShapeSchedule schedule = rbf::ShapeSchedule::empty(4, 3);
  schedule.set_pred(1, 0.5);
  schedule.set_pred(2, 2.5);
  schedule.set_corr(0, 2.0);
  schedule.set_corr_adams(3);

  CHECK(!schedule.pred[0].has_value());
  REQUIRE(schedule.pred[1].has_value());
  CHECK(!schedule.pred[1]->adams);
  CHECK(schedule.pred[1]->log_gamma == 0.5);
  REQUIRE(schedule.pred[2].has_value());
  CHECK(schedule.pred[2]->adams);
  REQUIRE(schedule.corr[0].has_value());
  CHECK(schedule.corr[0]->adams);
  REQUIRE(schedule.corr[3].has_value());
  CHECK(schedule.corr[3]->adams);
}

TEST_CASE("shape schedule serialization round trips") {
  rbf::ShapeSchedule schedule = rbf::ShapeSchedule::empty(3, 2);
  schedule.set_pred(1, -0.75);
  schedule.set_corr(0, 0.25);
  schedule.set_corr_adams(1);
  schedule.mode = "split-joint";

  std::string text = rbf::shape_schedule_to_json(schedule);
  rbf::ShapeSchedule loaded = rbf::shape_schedule_from_json(text);

  CHECK(loaded.steps == 3);
  CHECK(loaded.order == 2);
  CHECK(loaded.mode == "split-joint");
  CHECK(!loaded.pred[0].has_value());
  REQUIRE(loaded.pred[1].has_value());
  CHECK(loaded.pred[1]->log_gamma == -0.75);
  REQUIRE(loaded.corr[0].has_value());
  CHECK(loaded.corr[0]->log_gamma == 0.25);
  REQUIRE(loaded.corr[1].has_value());
  CHECK(loaded.corr[1]->adams);
  CHECK(!loaded.corr[2].has_value());
}

TEST_CASE("shape schedule parsing is strict") {
  rbf::ShapeSchedule schedule = rbf::ShapeSchedule::empty(2, 2);
  std::string text = rbf::shape_schedule_to_json(schedule);

  SUBCASE("unknown top level keys are rejected") {
    std::string bad = text;
    bad.insert(bad.find('{') + 1, "\"bogus\": 1,");
    CHECK_THROWS_AS(rbf::shape_schedule_from_json(bad), std::runtime_error);
  }

  SUBCASE("text must be JSON") {
    CHECK_THROWS_AS(rbf::shape_schedule_from_json("not json"),
                    std::runtime_error);
  }

  SUBCASE("values above the threshold load as markers") {
    rbf::ShapeSchedule touched = rbf::ShapeSchedule::empty(2, 2);
    touched.set_pred(1, 0.0);
    std::string body = rbf::shape_schedule_to_json(touched);
    std::size_t at = body.find("\"log_gamma_pred\": 0.0");
    REQUIRE(at != std::string::npos);
    body.replace(at, std::string("\"log_gamma_pred\": 0.0").size(),
                 "\"log_gamma_pred\": 3.5");
    rbf::ShapeSchedule loaded = rbf::shape_schedule_from_json(body);
    REQUIRE(loaded.pred[1].has_value());
    CHECK(loaded.pred[1]->adams);
  }
}

TEST_CASE("shape schedule file round trip") {
  rbf::ShapeSchedule schedule = rbf::ShapeSchedule::empty(2, 3);
  schedule.set_pred(1, 1.25);
  const std::string path = "sampler_schedule_tmp.json";
  rbf::save_shape_schedule(schedule, path);
  rbf::ShapeSchedule loaded = rbf::load_shape_schedule(path);
  REQUIRE(loaded.pred[1].has_value());
  CHECK(loaded.pred[1]->log_gamma == 1.25);
  std::remove(path.c_str());

  CHECK_THROWS_AS(rbf::load_shape_schedule("missing_schedule.json"),
                  std::runtime_error);
}

TEST_CASE("solver method names parse both ways") {
  using rbf::SolverMethod;
  CHECK(rbf::parse_solver_method("rbf") == SolverMethod::rbf);
  CHECK(rbf::parse_solver_method("adams") == SolverMethod::adams);
  CHECK(rbf::parse_solver_method("equal") == SolverMethod::equal);
  CHECK(rbf::parse_solver_method("euler") == SolverMethod::euler);
  CHECK(!rbf::parse_solver_method("verlet").has_value());
  CHECK(std::string(rbf::solver_method_name(SolverMethod::rbf)) == "rbf");
}

TEST_CASE("effective order honors warmup and method") {
  rbf::SolverConfig config;
  config.order = 3;

  SUBCASE("ramp warmup grows one step at a time") {
    CHECK(rbf::effective_order(config, 0, 10) == 1);
    CHECK(rbf::effective_order(config, 1, 10) == 2);
    CHECK(rbf::effective_order(config, 2, 10) == 3);
    CHECK(rbf::effective_order(config, 7, 10) == 3);
  }

  SUBCASE("first order warmup waits for a full stencil") {
    config.warmup = rbf::WarmupStyle::first_order;
    CHECK(rbf::effective_order(config, 0, 10) == 1);
    CHECK(rbf::effective_order(config, 1, 10) == 1);
    CHECK(rbf::effective_order(config, 2, 10) == 3);
  }

  SUBCASE("the final steps can shed order") {
    config.lower_order_final = true;
    CHECK(rbf::effective_order(config, 7, 10) == 3);
    CHECK(rbf::effective_order(config, 8, 10) == 2);
    CHECK(rbf::effective_order(config, 9, 10) == 1);
  }

  SUBCASE("the one point method stays first order") {
    config.method = rbf::SolverMethod::euler;
    CHECK(rbf::effective_order(config, 5, 10) == 1);
  }
}

TEST_CASE("sampling spends exactly one evaluation per step") {
  rbf::TestProblem problem = rbf::linear_problem();
  rbf::SolverConfig config;
  config.order = 3;

  for (int steps : {1, 2, 5, 9}) {
    for (bool corrector : {true, false}) {
      auto model = problem.make_model();
      config.use_corrector = corrector;
      rbf::SampleResult result = rbf::sample(
          *model, linear_grid(steps), config,
          rbf::default_start_state(problem));
      CAPTURE(steps);
      CAPTURE(corrector);
      CHECK(result.evaluations == steps);
      CHECK(model->evaluation_count() == steps);
    }
  }
}

TEST_CASE("constant predictions integrate exactly") {
  rbf::TestProblem problem = rbf::constant_problem();
  Eigen::VectorXd x_init = rbf::default_start_state(problem);
  rbf::SolverConfig config;
  config.order = 3;

  rbf::TimeGrid grid = linear_grid(3);
  auto model = problem.make_model();
  rbf::SampleResult result = rbf::sample(*model, grid, config, x_init);
  Eigen::VectorXd exact = problem.exact_final(grid, x_init);
  CHECK((result.state - exact).norm() <= 1e-12 * exact.norm());
}

TEST_CASE("the one point method equals a one point stencil to the bit") {
  rbf::TestProblem problem = rbf::stiff_problem();
  Eigen::VectorXd x_init = rbf::default_start_state(problem);
  rbf::TimeGrid grid = linear_grid(7);

  rbf::SolverConfig euler;
  euler.method = rbf::SolverMethod::euler;
  euler.use_corrector = false;

  rbf::SolverConfig adams1;
  adams1.method = rbf::SolverMethod::adams;
  adams1.order = 1;
  adams1.use_corrector = false;

  auto model_a = problem.make_model();
  auto model_b = problem.make_model();
  Eigen::VectorXd via_euler = rbf::sample(*model_a, grid, euler, x_init).state;
  Eigen::VectorXd via_adams =
      rbf::sample(*model_b, grid, adams1, x_init).state;
  CHECK(via_euler.cwiseEqual(via_adams).all());
}

TEST_CASE("sampling validates its inputs") {
  rbf::TestProblem problem = rbf::linear_problem();
  auto model = problem.make_model();
  rbf::SolverConfig config;

  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(rbf::sample(*model, linear_grid(4), config,
                                Eigen::VectorXd::Ones(2)),
                    std::invalid_argument);
  }

  SUBCASE("order beyond the stencil cap") {
    config.order = 12;
    CHECK_THROWS_AS(rbf::sample(*model, linear_grid(4), config,
                                rbf::default_start_state(problem)),
                    std::invalid_argument);
  }

  SUBCASE("shape schedule length must match the grid") {
    config.shape_schedule = rbf::ShapeSchedule::empty(5, config.order);
    CHECK_THROWS_AS(rbf::sample(*model, linear_grid(4), config,
                                rbf::default_start_state(problem)),
                    std::invalid_argument);
  }
}

TEST_CASE("trace records the step structure") {
  rbf::TestProblem problem = rbf::linear_problem();
  rbf::TimeGrid grid = linear_grid(5);
  rbf::SolverConfig config;
  config.order = 3;
  config.record_trace = true;

  auto model = problem.make_model();
  rbf::SampleResult result =
      rbf::sample(*model, grid, config, rbf::default_start_state(problem));
  REQUIRE(result.trace.size() == 5);

  for (int i = 0; i < 5; ++i) {
    const rbf::StepRecord& record = result.trace[i];
    CAPTURE(i);
    CHECK(record.index == i);
    CHECK(record.t == grid.times[i + 1]);
    CHECK(record.lambda == grid.lambdas[i + 1]);
    CHECK(record.method == "rbf");
    CHECK(record.coefficients.size() == std::size_t(std::min(3, i + 1)));
    CHECK(std::isfinite(record.x_norm));
    CHECK(record.gamma_pred == 1.0);
    if (i + 1 < 5) {
      CHECK(record.gamma_corr == 1.0);
    } else {
      CHECK(std::isnan(record.gamma_corr));
    }
  }

  SUBCASE("trace rows serialize as JSON lines") {
    std::ostringstream out;
    rbf::write_trace_jsonl(result.trace, out);
    std::istringstream in(out.str());
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
      CHECK(line.front() == '{');
      CHECK(line.back() == '}');
      ++lines;
    }
    CHECK(lines == 5);
  }
}

TEST_CASE("coefficient selection falls back on singular kernels") {
  rbf::NodeSet wide = rbf::make_node_set({-3.0, -3.1, -3.2, -3.3, -3.4}, 0.1);
  rbf::SolverConfig config;
  config.order = 5;

  rbf::ShapeEntry flat;
  flat.log_gamma = 2.0;
  rbf::CoefficientVector coeffs =
      rbf::select_coefficients(config, flat, wide, -3.0, -2.9);
  CHECK(coeffs.provenance == rbf::CoefficientProvenance::adams);

  rbf::ShapeEntry healthy;
  healthy.log_gamma = 0.0;
  coeffs = rbf::select_coefficients(config, healthy, wide, -3.0, -2.9);
  CHECK(coeffs.provenance == rbf::CoefficientProvenance::rbf_gaussian);
}
