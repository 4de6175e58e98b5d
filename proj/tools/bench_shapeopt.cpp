#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include <CLI11.hpp>

#include "rbf/harness.hpp"
#include "rbf/sampler.hpp"
#include "rbf/schedule.hpp"
#include "rbf/shapeopt.hpp"

namespace {

double run_once(rbf::ModelEvaluator& model, const rbf::TimeGrid& grid,
                const rbf::SolverConfig& config, const rbf::SearchSpec& spec,
                const std::vector<rbf::TargetPair>& targets,
                rbf::ShapeSchedule* out) {
  auto start = std::chrono::steady_clock::now();
  rbf::OptimizeResult result =
      rbf::optimize_shape_parameters(model, grid, config, spec, targets);
  auto stop = std::chrono::steady_clock::now();
  *out = std::move(result.schedule);
  return std::chrono::duration<double, std::milli>(stop - start).count();
}

bool schedules_match(const rbf::ShapeSchedule& a, const rbf::ShapeSchedule& b) {
  if (a.steps != b.steps || a.order != b.order) return false;
  auto slots_match = [](const std::optional<rbf::ShapeEntry>& x,
                        const std::optional<rbf::ShapeEntry>& y) {
    if (x.has_value() != y.has_value()) return false;
    if (!x) return true;
    return x->adams == y->adams && x->log_gamma == y->log_gamma;
  };
  for (int i = 0; i < a.steps; ++i) {
    if (!slots_match(a.pred[i], b.pred[i])) return false;
    if (!slots_match(a.corr[i], b.corr[i])) return false;
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  int steps = 8;
  int batch = 8;
  int resolution = 33;
  int order = 3;
  int repeats = 3;
  std::uint64_t seed = 0;

  CLI::App app{"Grid search timing, serial against parallel"};
  app.add_option("--steps", steps, "Solver steps");
  app.add_option("--batch", batch, "Training pairs");
  app.add_option("--resolution", resolution, "Grid points per axis");
  app.add_option("--order", order, "Stencil size");
  app.add_option("--repeats", repeats, "Timing repetitions");
  app.add_option("--seed", seed, "Batch seed");
  CLI11_PARSE(app, argc, argv);

  rbf::TestProblem problem = rbf::linear_problem();
  rbf::NoiseSchedule schedule = rbf::NoiseSchedule::vp_linear_logsnr();
  rbf::TimeGrid grid =
      rbf::build_time_grid(schedule, steps, rbf::GridSpacing::uniform_lambda);

  auto model = problem.make_model();
  std::vector<rbf::TargetPair> targets =
      rbf::generate_target_pairs(*model, schedule, 400, batch, seed);

  rbf::SolverConfig config;
  config.order = order;

  rbf::SearchSpec spec;
  spec.resolution = resolution;

  double serial_best = 0.0;
  double parallel_best = 0.0;
  rbf::ShapeSchedule serial_schedule;
  rbf::ShapeSchedule parallel_schedule;
  for (int r = 0; r < repeats; ++r) {
    spec.parallel = false;
    double serial_ms =
        run_once(*model, grid, config, spec, targets, &serial_schedule);
    spec.parallel = true;
    double parallel_ms =
        run_once(*model, grid, config, spec, targets, &parallel_schedule);
    if (r == 0 || serial_ms < serial_best) serial_best = serial_ms;
    if (r == 0 || parallel_ms < parallel_best) parallel_best = parallel_ms;
  }

  if (!schedules_match(serial_schedule, parallel_schedule)) {
    std::printf("FAIL: serial and parallel searches disagree\n");
    return 1;
  }

  std::printf("steps=%d batch=%d resolution=%d order=%d\n", steps, batch,
              resolution, order);
  std::printf("serial:   %9.3f ms\n", serial_best);
  std::printf("parallel: %9.3f ms\n", parallel_best);
  std::printf("speedup:  %9.3f x\n", serial_best / parallel_best);
  std::printf("schedules agree\n");
  return 0;
}
