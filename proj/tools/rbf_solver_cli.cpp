#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "rbf/coeffs.hpp"
#include "rbf/harness.hpp"
#include "rbf/sampler.hpp"
#include "rbf/schedule.hpp"
#include "rbf/shapeopt.hpp"

namespace {

// Raised for malformed command lines and config files; mapped to exit
// code 2 so scripts can tell usage mistakes from runtime failures.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Binds config file keys to the same variables the CLI options write.
// A key only takes effect when its option was not given on the command
// line, so the command line always wins.
class ConfigRegistry {
 public:
  template <typename T>
  void bind(CLI::Option* option, const std::string& key, T& target) {
    entries_[key] = Entry{
        option, [&target](const nlohmann::json& value) {
          target = value.get<T>();
        }};
  }

  void apply(const nlohmann::json& object) const {
    if (!object.is_object()) {
      throw UsageError("config root must be a JSON object");
    }
    for (auto it = object.begin(); it != object.end(); ++it) {
      auto found = entries_.find(it.key());
      if (found == entries_.end()) {
        throw UsageError("unknown config key: " + it.key());
      }
      if (found->second.option->count() > 0) continue;
      try {
        found->second.assign(it.value());
      } catch (const nlohmann::json::exception&) {
        throw UsageError("config key has the wrong type: " + it.key());
      }
    }
  }

 private:
  struct Entry {
    CLI::Option* option;
    std::function<void(const nlohmann::json&)> assign;
  };

  std::map<std::string, Entry> entries_;
};

std::vector<double> parse_double_list(const std::string& text,
                                      const std::string& what) {
  std::vector<double> values;
  std::stringstream stream(text);
  std::string token;
  while (std::getline(stream, token, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(token, &used));
      if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw UsageError("cannot parse " + what + " entry: " + token);
    }
  }
  if (values.empty()) throw UsageError(what + " list is empty");
  return values;
}

std::vector<int> parse_int_list(const std::string& text,
                                const std::string& what) {
  std::vector<int> values;
  for (double value : parse_double_list(text, what)) {
    int rounded = static_cast<int>(value);
    if (double(rounded) != value) {
      throw UsageError(what + " entries must be integers");
    }
    values.push_back(rounded);
  }
  return values;
}

rbf::NoiseSchedule make_schedule(const std::string& name, double t_min) {
  if (name == "vp-linear") {
    return rbf::NoiseSchedule::vp_linear_logsnr(-5.0, 5.0, 1.0, t_min);
  }
  if (name == "vp-cosine") {
    return rbf::NoiseSchedule::vp_cosine(1.0, t_min);
  }
  const std::string prefix = "tabulated:";
  if (name.rfind(prefix, 0) == 0) {
    return rbf::NoiseSchedule::load_tabulated_csv(name.substr(prefix.size()),
                                                  t_min);
  }
  throw UsageError("unknown schedule: " + name +
                   " (expected vp-linear, vp-cosine, or tabulated:<file>)");
}

rbf::GridSpacing parse_spacing(const std::string& name) {
  if (name == "lambda") return rbf::GridSpacing::uniform_lambda;
  if (name == "time") return rbf::GridSpacing::uniform_time;
  throw UsageError("unknown spacing: " + name + " (expected lambda or time)");
}

rbf::SolverMethod parse_method(const std::string& name) {
  std::optional<rbf::SolverMethod> method = rbf::parse_solver_method(name);
  if (!method) throw UsageError("unknown method: " + name);
  return *method;
}

rbf::WarmupStyle parse_warmup(const std::string& name) {
  if (name == "ramp") return rbf::WarmupStyle::ramp_order;
  if (name == "first-order") return rbf::WarmupStyle::first_order;
  throw UsageError("unknown warmup: " + name +
                   " (expected ramp or first-order)");
}

rbf::TestProblem require_problem(const std::string& name) {
  if (name.empty()) throw UsageError("no problem selected, pass --problem");
  std::optional<rbf::TestProblem> problem = rbf::find_problem(name);
  if (!problem) {
    std::string known;
    for (const rbf::TestProblem& p : rbf::builtin_problems()) {
      known += known.empty() ? p.name : ", " + p.name;
    }
    throw UsageError("unknown problem: " + name + " (expected one of " +
                     known + ")");
  }
  return std::move(*problem);
}

int with_output(const std::string& path,
                const std::function<void(std::ostream&)>& body) {
  if (path.empty() || path == "-") {
    body(std::cout);
    return std::cout.good() ? 0 : 1;
  }
  std::ofstream out(path);
  if (!out) {
    std::cerr << "cannot open output file: " << path << "\n";
    return 1;
  }
  body(out);
  return out.good() ? 0 : 1;
}

struct CoeffsArgs {
  int order = 3;
  double base = 0.0;
  double step = 0.1;
  std::string nodes;
  double lo = std::numeric_limits<double>::quiet_NaN();
  double hi = std::numeric_limits<double>::quiet_NaN();
  double width = std::numeric_limits<double>::quiet_NaN();
  std::string method = "rbf";
  double log_gamma_min = -2.0;
  double log_gamma_max = 2.0;
  int points = 33;
  bool no_constant = false;
  std::string output = "-";
};

int run_coeffs(const CoeffsArgs& args) {
  std::vector<double> lambdas;
  if (!args.nodes.empty()) {
    lambdas = parse_double_list(args.nodes, "nodes");
  } else {
    if (args.order < 1) throw UsageError("order must be positive");
    if (!(args.step > 0.0)) throw UsageError("step must be positive");
    for (int j = 0; j < args.order; ++j) {
      lambdas.push_back(args.base - j * args.step);
    }
  }

  double lo = std::isnan(args.lo) ? lambdas.front() : args.lo;
  double hi = std::isnan(args.hi) ? lo + args.step : args.hi;
  double width = std::isnan(args.width) ? hi - lo : args.width;
  if (!(hi > lo)) throw UsageError("need hi > lo");

  rbf::NodeSet node_set;
  try {
    node_set = rbf::make_node_set(lambdas, width);
  } catch (const std::invalid_argument& error) {
    throw UsageError(error.what());
  }

  std::vector<rbf::CoefficientVector> rows;
  std::vector<double> row_log_gammas;
  if (args.method == "rbf") {
    if (args.points < 1) throw UsageError("points must be positive");
    int skipped = 0;
    for (int k = 0; k < args.points; ++k) {
      double t = args.points == 1 ? 0.0 : double(k) / (args.points - 1);
      double log_gamma =
          args.log_gamma_min + (args.log_gamma_max - args.log_gamma_min) * t;
      auto coeffs = rbf::rbf_coefficients(node_set, lo, hi,
                                          std::pow(10.0, log_gamma),
                                          !args.no_constant);
      if (!coeffs) {
        ++skipped;
        continue;
      }
      rows.push_back(std::move(*coeffs));
      row_log_gammas.push_back(log_gamma);
    }
    if (skipped > 0) {
      std::cerr << skipped << " shape value(s) made the kernel singular and"
                << " were skipped\n";
    }
    if (rows.empty()) {
      std::cerr << "no usable shape values in the requested range\n";
      return 1;
    }
  } else {
    double nan = std::numeric_limits<double>::quiet_NaN();
    if (args.method == "adams" || args.method == "euler") {
      rows.push_back(rbf::adams_coefficients(node_set, lo, hi));
    } else if (args.method == "equal") {
      rows.push_back(rbf::equal_coefficients(node_set, lo, hi));
    } else if (args.method == "unipc") {
      rows.push_back(rbf::unipc_coefficients(node_set, lo, hi));
    } else {
      throw UsageError("unknown method: " + args.method);
    }
    row_log_gammas.push_back(nan);
  }

  int p = node_set.p();
  return with_output(args.output, [&](std::ostream& out) {
    out.precision(17);
    out << "log_gamma";
    for (int j = 0; j < p; ++j) out << ",c_" << j;
    out << ",sum";
    for (int j = 0; j < p; ++j) out << ",share_" << j;
    out << '\n';
    for (std::size_t r = 0; r < rows.size(); ++r) {
      out << row_log_gammas[r];
      for (int j = 0; j < p; ++j) out << ',' << rows[r].values(j);
      out << ',' << rows[r].values.sum();
      Eigen::VectorXd shares = rbf::coefficient_magnitude_ratio(rows[r]);
      for (int j = 0; j < p; ++j) out << ',' << shares(j);
      out << '\n';
    }
  });
}

struct SampleArgs {
  std::string problem;
  std::string schedule = "vp-linear";
  double t_min = -1.0;
  int steps = 10;
  int order = 3;
  std::string method = "rbf";
  double log_gamma = 0.0;
  std::string shape_schedule;
  std::string spacing = "lambda";
  std::string warmup = "ramp";
  bool no_corrector = false;
  bool corrector_width_next = false;
  bool no_constant = false;
  bool lower_order_final = false;
  bool random_start = false;
  std::string trace;
  std::string output = "-";
};

rbf::SolverConfig solver_config_from(const SampleArgs& args) {
  rbf::SolverConfig config;
  config.method = parse_method(args.method);
  config.order = args.order;
  config.use_corrector = !args.no_corrector;
  config.include_constant_term = !args.no_constant;
  config.log_gamma = args.log_gamma;
  config.warmup = parse_warmup(args.warmup);
  config.lower_order_final = args.lower_order_final;
  config.corrector_width_from_next_step = args.corrector_width_next;
  if (!args.shape_schedule.empty()) {
    config.shape_schedule = rbf::load_shape_schedule(args.shape_schedule);
  }
  return config;
}

int run_sample(const SampleArgs& args, std::uint64_t seed) {
  rbf::TestProblem problem = require_problem(args.problem);
  rbf::NoiseSchedule schedule = make_schedule(args.schedule, args.t_min);
  rbf::TimeGrid grid =
      rbf::build_time_grid(schedule, args.steps, parse_spacing(args.spacing));

  rbf::SolverConfig config = solver_config_from(args);
  config.record_trace = !args.trace.empty();

  Eigen::VectorXd x_init;
  if (args.random_start) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    x_init.resize(problem.dimension);
    for (int d = 0; d < problem.dimension; ++d) x_init(d) = normal(rng);
  } else {
    x_init = rbf::default_start_state(problem);
  }

  auto model = problem.make_model();
  rbf::SampleResult result = rbf::sample(*model, grid, config, x_init);

  double error = std::numeric_limits<double>::quiet_NaN();
  if (problem.has_closed_form()) {
    Eigen::VectorXd exact = problem.exact_final(grid, x_init);
    double scale = exact.norm();
    error = (result.state - exact).norm() / (scale > 0.0 ? scale : 1.0);
  }

  if (!args.trace.empty()) {
    std::ofstream trace_out(args.trace);
    if (!trace_out) {
      std::cerr << "cannot open trace file: " << args.trace << "\n";
      return 1;
    }
    rbf::write_trace_jsonl(result.trace, trace_out);
  }

  std::cerr.precision(6);
  std::cerr << "problem=" << problem.name << " steps=" << args.steps
            << " order=" << config.order
            << " method=" << rbf::solver_method_name(config.method)
            << " evaluations=" << result.evaluations << " error=" << error
            << "\n";

  return with_output(args.output, [&](std::ostream& out) {
    out.precision(17);
    out << "component,value\n";
    for (int d = 0; d < result.state.size(); ++d) {
      out << d << ',' << result.state(d) << '\n';
    }
  });
}

struct ConvergeArgs {
  std::string problem;
  std::string schedule = "vp-linear";
  double t_min = -1.0;
  std::string steps_list = "10,20,40,80,160";
  int order = 3;
  std::string method = "rbf";
  double log_gamma = 0.0;
  std::string warmup = "ramp";
  bool no_corrector = false;
  bool corrector_width_next = false;
  long reference_steps = 20000;
  std::string output = "-";
};

int run_converge(const ConvergeArgs& args) {
  rbf::TestProblem problem = require_problem(args.problem);
  rbf::NoiseSchedule schedule = make_schedule(args.schedule, args.t_min);

  std::vector<int> step_counts = parse_int_list(args.steps_list, "steps");
  for (int steps : step_counts) {
    if (steps < 1) throw UsageError("step counts must be positive");
  }
  std::sort(step_counts.begin(), step_counts.end());

  rbf::SolverConfig config;
  config.method = parse_method(args.method);
  config.order = args.order;
  config.use_corrector = !args.no_corrector;
  config.log_gamma = args.log_gamma;
  config.warmup = parse_warmup(args.warmup);
  config.corrector_width_from_next_step = args.corrector_width_next;

  rbf::ConvergenceReport report = rbf::convergence_study(
      problem, schedule, config, step_counts,
      rbf::default_start_state(problem), args.reference_steps);

  std::cerr.precision(6);
  std::cerr << "problem=" << report.problem << " method=" << report.method
            << " p=" << report.order << " slope=" << report.slope
            << " final_error=" << report.points.back().error << "\n";

  return with_output(args.output, [&](std::ostream& out) {
    rbf::write_convergence_csv({report}, out);
  });
}

struct OptimizeArgs {
  std::string problem = "linear";
  std::string schedule = "vp-linear";
  double t_min = -1.0;
  int steps = 10;
  int order = 3;
  int batch = 4;
  int reference_steps = 400;
  int resolution = 33;
  int replicates = 1;
  std::string mode = "split-joint";
  double log_gamma_min = -2.0;
  double log_gamma_max = 2.0;
  double adams_threshold = 2.0;
  bool no_adams_candidate = false;
  bool serial = false;
  bool corrector_width_next = false;
  std::string output = "-";
};

int run_optimize(const OptimizeArgs& args, std::uint64_t seed) {
  rbf::TestProblem problem = require_problem(args.problem);
  rbf::NoiseSchedule schedule = make_schedule(args.schedule, args.t_min);
  rbf::TimeGrid grid = rbf::build_time_grid(schedule, args.steps,
                                            rbf::GridSpacing::uniform_lambda);

  std::optional<rbf::SearchMode> mode = rbf::parse_search_mode(args.mode);
  if (!mode) throw UsageError("unknown search mode: " + args.mode);
  if (args.replicates < 1) throw UsageError("replicates must be positive");

  rbf::SearchSpec spec;
  spec.log_gamma_min = args.log_gamma_min;
  spec.log_gamma_max = args.log_gamma_max;
  spec.resolution = args.resolution;
  spec.mode = *mode;
  spec.include_adams_candidate = !args.no_adams_candidate;
  spec.adams_threshold = args.adams_threshold;
  spec.parallel = !args.serial;

  rbf::SolverConfig config;
  config.order = args.order;
  config.corrector_width_from_next_step = args.corrector_width_next;

  std::vector<rbf::ShapeSchedule> learned;
  long total_evaluations = 0;
  for (int r = 0; r < args.replicates; ++r) {
    auto model = problem.make_model();
    std::vector<rbf::TargetPair> targets = rbf::generate_target_pairs(
        *model, schedule, args.reference_steps, args.batch, seed + r);
    model->reset_evaluation_count();
    rbf::OptimizeResult result =
        rbf::optimize_shape_parameters(*model, grid, config, spec, targets);
    total_evaluations += result.model_evaluations;

    std::cerr.precision(6);
    for (const rbf::StepSearchRecord& record : result.steps) {
      std::cerr << "replicate " << r << " step " << record.step
                << ": best_loss=" << record.best_loss
                << " adams_loss=" << record.adams_loss
                << " pairs=" << record.pairs_evaluated << "\n";
    }
    learned.push_back(std::move(result.schedule));
  }

  rbf::ShapeSchedule schedule_out = args.replicates == 1
                                        ? std::move(learned.front())
                                        : rbf::average_shape_schedules(learned);
  std::cerr << "search evaluations=" << total_evaluations << "\n";

  if (args.output == "-" || args.output.empty()) {
    std::cout << rbf::shape_schedule_to_json(schedule_out) << "\n";
    return std::cout.good() ? 0 : 1;
  }
  rbf::save_shape_schedule(schedule_out, args.output);
  return 0;
}

struct VerifyArgs {
  std::string only;
  std::string inject_fault;
  bool json = false;
  std::string output = "-";
};

int run_verify(const VerifyArgs& args) {
  rbf::InvariantOptions options;
  options.only_module = args.only;
  options.inject_fault = args.inject_fault;

  rbf::InvariantReport report;
  try {
    report = rbf::run_invariant_suite(options);
  } catch (const std::invalid_argument& error) {
    throw UsageError(error.what());
  }

  int failures = report.failures();
  int code = with_output(args.output, [&](std::ostream& out) {
    if (args.json) {
      out << rbf::invariant_report_json(report) << "\n";
      return;
    }
    for (const rbf::InvariantCheck& check : report.checks) {
      std::string label = check.module + "/" + check.name;
      out << (check.pass ? "[ ok ] " : "[FAIL] ") << label;
      for (std::size_t pad = label.size(); pad < 36; ++pad) out << ' ';
      out << ' ' << check.detail << '\n';
    }
    out << report.checks.size() << " checks, " << failures << " failure(s)\n";
  });
  if (code != 0) return code;
  return failures > 0 ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exponential integrator sampling toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "0.1.0");

  std::string config_path;
  app.add_option("--config", config_path,
                 "JSON file giving defaults for the chosen subcommand");

  std::uint64_t seed = 0;
  if (const char* env = std::getenv("RBF_SOLVER_SEED")) {
    char* end = nullptr;
    std::uint64_t parsed = std::strtoull(env, &end, 10);
    if (end != env && *end == '\0') {
      seed = parsed;
    } else {
      std::cerr << "ignoring malformed RBF_SOLVER_SEED\n";
    }
  }
  app.add_option("--seed", seed, "Seed for randomized starts and batches");

  int jobs = 0;
  app.add_option("--jobs", jobs, "Worker threads for the shape search");

  CoeffsArgs coeffs_args;
  ConfigRegistry coeffs_config;
  CLI::App* coeffs_cmd =
      app.add_subcommand("coeffs", "Tabulate quadrature coefficients");
  coeffs_cmd->fallthrough();
  coeffs_config.bind(
      coeffs_cmd->add_option("--order", coeffs_args.order, "Stencil size"),
      "order", coeffs_args.order);
  coeffs_config.bind(coeffs_cmd->add_option("--base", coeffs_args.base,
                                            "Newest node position"),
                     "base", coeffs_args.base);
  coeffs_config.bind(coeffs_cmd->add_option("--step", coeffs_args.step,
                                            "Node spacing and default span"),
                     "step", coeffs_args.step);
  coeffs_config.bind(coeffs_cmd->add_option("--nodes", coeffs_args.nodes,
                                            "Comma list of nodes, newest "
                                            "first (overrides --base/--step)"),
                     "nodes", coeffs_args.nodes);
  coeffs_config.bind(
      coeffs_cmd->add_option("--lo", coeffs_args.lo, "Interval start"), "lo",
      coeffs_args.lo);
  coeffs_config.bind(
      coeffs_cmd->add_option("--hi", coeffs_args.hi, "Interval end"), "hi",
      coeffs_args.hi);
  coeffs_config.bind(coeffs_cmd->add_option("--width", coeffs_args.width,
                                            "Kernel width scale"),
                     "width", coeffs_args.width);
  coeffs_config.bind(coeffs_cmd->add_option("--method", coeffs_args.method,
                                            "rbf, adams, equal, or unipc"),
                     "method", coeffs_args.method);
  coeffs_config.bind(coeffs_cmd->add_option("--log-gamma-min",
                                            coeffs_args.log_gamma_min,
                                            "Sweep start, log10"),
                     "log-gamma-min", coeffs_args.log_gamma_min);
  coeffs_config.bind(coeffs_cmd->add_option("--log-gamma-max",
                                            coeffs_args.log_gamma_max,
                                            "Sweep end, log10"),
                     "log-gamma-max", coeffs_args.log_gamma_max);
  coeffs_config.bind(coeffs_cmd->add_option("--points", coeffs_args.points,
                                            "Sweep resolution"),
                     "points", coeffs_args.points);
  coeffs_config.bind(coeffs_cmd->add_flag("--no-constant",
                                          coeffs_args.no_constant,
                                          "Drop the constant augmentation"),
                     "no-constant", coeffs_args.no_constant);
  coeffs_config.bind(coeffs_cmd->add_option("--output", coeffs_args.output,
                                            "CSV destination, - for stdout"),
                     "output", coeffs_args.output);

  SampleArgs sample_args;
  ConfigRegistry sample_config;
  CLI::App* sample_cmd =
      app.add_subcommand("sample", "Integrate one trajectory");
  sample_cmd->fallthrough();
  sample_config.bind(sample_cmd->add_option("--problem", sample_args.problem,
                                            "Built-in test problem name"),
                     "problem", sample_args.problem);
  sample_config.bind(sample_cmd->add_option("--schedule", sample_args.schedule,
                                            "vp-linear, vp-cosine, or "
                                            "tabulated:<file>"),
                     "schedule", sample_args.schedule);
  sample_config.bind(sample_cmd->add_option("--t-min", sample_args.t_min,
                                            "Smallest time, negative for "
                                            "the schedule default"),
                     "t-min", sample_args.t_min);
  sample_config.bind(
      sample_cmd->add_option("--steps", sample_args.steps, "Solver steps"),
      "steps", sample_args.steps);
  sample_config.bind(
      sample_cmd->add_option("--order", sample_args.order, "Stencil size"),
      "order", sample_args.order);
  sample_config.bind(sample_cmd->add_option("--method", sample_args.method,
                                            "rbf, adams, equal, or euler"),
                     "method", sample_args.method);
  sample_config.bind(sample_cmd->add_option("--log-gamma",
                                            sample_args.log_gamma,
                                            "Fixed shape, log10"),
                     "log-gamma", sample_args.log_gamma);
  sample_config.bind(sample_cmd->add_option("--shape-schedule",
                                            sample_args.shape_schedule,
                                            "Per-step shape file"),
                     "shape-schedule", sample_args.shape_schedule);
  sample_config.bind(sample_cmd->add_option("--spacing", sample_args.spacing,
                                            "Grid spacing: lambda or time"),
                     "spacing", sample_args.spacing);
  sample_config.bind(sample_cmd->add_option("--warmup", sample_args.warmup,
                                            "Startup style: ramp or "
                                            "first-order"),
                     "warmup", sample_args.warmup);
  sample_config.bind(sample_cmd->add_flag("--no-corrector",
                                          sample_args.no_corrector,
                                          "Predictor only"),
                     "no-corrector", sample_args.no_corrector);
  sample_config.bind(
      sample_cmd->add_flag("--corrector-width-next",
                           sample_args.corrector_width_next,
                           "Scale corrector kernels by the next interval"),
      "corrector-width-next", sample_args.corrector_width_next);
  sample_config.bind(sample_cmd->add_flag("--no-constant",
                                          sample_args.no_constant,
                                          "Drop the constant augmentation"),
                     "no-constant", sample_args.no_constant);
  sample_config.bind(sample_cmd->add_flag("--lower-order-final",
                                          sample_args.lower_order_final,
                                          "Shrink the stencil near the end"),
                     "lower-order-final", sample_args.lower_order_final);
  sample_config.bind(sample_cmd->add_flag("--random-start",
                                          sample_args.random_start,
                                          "Draw the start state from a "
                                          "seeded normal"),
                     "random-start", sample_args.random_start);
  sample_config.bind(sample_cmd->add_option("--trace", sample_args.trace,
                                            "Step records as JSON lines"),
                     "trace", sample_args.trace);
  sample_config.bind(sample_cmd->add_option("--output", sample_args.output,
                                            "Final state CSV, - for stdout"),
                     "output", sample_args.output);

  ConvergeArgs converge_args;
  ConfigRegistry converge_config;
  CLI::App* converge_cmd =
      app.add_subcommand("converge", "Error against step count");
  converge_cmd->fallthrough();
  converge_config.bind(converge_cmd->add_option("--problem",
                                                converge_args.problem,
                                                "Built-in test problem name"),
                       "problem", converge_args.problem);
  converge_config.bind(
      converge_cmd->add_option("--schedule", converge_args.schedule,
                               "vp-linear, vp-cosine, or tabulated:<file>"),
      "schedule", converge_args.schedule);
  converge_config.bind(converge_cmd->add_option("--t-min",
                                                converge_args.t_min,
                                                "Smallest time, negative "
                                                "for the schedule default"),
                       "t-min", converge_args.t_min);
  converge_config.bind(converge_cmd->add_option("--steps-list",
                                                converge_args.steps_list,
                                                "Comma list of step counts"),
                       "steps-list", converge_args.steps_list);
  converge_config.bind(converge_cmd->add_option("--order",
                                                converge_args.order,
                                                "Stencil size"),
                       "order", converge_args.order);
  converge_config.bind(converge_cmd->add_option("--method",
                                                converge_args.method,
                                                "rbf, adams, equal, or euler"),
                       "method", converge_args.method);
  converge_config.bind(converge_cmd->add_option("--log-gamma",
                                                converge_args.log_gamma,
                                                "Fixed shape, log10"),
                       "log-gamma", converge_args.log_gamma);
  converge_config.bind(converge_cmd->add_option("--warmup",
                                                converge_args.warmup,
                                                "Startup style: ramp or "
                                                "first-order"),
                       "warmup", converge_args.warmup);
  converge_config.bind(converge_cmd->add_flag("--no-corrector",
                                              converge_args.no_corrector,
                                              "Predictor only"),
                       "no-corrector", converge_args.no_corrector);
  converge_config.bind(
      converge_cmd->add_flag("--corrector-width-next",
                             converge_args.corrector_width_next,
                             "Scale corrector kernels by the next interval"),
      "corrector-width-next", converge_args.corrector_width_next);
  converge_config.bind(converge_cmd->add_option("--reference-steps",
                                                converge_args.reference_steps,
                                                "Reference solve resolution"),
                       "reference-steps", converge_args.reference_steps);
  converge_config.bind(converge_cmd->add_option("--output",
                                                converge_args.output,
                                                "CSV destination, - for "
                                                "stdout"),
                       "output", converge_args.output);

  OptimizeArgs optimize_args;
  ConfigRegistry optimize_config;
  CLI::App* optimize_cmd =
      app.add_subcommand("optimize", "Learn a per-step shape schedule");
  optimize_cmd->fallthrough();
  optimize_config.bind(optimize_cmd->add_option("--problem",
                                                optimize_args.problem,
                                                "Built-in test problem name"),
                       "problem", optimize_args.problem);
  optimize_config.bind(
      optimize_cmd->add_option("--schedule", optimize_args.schedule,
                               "vp-linear, vp-cosine, or tabulated:<file>"),
      "schedule", optimize_args.schedule);
  optimize_config.bind(optimize_cmd->add_option("--t-min",
                                                optimize_args.t_min,
                                                "Smallest time, negative "
                                                "for the schedule default"),
                       "t-min", optimize_args.t_min);
  optimize_config.bind(optimize_cmd->add_option("--steps",
                                                optimize_args.steps,
                                                "Solver steps"),
                       "steps", optimize_args.steps);
  optimize_config.bind(optimize_cmd->add_option("--order",
                                                optimize_args.order,
                                                "Stencil size"),
                       "order", optimize_args.order);
  optimize_config.bind(optimize_cmd->add_option("--batch",
                                                optimize_args.batch,
                                                "Training pairs per "
                                                "replicate"),
                       "batch", optimize_args.batch);
  optimize_config.bind(
      optimize_cmd->add_option("--reference-steps",
                               optimize_args.reference_steps,
                               "Steps for the target trajectories"),
      "reference-steps", optimize_args.reference_steps);
  optimize_config.bind(optimize_cmd->add_option("--resolution",
                                                optimize_args.resolution,
                                                "Grid points per axis"),
                       "resolution", optimize_args.resolution);
  optimize_config.bind(optimize_cmd->add_option("--replicates",
                                                optimize_args.replicates,
                                                "Independent batches to "
                                                "average"),
                       "replicates", optimize_args.replicates);
  optimize_config.bind(optimize_cmd->add_option("--mode", optimize_args.mode,
                                                "split-joint, "
                                                "split-independent, or "
                                                "shared"),
                       "mode", optimize_args.mode);
  optimize_config.bind(optimize_cmd->add_option("--log-gamma-min",
                                                optimize_args.log_gamma_min,
                                                "Axis start, log10"),
                       "log-gamma-min", optimize_args.log_gamma_min);
  optimize_config.bind(optimize_cmd->add_option("--log-gamma-max",
                                                optimize_args.log_gamma_max,
                                                "Axis end, log10"),
                       "log-gamma-max", optimize_args.log_gamma_max);
  optimize_config.bind(optimize_cmd->add_option("--adams-threshold",
                                                optimize_args.adams_threshold,
                                                "Log shape at or above "
                                                "which candidates become "
                                                "polynomial fallbacks"),
                       "adams-threshold", optimize_args.adams_threshold);
  optimize_config.bind(optimize_cmd->add_flag("--no-adams-candidate",
                                              optimize_args.no_adams_candidate,
                                              "Do not guarantee a "
                                              "polynomial candidate"),
                       "no-adams-candidate",
                       optimize_args.no_adams_candidate);
  optimize_config.bind(optimize_cmd->add_flag("--serial",
                                              optimize_args.serial,
                                              "Disable the parallel search"),
                       "serial", optimize_args.serial);
  optimize_config.bind(
      optimize_cmd->add_flag("--corrector-width-next",
                             optimize_args.corrector_width_next,
                             "Scale corrector kernels by the next interval"),
      "corrector-width-next", optimize_args.corrector_width_next);
  optimize_config.bind(optimize_cmd->add_option("--output",
                                                optimize_args.output,
                                                "Schedule JSON, - for "
                                                "stdout"),
                       "output", optimize_args.output);

  VerifyArgs verify_args;
  ConfigRegistry verify_config;
  CLI::App* verify_cmd =
      app.add_subcommand("verify", "Run the invariant suite");
  verify_cmd->fallthrough();
  verify_config.bind(verify_cmd->add_option("--only", verify_args.only,
                                            "Restrict to one module"),
                     "only", verify_args.only);
  verify_config.bind(verify_cmd->add_option("--inject-fault",
                                            verify_args.inject_fault,
                                            "Corrupt one check to prove "
                                            "the suite can fail"),
                     "inject-fault", verify_args.inject_fault);
  verify_config.bind(
      verify_cmd->add_flag("--json", verify_args.json, "Machine readable"),
      "json", verify_args.json);
  verify_config.bind(verify_cmd->add_option("--output", verify_args.output,
                                            "Report destination, - for "
                                            "stdout"),
                     "output", verify_args.output);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& error) {
    int code = app.exit(error);
    return code == 0 ? 0 : 2;
  }

  try {
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw UsageError("cannot open config file: " + config_path);
      nlohmann::json object =
          nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/false);
      if (object.is_discarded()) {
        throw UsageError("config file is not valid JSON: " + config_path);
      }
      if (app.got_subcommand(coeffs_cmd)) coeffs_config.apply(object);
      if (app.got_subcommand(sample_cmd)) sample_config.apply(object);
      if (app.got_subcommand(converge_cmd)) converge_config.apply(object);
      if (app.got_subcommand(optimize_cmd)) optimize_config.apply(object);
      if (app.got_subcommand(verify_cmd)) verify_config.apply(object);
    }

    if (jobs > 0) {
#ifdef _OPENMP
      omp_set_num_threads(jobs);
#endif
    }

    if (app.got_subcommand(coeffs_cmd)) return run_coeffs(coeffs_args);
    if (app.got_subcommand(sample_cmd)) return run_sample(sample_args, seed);
    if (app.got_subcommand(converge_cmd)) return run_converge(converge_args);
    if (app.got_subcommand(optimize_cmd)) {
      return run_optimize(optimize_args, seed);
    }
    if (app.got_subcommand(verify_cmd)) return run_verify(verify_args);
  } catch (const UsageError& error) {
    std::cerr << "error: " << error.what() << "\n";
    return 2;
  } catch (const std::exception& error) {
    std::cerr << "error: " << error.what() << "\n";
    return 1;
  }
  return 2;
}
