#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rbf/coeffs.hpp"
#include "rbf/schedule.hpp"

namespace rbf {

// Callable wrapper around the data prediction model. Calls go through
// operator(), which counts every evaluation; the sampling loop spends
// exactly steps() evaluations per trajectory and tests pin that budget.
class ModelEvaluator {
 public:
  explicit ModelEvaluator(int dimension) : dimension_(dimension) {}
  virtual ~ModelEvaluator() = default;

  Eigen::VectorXd operator()(const Eigen::VectorXd& x, double lambda) {
    ++count_;
    return evaluate(x, lambda);
  }

  int dimension() const { return dimension_; }
  long evaluation_count() const { return count_; }
  void reset_evaluation_count() { count_ = 0; }

 private:
  virtual Eigen::VectorXd evaluate(const Eigen::VectorXd& x,
                                   double lambda) = 0;

  int dimension_;
  long count_ = 0;
};

// Sliding window of past model evaluations, newest first. Slot j holds
// the evaluation taken at lambda_at(j), matching the stencil layout the
// coefficient constructions expect.
class EvaluationHistory {
 public:
  explicit EvaluationHistory(int capacity);

  void push(double lambda, Eigen::VectorXd value);
  int size() const { return static_cast<int>(lambdas_.size()); }
  double lambda_at(int j) const { return lambdas_.at(j); }
  const Eigen::VectorXd& value_at(int j) const { return values_.at(j); }

  // Stencil over the newest `count` entries.
  NodeSet node_set(int count, double width_scale) const;

 private:
  int capacity_;
  std::vector<double> lambdas_;
  std::vector<Eigen::VectorXd> values_;
};

// One optimized shape parameter, or the marker that says to use the
// polynomial construction at that slot instead.
struct ShapeEntry {
  bool adams = false;
  double log_gamma = 0.0;
};

// Per-step shape parameters produced by the optimizer. pred[i] drives the
// predictor from node i to node i+1, corr[i] the corrector refining the
// state at node i+1. Slots may be empty (never optimized, such as the
// very first predictor); empty slots fall back to the polynomial
// construction. Entries at or above adams_threshold are stored as
// markers when the schedule is built or loaded.
struct ShapeSchedule {
  int steps = 0;
  int order = 0;
  std::string mode = "split-joint";
  double adams_threshold = 2.0;
  std::vector<std::optional<ShapeEntry>> pred;
  std::vector<std::optional<ShapeEntry>> corr;

  static ShapeSchedule empty(int steps, int order);

  // Applies the threshold rule and stores the entry.
  void set_pred(int i, double log_gamma);
  void set_corr(int i, double log_gamma);
  void set_pred_adams(int i);
  void set_corr_adams(int i);
};

// Serialized as {"nfe", "order", "mode", "adams_threshold", "entries"}
// with one entries row per step index carrying "log_gamma_pred" and/or
// "log_gamma_corr", each either a number or the string "adams".
std::string shape_schedule_to_json(const ShapeSchedule& schedule);
ShapeSchedule shape_schedule_from_json(const std::string& text);
ShapeSchedule load_shape_schedule(const std::string& path);
void save_shape_schedule(const ShapeSchedule& schedule,
                         const std::string& path);

enum class SolverMethod { rbf, adams, equal, euler };

const char* solver_method_name(SolverMethod method);
std::optional<SolverMethod> parse_solver_method(const std::string& name);

// How the solver behaves before the stencil is full: ramp_order grows the
// order one step at a time, first_order holds at one model evaluation per
// update until a full stencil is available.
enum class WarmupStyle { ramp_order, first_order };

struct SolverConfig {
  SolverMethod method = SolverMethod::rbf;
  int order = 3;
  bool use_corrector = true;
  bool include_constant_term = true;

  // Fixed shape parameter used when no per-step schedule is supplied.
  double log_gamma = 0.0;
  std::optional<ShapeSchedule> shape_schedule;

  WarmupStyle warmup = WarmupStyle::ramp_order;
  // Cap the order near the end of the trajectory the way DPM style
  // solvers do. Off by default; it trades tail accuracy for stability on
  // very short grids and caps the measurable convergence order.
  bool lower_order_final = false;
  // The corrector measures its kernel width against the step it refines.
  // This switches it to the following step's width where one exists.
  bool corrector_width_from_next_step = false;

  bool record_trace = false;
};

// One row of the sampling trace, written after the step that lands the
// state on node i+1.
struct StepRecord {
  int index = 0;
  double t = 0.0;
  double lambda = 0.0;
  std::string method;
  double gamma_pred = std::numeric_limits<double>::quiet_NaN();
  double gamma_corr = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> coefficients;
  std::vector<double> magnitude_ratio;
  double x_norm = 0.0;
};

void write_trace_jsonl(const std::vector<StepRecord>& trace,
                       std::ostream& out);

struct SampleResult {
  Eigen::VectorXd state;
  long evaluations = 0;
  std::vector<StepRecord> trace;
};

// Predictor-corrector sampling loop. Starts from terminal state x_init
// at grid node 0 and returns the predictor output at the final node.
// Spends exactly grid.steps() model evaluations. Throws
// std::runtime_error if the state stops being finite.
SampleResult sample(ModelEvaluator& model, const TimeGrid& grid,
                    const SolverConfig& config, const Eigen::VectorXd& x_init);

// Coefficient selection shared by the sampling loop and the shape
// search. Builds the configured construction on the given stencil and
// falls back to the polynomial one when the kernel system is singular.
// entry carries the per-step shape parameter when a schedule is active.
CoefficientVector select_coefficients(const SolverConfig& config,
                                      const std::optional<ShapeEntry>& entry,
                                      const NodeSet& nodes, double lo,
                                      double hi);

// Stencil size the solver uses at the given step: the configured order
// clipped by the warm-up policy and, when enabled, the end-of-trajectory
// cap. Always at least one.
int effective_order(const SolverConfig& config, int step, int total_steps);

}  // namespace rbf
