#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "rbf/sampler.hpp"
#include "rbf/schedule.hpp"

namespace rbf {

// One supervision pair for the shape search: a terminal state and the
// data point a reference solve associates with it.
struct TargetPair {
  Eigen::VectorXd terminal;
  Eigen::VectorXd data;
};

// Point the target trajectory passes through at time t, the noising
// interpolation alpha_t * data + sigma_t * terminal.
Eigen::VectorXd intermediate_target(const NoiseSchedule& schedule,
                                    const TargetPair& pair, double t);

// Draws `count` terminal states from a seeded standard normal and pairs
// each with the output of a high resolution polynomial reference run.
std::vector<TargetPair> generate_target_pairs(ModelEvaluator& model,
                                              const NoiseSchedule& schedule,
                                              int reference_steps, int count,
                                              std::uint64_t seed);

enum class SearchMode { split_joint, split_independent, shared };

const char* search_mode_name(SearchMode mode);
std::optional<SearchMode> parse_search_mode(const std::string& name);

// Grid search specification. The axis holds `resolution` log10 shape
// values evenly spaced over [log_gamma_min, log_gamma_max]; values at or
// above adams_threshold become polynomial fallback markers. When
// include_adams_candidate is set and no grid point maps to the marker,
// one is appended, so the polynomial construction is always in the
// running and the optimized schedule can never lose to it on the
// training batch.
struct SearchSpec {
  double log_gamma_min = -2.0;
  double log_gamma_max = 2.0;
  int resolution = 33;
  SearchMode mode = SearchMode::split_joint;
  bool include_adams_candidate = true;
  double adams_threshold = 2.0;
  bool parallel = true;
};

// Candidate axis after thresholding, exposed so tests can pin the
// candidate counting rules.
std::vector<ShapeEntry> build_candidate_axis(const SearchSpec& spec);

// Search diagnostics for one interior step.
struct StepSearchRecord {
  int step = 0;
  double best_loss = 0.0;
  double adams_loss = 0.0;
  long pairs_evaluated = 0;
};

struct OptimizeResult {
  ShapeSchedule schedule;
  std::vector<StepSearchRecord> steps;
  long model_evaluations = 0;
};

// Greedy per-step shape optimization. Walks the predictor-corrector loop
// once over the whole batch and, after each new model evaluation, picks
// the (corrector, next predictor) shape pair whose composite two step
// prediction lands closest to the target trajectory at the node after
// next. Candidate evaluation reuses the cached evaluations, so the whole
// search costs exactly grid.steps() model calls per batch element, the
// same as one sampling pass. Requires the corrector to be enabled and
// the kernel method selected.
OptimizeResult optimize_shape_parameters(ModelEvaluator& model,
                                         const TimeGrid& grid,
                                         const SolverConfig& config,
                                         const SearchSpec& spec,
                                         const std::vector<TargetPair>& targets);

// Element-wise combination of schedules learned on different batches:
// log shape values average in log space and any polynomial marker wins
// its slot outright.
ShapeSchedule average_shape_schedules(
    const std::vector<ShapeSchedule>& schedules);

}  // namespace rbf
