#include "rbf/shapeopt.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace rbf {
namespace {

// Batched mirror of EvaluationHistory: slot j holds one D x B matrix of
// model evaluations taken at lambda_at(j), newest first.
class BatchHistory {
 public:
  explicit BatchHistory(int capacity) : capacity_(capacity) {}

  void push(double lambda, Eigen::MatrixXd values) {
    lambdas_.insert(lambdas_.begin(), lambda);
    values_.insert(values_.begin(), std::move(values));
    if (static_cast<int>(lambdas_.size()) > capacity_) {
      lambdas_.pop_back();
      values_.pop_back();
    }
  }

  const Eigen::MatrixXd& value_at(int j) const { return values_.at(j); }

  NodeSet node_set(int count, double width_scale) const {
    return make_node_set(
        std::vector<double>(lambdas_.begin(), lambdas_.begin() + count),
        width_scale);
  }

 private:
  int capacity_;
  std::vector<double> lambdas_;
  std::vector<Eigen::MatrixXd> values_;
};

struct CandidatePair {
  ShapeEntry corr;
  ShapeEntry pred;
};

int adams_count(const CandidatePair& pair) {
  return (pair.corr.adams ? 1 : 0) + (pair.pred.adams ? 1 : 0);
}

double log_gamma_sum(const CandidatePair& pair) {
  double sum = 0.0;
  if (!pair.corr.adams) sum += pair.corr.log_gamma;
  if (!pair.pred.adams) sum += pair.pred.log_gamma;
  return sum;
}

// Strict preference order for the argmin: lower loss, then more
// polynomial markers, then the larger shape parameters. NaN losses lose
// against everything.
bool candidate_better(double loss_a, const CandidatePair& a, double loss_b,
                      const CandidatePair& b) {
  if (std::isnan(loss_a)) return false;
  if (std::isnan(loss_b)) return true;
  if (loss_a != loss_b) return loss_a < loss_b;
  if (adams_count(a) != adams_count(b)) return adams_count(a) > adams_count(b);
  return log_gamma_sum(a) > log_gamma_sum(b);
}

Eigen::MatrixXd weighted_history_sum(const Eigen::VectorXd& coeffs,
                                     const BatchHistory& history, int count) {
  Eigen::MatrixXd acc = coeffs(0) * history.value_at(0);
  for (int j = 1; j < count; ++j) {
    acc += coeffs(j) * history.value_at(j);
  }
  return acc;
}

struct StepGeometry {
  NodeSet corr_nodes;
  NodeSet pred_nodes;
  double corr_lo, corr_hi;
  double pred_lo, pred_hi;
  double sigma_ratio_corr;
  double sigma_corr;
  double sigma_ratio_pred;
  double sigma_pred;
  int p_corr;
  int p_pred;
};

// Composite two step prediction under one candidate pair: correct the
// state at node i+1, then predict through node i+2, both from cached
// evaluations.
double candidate_loss(const CandidatePair& pair, const SolverConfig& config,
                      const StepGeometry& geom, const BatchHistory& history,
                      const Eigen::MatrixXd& x_corr,
                      const Eigen::MatrixXd& target) {
  CoefficientVector cc =
      select_coefficients(config, pair.corr, geom.corr_nodes, geom.corr_lo,
                          geom.corr_hi);
  CoefficientVector cp =
      select_coefficients(config, pair.pred, geom.pred_nodes, geom.pred_lo,
                          geom.pred_hi);
  Eigen::MatrixXd corrected =
      geom.sigma_ratio_corr * x_corr +
      geom.sigma_corr * weighted_history_sum(cc.values, history, geom.p_corr);
  Eigen::MatrixXd predicted =
      geom.sigma_ratio_pred * corrected +
      geom.sigma_pred * weighted_history_sum(cp.values, history, geom.p_pred);
  return (predicted - target).squaredNorm();
}

}  // namespace

Eigen::VectorXd intermediate_target(const NoiseSchedule& schedule,
                                    const TargetPair& pair, double t) {
  auto [alpha, sigma] = schedule.alpha_sigma(t);
  return alpha * pair.data + sigma * pair.terminal;
}

std::vector<TargetPair> generate_target_pairs(ModelEvaluator& model,
                                              const NoiseSchedule& schedule,
                                              int reference_steps, int count,
                                              std::uint64_t seed) {
  if (count < 1) {
    throw std::invalid_argument("target set needs at least one pair");
  }
  TimeGrid grid = build_time_grid(schedule, reference_steps,
                                  GridSpacing::uniform_lambda);
  SolverConfig reference;
  reference.method = SolverMethod::adams;
  reference.order = 3;
  reference.use_corrector = true;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<TargetPair> pairs;
  pairs.reserve(count);
  for (int n = 0; n < count; ++n) {
    Eigen::VectorXd terminal(model.dimension());
    for (int d = 0; d < terminal.size(); ++d) terminal(d) = normal(rng);
    SampleResult run = sample(model, grid, reference, terminal);
    pairs.push_back(TargetPair{std::move(terminal), std::move(run.state)});
  }
  return pairs;
}

const char* search_mode_name(SearchMode mode) {
  switch (mode) {
    case SearchMode::split_joint: return "split-joint";
    case SearchMode::split_independent: return "split-independent";
    case SearchMode::shared: return "shared";
  }
  return "unknown";
}

std::optional<SearchMode> parse_search_mode(const std::string& name) {
  if (name == "split-joint") return SearchMode::split_joint;
  if (name == "split-independent") return SearchMode::split_independent;
  if (name == "shared") return SearchMode::shared;
  return std::nullopt;
}

std::vector<ShapeEntry> build_candidate_axis(const SearchSpec& spec) {
  if (spec.resolution < 1) {
    throw std::invalid_argument("search resolution must be positive");
  }
  if (!(spec.log_gamma_min <= spec.log_gamma_max)) {
    throw std::invalid_argument("search range is empty");
  }
  std::vector<ShapeEntry> axis;
  axis.reserve(spec.resolution + 1);
  bool has_adams = false;
  for (int k = 0; k < spec.resolution; ++k) {
    double log_gamma =
        spec.resolution == 1
            ? spec.log_gamma_min
            : spec.log_gamma_min + (spec.log_gamma_max - spec.log_gamma_min) *
                                       double(k) / (spec.resolution - 1);
    bool adams = log_gamma >= spec.adams_threshold;
    axis.push_back(ShapeEntry{adams, log_gamma});
    has_adams = has_adams || adams;
  }
  if (spec.include_adams_candidate && !has_adams) {
    axis.push_back(ShapeEntry{true, 0.0});
  }
  return axis;
}

OptimizeResult optimize_shape_parameters(
    ModelEvaluator& model, const TimeGrid& grid, const SolverConfig& config,
    const SearchSpec& spec, const std::vector<TargetPair>& targets) {
  if (config.method != SolverMethod::rbf) {
    throw std::invalid_argument("shape optimization requires the rbf method");
  }
  if (!config.use_corrector) {
    throw std::invalid_argument("shape optimization requires the corrector");
  }
  if (targets.empty()) {
    throw std::invalid_argument("shape optimization needs target pairs");
  }

  int steps = grid.steps();
  int batch = static_cast<int>(targets.size());
  int dim = model.dimension();
  long evaluations_before = model.evaluation_count();

  OptimizeResult result;
  result.schedule = ShapeSchedule::empty(steps, config.order);
  result.schedule.mode = search_mode_name(spec.mode);
  result.schedule.adams_threshold = spec.adams_threshold;

  std::vector<ShapeEntry> axis = build_candidate_axis(spec);
  const ShapeEntry adams_entry{true, 0.0};

  Eigen::MatrixXd x_corr(dim, batch);
  for (int b = 0; b < batch; ++b) {
    if (targets[b].terminal.size() != dim || targets[b].data.size() != dim) {
      throw std::invalid_argument("target pair dimension mismatch");
    }
    x_corr.col(b) = targets[b].terminal;
  }

  BatchHistory history(config.order + 1);
  {
    Eigen::MatrixXd evals(dim, batch);
    for (int b = 0; b < batch; ++b) {
      evals.col(b) = model(x_corr.col(b), grid.lambdas[0]);
    }
    history.push(grid.lambdas[0], std::move(evals));
  }

  SolverConfig local = config;
  local.shape_schedule.reset();

  for (int i = 0; i < steps; ++i) {
    double lo = grid.lambdas[i];
    double hi = grid.lambdas[i + 1];
    double width = hi - lo;
    double sigma_ratio = grid.sigmas[i + 1] / grid.sigmas[i];

    int p_pred = effective_order(local, i, steps);
    NodeSet pred_nodes = history.node_set(p_pred, width);
    std::optional<ShapeEntry> pred_entry =
        result.schedule.pred[i] ? result.schedule.pred[i]
                                : std::optional<ShapeEntry>(adams_entry);
    CoefficientVector pred_coeffs =
        select_coefficients(local, pred_entry, pred_nodes, lo, hi);
    Eigen::MatrixXd x_pred =
        sigma_ratio * x_corr +
        grid.sigmas[i + 1] *
            weighted_history_sum(pred_coeffs.values, history, p_pred);

    if (i == steps - 1) break;

    {
      Eigen::MatrixXd evals(dim, batch);
      for (int b = 0; b < batch; ++b) {
        evals.col(b) = model(x_pred.col(b), grid.lambdas[i + 1]);
      }
      history.push(grid.lambdas[i + 1], std::move(evals));
    }

    // Choose the corrector shape for this step and the predictor shape
    // for the next one by scoring the composite two step prediction
    // against the target trajectory at node i+2.
    StepGeometry geom;
    geom.p_corr = p_pred + 1;
    geom.p_pred = effective_order(local, i + 1, steps);
    double corr_width = width;
    if (local.corrector_width_from_next_step) {
      corr_width = grid.lambdas[i + 2] - grid.lambdas[i + 1];
    }
    geom.corr_nodes = history.node_set(geom.p_corr, corr_width);
    geom.pred_nodes =
        history.node_set(geom.p_pred, grid.lambdas[i + 2] - grid.lambdas[i + 1]);
    geom.corr_lo = lo;
    geom.corr_hi = hi;
    geom.pred_lo = grid.lambdas[i + 1];
    geom.pred_hi = grid.lambdas[i + 2];
    geom.sigma_ratio_corr = sigma_ratio;
    geom.sigma_corr = grid.sigmas[i + 1];
    geom.sigma_ratio_pred = grid.sigmas[i + 2] / grid.sigmas[i + 1];
    geom.sigma_pred = grid.sigmas[i + 2];

    Eigen::MatrixXd target(dim, batch);
    for (int b = 0; b < batch; ++b) {
      target.col(b) = grid.alphas[i + 2] * targets[b].data +
                      grid.sigmas[i + 2] * targets[b].terminal;
    }

    auto evaluate_candidates = [&](const std::vector<CandidatePair>& pairs)
        -> std::vector<double> {
      std::vector<double> losses(pairs.size());
      if (spec.parallel) {
#ifdef RBF_HAVE_OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (long k = 0; k < static_cast<long>(pairs.size()); ++k) {
          losses[k] = candidate_loss(pairs[k], local, geom, history, x_corr,
                                     target);
        }
      } else {
        for (std::size_t k = 0; k < pairs.size(); ++k) {
          losses[k] = candidate_loss(pairs[k], local, geom, history, x_corr,
                                     target);
        }
      }
      return losses;
    };

    auto argmin = [&](const std::vector<CandidatePair>& pairs,
                      const std::vector<double>& losses) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < pairs.size(); ++k) {
        if (candidate_better(losses[k], pairs[k], losses[best], pairs[best])) {
          best = k;
        }
      }
      return best;
    };

    StepSearchRecord record;
    record.step = i;
    CandidatePair chosen;

    if (spec.mode == SearchMode::split_independent) {
      std::vector<CandidatePair> corr_pairs;
      corr_pairs.reserve(axis.size());
      for (const ShapeEntry& ce : axis) {
        corr_pairs.push_back(CandidatePair{ce, adams_entry});
      }
      std::vector<double> corr_losses = evaluate_candidates(corr_pairs);
      std::size_t best_corr = argmin(corr_pairs, corr_losses);

      std::vector<CandidatePair> pred_pairs;
      pred_pairs.reserve(axis.size());
      for (const ShapeEntry& pe : axis) {
        pred_pairs.push_back(CandidatePair{corr_pairs[best_corr].corr, pe});
      }
      std::vector<double> pred_losses = evaluate_candidates(pred_pairs);
      std::size_t best_pred = argmin(pred_pairs, pred_losses);

      chosen = pred_pairs[best_pred];
      record.best_loss = pred_losses[best_pred];
      record.pairs_evaluated =
          static_cast<long>(corr_pairs.size() + pred_pairs.size());
    } else {
      std::vector<CandidatePair> pairs;
      if (spec.mode == SearchMode::split_joint) {
        pairs.reserve(axis.size() * axis.size());
        for (const ShapeEntry& ce : axis) {
          for (const ShapeEntry& pe : axis) {
            pairs.push_back(CandidatePair{ce, pe});
          }
        }
      } else {
        pairs.reserve(axis.size());
        for (const ShapeEntry& e : axis) {
          pairs.push_back(CandidatePair{e, e});
        }
      }
      std::vector<double> losses = evaluate_candidates(pairs);
      std::size_t best = argmin(pairs, losses);
      chosen = pairs[best];
      record.best_loss = losses[best];
      record.pairs_evaluated = static_cast<long>(pairs.size());
    }

    record.adams_loss = candidate_loss(CandidatePair{adams_entry, adams_entry},
                                       local, geom, history, x_corr, target);
    result.steps.push_back(record);

    if (chosen.corr.adams) {
      result.schedule.set_corr_adams(i);
    } else {
      result.schedule.set_corr(i, chosen.corr.log_gamma);
    }
    if (chosen.pred.adams) {
      result.schedule.set_pred_adams(i + 1);
    } else {
      result.schedule.set_pred(i + 1, chosen.pred.log_gamma);
    }

    // Corrector update with the freshly chosen shape.
    CoefficientVector corr_coeffs = select_coefficients(
        local, result.schedule.corr[i], geom.corr_nodes, lo, hi);
    x_corr = sigma_ratio * x_corr +
             grid.sigmas[i + 1] *
                 weighted_history_sum(corr_coeffs.values, history, geom.p_corr);
  }

  result.model_evaluations = model.evaluation_count() - evaluations_before;
  return result;
}

ShapeSchedule average_shape_schedules(
    const std::vector<ShapeSchedule>& schedules) {
  if (schedules.empty()) {
    throw std::invalid_argument("cannot average an empty schedule list");
  }
  const ShapeSchedule& first = schedules.front();
  for (const ShapeSchedule& s : schedules) {
    if (s.steps != first.steps || s.order != first.order) {
      throw std::invalid_argument("schedules do not share a step count");
    }
  }

  ShapeSchedule averaged = ShapeSchedule::empty(first.steps, first.order);
  averaged.mode = "averaged";
  averaged.adams_threshold = first.adams_threshold;

  auto combine = [&](auto slot_of) {
    std::vector<std::optional<ShapeEntry>> out(first.steps);
    for (int i = 0; i < first.steps; ++i) {
      bool any_adams = false;
      bool any_present = false;
      double sum = 0.0;
      int finite = 0;
      for (const ShapeSchedule& s : schedules) {
        const std::optional<ShapeEntry>& slot = slot_of(s, i);
        if (!slot) continue;
        any_present = true;
        if (slot->adams) {
          any_adams = true;
        } else {
          sum += slot->log_gamma;
          ++finite;
        }
      }
      if (!any_present) continue;
      if (any_adams) {
        out[i] = ShapeEntry{true, 0.0};
      } else {
        out[i] = ShapeEntry{false, sum / finite};
      }
    }
    return out;
  };

  averaged.pred = combine(
      [](const ShapeSchedule& s, int i) -> const std::optional<ShapeEntry>& {
        return s.pred[i];
      });
  averaged.corr = combine(
      [](const ShapeSchedule& s, int i) -> const std::optional<ShapeEntry>& {
        return s.corr[i];
      });
  return averaged;
}

}  // namespace rbf
