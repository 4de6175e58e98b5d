#include "rbf/sampler.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace rbf {

EvaluationHistory::EvaluationHistory(int capacity) : capacity_(capacity) {
  if (capacity < 1) {
    throw std::invalid_argument("history capacity must be at least one");
  }
}

void EvaluationHistory::push(double lambda, Eigen::VectorXd value) {
  lambdas_.insert(lambdas_.begin(), lambda);
  values_.insert(values_.begin(), std::move(value));
  if (static_cast<int>(lambdas_.size()) > capacity_) {
    lambdas_.pop_back();
    values_.pop_back();
  }
}

NodeSet EvaluationHistory::node_set(int count, double width_scale) const {
  if (count < 1 || count > size()) {
    throw std::out_of_range("requested stencil exceeds recorded history");
  }
  return make_node_set(
      std::vector<double>(lambdas_.begin(), lambdas_.begin() + count),
      width_scale);
}

ShapeSchedule ShapeSchedule::empty(int steps, int order) {
  ShapeSchedule schedule;
  schedule.steps = steps;
  schedule.order = order;
  schedule.pred.assign(steps, std::nullopt);
  schedule.corr.assign(steps, std::nullopt);
  return schedule;
}

namespace {

ShapeEntry make_entry(double log_gamma, double threshold) {
  return ShapeEntry{log_gamma >= threshold, log_gamma};
}

}  // namespace

void ShapeSchedule::set_pred(int i, double log_gamma) {
  pred.at(i) = make_entry(log_gamma, adams_threshold);
}

void ShapeSchedule::set_corr(int i, double log_gamma) {
  corr.at(i) = make_entry(log_gamma, adams_threshold);
}

void ShapeSchedule::set_pred_adams(int i) {
  pred.at(i) = ShapeEntry{true, 0.0};
}

void ShapeSchedule::set_corr_adams(int i) {
  corr.at(i) = ShapeEntry{true, 0.0};
}

namespace {

nlohmann::json entry_to_json(const ShapeEntry& entry) {
  if (entry.adams) return "adams";
  return entry.log_gamma;
}

std::optional<ShapeEntry> entry_from_json(const nlohmann::json& value,
                                          double threshold,
                                          const char* field) {
  if (value.is_string()) {
    if (value.get<std::string>() != "adams") {
      throw std::runtime_error(std::string(field) +
                               " must be a number or \"adams\"");
    }
    return ShapeEntry{true, 0.0};
  }
  if (!value.is_number()) {
    throw std::runtime_error(std::string(field) +
                             " must be a number or \"adams\"");
  }
  return make_entry(value.get<double>(), threshold);
}

}  // namespace

std::string shape_schedule_to_json(const ShapeSchedule& schedule) {
  nlohmann::json root;
  root["nfe"] = schedule.steps;
  root["order"] = schedule.order;
  root["mode"] = schedule.mode;
  root["adams_threshold"] = schedule.adams_threshold;
  nlohmann::json entries = nlohmann::json::array();
  for (int i = 0; i < schedule.steps; ++i) {
    if (!schedule.pred[i] && !schedule.corr[i]) continue;
    nlohmann::json row;
    row["i"] = i;
    if (schedule.pred[i]) row["log_gamma_pred"] = entry_to_json(*schedule.pred[i]);
    if (schedule.corr[i]) row["log_gamma_corr"] = entry_to_json(*schedule.corr[i]);
    entries.push_back(std::move(row));
  }
  root["entries"] = std::move(entries);
  return root.dump(2);
}

ShapeSchedule shape_schedule_from_json(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(std::string("shape schedule is not valid JSON: ") +
                             e.what());
  }
  if (!root.is_object()) {
    throw std::runtime_error("shape schedule must be a JSON object");
  }
  for (const auto& item : root.items()) {
    const std::string& key = item.key();
    if (key != "nfe" && key != "order" && key != "mode" &&
        key != "adams_threshold" && key != "entries") {
      throw std::runtime_error("unknown shape schedule key: " + key);
    }
  }
  if (!root.contains("nfe") || !root.contains("entries")) {
    throw std::runtime_error("shape schedule needs nfe and entries");
  }

  ShapeSchedule schedule;
  schedule.steps = root["nfe"].get<int>();
  if (schedule.steps < 1) {
    throw std::runtime_error("shape schedule nfe must be positive");
  }
  schedule.order = root.value("order", 0);
  schedule.mode = root.value("mode", std::string("split-joint"));
  schedule.adams_threshold = root.value("adams_threshold", 2.0);
  schedule.pred.assign(schedule.steps, std::nullopt);
  schedule.corr.assign(schedule.steps, std::nullopt);

  for (const auto& row : root["entries"]) {
    if (!row.is_object() || !row.contains("i")) {
      throw std::runtime_error("shape schedule entries need an index i");
    }
    for (const auto& item : row.items()) {
      const std::string& key = item.key();
      if (key != "i" && key != "log_gamma_pred" && key != "log_gamma_corr") {
        throw std::runtime_error("unknown shape schedule entry key: " + key);
      }
    }
    int i = row["i"].get<int>();
    if (i < 0 || i >= schedule.steps) {
      throw std::runtime_error("shape schedule entry index out of range");
    }
    if (row.contains("log_gamma_pred")) {
      schedule.pred[i] = entry_from_json(
          row["log_gamma_pred"], schedule.adams_threshold, "log_gamma_pred");
    }
    if (row.contains("log_gamma_corr")) {
      schedule.corr[i] = entry_from_json(
          row["log_gamma_corr"], schedule.adams_threshold, "log_gamma_corr");
    }
  }
  return schedule;
}

ShapeSchedule load_shape_schedule(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open shape schedule: " + path);
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return shape_schedule_from_json(buffer.str());
}

void save_shape_schedule(const ShapeSchedule& schedule,
                         const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write shape schedule: " + path);
  }
  out << shape_schedule_to_json(schedule) << "\n";
}

const char* solver_method_name(SolverMethod method) {
  switch (method) {
    case SolverMethod::rbf: return "rbf";
    case SolverMethod::adams: return "adams";
    case SolverMethod::equal: return "equal";
    case SolverMethod::euler: return "euler";
  }
  return "unknown";
}

std::optional<SolverMethod> parse_solver_method(const std::string& name) {
  if (name == "rbf") return SolverMethod::rbf;
  if (name == "adams") return SolverMethod::adams;
  if (name == "equal") return SolverMethod::equal;
  if (name == "euler") return SolverMethod::euler;
  return std::nullopt;
}

CoefficientVector select_coefficients(const SolverConfig& config,
                                      const std::optional<ShapeEntry>& entry,
                                      const NodeSet& nodes, double lo,
                                      double hi) {
  switch (config.method) {
    case SolverMethod::adams:
    case SolverMethod::euler:
      return adams_coefficients(nodes, lo, hi);
    case SolverMethod::equal:
      return equal_coefficients(nodes, lo, hi);
    case SolverMethod::rbf:
      break;
  }
  if (!entry || entry->adams) {
    return adams_coefficients(nodes, lo, hi);
  }
  double gamma = std::pow(10.0, entry->log_gamma);
  auto coeffs =
      rbf_coefficients(nodes, lo, hi, gamma, config.include_constant_term);
  if (!coeffs) {
    return adams_coefficients(nodes, lo, hi);
  }
  return *coeffs;
}

int effective_order(const SolverConfig& config, int step, int total_steps) {
  int order = config.method == SolverMethod::euler ? 1 : config.order;
  int available = step + 1;
  int effective;
  if (config.warmup == WarmupStyle::ramp_order) {
    effective = std::min(order, available);
  } else {
    effective = available >= order ? order : 1;
  }
  if (config.lower_order_final) {
    effective = std::min(effective, total_steps - step);
  }
  return std::max(1, effective);
}

namespace {

std::optional<ShapeEntry> resolve_entry(const SolverConfig& config,
                                        bool predictor, int step) {
  if (config.method != SolverMethod::rbf) return std::nullopt;
  if (config.shape_schedule) {
    const auto& slot = predictor ? config.shape_schedule->pred[step]
                                 : config.shape_schedule->corr[step];
    if (slot) return slot;
    return ShapeEntry{true, 0.0};
  }
  return ShapeEntry{false, config.log_gamma};
}

void check_finite(const Eigen::VectorXd& x, int step, const char* where) {
  if (!x.allFinite()) {
    std::ostringstream msg;
    msg << "state became non-finite in the " << where << " at step " << step;
    throw std::runtime_error(msg.str());
  }
}

}  // namespace

SampleResult sample(ModelEvaluator& model, const TimeGrid& grid,
                    const SolverConfig& config,
                    const Eigen::VectorXd& x_init) {
  int steps = grid.steps();
  if (steps < 1) {
    throw std::invalid_argument("sampling needs at least one step");
  }
  int order = config.method == SolverMethod::euler ? 1 : config.order;
  if (order < 1 || order + 1 > kMaxStencilSize) {
    throw std::invalid_argument("solver order out of range");
  }
  if (x_init.size() != model.dimension()) {
    throw std::invalid_argument("initial state does not match the model");
  }
  if (config.shape_schedule && config.shape_schedule->steps != steps) {
    throw std::invalid_argument(
        "shape schedule was built for a different step count");
  }

  long evaluations_before = model.evaluation_count();
  Eigen::VectorXd x_corr = x_init;
  EvaluationHistory history(order + 1);
  history.push(grid.lambdas[0], model(x_corr, grid.lambdas[0]));

  SampleResult result;
  for (int i = 0; i < steps; ++i) {
    double lo = grid.lambdas[i];
    double hi = grid.lambdas[i + 1];
    double width = hi - lo;
    double sigma_ratio = grid.sigmas[i + 1] / grid.sigmas[i];

    int p_pred = effective_order(config, i, steps);
    NodeSet pred_nodes = history.node_set(p_pred, width);
    std::optional<ShapeEntry> pred_entry = resolve_entry(config, true, i);
    CoefficientVector pred_coeffs =
        select_coefficients(config, pred_entry, pred_nodes, lo, hi);

    Eigen::VectorXd acc = Eigen::VectorXd::Zero(x_corr.size());
    for (int j = 0; j < p_pred; ++j) {
      acc += pred_coeffs.values(j) * history.value_at(j);
    }
    Eigen::VectorXd x_pred = sigma_ratio * x_corr + grid.sigmas[i + 1] * acc;
    check_finite(x_pred, i, "predictor");

    StepRecord record;
    if (config.record_trace) {
      record.index = i;
      record.t = grid.times[i + 1];
      record.lambda = hi;
      record.method = provenance_name(pred_coeffs.provenance);
      record.gamma_pred = pred_coeffs.gamma;
      record.coefficients.assign(pred_coeffs.values.data(),
                                 pred_coeffs.values.data() + p_pred);
      Eigen::VectorXd ratio = coefficient_magnitude_ratio(pred_coeffs);
      record.magnitude_ratio.assign(ratio.data(), ratio.data() + p_pred);
    }

    if (i == steps - 1) {
      result.state = x_pred;
      if (config.record_trace) {
        record.x_norm = x_pred.norm();
        result.trace.push_back(std::move(record));
      }
      break;
    }

    history.push(grid.lambdas[i + 1], model(x_pred, grid.lambdas[i + 1]));

    if (config.use_corrector) {
      int p_corr = p_pred + 1;
      double corr_width = width;
      if (config.corrector_width_from_next_step && i + 2 <= steps) {
        corr_width = grid.lambdas[i + 2] - grid.lambdas[i + 1];
      }
      NodeSet corr_nodes = history.node_set(p_corr, corr_width);
      std::optional<ShapeEntry> corr_entry = resolve_entry(config, false, i);
      CoefficientVector corr_coeffs =
          select_coefficients(config, corr_entry, corr_nodes, lo, hi);

      acc.setZero();
      for (int j = 0; j < p_corr; ++j) {
        acc += corr_coeffs.values(j) * history.value_at(j);
      }
      x_corr = sigma_ratio * x_corr + grid.sigmas[i + 1] * acc;
      check_finite(x_corr, i, "corrector");
      if (config.record_trace) record.gamma_corr = corr_coeffs.gamma;
    } else {
      x_corr = x_pred;
    }

    if (config.record_trace) {
      record.x_norm = x_corr.norm();
      result.trace.push_back(std::move(record));
    }
  }

  result.evaluations = model.evaluation_count() - evaluations_before;
  return result;
}

void write_trace_jsonl(const std::vector<StepRecord>& trace,
                       std::ostream& out) {
  for (const StepRecord& record : trace) {
    nlohmann::json row;
    row["i"] = record.index;
    row["t"] = record.t;
    row["lambda"] = record.lambda;
    row["method"] = record.method;
    if (std::isfinite(record.gamma_pred)) {
      row["gamma_pred"] = record.gamma_pred;
    } else {
      row["gamma_pred"] = nullptr;
    }
    if (std::isfinite(record.gamma_corr)) {
      row["gamma_corr"] = record.gamma_corr;
    } else {
      row["gamma_corr"] = nullptr;
    }
    row["coeffs"] = record.coefficients;
    row["cmr"] = record.magnitude_ratio;
    row["x_norm"] = record.x_norm;
    out << row.dump() << "\n";
  }
}

}  // namespace rbf
