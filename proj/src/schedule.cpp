#include "rbf/schedule.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace rbf {
namespace {

// log(1 + exp(z)) without overflow for large |z|.
double log1p_exp(double z) {
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

double default_t_min(double horizon, double t_min, double domain_lo) {
  double resolved = t_min >= 0.0 ? t_min : 1e-3 * horizon;
  if (!(resolved < horizon)) {
    throw std::invalid_argument("t_min must be smaller than the horizon");
  }
  if (resolved < domain_lo) {
    throw std::invalid_argument("t_min lies outside the schedule domain");
  }
  return resolved;
}

// Fritsch-Carlson slope limiting: start from averaged secants and pull
// any slope pair outside the circle of radius 3 back onto it, which keeps
// the Hermite interpolant strictly monotone on every interval.
std::vector<double> monotone_slopes(const std::vector<double>& t,
                                    const std::vector<double>& y) {
  std::size_t n = t.size();
  std::vector<double> secant(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    secant[i] = (y[i + 1] - y[i]) / (t[i + 1] - t[i]);
  }
  std::vector<double> slope(n);
  slope[0] = secant[0];
  slope[n - 1] = secant[n - 2];
  for (std::size_t i = 1; i + 1 < n; ++i) {
    slope[i] = 0.5 * (secant[i - 1] + secant[i]);
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    double a = slope[i] / secant[i];
    double b = slope[i + 1] / secant[i];
    double norm = a * a + b * b;
    if (norm > 9.0) {
      double tau = 3.0 / std::sqrt(norm);
      slope[i] = tau * a * secant[i];
      slope[i + 1] = tau * b * secant[i];
    }
  }
  return slope;
}

double hermite(double t0, double t1, double y0, double y1, double d0,
               double d1, double t) {
  double h = t1 - t0;
  double s = (t - t0) / h;
  double s2 = s * s;
  double s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * d0 +
         (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * h * d1;
}

}  // namespace

std::pair<double, double> alpha_sigma_from_lambda(double lambda) {
  double alpha = std::exp(-0.5 * log1p_exp(-2.0 * lambda));
  double sigma = std::exp(-0.5 * log1p_exp(2.0 * lambda));
  return {alpha, sigma};
}

void NoiseSchedule::check_time(double t) const {
  if (!(t >= domain_lo_) || !(t <= horizon_)) {
    std::ostringstream msg;
    msg << "time " << t << " outside schedule domain [" << domain_lo_ << ", "
        << horizon_ << "]";
    throw std::domain_error(msg.str());
  }
}

NoiseSchedule NoiseSchedule::vp_linear_logsnr(double lambda_min,
                                              double lambda_max,
                                              double horizon, double t_min) {
  if (!(lambda_min < lambda_max)) {
    throw std::invalid_argument("lambda_min must be below lambda_max");
  }
  if (!(horizon > 0.0)) {
    throw std::invalid_argument("horizon must be positive");
  }
  NoiseSchedule s;
  s.kind_ = ScheduleKind::vp_linear_logsnr;
  s.horizon_ = horizon;
  s.domain_lo_ = 0.0;
  s.t_min_ = default_t_min(horizon, t_min, 0.0);
  s.lambda_min_ = lambda_min;
  s.lambda_max_ = lambda_max;
  return s;
}

NoiseSchedule NoiseSchedule::vp_cosine(double horizon, double t_min) {
  if (!(horizon > 0.0)) {
    throw std::invalid_argument("horizon must be positive");
  }
  NoiseSchedule s;
  s.kind_ = ScheduleKind::vp_cosine;
  s.horizon_ = horizon;
  s.domain_lo_ = 0.0;
  s.t_min_ = default_t_min(horizon, t_min, 0.0);
  if (!(s.t_min_ > 0.0)) {
    throw std::invalid_argument("cosine schedule requires t_min > 0");
  }
  return s;
}

NoiseSchedule NoiseSchedule::custom_tabulated(std::vector<double> times,
                                              std::vector<double> lambdas,
                                              double t_min) {
  if (times.size() != lambdas.size() || times.size() < 2) {
    throw std::invalid_argument("tabulated schedule needs at least two rows");
  }
  for (std::size_t i = 0; i + 1 < times.size(); ++i) {
    if (!(times[i] < times[i + 1])) {
      throw std::invalid_argument("tabulated times must be strictly increasing");
    }
    if (!(lambdas[i] > lambdas[i + 1])) {
      throw std::invalid_argument(
          "tabulated lambdas must be strictly decreasing");
    }
  }
  NoiseSchedule s;
  s.kind_ = ScheduleKind::custom_tabulated;
  s.horizon_ = times.back();
  s.domain_lo_ = times.front();
  s.t_min_ = default_t_min(s.horizon_, t_min, s.domain_lo_);
  s.knot_slope_ = monotone_slopes(times, lambdas);
  s.knot_t_ = std::move(times);
  s.knot_lambda_ = std::move(lambdas);
  return s;
}

NoiseSchedule NoiseSchedule::load_tabulated_csv(const std::string& path,
                                                double t_min) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open schedule file: " + path);
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("schedule file is empty: " + path);
  }
  auto strip = [](std::string s) {
    s.erase(0, s.find_first_not_of(" \t\r"));
    s.erase(s.find_last_not_of(" \t\r") + 1);
    return s;
  };
  if (strip(line) != "t,lambda") {
    throw std::runtime_error("schedule file must start with header t,lambda");
  }
  std::vector<double> times;
  std::vector<double> lambdas;
  int line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (strip(line).empty()) continue;
    std::istringstream row(line);
    std::string t_field, l_field;
    if (!std::getline(row, t_field, ',') || !std::getline(row, l_field)) {
      std::ostringstream msg;
      msg << "schedule file line " << line_number << " is not t,lambda";
      throw std::runtime_error(msg.str());
    }
    try {
      std::size_t used = 0;
      times.push_back(std::stod(strip(t_field), &used));
      lambdas.push_back(std::stod(strip(l_field), &used));
    } catch (const std::exception&) {
      std::ostringstream msg;
      msg << "schedule file line " << line_number << " has a malformed number";
      throw std::runtime_error(msg.str());
    }
  }
  try {
    return custom_tabulated(std::move(times), std::move(lambdas), t_min);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("schedule file ") + path + ": " +
                             e.what());
  }
}

double NoiseSchedule::lambda_of_t(double t) const {
  check_time(t);
  switch (kind_) {
    case ScheduleKind::vp_linear_logsnr:
      return lambda_max_ - (lambda_max_ - lambda_min_) * t / horizon_;
    case ScheduleKind::vp_cosine:
      return -std::log(std::tan(std::numbers::pi * t / (2.0 * horizon_)));
    case ScheduleKind::custom_tabulated: {
      std::size_t hi = 1;
      while (hi + 1 < knot_t_.size() && knot_t_[hi] < t) ++hi;
      std::size_t lo = hi - 1;
      return hermite(knot_t_[lo], knot_t_[hi], knot_lambda_[lo],
                     knot_lambda_[hi], knot_slope_[lo], knot_slope_[hi], t);
    }
  }
  throw std::logic_error("unreachable schedule kind");
}

double NoiseSchedule::t_of_lambda(double lambda) const {
  switch (kind_) {
    case ScheduleKind::vp_linear_logsnr:
      return (lambda_max_ - lambda) * horizon_ / (lambda_max_ - lambda_min_);
    case ScheduleKind::vp_cosine:
      return 2.0 * horizon_ / std::numbers::pi * std::atan(std::exp(-lambda));
    case ScheduleKind::custom_tabulated: {
      // lambda(t) is strictly decreasing, so bisection on t converges to
      // the unique preimage.
      double lo = domain_lo_;
      double hi = horizon_;
      if (lambda > knot_lambda_.front() || lambda < knot_lambda_.back()) {
        throw std::domain_error("lambda outside the tabulated range");
      }
      for (int iter = 0; iter < 200; ++iter) {
        double mid = 0.5 * (lo + hi);
        if (lambda_of_t(mid) >= lambda) {
          lo = mid;
        } else {
          hi = mid;
        }
        if (hi - lo <= 1e-15 * std::max(1.0, std::fabs(hi))) break;
      }
      return 0.5 * (lo + hi);
    }
  }
  throw std::logic_error("unreachable schedule kind");
}

std::pair<double, double> NoiseSchedule::alpha_sigma(double t) const {
  return alpha_sigma_from_lambda(lambda_of_t(t));
}

TimeGrid build_time_grid(const NoiseSchedule& schedule, int steps,
                         GridSpacing spacing) {
  if (steps < 1) {
    throw std::invalid_argument("time grid needs at least one step");
  }
  double t_start = schedule.horizon();
  double t_end = schedule.t_min();

  TimeGrid grid;
  grid.times.resize(steps + 1);
  grid.lambdas.resize(steps + 1);
  grid.alphas.resize(steps + 1);
  grid.sigmas.resize(steps + 1);

  if (spacing == GridSpacing::uniform_lambda) {
    double lambda_start = schedule.lambda_of_t(t_start);
    double lambda_end = schedule.lambda_of_t(t_end);
    for (int i = 0; i <= steps; ++i) {
      double lambda =
          lambda_start + (lambda_end - lambda_start) * double(i) / steps;
      grid.lambdas[i] = lambda;
      grid.times[i] = i == 0 ? t_start
                    : i == steps ? t_end
                                 : schedule.t_of_lambda(lambda);
    }
  } else {
    for (int i = 0; i <= steps; ++i) {
      double t = t_start + (t_end - t_start) * double(i) / steps;
      grid.times[i] = t;
      grid.lambdas[i] = schedule.lambda_of_t(t);
    }
  }

  for (int i = 0; i <= steps; ++i) {
    auto [alpha, sigma] = alpha_sigma_from_lambda(grid.lambdas[i]);
    grid.alphas[i] = alpha;
    grid.sigmas[i] = sigma;
  }

  for (int i = 0; i < steps; ++i) {
    if (!(grid.times[i] > grid.times[i + 1]) ||
        !(grid.lambdas[i] < grid.lambdas[i + 1])) {
      throw std::logic_error("schedule produced a non-monotone time grid");
    }
  }
  return grid;
}

const char* grid_spacing_name(GridSpacing spacing) {
  return spacing == GridSpacing::uniform_lambda ? "uniform-lambda"
                                                : "uniform-time";
}

}  // namespace rbf
