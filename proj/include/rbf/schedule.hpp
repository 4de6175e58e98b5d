#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace rbf {

enum class ScheduleKind { vp_linear_logsnr, vp_cosine, custom_tabulated };

// Noise schedule of a variance preserving diffusion, exposed through the
// log signal-to-noise ratio lambda(t) = log(alpha_t / sigma_t). lambda is
// strictly decreasing in t, so integrating backwards in time walks lambda
// upward. alpha and sigma follow from lambda via alpha^2 + sigma^2 = 1.
class NoiseSchedule {
 public:
  // Linear log-SNR: lambda(t) = lambda_max - (lambda_max - lambda_min) t/T.
  static NoiseSchedule vp_linear_logsnr(double lambda_min = -5.0,
                                        double lambda_max = 5.0,
                                        double horizon = 1.0,
                                        double t_min = -1.0);

  // Cosine schedule: lambda(t) = -log(tan(pi t / (2 T))).
  static NoiseSchedule vp_cosine(double horizon = 1.0, double t_min = -1.0);

  // Tabulated schedule interpolated with a monotone cubic. times must be
  // strictly increasing and lambdas strictly decreasing.
  static NoiseSchedule custom_tabulated(std::vector<double> times,
                                        std::vector<double> lambdas,
                                        double t_min = -1.0);

  // Reads a two column CSV with header "t,lambda". Throws
  // std::runtime_error with the offending line on malformed input.
  static NoiseSchedule load_tabulated_csv(const std::string& path,
                                          double t_min = -1.0);

  ScheduleKind kind() const { return kind_; }
  double horizon() const { return horizon_; }
  double t_min() const { return t_min_; }

  double lambda_of_t(double t) const;
  double t_of_lambda(double lambda) const;

  // {alpha_t, sigma_t} evaluated from lambda without overflow at either
  // end of the SNR range.
  std::pair<double, double> alpha_sigma(double t) const;

 private:
  NoiseSchedule() = default;

  void check_time(double t) const;

  ScheduleKind kind_ = ScheduleKind::vp_linear_logsnr;
  double horizon_ = 1.0;
  double t_min_ = 1e-3;
  double domain_lo_ = 0.0;

  double lambda_min_ = -5.0;
  double lambda_max_ = 5.0;

  // Tabulated form: knots plus Hermite slopes fitted so the interpolant
  // stays strictly monotone between them.
  std::vector<double> knot_t_;
  std::vector<double> knot_lambda_;
  std::vector<double> knot_slope_;
};

// Variance preserving pair {alpha, sigma} for a given log-SNR value,
// stable at both extremes of lambda.
std::pair<double, double> alpha_sigma_from_lambda(double lambda);

enum class GridSpacing { uniform_lambda, uniform_time };

// Discrete sampling trajectory from t = horizon down to t = t_min.
// times is strictly decreasing, lambdas strictly increasing, and both
// have steps() + 1 entries. alphas and sigmas are cached per node.
struct TimeGrid {
  std::vector<double> times;
  std::vector<double> lambdas;
  std::vector<double> alphas;
  std::vector<double> sigmas;

  int steps() const { return static_cast<int>(lambdas.size()) - 1; }
  double step_width(int i) const { return lambdas[i + 1] - lambdas[i]; }
};

TimeGrid build_time_grid(const NoiseSchedule& schedule, int steps,
                         GridSpacing spacing = GridSpacing::uniform_lambda);

const char* grid_spacing_name(GridSpacing spacing);

}  // namespace rbf
