#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

namespace rbf {

// Largest stencil the interpolation machinery accepts. Gaussian kernel
// systems lose all usable precision well before this size.
inline constexpr int kMaxStencilSize = 12;

// A kernel system whose estimated condition number exceeds this is treated
// as singular at working precision.
inline constexpr double kSingularConditionThreshold = 1e14;

// Interpolation stencil in log-SNR coordinates. Nodes are stored most
// recent first, so lambdas[0] is the newest point and the sequence is
// strictly decreasing. width_scale is the length scale the Gaussian
// kernel width is measured against, typically the current step size.
struct NodeSet {
  std::vector<double> lambdas;
  double width_scale = 1.0;

  int p() const { return static_cast<int>(lambdas.size()); }
};

// Validates ordering, size, and width and returns the assembled stencil.
// Throws std::invalid_argument on malformed input.
NodeSet make_node_set(std::vector<double> lambdas, double width_scale);

// Gaussian kernel value exp(-((lambda - center) / (gamma * width))^2).
double gaussian_basis(double lambda, double center, double gamma, double width);

// Cardinal polynomial basis on the stencil: the unique degree p-1
// polynomial that is 1 at node j and 0 at the others.
double lagrange_basis(const NodeSet& nodes, int j, double lambda);

// Symmetric collocation matrix for the Gaussian kernel on a stencil.
// With the constant term the matrix is (p+1) x (p+1): the kernel block,
// a border of ones, and a zero corner, which enforces that interpolation
// weights sum to zero. condition_estimate is the 1-norm condition number
// from an LU factorization, +inf when the matrix is exactly singular.
struct KernelSystem {
  Eigen::MatrixXd phi;
  double gamma = 0.0;
  bool include_constant = true;
  double condition_estimate = 0.0;

  bool singular() const {
    return !(condition_estimate < kSingularConditionThreshold);
  }
};

KernelSystem build_kernel_system(const NodeSet& nodes, double gamma,
                                 bool include_constant = true);

// Raised when a solve is attempted on a kernel system that is singular
// at working precision. Carries the condition estimate for diagnostics.
class SingularKernelError : public std::runtime_error {
 public:
  explicit SingularKernelError(double condition_estimate);

  double condition_estimate() const { return condition_estimate_; }

 private:
  double condition_estimate_;
};

// Interpolant through vector valued samples at the stencil nodes.
// weights is p x d (one row per node), constant_term is the d-vector
// offset from the appended constant basis function.
struct RbfInterpolant {
  NodeSet nodes;
  double gamma = 0.0;
  Eigen::MatrixXd weights;
  Eigen::RowVectorXd constant_term;
};

// Solves the collocation system for sample values given as a p x d matrix
// whose row j holds the sample at node j. Throws SingularKernelError when
// the system reports singular().
RbfInterpolant solve_interpolation_weights(const KernelSystem& system,
                                           const NodeSet& nodes,
                                           const Eigen::MatrixXd& values);

Eigen::VectorXd evaluate_interpolant(const RbfInterpolant& interpolant,
                                     double lambda);

}  // namespace rbf
