#include "rbf/basis.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

namespace rbf {

NodeSet make_node_set(std::vector<double> lambdas, double width_scale) {
  if (lambdas.empty() || static_cast<int>(lambdas.size()) > kMaxStencilSize) {
    std::ostringstream msg;
    msg << "stencil size " << lambdas.size() << " outside [1, "
        << kMaxStencilSize << "]";
    throw std::invalid_argument(msg.str());
  }
  for (std::size_t j = 0; j + 1 < lambdas.size(); ++j) {
    if (!(lambdas[j] > lambdas[j + 1])) {
      throw std::invalid_argument(
          "stencil nodes must be strictly decreasing, most recent first");
    }
  }
  for (double v : lambdas) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("stencil nodes must be finite");
    }
  }
  if (!(width_scale > 0.0) || !std::isfinite(width_scale)) {
    throw std::invalid_argument("width_scale must be positive and finite");
  }
  return NodeSet{std::move(lambdas), width_scale};
}

double gaussian_basis(double lambda, double center, double gamma,
                      double width) {
  if (!(gamma > 0.0) || !(width > 0.0)) {
    throw std::domain_error("gaussian_basis requires gamma > 0 and width > 0");
  }
  double r = (lambda - center) / (gamma * width);
  return std::exp(-r * r);
}

double lagrange_basis(const NodeSet& nodes, int j, double lambda) {
  int p = nodes.p();
  if (j < 0 || j >= p) {
    throw std::out_of_range("lagrange_basis node index out of range");
  }
  double value = 1.0;
  for (int m = 0; m < p; ++m) {
    if (m == j) continue;
    value *= (lambda - nodes.lambdas[m]) / (nodes.lambdas[j] - nodes.lambdas[m]);
  }
  return value;
}

KernelSystem build_kernel_system(const NodeSet& nodes, double gamma,
                                 bool include_constant) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw std::domain_error("kernel shape parameter must be positive");
  }
  int p = nodes.p();
  int n = include_constant ? p + 1 : p;

  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < p; ++i) {
    phi(i, i) = 1.0;
    for (int j = i + 1; j < p; ++j) {
      double v = gaussian_basis(nodes.lambdas[i], nodes.lambdas[j], gamma,
                                nodes.width_scale);
      phi(i, j) = v;
      phi(j, i) = v;
    }
  }
  if (include_constant) {
    for (int i = 0; i < p; ++i) {
      phi(i, p) = 1.0;
      phi(p, i) = 1.0;
    }
    phi(p, p) = 0.0;
  }

  KernelSystem system;
  system.phi = std::move(phi);
  system.gamma = gamma;
  system.include_constant = include_constant;

  Eigen::PartialPivLU<Eigen::MatrixXd> lu(system.phi);
  double rcond = lu.rcond();
  system.condition_estimate =
      rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
  return system;
}

SingularKernelError::SingularKernelError(double condition_estimate)
    : std::runtime_error("kernel system is singular at working precision"),
      condition_estimate_(condition_estimate) {}

RbfInterpolant solve_interpolation_weights(const KernelSystem& system,
                                           const NodeSet& nodes,
                                           const Eigen::MatrixXd& values) {
  int p = nodes.p();
  int n = system.include_constant ? p + 1 : p;
  if (system.phi.rows() != n || values.rows() != p) {
    throw std::invalid_argument("kernel system does not match the stencil");
  }
  if (system.singular()) {
    throw SingularKernelError(system.condition_estimate);
  }

  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, values.cols());
  rhs.topRows(p) = values;
  Eigen::MatrixXd solved = system.phi.partialPivLu().solve(rhs);

  RbfInterpolant interpolant;
  interpolant.nodes = nodes;
  interpolant.gamma = system.gamma;
  interpolant.weights = solved.topRows(p);
  if (system.include_constant) {
    interpolant.constant_term = solved.row(p);
  } else {
    interpolant.constant_term = Eigen::RowVectorXd::Zero(values.cols());
  }
  return interpolant;
}

Eigen::VectorXd evaluate_interpolant(const RbfInterpolant& interpolant,
                                     double lambda) {
  int p = interpolant.nodes.p();
  Eigen::VectorXd result = interpolant.constant_term.transpose();
  for (int j = 0; j < p; ++j) {
    double phi = gaussian_basis(lambda, interpolant.nodes.lambdas[j],
                                interpolant.gamma,
                                interpolant.nodes.width_scale);
    result += phi * interpolant.weights.row(j).transpose();
  }
  return result;
}

}  // namespace rbf
