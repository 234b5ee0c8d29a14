#pragma once

#include <array>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "hybridlink/se3.hpp"

namespace hybridlink {

/// Friction-cone style constraint ||(x[i0], x[i1])|| <= mu * x[i2].
struct SocConstraint {
  std::array<int, 3> index{};
  double mu = 1.0;
};

/// minimize 1/2 x^T H x + c^T x  subject to
///   lower <= x <= upper (empty vectors mean unbounded, entries may be +-inf),
///   x restricted to every cone in `cones`,
///   ineq_matrix x <= ineq_rhs.
struct QpProblem {
  Eigen::MatrixXd hessian;
  Eigen::VectorXd linear;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  std::vector<SocConstraint> cones;
  Eigen::MatrixXd ineq_matrix;
  Eigen::VectorXd ineq_rhs;

  int size() const { return static_cast<int>(linear.size()); }
};

enum class QpStatus { Optimal, MaxIter, PrimalInfeasible, DualInfeasible };
const char* to_string(QpStatus status);

struct QpSettings {
  double tol = 1e-8;
  int max_iter = 20000;
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;            // over-relaxation
  bool adaptive_rho = true;
  int adapt_interval = 25;
  int check_interval = 5;
  int scaling_iters = 10;        // Ruiz equilibration passes
  bool polish = true;
  double infeasibility_tol = 1e-5;
  Eigen::VectorXd initial_x;     // optional warm start
  /// Called after every iteration with the unscaled iterate (for diagnostics).
  std::function<void(int iteration, const Eigen::VectorXd& x)> on_iterate;
};

struct QpResult {
  Eigen::VectorXd x;
  QpStatus status = QpStatus::MaxIter;
  double primal_res = 0.0;  // max constraint violation of x
  double dual_res = 0.0;    // inf-norm of the stationarity residual
  int iterations = 0;
  bool polished = false;
  // Multipliers, signed so that H x + c + box_dual + sum_k E_k^T cone_dual[k]
  // + ineq_matrix^T ineq_dual = 0 at the optimum.
  Eigen::VectorXd box_dual;
  std::vector<Vec3> cone_dual;
  Eigen::VectorXd ineq_dual;
};

QpResult qp_solve(const QpProblem& problem, const QpSettings& settings = {});
QpResult qp_solve(const QpProblem& problem, double tol, int max_iter);

/// Euclidean projection onto {v : ||(v0, v1)|| <= mu v2}.
Vec3 project_soc(const Vec3& v, double mu);

}  // namespace hybridlink
