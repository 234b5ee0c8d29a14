#pragma once

#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Dense>

#include "hybridlink/conic_qp.hpp"

namespace hybridlink::testing {

/// Exhaustive active-set enumeration for a strictly convex box QP: every
/// variable is free, at its lower bound, or at its upper bound.
inline Eigen::VectorXd brute_force_box_qp(const Eigen::MatrixXd& h, const Eigen::VectorXd& c,
                                          const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  const int n = static_cast<int>(c.size());
  int combos = 1;
  for (int i = 0; i < n; ++i) combos *= 3;
  Eigen::VectorXd best;
  double best_obj = std::numeric_limits<double>::infinity();
  for (int code = 0; code < combos; ++code) {
    std::vector<int> mode(n);
    int rest = code;
    for (int i = 0; i < n; ++i) {
      mode[i] = rest % 3;
      rest /= 3;
    }
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    std::vector<int> free;
    for (int i = 0; i < n; ++i) {
      if (mode[i] == 1) x[i] = lo[i];
      if (mode[i] == 2) x[i] = hi[i];
      if (mode[i] == 0) free.push_back(i);
    }
    if (!free.empty()) {
      const int k = static_cast<int>(free.size());
      Eigen::MatrixXd hf(k, k);
      Eigen::VectorXd rhs(k);
      for (int a = 0; a < k; ++a) {
        rhs[a] = -c[free[a]];
        for (int j = 0; j < n; ++j) {
          if (mode[j] != 0) rhs[a] -= h(free[a], j) * x[j];
        }
        for (int b = 0; b < k; ++b) hf(a, b) = h(free[a], free[b]);
      }
      const Eigen::VectorXd xf = hf.ldlt().solve(rhs);
      for (int a = 0; a < k; ++a) x[free[a]] = xf[a];
    }
    bool feasible = true;
    for (int i = 0; i < n; ++i) {
      if (x[i] < lo[i] - 1e-12 || x[i] > hi[i] + 1e-12) feasible = false;
    }
    if (!feasible) continue;
    const double obj = 0.5 * x.dot(h * x) + c.dot(x);
    if (obj < best_obj) {
      best_obj = obj;
      best = x;
    }
  }
  return best;
}

inline Eigen::MatrixXd random_spd(std::mt19937_64& rng, int n, double floor) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = g(rng);
  return a * a.transpose() + floor * Eigen::MatrixXd::Identity(n, n);
}

inline QpProblem random_box_qp(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  QpProblem p;
  p.hessian = random_spd(rng, n, 0.1);
  p.linear.resize(n);
  p.lower.resize(n);
  p.upper.resize(n);
  for (int i = 0; i < n; ++i) {
    p.linear[i] = 3.0 * g(rng);
    p.lower[i] = -u(rng);
    p.upper[i] = u(rng);
  }
  return p;
}

/// Several friction cones plus free and boxed variables; the linear term
/// pushes into the cone boundaries and apexes.
inline QpProblem random_cone_qp(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.2, 1.5);
  const int cones = 1 + static_cast<int>(rng() % 4);
  const int extra = static_cast<int>(rng() % 4);
  const int n = 3 * cones + extra;
  QpProblem p;
  p.hessian = random_spd(rng, n, 0.05);
  p.linear.resize(n);
  for (int i = 0; i < n; ++i) p.linear[i] = 5.0 * g(rng);
  for (int k = 0; k < cones; ++k) p.cones.push_back({{3 * k, 3 * k + 1, 3 * k + 2}, u(rng)});
  if (extra) {
    p.lower = Eigen::VectorXd::Constant(n, -std::numeric_limits<double>::infinity());
    p.upper = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
    for (int i = 3 * cones; i < n; ++i) {
      p.lower[i] = -u(rng);
      p.upper[i] = u(rng);
    }
  }
  return p;
}

struct KktReport {
  double stationarity = 0.0;  // relative to 1 + ||c||
  double primal = 0.0;
  double dual = 0.0;          // multiplier cone/sign violation
  double complementarity = 0.0;
  double worst() const { return std::max({stationarity, primal, dual, complementarity}); }
};

/// Checks the optimality conditions of a QpResult directly from the problem.
inline KktReport kkt_report(const QpProblem& p, const QpResult& r) {
  const int n = p.size();
  KktReport k;
  Eigen::VectorXd grad = p.hessian * r.x + p.linear + r.box_dual;
  if (p.ineq_rhs.size()) grad += p.ineq_matrix.transpose() * r.ineq_dual;
  for (std::size_t c = 0; c < p.cones.size(); ++c) {
    for (int j = 0; j < 3; ++j) grad[p.cones[c].index[j]] += r.cone_dual[c][j];
  }
  k.stationarity = grad.cwiseAbs().maxCoeff() / (1.0 + p.linear.norm());
  for (int i = 0; i < n; ++i) {
    const double lo = p.lower.size() ? p.lower[i] : -std::numeric_limits<double>::infinity();
    const double hi = p.upper.size() ? p.upper[i] : std::numeric_limits<double>::infinity();
    k.primal = std::max({k.primal, lo - r.x[i], r.x[i] - hi});
    const double y = r.box_dual[i];
    if (y > 0) {
      k.dual = std::max(k.dual, std::isinf(hi) ? y : 0.0);
      if (!std::isinf(hi)) k.complementarity = std::max(k.complementarity, y * (hi - r.x[i]));
    } else if (y < 0) {
      k.dual = std::max(k.dual, std::isinf(lo) ? -y : 0.0);
      if (!std::isinf(lo)) k.complementarity = std::max(k.complementarity, -y * (r.x[i] - lo));
    }
  }
  for (std::size_t c = 0; c < p.cones.size(); ++c) {
    const auto& idx = p.cones[c].index;
    const double mu = p.cones[c].mu;
    const Eigen::Vector3d v(r.x[idx[0]], r.x[idx[1]], r.x[idx[2]]);
    const Eigen::Vector3d w = r.cone_dual[c];
    k.primal = std::max(k.primal, v.head<2>().norm() - mu * v[2]);
    // Polar cone: mu ||w_xy|| <= -w_z.
    k.dual = std::max(k.dual, mu * w.head<2>().norm() + w[2]);
    k.complementarity = std::max(k.complementarity, std::abs(w.dot(v)));
  }
  for (long i = 0; i < p.ineq_rhs.size(); ++i) {
    const double slack = p.ineq_rhs[i] - p.ineq_matrix.row(i).dot(r.x);
    k.primal = std::max(k.primal, -slack);
    k.dual = std::max(k.dual, -r.ineq_dual[i]);
    k.complementarity = std::max(k.complementarity, std::abs(r.ineq_dual[i] * slack));
  }
  return k;
}

}  // namespace hybridlink::testing
