#include "hybridlink/conic_qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "hybridlink/errors.hpp"

namespace hybridlink {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEqualityRhoScale = 1e3;
constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr double kMinScaling = 1e-4;
constexpr double kMaxScaling = 1e4;
constexpr double kPolishDelta = 1e-9;
constexpr int kPolishRefine = 5;
constexpr int kPolishNewton = 30;
constexpr int kPolishRounds = 6;
constexpr double kPolishTrigger = 10.0;

using Eigen::MatrixXd;
using Eigen::VectorXd;

double inf_norm(const VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

/// Constraint rows l <= A x <= u (box and inequality rows) and cone blocks
/// A x in K_mu, stacked as [box | cones | inequalities].
struct Rows {
  MatrixXd a;
  VectorXd lo, hi;
  std::vector<int> box_var;
  int cone_begin = 0;
  int ineq_begin = 0;
  std::vector<double> mu;

  int m() const { return static_cast<int>(lo.size()); }
  int cones() const { return static_cast<int>(mu.size()); }
  bool is_cone_row(int i) const { return i >= cone_begin && i < ineq_begin; }
};

void validate(const QpProblem& p) {
  const int n = p.size();
  if (p.hessian.rows() != n || p.hessian.cols() != n) {
    fail(ErrorCode::DimensionMismatch, "qp: hessian must be n x n with n = size(linear)");
  }
  if ((p.lower.size() != 0 && p.lower.size() != n) ||
      (p.upper.size() != 0 && p.upper.size() != n)) {
    fail(ErrorCode::DimensionMismatch, "qp: bounds must be empty or of size n");
  }
  if (p.ineq_matrix.rows() != p.ineq_rhs.size() ||
      (p.ineq_matrix.rows() > 0 && p.ineq_matrix.cols() != n)) {
    fail(ErrorCode::DimensionMismatch, "qp: inequality block has inconsistent sizes");
  }
  if (!p.hessian.allFinite() || !p.linear.allFinite() || !p.ineq_matrix.allFinite()) {
    fail(ErrorCode::InvalidArgument, "qp: non-finite problem data");
  }
  std::vector<bool> used(n, false);
  for (const auto& c : p.cones) {
    if (!(c.mu > 0.0)) fail(ErrorCode::InvalidArgument, "qp: cone needs mu > 0");
    for (int idx : c.index) {
      if (idx < 0 || idx >= n) fail(ErrorCode::InvalidArgument, "qp: cone index out of range");
      if (used[idx]) fail(ErrorCode::InvalidArgument, "qp: cones must use disjoint variables");
      used[idx] = true;
    }
  }
  const double scale = 1.0 + (n ? p.hessian.cwiseAbs().maxCoeff() : 0.0);
  if (n && (p.hessian - p.hessian.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    fail(ErrorCode::NotPsd, "qp: hessian is not symmetric");
  }
  if (n) {
    const MatrixXd shifted = p.hessian + 1e-9 * scale * MatrixXd::Identity(n, n);
    Eigen::LLT<MatrixXd> llt(shifted);
    if (llt.info() != Eigen::Success) fail(ErrorCode::NotPsd, "qp: hessian is not PSD");
  }
}

Rows stack_rows(const QpProblem& p) {
  const int n = p.size();
  Rows r;
  std::vector<int> box;
  for (int i = 0; i < n; ++i) {
    const double lo = p.lower.size() ? p.lower[i] : -kInf;
    const double hi = p.upper.size() ? p.upper[i] : kInf;
    if (lo > -kInf || hi < kInf) box.push_back(i);
  }
  const int nb = static_cast<int>(box.size());
  const int nc = 3 * static_cast<int>(p.cones.size());
  const int ni = static_cast<int>(p.ineq_rhs.size());
  const int m = nb + nc + ni;
  r.a = MatrixXd::Zero(m, n);
  r.lo = VectorXd::Constant(m, -kInf);
  r.hi = VectorXd::Constant(m, kInf);
  r.box_var = box;
  for (int k = 0; k < nb; ++k) {
    const int i = box[k];
    r.a(k, i) = 1.0;
    r.lo[k] = p.lower.size() ? p.lower[i] : -kInf;
    r.hi[k] = p.upper.size() ? p.upper[i] : kInf;
  }
  r.cone_begin = nb;
  for (std::size_t c = 0; c < p.cones.size(); ++c) {
    for (int j = 0; j < 3; ++j) r.a(nb + 3 * c + j, p.cones[c].index[j]) = 1.0;
    r.mu.push_back(p.cones[c].mu);
  }
  r.ineq_begin = nb + nc;
  if (ni) {
    r.a.bottomRows(ni) = p.ineq_matrix;
    r.hi.tail(ni) = p.ineq_rhs;
  }
  return r;
}

/// Distance-like violation of a cone membership, scaled by the cone width.
double cone_violation(const Vec3& v, double mu) {
  return (v - project_soc(v, mu)).norm();
}

Vec3 project_polar(const Vec3& v, double mu) {
  // Moreau: v = P_K(v) + P_{K polar}(v).
  return v - project_soc(v, mu);
}

struct Scaled {
  MatrixXd p, a;
  VectorXd q, lo, hi;
  VectorXd d, e;  // variable and row scaling
  double c = 1.0; // cost scaling
};

double clamp_scale(double norm) {
  if (norm < kMinScaling) return 1.0;
  return std::min(norm, kMaxScaling);
}

Scaled equilibrate(const MatrixXd& p, const VectorXd& q, const Rows& rows, int iters) {
  const int n = static_cast<int>(q.size());
  const int m = rows.m();
  Scaled s;
  s.p = p;
  s.a = rows.a;
  s.q = q;
  s.d = VectorXd::Ones(n);
  s.e = VectorXd::Ones(m);
  for (int it = 0; it < iters; ++it) {
    VectorXd dd(n), de(m);
    for (int j = 0; j < n; ++j) {
      double norm = n ? s.p.col(j).cwiseAbs().maxCoeff() : 0.0;
      if (m) norm = std::max(norm, s.a.col(j).cwiseAbs().maxCoeff());
      dd[j] = 1.0 / std::sqrt(clamp_scale(norm));
    }
    for (int i = 0; i < m; ++i) de[i] = 1.0 / std::sqrt(clamp_scale(s.a.row(i).cwiseAbs().maxCoeff()));
    // A cone must be scaled uniformly to keep its shape.
    for (int c = 0; c < rows.cones(); ++c) {
      const int r0 = rows.cone_begin + 3 * c;
      const double norm = s.a.middleRows(r0, 3).cwiseAbs().maxCoeff();
      de.segment<3>(r0).setConstant(1.0 / std::sqrt(clamp_scale(norm)));
    }
    s.p = dd.asDiagonal() * s.p * dd.asDiagonal();
    s.a = de.asDiagonal() * s.a * dd.asDiagonal();
    s.q = dd.cwiseProduct(s.q);
    s.d = s.d.cwiseProduct(dd);
    s.e = s.e.cwiseProduct(de);

    double mean_col = 0.0;
    for (int j = 0; j < n; ++j) mean_col += s.p.col(j).cwiseAbs().maxCoeff();
    mean_col = n ? mean_col / n : 0.0;
    const double gamma = 1.0 / clamp_scale(std::max(mean_col, inf_norm(s.q)));
    s.p *= gamma;
    s.q *= gamma;
    s.c *= gamma;
  }
  s.lo = s.e.cwiseProduct(rows.lo);
  s.hi = s.e.cwiseProduct(rows.hi);
  // Infinite bounds stay infinite (0 * inf never happens since e > 0).
  return s;
}

void project_rows(const Rows& rows, const Scaled& s, VectorXd& z) {
  for (int i = 0; i < rows.cone_begin; ++i) z[i] = std::clamp(z[i], s.lo[i], s.hi[i]);
  for (int c = 0; c < rows.cones(); ++c) {
    const int r0 = rows.cone_begin + 3 * c;
    z.segment<3>(r0) = project_soc(z.segment<3>(r0), rows.mu[c]);
  }
  for (int i = rows.ineq_begin; i < rows.m(); ++i) z[i] = std::clamp(z[i], s.lo[i], s.hi[i]);
}

struct Unscaled {
  VectorXd x, z, y;
};

Unscaled unscale(const Scaled& s, const VectorXd& x, const VectorXd& z, const VectorXd& y) {
  return {s.d.cwiseProduct(x), z.cwiseQuotient(s.e), s.e.cwiseProduct(y) / s.c};
}

struct Residuals {
  double prim = 0.0, dual = 0.0, eps_prim = 0.0, eps_dual = 0.0;
  bool converged() const { return prim <= eps_prim && dual <= eps_dual; }
};

Residuals admm_residuals(const QpProblem& p, const Rows& rows, const Unscaled& u, double tol) {
  const VectorXd ax = rows.a * u.x;
  const VectorXd px = p.hessian * u.x;
  const VectorXd aty = rows.a.transpose() * u.y;
  Residuals r;
  r.prim = inf_norm(ax - u.z);
  r.dual = inf_norm(px + p.linear + aty);
  r.eps_prim = tol + tol * std::max(inf_norm(ax), inf_norm(u.z));
  r.eps_dual = tol + tol * std::max({inf_norm(px), inf_norm(aty), inf_norm(p.linear)});
  return r;
}

/// Constraint violation of x itself and the largest multiplier sign error.
struct Certificate {
  double primal = 0.0;
  double dual = 0.0;
  double multiplier = 0.0;
  double complementarity = 0.0;
};

Certificate certify(const QpProblem& p, const Rows& rows, const VectorXd& x, const VectorXd& y) {
  Certificate c;
  const VectorXd ax = rows.a * x;
  for (int i = 0; i < rows.m(); ++i) {
    if (rows.is_cone_row(i)) continue;
    c.primal = std::max({c.primal, rows.lo[i] - ax[i], ax[i] - rows.hi[i]});
    // y must lie in the normal cone of [lo, hi] at ax.
    double bad = 0.0;
    if (y[i] > 0.0 && rows.hi[i] == kInf) bad = y[i];
    if (y[i] < 0.0 && rows.lo[i] == -kInf) bad = -y[i];
    c.multiplier = std::max(c.multiplier, bad);
    const double slack = y[i] > 0.0 ? rows.hi[i] - ax[i] : ax[i] - rows.lo[i];
    if (y[i] != 0.0) c.complementarity = std::max(c.complementarity, std::abs(y[i] * slack));
  }
  for (int k = 0; k < rows.cones(); ++k) {
    const int r0 = rows.cone_begin + 3 * k;
    c.primal = std::max(c.primal, cone_violation(ax.segment<3>(r0), rows.mu[k]));
    const Vec3 w = y.segment<3>(r0);
    c.multiplier = std::max(c.multiplier, (w - project_polar(w, rows.mu[k])).norm());
    c.complementarity = std::max(c.complementarity, std::abs(w.dot(ax.segment<3>(r0))));
  }
  c.dual = inf_norm(p.hessian * x + p.linear + rows.a.transpose() * y);
  return c;
}

enum class ConeState { Inactive, Apex, Boundary };

/// Guessed active constraints. Linear rows: 0 free, -1 at the lower bound,
/// +1 at the upper bound, 2 equality.
struct ActiveSet {
  std::vector<int> row;
  std::vector<ConeState> cone;
  std::vector<Eigen::Vector2d> dir;  // tangential direction of boundary cones

  bool same_pattern(const ActiveSet& o) const { return row == o.row && cone == o.cone; }
};

ActiveSet guess_active_set(const Scaled& s, const Rows& rows, const VectorXd& z,
                           const VectorXd& y) {
  ActiveSet set;
  set.row.assign(rows.m(), 0);
  for (int i = 0; i < rows.m(); ++i) {
    if (rows.is_cone_row(i)) continue;
    if (s.lo[i] == s.hi[i]) {
      set.row[i] = 2;
    } else if (s.lo[i] > -kInf && z[i] - s.lo[i] < -y[i]) {
      set.row[i] = -1;
    } else if (s.hi[i] < kInf && s.hi[i] - z[i] < y[i]) {
      set.row[i] = 1;
    }
  }
  set.cone.assign(rows.cones(), ConeState::Inactive);
  set.dir.assign(rows.cones(), Eigen::Vector2d::Zero());
  for (int k = 0; k < rows.cones(); ++k) {
    const int r0 = rows.cone_begin + 3 * k;
    const double mu = rows.mu[k];
    const double norm = std::sqrt(1.0 + mu * mu);
    const Vec3 v = z.segment<3>(r0), w = y.segment<3>(r0);
    const double slack = (mu * v[2] - v.head<2>().norm()) / norm;
    const double polar_slack = (-w[2] - mu * w.head<2>().norm()) / norm;
    if (slack > w.norm()) continue;
    if (polar_slack > v.norm()) {
      set.cone[k] = ConeState::Apex;
      continue;
    }
    Eigen::Vector2d dir = v.head<2>();
    if (dir.norm() < 1e-14 * (1.0 + v.norm())) dir = w.head<2>();
    set.cone[k] = ConeState::Boundary;
    set.dir[k] = dir.norm() > 0.0 ? Eigen::Vector2d(dir.normalized()) : Eigen::Vector2d::UnitX();
  }
  return set;
}

struct PolishResult {
  bool ok = false;
  VectorXd x, z, y;
};

/// Newton's method on the KKT system of the equality-constrained problem
/// given by `set`. Linear rows settle after one step; boundary cones
/// contribute curvature. Returns x and the stacked row multipliers.
bool newton_kkt(const Scaled& s, const Rows& rows, ActiveSet& set, VectorXd& xs, VectorXd& y) {
  const int n = static_cast<int>(xs.size());
  std::vector<int> fixed;
  for (int i = 0; i < rows.m(); ++i) {
    if (!rows.is_cone_row(i) && set.row[i] != 0) fixed.push_back(i);
  }
  int mc = static_cast<int>(fixed.size());
  for (int k = 0; k < rows.cones(); ++k) {
    if (set.cone[k] == ConeState::Apex) mc += 3;
    if (set.cone[k] == ConeState::Boundary) mc += 1;
  }
  VectorXd lambda(mc);
  {
    int j = 0;
    for (int r : fixed) lambda[j++] = y[r];
    for (int k = 0; k < rows.cones(); ++k) {
      const int r0 = rows.cone_begin + 3 * k;
      if (set.cone[k] == ConeState::Apex) {
        lambda.segment<3>(j) = y.segment<3>(r0);
        j += 3;
      } else if (set.cone[k] == ConeState::Boundary) {
        lambda[j++] = std::max(-y[r0 + 2] / rows.mu[k], 0.0);
      }
    }
  }

  std::vector<Vec3> normal(rows.cones(), Vec3::Zero());
  MatrixXd kkt(n + mc, n + mc);
  VectorXd residual(n + mc);
  bool converged = false;
  for (int iter = 0; iter <= kPolishNewton; ++iter) {
    kkt.setZero();
    kkt.topLeftCorner(n, n) = s.p;
    residual.head(n) = s.p * xs + s.q;
    int j = 0;
    auto add_row = [&](const Eigen::RowVectorXd& row, double value) {
      kkt.block(n + j, 0, 1, n) = row;
      kkt.block(0, n + j, n, 1) = row.transpose();
      residual.head(n) += lambda[j] * row.transpose();
      residual[n + j] = value;
      ++j;
    };
    for (int r : fixed) {
      const double target = set.row[r] == 1 ? s.hi[r] : s.lo[r];
      add_row(s.a.row(r), s.a.row(r).dot(xs) - target);
    }
    for (int k = 0; k < rows.cones(); ++k) {
      const int r0 = rows.cone_begin + 3 * k;
      const auto block = s.a.middleRows(r0, 3);
      const Vec3 v = block * xs;
      if (set.cone[k] == ConeState::Apex) {
        for (int c = 0; c < 3; ++c) add_row(block.row(c), v[c]);
      } else if (set.cone[k] == ConeState::Boundary) {
        const double r = v.head<2>().norm();
        Mat3 curvature = Mat3::Zero();
        if (r > 1e-14 * (1.0 + v.norm())) {
          set.dir[k] = v.head<2>() / r;
          curvature.topLeftCorner<2, 2>() =
              (Eigen::Matrix2d::Identity() - set.dir[k] * set.dir[k].transpose()) / r;
        }
        normal[k] = Vec3(set.dir[k][0], set.dir[k][1], -rows.mu[k]);
        kkt.topLeftCorner(n, n) += lambda[j] * block.transpose() * curvature * block;
        add_row(normal[k].transpose() * block, r - rows.mu[k] * v[2]);
      }
    }
    const double scale = 1.0 + inf_norm(s.q) + inf_norm(lambda);
    const double res = inf_norm(residual);
    if (res <= 1e-14 * scale) {
      converged = true;
      break;
    }
    if (iter == kPolishNewton) {
      converged = res <= 1e-10 * scale;
      break;
    }
    MatrixXd reg = kkt;
    reg.topLeftCorner(n, n).diagonal().array() += kPolishDelta;
    reg.bottomRightCorner(mc, mc).diagonal().array() -= kPolishDelta;
    const Eigen::PartialPivLU<MatrixXd> lu(reg);
    VectorXd step = lu.solve(-residual);
    for (int it = 0; it < kPolishRefine; ++it) step += lu.solve(-residual - kkt * step);
    if (!step.allFinite()) return false;
    xs += step.head(n);
    lambda += step.tail(mc);
    if (inf_norm(step) <= 1e-15 * (1.0 + inf_norm(xs) + inf_norm(lambda))) {
      converged = true;
      break;
    }
  }
  if (!converged) return false;

  y = VectorXd::Zero(rows.m());
  int k = 0;
  for (int r : fixed) y[r] = lambda[k++];
  for (int c = 0; c < rows.cones(); ++c) {
    const int r0 = rows.cone_begin + 3 * c;
    if (set.cone[c] == ConeState::Apex) {
      y.segment<3>(r0) = lambda.segment<3>(k);
      k += 3;
    } else if (set.cone[c] == ConeState::Boundary) {
      y.segment<3>(r0) = lambda[k] * normal[c];
      k += 1;
    }
  }
  return true;
}

/// Moves constraints in or out of `set` where the Newton solution disagrees
/// with it. Returns false when the set is consistent.
bool correct_active_set(const Scaled& s, const Rows& rows, const VectorXd& x, const VectorXd& y,
                        ActiveSet& set) {
  const VectorXd ax = s.a * x;
  const double tiny_y = 1e-9 * (1.0 + inf_norm(y));
  const double tiny_x = 1e-9 * (1.0 + inf_norm(ax));
  bool changed = false;
  for (int i = 0; i < rows.m(); ++i) {
    if (rows.is_cone_row(i)) continue;
    const int st = set.row[i];
    if ((st == -1 && y[i] > tiny_y) || (st == 1 && y[i] < -tiny_y)) {
      set.row[i] = 0;
      changed = true;
    } else if (st == 0 && ax[i] < s.lo[i] - tiny_x) {
      set.row[i] = -1;
      changed = true;
    } else if (st == 0 && ax[i] > s.hi[i] + tiny_x) {
      set.row[i] = 1;
      changed = true;
    }
  }
  for (int k = 0; k < rows.cones(); ++k) {
    const int r0 = rows.cone_begin + 3 * k;
    const double mu = rows.mu[k];
    const Vec3 v = ax.segment<3>(r0), w = y.segment<3>(r0);
    switch (set.cone[k]) {
      case ConeState::Inactive:
        if (cone_violation(v, mu) > tiny_x) {
          const double r = v.head<2>().norm();
          set.cone[k] = mu * r <= -v[2] ? ConeState::Apex : ConeState::Boundary;
          if (r > 0.0) set.dir[k] = v.head<2>() / r;
          changed = true;
        }
        break;
      case ConeState::Boundary:
        // The multiplier is lambda * (dir, -mu); a positive third entry means lambda < 0.
        if (w[2] > tiny_y) {
          set.cone[k] = ConeState::Inactive;
          changed = true;
        }
        break;
      case ConeState::Apex:
        if ((w - project_polar(w, mu)).norm() > tiny_y) {
          const double r = w.head<2>().norm();
          if (mu * r <= w[2]) {
            set.cone[k] = ConeState::Inactive;  // the multiplier points into the cone
          } else {
            set.cone[k] = ConeState::Boundary;
            if (r > 0.0) set.dir[k] = w.head<2>() / r;
          }
          changed = true;
        }
        break;
    }
  }
  return changed;
}

/// Active-set refinement seeded by an ADMM iterate (all quantities scaled).
PolishResult polish(const Scaled& s, const Rows& rows, const VectorXd& x, const VectorXd& y,
                    ActiveSet set) {
  VectorXd xs = x, ys = y;
  for (int round = 0; round < kPolishRounds; ++round) {
    if (!newton_kkt(s, rows, set, xs, ys)) {
      // Boundary curvature blows up next to the apex; retry with the
      // boundary cone closest to its apex pinned there.
      int closest = -1;
      double best = kInf;
      for (int k = 0; k < rows.cones(); ++k) {
        if (set.cone[k] != ConeState::Boundary) continue;
        const double norm = (s.a.middleRows(rows.cone_begin + 3 * k, 3) * x).norm();
        if (norm < best) {
          best = norm;
          closest = k;
        }
      }
      if (closest < 0) return {};
      set.cone[closest] = ConeState::Apex;
      xs = x;
      ys = y;
      continue;
    }
    if (!correct_active_set(s, rows, xs, ys, set)) {
      PolishResult out;
      out.x = xs;
      out.y = ys;
      out.z = s.a * xs;
      project_rows(rows, s, out.z);
      out.ok = true;
      return out;
    }
  }
  return {};
}

bool primal_infeasible(const Rows& rows, const VectorXd& dy, double eps) {
  const double ny = inf_norm(dy);
  if (ny < 1e-30) return false;
  if (inf_norm(rows.a.transpose() * dy) > eps * ny) return false;
  double support = 0.0;
  for (int i = 0; i < rows.m(); ++i) {
    if (rows.is_cone_row(i)) continue;
    if (dy[i] > 0.0) {
      if (rows.hi[i] == kInf) return false;
      support += rows.hi[i] * dy[i];
    } else if (dy[i] < 0.0) {
      if (rows.lo[i] == -kInf) return false;
      support += rows.lo[i] * dy[i];
    }
  }
  for (int k = 0; k < rows.cones(); ++k) {
    const Vec3 w = dy.segment<3>(rows.cone_begin + 3 * k);
    if ((w - project_polar(w, rows.mu[k])).norm() > eps * ny) return false;
  }
  return support < -eps * ny;
}

bool dual_infeasible(const QpProblem& p, const Rows& rows, const VectorXd& dx, double eps) {
  const double nx = inf_norm(dx);
  if (nx < 1e-30) return false;
  if (inf_norm(p.hessian * dx) > eps * nx) return false;
  if (p.linear.dot(dx) >= -eps * nx) return false;
  const VectorXd adx = rows.a * dx;
  for (int i = 0; i < rows.m(); ++i) {
    if (rows.is_cone_row(i)) continue;
    if (rows.hi[i] < kInf && adx[i] > eps * nx) return false;
    if (rows.lo[i] > -kInf && adx[i] < -eps * nx) return false;
  }
  for (int k = 0; k < rows.cones(); ++k) {
    if (cone_violation(adx.segment<3>(rows.cone_begin + 3 * k), rows.mu[k]) > eps * nx) {
      return false;
    }
  }
  return true;
}

}  // namespace

const char* to_string(QpStatus status) {
  switch (status) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::MaxIter: return "max_iter";
    case QpStatus::PrimalInfeasible: return "primal_infeasible";
    case QpStatus::DualInfeasible: return "dual_infeasible";
  }
  return "unknown";
}

Vec3 project_soc(const Vec3& v, double mu) {
  const double r = v.head<2>().norm();
  if (r <= mu * v[2]) return v;
  if (mu * r <= -v[2]) return Vec3::Zero();
  const double t = (mu * r + v[2]) / (1.0 + mu * mu);
  return Vec3(mu * t * v[0] / r, mu * t * v[1] / r, t);
}

QpResult qp_solve(const QpProblem& problem, double tol, int max_iter) {
  QpSettings settings;
  settings.tol = tol;
  settings.max_iter = max_iter;
  return qp_solve(problem, settings);
}

QpResult qp_solve(const QpProblem& problem, const QpSettings& settings) {
  validate(problem);
  if (!(settings.tol > 0.0) || settings.max_iter < 1 || !(settings.rho > 0.0) ||
      !(settings.sigma > 0.0) || !(settings.alpha > 0.0 && settings.alpha < 2.0) ||
      settings.check_interval < 1 || settings.adapt_interval < 1) {
    fail(ErrorCode::InvalidArgument, "qp: invalid settings");
  }
  const int n = problem.size();
  const Rows rows = stack_rows(problem);
  const int m = rows.m();

  QpResult result;
  result.box_dual = VectorXd::Zero(n);
  result.cone_dual.assign(problem.cones.size(), Vec3::Zero());
  result.ineq_dual = VectorXd::Zero(problem.ineq_rhs.size());
  for (int i = 0; i < m; ++i) {
    if (rows.lo[i] > rows.hi[i]) {
      result.x = VectorXd::Zero(n);
      result.status = QpStatus::PrimalInfeasible;
      return result;
    }
  }

  const Scaled s = equilibrate(problem.hessian, problem.linear, rows, settings.scaling_iters);

  VectorXd rho_vec(m);
  double rho = settings.rho;
  auto set_rho = [&](double r) {
    rho = std::clamp(r, kRhoMin, kRhoMax);
    for (int i = 0; i < m; ++i) {
      const bool eq = !rows.is_cone_row(i) && rows.lo[i] == rows.hi[i];
      rho_vec[i] = eq ? kEqualityRhoScale * rho : rho;
    }
  };
  set_rho(rho);
  Eigen::LLT<MatrixXd> factor;
  auto refactor = [&] {
    MatrixXd k = s.p + s.a.transpose() * rho_vec.asDiagonal() * s.a;
    k.diagonal().array() += settings.sigma;
    factor.compute(k);
    if (factor.info() != Eigen::Success) fail(ErrorCode::NotPsd, "qp: KKT factorization failed");
  };
  refactor();

  VectorXd x = VectorXd::Zero(n), z = VectorXd::Zero(m), y = VectorXd::Zero(m);
  if (settings.initial_x.size() == n) {
    x = settings.initial_x.cwiseQuotient(s.d);
    z = s.a * x;
    project_rows(rows, s, z);
  }
  VectorXd x_prev = x, y_prev = y;

  auto finish = [&](const VectorXd& xs, const VectorXd& ys, QpStatus status, bool polished) {
    const VectorXd xu = s.d.cwiseProduct(xs);
    const VectorXd yu = s.e.cwiseProduct(ys) / s.c;
    result.x = xu;
    result.status = status;
    result.polished = polished;
    for (int k = 0; k < rows.cone_begin; ++k) result.box_dual[rows.box_var[k]] = yu[k];
    for (int c = 0; c < rows.cones(); ++c) result.cone_dual[c] = yu.segment<3>(rows.cone_begin + 3 * c);
    result.ineq_dual = yu.tail(m - rows.ineq_begin);
    const Certificate cert = certify(problem, rows, xu, yu);
    result.primal_res = cert.primal;
    result.dual_res = cert.dual;
    return result;
  };

  // Polishing from the same guessed active set would repeat the same failure.
  ActiveSet failed_guess;
  auto try_polish = [&](const Residuals& admm) -> bool {
    if (!settings.polish) return false;
    const ActiveSet guess = guess_active_set(s, rows, z, y);
    if (guess.same_pattern(failed_guess)) return false;
    const PolishResult pr = polish(s, rows, x, y, guess);
    if (!pr.ok) {
      failed_guess = guess;
      return false;
    }
    const Unscaled u = unscale(s, pr.x, pr.z, pr.y);
    const Certificate cert = certify(problem, rows, u.x, u.y);
    const Residuals r = admm_residuals(problem, rows, u, settings.tol);
    if (cert.primal > std::max(admm.prim, r.eps_prim) || cert.dual > std::max(admm.dual, r.eps_dual) ||
        cert.multiplier > r.eps_dual) {
      failed_guess = guess;
      return false;
    }
    x = pr.x;
    z = pr.z;
    y = pr.y;
    return true;
  };

  VectorXd rhs(n), xt(n), zt(m), zr(m);
  for (int iter = 1; iter <= settings.max_iter; ++iter) {
    x_prev = x;
    y_prev = y;
    rhs = settings.sigma * x - s.q + s.a.transpose() * (rho_vec.cwiseProduct(z) - y);
    xt = factor.solve(rhs);
    zt = s.a * xt;
    x = settings.alpha * xt + (1.0 - settings.alpha) * x_prev;
    zr = settings.alpha * zt + (1.0 - settings.alpha) * z;
    z = zr + y.cwiseQuotient(rho_vec);
    project_rows(rows, s, z);
    y += rho_vec.cwiseProduct(zr - z);
    result.iterations = iter;
    if (settings.on_iterate) settings.on_iterate(iter, s.d.cwiseProduct(x));

    const bool last = iter == settings.max_iter;
    if (iter % settings.check_interval == 0 || last) {
      const Residuals r = admm_residuals(problem, rows, unscale(s, x, z, y), settings.tol);
      if (r.converged()) {
        const bool polished = try_polish(r);
        return finish(x, y, QpStatus::Optimal, polished);
      }
      if (r.prim <= kPolishTrigger * r.eps_prim && r.dual <= kPolishTrigger * r.eps_dual && try_polish(r)) {
        return finish(x, y, QpStatus::Optimal, true);
      }
      const VectorXd dy = s.e.cwiseProduct(y - y_prev) / s.c;
      const VectorXd dx = s.d.cwiseProduct(x - x_prev);
      if (primal_infeasible(rows, dy, settings.infeasibility_tol)) {
        return finish(x, y, QpStatus::PrimalInfeasible, false);
      }
      if (dual_infeasible(problem, rows, dx, settings.infeasibility_tol)) {
        return finish(x, y, QpStatus::DualInfeasible, false);
      }
    }
    if (settings.adaptive_rho && iter % settings.adapt_interval == 0 && m > 0) {
      const VectorXd ax = s.a * x, px = s.p * x, aty = s.a.transpose() * y;
      const double prim = inf_norm(ax - z) / std::max({inf_norm(ax), inf_norm(z), 1e-30});
      const double dual = inf_norm(px + s.q + aty) /
                          std::max({inf_norm(px), inf_norm(aty), inf_norm(s.q), 1e-30});
      const double proposal = rho * std::sqrt(prim / std::max(dual, 1e-30));
      if (proposal > 5.0 * rho || proposal < 0.2 * rho) {
        set_rho(proposal);
        refactor();
      }
    }
  }
  return finish(x, y, QpStatus::MaxIter, false);
}

}  // namespace hybridlink
