#include "hybridlink/muscle.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hybridlink/errors.hpp"

namespace hybridlink {

namespace {

void check_path(const HybridModel& model, const MusclePath& m) {
  if (m.via_points.size() < 2) {
    fail(ErrorCode::InvalidArgument, "muscle '" + m.name + "' needs at least 2 via points");
  }
  for (const BodyPoint& p : m.via_points) {
    if (p.body < 0 || p.body >= static_cast<int>(model.bodies.size())) {
      fail(ErrorCode::UnknownBody, "muscle '" + m.name + "' references a missing body");
    }
  }
}

}  // namespace

double muscle_length(const Kinematics& kin, const MusclePath& muscle) {
  check_path(kin.model(), muscle);
  double len = 0.0;
  Vec3 prev = kin.point_position(muscle.via_points[0]);
  for (std::size_t i = 1; i < muscle.via_points.size(); ++i) {
    const Vec3 p = kin.point_position(muscle.via_points[i]);
    len += (p - prev).norm();
    prev = p;
  }
  return len;
}

double muscle_length(const HybridModel& model, const GeneralizedState& state,
                     const MusclePath& muscle) {
  return muscle_length(Kinematics(model, state), muscle);
}

Eigen::MatrixXd muscle_jacobian(const Kinematics& kin, const std::vector<MusclePath>& muscles) {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(static_cast<long>(muscles.size()), kin.dof());
  for (std::size_t i = 0; i < muscles.size(); ++i) {
    const MusclePath& m = muscles[i];
    check_path(kin.model(), m);
    Vec3 pa = kin.point_position(m.via_points[0]);
    Matrix3X ja = kin.point_jacobian(m.via_points[0]);
    for (std::size_t k = 1; k < m.via_points.size(); ++k) {
      const Vec3 pb = kin.point_position(m.via_points[k]);
      Matrix3X jb = kin.point_jacobian(m.via_points[k]);
      const Vec3 d = pb - pa;
      const double len = d.norm();
      if (len > 0.0) j.row(i) += (d / len).transpose() * (jb - ja);
      pa = pb;
      ja = std::move(jb);
    }
  }
  return j;
}

Eigen::MatrixXd muscle_jacobian(const HybridModel& model, const GeneralizedState& state,
                                const std::vector<MusclePath>& muscles) {
  return muscle_jacobian(Kinematics(model, state), muscles);
}

double force_length(const MuscleParams& p, double length) {
  const double x = (length - p.l_opt) / (p.width * p.l_opt);
  return std::exp(-x * x);
}

double force_velocity(const MuscleParams& p, double l_dot) {
  const double k = p.fv_curvature;
  double fv;
  if (l_dot <= 0.0) {
    const double s = -l_dot / p.v_max;
    if (s >= 1.0) return 0.0;
    fv = (1.0 - s) / (1.0 + s / k);
  } else {
    // Slope at zero equals the concentric slope (1 + 1/k) / v_max.
    const double c = (p.fv_eccentric - 1.0) * k / (1.0 + k);
    const double v = l_dot / p.v_max;
    fv = c > 0.0 ? (c + p.fv_eccentric * v) / (c + v) : 1.0;
  }
  return std::clamp(fv, 0.0, p.fv_eccentric);
}

double hill_tension(const MuscleParams& p, double activation, double length, double l_dot) {
  if (!(activation >= 0.0 && activation <= 1.0)) {
    fail(ErrorCode::InvalidArgument, "activation must lie in [0, 1]");
  }
  return activation * force_length(p, length) * force_velocity(p, l_dot) * p.f_max;
}

MuscleState activation_step(const MuscleParams& p, MuscleState state, double u_emg, double dt) {
  if (!(dt > 0.0)) fail(ErrorCode::InvalidArgument, "dt must be > 0");
  if (!(u_emg >= 0.0)) fail(ErrorCode::InvalidArgument, "EMG amplitude must be >= 0");
  if (!(state.activation >= 0.0 && state.activation <= 1.0)) {
    fail(ErrorCode::InvalidArgument, "activation must lie in [0, 1]");
  }
  const double u = std::min(u_emg / p.u_mvc, 1.0);
  const double tau = u >= state.activation ? p.tau_ac : p.tau_da;
  state.activation = u + (state.activation - u) * std::exp(-dt / tau);
  state.activation = std::clamp(state.activation, 0.0, 1.0);
  return state;
}

MuscleSolution muscle_optimize(const HybridModel& model, const GeneralizedState& state,
                               const Eigen::VectorXd& tauR_target,
                               const std::vector<MusclePath>& muscles,
                               const Eigen::VectorXd& f_ref, const MuscleWeights& weights,
                               const QpSettings& qp) {
  check_dimensions(model, state);
  const int nm = static_cast<int>(muscles.size());
  const int nr = model.rigid_dof();
  if (tauR_target.size() != nr) fail(ErrorCode::DimensionMismatch, "tauR has the wrong size");
  if (f_ref.size() != 0 && f_ref.size() != nm) {
    fail(ErrorCode::DimensionMismatch, "f_ref needs one entry per muscle");
  }
  if (weights.torque.size() != 0 && weights.torque.size() != nr) {
    fail(ErrorCode::DimensionMismatch, "torque weights need one entry per joint coordinate");
  }
  if (weights.tension.size() != 0 && weights.tension.size() != nm) {
    fail(ErrorCode::DimensionMismatch, "tension weights need one entry per muscle");
  }
  const Eigen::VectorXd w1 = weights.torque.size() ? weights.torque : Eigen::VectorXd::Ones(nr);
  const Eigen::VectorXd w2 = weights.tension.size() ? weights.tension : Eigen::VectorXd::Zero(nm);
  const Eigen::VectorXd fr = f_ref.size() ? f_ref : Eigen::VectorXd::Zero(nm);
  if (!(w1.array() >= 0.0).all() || !(w2.array() >= 0.0).all()) {
    fail(ErrorCode::InvalidArgument, "muscle weights must be >= 0");
  }

  const Kinematics kin(model, state);
  const Eigen::MatrixXd jl = muscle_jacobian(kin, muscles);
  const Eigen::VectorXd l_dot = jl * state.psi;

  MuscleSolution out;
  out.f_max.resize(nm);
  for (int i = 0; i < nm; ++i) {
    out.f_max[i] = hill_tension(muscles[i].params, 1.0, muscle_length(kin, muscles[i]), l_dot[i]);
  }
  const double scale = nm && nr ? jl.cwiseAbs().maxCoeff() : 0.0;
  for (int r = 0; r < nr; ++r) {
    const double norm = jl.col(model.rigid_column(r)).norm();
    (norm > 1e-14 * scale ? out.rows : out.excluded).push_back(r);
  }
  const int ns = static_cast<int>(out.rows.size());
  Eigen::MatrixXd jr(nm, ns);
  Eigen::VectorXd tau(ns), w(ns);
  for (int k = 0; k < ns; ++k) {
    jr.col(k) = jl.col(model.rigid_column(out.rows[k]));
    tau[k] = tauR_target[out.rows[k]];
    w[k] = w1[out.rows[k]];
  }

  // Residual tau + J_r^T f since the muscles produce -J_l^T f.
  QpProblem p;
  p.hessian = jr * w.asDiagonal() * jr.transpose();
  p.hessian.diagonal() += w2;
  p.linear = jr * w.cwiseProduct(tau) - w2.cwiseProduct(fr);
  p.lower = Eigen::VectorXd::Zero(nm);
  p.upper = out.f_max;
  const QpResult r = qp_solve(p, qp);
  if (r.status == QpStatus::PrimalInfeasible || r.status == QpStatus::DualInfeasible) {
    fail(ErrorCode::InfeasibleOrUnbounded, std::string("muscle QP: ") + to_string(r.status));
  }
  out.tension = r.x.cwiseMax(0.0).cwiseMin(out.f_max);
  out.torque = -jr.transpose() * out.tension;
  out.residual = tau - out.torque;
  out.status = r.status;
  out.iterations = r.iterations;
  return out;
}

}  // namespace hybridlink
