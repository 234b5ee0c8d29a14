#include "hybridlink/ik.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include <Eigen/Cholesky>

#include "hybridlink/errors.hpp"

namespace hybridlink {

namespace {

struct MarkerSet {
  std::vector<int> index;  // visible markers with positive weight
  std::vector<double> weight;
};

MarkerSet select_markers(const HybridModel& model, const MarkerFrame& frame,
                         const IkSettings& settings) {
  const std::size_t m = model.markers.size();
  if (frame.positions.size() != m) {
    fail(ErrorCode::DimensionMismatch, "marker frame has " + std::to_string(frame.positions.size()) +
                                           " positions, model has " + std::to_string(m) + " markers");
  }
  if (!frame.visible.empty() && frame.visible.size() != m) {
    fail(ErrorCode::DimensionMismatch, "visibility mask does not match the marker count");
  }
  if (settings.w_residual.size() != 0 && settings.w_residual.size() != static_cast<long>(m)) {
    fail(ErrorCode::DimensionMismatch, "w_residual needs one weight per marker");
  }
  MarkerSet set;
  for (std::size_t k = 0; k < m; ++k) {
    if (!frame.visible.empty() && !frame.visible[k]) continue;
    const double w = settings.w_residual.size() ? settings.w_residual[k] : 1.0;
    if (w == 0.0) continue;
    if (!frame.positions[k].allFinite()) {
      fail(ErrorCode::InvalidArgument, "visible marker '" + model.markers[k].label +
                                           "' has a non-finite position");
    }
    set.index.push_back(static_cast<int>(k));
    set.weight.push_back(w);
  }
  return set;
}

void check_settings(const HybridModel& model, const IkSettings& s) {
  if (s.w_residual.size() && !(s.w_residual.array() >= 0.0).all()) {
    fail(ErrorCode::InvalidArgument, "marker weights must be >= 0");
  }
  if (s.w_damping.size() && s.w_damping.size() != model.dof()) {
    fail(ErrorCode::DimensionMismatch, "w_damping needs one weight per column of psi");
  }
  if (s.w_damping.size() && !(s.w_damping.array() >= 0.0).all()) {
    fail(ErrorCode::InvalidArgument, "damping weights must be >= 0");
  }
  if (s.max_iters < 0) fail(ErrorCode::InvalidArgument, "max_iters must be >= 0");
  if (!(s.tol_step > 0.0) || !(s.tol_residual > 0.0) || !(s.lambda0 > 0.0)) {
    fail(ErrorCode::InvalidArgument, "IK tolerances and lambda0 must be > 0");
  }
}

double weighted_cost(const Kinematics& kin, const HybridModel& model, const MarkerFrame& frame,
                     const MarkerSet& set, double* unweighted = nullptr) {
  double c = 0.0, u = 0.0;
  for (std::size_t i = 0; i < set.index.size(); ++i) {
    const int k = set.index[i];
    const double e2 = (frame.positions[k] - kin.point_position(model.markers[k].at)).squaredNorm();
    c += set.weight[i] * e2;
    u += e2;
  }
  if (unweighted) *unweighted = u;
  return 0.5 * c;
}

double rms(double squared_sum, std::size_t markers) {
  return markers ? std::sqrt(squared_sum / (3.0 * static_cast<double>(markers))) : 0.0;
}

}  // namespace

double ik_cost(const HybridModel& model, const MarkerFrame& frame, const GeneralizedState& state,
               const IkSettings& settings) {
  const MarkerSet set = select_markers(model, frame, settings);
  return weighted_cost(Kinematics(model, state), model, frame, set);
}

IkResult ik_solve_frame(const HybridModel& model, const MarkerFrame& frame,
                        const GeneralizedState& q_init, const IkSettings& settings) {
  check_settings(model, settings);
  check_dimensions(model, q_init);
  const MarkerSet set = select_markers(model, frame, settings);
  std::set<int> bodies;
  for (int k : set.index) bodies.insert(model.markers[k].at.body);
  if (set.index.size() < 3 || bodies.size() < 2) {
    fail(ErrorCode::Underdetermined,
         "IK needs at least 3 visible markers on at least 2 bodies (have " +
             std::to_string(set.index.size()) + " on " + std::to_string(bodies.size()) + ")");
  }

  const int n = model.dof();
  const int rows = 3 * static_cast<int>(set.index.size());
  const Eigen::VectorXd damping =
      settings.w_damping.size() ? settings.w_damping : Eigen::VectorXd::Constant(n, 1e-9);

  IkResult out;
  out.state = q_init;
  double sq = 0.0;
  Kinematics kin(model, out.state);
  double cost = weighted_cost(kin, model, frame, set, &sq);
  out.residual_rms = rms(sq, set.index.size());
  double lambda = settings.lambda0;

  Eigen::MatrixXd jac(rows, n);
  Eigen::VectorXd err(rows), wvec(rows);
  for (std::size_t i = 0; i < set.index.size(); ++i) wvec.segment<3>(3 * i).setConstant(set.weight[i]);

  bool relinearize = true;
  while (out.residual_rms >= settings.tol_residual && out.iterations < settings.max_iters) {
    if (relinearize) {
      for (std::size_t i = 0; i < set.index.size(); ++i) {
        const BodyPoint& p = model.markers[set.index[i]].at;
        jac.middleRows<3>(3 * i) = kin.point_jacobian(p);
        err.segment<3>(3 * i) = frame.positions[set.index[i]] - kin.point_position(p);
      }
      relinearize = false;
    }
    ++out.iterations;
    Eigen::MatrixXd normal = jac.transpose() * wvec.asDiagonal() * jac;
    normal.diagonal() += damping + Eigen::VectorXd::Constant(n, lambda);
    const Eigen::VectorXd grad = jac.transpose() * wvec.cwiseProduct(err);
    const Eigen::VectorXd step = normal.ldlt().solve(grad);
    if (!step.allFinite()) fail(ErrorCode::NumericalBlowup, "IK step is not finite");

    const GeneralizedState trial =
        displaced(out.state, step.head<6>(), step.tail(n - 6));
    Kinematics trial_kin(model, trial);
    double trial_sq = 0.0;
    const double trial_cost = weighted_cost(trial_kin, model, frame, set, &trial_sq);
    if (trial_cost <= cost) {
      out.state = trial;
      kin = std::move(trial_kin);
      cost = trial_cost;
      out.residual_rms = rms(trial_sq, set.index.size());
      lambda = std::max(lambda / 10.0, 1e-15);
      relinearize = true;
      if (step.norm() < settings.tol_step) {
        out.converged = true;
        break;
      }
    } else {
      lambda *= 10.0;
      // The cost cannot be lowered at any step length the arithmetic resolves.
      if (lambda > 1e12 || step.norm() < settings.tol_step) {
        out.converged = true;
        break;
      }
    }
  }
  if (out.residual_rms < settings.tol_residual) out.converged = true;
  return out;
}

double uniform_step(const std::vector<double>& times) {
  if (times.size() < 2) return 0.0;
  const double dt = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
  if (!(dt > 0.0)) fail(ErrorCode::InvalidArgument, "times must be strictly increasing");
  for (std::size_t k = 1; k < times.size(); ++k) {
    const double d = times[k] - times[k - 1];
    if (!(d > 0.0)) fail(ErrorCode::InvalidArgument, "times must be strictly increasing");
    if (std::abs(d - dt) > 1e-9) {
      fail(ErrorCode::InvalidArgument, "sample spacing is not uniform at row " + std::to_string(k));
    }
  }
  return dt;
}

namespace {

std::vector<Eigen::VectorXd> moving_average(const std::vector<Eigen::VectorXd>& x, int window) {
  if (window <= 1) return x;
  const int n = static_cast<int>(x.size());
  const int half = window / 2;
  std::vector<Eigen::VectorXd> out(x.size());
  for (int k = 0; k < n; ++k) {
    // Shrink symmetrically near the ends so the filter stays unbiased.
    const int h = std::min({half, k, n - 1 - k});
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(x[k].size());
    for (int j = k - h; j <= k + h; ++j) sum += x[j];
    out[k] = sum / static_cast<double>(2 * h + 1);
  }
  return out;
}

}  // namespace

void differentiate_states(std::vector<GeneralizedState>& states, double dt, int window) {
  const int n = static_cast<int>(states.size());
  if (n == 0) return;
  const int dof = 6 + static_cast<int>(states[0].qR.size() + states[0].qS.size());
  if (n == 1) {
    states[0].psi = Eigen::VectorXd::Zero(dof);
    states[0].psi_dot = Eigen::VectorXd::Zero(dof);
    return;
  }
  if (!(dt > 0.0)) fail(ErrorCode::InvalidArgument, "dt must be > 0");

  auto rate = [&](int k, int a, int b) {
    // Body twist of frame k from its neighbours a <= k <= b.
    const Pose inv = states[k].base_pose.inverse();
    const Twist fwd = b == k ? Twist::Zero() : log_se3(inv * states[b].base_pose);
    const Twist bwd = a == k ? Twist::Zero() : log_se3(inv * states[a].base_pose);
    Eigen::VectorXd v(dof);
    v.head<6>() = (fwd - bwd) / ((b - a) * dt);
    v.tail(dof - 6) = (states[b].coordinates() - states[a].coordinates()) / ((b - a) * dt);
    return v;
  };
  std::vector<Eigen::VectorXd> psi(n);
  for (int k = 0; k < n; ++k) psi[k] = rate(k, std::max(k - 1, 0), std::min(k + 1, n - 1));
  psi = moving_average(psi, window);

  std::vector<Eigen::VectorXd> acc(n);
  for (int k = 0; k < n; ++k) {
    const int a = std::max(k - 1, 0), b = std::min(k + 1, n - 1);
    acc[k] = (psi[b] - psi[a]) / ((b - a) * dt);
  }
  acc = moving_average(acc, window);
  for (int k = 0; k < n; ++k) {
    states[k].psi = psi[k];
    states[k].psi_dot = acc[k];
  }
}

IkSequence ik_solve_sequence(const HybridModel& model, const std::vector<MarkerFrame>& frames,
                             const IkSettings& settings, int smoothing_window) {
  return ik_solve_sequence(model, frames, GeneralizedState::initial(model), settings,
                           smoothing_window);
}

IkSequence ik_solve_sequence(const HybridModel& model, const std::vector<MarkerFrame>& frames,
                             const GeneralizedState& q_init, const IkSettings& settings,
                             int smoothing_window) {
  IkSequence seq;
  for (const MarkerFrame& f : frames) seq.times.push_back(f.time);
  const double dt = uniform_step(seq.times);

  GeneralizedState guess = q_init;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    try {
      IkResult r = ik_solve_frame(model, frames[k], guess, settings);
      guess = r.state;
      seq.states.push_back(r.state);
      seq.frames.push_back(std::move(r));
    } catch (const Error& e) {
      fail(e.code(), "frame " + std::to_string(k) + ": " + e.what());
    }
  }
  differentiate_states(seq.states, dt, smoothing_window);
  for (std::size_t k = 0; k < frames.size(); ++k) seq.frames[k].state = seq.states[k];
  return seq;
}

}  // namespace hybridlink
