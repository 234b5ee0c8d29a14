#include "hybridlink/contact_id.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>

#include "hybridlink/errors.hpp"

namespace hybridlink {

std::vector<int> select_active_contacts(const HybridModel& model, const GeneralizedState& state,
                                        double height_eps, double speed_eps) {
  check_dimensions(model, state);
  const Kinematics kin(model, state);
  std::vector<int> active;
  for (std::size_t i = 0; i < model.contacts.size(); ++i) {
    const BodyPoint& p = model.contacts[i].at;
    if (kin.point_position(p).z() > height_eps) continue;
    if ((kin.point_jacobian(p) * state.psi).norm() > speed_eps) continue;
    active.push_back(static_cast<int>(i));
  }
  return active;
}

ContactSolution id_solve(const HybridModel& model, const IdProblem& problem,
                         const QpSettings& qp) {
  const GeneralizedState& state = problem.state;
  check_dimensions(model, state);
  if (state.psi_dot.size() != model.dof()) {
    fail(ErrorCode::DimensionMismatch, "inverse dynamics needs psi_dot");
  }
  const int n = model.dof();
  const int nt = n - 6;
  const int nc = static_cast<int>(problem.active_contacts.size());
  const int nx = nt + 3 * nc;
  for (int c : problem.active_contacts) {
    if (c < 0 || c >= static_cast<int>(model.contacts.size())) {
      fail(ErrorCode::DimensionMismatch, "active contact index out of range");
    }
  }
  if (problem.mu_override && !(*problem.mu_override > 0.0)) {
    fail(ErrorCode::InvalidArgument, "mu must be > 0");
  }

  const IdWeights& w = problem.weights;
  Eigen::VectorXd w1(n);
  if (w.w_residual.size()) {
    if (w.w_residual.size() != n) fail(ErrorCode::DimensionMismatch, "w_residual has the wrong size");
    w1 = w.w_residual;
  } else {
    w1.head<6>().setConstant(w.base);
    w1.tail(nt).setConstant(w.actuated);
  }
  Eigen::VectorXd w2(nx);
  if (w.w_reg.size()) {
    if (w.w_reg.size() != nx) fail(ErrorCode::DimensionMismatch, "w_reg has the wrong size");
    w2 = w.w_reg;
  } else {
    w2.setConstant(w.reg);
  }
  if (!(w1.array() >= 0.0).all() || !(w2.array() >= 0.0).all() || !w1.allFinite() ||
      !w2.allFinite()) {
    fail(ErrorCode::InvalidArgument, "ID weights must be finite and >= 0");
  }
  if (!(w1.head<6>().array() > 0.0).all()) {
    fail(ErrorCode::InvalidArgument, "base rows of W1 must be positive");
  }

  const Kinematics kin(model, state);
  const MassAndBias mb = mass_and_bias(kin, state);
  const Eigen::VectorXd h = mb.mass * state.psi_dot + mb.bias;

  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, nx);
  b.bottomLeftCorner(nt, nt).setIdentity();
  for (int j = 0; j < nc; ++j) {
    b.middleCols<3>(nt + 3 * j) = kin.point_jacobian(model.contacts[problem.active_contacts[j]].at)
                                      .transpose();
  }

  QpProblem p;
  const Eigen::MatrixXd wb = w1.asDiagonal() * b;
  p.hessian = b.transpose() * wb;
  p.hessian.diagonal() += w2;
  p.linear = -wb.transpose() * h;
  std::vector<double> mu(nc);
  for (int j = 0; j < nc; ++j) {
    mu[j] = problem.mu_override.value_or(model.contacts[problem.active_contacts[j]].mu);
    p.cones.push_back({{nt + 3 * j, nt + 3 * j + 1, nt + 3 * j + 2}, mu[j]});
  }

  const QpResult r = qp_solve(p, qp);
  if (r.status == QpStatus::PrimalInfeasible || r.status == QpStatus::DualInfeasible) {
    fail(ErrorCode::InfeasibleOrUnbounded,
         std::string("inverse dynamics QP: ") + to_string(r.status));
  }

  ContactSolution out;
  out.tauR = r.x.head(model.rigid_dof());
  out.tauS = r.x.segment(model.rigid_dof(), model.strain_dof());
  out.tauS_passive = passive_strain_force(model, state);
  out.tauS_residual = out.tauS - out.tauS_passive;
  out.active_contacts = problem.active_contacts;
  out.forces.assign(model.contacts.size(), Vec3::Zero());
  Eigen::VectorXd x = r.x;
  for (int j = 0; j < nc; ++j) {
    const Vec3 f = project_soc(x.segment<3>(nt + 3 * j), mu[j]);
    x.segment<3>(nt + 3 * j) = f;
    out.forces[problem.active_contacts[j]] = f;
  }
  out.residual_dynamics = h - b * x;
  out.status = r.status;
  out.iterations = r.iterations;
  out.primal_res = r.primal_res;
  out.dual_res = r.dual_res;
  return out;
}

std::vector<std::string> contact_groups(const HybridModel& model, std::vector<int>* group_of) {
  std::vector<std::string> groups;
  if (group_of) group_of->assign(model.contacts.size(), 0);
  for (std::size_t c = 0; c < model.contacts.size(); ++c) {
    const std::string& g = model.contacts[c].group.empty() ? model.contacts[c].label
                                                             : model.contacts[c].group;
    auto it = std::find(groups.begin(), groups.end(), g);
    if (group_of) (*group_of)[c] = static_cast<int>(it - groups.begin());
    if (it == groups.end()) groups.push_back(g);
  }
  return groups;
}

int default_thread_count() {
  if (const char* env = std::getenv("HYBRIDLINK_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

IdSequenceResult id_solve_sequence(const HybridModel& model,
                                   const std::vector<GeneralizedState>& states,
                                   const IdSequenceSettings& settings) {
  const std::size_t frames = states.size();
  if (!settings.active_override.empty() && settings.active_override.size() != frames) {
    fail(ErrorCode::DimensionMismatch, "active_override needs one contact set per frame");
  }
  IdSequenceResult out;
  out.frames.resize(frames);

  auto solve = [&](std::size_t k) {
    IdFrame& fr = out.frames[k];
    try {
      IdProblem p;
      p.state = states[k];
      p.weights = settings.weights;
      p.mu_override = settings.mu_override;
      p.active_contacts = settings.active_override.empty()
                              ? select_active_contacts(model, states[k], settings.height_eps,
                                                       settings.speed_eps)
                              : settings.active_override[k];
      fr.solution = id_solve(model, p, settings.qp);
      fr.ok = true;
    } catch (const Error& e) {
      fr.ok = false;
      fr.error = std::string(to_string(e.code())) + ": " + e.what();
    }
  };

  const int threads = std::max(1, std::min<int>(settings.threads > 0 ? settings.threads
                                                                     : default_thread_count(),
                                                static_cast<int>(frames)));
  if (threads <= 1) {
    for (std::size_t k = 0; k < frames; ++k) solve(k);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t k = t; k < frames; k += threads) solve(k);
      });
    }
    for (auto& th : pool) th.join();
  }

  std::vector<int> group_of;
  out.groups = contact_groups(model, &group_of);
  out.grf.assign(out.groups.size(), std::vector<Vec3>(frames, Vec3::Zero()));
  out.net_grf.assign(frames, Vec3::Zero());
  for (std::size_t k = 0; k < frames; ++k) {
    if (!out.frames[k].ok) continue;
    const auto& f = out.frames[k].solution.forces;
    for (std::size_t c = 0; c < f.size(); ++c) {
      out.grf[group_of[c]][k] += f[c];
      out.net_grf[k] += f[c];
    }
  }
  return out;
}

}  // namespace hybridlink
