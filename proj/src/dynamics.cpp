#include "hybridlink/dynamics.hpp"

#include <cmath>
#include <string>

#include <Eigen/Cholesky>

#include "hybridlink/errors.hpp"
#include "hybridlink/quadrature.hpp"

namespace hybridlink {

namespace {

// Configuration-space step of the directional difference used for dJ/dt.
constexpr double kBiasStep = 1e-6;
constexpr double kMinReciprocalCondition = 1e-12;
constexpr double kBlowupNorm = 1e9;

Eigen::MatrixXd assemble_mass(const std::vector<MassElement>& elements, int n) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (const auto& e : elements) {
    m.noalias() += e.jacobian.transpose() * (e.inertia * e.jacobian);
  }
  return 0.5 * (m + m.transpose());
}

Eigen::VectorXd assemble_bias(const HybridModel& model, const GeneralizedState& state,
                              const std::vector<MassElement>& elements, int order) {
  const int n = model.dof();
  const Eigen::VectorXd& psi = state.psi;
  const Eigen::VectorXd rdot = psi.tail(n - 6);
  const double speed = rdot.norm();

  std::vector<Vec6> jdot_psi(elements.size(), Vec6::Zero());
  if (speed > 0.0) {
    const double h = kBiasStep / speed;
    const GeneralizedState plus = displaced(state, Twist::Zero(), h * rdot);
    const GeneralizedState minus = displaced(state, Twist::Zero(), -h * rdot);
    const auto ep = mass_elements(Kinematics(model, plus), order);
    const auto em = mass_elements(Kinematics(model, minus), order);
    for (std::size_t k = 0; k < elements.size(); ++k) {
      jdot_psi[k] = (ep[k].jacobian - em[k].jacobian) * psi / (2.0 * h);
    }
  }

  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  for (std::size_t k = 0; k < elements.size(); ++k) {
    const MassElement& e = elements[k];
    const Twist eta = e.jacobian * psi;
    Twist g_acc = Twist::Zero();
    g_acc.tail<3>() = e.rotation.transpose() * model.gravity;
    const Vec6 wrench =
        e.inertia * (jdot_psi[k] - g_acc) - ad_se3(eta).transpose() * (e.inertia * eta);
    b.noalias() += e.jacobian.transpose() * wrench;
  }
  return b;
}

std::vector<Twist> segment_rates(const Body& body, const Eigen::VectorXd& psi,
                                 const HybridModel& model) {
  const PcsRod& rod = body.rod().rod;
  std::vector<Twist> rates(rod.segments.size(), Twist::Zero());
  int k = body.strain_offset;
  for (std::size_t i = 0; i < rod.segments.size(); ++i) {
    for (int c = 0; c < 6; ++c) {
      if (rod.segments[i].active_mask[c]) rates[i][c] = psi[model.strain_column(k++)];
    }
  }
  return rates;
}

void check_finite_state(const GeneralizedState& s, double t) {
  const bool bad = !s.psi.allFinite() || !s.qR.allFinite() || !s.qS.allFinite() ||
                   !s.base_pose.position.allFinite() || s.psi.norm() > kBlowupNorm ||
                   s.qR.norm() > kBlowupNorm || s.qS.norm() > kBlowupNorm ||
                   s.base_pose.position.norm() > kBlowupNorm;
  if (bad) {
    fail(ErrorCode::NumericalBlowup, "state diverged at t = " + std::to_string(t));
  }
}

}  // namespace

Kinematics::Kinematics(const HybridModel& model, const GeneralizedState& state)
    : model_(&model) {
  check_dimensions(model, state);
  const int n = model.dof();
  const int nb = static_cast<int>(model.bodies.size());
  frames_.resize(nb);
  rods_.resize(nb);
  strain_columns_.resize(nb);
  boundaries_.resize(nb);

  frames_[0].pose = state.base_pose;
  frames_[0].jacobian = Matrix6X::Zero(6, n);
  frames_[0].jacobian.leftCols<6>().setIdentity();

  for (int b = 1; b < nb; ++b) {
    const Body& body = model.bodies[b];
    const RodFrame attach = frame(body.parent, model.attachment_arclength(b));
    if (!body.is_rod()) {
      const Joint& joint = body.link().joint;
      const double q = body.joint_coord >= 0 ? state.qR[body.joint_coord] : 0.0;
      const Pose x = joint_transform(joint, q);
      frames_[b].pose = attach.pose * x;
      frames_[b].jacobian = adjoint(x.inverse()) * attach.jacobian;
      if (body.joint_coord >= 0) {
        frames_[b].jacobian.col(model.rigid_column(body.joint_coord)) +=
            joint.motion_subspace();
      }
      continue;
    }
    const RodLink& rl = body.rod();
    PcsRod& rod = rods_[b];
    rod = rl.rod;
    rod.set_active_strain(state.qS.segment(body.strain_offset, rod.active_dof()));
    auto& cols = strain_columns_[b];
    cols.assign(6 * rod.segments.size(), -1);
    int k = body.strain_offset;
    for (std::size_t i = 0; i < rod.segments.size(); ++i) {
      for (int c = 0; c < 6; ++c) {
        if (rod.segments[i].active_mask[c]) cols[6 * i + c] = model.strain_column(k++);
      }
    }
    frames_[b].pose = attach.pose * rl.mount;
    frames_[b].jacobian = adjoint(rl.mount.inverse()) * attach.jacobian;
    boundaries_[b] = rod_boundary_frames(rod, frames_[b], cols);
  }
}

RodFrame Kinematics::frame(int body, double arclength) const {
  if (!model_->bodies[body].is_rod()) return frames_[body];
  const PcsRod& rod = rods_[body];
  const int i = rod.segment_at(arclength);
  return frame_in_segment(rod, i, boundaries_[body][i], arclength - rod.boundary(i),
                          strain_columns_[body]);
}

Pose Kinematics::frame_pose(int body, double arclength) const {
  if (!model_->bodies[body].is_rod()) return frames_[body].pose;
  const PcsRod& rod = rods_[body];
  const int i = rod.segment_at(arclength);
  return boundaries_[body][i].pose *
         exp_se3(rod.segments[i].strain, arclength - rod.boundary(i));
}

Vec3 Kinematics::point_position(const BodyPoint& p) const {
  return frame_pose(p.body, p.arclength).transform(p.local);
}

Matrix3X Kinematics::point_jacobian(const BodyPoint& p) const {
  if (p.body < 0 || p.body >= static_cast<int>(model_->bodies.size())) {
    fail(ErrorCode::UnknownBody, "point references body " + std::to_string(p.body));
  }
  const RodFrame f = frame(p.body, p.arclength);
  const Matrix3X local = f.jacobian.bottomRows<3>() - skew(p.local) * f.jacobian.topRows<3>();
  return f.pose.rotation * local;
}

Kinematics fk_all(const HybridModel& model, const GeneralizedState& state) {
  return Kinematics(model, state);
}

Matrix3X point_jacobian(const HybridModel& model, const GeneralizedState& state,
                        const BodyPoint& point) {
  return Kinematics(model, state).point_jacobian(point);
}

Matrix6X frame_jacobian(const HybridModel& model, const GeneralizedState& state, int body,
                        double arclength) {
  if (body < 0 || body >= static_cast<int>(model.bodies.size())) {
    fail(ErrorCode::UnknownBody, "no body with index " + std::to_string(body));
  }
  return Kinematics(model, state).frame(body, arclength).jacobian;
}

std::vector<MassElement> mass_elements(const Kinematics& kin, int quadrature_order) {
  const HybridModel& model = kin.model();
  std::vector<MassElement> out;
  for (int b = 0; b < static_cast<int>(model.bodies.size()); ++b) {
    const Body& body = model.bodies[b];
    if (!body.is_rod()) {
      const RigidLink& link = body.link();
      if (link.mass == 0.0 && link.inertia_cog.isZero(0.0)) continue;
      const Pose& pose = kin.body_pose(b);
      out.push_back({kin.body_jacobian(b), link_inertia_at_frame(link), pose.rotation,
                     pose.position});
      continue;
    }
    const QuadratureRule& rule = gauss_legendre(quadrature_order);
    const PcsRod& rod = kin.rod(b);
    const auto& bounds = kin.rod_boundaries(b);
    for (int i = 0; i < rod.segment_count(); ++i) {
      const PcsSegment& seg = rod.segments[i];
      for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
        const RodFrame node = frame_in_segment(rod, i, bounds[i], rule.nodes[k] * seg.length,
                                               kin.strain_columns(b));
        out.push_back({node.jacobian, rule.weights[k] * seg.length * seg.inertia_density,
                       node.pose.rotation, node.pose.position});
      }
    }
  }
  return out;
}

Eigen::MatrixXd mass_matrix(const HybridModel& model, const GeneralizedState& state,
                            int quadrature_order) {
  const Kinematics kin(model, state);
  return assemble_mass(mass_elements(kin, quadrature_order), model.dof());
}

Eigen::VectorXd bias_vector(const HybridModel& model, const GeneralizedState& state,
                            int quadrature_order) {
  const Kinematics kin(model, state);
  return assemble_bias(model, state, mass_elements(kin, quadrature_order), quadrature_order);
}

MassAndBias mass_and_bias(const Kinematics& kin, const GeneralizedState& state,
                          int quadrature_order) {
  const auto elements = mass_elements(kin, quadrature_order);
  return {assemble_mass(elements, kin.dof()),
          assemble_bias(kin.model(), state, elements, quadrature_order)};
}

Eigen::VectorXd gravity_force(const HybridModel& model, const GeneralizedState& state,
                              int quadrature_order) {
  const Kinematics kin(model, state);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(model.dof());
  for (const auto& e : mass_elements(kin, quadrature_order)) {
    Twist acc = Twist::Zero();
    acc.tail<3>() = e.rotation.transpose() * model.gravity;
    g.noalias() += e.jacobian.transpose() * (e.inertia * acc);
  }
  return g;
}

Eigen::VectorXd passive_strain_force(const HybridModel& model, const GeneralizedState& state) {
  check_dimensions(model, state);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(model.strain_dof());
  for (const Body& body : model.bodies) {
    if (!body.is_rod()) continue;
    PcsRod rod = body.rod().rod;
    rod.set_active_strain(state.qS.segment(body.strain_offset, rod.active_dof()));
    const RodForce f = rod_passive_force(rod, segment_rates(body, state.psi, model));
    int k = body.strain_offset;
    for (std::size_t j = 0; j < f.free.size(); ++j) {
      if (f.free[j]) out[k++] = f.generalized[j];
    }
  }
  return out;
}

double kinetic_energy(const HybridModel& model, const GeneralizedState& state,
                      int quadrature_order) {
  const Kinematics kin(model, state);
  double t = 0.0;
  for (const auto& e : mass_elements(kin, quadrature_order)) {
    const Twist eta = e.jacobian * state.psi;
    t += 0.5 * eta.dot(e.inertia * eta);
  }
  return t;
}

double gravity_potential(const HybridModel& model, const GeneralizedState& state,
                         int quadrature_order) {
  const Kinematics kin(model, state);
  double v = 0.0;
  for (const auto& e : mass_elements(kin, quadrature_order)) {
    // Translational block is m*I; the coupling block is m*skew(c)^T for a CoG offset c.
    const double m = e.inertia.bottomRightCorner<3, 3>().trace() / 3.0;
    if (m == 0.0) continue;
    const Vec3 c = -vee(e.inertia.bottomLeftCorner<3, 3>()) / m;
    v -= m * model.gravity.dot(e.position + e.rotation * c);
  }
  return v;
}

double elastic_potential(const HybridModel& model, const GeneralizedState& state) {
  check_dimensions(model, state);
  double v = 0.0;
  for (const Body& body : model.bodies) {
    if (!body.is_rod()) continue;
    PcsRod rod = body.rod().rod;
    rod.set_active_strain(state.qS.segment(body.strain_offset, rod.active_dof()));
    v += rod_elastic_energy(rod);
  }
  return v;
}

Eigen::VectorXd contact_generalized_force(const Kinematics& kin,
                                          const std::vector<Vec3>& contact_forces) {
  const HybridModel& model = kin.model();
  Eigen::VectorXd tau = Eigen::VectorXd::Zero(model.dof());
  if (contact_forces.empty()) return tau;
  if (contact_forces.size() != model.contacts.size()) {
    fail(ErrorCode::DimensionMismatch, "expected one force per contact candidate");
  }
  for (std::size_t i = 0; i < contact_forces.size(); ++i) {
    if (contact_forces[i].isZero(0.0)) continue;
    tau.noalias() += kin.point_jacobian(model.contacts[i].at).transpose() * contact_forces[i];
  }
  return tau;
}

Eigen::VectorXd forward_dynamics(const HybridModel& model, const GeneralizedState& state,
                                 const Actuation& input) {
  const Kinematics kin(model, state);
  const int order = 5;
  const auto elements = mass_elements(kin, order);
  const Eigen::MatrixXd m = assemble_mass(elements, model.dof());
  const Eigen::VectorXd b = assemble_bias(model, state, elements, order);

  Eigen::VectorXd tau = contact_generalized_force(kin, input.contact_forces);
  if (input.tauR.size() != 0) {
    if (input.tauR.size() != model.rigid_dof()) {
      fail(ErrorCode::DimensionMismatch, "tauR has the wrong size");
    }
    tau.segment(6, model.rigid_dof()) += input.tauR;
  }
  Eigen::VectorXd tau_s = passive_strain_force(model, state);
  if (input.tauS.size() != 0) {
    if (input.tauS.size() != model.strain_dof()) {
      fail(ErrorCode::DimensionMismatch, "tauS has the wrong size");
    }
    tau_s += input.tauS;
  }
  tau.tail(model.strain_dof()) += tau_s;

  const Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success || llt.rcond() < kMinReciprocalCondition) {
    fail(ErrorCode::SingularMass, "mass matrix is singular or ill-conditioned");
  }
  return llt.solve(tau - b);
}

GeneralizedState displaced(const GeneralizedState& state, const Twist& base_step,
                           const Eigen::VectorXd& coord_step) {
  GeneralizedState out = state;
  out.base_pose = state.base_pose * exp_se3(base_step);
  const long nr = state.qR.size();
  out.qR += coord_step.head(nr);
  out.qS += coord_step.tail(state.qS.size());
  return out;
}

Trajectory integrate(const HybridModel& model, const GeneralizedState& initial,
                     const ActuationFn& input, double dt, int steps, int record_every) {
  if (!(dt > 0.0)) fail(ErrorCode::InvalidArgument, "integrate: dt must be > 0");
  if (steps < 0 || record_every < 1) {
    fail(ErrorCode::InvalidArgument, "integrate: bad step counts");
  }
  check_dimensions(model, initial);
  const int n = model.dof();

  auto accel = [&](double t, const GeneralizedState& s, Actuation* used) {
    Actuation a = input ? input(t, s) : Actuation{};
    Eigen::VectorXd acc = forward_dynamics(model, s, a);
    if (used) *used = std::move(a);
    return acc;
  };
  auto record = [&](Trajectory& traj, double t, const GeneralizedState& s) {
    TrajectorySample sample;
    sample.time = t;
    sample.state = s;
    sample.state.psi_dot = accel(t, s, &sample.input);
    traj.samples.push_back(std::move(sample));
  };

  Trajectory traj;
  GeneralizedState y = initial;
  double t = 0.0;
  record(traj, t, y);

  for (int step = 1; step <= steps; ++step) {
    // Each stage carries (theta, rdot, psi_dot) where theta' = dexp^-1_{-theta}(eta0).
    const Eigen::VectorXd psi0 = y.psi;
    auto stage = [&](const Twist& theta, const Eigen::VectorXd& dr, const Eigen::VectorXd& dpsi,
                     double ts, Twist* theta_rate, Eigen::VectorXd* r_rate,
                     Eigen::VectorXd* psi_rate) {
      GeneralizedState s = displaced(y, theta, dr);
      s.psi = psi0 + dpsi;
      *psi_rate = accel(ts, s, nullptr);
      *theta_rate = dexp_inv(-theta, s.psi.head<6>());
      *r_rate = s.psi.tail(n - 6);
    };

    Twist k1t, k2t, k3t, k4t;
    Eigen::VectorXd k1r, k2r, k3r, k4r, k1p, k2p, k3p, k4p;
    const Eigen::VectorXd zero_r = Eigen::VectorXd::Zero(n - 6);
    const Eigen::VectorXd zero_p = Eigen::VectorXd::Zero(n);
    stage(Twist::Zero(), zero_r, zero_p, t, &k1t, &k1r, &k1p);
    stage(0.5 * dt * k1t, 0.5 * dt * k1r, 0.5 * dt * k1p, t + 0.5 * dt, &k2t, &k2r, &k2p);
    stage(0.5 * dt * k2t, 0.5 * dt * k2r, 0.5 * dt * k2p, t + 0.5 * dt, &k3t, &k3r, &k3p);
    stage(dt * k3t, dt * k3r, dt * k3p, t + dt, &k4t, &k4r, &k4p);

    const Twist theta = (dt / 6.0) * (k1t + 2.0 * k2t + 2.0 * k3t + k4t);
    const Eigen::VectorXd dr = (dt / 6.0) * (k1r + 2.0 * k2r + 2.0 * k3r + k4r);
    const Eigen::VectorXd dpsi = (dt / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
    y = displaced(y, theta, dr);
    y.psi = psi0 + dpsi;
    t = step * dt;
    check_finite_state(y, t);
    if (step % record_every == 0) record(traj, t, y);
  }
  return traj;
}

}  // namespace hybridlink
