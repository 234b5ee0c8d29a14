#include "hybridlink/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include <Eigen/Cholesky>

#include "hybridlink/conic_qp.hpp"
#include "hybridlink/dynamics.hpp"
#include "hybridlink/errors.hpp"

namespace hybridlink {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kLegTilt = 0.0555;  // inward tilt that puts each foot 3 cm off the midline
constexpr double kFootHalfWidth = 0.05;
constexpr double kConeMargin = 0.5;   // prescribed forces stay inside mu/2
constexpr double kNormalFloor = 0.05;  // fraction of an even share every grounded point carries
constexpr double kWrenchWeight = 1e6;

RigidLink box(double mass, const Vec3& size, const Vec3& cog, const Joint& joint) {
  RigidLink l;
  l.mass = mass;
  const Vec3 s2 = size.cwiseProduct(size);
  l.inertia_cog = (mass / 12.0) * Vec3(s2.y() + s2.z(), s2.x() + s2.z(), s2.x() + s2.y()).asDiagonal();
  l.cog_offset = cog;
  l.joint = joint;
  return l;
}

Joint hinge(const Pose& frame) { return {JointKind::Revolute, Vec3::UnitY(), frame}; }

Mat3 rot_x(double a) { return axis_angle(Vec3::UnitX(), a); }

BeamSection blade_section() {
  // Effective section of a composite blade, softened so its fastest mode stays
  // below the RK4 stability limit at dt = 1e-4.
  BeamSection s;
  s.youngs_modulus = 7e9;
  s.shear_modulus = 3e8;
  s.area = 6e-4;
  s.second_moment_y = 1e-8;
  s.second_moment_z = 1.2e-8;
  s.torsion_constant = 3e-8;
  s.density = 1600.0;
  s.damping_ratio = 1e-6;
  return s;
}

PcsRod blade_rod() {
  // Straight shank, a quarter turn forward, then a flat forefoot.
  const double lengths[6] = {0.06, 0.06, 0.06, 0.06, 0.06, 0.14};
  const double kappa = -0.5 * kPi / 0.12;
  PcsRod rod;
  for (int i = 0; i < 6; ++i) {
    const double k = (i == 3 || i == 4) ? kappa : 0.0;
    const Twist neutral = make_twist(Vec3(0.0, k, 0.0), Vec3::UnitX());
    PcsSegment seg = uniform_beam_segment(lengths[i], blade_section(), neutral, kAngularStrains);
    seg.strain = neutral;
    rod.segments.push_back(seg);
  }
  return rod;
}

MusclePath muscle(const std::string& name, std::vector<BodyPoint> path, double f_max) {
  MusclePath m;
  m.name = name;
  m.via_points = std::move(path);
  m.params.f_max = f_max;
  return m;
}

double mean_contact_z(const HybridModel& m, const Kinematics& kin, const std::string& group) {
  double z = 0.0;
  int n = 0;
  for (const ContactPoint& c : m.contacts) {
    if (c.group != group) continue;
    z += kin.point_position(c.at).z();
    ++n;
  }
  return z / n;
}

// Smooth bump on [t0, t0 + T]: sin^4 keeps position, rate and acceleration
// continuous at both ends.
struct Bump {
  double t0 = 0.0;
  double period = 1.0;

  bool active(double t) const { return t > t0 && t < t0 + period; }
  void eval(double t, double* b, double* db, double* ddb) const {
    *b = *db = *ddb = 0.0;
    if (!active(t)) return;
    const double w = kPi / period;
    const double s = std::sin(w * (t - t0)), c = std::cos(w * (t - t0));
    *b = s * s * s * s;
    *db = 4.0 * w * s * s * s * c;
    *ddb = 4.0 * w * w * s * s * (3.0 * c * c - s * s);
  }
};

struct GaitScript {
  int l_hip, l_knee, l_ankle, r_hip, r_knee;
  int blade_offset, blade_dof;
  Bump right_swing{0.3, 1.0};
  Bump left_swing{1.7, 1.0};
  double hip_amplitude = 0.45;
  double blade_amplitude = 0.02;
  double blade_frequency = 5.0;

  // Fills qR, qS, psi and psi_dot (base held still) from the standing pose.
  void apply(double t, const HybridModel& m, GeneralizedState& s) const {
    double b, db, ddb;
    auto set = [&](int coord, double scale) {
      s.qR[coord] += scale * b;
      s.psi[m.rigid_column(coord)] = scale * db;
      s.psi_dot[m.rigid_column(coord)] = scale * ddb;
    };
    right_swing.eval(t, &b, &db, &ddb);
    set(r_hip, -hip_amplitude);
    set(r_knee, hip_amplitude);
    // The blade rings while it swings: amplitude b^2 sin(w (t - t0)).
    const double w = 2.0 * kPi * blade_frequency, u = t - right_swing.t0;
    const double a = b * b, da = 2.0 * b * db, dda = 2.0 * (db * db + b * ddb);
    const double sn = std::sin(w * u), cs = std::cos(w * u);
    const double v = a * sn, dv = da * sn + a * w * cs, ddv = dda * sn + 2.0 * da * w * cs - a * w * w * sn;
    for (int k = 0; k < blade_dof; ++k) {
      const double shape = blade_amplitude * ((k % 3 == 1) ? 1.0 : 0.3);
      s.qS[blade_offset + k] += shape * v;
      s.psi[m.strain_column(blade_offset + k)] = shape * dv;
      s.psi_dot[m.strain_column(blade_offset + k)] = shape * ddv;
    }
    left_swing.eval(t, &b, &db, &ddb);
    set(l_hip, -hip_amplitude);
    set(l_knee, hip_amplitude);
    set(l_ankle, 0.0);
  }
};

struct FrameTruth {
  std::vector<Vec3> forces;
  Eigen::VectorXd tauR, tauS, tauS_active, psi_dot;
};

// Contact forces producing the base wrench the motion requires, then joint
// and rod forces from the remaining rows. The split over the grounded points
// stays close to an even share of the load, inside a narrowed cone and above a
// small normal floor; a least-norm correction makes the base rows exact.
FrameTruth prescribe_frame(const HybridModel& m, const GeneralizedState& s,
                           const std::vector<int>& grounded, double t) {
  const Kinematics kin(m, s);
  const MassAndBias mb = mass_and_bias(kin, s);
  const Eigen::VectorXd h = mb.mass * s.psi_dot + mb.bias;
  const int nc = static_cast<int>(grounded.size());

  FrameTruth out;
  out.forces.assign(m.contacts.size(), Vec3::Zero());
  std::vector<Matrix3X> jac(nc);
  Eigen::MatrixXd a(6, 3 * nc);
  for (int i = 0; i < nc; ++i) {
    jac[i] = kin.point_jacobian(m.contacts[grounded[i]].at);
    a.middleCols<3>(3 * i) = jac[i].leftCols<6>().transpose();
  }
  Eigen::VectorXd f = Eigen::VectorXd::Zero(3 * nc);
  if (nc > 0) {
    // Required vertical load from the least-norm split.
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(a * a.transpose());
    const Eigen::VectorXd f_ls = a.transpose() * ldlt.solve(h.head<6>());
    double load = 0.0;
    for (int i = 0; i < nc; ++i) load += f_ls[3 * i + 2];
    const double floor = kNormalFloor * std::max(load, 0.0) / nc;
    // Shifted variables g = f - floor e_z.
    Eigen::VectorXd shift = Eigen::VectorXd::Zero(3 * nc), target = Eigen::VectorXd::Zero(3 * nc);
    for (int i = 0; i < nc; ++i) {
      shift[3 * i + 2] = floor;
      target[3 * i + 2] = load / nc - floor;
    }
    const Eigen::VectorXd r = h.head<6>() - a * shift;
    QpProblem p;
    p.hessian = Eigen::MatrixXd::Identity(3 * nc, 3 * nc) + kWrenchWeight * a.transpose() * a;
    p.linear = -target - kWrenchWeight * a.transpose() * r;
    for (int i = 0; i < nc; ++i) {
      p.cones.push_back({{3 * i, 3 * i + 1, 3 * i + 2},
                         0.9 * kConeMargin * m.contacts[grounded[i]].mu});
    }
    QpSettings qs;
    qs.tol = 1e-10;
    const QpResult res = qp_solve(p, qs);
    f = res.x + shift;
    f += a.transpose() * ldlt.solve(h.head<6>() - a * f);
  }
  Eigen::VectorXd tau = h;
  for (int i = 0; i < nc; ++i) {
    const Vec3 fi = f.segment<3>(3 * i);
    const double mu = m.contacts[grounded[i]].mu;
    if (!(fi.z() > 0.0) || fi.head<2>().norm() > kConeMargin * mu * fi.z()) {
      fail(ErrorCode::ValidationError,
           "prescribed contact force leaves the friction cone at t = " + std::to_string(t) +
               " on contact '" + m.contacts[grounded[i]].label + "'");
    }
    out.forces[grounded[i]] = fi;
    tau.noalias() -= jac[i].transpose() * fi;
  }
  if (tau.head<6>().norm() > 1e-8 * (1.0 + h.head<6>().norm())) {
    fail(ErrorCode::ValidationError, "grounded contacts cannot carry the base wrench at t = " +
                                         std::to_string(t));
  }
  out.tauR = tau.segment(6, m.rigid_dof());
  out.tauS = tau.tail(m.strain_dof());
  out.tauS_active = out.tauS - passive_strain_force(m, s);
  out.psi_dot = forward_dynamics(m, s, {out.tauR, out.tauS_active, out.forces});
  return out;
}

MarkerFrame marker_frame(const HybridModel& m, const GeneralizedState& s, double t) {
  const Kinematics kin(m, s);
  MarkerFrame f;
  f.time = t;
  for (const Marker& mk : m.markers) f.positions.push_back(kin.point_position(mk.at));
  return f;
}

int frame_count(double duration, double rate) {
  if (!(rate > 0.0)) fail(ErrorCode::InvalidArgument, "sample rate must be > 0");
  if (!(duration >= 0.0)) fail(ErrorCode::InvalidArgument, "duration must be >= 0");
  return static_cast<int>(std::llround(duration * rate)) + 1;
}

}  // namespace

HybridModel reference_model() {
  HybridModel m;
  const int pelvis = m.add_rigid("pelvis", -1, box(40.0, Vec3(0.25, 0.35, 0.6), Vec3(0.0, 0.0, 0.25), {}));

  const int l_thigh = m.add_rigid(
      "l_thigh", pelvis,
      box(7.0, Vec3(0.12, 0.12, 0.42), Vec3(0.0, 0.0, -0.18),
          hinge({rot_x(-kLegTilt), Vec3(0.0, 0.08, -0.05)})));
  const int l_shank = m.add_rigid(
      "l_shank", l_thigh,
      box(3.5, Vec3(0.1, 0.1, 0.43), Vec3(0.0, 0.0, -0.19), hinge(Pose::translation(Vec3(0, 0, -0.42)))));
  const int l_foot = m.add_rigid(
      "l_foot", l_shank,
      box(1.0, Vec3(0.22, 0.09, 0.06), Vec3(0.05, 0.0, -0.05), hinge({rot_x(kLegTilt), Vec3(0, 0, -0.43)})));

  const int r_thigh = m.add_rigid(
      "r_thigh", pelvis,
      box(7.0, Vec3(0.12, 0.12, 0.42), Vec3(0.0, 0.0, -0.18),
          hinge({rot_x(kLegTilt), Vec3(0.0, -0.08, -0.05)})));
  const int r_socket = m.add_rigid(
      "r_socket", r_thigh,
      box(1.5, Vec3(0.1, 0.1, 0.25), Vec3(0.0, 0.0, -0.1), hinge(Pose::translation(Vec3(0, 0, -0.42)))));
  // Rod x runs down, rod z points forward.
  Mat3 down;
  down << 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0;
  RodLink blade{{rot_x(-kLegTilt) * down, Vec3(-0.15, 0.0, -0.25)}, blade_rod()};
  const int rod = m.add_rod("blade", r_socket, blade);

  for (double x : {-0.06, 0.05, 0.16}) {
    for (double y : {kFootHalfWidth, -kFootHalfWidth}) {
      const std::string side = y > 0.0 ? "lat" : "med";
      const std::string where = x < 0.0 ? "heel" : (x < 0.1 ? "mid" : "toe");
      m.contacts.push_back({{l_foot, Vec3(x, y, -0.08), 0.0}, 0.8, "l_" + where + "_" + side, "left_foot"});
    }
  }
  const double s_foot = blade.rod.boundary(5);
  const double s_tip = blade.rod.total_length();
  for (double s : {s_foot + 0.005, s_tip}) {
    for (double y : {-kFootHalfWidth, kFootHalfWidth}) {
      const std::string side = y < 0.0 ? "lat" : "med";
      m.contacts.push_back({{rod, Vec3(0.0, y, -0.006), s}, 0.8,
                            std::string(s < s_tip ? "p_heel_" : "p_toe_") + side, "prosthesis"});
    }
  }

  auto mk = [&](const std::string& label, int body, const Vec3& p, double s = 0.0) {
    m.markers.push_back({{body, p, s}, label});
  };
  mk("LASI", pelvis, Vec3(0.1, 0.12, 0.05));
  mk("RASI", pelvis, Vec3(0.1, -0.12, 0.05));
  mk("LPSI", pelvis, Vec3(-0.1, 0.06, 0.08));
  mk("RPSI", pelvis, Vec3(-0.1, -0.06, 0.08));
  mk("LTHI", l_thigh, Vec3(0.0, 0.07, -0.2));
  mk("LTHA", l_thigh, Vec3(0.07, 0.0, -0.15));
  mk("LKNE", l_thigh, Vec3(0.0, 0.06, -0.42));
  mk("LTIB", l_shank, Vec3(0.0, 0.06, -0.2));
  mk("LTIA", l_shank, Vec3(0.06, 0.0, -0.25));
  mk("LANK", l_shank, Vec3(0.0, 0.05, -0.43));
  mk("LHEE", l_foot, Vec3(-0.07, 0.0, -0.04));
  mk("LTOE", l_foot, Vec3(0.17, 0.0, -0.05));
  mk("LMT5", l_foot, Vec3(0.1, 0.05, -0.06));
  mk("RTHI", r_thigh, Vec3(0.0, -0.07, -0.2));
  mk("RTHA", r_thigh, Vec3(0.07, 0.0, -0.15));
  mk("RKNE", r_thigh, Vec3(0.0, -0.06, -0.42));
  mk("RSK1", r_socket, Vec3(0.0, -0.06, -0.08));
  mk("RSK2", r_socket, Vec3(0.06, 0.0, -0.15));
  mk("RSK3", r_socket, Vec3(0.0, -0.06, -0.22));
  for (int i = 0; i <= 6; ++i) {
    const double s = i < 6 ? blade.rod.boundary(i) + 0.5 * blade.rod.segments[i].length : s_tip;
    mk("BL" + std::to_string(i) + "M", rod, Vec3(0.0, 0.03, 0.01), s);
    mk("BL" + std::to_string(i) + "L", rod, Vec3(0.0, -0.03, 0.01), s);
  }

  m.muscles = {
      muscle("l_iliopsoas", {{pelvis, Vec3(0.06, 0.08, 0.02)}, {l_thigh, Vec3(0.03, 0.0, -0.08)}}, 1500),
      muscle("l_gluteus", {{pelvis, Vec3(-0.1, 0.08, 0.03)}, {l_thigh, Vec3(-0.04, 0.0, -0.1)}}, 2000),
      muscle("l_quadriceps",
             {{l_thigh, Vec3(0.05, 0.0, -0.1)}, {l_thigh, Vec3(0.06, 0.0, -0.4)},
              {l_shank, Vec3(0.04, 0.0, -0.06)}},
             3000),
      muscle("l_hamstrings", {{pelvis, Vec3(-0.08, 0.08, -0.06)}, {l_shank, Vec3(-0.04, 0.0, -0.06)}}, 2000),
      muscle("l_soleus", {{l_shank, Vec3(-0.04, 0.0, -0.1)}, {l_foot, Vec3(-0.07, 0.0, -0.02)}}, 2500),
      muscle("l_tibialis", {{l_shank, Vec3(0.04, 0.0, -0.1)}, {l_foot, Vec3(0.1, 0.0, -0.03)}}, 800),
      muscle("r_iliopsoas", {{pelvis, Vec3(0.06, -0.08, 0.02)}, {r_thigh, Vec3(0.03, 0.0, -0.08)}}, 1500),
      muscle("r_gluteus", {{pelvis, Vec3(-0.1, -0.08, 0.03)}, {r_thigh, Vec3(-0.04, 0.0, -0.1)}}, 2000),
      // Myodesis: the residual quadriceps and hamstrings end on the socket.
      muscle("r_quadriceps",
             {{r_thigh, Vec3(0.05, 0.0, -0.1)}, {r_thigh, Vec3(0.06, 0.0, -0.4)},
              {r_socket, Vec3(0.04, 0.0, -0.05)}},
             2000),
      muscle("r_hamstrings", {{pelvis, Vec3(-0.08, -0.08, -0.06)}, {r_socket, Vec3(-0.04, 0.0, -0.06)}}, 1500),
  };
  m.finalize();

  // Level the blade forefoot with the left sole, then make l_opt the standing length.
  for (int it = 0; it < 3; ++it) {
    const Kinematics kin(m, GeneralizedState::initial(m));
    const double dz = mean_contact_z(m, kin, "prosthesis") - mean_contact_z(m, kin, "left_foot");
    m.bodies[rod].rod().mount.position.z() -= dz;
  }
  const GeneralizedState standing = reference_standing_pose(m);
  const Kinematics kin(m, standing);
  for (MusclePath& mp : m.muscles) {
    double len = 0.0;
    for (std::size_t k = 1; k < mp.via_points.size(); ++k) {
      len += (kin.point_position(mp.via_points[k]) - kin.point_position(mp.via_points[k - 1])).norm();
    }
    mp.params.l_opt = len;
  }
  m.finalize();
  return m;
}

GeneralizedState reference_standing_pose(const HybridModel& model) {
  GeneralizedState s = GeneralizedState::initial(model);
  const Kinematics kin(model, s);
  if (model.contacts.empty()) return s;
  double z_min = kin.point_position(model.contacts[0].at).z();
  for (const ContactPoint& c : model.contacts) z_min = std::min(z_min, kin.point_position(c.at).z());
  s.base_pose.position.z() = -z_min;
  return s;
}

Scenario parse_scenario(std::string_view name) {
  if (name == "static") return Scenario::Static;
  if (name == "pendulum-drop") return Scenario::PendulumDrop;
  if (name == "scripted-gait") return Scenario::ScriptedGait;
  fail(ErrorCode::InvalidArgument,
       "unknown scenario '" + std::string(name) + "' (static, pendulum-drop, scripted-gait)");
}

const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::Static: return "static";
    case Scenario::PendulumDrop: return "pendulum-drop";
    case Scenario::ScriptedGait: return "scripted-gait";
  }
  return "?";
}

Dataset run_synthetic(const HybridModel& model, Scenario scenario, const SyntheticOptions& options) {
  if (!(options.noise_sigma >= 0.0)) fail(ErrorCode::InvalidArgument, "noise sigma must be >= 0");
  const double rate = options.sample_rate;
  const double default_duration =
      scenario == Scenario::Static ? 1.0 : (scenario == Scenario::PendulumDrop ? 0.3 : 3.0);
  const double duration = options.duration < 0.0 ? default_duration : options.duration;
  const int frames = frame_count(duration, rate);
  const int nc = static_cast<int>(model.contacts.size());

  Dataset d;
  const GeneralizedState standing = reference_standing_pose(model);

  if (scenario == Scenario::PendulumDrop) {
    if (!(options.integration_dt > 0.0)) fail(ErrorCode::InvalidArgument, "integration dt must be > 0");
    const int every = static_cast<int>(std::llround(1.0 / (rate * options.integration_dt)));
    if (every < 1 || std::abs(every * options.integration_dt * rate - 1.0) > 1e-9) {
      fail(ErrorCode::InvalidArgument, "sample period must be a multiple of the integration dt");
    }
    GeneralizedState s0 = standing;
    s0.base_pose.position.z() += 1.0;
    s0.qR[model.bodies[model.body_index("l_thigh")].joint_coord] = -0.4;
    s0.qR[model.bodies[model.body_index("r_thigh")].joint_coord] = 0.3;
    s0.psi[model.rigid_column(model.bodies[model.body_index("l_shank")].joint_coord)] = 2.0;
    s0.psi[model.rigid_column(model.bodies[model.body_index("r_socket")].joint_coord)] = -2.0;
    const Trajectory traj = integrate(model, s0, {}, options.integration_dt, (frames - 1) * every, every);
    for (const TrajectorySample& ts : traj.samples) {
      d.times.push_back(ts.time);
      d.states.push_back(ts.state);
      d.forces.emplace_back(nc, Vec3::Zero());
      d.grounded.emplace_back(nc, false);
      d.tauR.push_back(Eigen::VectorXd::Zero(model.rigid_dof()));
      d.tauS_active.push_back(Eigen::VectorXd::Zero(model.strain_dof()));
      d.tauS.push_back(passive_strain_force(model, ts.state));
    }
  } else {
    GaitScript script;
    script.l_hip = model.bodies[model.body_index("l_thigh")].joint_coord;
    script.l_knee = model.bodies[model.body_index("l_shank")].joint_coord;
    script.l_ankle = model.bodies[model.body_index("l_foot")].joint_coord;
    script.r_hip = model.bodies[model.body_index("r_thigh")].joint_coord;
    script.r_knee = model.bodies[model.body_index("r_socket")].joint_coord;
    const Body& blade = model.bodies[model.body_index("blade")];
    script.blade_offset = blade.strain_offset;
    script.blade_dof = blade.rod().rod.active_dof();
    std::vector<std::string> group_of(nc);
    for (int c = 0; c < nc; ++c) group_of[c] = model.contacts[c].group;

    for (int k = 0; k < frames; ++k) {
      const double t = k / rate;
      GeneralizedState s = standing;
      s.psi_dot = Eigen::VectorXd::Zero(model.dof());
      std::vector<bool> grounded(nc, true);
      if (scenario == Scenario::ScriptedGait) {
        script.apply(t, model, s);
        for (int c = 0; c < nc; ++c) {
          if ((group_of[c] == "prosthesis" && script.right_swing.active(t)) ||
              (group_of[c] == "left_foot" && script.left_swing.active(t))) {
            grounded[c] = false;
          }
        }
      }
      std::vector<int> active;
      for (int c = 0; c < nc; ++c) {
        if (grounded[c]) active.push_back(c);
      }
      FrameTruth truth = prescribe_frame(model, s, active, t);
      s.psi_dot = truth.psi_dot;
      d.times.push_back(t);
      d.states.push_back(std::move(s));
      d.forces.push_back(std::move(truth.forces));
      d.grounded.push_back(std::move(grounded));
      d.tauR.push_back(std::move(truth.tauR));
      d.tauS.push_back(std::move(truth.tauS));
      d.tauS_active.push_back(std::move(truth.tauS_active));
    }
  }

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t k = 0; k < d.states.size(); ++k) {
    MarkerFrame clean = marker_frame(model, d.states[k], d.times[k]);
    MarkerFrame noisy = clean;
    if (options.noise_sigma > 0.0) {
      for (Vec3& p : noisy.positions) {
        for (int a = 0; a < 3; ++a) p[a] += options.noise_sigma * noise(rng);
      }
    }
    d.clean_markers.push_back(std::move(clean));
    d.markers.push_back(std::move(noisy));
  }
  return d;
}

}  // namespace hybridlink
