#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "../common/test_models.hpp"
#include "hybridlink/dynamics.hpp"
#include "hybridlink/errors.hpp"

namespace hybridlink {
namespace {

using testing::random_model;
using testing::random_state;

double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

/// Pose of a body frame by multiplying transforms one at a time from the root.
Pose naive_pose(const HybridModel& m, const GeneralizedState& s, int body, double arclength) {
  const Body& b = m.bodies[body];
  if (body == 0) return s.base_pose;
  const Pose parent = naive_pose(m, s, b.parent, m.attachment_arclength(body));
  if (!b.is_rod()) {
    const double q = b.joint_coord >= 0 ? s.qR[b.joint_coord] : 0.0;
    return parent * joint_transform(b.link().joint, q);
  }
  PcsRod rod = b.rod().rod;
  rod.set_active_strain(s.qS.segment(b.strain_offset, rod.active_dof()));
  return rod_pose(rod, parent * b.rod().mount, arclength);
}

GeneralizedState moved(const GeneralizedState& s, const Eigen::VectorXd& psi, double h) {
  return displaced(s, h * psi.head<6>(), h * psi.tail(psi.size() - 6));
}

HybridModel single_body(double mass, const Vec3& size, const Vec3& cog) {
  HybridModel m;
  m.add_rigid("body", -1, testing::box_link(mass, size, cog, {}));
  m.finalize();
  return m;
}

/// Lagrangian bias: d/dt(M psi) - [ad(eta0)^T p0; dT/dr] - gravity force.
Eigen::VectorXd lagrangian_bias(const HybridModel& m, const GeneralizedState& s) {
  const int n = m.dof();
  const double h = 1e-6;
  const Eigen::MatrixXd mm = mass_matrix(m, s);
  const Eigen::VectorXd psi = s.psi;
  const Eigen::MatrixXd mdot =
      (mass_matrix(m, moved(s, psi, h)) - mass_matrix(m, moved(s, psi, -h))) / (2 * h);
  Eigen::VectorXd b = mdot * psi;
  const Eigen::VectorXd p = mm * psi;
  b.head<6>() -= ad_se3(psi.head<6>()).transpose() * p.head<6>();
  for (int j = 6; j < n; ++j) {
    Eigen::VectorXd dr = Eigen::VectorXd::Zero(n - 6);
    dr[j - 6] = h;
    const Eigen::MatrixXd dm =
        (mass_matrix(m, displaced(s, Twist::Zero(), dr)) -
         mass_matrix(m, displaced(s, Twist::Zero(), -dr))) / (2 * h);
    b[j] -= 0.5 * psi.dot(dm * psi);
  }
  return b - gravity_force(m, s);
}

TEST(DynamicsTest, FkMatchesNaiveProduct) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const HybridModel m = random_model(rng);
    const GeneralizedState s = random_state(m, rng);
    const Kinematics kin(m, s);
    for (const Marker& mk : m.markers) {
      const Vec3 ref = naive_pose(m, s, mk.at.body, mk.at.arclength).transform(mk.at.local);
      EXPECT_LT((kin.point_position(mk.at) - ref).norm(), 1e-12);
    }
  }
}

TEST(DynamicsTest, FkZeroStateIsComposedOffsets) {
  std::mt19937_64 rng(2);
  const HybridModel m = random_model(rng);
  GeneralizedState s = GeneralizedState::initial(m);
  const Kinematics kin(m, s);
  const Pose thigh = m.bodies[1].link().joint.parent_frame;
  EXPECT_LT(max_abs(kin.body_pose(1).matrix() - thigh.matrix()), 1e-15);
  const Pose slider = thigh * m.bodies[2].link().joint.parent_frame;
  EXPECT_LT(max_abs(kin.body_pose(2).matrix() - slider.matrix()), 1e-15);
}

TEST(DynamicsTest, FkBaseEquivariance) {
  std::mt19937_64 rng(3);
  const HybridModel m = random_model(rng);
  GeneralizedState s = random_state(m, rng);
  const Pose g = testing::random_pose(rng);
  GeneralizedState t = s;
  t.base_pose = g * s.base_pose;
  const Kinematics a(m, s), b(m, t);
  for (const Marker& mk : m.markers) {
    EXPECT_LT((g.transform(a.point_position(mk.at)) - b.point_position(mk.at)).norm(), 1e-12);
  }
}

TEST(DynamicsTest, DimensionMismatch) {
  std::mt19937_64 rng(4);
  const HybridModel m = random_model(rng);
  GeneralizedState s = random_state(m, rng);
  s.qR.resize(1);
  EXPECT_THROW(Kinematics(m, s), Error);
}

TEST(DynamicsTest, PointJacobianMatchesFiniteDifference) {
  std::mt19937_64 rng(5);
  for (const StrainMask& mask : {kAllStrains, kAngularStrains}) {
    for (int trial = 0; trial < 10; ++trial) {
      const HybridModel m = random_model(rng, mask);
      const GeneralizedState s = random_state(m, rng);
      const Kinematics kin(m, s);
      const double h = 1e-6;
      const Kinematics kp(m, moved(s, s.psi, h)), km(m, moved(s, s.psi, -h));
      for (const Marker& mk : m.markers) {
        const Vec3 fd = (kp.point_position(mk.at) - km.point_position(mk.at)) / (2 * h);
        const Vec3 v = kin.point_jacobian(mk.at) * s.psi;
        EXPECT_LT((fd - v).norm(), 1e-6 * (1.0 + v.norm()));
      }
    }
  }
}

TEST(DynamicsTest, PointJacobianBaseColumnsAndSparsity) {
  std::mt19937_64 rng(6);
  const HybridModel m = random_model(rng);
  const GeneralizedState s = random_state(m, rng);
  const Kinematics kin(m, s);
  const BodyPoint p{0, Vec3(0.1, -0.2, 0.3), 0.0};
  const Matrix3X j = kin.point_jacobian(p);
  const Mat3 r = s.base_pose.rotation;
  EXPECT_LT(max_abs(j.leftCols<3>() - (-r * skew(p.local))), 1e-14);
  EXPECT_LT(max_abs(j.middleCols<3>(3) - r), 1e-14);
  EXPECT_TRUE(j.rightCols(m.dof() - 6).isZero(0.0));

  // The slider hangs off the thigh: rod and foot columns must vanish.
  const Matrix3X js = kin.point_jacobian({2, Vec3(0.0, 0.0, 0.1), 0.0});
  EXPECT_TRUE(js.col(m.rigid_column(m.bodies[4].joint_coord)).isZero(0.0));
  EXPECT_TRUE(js.rightCols(m.strain_dof()).isZero(0.0));
  EXPECT_THROW(kin.point_jacobian({17, Vec3::Zero(), 0.0}), Error);
}

TEST(DynamicsTest, RevoluteColumnIsWorldAxis) {
  std::mt19937_64 rng(7);
  const HybridModel m = random_model(rng);
  const GeneralizedState s = random_state(m, rng);
  const Kinematics kin(m, s);
  const Matrix6X j = kin.frame(1).jacobian;
  const Vec3 world_axis = kin.body_pose(1).rotation * j.col(6).head<3>();
  const Vec3 expected = (s.base_pose * m.bodies[1].link().joint.parent_frame).rotation *
                        m.bodies[1].link().joint.axis;
  EXPECT_LT((world_axis - expected).norm(), 1e-10);
}

TEST(DynamicsTest, SingleBodyMassIsSpatialInertia) {
  const HybridModel m = single_body(2.0, Vec3(0.2, 0.3, 0.4), Vec3(0.05, 0.0, -0.02));
  std::mt19937_64 rng(8);
  const GeneralizedState s = random_state(m, rng);
  EXPECT_LT(max_abs(mass_matrix(m, s) - link_inertia_at_frame(m.bodies[0].link())), 1e-14);
}

TEST(DynamicsTest, ShiftedInertiaKeepsMassAndCog) {
  const RigidLink l = testing::box_link(3.0, Vec3(0.2, 0.1, 0.3), Vec3(0.1, -0.2, 0.05), {});
  const Mat6 mf = link_inertia_at_frame(l);
  const Mat3 mass_block = mf.bottomRightCorner<3, 3>();
  EXPECT_NEAR(mass_block.trace() / 3.0, 3.0, 1e-14);
  // Coupling block -m [c x]; parallel axis for the rotational block.
  EXPECT_LT(max_abs(mf.bottomLeftCorner<3, 3>() + 3.0 * skew(l.cog_offset)), 1e-14);
  const Mat3 pa = l.inertia_cog + 3.0 * (l.cog_offset.squaredNorm() * Mat3::Identity() -
                                         l.cog_offset * l.cog_offset.transpose());
  EXPECT_LT(max_abs(mf.topLeftCorner<3, 3>() - pa), 1e-14);

  std::mt19937_64 rng(9);
  const RigidLink c = testing::box_link(1.5, Vec3(0.2, 0.4, 0.1), Vec3::Zero(), {});
  for (int i = 0; i < 100; ++i) {
    const Twist eta = testing::random_twist(rng);
    const double t = 0.5 * eta.dot(link_spatial_inertia(c) * eta);
    const Vec3 w = eta.head<3>(), v = eta.tail<3>();
    EXPECT_NEAR(t, 0.5 * w.dot(c.inertia_cog * w) + 0.5 * 1.5 * v.squaredNorm(), 1e-13);
  }
}

TEST(DynamicsTest, MassMatrixEnergyAndStructure) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 5; ++trial) {
    const HybridModel m = random_model(rng);
    const GeneralizedState s = random_state(m, rng);
    const Eigen::MatrixXd mm = mass_matrix(m, s);
    EXPECT_LT(max_abs(mm - mm.transpose()), 1e-9);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(mm);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);

    // Energy summed from finite-difference body twists of every element frame.
    const double h = 1e-6;
    const Kinematics kp(m, moved(s, s.psi, h)), km(m, moved(s, s.psi, -h)), k0(m, s);
    const auto e0 = mass_elements(k0), ep = mass_elements(kp), em = mass_elements(km);
    double t = 0.0;
    Mat6 composite = Mat6::Zero();
    for (std::size_t k = 0; k < e0.size(); ++k) {
      const Pose mid{e0[k].rotation, e0[k].position};
      const Pose a{em[k].rotation, em[k].position}, b{ep[k].rotation, ep[k].position};
      const Twist eta =
          (log_se3(mid.inverse() * b) - log_se3(mid.inverse() * a)) / (2 * h);
      t += 0.5 * eta.dot(e0[k].inertia * eta);
      const Mat6 x = adjoint((s.base_pose.inverse() * mid).inverse());
      composite += x.transpose() * e0[k].inertia * x;
    }
    const double t_matrix = 0.5 * s.psi.dot(mm * s.psi);
    EXPECT_LT(std::abs(t - t_matrix) / t_matrix, 1e-8);
    EXPECT_LT(max_abs(mm.topLeftCorner<6, 6>() - composite), 1e-8 * (1.0 + max_abs(composite)));
    EXPECT_NEAR(kinetic_energy(m, s), t_matrix, 1e-10 * t_matrix);
  }
}

TEST(DynamicsTest, ZeroMassBodyLeavesMassUnchanged) {
  std::mt19937_64 rng(11);
  HybridModel m = random_model(rng);
  const GeneralizedState s = random_state(m, rng);
  const Eigen::MatrixXd before = mass_matrix(m, s);
  m.add_rigid("ghost", 1, RigidLink{});
  m.finalize();
  EXPECT_LT(max_abs(mass_matrix(m, s) - before), 1e-12);
}

TEST(DynamicsTest, BiasVanishesAtRestWithoutGravity) {
  std::mt19937_64 rng(12);
  HybridModel m = random_model(rng);
  m.gravity.setZero();
  GeneralizedState s = random_state(m, rng);
  s.psi.setZero();
  EXPECT_LT(bias_vector(m, s).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(DynamicsTest, BiasGyroscopicTermOfSpinningBody) {
  HybridModel m = single_body(2.0, Vec3(0.2, 0.3, 0.5), Vec3(0.02, -0.01, 0.03));
  m.gravity.setZero();
  std::mt19937_64 rng(13);
  const GeneralizedState s = random_state(m, rng, 3.0);
  const Mat6 inertia = link_inertia_at_frame(m.bodies[0].link());
  const Twist eta = s.psi;
  const Vec6 expected = -ad_se3(eta).transpose() * inertia * eta;
  EXPECT_LT((bias_vector(m, s) - expected).norm(), 1e-6);
}

TEST(DynamicsTest, GravityIsNegativePotentialGradient) {
  std::mt19937_64 rng(14);
  const HybridModel m = random_model(rng);
  GeneralizedState s = random_state(m, rng);
  s.psi.setZero();
  const Eigen::VectorXd g = gravity_force(m, s);
  const Eigen::VectorXd b = bias_vector(m, s);
  EXPECT_LT((b + g).norm(), 1e-10 * (1.0 + g.norm()));
  const int n = m.dof();
  const double h = 1e-6;
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    e[j] = 1.0;
    const double dv = (gravity_potential(m, moved(s, e, h)) -
                       gravity_potential(m, moved(s, e, -h))) / (2 * h);
    EXPECT_LT(std::abs(g[j] + dv), 1e-6 * (1.0 + std::abs(dv))) << j;
  }
}

TEST(DynamicsTest, BiasMatchesLagrangianForm) {
  std::mt19937_64 rng(15);
  for (const StrainMask& mask : {kAllStrains, kAngularStrains}) {
    const HybridModel m = random_model(rng, mask);
    const GeneralizedState s = random_state(m, rng);
    const Eigen::VectorXd b = bias_vector(m, s);
    const Eigen::VectorXd ref = lagrangian_bias(m, s);
    EXPECT_LT((b - ref).norm(), 1e-5 * (1.0 + ref.norm()));
  }
}

TEST(DynamicsTest, FreeBodyFallsWithGravity) {
  const HybridModel m = single_body(2.0, Vec3(0.2, 0.3, 0.5), Vec3::Zero());
  std::mt19937_64 rng(16);
  GeneralizedState s = random_state(m, rng);
  s.psi.setZero();
  const Eigen::VectorXd a = forward_dynamics(m, s, {});
  EXPECT_LT(a.head<3>().norm(), 1e-12);
  EXPECT_LT((a.tail<3>() - s.base_pose.rotation.transpose() * m.gravity).norm(), 1e-12);
}

TEST(DynamicsTest, ForwardDynamicsResidual) {
  std::mt19937_64 rng(17);
  const HybridModel m = random_model(rng);
  const GeneralizedState s = random_state(m, rng);
  Actuation u;
  u.tauR = testing::random_vector(rng, m.rigid_dof(), 5.0);
  u.tauS = testing::random_vector(rng, m.strain_dof(), 0.1);
  for (std::size_t i = 0; i < m.contacts.size(); ++i) {
    u.contact_forces.push_back(testing::random_vector(rng, 3, 10.0));
  }
  const Eigen::VectorXd a = forward_dynamics(m, s, u);
  const Kinematics kin(m, s);
  Eigen::VectorXd tau = contact_generalized_force(kin, u.contact_forces);
  tau.segment(6, m.rigid_dof()) += u.tauR;
  tau.tail(m.strain_dof()) += u.tauS + passive_strain_force(m, s);
  const Eigen::VectorXd r = mass_matrix(m, s) * a + bias_vector(m, s) - tau;
  EXPECT_LT(r.norm(), 1e-9 * (1.0 + tau.norm()));
}

TEST(DynamicsTest, SingularMassIsReported) {
  HybridModel m;
  m.add_rigid("massless", -1, RigidLink{});
  m.finalize();
  const GeneralizedState s = GeneralizedState::initial(m);
  try {
    forward_dynamics(m, s, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingularMass);
  }
}

TEST(DynamicsTest, HangingRodEquilibrium) {
  // Base held by three point forces; rod strains found by Newton iteration.
  std::mt19937_64 rng(18);
  HybridModel m;
  m.add_rigid("base", -1, testing::box_link(2.0, Vec3(0.2, 0.2, 0.2), Vec3::Zero(), {}));
  RodLink rl;
  rl.mount = Pose{axis_angle(Vec3::UnitY(), 0.3), Vec3(0.1, 0.0, 0.0)};
  rl.rod = testing::random_rod(rng, 3, kAngularStrains);
  m.add_rod("rod", 0, rl);
  for (const Vec3& p : {Vec3(0.1, 0.1, 0.0), Vec3(-0.1, 0.1, 0.0), Vec3(0.0, -0.1, 0.1)}) {
    m.contacts.push_back({{0, p, 0.0}, 1.0, "c" + std::to_string(m.contacts.size()), "base"});
  }
  m.finalize();
  GeneralizedState s = GeneralizedState::initial(m);
  const int ns = m.strain_dof();
  auto strain_residual = [&](const GeneralizedState& st) {
    return Eigen::VectorXd(passive_strain_force(m, st) + gravity_force(m, st).tail(ns));
  };
  for (int it = 0; it < 20; ++it) {
    const Eigen::VectorXd r = strain_residual(s);
    if (r.norm() < 1e-12) break;
    Eigen::MatrixXd jac(ns, ns);
    for (int j = 0; j < ns; ++j) {
      GeneralizedState p = s, q = s;
      p.qS[j] += 1e-7;
      q.qS[j] -= 1e-7;
      jac.col(j) = (strain_residual(p) - strain_residual(q)) / 2e-7;
    }
    s.qS -= jac.lu().solve(r);
  }
  const Kinematics kin(m, s);
  Eigen::MatrixXd basis(6, 9);
  for (int c = 0; c < 3; ++c) {
    basis.middleCols<3>(3 * c) = kin.point_jacobian(m.contacts[c].at).transpose().topRows<6>();
  }
  const Eigen::VectorXd f = basis.completeOrthogonalDecomposition().solve(
      Eigen::VectorXd(-gravity_force(m, s).head<6>()));
  Actuation u;
  for (int c = 0; c < 3; ++c) u.contact_forces.push_back(f.segment<3>(3 * c));
  EXPECT_LT(forward_dynamics(m, s, u).norm(), 1e-6);
}

TEST(DynamicsTest, IntegrateZeroDynamicsIsConstant) {
  std::mt19937_64 rng(19);
  HybridModel m = random_model(rng);
  m.gravity.setZero();
  GeneralizedState s = random_state(m, rng);
  s.psi.setZero();
  // Rod at its neutral strain so the passive force vanishes.
  s.qS = GeneralizedState::initial(m).qS;
  for (Body& b : m.bodies) {
    if (b.is_rod()) {
      for (auto& seg : b.rod().rod.segments) seg.neutral_strain = seg.strain;
    }
  }
  const Trajectory t = integrate(m, s, nullptr, 1e-3, 20);
  ASSERT_EQ(t.samples.size(), 21u);
  const GeneralizedState& last = t.samples.back().state;
  EXPECT_LT(max_abs(last.base_pose.matrix() - s.base_pose.matrix()), 1e-14);
  EXPECT_LT((last.coordinates() - s.coordinates()).norm(), 1e-14);
  EXPECT_LT(last.psi.norm(), 1e-12);
}

TEST(DynamicsTest, FreeSpinAboutPrincipalAxis) {
  HybridModel m = single_body(3.0, Vec3(0.2, 0.4, 0.6), Vec3::Zero());
  m.gravity.setZero();
  GeneralizedState s = GeneralizedState::initial(m);
  s.psi << 0.0, 4.0, 0.0, 0.2, 0.0, 0.0;
  const Trajectory t = integrate(m, s, nullptr, 1e-4, 10000, 1000);
  for (const auto& sample : t.samples) {
    EXPECT_LT((sample.state.psi.head<3>() - s.psi.head<3>()).norm(), 1e-8);
  }
  // The frame sits at the CoG, so it moves in a straight line in the world.
  const Pose end = t.samples.back().state.base_pose;
  EXPECT_LT(max_abs(end.rotation - axis_angle(Vec3::UnitY(), 4.0)), 1e-8);
  EXPECT_LT((end.position - Vec3(0.2, 0.0, 0.0)).norm(), 1e-8);
}

TEST(DynamicsTest, DampedRodLosesEnergy) {
  std::mt19937_64 rng(20);
  HybridModel m;
  m.gravity.setZero();
  m.add_rigid("base", -1, testing::box_link(50.0, Vec3(0.3, 0.3, 0.3), Vec3::Zero(), {}));
  RodLink rl;
  rl.rod = testing::random_rod(rng, 2, kAngularStrains);
  for (auto& seg : rl.rod.segments) seg.damping = 1e-5 * seg.stiffness;
  m.add_rod("rod", 0, rl);
  m.finalize();
  GeneralizedState s = GeneralizedState::initial(m);
  for (int k = 0; k < s.qS.size(); ++k) s.qS[k] += 0.2;
  const Trajectory t = integrate(m, s, nullptr, 2e-5, 2000, 100);
  double prev = 1e300;
  for (const auto& sample : t.samples) {
    const double e = kinetic_energy(m, sample.state) + elastic_potential(m, sample.state);
    EXPECT_LE(e, prev * (1.0 + 1e-9));
    prev = e;
  }
}

TEST(DynamicsTest, BlowupIsReported) {
  HybridModel m = single_body(1.0, Vec3(0.1, 0.1, 0.1), Vec3::Zero());
  m.gravity = Vec3(0, 0, -1e12);
  const GeneralizedState s = GeneralizedState::initial(m);
  try {
    integrate(m, s, nullptr, 1.0, 10);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NumericalBlowup);
  }
}

}  // namespace
}  // namespace hybridlink
