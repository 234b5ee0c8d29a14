#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "../common/test_models.hpp"
#include "hybridlink/errors.hpp"
#include "hybridlink/muscle.hpp"

namespace hybridlink {
namespace {

using testing::box_link;
using testing::random_model;
using testing::random_state;
using testing::random_vector;
using testing::revolute;
using testing::uniform;

// Muscles spanning base->thigh, base->slider, thigh->foot (through the rod)
// and one lying on a single body.
HybridModel muscled_model(std::mt19937_64& rng) {
  HybridModel m = random_model(rng, kAngularStrains, 2);
  const double len = m.bodies[3].rod().rod.total_length();
  auto path = [&](std::string name, std::vector<BodyPoint> pts) {
    MusclePath p;
    p.name = std::move(name);
    p.via_points = std::move(pts);
    p.params.l_opt = 0.3;
    p.params.f_max = uniform(rng, 200.0, 800.0);
    m.muscles.push_back(p);
  };
  path("hip", {{0, Vec3(0.1, 0.05, 0.0), 0}, {1, Vec3(0.03, 0.0, -0.2), 0}});
  path("knee", {{0, Vec3(-0.1, 0.1, 0.05), 0}, {1, Vec3(0.04, 0.02, -0.3), 0},
                {2, Vec3(0.02, 0.0, -0.05), 0}});
  path("ankle", {{1, Vec3(0.0, -0.05, -0.1), 0}, {3, Vec3(0.0, 0.02, 0.0), 0.5 * len},
                 {4, Vec3(0.05, 0.0, 0.01), 0}});
  path("local", {{2, Vec3(0.01, 0.0, 0.0), 0}, {2, Vec3(0.0, 0.02, -0.08), 0}});
  m.finalize();
  return m;
}

TEST(MuscleTest, SingleBodyPathHasConstantLength) {
  std::mt19937_64 rng(1);
  const HybridModel m = muscled_model(rng);
  const double l0 = muscle_length(m, random_state(m, rng), m.muscles[3]);
  for (int k = 0; k < 20; ++k) {
    EXPECT_NEAR(muscle_length(m, random_state(m, rng), m.muscles[3]), l0, 1e-12);
  }
  const Eigen::MatrixXd j = muscle_jacobian(m, random_state(m, rng), m.muscles);
  EXPECT_LT(j.row(3).norm(), 1e-12);
}

TEST(MuscleTest, StraightPathIsTheSumOfSegments) {
  HybridModel m;
  m.add_rigid("base", -1, box_link(1.0, Vec3::Ones(), Vec3::Zero(), {}));
  m.add_rigid("arm", 0, box_link(1.0, Vec3::Ones(), Vec3::Zero(),
                                 revolute(Vec3::UnitZ(), Pose::translation(Vec3(1, 0, 0)))));
  m.finalize();
  MusclePath p;
  p.via_points = {{0, Vec3(0, 0, 0), 0}, {0, Vec3(0.5, 0, 0), 0}, {1, Vec3(0.25, 0, 0), 0}};
  const GeneralizedState s = GeneralizedState::initial(m);
  EXPECT_NEAR(muscle_length(m, s, p), 1.25, 1e-15);
}

TEST(MuscleTest, LengthMatchesNaiveRecomputation) {
  std::mt19937_64 rng(2);
  const HybridModel m = muscled_model(rng);
  for (int k = 0; k < 10; ++k) {
    const GeneralizedState s = random_state(m, rng);
    const Kinematics kin = fk_all(m, s);
    for (const MusclePath& mp : m.muscles) {
      double naive = 0.0;
      for (std::size_t i = 1; i < mp.via_points.size(); ++i) {
        auto world = [&](const BodyPoint& p) {
          const Pose f = kin.frame_pose(p.body, p.arclength);
          return Vec3(f.rotation * p.local + f.position);
        };
        naive += (world(mp.via_points[i]) - world(mp.via_points[i - 1])).norm();
      }
      EXPECT_NEAR(muscle_length(kin, mp), naive, 1e-12);
    }
  }
}

TEST(MuscleTest, PlanarFlexorMomentArm) {
  HybridModel m;
  m.add_rigid("upper", -1, box_link(2.0, Vec3(0.3, 0.05, 0.05), Vec3(-0.15, 0, 0), {}));
  m.add_rigid("fore", 0, box_link(1.0, Vec3(0.3, 0.05, 0.05), Vec3(0.15, 0, 0),
                                  revolute(Vec3::UnitZ(), Pose{})));
  m.finalize();
  MusclePath flexor;
  const Vec3 origin(-0.25, 0.04, 0.0);
  const double b = 0.05;
  flexor.via_points = {{0, origin, 0}, {1, Vec3(b, 0, 0), 0}};
  for (double theta : {0.1, 0.5, 1.0, 1.6, 2.2}) {
    GeneralizedState s = GeneralizedState::initial(m);
    s.qR[0] = theta;
    const Vec3 ins(b * std::cos(theta), b * std::sin(theta), 0.0);
    const Vec3 u = (origin - ins).normalized();
    const double arm = ins.x() * u.y() - ins.y() * u.x();
    const Eigen::MatrixXd j = muscle_jacobian(m, s, {flexor});
    EXPECT_NEAR(-j(0, m.rigid_column(0)), arm, 1e-8) << theta;
  }
}

TEST(MuscleTest, JacobianMatchesLengthRate) {
  std::mt19937_64 rng(3);
  const HybridModel m = muscled_model(rng);
  const double h = 1e-6;
  for (int k = 0; k < 10; ++k) {
    const GeneralizedState s = random_state(m, rng);
    const Eigen::VectorXd rate = muscle_jacobian(m, s, m.muscles) * s.psi;
    const GeneralizedState sp = displaced(s, h * s.psi.head<6>(), h * s.psi.tail(m.dof() - 6));
    const GeneralizedState sm = displaced(s, -h * s.psi.head<6>(), -h * s.psi.tail(m.dof() - 6));
    for (std::size_t i = 0; i < m.muscles.size(); ++i) {
      const double fd =
          (muscle_length(m, sp, m.muscles[i]) - muscle_length(m, sm, m.muscles[i])) / (2 * h);
      EXPECT_NEAR(rate[i], fd, 1e-6 * (1.0 + std::abs(fd)));
    }
  }
}

TEST(MuscleTest, JacobianIsInvariantUnderRigidTransport) {
  std::mt19937_64 rng(4);
  const HybridModel m = muscled_model(rng);
  GeneralizedState s = random_state(m, rng);
  const Eigen::MatrixXd j0 = muscle_jacobian(m, s, m.muscles);
  s.base_pose = testing::random_pose(rng, 2.0) * s.base_pose;
  EXPECT_LT((muscle_jacobian(m, s, m.muscles) - j0).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(MuscleTest, HillTensionNormalization) {
  MuscleParams p;
  p.f_max = 700.0;
  EXPECT_EQ(hill_tension(p, 0.0, 0.2, 0.3), 0.0);
  EXPECT_DOUBLE_EQ(hill_tension(p, 1.0, p.l_opt, 0.0), 700.0);
  EXPECT_NEAR(force_length(p, p.l_opt * (1.0 + p.width)), std::exp(-1.0), 1e-15);
  EXPECT_THROW(hill_tension(p, 1.5, p.l_opt, 0.0), Error);
}

TEST(MuscleTest, ForceVelocityShape) {
  MuscleParams p;
  p.v_max = 2.0;
  double prev = force_velocity(p, 0.0);
  for (int k = 1; k <= 200; ++k) {
    const double f = force_velocity(p, -k * 0.01 * p.v_max);  // faster and faster shortening
    EXPECT_LE(f, prev);
    EXPECT_GE(f, 0.0);
    prev = f;
  }
  EXPECT_EQ(force_velocity(p, -1.01 * p.v_max), 0.0);
  double last = 1.0;
  for (int k = 1; k <= 200; ++k) {
    const double f = force_velocity(p, k * 0.05 * p.v_max);
    EXPECT_GE(f, last);
    EXPECT_LE(f, 1.5);
    last = f;
  }
  EXPECT_GT(last, 1.45);
  const double h = 1e-7;
  const double left = (force_velocity(p, 0.0) - force_velocity(p, -h)) / h;
  const double right = (force_velocity(p, h) - force_velocity(p, 0.0)) / h;
  EXPECT_NEAR(left, right, 1e-4 * left);
}

TEST(MuscleTest, ActivationStepResponse) {
  MuscleParams p;
  MuscleState s;
  const int steps = 100;
  for (int k = 0; k < steps; ++k) s = activation_step(p, s, p.u_mvc, p.tau_ac / steps);
  EXPECT_NEAR(s.activation, 1.0 - std::exp(-1.0), 1e-9);

  MuscleState still{0.4};
  EXPECT_EQ(activation_step(p, still, 0.4 * p.u_mvc, 0.01).activation, 0.4);

  MuscleState over;
  for (int k = 0; k < 2000; ++k) over = activation_step(p, over, 5.0 * p.u_mvc, 0.005);
  EXPECT_LE(over.activation, 1.0);
  EXPECT_GT(over.activation, 1.0 - 1e-12);

  MuscleState down{1.0};
  down = activation_step(p, down, 0.0, p.tau_da);
  EXPECT_NEAR(down.activation, std::exp(-1.0), 1e-12);
  EXPECT_THROW(activation_step(p, down, -1.0, 0.01), Error);
  EXPECT_THROW(activation_step(p, down, 0.5, 0.0), Error);
}

TEST(MuscleTest, ActivationStaysInUnitInterval) {
  std::mt19937_64 rng(5);
  MuscleParams p;
  for (int seq = 0; seq < 1000; ++seq) {
    MuscleState s{uniform(rng, 0.0, 1.0)};
    for (int k = 0; k < 50; ++k) {
      s = activation_step(p, s, uniform(rng, 0.0, 3.0), uniform(rng, 1e-4, 0.2));
      ASSERT_GE(s.activation, 0.0);
      ASSERT_LE(s.activation, 1.0);
    }
  }
}

TEST(MuscleTest, ZeroTargetGivesZeroTension) {
  std::mt19937_64 rng(6);
  const HybridModel m = muscled_model(rng);
  const GeneralizedState s = random_state(m, rng, 0.1);
  const MuscleSolution sol =
      muscle_optimize(m, s, Eigen::VectorXd::Zero(m.rigid_dof()), m.muscles);
  EXPECT_LT(sol.tension.norm(), 1e-9);
}

HybridModel one_joint(const std::vector<Vec3>& origins) {
  HybridModel m;
  m.add_rigid("upper", -1, box_link(2.0, Vec3(0.3, 0.05, 0.05), Vec3(-0.15, 0, 0), {}));
  m.add_rigid("fore", 0, box_link(1.0, Vec3(0.3, 0.05, 0.05), Vec3(0.15, 0, 0),
                                  revolute(Vec3::UnitZ(), Pose{})));
  for (std::size_t i = 0; i < origins.size(); ++i) {
    MusclePath p;
    p.name = "m" + std::to_string(i);
    p.via_points = {{0, origins[i], 0}, {1, Vec3(0.05 + 0.02 * i, 0, 0), 0}};
    p.params.l_opt = 0.25;
    p.params.f_max = 1000.0;
    m.muscles.push_back(p);
  }
  m.finalize();
  return m;
}

TEST(MuscleTest, SingleMuscleSolvesTheScalarEquation) {
  const HybridModel m = one_joint({Vec3(-0.25, 0.04, 0.0)});
  GeneralizedState s = GeneralizedState::initial(m);
  s.qR[0] = 0.8;
  const double arm = -muscle_jacobian(m, s, m.muscles)(0, m.rigid_column(0));
  ASSERT_GT(arm, 0.0);
  const Eigen::VectorXd tau = Eigen::VectorXd::Constant(1, 10.0);
  const MuscleSolution sol = muscle_optimize(m, s, tau, m.muscles);
  EXPECT_NEAR(sol.tension[0], 10.0 / arm, 1e-8 * (10.0 / arm));
}

TEST(MuscleTest, RedundantAgonistsMatchClosedForm) {
  const HybridModel m = one_joint({Vec3(-0.25, 0.04, 0.0), Vec3(-0.2, 0.06, 0.01)});
  GeneralizedState s = GeneralizedState::initial(m);
  s.qR[0] = 1.1;
  const Eigen::VectorXd r = -muscle_jacobian(m, s, m.muscles).col(m.rigid_column(0));
  const double eps = 1e-4, tau = 12.0;
  MuscleWeights w;
  w.tension = Eigen::VectorXd::Constant(2, eps);
  const MuscleSolution sol =
      muscle_optimize(m, s, Eigen::VectorXd::Constant(1, tau), m.muscles, {}, w);
  // Stationarity of 1/2 (tau - r.f)^2 + eps/2 |f|^2.
  const Eigen::VectorXd expect = tau * r / (r.squaredNorm() + eps);
  EXPECT_LT((sol.tension - expect).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(MuscleTest, FeasibleTargetsAreReproduced) {
  std::mt19937_64 rng(7);
  const HybridModel m = muscled_model(rng);
  for (int trial = 0; trial < 20; ++trial) {
    const GeneralizedState s = random_state(m, rng, 0.2);
    const Kinematics kin(m, s);
    const Eigen::MatrixXd j = muscle_jacobian(kin, m.muscles);
    const Eigen::VectorXd rate = j * s.psi;
    Eigen::VectorXd f(m.muscles.size());
    for (std::size_t i = 0; i < m.muscles.size(); ++i) {
      const double fmax =
          hill_tension(m.muscles[i].params, 1.0, muscle_length(kin, m.muscles[i]), rate[i]);
      f[i] = uniform(rng, 0.1, 0.9) * fmax;
    }
    Eigen::VectorXd tau = Eigen::VectorXd::Zero(m.rigid_dof());
    for (int r = 0; r < m.rigid_dof(); ++r) tau[r] = -j.col(m.rigid_column(r)).dot(f);
    const MuscleSolution sol = muscle_optimize(m, s, tau, m.muscles);
    EXPECT_LE(sol.residual.norm(), 1e-6 * tau.norm()) << trial;
    for (int i = 0; i < sol.tension.size(); ++i) {
      EXPECT_GE(sol.tension[i], 0.0);
      EXPECT_LE(sol.tension[i], sol.f_max[i] + 1e-9);
    }
  }
}

TEST(MuscleTest, TensionsRespectBoundsForUnreachableTargets) {
  std::mt19937_64 rng(8);
  const HybridModel m = muscled_model(rng);
  for (int trial = 0; trial < 20; ++trial) {
    const GeneralizedState s = random_state(m, rng, 0.5);
    const Eigen::VectorXd tau = random_vector(rng, m.rigid_dof(), 2000.0);
    const MuscleSolution sol = muscle_optimize(m, s, tau, m.muscles);
    for (int i = 0; i < sol.tension.size(); ++i) {
      EXPECT_GE(sol.tension[i], 0.0);
      EXPECT_LE(sol.tension[i], sol.f_max[i] + 1e-9);
    }
  }
}

TEST(MuscleTest, UnspannedJointsAreExcluded) {
  HybridModel m = one_joint({Vec3(-0.25, 0.04, 0.0)});
  m.add_rigid("hand", 1, box_link(0.3, Vec3(0.1, 0.05, 0.05), Vec3(0.05, 0, 0),
                                  revolute(Vec3::UnitY(), Pose::translation(Vec3(0.3, 0, 0)))));
  m.finalize();
  const GeneralizedState s = GeneralizedState::initial(m);
  const MuscleSolution sol = muscle_optimize(m, s, Eigen::Vector2d(5.0, 3.0), m.muscles);
  EXPECT_EQ(sol.rows, std::vector<int>{0});
  EXPECT_EQ(sol.excluded, std::vector<int>{1});
  EXPECT_EQ(sol.residual.size(), 1);
}

}  // namespace
}  // namespace hybridlink
