#include <cmath>
#include <limits>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "../common/test_models.hpp"
#include "hybridlink/errors.hpp"
#include "hybridlink/ik.hpp"

namespace hybridlink {
namespace {

using testing::random_model;
using testing::random_state;
using testing::random_vector;

MarkerFrame observe(const HybridModel& m, const GeneralizedState& s, std::mt19937_64* rng = nullptr,
                    double sigma = 0.0) {
  Kinematics kin(m, s);
  MarkerFrame f;
  std::normal_distribution<double> noise(0.0, sigma);
  for (const Marker& mk : m.markers) {
    Vec3 p = kin.point_position(mk.at);
    if (rng) p += Vec3(noise(*rng), noise(*rng), noise(*rng));
    f.positions.push_back(p);
  }
  return f;
}

GeneralizedState perturbed(const GeneralizedState& s, std::mt19937_64& rng, double size) {
  Eigen::VectorXd d = random_vector(rng, 6 + s.qR.size() + s.qS.size(), 1.0);
  d *= size * testing::uniform(rng, 0.2, 1.0) / d.norm();
  return displaced(s, d.head<6>(), d.tail(d.size() - 6));
}

TEST(IkTest, ExactInitialGuessNeedsNoIterations) {
  std::mt19937_64 rng(1);
  const HybridModel m = random_model(rng);
  const GeneralizedState truth = random_state(m, rng);
  const IkResult r = ik_solve_frame(m, observe(m, truth), truth);
  EXPECT_EQ(r.iterations, 0);
  EXPECT_LT(r.residual_rms, 1e-12);
  EXPECT_TRUE(r.converged);
}

TEST(IkTest, RecoversPerturbedStateFromCleanMarkers) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const HybridModel m = random_model(rng, kAngularStrains, 2);
    const GeneralizedState truth = random_state(m, rng);
    const IkResult r = ik_solve_frame(m, observe(m, truth), perturbed(truth, rng, 0.05));
    EXPECT_LT(r.residual_rms, 1e-6) << trial;
    EXPECT_LE(r.iterations, 20) << trial;
    EXPECT_TRUE(r.converged) << trial;
  }
}

TEST(IkTest, NoisyMarkersLeaveResidualAtNoiseLevel) {
  std::mt19937_64 rng(3);
  const HybridModel m = random_model(rng, kAngularStrains, 2);
  for (int trial = 0; trial < 10; ++trial) {
    const GeneralizedState truth = random_state(m, rng);
    const IkResult r =
        ik_solve_frame(m, observe(m, truth, &rng, 1e-3), perturbed(truth, rng, 0.05));
    EXPECT_LE(r.residual_rms, 1.5e-3);
  }
}

TEST(IkTest, AcceptedStepsNeverRaiseTheCost) {
  std::mt19937_64 rng(4);
  const HybridModel m = random_model(rng);
  const GeneralizedState truth = random_state(m, rng);
  const MarkerFrame f = observe(m, truth, &rng, 2e-3);
  const GeneralizedState start = perturbed(truth, rng, 0.3);
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 15; ++k) {
    IkSettings s;
    s.max_iters = k;
    const double c = ik_cost(m, f, ik_solve_frame(m, f, start, s).state);
    EXPECT_LE(c, prev) << k;
    prev = c;
  }
}

TEST(IkTest, MarkersOnOneBodyAreUnderdetermined) {
  std::mt19937_64 rng(5);
  HybridModel m = random_model(rng);
  const GeneralizedState s = random_state(m, rng);
  MarkerFrame f = observe(m, s);
  f.visible.assign(m.markers.size(), false);
  for (std::size_t k = 0; k < m.markers.size(); ++k) f.visible[k] = m.markers[k].at.body == 1;
  try {
    ik_solve_frame(m, f, s);
    FAIL() << "expected Underdetermined";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Underdetermined);
  }

  f.visible.assign(m.markers.size(), false);
  f.visible[0] = f.visible[5] = true;
  EXPECT_THROW(ik_solve_frame(m, f, s), Error);
}

TEST(IkTest, InvisibleMarkersAreIgnored) {
  std::mt19937_64 rng(6);
  const HybridModel m = random_model(rng);
  const GeneralizedState truth = random_state(m, rng);
  MarkerFrame f = observe(m, truth);
  f.visible.assign(m.markers.size(), true);
  f.visible[2] = false;
  f.positions[2] = Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
  const IkResult r = ik_solve_frame(m, f, perturbed(truth, rng, 0.05));
  EXPECT_LT(r.residual_rms, 1e-6);
}

TEST(IkTest, RigidTransformOfMarkersIsAbsorbedByTheBase) {
  std::mt19937_64 rng(7);
  const HybridModel m = random_model(rng, kAngularStrains, 2);
  const GeneralizedState truth = random_state(m, rng);
  const MarkerFrame f = observe(m, truth, &rng, 1e-3);
  const GeneralizedState start = perturbed(truth, rng, 0.05);

  const Pose g = testing::random_pose(rng, 1.0);
  MarkerFrame moved = f;
  for (Vec3& p : moved.positions) p = g.rotation * p + g.position;
  GeneralizedState moved_start = start;
  moved_start.base_pose = g * start.base_pose;

  const IkResult a = ik_solve_frame(m, f, start);
  const IkResult b = ik_solve_frame(m, moved, moved_start);
  EXPECT_NEAR(a.residual_rms, b.residual_rms, 1e-10);
}

TEST(IkTest, CostGradientMatchesMarkerJacobian) {
  std::mt19937_64 rng(8);
  const HybridModel m = random_model(rng);
  const GeneralizedState s = random_state(m, rng);
  const MarkerFrame f = observe(m, perturbed(s, rng, 0.2));
  Kinematics kin(m, s);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(m.dof());
  for (std::size_t k = 0; k < m.markers.size(); ++k) {
    const Vec3 e = f.positions[k] - kin.point_position(m.markers[k].at);
    grad -= kin.point_jacobian(m.markers[k].at).transpose() * e;
  }
  const double h = 1e-6;
  Eigen::VectorXd fd(m.dof());
  for (int i = 0; i < m.dof(); ++i) {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(m.dof());
    d[i] = h;
    const double cp = ik_cost(m, f, displaced(s, d.head<6>(), d.tail(m.dof() - 6)));
    const double cm = ik_cost(m, f, displaced(s, -d.head<6>(), -d.tail(m.dof() - 6)));
    fd[i] = (cp - cm) / (2 * h);
  }
  EXPECT_LT((fd - grad).norm(), 1e-6 * grad.norm());
}

TEST(IkTest, ConstantPoseSequenceHasZeroRates) {
  std::mt19937_64 rng(9);
  const HybridModel m = random_model(rng);
  GeneralizedState truth = random_state(m, rng);
  std::vector<MarkerFrame> frames;
  for (int k = 0; k < 10; ++k) {
    frames.push_back(observe(m, truth));
    frames.back().time = 0.005 * k;
  }
  const IkSequence seq = ik_solve_sequence(m, frames, truth);
  ASSERT_EQ(seq.states.size(), 10u);
  for (const GeneralizedState& s : seq.states) {
    EXPECT_LT((s.coordinates() - truth.coordinates()).norm(), 1e-9);
    EXPECT_LT(s.psi.norm(), 1e-9);
    EXPECT_LT(s.psi_dot.norm(), 1e-9);
  }
}

TEST(IkTest, SinusoidalJointRateMatchesAnalyticDerivative) {
  std::mt19937_64 rng(10);
  const HybridModel m = random_model(rng, kAngularStrains, 2);
  const GeneralizedState rest = random_state(m, rng);
  const double two_pi = 2.0 * std::acos(-1.0);
  std::vector<MarkerFrame> frames;
  for (int k = 0; k <= 200; ++k) {
    const double t = k / 200.0;
    GeneralizedState s = rest;
    s.qR[0] = rest.qR[0] + 0.3 * std::sin(two_pi * t);
    frames.push_back(observe(m, s));
    frames.back().time = t;
  }
  const IkSequence seq = ik_solve_sequence(m, frames, rest);
  double err = 0.0, ref = 0.0;
  for (int k = 0; k <= 200; ++k) {
    const double want = 0.3 * two_pi * std::cos(two_pi * k / 200.0);
    const double got = seq.states[k].psi[m.rigid_column(0)];
    err += (got - want) * (got - want);
    ref += want * want;
  }
  EXPECT_LT(std::sqrt(err / ref), 0.01);
}

TEST(IkTest, SequenceErrorsCarryTheFrameIndex) {
  std::mt19937_64 rng(11);
  const HybridModel m = random_model(rng);
  const GeneralizedState truth = random_state(m, rng);
  std::vector<MarkerFrame> frames(6, observe(m, truth));
  for (int k = 0; k < 6; ++k) frames[k].time = 0.01 * k;
  frames[3].visible.assign(m.markers.size(), false);
  try {
    ik_solve_sequence(m, frames, truth);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Underdetermined);
    EXPECT_NE(std::string(e.what()).find("frame 3"), std::string::npos);
  }
}

TEST(IkTest, NonUniformSamplingIsRejected) {
  std::mt19937_64 rng(12);
  const HybridModel m = random_model(rng);
  const GeneralizedState truth = random_state(m, rng);
  std::vector<MarkerFrame> frames(4, observe(m, truth));
  const double times[] = {0.0, 0.01, 0.02, 0.035};
  for (int k = 0; k < 4; ++k) frames[k].time = times[k];
  EXPECT_THROW(ik_solve_sequence(m, frames, truth), Error);
}

}  // namespace
}  // namespace hybridlink
