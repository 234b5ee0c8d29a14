#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "hybridlink/ik.hpp"
#include "hybridlink/model.hpp"

namespace hybridlink {

/// Floating pelvis, a left leg with hip, knee and ankle, a right leg with hip
/// and knee ending in a socket, and a 6-segment angular-strain blade under the
/// socket. 6 + 5 + 18 = 29 DOF. Contact groups "left_foot" (6 points) and
/// "prosthesis" (4 points); 33 markers, 14 of them on the blade.
HybridModel reference_model();

/// Standing pose of the reference model: every contact at z = 0, zero motion.
GeneralizedState reference_standing_pose(const HybridModel& model);

enum class Scenario { Static, PendulumDrop, ScriptedGait };

Scenario parse_scenario(std::string_view name);  // throws InvalidArgument
const char* to_string(Scenario s);

struct SyntheticOptions {
  double duration = -1.0;       // < 0 selects the scenario default
  double sample_rate = 200.0;   // Hz
  double integration_dt = 1e-4; // pendulum-drop only
  double noise_sigma = 1e-3;    // marker noise [m]
  std::uint64_t seed = 0;
};

/// Ground truth of a synthetic experiment. Every sample satisfies
/// M psi_dot + b = (0, tauR, tauS) + sum J_C^T f to round-off.
struct Dataset {
  std::vector<double> times;
  std::vector<GeneralizedState> states;     // psi_dot from forward dynamics
  std::vector<MarkerFrame> markers;         // with noise
  std::vector<MarkerFrame> clean_markers;   // without noise
  std::vector<std::vector<Vec3>> forces;    // per frame, per model contact
  std::vector<std::vector<bool>> grounded;  // per frame, per model contact
  std::vector<Eigen::VectorXd> tauR;
  std::vector<Eigen::VectorXd> tauS;        // total rod generalized force (passive + active)
  std::vector<Eigen::VectorXd> tauS_active;
};

/// Generates a dataset on the reference model (bodies are looked up by name).
///
/// static: the standing pose held still. pendulum-drop: the model released in
/// the air with swinging legs, integrated with no contact. scripted-gait: the
/// pelvis is held while the model steps in place, prosthesis swing first; each
/// frame's contact forces stay near an even split of the required base wrench
/// over the grounded points and inside half the friction cone.
Dataset run_synthetic(const HybridModel& model, Scenario scenario,
                      const SyntheticOptions& options = {});

}  // namespace hybridlink
