#pragma once

#include <vector>

#include <Eigen/Core>

#include "hybridlink/conic_qp.hpp"
#include "hybridlink/dynamics.hpp"
#include "hybridlink/model.hpp"

namespace hybridlink {

/// Polyline length through the world positions of the via points.
double muscle_length(const Kinematics& kin, const MusclePath& muscle);
double muscle_length(const HybridModel& model, const GeneralizedState& state,
                     const MusclePath& muscle);

/// Row i maps psi to the lengthening rate of muscles[i].
Eigen::MatrixXd muscle_jacobian(const Kinematics& kin, const std::vector<MusclePath>& muscles);
Eigen::MatrixXd muscle_jacobian(const HybridModel& model, const GeneralizedState& state,
                                const std::vector<MusclePath>& muscles);

/// Gaussian force-length factor, 1 at l_opt.
double force_length(const MuscleParams& p, double length);
/// Force-velocity factor in [0, fv_eccentric]; l_dot < 0 is shortening. The
/// concentric branch is the Hill hyperbola (1 - s/v_max) / (1 + s/(k v_max));
/// the eccentric branch saturates at fv_eccentric with a matching slope at 0.
double force_velocity(const MuscleParams& p, double l_dot);
/// Tension magnitude a F_l F_v f_max (pulling is positive).
double hill_tension(const MuscleParams& p, double activation, double length, double l_dot);

struct MuscleState {
  double activation = 0.0;
};

/// Exact solution of a_dot = (u - a) / tau over dt with u = u_emg / u_mvc
/// clamped to [0, 1] and tau = tau_ac while u >= a, tau_da otherwise.
MuscleState activation_step(const MuscleParams& p, MuscleState state, double u_emg, double dt);

struct MuscleWeights {
  Eigen::VectorXd torque;   // W1 per joint coordinate (size qR), empty = 1
  Eigen::VectorXd tension;  // W2 per muscle, empty = 0
};

struct MuscleSolution {
  Eigen::VectorXd tension;      // f, one per muscle
  Eigen::VectorXd f_max;        // Hill bound at a = 1 for the current length and rate
  std::vector<int> rows;        // joint coordinates spanned by at least one muscle
  std::vector<int> excluded;    // joint coordinates no muscle spans
  Eigen::VectorXd torque;       // -J_l^T f on `rows`
  Eigen::VectorXd residual;     // tauR_target - torque on `rows`
  QpStatus status = QpStatus::Optimal;
  int iterations = 0;
};

/// min 1/2 |tauR - (-J_l^T f)|^2_W1 + 1/2 |f - f_ref|^2_W2  s.t. 0 <= f <= f_max.
/// Only joint rows spanned by some muscle enter the residual.
MuscleSolution muscle_optimize(const HybridModel& model, const GeneralizedState& state,
                               const Eigen::VectorXd& tauR_target,
                               const std::vector<MusclePath>& muscles,
                               const Eigen::VectorXd& f_ref = {},
                               const MuscleWeights& weights = {}, const QpSettings& qp = {});

}  // namespace hybridlink
