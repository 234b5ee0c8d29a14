#pragma once

#include <vector>

#include <Eigen/Core>

#include "hybridlink/dynamics.hpp"
#include "hybridlink/model.hpp"

namespace hybridlink {

/// Measured marker positions for one capture instant, indexed like model.markers.
struct MarkerFrame {
  double time = 0.0;
  std::vector<Vec3> positions;
  std::vector<bool> visible;  // empty means every marker is visible
};

struct IkSettings {
  Eigen::VectorXd w_residual;  // per marker (W1), empty = 1
  Eigen::VectorXd w_damping;   // per column of psi (W2), empty = 1e-9
  int max_iters = 50;
  double tol_step = 1e-10;
  double tol_residual = 1e-10;  // RMS marker residual [m]
  double lambda0 = 1e-6;
};

struct IkResult {
  GeneralizedState state;
  double residual_rms = 0.0;  // sqrt(sum |p_hat - p|^2 / (3 * visible markers))
  int iterations = 0;
  bool converged = false;
};

/// Levenberg-Marquardt fit of {H0, qR, qS} to one marker frame. The base is
/// updated as H0 exp(delta), the coordinates additively.
IkResult ik_solve_frame(const HybridModel& model, const MarkerFrame& frame,
                        const GeneralizedState& q_init, const IkSettings& settings = {});

/// Sum of squared marker errors weighted by W1 and visibility, halved.
double ik_cost(const HybridModel& model, const MarkerFrame& frame, const GeneralizedState& state,
               const IkSettings& settings = {});

struct IkSequence {
  std::vector<double> times;
  std::vector<GeneralizedState> states;  // psi and psi_dot filled
  std::vector<IkResult> frames;
};

/// Velocities and accelerations from a pose sequence by central differences
/// (the base through log of relative poses), each smoothed with a centred
/// moving average of `window` samples. window <= 1 disables smoothing.
void differentiate_states(std::vector<GeneralizedState>& states, double dt, int window = 5);

/// Frame-by-frame IK warm-started from the previous solution. The first frame
/// starts from `q_init` (model default when omitted). Frame errors are rethrown
/// with the frame index prepended.
IkSequence ik_solve_sequence(const HybridModel& model, const std::vector<MarkerFrame>& frames,
                             const IkSettings& settings = {}, int smoothing_window = 5);
IkSequence ik_solve_sequence(const HybridModel& model, const std::vector<MarkerFrame>& frames,
                             const GeneralizedState& q_init, const IkSettings& settings = {},
                             int smoothing_window = 5);

/// Uniform sample spacing of a time vector; throws InvalidArgument otherwise.
double uniform_step(const std::vector<double>& times);

}  // namespace hybridlink
