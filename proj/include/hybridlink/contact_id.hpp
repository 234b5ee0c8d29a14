#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hybridlink/conic_qp.hpp"
#include "hybridlink/dynamics.hpp"
#include "hybridlink/model.hpp"

namespace hybridlink {

/// Weights of the inverse-dynamics QP
///   min 1/2 |M psi_dot + b - [0; tauR; tauS] - J_C^T f|^2_W1 + 1/2 |x|^2_W2.
struct IdWeights {
  double base = 1e4;      // W1 on the 6 unactuated rows
  double actuated = 1.0;  // W1 on the joint and strain rows
  double reg = 1e-6;      // W2 on every entry of x = [tauR; tauS; f]
  Eigen::VectorXd w_residual;  // full diagonal of W1 (size dof), overrides base/actuated
  Eigen::VectorXd w_reg;       // full diagonal of W2 (size of x), overrides reg
};

struct IdProblem {
  GeneralizedState state;        // psi and psi_dot required
  std::vector<int> active_contacts;  // indices into model.contacts
  IdWeights weights;
  std::optional<double> mu_override;
};

struct ContactSolution {
  Eigen::VectorXd tauR;
  Eigen::VectorXd tauS;           // total rod generalized force
  Eigen::VectorXd tauS_passive;   // K (q0 - q) - D qdot at the state
  Eigen::VectorXd tauS_residual;  // tauS - tauS_passive
  std::vector<int> active_contacts;
  std::vector<Vec3> forces;  // one per model contact, zero when inactive
  Eigen::VectorXd residual_dynamics;  // M psi_dot + b - S tau - J_C^T f
  QpStatus status = QpStatus::Optimal;
  int iterations = 0;
  double primal_res = 0.0;
  double dual_res = 0.0;
};

/// Candidates whose world height (z) and speed are both within the bounds.
std::vector<int> select_active_contacts(const HybridModel& model, const GeneralizedState& state,
                                        double height_eps, double speed_eps);

/// Throws InfeasibleOrUnbounded when the solver returns a certificate and
/// DimensionMismatch for inconsistent sizes.
ContactSolution id_solve(const HybridModel& model, const IdProblem& problem,
                         const QpSettings& qp = {});

struct IdSequenceSettings {
  IdWeights weights;
  std::optional<double> mu_override;
  double height_eps = 0.005;
  double speed_eps = 0.05;
  /// Optional fixed contact sets per frame; overrides the height/speed rule.
  std::vector<std::vector<int>> active_override;
  QpSettings qp;
  int threads = 0;  // 0 = HYBRIDLINK_THREADS or 1
};

struct IdFrame {
  bool ok = false;
  std::string error;  // set when !ok
  ContactSolution solution;
};

struct IdSequenceResult {
  std::vector<IdFrame> frames;
  std::vector<std::string> groups;  // contact group names, first-seen order
  /// grf[g][k]: summed force of group g at frame k (zero for failed frames).
  std::vector<std::vector<Vec3>> grf;
  std::vector<Vec3> net_grf;
};

/// Frame-wise id_solve. Frames are independent, so they may run on several
/// threads; each frame's result does not depend on the thread count.
IdSequenceResult id_solve_sequence(const HybridModel& model,
                                   const std::vector<GeneralizedState>& states,
                                   const IdSequenceSettings& settings = {});

/// Contact-group names in first-seen order; a contact without a group forms
/// its own, named after its label. group_of[c] indexes the returned names.
std::vector<std::string> contact_groups(const HybridModel& model, std::vector<int>* group_of);

/// Worker count from HYBRIDLINK_THREADS (at least 1).
int default_thread_count();

}  // namespace hybridlink
