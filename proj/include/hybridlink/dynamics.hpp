#pragma once

#include <functional>
#include <vector>

#include <Eigen/Core>

#include "hybridlink/model.hpp"

namespace hybridlink {

/// Forward kinematics of every body for one state, plus body-frame Jacobians
/// with respect to psi. Rod bodies can be queried at any arclength.
class Kinematics {
 public:
  Kinematics(const HybridModel& model, const GeneralizedState& state);

  const HybridModel& model() const { return *model_; }
  int dof() const { return model_->dof(); }

  /// Frame at arclength 0 (the mount for rods).
  const Pose& body_pose(int body) const { return frames_[body].pose; }
  const Matrix6X& body_jacobian(int body) const { return frames_[body].jacobian; }

  /// Pose and body-frame Jacobian of a body frame (rod cross-section at s).
  RodFrame frame(int body, double arclength = 0.0) const;
  Pose frame_pose(int body, double arclength = 0.0) const;

  Vec3 point_position(const BodyPoint& p) const;
  /// 3 x dof map from psi to the world-frame velocity of the point.
  Matrix3X point_jacobian(const BodyPoint& p) const;

  /// Rod of a body with the state's strains applied.
  const PcsRod& rod(int body) const { return rods_[body]; }
  std::span<const int> strain_columns(int body) const { return strain_columns_[body]; }
  const std::vector<RodFrame>& rod_boundaries(int body) const { return boundaries_[body]; }

 private:
  const HybridModel* model_;
  std::vector<RodFrame> frames_;
  std::vector<PcsRod> rods_;
  std::vector<std::vector<int>> strain_columns_;
  std::vector<std::vector<RodFrame>> boundaries_;
};

Kinematics fk_all(const HybridModel& model, const GeneralizedState& state);

Matrix3X point_jacobian(const HybridModel& model, const GeneralizedState& state,
                        const BodyPoint& point);
Matrix6X frame_jacobian(const HybridModel& model, const GeneralizedState& state, int body,
                        double arclength = 0.0);

/// One lump of inertia: a rigid body, or a rod quadrature node with its weight
/// folded into `inertia`.
struct MassElement {
  Matrix6X jacobian;  // body-frame twist of the element frame
  Mat6 inertia;
  Mat3 rotation;      // world orientation of the element frame
  Vec3 position;
};

std::vector<MassElement> mass_elements(const Kinematics& kin, int quadrature_order = 5);

Eigen::MatrixXd mass_matrix(const HybridModel& model, const GeneralizedState& state,
                            int quadrature_order = 5);

/// Velocity-product and gravity terms b(q, psi) of M psi_dot + b = tau + sum J^T f.
Eigen::VectorXd bias_vector(const HybridModel& model, const GeneralizedState& state,
                            int quadrature_order = 5);

struct MassAndBias {
  Eigen::MatrixXd mass;
  Eigen::VectorXd bias;
};

/// M and b sharing one pass over the mass elements of `kin`.
MassAndBias mass_and_bias(const Kinematics& kin, const GeneralizedState& state,
                          int quadrature_order = 5);

/// Generalized gravity force (the part of -b that gravity contributes).
Eigen::VectorXd gravity_force(const HybridModel& model, const GeneralizedState& state,
                              int quadrature_order = 5);

/// Rod passive force K (q0 - q) - D qdot on the active strain coordinates.
Eigen::VectorXd passive_strain_force(const HybridModel& model, const GeneralizedState& state);

double kinetic_energy(const HybridModel& model, const GeneralizedState& state,
                      int quadrature_order = 5);
double gravity_potential(const HybridModel& model, const GeneralizedState& state,
                         int quadrature_order = 5);
double elastic_potential(const HybridModel& model, const GeneralizedState& state);

/// Inputs applied to the system. Contact forces are world-frame and indexed
/// like model.contacts (empty means no contact force).
struct Actuation {
  Eigen::VectorXd tauR;
  Eigen::VectorXd tauS;  // active part, added to the rod passive force
  std::vector<Vec3> contact_forces;
};

/// Generalized force of the contact forces, sum J_C^T f.
Eigen::VectorXd contact_generalized_force(const Kinematics& kin,
                                          const std::vector<Vec3>& contact_forces);

Eigen::VectorXd forward_dynamics(const HybridModel& model, const GeneralizedState& state,
                                 const Actuation& input);

/// State advanced by a body-frame base twist and a coordinate increment.
GeneralizedState displaced(const GeneralizedState& state, const Twist& base_step,
                           const Eigen::VectorXd& coord_step);

using ActuationFn = std::function<Actuation(double t, const GeneralizedState& state)>;

struct TrajectorySample {
  double time = 0.0;
  GeneralizedState state;  // psi_dot filled from the dynamics
  Actuation input;
};

struct Trajectory {
  std::vector<TrajectorySample> samples;
};

/// Classical 4th order Runge-Kutta in the Munthe-Kaas form: the base pose is
/// advanced on SE(3) with exp_se3, everything else in R^n.
Trajectory integrate(const HybridModel& model, const GeneralizedState& initial,
                     const ActuationFn& input, double dt, int steps, int record_every = 1);

}  // namespace hybridlink
