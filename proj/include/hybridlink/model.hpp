#pragma once

#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "hybridlink/pcs_rod.hpp"
#include "hybridlink/rigid_chain.hpp"
#include "hybridlink/se3.hpp"

namespace hybridlink {

/// A PCS rod rigidly mounted on its parent frame.
struct RodLink {
  Pose mount;
  PcsRod rod;
};

struct Body {
  std::string name;
  int parent = -1;  // -1 only for the floating base
  /// Where the body hangs off its parent when the parent is a rod.
  /// Negative means the rod tip.
  double parent_arclength = -1.0;
  std::variant<RigidLink, RodLink> element;

  bool is_rod() const { return std::holds_alternative<RodLink>(element); }
  const RigidLink& link() const { return std::get<RigidLink>(element); }
  const RodLink& rod() const { return std::get<RodLink>(element); }
  RigidLink& link() { return std::get<RigidLink>(element); }
  RodLink& rod() { return std::get<RodLink>(element); }

  // Filled in by HybridModel::finalize().
  int joint_coord = -1;     // index into qR, -1 for welds and rods
  int strain_offset = -1;   // first index into qS for rods
};

/// A point fixed to a body; `arclength` selects the cross-section for rods.
struct BodyPoint {
  int body = 0;
  Vec3 local = Vec3::Zero();
  double arclength = 0.0;
};

struct Marker {
  BodyPoint at;
  std::string label;
};

struct ContactPoint {
  BodyPoint at;
  double mu = 0.8;
  std::string label;
  std::string group;  // aggregation key for GRF reporting
};

struct MuscleParams {
  double f_max = 1000.0;   // maximum isometric force [N]
  double l_opt = 0.1;      // optimal fibre length [m]
  double width = 0.5;      // Gaussian force-length width, relative to l_opt
  double v_max = 1.0;      // maximum shortening speed [m/s]
  double tau_ac = 0.015;   // activation time constant [s]
  double tau_da = 0.05;    // deactivation time constant [s]
  double u_mvc = 1.0;      // EMG amplitude at maximum voluntary contraction
  double fv_curvature = 0.25;  // concentric Hill hyperbola shape
  double fv_eccentric = 1.5;   // force-velocity plateau when lengthening
};

struct MusclePath {
  std::string name;
  std::vector<BodyPoint> via_points;
  MuscleParams params;
};

struct HybridModel {
  std::vector<Body> bodies;
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);
  std::vector<Marker> markers;
  std::vector<ContactPoint> contacts;
  std::vector<MusclePath> muscles;

  int rigid_dof() const { return rigid_dof_; }
  int strain_dof() const { return strain_dof_; }
  int dof() const { return 6 + rigid_dof_ + strain_dof_; }

  int body_index(std::string_view name) const;  // throws UnknownBody
  /// Arclength of the parent frame a body is attached to (rod tip by default).
  double attachment_arclength(int body) const;

  /// Column of psi for qR index / qS index.
  int rigid_column(int coord) const { return 6 + coord; }
  int strain_column(int coord) const { return 6 + rigid_dof_ + coord; }

  /// Validates every invariant and assigns coordinate indices. Must be called
  /// after construction or edits; throws ValidationError.
  void finalize();

  int add_rigid(std::string name, int parent, RigidLink link);
  int add_rod(std::string name, int parent, RodLink rod, double parent_arclength = -1.0);

 private:
  int rigid_dof_ = 0;
  int strain_dof_ = 0;
};

/// {H0, qR, qS} plus generalized velocity and acceleration.
struct GeneralizedState {
  Pose base_pose;
  Eigen::VectorXd qR;
  Eigen::VectorXd qS;
  Eigen::VectorXd psi;
  Eigen::VectorXd psi_dot;

  /// Zero motion, joint coordinates zero and rod strains at their model values.
  static GeneralizedState initial(const HybridModel& model);
  /// Stacked (qR, qS).
  Eigen::VectorXd coordinates() const;
  void set_coordinates(const Eigen::VectorXd& r);
};

void check_dimensions(const HybridModel& model, const GeneralizedState& state);

}  // namespace hybridlink
