#pragma once

#include "hybridlink/se3.hpp"

namespace hybridlink {

enum class JointKind { Revolute, Prismatic, Fixed };

/// 1-DOF joint (or a rigid weld). Multi-DOF joints are series of these.
struct Joint {
  JointKind kind = JointKind::Fixed;
  Vec3 axis = Vec3::UnitZ();
  Pose parent_frame;  // joint frame expressed in the parent body frame

  bool has_dof() const { return kind != JointKind::Fixed; }
  /// Body-frame twist generated by a unit joint rate.
  Twist motion_subspace() const;
};

struct RigidLink {
  double mass = 0.0;
  Mat3 inertia_cog = Mat3::Zero();
  Vec3 cog_offset = Vec3::Zero();
  Joint joint;
};

Pose joint_transform(const Joint& joint, double coord);

/// diag(I_G, m E), expressed at the centre of gravity.
Mat6 link_spatial_inertia(const RigidLink& link);

/// Spatial inertia moved from the CoG to the link frame.
Mat6 link_inertia_at_frame(const RigidLink& link);

}  // namespace hybridlink
