#include "hybridlink/rigid_chain.hpp"

namespace hybridlink {

Twist Joint::motion_subspace() const {
  switch (kind) {
    case JointKind::Revolute: return make_twist(axis, Vec3::Zero());
    case JointKind::Prismatic: return make_twist(Vec3::Zero(), axis);
    case JointKind::Fixed: break;
  }
  return Twist::Zero();
}

Pose joint_transform(const Joint& joint, double coord) {
  switch (joint.kind) {
    case JointKind::Revolute:
      return joint.parent_frame * Pose{axis_angle(joint.axis, coord), Vec3::Zero()};
    case JointKind::Prismatic:
      return joint.parent_frame * Pose::translation(coord * joint.axis);
    case JointKind::Fixed: break;
  }
  return joint.parent_frame;
}

Mat6 link_spatial_inertia(const RigidLink& link) {
  Mat6 m = Mat6::Zero();
  m.topLeftCorner<3, 3>() = link.inertia_cog;
  m.bottomRightCorner<3, 3>() = link.mass * Mat3::Identity();
  return m;
}

Mat6 link_inertia_at_frame(const RigidLink& link) {
  // Twist at the CoG = Ad(G^-1) * twist at the frame, G = (I, cog_offset).
  const Mat6 x = adjoint(Pose::translation(link.cog_offset).inverse());
  return x.transpose() * link_spatial_inertia(link) * x;
}

}  // namespace hybridlink
