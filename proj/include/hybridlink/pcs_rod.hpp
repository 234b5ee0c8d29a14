#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "hybridlink/se3.hpp"

namespace hybridlink {

using Matrix6X = Eigen::Matrix<double, 6, Eigen::Dynamic>;
using Matrix3X = Eigen::Matrix<double, 3, Eigen::Dynamic>;

using StrainMask = std::array<bool, 6>;

inline constexpr StrainMask kAllStrains = {true, true, true, true, true, true};
inline constexpr StrainMask kAngularStrains = {true, true, true, false, false, false};

/// One constant-strain piece of a Cosserat rod.
///
/// Components switched off in `active_mask` are not free coordinates; they are
/// pinned to the matching entries of `neutral_strain` and only shift the
/// kinematics by a constant offset.
struct PcsSegment {
  double length = 0.0;
  Twist strain = Twist::Zero();
  Twist neutral_strain = Twist::Zero();
  Mat6 stiffness = Mat6::Zero();
  Mat6 damping = Mat6::Zero();
  Mat6 inertia_density = Mat6::Zero();  // per unit length, uniform in the segment
  StrainMask active_mask = kAllStrains;

  int active_count() const;
};

struct PcsRod {
  std::vector<PcsSegment> segments;

  int segment_count() const { return static_cast<int>(segments.size()); }
  double total_length() const;
  /// Arclength at the start of segment i (i == segment_count() gives the tip).
  double boundary(int i) const;
  /// Segment containing s; boundary points belong to the segment that ends there.
  int segment_at(double s) const;

  int active_dof() const;
  /// Indices into the stacked 6*n_s strain vector that are free coordinates.
  std::vector<int> active_columns() const;
  Eigen::VectorXd active_strain() const;
  void set_active_strain(const Eigen::VectorXd& q);
  /// Stacked 6*n_s strains.
  Eigen::VectorXd stacked_strain() const;
};

/// Cross-section constants of a homogeneous beam.
struct BeamSection {
  double youngs_modulus = 0.0;
  double shear_modulus = 0.0;
  double area = 0.0;
  double second_moment_y = 0.0;
  double second_moment_z = 0.0;
  double torsion_constant = 0.0;
  double density = 0.0;
  double damping_ratio = 0.0;  // damping = ratio * stiffness
};

/// Segment whose stiffness is length * diag(GJ, EIy, EIz, EA, GA, GA) and whose
/// inertia density is diag(rho (Iy+Iz), rho Iy, rho Iz, rho A, rho A, rho A).
PcsSegment uniform_beam_segment(double length, const BeamSection& section,
                                const Twist& neutral_strain,
                                const StrainMask& mask = kAllStrains);

/// Pose and body-frame Jacobian of a rod cross-section.
struct RodFrame {
  Pose pose;
  Matrix6X jacobian;
};

/// Walks the rod from `base` up to arclength `s`. `base_jacobian` maps the
/// caller's generalized velocity to the twist at s = 0; `strain_columns[6*i+c]`
/// is the generalized-velocity column of strain component c of segment i, or -1
/// if that component is not a coordinate.
RodFrame propagate_rod_frame(const PcsRod& rod, const RodFrame& base,
                             std::span<const int> strain_columns, double s);

/// Frames at every segment boundary L_0 .. L_n.
std::vector<RodFrame> rod_boundary_frames(const PcsRod& rod, const RodFrame& base,
                                          std::span<const int> strain_columns);

/// Frame at local coordinate `u` in segment `i`, given the frame at L_{i-1}.
RodFrame frame_in_segment(const PcsRod& rod, int i, const RodFrame& start, double u,
                          std::span<const int> strain_columns);

Pose rod_pose(const PcsRod& rod, const Pose& base, double s);

Twist rod_velocity(const PcsRod& rod, const Twist& base_velocity,
                   std::span<const Twist> strain_rates, double s);

/// 6 x 6n_s map from stacked strain rates to the body twist at s (fixed base).
/// With `active_only`, columns of pinned components are zeroed.
Matrix6X rod_jacobian(const PcsRod& rod, double s, bool active_only = false);

Eigen::MatrixXd rod_mass_matrix(const PcsRod& rod, int quadrature_order = 5);

/// Coriolis/centrifugal matrix with dJ/dt from central differences of the
/// Jacobian along the strain trajectory (time step 1e-7).
Eigen::MatrixXd rod_coriolis(const PcsRod& rod, std::span<const Twist> strain_rates,
                             int quadrature_order = 5);

struct RodForce {
  Eigen::VectorXd generalized;  // 6 n_s
  std::vector<bool> free;       // false for pinned components (constraint reactions)
};

/// K (q0 - q) - D qdot, blockwise per segment.
RodForce rod_passive_force(const PcsRod& rod, std::span<const Twist> strain_rates);

/// 1/2 (q - q0)^T K (q - q0) summed over segments.
double rod_elastic_energy(const PcsRod& rod);

/// Selects the rows/columns of a 6 n_s operator that belong to free coordinates.
Eigen::MatrixXd restrict_to_active(const PcsRod& rod, const Eigen::MatrixXd& full);

}  // namespace hybridlink
