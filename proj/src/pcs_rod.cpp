#include "hybridlink/pcs_rod.hpp"

#include <string>

#include "hybridlink/errors.hpp"
#include "hybridlink/quadrature.hpp"

namespace hybridlink {

namespace {

constexpr double kJacobianRateStep = 1e-7;

std::vector<int> identity_columns(const PcsRod& rod, bool active_only) {
  std::vector<int> cols(6 * rod.segments.size());
  for (std::size_t i = 0; i < rod.segments.size(); ++i) {
    for (int c = 0; c < 6; ++c) {
      const bool on = !active_only || rod.segments[i].active_mask[c];
      cols[6 * i + c] = on ? static_cast<int>(6 * i + c) : -1;
    }
  }
  return cols;
}

RodFrame fixed_base_frame(const PcsRod& rod, const Pose& base) {
  return {base, Matrix6X::Zero(6, 6 * rod.segment_count())};
}

PcsRod with_strain_offset(const PcsRod& rod, std::span<const Twist> rates, double dt) {
  PcsRod out = rod;
  for (std::size_t i = 0; i < out.segments.size(); ++i) {
    out.segments[i].strain += dt * rates[i];
  }
  return out;
}

void check_rates(const PcsRod& rod, std::span<const Twist> rates) {
  if (rates.size() != rod.segments.size()) {
    fail(ErrorCode::DimensionMismatch,
         "expected " + std::to_string(rod.segments.size()) + " strain rates, got " +
             std::to_string(rates.size()));
  }
}

}  // namespace

int PcsSegment::active_count() const {
  int n = 0;
  for (bool b : active_mask) n += b ? 1 : 0;
  return n;
}

double PcsRod::total_length() const { return boundary(segment_count()); }

double PcsRod::boundary(int i) const {
  double s = 0.0;
  for (int k = 0; k < i; ++k) s += segments[k].length;
  return s;
}

int PcsRod::segment_at(double s) const {
  const double total = total_length();
  if (segments.empty() || !(s >= 0.0) || s > total * (1.0 + 1e-12)) {
    fail(ErrorCode::OutOfRange, "arclength " + std::to_string(s) + " outside [0, " +
                                    std::to_string(total) + "]");
  }
  double end = 0.0;
  for (int i = 0; i < segment_count(); ++i) {
    end += segments[i].length;
    if (s <= end) return i;
  }
  return segment_count() - 1;
}

int PcsRod::active_dof() const {
  int n = 0;
  for (const auto& seg : segments) n += seg.active_count();
  return n;
}

std::vector<int> PcsRod::active_columns() const {
  std::vector<int> cols;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    for (int c = 0; c < 6; ++c) {
      if (segments[i].active_mask[c]) cols.push_back(static_cast<int>(6 * i + c));
    }
  }
  return cols;
}

Eigen::VectorXd PcsRod::active_strain() const {
  Eigen::VectorXd q(active_dof());
  int k = 0;
  for (const auto& seg : segments) {
    for (int c = 0; c < 6; ++c) {
      if (seg.active_mask[c]) q[k++] = seg.strain[c];
    }
  }
  return q;
}

void PcsRod::set_active_strain(const Eigen::VectorXd& q) {
  if (q.size() != active_dof()) {
    fail(ErrorCode::DimensionMismatch, "rod strain vector has wrong size");
  }
  int k = 0;
  for (auto& seg : segments) {
    for (int c = 0; c < 6; ++c) {
      seg.strain[c] = seg.active_mask[c] ? q[k++] : seg.neutral_strain[c];
    }
  }
}

Eigen::VectorXd PcsRod::stacked_strain() const {
  Eigen::VectorXd q(6 * segments.size());
  for (std::size_t i = 0; i < segments.size(); ++i) q.segment<6>(6 * i) = segments[i].strain;
  return q;
}

PcsSegment uniform_beam_segment(double length, const BeamSection& sec,
                                const Twist& neutral_strain, const StrainMask& mask) {
  PcsSegment seg;
  seg.length = length;
  seg.neutral_strain = neutral_strain;
  seg.strain = neutral_strain;
  seg.active_mask = mask;
  Vec6 k;
  k << sec.shear_modulus * sec.torsion_constant, sec.youngs_modulus * sec.second_moment_y,
      sec.youngs_modulus * sec.second_moment_z, sec.youngs_modulus * sec.area,
      sec.shear_modulus * sec.area, sec.shear_modulus * sec.area;
  seg.stiffness = (length * k).asDiagonal();
  seg.damping = sec.damping_ratio * seg.stiffness;
  Vec6 m;
  m << sec.density * (sec.second_moment_y + sec.second_moment_z),
      sec.density * sec.second_moment_y, sec.density * sec.second_moment_z,
      sec.density * sec.area, sec.density * sec.area, sec.density * sec.area;
  seg.inertia_density = m.asDiagonal();
  return seg;
}

RodFrame frame_in_segment(const PcsRod& rod, int i, const RodFrame& start, double u,
                          std::span<const int> strain_columns) {
  const PcsSegment& seg = rod.segments[i];
  const Pose local = exp_se3(seg.strain, u);
  const Mat6 a_inv = adjoint(local.inverse());
  RodFrame out{start.pose * local, a_inv * start.jacobian};
  if (u != 0.0) {
    const Mat6 gain = a_inv * tangent_integral(seg.strain, u);
    for (int c = 0; c < 6; ++c) {
      const int col = strain_columns[6 * i + c];
      if (col >= 0) out.jacobian.col(col) += gain.col(c);
    }
  }
  return out;
}

std::vector<RodFrame> rod_boundary_frames(const PcsRod& rod, const RodFrame& base,
                                          std::span<const int> strain_columns) {
  std::vector<RodFrame> frames;
  frames.reserve(rod.segments.size() + 1);
  frames.push_back(base);
  for (int i = 0; i < rod.segment_count(); ++i) {
    frames.push_back(
        frame_in_segment(rod, i, frames.back(), rod.segments[i].length, strain_columns));
  }
  return frames;
}

RodFrame propagate_rod_frame(const PcsRod& rod, const RodFrame& base,
                             std::span<const int> strain_columns, double s) {
  const int target = rod.segment_at(s);
  RodFrame frame = base;
  double start = 0.0;
  for (int i = 0; i < target; ++i) {
    frame = frame_in_segment(rod, i, frame, rod.segments[i].length, strain_columns);
    start += rod.segments[i].length;
  }
  return frame_in_segment(rod, target, frame, s - start, strain_columns);
}

Pose rod_pose(const PcsRod& rod, const Pose& base, double s) {
  const int target = rod.segment_at(s);
  Pose pose = base;
  double start = 0.0;
  for (int i = 0; i < target; ++i) {
    pose = pose * exp_se3(rod.segments[i].strain, rod.segments[i].length);
    start += rod.segments[i].length;
  }
  return pose * exp_se3(rod.segments[target].strain, s - start);
}

Twist rod_velocity(const PcsRod& rod, const Twist& base_velocity,
                   std::span<const Twist> strain_rates, double s) {
  check_rates(rod, strain_rates);
  const int target = rod.segment_at(s);
  Twist eta = base_velocity;
  double start = 0.0;
  for (int i = 0; i <= target; ++i) {
    const PcsSegment& seg = rod.segments[i];
    const double u = (i == target) ? s - start : seg.length;
    const Mat6 a_inv = exp_adjoint(seg.strain, -u);
    eta = a_inv * (eta + tangent_integral(seg.strain, u) * strain_rates[i]);
    start += seg.length;
  }
  return eta;
}

Matrix6X rod_jacobian(const PcsRod& rod, double s, bool active_only) {
  const auto cols = identity_columns(rod, active_only);
  return propagate_rod_frame(rod, fixed_base_frame(rod, Pose::identity()), cols, s).jacobian;
}

namespace {

// Integrates f(J, M_density) over the rod with a per-segment Gauss rule.
template <typename Fn>
void for_each_node(const PcsRod& rod, int order, std::span<const int> cols, Fn&& fn) {
  const QuadratureRule& rule = gauss_legendre(order);
  RodFrame start = fixed_base_frame(rod, Pose::identity());
  for (int i = 0; i < rod.segment_count(); ++i) {
    const PcsSegment& seg = rod.segments[i];
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
      const RodFrame node = frame_in_segment(rod, i, start, rule.nodes[k] * seg.length, cols);
      fn(i, k, node, rule.weights[k] * seg.length);
    }
    start = frame_in_segment(rod, i, start, seg.length, cols);
  }
}

}  // namespace

Eigen::MatrixXd rod_mass_matrix(const PcsRod& rod, int quadrature_order) {
  const int n = 6 * rod.segment_count();
  const auto cols = identity_columns(rod, false);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for_each_node(rod, quadrature_order, cols,
                [&](int i, std::size_t, const RodFrame& node, double w) {
                  m.noalias() += w * node.jacobian.transpose() *
                                 rod.segments[i].inertia_density * node.jacobian;
                });
  return 0.5 * (m + m.transpose());
}

Eigen::MatrixXd rod_coriolis(const PcsRod& rod, std::span<const Twist> strain_rates,
                             int quadrature_order) {
  check_rates(rod, strain_rates);
  const int n = 6 * rod.segment_count();
  const auto cols = identity_columns(rod, false);
  Eigen::VectorXd qdot(n);
  for (int i = 0; i < rod.segment_count(); ++i) qdot.segment<6>(6 * i) = strain_rates[i];

  const double h = kJacobianRateStep;
  const PcsRod plus = with_strain_offset(rod, strain_rates, h);
  const PcsRod minus = with_strain_offset(rod, strain_rates, -h);

  std::vector<Matrix6X> j_plus, j_minus;
  for_each_node(plus, quadrature_order, cols,
                [&](int, std::size_t, const RodFrame& node, double) {
                  j_plus.push_back(node.jacobian);
                });
  for_each_node(minus, quadrature_order, cols,
                [&](int, std::size_t, const RodFrame& node, double) {
                  j_minus.push_back(node.jacobian);
                });

  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, n);
  std::size_t idx = 0;
  for_each_node(rod, quadrature_order, cols,
                [&](int i, std::size_t, const RodFrame& node, double w) {
                  const Mat6& md = rod.segments[i].inertia_density;
                  const Matrix6X jdot = (j_plus[idx] - j_minus[idx]) / (2.0 * h);
                  const Twist eta = node.jacobian * qdot;
                  c.noalias() += w * node.jacobian.transpose() *
                                 (md * jdot - ad_se3(eta).transpose() * md * node.jacobian);
                  ++idx;
                });
  return c;
}

RodForce rod_passive_force(const PcsRod& rod, std::span<const Twist> strain_rates) {
  check_rates(rod, strain_rates);
  RodForce out{Eigen::VectorXd(6 * rod.segment_count()),
               std::vector<bool>(6 * rod.segment_count())};
  for (int i = 0; i < rod.segment_count(); ++i) {
    const PcsSegment& seg = rod.segments[i];
    out.generalized.segment<6>(6 * i) =
        seg.stiffness * (seg.neutral_strain - seg.strain) - seg.damping * strain_rates[i];
    for (int c = 0; c < 6; ++c) out.free[6 * i + c] = seg.active_mask[c];
  }
  return out;
}

double rod_elastic_energy(const PcsRod& rod) {
  double e = 0.0;
  for (const auto& seg : rod.segments) {
    const Twist d = seg.strain - seg.neutral_strain;
    e += 0.5 * d.dot(seg.stiffness * d);
  }
  return e;
}

Eigen::MatrixXd restrict_to_active(const PcsRod& rod, const Eigen::MatrixXd& full) {
  const auto cols = rod.active_columns();
  const int n = static_cast<int>(cols.size());
  const bool square = full.rows() == full.cols();
  Eigen::MatrixXd out(square ? n : full.rows(), n);
  for (int j = 0; j < n; ++j) {
    if (square) {
      for (int i = 0; i < n; ++i) out(i, j) = full(cols[i], cols[j]);
    } else {
      out.col(j) = full.col(cols[j]);
    }
  }
  return out;
}

}  // namespace hybridlink
