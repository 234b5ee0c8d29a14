#include "hybridlink/model.hpp"

#include <cmath>
#include <set>
#include <string>

#include <Eigen/Eigenvalues>

#include "hybridlink/errors.hpp"

namespace hybridlink {

namespace {

void invalid(const std::string& what) { fail(ErrorCode::ValidationError, what); }

bool symmetric(const Eigen::MatrixXd& m, double tol = 1e-9) {
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * (1.0 + m.cwiseAbs().maxCoeff());
}

double min_eigenvalue(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()),
                                                     Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

void validate_link(const Body& body) {
  const RigidLink& link = body.link();
  const std::string where = "body '" + body.name + "': ";
  if (!(link.mass >= 0.0)) invalid(where + "mass must be >= 0");
  if (!symmetric(link.inertia_cog)) invalid(where + "inertia_cog must be symmetric");
  Eigen::SelfAdjointEigenSolver<Mat3> es(link.inertia_cog, Eigen::EigenvaluesOnly);
  const Vec3 ev = es.eigenvalues();
  const double tol = 1e-9 * (1.0 + ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() < -tol) invalid(where + "inertia_cog must be positive semidefinite");
  if (ev[0] + ev[1] < ev[2] - tol) invalid(where + "inertia_cog violates the triangle inequality");
  if (link.joint.has_dof() && std::abs(link.joint.axis.norm() - 1.0) > 1e-9) {
    invalid(where + "joint axis must be a unit vector");
  }
  if (!is_rotation(link.joint.parent_frame.rotation)) {
    invalid(where + "joint parent_frame rotation is not orthonormal");
  }
}

void validate_rod(Body& body) {
  RodLink& rl = body.rod();
  const std::string where = "rod '" + body.name + "': ";
  if (rl.rod.segments.empty()) invalid(where + "needs at least one segment");
  if (!is_rotation(rl.mount.rotation)) invalid(where + "mount rotation is not orthonormal");
  for (std::size_t i = 0; i < rl.rod.segments.size(); ++i) {
    PcsSegment& seg = rl.rod.segments[i];
    const std::string sw = where + "segment " + std::to_string(i) + ": ";
    if (!(seg.length > 0.0)) invalid(sw + "length must be > 0");
    if (!symmetric(seg.stiffness) || min_eigenvalue(seg.stiffness) < -1e-9) {
      invalid(sw + "stiffness must be symmetric positive semidefinite");
    }
    if (!symmetric(seg.damping) || min_eigenvalue(seg.damping) < -1e-9) {
      invalid(sw + "damping must be symmetric positive semidefinite");
    }
    if (!symmetric(seg.inertia_density) || min_eigenvalue(seg.inertia_density) <= 0.0) {
      invalid(sw + "inertia_density must be symmetric positive definite");
    }
    for (int c = 0; c < 6; ++c) {
      if (!seg.active_mask[c]) seg.strain[c] = seg.neutral_strain[c];
    }
  }
}

void validate_point(const HybridModel& model, const BodyPoint& p, const std::string& what) {
  if (p.body < 0 || p.body >= static_cast<int>(model.bodies.size())) {
    invalid(what + " references a missing body");
  }
  if (!p.local.allFinite()) invalid(what + " has a non-finite position");
  const Body& b = model.bodies[p.body];
  if (b.is_rod()) {
    const double len = b.rod().rod.total_length();
    if (!(p.arclength >= 0.0) || p.arclength > len * (1.0 + 1e-12)) {
      invalid(what + " arclength outside the rod");
    }
  }
}

}  // namespace

int HybridModel::body_index(std::string_view name) const {
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    if (bodies[i].name == name) return static_cast<int>(i);
  }
  fail(ErrorCode::UnknownBody, "unknown body '" + std::string(name) + "'");
}

double HybridModel::attachment_arclength(int body) const {
  const Body& b = bodies[body];
  if (b.parent < 0 || !bodies[b.parent].is_rod()) return 0.0;
  const double len = bodies[b.parent].rod().rod.total_length();
  return b.parent_arclength < 0.0 ? len : b.parent_arclength;
}

int HybridModel::add_rigid(std::string name, int parent, RigidLink link) {
  Body b;
  b.name = std::move(name);
  b.parent = parent;
  b.element = std::move(link);
  bodies.push_back(std::move(b));
  return static_cast<int>(bodies.size()) - 1;
}

int HybridModel::add_rod(std::string name, int parent, RodLink rod, double parent_arclength) {
  Body b;
  b.name = std::move(name);
  b.parent = parent;
  b.parent_arclength = parent_arclength;
  b.element = std::move(rod);
  bodies.push_back(std::move(b));
  return static_cast<int>(bodies.size()) - 1;
}

void HybridModel::finalize() {
  if (bodies.empty()) invalid("model has no bodies");
  if (bodies[0].parent != -1) invalid("the first body must be the floating base");
  if (bodies[0].is_rod()) invalid("the floating base must be a rigid link");
  if (!gravity.allFinite()) invalid("gravity must be finite");

  std::set<std::string> names;
  rigid_dof_ = 0;
  strain_dof_ = 0;
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    Body& b = bodies[i];
    if (b.name.empty()) invalid("body " + std::to_string(i) + " has no name");
    if (!names.insert(b.name).second) invalid("duplicate body name '" + b.name + "'");
    if (i > 0) {
      if (b.parent < 0) invalid("body '" + b.name + "' is a second root");
      if (b.parent >= static_cast<int>(i)) {
        invalid("body '" + b.name + "' must come after its parent");
      }
      const Body& parent = bodies[b.parent];
      if (parent.is_rod() && b.parent_arclength >= 0.0 &&
          b.parent_arclength > parent.rod().rod.total_length() * (1.0 + 1e-12)) {
        invalid("body '" + b.name + "' attaches beyond the end of its parent rod");
      }
    }
    b.joint_coord = -1;
    b.strain_offset = -1;
    if (b.is_rod()) {
      validate_rod(b);
      b.strain_offset = strain_dof_;
      strain_dof_ += b.rod().rod.active_dof();
    } else {
      validate_link(b);
      if (i > 0 && b.link().joint.has_dof()) b.joint_coord = rigid_dof_++;
    }
  }
  if (bodies[0].link().joint.has_dof()) invalid("the floating base cannot have a joint");

  for (std::size_t k = 0; k < markers.size(); ++k) {
    validate_point(*this, markers[k].at, "marker '" + markers[k].label + "'");
  }
  for (std::size_t k = 0; k < contacts.size(); ++k) {
    validate_point(*this, contacts[k].at, "contact '" + contacts[k].label + "'");
    if (!(contacts[k].mu > 0.0)) invalid("contact '" + contacts[k].label + "' needs mu > 0");
  }
  auto unique = [](const std::string& what, const auto& items, auto name_of) {
    std::set<std::string> seen;
    for (const auto& item : items) {
      const std::string& n = name_of(item);
      if (n.empty()) invalid(what + " with an empty name");
      if (!seen.insert(n).second) invalid("duplicate " + what + " '" + n + "'");
    }
  };
  unique("marker", markers, [](const Marker& m) -> const std::string& { return m.label; });
  unique("contact", contacts, [](const ContactPoint& c) -> const std::string& { return c.label; });
  unique("muscle", muscles, [](const MusclePath& m) -> const std::string& { return m.name; });
  for (const auto& m : muscles) {
    if (m.via_points.size() < 2) invalid("muscle '" + m.name + "' needs >= 2 via points");
    for (const auto& vp : m.via_points) validate_point(*this, vp, "muscle '" + m.name + "'");
    const MuscleParams& p = m.params;
    for (double v : {p.f_max, p.l_opt, p.width, p.v_max, p.tau_ac, p.tau_da, p.u_mvc,
                     p.fv_curvature}) {
      if (!(v > 0.0)) invalid("muscle '" + m.name + "' parameters must be positive");
    }
    if (!(p.fv_eccentric >= 1.0)) invalid("muscle '" + m.name + "' needs fv_eccentric >= 1");
  }
}

GeneralizedState GeneralizedState::initial(const HybridModel& model) {
  GeneralizedState s;
  s.qR = Eigen::VectorXd::Zero(model.rigid_dof());
  s.qS = Eigen::VectorXd::Zero(model.strain_dof());
  for (const Body& b : model.bodies) {
    if (!b.is_rod()) continue;
    const PcsRod& rod = b.rod().rod;
    s.qS.segment(b.strain_offset, rod.active_dof()) = rod.active_strain();
  }
  s.psi = Eigen::VectorXd::Zero(model.dof());
  s.psi_dot = Eigen::VectorXd::Zero(model.dof());
  return s;
}

Eigen::VectorXd GeneralizedState::coordinates() const {
  Eigen::VectorXd r(qR.size() + qS.size());
  r << qR, qS;
  return r;
}

void GeneralizedState::set_coordinates(const Eigen::VectorXd& r) {
  qR = r.head(qR.size());
  qS = r.tail(qS.size());
}

void check_dimensions(const HybridModel& model, const GeneralizedState& state) {
  auto bad = [](const char* what, long got, long want) {
    fail(ErrorCode::DimensionMismatch, std::string(what) + " has size " + std::to_string(got) +
                                           ", model expects " + std::to_string(want));
  };
  if (state.qR.size() != model.rigid_dof()) bad("qR", state.qR.size(), model.rigid_dof());
  if (state.qS.size() != model.strain_dof()) bad("qS", state.qS.size(), model.strain_dof());
  if (state.psi.size() != model.dof()) bad("psi", state.psi.size(), model.dof());
  if (state.psi_dot.size() != 0 && state.psi_dot.size() != model.dof()) {
    bad("psi_dot", state.psi_dot.size(), model.dof());
  }
}

}  // namespace hybridlink
