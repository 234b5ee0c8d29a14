// Python bindings. Vectors and matrices cross as NumPy arrays; poses as 4x4
// homogeneous matrices; per-point data as (n, 3) arrays.

#include <optional>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hybridlink/conic_qp.hpp"
#include "hybridlink/contact_id.hpp"
#include "hybridlink/dynamics.hpp"
#include "hybridlink/errors.hpp"
#include "hybridlink/ik.hpp"
#include "hybridlink/io.hpp"
#include "hybridlink/metrics.hpp"
#include "hybridlink/muscle.hpp"
#include "hybridlink/se3.hpp"
#include "hybridlink/synthetic.hpp"

namespace py = pybind11;
using namespace hybridlink;

namespace {

using RowsX3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

Mat4 to_matrix(const Pose& p) {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = p.rotation;
  m.topRightCorner<3, 1>() = p.position;
  return m;
}

Pose from_matrix(const Mat4& m) {
  if (!is_rotation(m.topLeftCorner<3, 3>())) {
    fail(ErrorCode::InvalidArgument, "pose rotation block is not a rotation matrix");
  }
  return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
}

RowsX3 to_rows(const std::vector<Vec3>& v) {
  RowsX3 out(v.size(), 3);
  for (std::size_t i = 0; i < v.size(); ++i) out.row(i) = v[i].transpose();
  return out;
}

std::vector<Vec3> from_rows(const RowsX3& m) {
  std::vector<Vec3> out(m.rows());
  for (long i = 0; i < m.rows(); ++i) out[i] = m.row(i).transpose();
  return out;
}

// (frames, points, 3) array from per-frame point lists.
py::array_t<double> stack(const std::vector<std::vector<Vec3>>& frames, std::size_t points) {
  py::array_t<double> out({frames.size(), points, std::size_t{3}});
  auto r = out.mutable_unchecked<3>();
  for (std::size_t k = 0; k < frames.size(); ++k) {
    for (std::size_t i = 0; i < points; ++i) {
      for (int a = 0; a < 3; ++a) r(k, i, a) = frames[k][i][a];
    }
  }
  return out;
}

Eigen::MatrixXd stack_rows(const std::vector<Eigen::VectorXd>& v, long cols) {
  Eigen::MatrixXd out(v.size(), cols);
  for (std::size_t k = 0; k < v.size(); ++k) out.row(k) = v[k].transpose();
  return out;
}

std::vector<std::string> labels(const auto& items, auto field) {
  std::vector<std::string> out;
  for (const auto& it : items) out.push_back(it.*field);
  return out;
}

MarkerFrame marker_frame(const HybridModel& m, const RowsX3& positions) {
  if (positions.rows() != static_cast<long>(m.markers.size())) {
    fail(ErrorCode::DimensionMismatch, "expected one row per model marker");
  }
  MarkerFrame f;
  for (long i = 0; i < positions.rows(); ++i) {
    const Vec3 p = positions.row(i).transpose();
    f.positions.push_back(p.allFinite() ? p : Vec3::Zero());
    f.visible.push_back(p.allFinite());
  }
  return f;
}

py::dict solution_dict(const ContactSolution& s) {
  py::dict d;
  d["tauR"] = s.tauR;
  d["tauS"] = s.tauS;
  d["tauS_passive"] = s.tauS_passive;
  d["forces"] = to_rows(s.forces);
  d["active_contacts"] = s.active_contacts;
  d["residual"] = s.residual_dynamics;
  d["iterations"] = s.iterations;
  return d;
}

}  // namespace

PYBIND11_MODULE(_hybridlink, mod) {
  mod.doc() = "Kinematics, dynamics and motion analysis of hybrid rigid and soft-rod bodies";

  py::exception<Error>(mod, "Error", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object cls = py::module_::import("hybridlink._hybridlink").attr("Error");
      py::object inst = cls(e.what());
      inst.attr("code") = to_string(e.code());
      PyErr_SetObject(cls.ptr(), inst.ptr());
    }
  });

  // SE(3) kernels. Twists are (angular, linear).
  mod.def("exp_se3", [](const Twist& x, double s) { return to_matrix(exp_se3(x, s)); },
          py::arg("twist"), py::arg("arclength") = 1.0);
  mod.def("log_se3", [](const Mat4& m) { return log_se3(from_matrix(m)); }, py::arg("pose"));
  mod.def("exp_adjoint", &exp_adjoint, py::arg("twist"), py::arg("arclength") = 1.0);
  mod.def("tangent_integral", &tangent_integral, py::arg("twist"), py::arg("arclength") = 1.0);
  mod.def("ad_se3", &ad_se3, py::arg("twist"));
  mod.def("adjoint", [](const Mat4& m) { return adjoint(from_matrix(m)); }, py::arg("pose"));

  py::class_<HybridModel>(mod, "Model")
      .def_property_readonly("dof", &HybridModel::dof)
      .def_property_readonly("rigid_dof", &HybridModel::rigid_dof)
      .def_property_readonly("strain_dof", &HybridModel::strain_dof)
      .def_property_readonly("body_names", [](const HybridModel& m) { return labels(m.bodies, &Body::name); })
      .def_property_readonly("marker_labels", [](const HybridModel& m) { return labels(m.markers, &Marker::label); })
      .def_property_readonly("contact_labels",
                             [](const HybridModel& m) { return labels(m.contacts, &ContactPoint::label); })
      .def_property_readonly("contact_groups", [](const HybridModel& m) { return contact_groups(m, nullptr); })
      .def_property_readonly("muscle_names", [](const HybridModel& m) { return labels(m.muscles, &MusclePath::name); })
      .def_property_readonly("velocity_names", [](const HybridModel& m) { return velocity_names(m); })
      .def_property_readonly("gravity", [](const HybridModel& m) { return m.gravity; })
      .def("to_json", [](const HybridModel& m) { return format_model(m); })
      .def("save", [](const HybridModel& m, const std::string& path) { save_model(m, path); }, py::arg("path"))
      .def("__repr__", [](const HybridModel& m) {
        return "<hybridlink.Model dof=" + std::to_string(m.dof()) + " bodies=" + std::to_string(m.bodies.size()) + ">";
      });

  mod.def("reference_model", &reference_model);
  mod.def("load_model", [](const std::string& path) { return load_model(path); }, py::arg("path"));
  mod.def("parse_model", [](const std::string& text) { return parse_model(text); }, py::arg("text"));

  py::class_<GeneralizedState>(mod, "State")
      .def(py::init([](const HybridModel& m) { return GeneralizedState::initial(m); }), py::arg("model"))
      .def_property(
          "base_pose", [](const GeneralizedState& s) { return to_matrix(s.base_pose); },
          [](GeneralizedState& s, const Mat4& m) { s.base_pose = from_matrix(m); })
      .def_readwrite("qR", &GeneralizedState::qR)
      .def_readwrite("qS", &GeneralizedState::qS)
      .def_readwrite("psi", &GeneralizedState::psi)
      .def_readwrite("psi_dot", &GeneralizedState::psi_dot)
      .def("copy", [](const GeneralizedState& s) { return s; });

  mod.def("standing_pose", &reference_standing_pose, py::arg("model"),
          "Pose with the lowest contact on z = 0 and zero motion.");

  mod.def(
      "marker_positions",
      [](const HybridModel& m, const GeneralizedState& s) {
        const Kinematics kin(m, s);
        std::vector<Vec3> out;
        for (const Marker& mk : m.markers) out.push_back(kin.point_position(mk.at));
        return to_rows(out);
      },
      py::arg("model"), py::arg("state"));
  mod.def(
      "contact_positions",
      [](const HybridModel& m, const GeneralizedState& s) {
        const Kinematics kin(m, s);
        std::vector<Vec3> out;
        for (const ContactPoint& c : m.contacts) out.push_back(kin.point_position(c.at));
        return to_rows(out);
      },
      py::arg("model"), py::arg("state"));
  mod.def(
      "mass_matrix", [](const HybridModel& m, const GeneralizedState& s) { return mass_matrix(m, s); },
      py::arg("model"), py::arg("state"));
  mod.def(
      "bias_vector", [](const HybridModel& m, const GeneralizedState& s) { return bias_vector(m, s); },
      py::arg("model"), py::arg("state"));
  mod.def(
      "energy",
      [](const HybridModel& m, const GeneralizedState& s) {
        return kinetic_energy(m, s) + gravity_potential(m, s) + elastic_potential(m, s);
      },
      py::arg("model"), py::arg("state"), "Kinetic plus gravitational plus elastic energy.");
  mod.def(
      "forward_dynamics",
      [](const HybridModel& m, const GeneralizedState& s, std::optional<Eigen::VectorXd> tauR,
         std::optional<Eigen::VectorXd> tauS, std::optional<RowsX3> forces) {
        Actuation a;
        if (tauR) a.tauR = *tauR;
        if (tauS) a.tauS = *tauS;
        if (forces) a.contact_forces = from_rows(*forces);
        return forward_dynamics(m, s, a);
      },
      py::arg("model"), py::arg("state"), py::arg("tauR") = py::none(), py::arg("tauS") = py::none(),
      py::arg("forces") = py::none());

  mod.def(
      "ik_solve",
      [](const HybridModel& m, const RowsX3& markers, std::optional<GeneralizedState> q_init,
         std::optional<Eigen::VectorXd> marker_weights) {
        IkSettings s;
        if (marker_weights) s.w_residual = *marker_weights;
        const IkResult r = ik_solve_frame(m, marker_frame(m, markers),
                                          q_init ? *q_init : reference_standing_pose(m), s);
        py::dict d;
        d["state"] = r.state;
        d["residual_rms"] = r.residual_rms;
        d["iterations"] = r.iterations;
        d["converged"] = r.converged;
        return d;
      },
      py::arg("model"), py::arg("markers"), py::arg("q_init") = py::none(),
      py::arg("marker_weights") = py::none(),
      "Fit one frame of (n_markers, 3) positions; NaN rows are hidden markers.");

  mod.def(
      "id_solve",
      [](const HybridModel& m, const GeneralizedState& s, std::vector<int> active,
         std::optional<double> mu) {
        IdProblem p;
        p.state = s;
        p.active_contacts = std::move(active);
        p.mu_override = mu;
        return solution_dict(id_solve(m, p));
      },
      py::arg("model"), py::arg("state"), py::arg("active_contacts"), py::arg("mu") = py::none());

  mod.def(
      "muscle_optimize",
      [](const HybridModel& m, const GeneralizedState& s, const Eigen::VectorXd& tauR,
         std::optional<Eigen::VectorXd> f_ref, double tension_weight) {
        MuscleWeights w;
        if (tension_weight > 0.0) {
          w.tension = Eigen::VectorXd::Constant(static_cast<long>(m.muscles.size()), tension_weight);
        }
        const MuscleSolution sol = muscle_optimize(m, s, tauR, m.muscles, f_ref ? *f_ref : Eigen::VectorXd(), w);
        py::dict d;
        d["tension"] = sol.tension;
        d["f_max"] = sol.f_max;
        d["residual"] = sol.residual;
        d["rows"] = sol.rows;
        return d;
      },
      py::arg("model"), py::arg("state"), py::arg("tauR"), py::arg("f_ref") = py::none(),
      py::arg("tension_weight") = 0.0);

  mod.def(
      "compute_rrmse",
      [](const std::vector<double>& est, const std::vector<double>& truth, std::vector<bool> mask) {
        const ErrorMetrics e = compute_rrmse(est, truth, mask);
        return py::make_tuple(e.rmse, e.rrmse);
      },
      py::arg("estimate"), py::arg("truth"), py::arg("mask") = std::vector<bool>{},
      "(RMSE, rRMSE in percent of the mean range).");

  mod.def(
      "qp_solve",
      [](const Eigen::MatrixXd& h, const Eigen::VectorXd& c, std::optional<Eigen::VectorXd> lower,
         std::optional<Eigen::VectorXd> upper, std::vector<std::tuple<int, int, int, double>> cones) {
        QpProblem p;
        p.hessian = h;
        p.linear = c;
        if (lower) p.lower = *lower;
        if (upper) p.upper = *upper;
        for (const auto& [i, j, k, mu] : cones) p.cones.push_back({{i, j, k}, mu});
        const QpResult r = qp_solve(p);
        py::dict d;
        d["x"] = r.x;
        d["status"] = to_string(r.status);
        d["iterations"] = r.iterations;
        return d;
      },
      py::arg("hessian"), py::arg("linear"), py::arg("lower") = py::none(), py::arg("upper") = py::none(),
      py::arg("cones") = std::vector<std::tuple<int, int, int, double>>{},
      "min 1/2 x'Hx + c'x over box bounds and cones (i, j, k, mu): |(x_i, x_j)| <= mu x_k.");

  mod.def(
      "simulate",
      [](const std::string& scenario, double duration, double rate, double noise, std::uint64_t seed) {
        const HybridModel m = reference_model();
        SyntheticOptions o;
        o.duration = duration;
        o.sample_rate = rate;
        o.noise_sigma = noise;
        o.seed = seed;
        const Dataset d = run_synthetic(m, parse_scenario(scenario), o);
        std::vector<std::vector<Vec3>> markers, clean;
        for (const MarkerFrame& f : d.markers) markers.push_back(f.positions);
        for (const MarkerFrame& f : d.clean_markers) clean.push_back(f.positions);
        Eigen::MatrixXd grounded(d.times.size(), m.contacts.size());
        for (std::size_t k = 0; k < d.times.size(); ++k) {
          for (std::size_t c = 0; c < m.contacts.size(); ++c) grounded(k, c) = d.grounded[k][c] ? 1.0 : 0.0;
        }
        py::dict out;
        out["model"] = m;
        out["times"] = d.times;
        out["states"] = d.states;
        out["markers"] = stack(markers, m.markers.size());
        out["clean_markers"] = stack(clean, m.markers.size());
        out["forces"] = stack(d.forces, m.contacts.size());
        out["grounded"] = grounded;
        out["tauR"] = stack_rows(d.tauR, m.rigid_dof());
        out["tauS"] = stack_rows(d.tauS, m.strain_dof());
        out["tauS_active"] = stack_rows(d.tauS_active, m.strain_dof());
        return out;
      },
      py::arg("scenario") = "scripted-gait", py::arg("duration") = -1.0, py::arg("rate") = 200.0,
      py::arg("noise") = 1e-3, py::arg("seed") = 0,
      "Synthetic dataset on the reference model: static, pendulum-drop or scripted-gait.");
}
