// Command-line pipeline: simulate -> ik -> id -> muscle, plus validate.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hybridlink/contact_id.hpp"
#include "hybridlink/errors.hpp"
#include "hybridlink/ik.hpp"
#include "hybridlink/io.hpp"
#include "hybridlink/metrics.hpp"
#include "hybridlink/muscle.hpp"
#include "hybridlink/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hybridlink;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Options {
  std::string model;
  std::string input;
  std::string output;
  std::string truth;
  std::string states;
  std::string emg;
  std::string weights_file;
  std::string stance_mask;
  std::string scenario = "scripted-gait";
  std::string residuals;
  double dt = 1e-4;
  double mu = 0.0;
  double noise = 1e-3;
  double duration = -1.0;
  double rate = 200.0;
  double height_eps = 0.005;
  double speed_eps = 0.05;
  std::uint64_t seed = 0;
  int window = 5;
};

HybridModel model_from(const Options& o) {
  return o.model.empty() ? reference_model() : load_model(o.model);
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::ParseError, path + ": malformed JSON (byte " + std::to_string(e.byte) + ")");
  }
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  out << j.dump(2) << "\n";
}

// Weights file: {"ik": {...}, "id": {...}, "muscle": {...}}; every section optional.
struct Weights {
  json ik = json::object(), id = json::object(), muscle = json::object();
};

Weights read_weights(const std::string& path) {
  Weights w;
  if (path.empty()) return w;
  const json j = read_json(path);
  if (!j.is_object()) fail(ErrorCode::ParseError, path + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "ik") w.ik = it.value();
    else if (it.key() == "id") w.id = it.value();
    else if (it.key() == "muscle") w.muscle = it.value();
    else fail(ErrorCode::ParseError, path + ": unknown section '" + it.key() + "'");
  }
  return w;
}

double number_or(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) fail(ErrorCode::ParseError, std::string("weight '") + key + "' must be a number");
  return j.at(key).get<double>();
}

void check_keys(const json& j, const char* section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail(ErrorCode::ParseError, std::string("weights section '") + section + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    if (!ok) fail(ErrorCode::ParseError, std::string("unknown key '") + it.key() + "' in weights section '" + section + "'");
  }
}

Table contacts_table(const HybridModel& m, const std::vector<double>& times,
                     const std::vector<std::vector<Vec3>>& forces) {
  Table t;
  t.columns.push_back("time");
  for (const ContactPoint& c : m.contacts) {
    for (const char* a : {"_fx", "_fy", "_fz"}) t.columns.push_back(c.label + a);
  }
  for (std::size_t k = 0; k < times.size(); ++k) {
    std::vector<double> row{times[k]};
    for (const Vec3& f : forces[k]) row.insert(row.end(), {f.x(), f.y(), f.z()});
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::vector<double> times_of(const Table& t) {
  table_dt(t);
  return t.values("time");
}

double body_weight(const HybridModel& m) {
  double mass = 0.0;
  for (const Body& b : m.bodies) {
    if (b.is_rod()) {
      for (const PcsSegment& s : b.rod().rod.segments) mass += s.inertia_density(3, 3) * s.length;
    } else {
      mass += b.link().mass;
    }
  }
  return mass * m.gravity.norm();
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::IoError, "cannot create '" + dir.string() + "': " + ec.message());
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) fail(ErrorCode::InvalidArgument, std::string(flag) + " is required");
}

// ---------------------------------------------------------------------------

int run_export(const Options& o) {
  require(o.output, "--output");
  save_model(model_from(o), o.output);
  return 0;
}

int run_simulate(const Options& o) {
  require(o.output, "--output");
  const HybridModel m = model_from(o);
  SyntheticOptions so;
  so.duration = o.duration;
  so.sample_rate = o.rate;
  so.integration_dt = o.dt;
  so.noise_sigma = o.noise;
  so.seed = o.seed;
  const Dataset d = run_synthetic(m, parse_scenario(o.scenario), so);
  const fs::path dir(o.output);
  make_dir(dir);
  save_model(m, dir / "model.json");
  write_table(markers_table(m, d.markers), dir / "markers.csv");
  write_table(markers_table(m, d.clean_markers), dir / "markers_clean.csv");
  write_table(states_table(m, d.times, d.states), dir / "states.csv");
  write_table(grf_table(m, d.times, d.forces), dir / "grf.csv");
  write_table(contacts_table(m, d.times, d.forces), dir / "contacts.csv");
  write_table(torques_table(m, d.times, d.tauR, d.tauS), dir / "torques.csv");
  write_table(stance_table(m, d.times, d.grounded), dir / "stance.csv");
  return 0;
}

int run_ik(const Options& o) {
  require(o.input, "--input");
  require(o.output, "--output");
  const HybridModel m = model_from(o);
  const std::vector<MarkerFrame> frames = markers_from_table(m, read_table(o.input));
  const Weights w = read_weights(o.weights_file);
  check_keys(w.ik, "ik", {"markers", "default_marker", "damping", "max_iters", "tol_residual", "tol_step"});
  IkSettings s;
  const double def = number_or(w.ik, "default_marker", 1.0);
  s.w_residual = Eigen::VectorXd::Constant(static_cast<long>(m.markers.size()), def);
  if (w.ik.contains("markers")) {
    const json& mk = w.ik.at("markers");
    if (!mk.is_object()) fail(ErrorCode::ParseError, "ik.markers must map labels to weights");
    for (auto it = mk.begin(); it != mk.end(); ++it) {
      int idx = -1;
      for (std::size_t i = 0; i < m.markers.size(); ++i) {
        if (m.markers[i].label == it.key()) idx = static_cast<int>(i);
      }
      if (idx < 0) fail(ErrorCode::ValidationError, "weights name unknown marker '" + it.key() + "'");
      if (!it.value().is_number()) fail(ErrorCode::ParseError, "marker weight must be a number");
      s.w_residual[idx] = it.value().get<double>();
    }
  }
  if (w.ik.contains("damping")) {
    s.w_damping = Eigen::VectorXd::Constant(m.dof(), number_or(w.ik, "damping", 1e-9));
  }
  s.max_iters = static_cast<int>(number_or(w.ik, "max_iters", s.max_iters));
  s.tol_residual = number_or(w.ik, "tol_residual", s.tol_residual);
  s.tol_step = number_or(w.ik, "tol_step", s.tol_step);

  const IkSequence seq = ik_solve_sequence(m, frames, reference_standing_pose(m), s, o.window);
  write_table(states_table(m, seq.times, seq.states), o.output);
  if (!o.residuals.empty()) {
    Table t;
    t.columns = {"time", "residual_rms", "iterations", "converged"};
    for (std::size_t k = 0; k < seq.frames.size(); ++k) {
      const IkResult& r = seq.frames[k];
      t.rows.push_back({seq.times[k], r.residual_rms, static_cast<double>(r.iterations), r.converged ? 1.0 : 0.0});
    }
    write_table(t, o.residuals);
  }
  return 0;
}

int run_id(const Options& o) {
  require(o.input, "--input");
  require(o.output, "--output");
  const HybridModel m = model_from(o);
  const Table st = read_table(o.input);
  const std::vector<double> times = times_of(st);
  const std::vector<GeneralizedState> states = states_from_table(m, st);
  const Weights w = read_weights(o.weights_file);
  check_keys(w.id, "id", {"base", "actuated", "reg"});

  IdSequenceSettings s;
  s.weights.base = number_or(w.id, "base", s.weights.base);
  s.weights.actuated = number_or(w.id, "actuated", s.weights.actuated);
  s.weights.reg = number_or(w.id, "reg", s.weights.reg);
  if (o.mu > 0.0) s.mu_override = o.mu;
  s.height_eps = o.height_eps;
  s.speed_eps = o.speed_eps;
  if (!o.stance_mask.empty()) {
    const Table mask = read_table(o.stance_mask);
    if (mask.size() != st.size()) {
      fail(ErrorCode::DimensionMismatch, "stance mask and state table differ in length");
    }
    s.active_override = active_sets_from_table(m, mask);
  }
  const IdSequenceResult r = id_solve_sequence(m, states, s);

  const std::size_t n = states.size();
  std::vector<std::vector<Vec3>> forces(n);
  std::vector<Eigen::VectorXd> tauR(n), tauS(n);
  json failed = json::array();
  int max_iters = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const IdFrame& f = r.frames[k];
    if (f.ok) {
      forces[k] = f.solution.forces;
      tauR[k] = f.solution.tauR;
      tauS[k] = f.solution.tauS;
      max_iters = std::max(max_iters, f.solution.iterations);
    } else {
      forces[k].assign(m.contacts.size(), Vec3::Constant(kNaN));
      tauR[k] = Eigen::VectorXd::Constant(m.rigid_dof(), kNaN);
      tauS[k] = Eigen::VectorXd::Constant(m.strain_dof(), kNaN);
      failed.push_back({{"frame", k}, {"time", times[k]}, {"error", f.error}});
    }
  }
  const fs::path dir(o.output);
  make_dir(dir);
  write_table(grf_table(m, times, forces), dir / "grf.csv");
  write_table(contacts_table(m, times, forces), dir / "contacts.csv");
  write_table(torques_table(m, times, tauR, tauS), dir / "torques.csv");
  write_json({{"frames", n}, {"failed", failed}, {"max_qp_iterations", max_iters}}, dir / "report.json");
  if (!failed.empty()) {
    fail(ErrorCode::InfeasibleOrUnbounded,
         std::to_string(failed.size()) + " of " + std::to_string(n) + " frames failed; see report.json");
  }
  return 0;
}

int run_muscle(const Options& o) {
  require(o.input, "--input");
  require(o.states, "--states");
  require(o.output, "--output");
  const HybridModel m = model_from(o);
  if (m.muscles.empty()) fail(ErrorCode::ValidationError, "model has no muscles");
  const Table st = read_table(o.states);
  const Table tq = read_table(o.input);
  const std::vector<double> times = times_of(st);
  const std::vector<GeneralizedState> states = states_from_table(m, st);
  if (tq.size() != st.size()) fail(ErrorCode::DimensionMismatch, "torque and state tables differ in length");
  const Weights w = read_weights(o.weights_file);
  check_keys(w.muscle, "muscle", {"torque", "tension"});
  const std::vector<std::string> names = velocity_names(m);
  std::vector<int> tau_cols;
  for (int r = 0; r < m.rigid_dof(); ++r) tau_cols.push_back(tq.column("tau_" + names[6 + r]));

  std::optional<Table> emg;
  std::vector<int> emg_cols;
  if (!o.emg.empty()) {
    emg = read_table(o.emg);
    if (emg->size() != st.size()) fail(ErrorCode::DimensionMismatch, "EMG and state tables differ in length");
    for (const MusclePath& mp : m.muscles) emg_cols.push_back(emg->column(mp.name));
  }
  const double dt = table_dt(st);
  MuscleWeights mw;
  mw.torque = Eigen::VectorXd::Constant(m.rigid_dof(), number_or(w.muscle, "torque", 1.0));
  mw.tension = Eigen::VectorXd::Constant(static_cast<long>(m.muscles.size()),
                                         number_or(w.muscle, "tension", emg ? 1e-4 : 0.0));

  const int nm = static_cast<int>(m.muscles.size());
  Table out;
  out.columns.push_back("time");
  for (const MusclePath& mp : m.muscles) out.columns.push_back("f_" + mp.name);
  for (const MusclePath& mp : m.muscles) out.columns.push_back("fmax_" + mp.name);
  if (emg) {
    for (const MusclePath& mp : m.muscles) out.columns.push_back("act_" + mp.name);
  }
  std::vector<MuscleState> act(nm);
  for (std::size_t k = 0; k < states.size(); ++k) {
    Eigen::VectorXd tau(m.rigid_dof());
    for (int r = 0; r < m.rigid_dof(); ++r) tau[r] = tq.rows[k][tau_cols[r]];
    Eigen::VectorXd f_ref;
    if (emg) {
      const Kinematics kin(m, states[k]);
      const Eigen::VectorXd l_dot = muscle_jacobian(kin, m.muscles) * states[k].psi;
      f_ref.resize(nm);
      for (int i = 0; i < nm; ++i) {
        const MuscleParams& p = m.muscles[i].params;
        const double u = emg->rows[k][emg_cols[i]];
        if (k == 0) {
          act[i].activation = std::clamp(u / p.u_mvc, 0.0, 1.0);
        } else {
          act[i] = activation_step(p, act[i], u, dt);
        }
        f_ref[i] = hill_tension(p, act[i].activation, muscle_length(kin, m.muscles[i]), l_dot[i]);
      }
    }
    const MuscleSolution sol = muscle_optimize(m, states[k], tau, m.muscles, f_ref, mw);
    std::vector<double> row{times[k]};
    for (int i = 0; i < nm; ++i) row.push_back(sol.tension[i]);
    for (int i = 0; i < nm; ++i) row.push_back(sol.f_max[i]);
    if (emg) {
      for (int i = 0; i < nm; ++i) row.push_back(act[i].activation);
    }
    out.rows.push_back(std::move(row));
  }
  write_table(out, o.output);
  return 0;
}

int run_validate(const Options& o) {
  require(o.input, "--input");
  require(o.truth, "--truth");
  const Table est = read_table(o.input);
  const Table truth = read_table(o.truth);
  table_dt(est);
  table_dt(truth);
  if (est.size() != truth.size()) fail(ErrorCode::DimensionMismatch, "estimate and truth differ in length");
  for (std::size_t k = 0; k < est.size(); ++k) {
    if (std::abs(est.rows[k][0] - truth.rows[k][0]) > 1e-9) {
      fail(ErrorCode::ValidationError, "estimate and truth times differ at row " + std::to_string(k + 1));
    }
  }
  std::vector<bool> mask;
  if (!o.stance_mask.empty()) {
    const Table st = read_table(o.stance_mask);
    if (st.size() != truth.size()) fail(ErrorCode::DimensionMismatch, "stance mask and truth differ in length");
    for (const auto& row : st.rows) {
      bool any = false;
      for (std::size_t c = 1; c < row.size(); ++c) any = any || row[c] != 0.0;
      mask.push_back(any);
    }
  }
  json columns = json::object();
  for (std::size_t c = 1; c < truth.columns.size(); ++c) {
    const std::string& name = truth.columns[c];
    if (est.find(name) < 0) continue;
    const std::vector<double> e = est.values(name), t = truth.values(name);
    json entry;
    double max_err = 0.0, sum_t = 0.0, sum_sq = 0.0;
    int n = 0;
    for (std::size_t k = 0; k < t.size(); ++k) {
      if (!mask.empty() && !mask[k]) continue;
      max_err = std::max(max_err, std::abs(e[k] - t[k]));
      sum_sq += (e[k] - t[k]) * (e[k] - t[k]);
      sum_t += t[k];
      ++n;
    }
    if (n == 0) fail(ErrorCode::InvalidArgument, "the stance mask selects no frames");
    entry["rmse"] = std::sqrt(sum_sq / n);
    try {
      entry["rrmse"] = compute_rrmse(e, t, mask).rrmse;
      entry["degenerate_range"] = false;
    } catch (const Error& err) {
      if (err.code() != ErrorCode::DegenerateRange) throw;
      entry["rrmse"] = nullptr;
      entry["degenerate_range"] = true;
    }
    entry["max_abs_error"] = max_err;
    entry["mean_truth"] = sum_t / n;
    if (std::abs(sum_t / n) > 0.0) entry["relative_error_pct"] = 100.0 * std::sqrt(sum_sq / n) / std::abs(sum_t / n);
    entry["samples"] = n;
    columns[name] = entry;
  }
  json report = {{"frames", truth.size()},
                 {"window_frames", mask.empty() ? truth.size()
                                                : static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true))},
                 {"columns", columns}};
  report["body_weight"] = body_weight(model_from(o));
  if (o.output.empty()) {
    std::cout << report.dump(2) << "\n";
  } else {
    write_json(report, o.output);
  }
  return 0;
}

void error_record(const std::string& command, const std::string& code, const std::string& message) {
  const json rec = {{"error", {{"command", command}, {"code", code}, {"message", message}}}};
  std::cerr << rec.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hybridlink: motion analysis of hybrid rigid and soft-rod bodies"};
  app.require_subcommand(1);
  Options o;

  auto model_opt = [&](CLI::App* c) {
    c->add_option("--model", o.model, "Model document (default: built-in reference model)");
  };
  auto weights_opt = [&](CLI::App* c) {
    c->add_option("--weights-file", o.weights_file, "JSON weights file");
  };

  CLI::App* sim = app.add_subcommand("simulate", "Generate a synthetic dataset");
  model_opt(sim);
  sim->add_option("--scenario", o.scenario, "static, pendulum-drop or scripted-gait")->capture_default_str();
  sim->add_option("--output", o.output, "Output directory")->required();
  sim->add_option("--seed", o.seed, "Marker noise seed")->capture_default_str();
  sim->add_option("--noise", o.noise, "Marker noise sigma [m]")->capture_default_str();
  sim->add_option("--duration", o.duration, "Duration [s] (default per scenario)");
  sim->add_option("--rate", o.rate, "Sample rate [Hz]")->capture_default_str();
  sim->add_option("--dt", o.dt, "Integration step [s]")->capture_default_str();

  CLI::App* ik = app.add_subcommand("ik", "Markers -> state trajectory");
  model_opt(ik);
  weights_opt(ik);
  ik->add_option("--input", o.input, "Marker table")->required();
  ik->add_option("--output", o.output, "State table")->required();
  ik->add_option("--residuals", o.residuals, "Optional per-frame residual table");
  ik->add_option("--window", o.window, "Moving-average window for rates")->capture_default_str();

  CLI::App* id = app.add_subcommand("id", "State trajectory -> torques and contact forces");
  model_opt(id);
  weights_opt(id);
  id->add_option("--input", o.input, "State table")->required();
  id->add_option("--output", o.output, "Output directory")->required();
  id->add_option("--mu", o.mu, "Friction coefficient for every contact (default: model values)");
  id->add_option("--stance-mask", o.stance_mask, "Stance table selecting active contacts per frame");
  id->add_option("--height-eps", o.height_eps, "Contact height threshold [m]")->capture_default_str();
  id->add_option("--speed-eps", o.speed_eps, "Contact speed threshold [m/s]")->capture_default_str();

  CLI::App* mus = app.add_subcommand("muscle", "Joint torques (+ EMG) -> muscle tensions");
  model_opt(mus);
  weights_opt(mus);
  mus->add_option("--input", o.input, "Torque table")->required();
  mus->add_option("--states", o.states, "State table")->required();
  mus->add_option("--emg", o.emg, "EMG table, one column per muscle");
  mus->add_option("--output", o.output, "Tension table")->required();

  CLI::App* val = app.add_subcommand("validate", "Estimate vs truth -> metrics report");
  model_opt(val);
  val->add_option("--input", o.input, "Estimated table")->required();
  val->add_option("--truth", o.truth, "Ground-truth table")->required();
  val->add_option("--stance-mask", o.stance_mask, "Stance table; frames with any contact form the window");
  val->add_option("--output", o.output, "Report path (default: stdout)");

  CLI::App* exp = app.add_subcommand("model", "Write the model document (reference model by default)");
  model_opt(exp);
  exp->add_option("--output", o.output, "Model document path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help() << "\n";
    error_record("", "UsageError", e.what());
    return 2;
  }

  CLI::App* cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();
  try {
    if (cmd == sim) return run_simulate(o);
    if (cmd == ik) return run_ik(o);
    if (cmd == id) return run_id(o);
    if (cmd == mus) return run_muscle(o);
    if (cmd == val) return run_validate(o);
    if (cmd == exp) return run_export(o);
  } catch (const Error& e) {
    error_record(name, to_string(e.code()), e.what());
    return 1;
  } catch (const std::exception& e) {
    error_record(name, "InternalError", e.what());
    return 1;
  }
  return 1;
}
