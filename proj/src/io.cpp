#include "hybridlink/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <optional>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hybridlink/contact_id.hpp"
#include "hybridlink/errors.hpp"

namespace hybridlink {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// JSON reading with the field path kept for error messages.

class Field {
 public:
  Field(const json& value, std::string pointer, const std::string& source)
      : v_(value), ptr_(std::move(pointer)), source_(source) {}

  [[noreturn]] void error(const std::string& what) const {
    fail(ErrorCode::ParseError, source_ + ": " + (ptr_.empty() ? "/" : ptr_) + ": " + what);
  }

  const json& value() const { return v_; }
  const std::string& pointer() const { return ptr_; }

  Field at(const std::string& key) const {
    if (!v_.contains(key)) error("missing field '" + key + "'");
    return {v_.at(key), ptr_ + "/" + key, source_};
  }
  Field at(std::size_t i) const { return {v_.at(i), ptr_ + "/" + std::to_string(i), source_}; }
  bool has(const std::string& key) const { return v_.contains(key) && !v_.at(key).is_null(); }

  // Objects may only carry the listed keys, so misspelled fields are caught.
  void object(std::initializer_list<const char*> allowed) const {
    if (!v_.is_object()) error("expected an object");
    for (auto it = v_.begin(); it != v_.end(); ++it) {
      bool ok = false;
      for (const char* k : allowed) ok = ok || it.key() == k;
      if (!ok) error("unknown field '" + it.key() + "'");
    }
  }
  std::size_t array(std::optional<std::size_t> size = {}) const {
    if (!v_.is_array()) error("expected an array");
    if (size && v_.size() != *size) error("expected " + std::to_string(*size) + " entries");
    return v_.size();
  }

  double number() const {
    if (!v_.is_number()) error("expected a number");
    const double d = v_.get<double>();
    if (!std::isfinite(d)) error("expected a finite number");
    return d;
  }
  double number(const std::string& key, double fallback) const {
    return has(key) ? at(key).number() : fallback;
  }
  bool boolean() const {
    if (!v_.is_boolean()) error("expected true or false");
    return v_.get<bool>();
  }
  std::string string() const {
    if (!v_.is_string()) error("expected a string");
    return v_.get<std::string>();
  }
  template <int N>
  Eigen::Matrix<double, N, 1> vector() const {
    array(N);
    Eigen::Matrix<double, N, 1> out;
    for (int i = 0; i < N; ++i) out[i] = at(i).number();
    return out;
  }
  template <int N>
  Eigen::Matrix<double, N, N> matrix() const {
    array(N);
    Eigen::Matrix<double, N, N> out;
    for (int r = 0; r < N; ++r) out.row(r) = at(r).vector<N>().transpose();
    return out;
  }

 private:
  const json& v_;
  std::string ptr_;
  const std::string& source_;
};

// The single place where twists and 6x6 blocks meet the document: twists are
// written as {"angular", "linear"} and matrices row by row in the same order.
Twist read_twist(const Field& f) {
  f.object({"angular", "linear"});
  return make_twist(f.at("angular").vector<3>(), f.at("linear").vector<3>());
}

json write_twist(const Twist& t) {
  return {{"angular", {t[0], t[1], t[2]}}, {"linear", {t[3], t[4], t[5]}}};
}

StrainMask read_mask(const Field& f) {
  f.object({"angular", "linear"});
  StrainMask m{};
  for (int part = 0; part < 2; ++part) {
    const Field p = f.at(part == 0 ? "angular" : "linear");
    p.array(3);
    for (int i = 0; i < 3; ++i) m[3 * part + i] = p.at(i).boolean();
  }
  return m;
}

json write_mask(const StrainMask& m) {
  return {{"angular", {m[0], m[1], m[2]}}, {"linear", {m[3], m[4], m[5]}}};
}

template <class M>
json write_matrix(const M& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

json write_vec3(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

Pose read_pose(const Field& f) {
  f.object({"rotation", "position"});
  Pose p;
  if (f.has("rotation")) p.rotation = f.at("rotation").matrix<3>();
  if (f.has("position")) p.position = f.at("position").vector<3>();
  if (!is_rotation(p.rotation)) {
    fail(ErrorCode::ValidationError, f.pointer() + "/rotation is not a rotation matrix");
  }
  return p;
}

json write_pose(const Pose& p) {
  return {{"rotation", write_matrix(p.rotation)}, {"position", write_vec3(p.position)}};
}

JointKind read_joint_kind(const Field& f) {
  const std::string s = f.string();
  if (s == "fixed") return JointKind::Fixed;
  if (s == "revolute") return JointKind::Revolute;
  if (s == "prismatic") return JointKind::Prismatic;
  f.error("joint type must be fixed, revolute or prismatic");
}

const char* joint_kind_name(JointKind k) {
  switch (k) {
    case JointKind::Fixed: return "fixed";
    case JointKind::Revolute: return "revolute";
    case JointKind::Prismatic: return "prismatic";
  }
  return "fixed";
}

RigidLink read_rigid(const Field& f) {
  f.object({"mass", "inertia_cog", "cog", "joint"});
  RigidLink l;
  l.mass = f.at("mass").number();
  l.inertia_cog = f.at("inertia_cog").matrix<3>();
  if (f.has("cog")) l.cog_offset = f.at("cog").vector<3>();
  if (f.has("joint")) {
    const Field j = f.at("joint");
    j.object({"type", "axis", "frame"});
    l.joint.kind = read_joint_kind(j.at("type"));
    if (j.has("axis")) l.joint.axis = j.at("axis").vector<3>();
    if (j.has("frame")) l.joint.parent_frame = read_pose(j.at("frame"));
  }
  return l;
}

json write_rigid(const RigidLink& l) {
  return {{"mass", l.mass},
          {"inertia_cog", write_matrix(l.inertia_cog)},
          {"cog", write_vec3(l.cog_offset)},
          {"joint",
           {{"type", joint_kind_name(l.joint.kind)},
            {"axis", write_vec3(l.joint.axis)},
            {"frame", write_pose(l.joint.parent_frame)}}}};
}

PcsSegment read_segment(const Field& f) {
  f.object({"length", "strain", "neutral_strain", "active", "stiffness", "damping",
            "inertia_density", "section"});
  const double length = f.at("length").number();
  const Twist neutral = read_twist(f.at("neutral_strain"));
  const StrainMask mask = f.has("active") ? read_mask(f.at("active")) : kAllStrains;
  PcsSegment seg;
  if (f.has("section")) {
    if (f.has("stiffness") || f.has("damping") || f.has("inertia_density")) {
      f.error("give either 'section' or explicit matrices, not both");
    }
    const Field s = f.at("section");
    s.object({"youngs_modulus", "shear_modulus", "area", "second_moment_y", "second_moment_z",
              "torsion_constant", "density", "damping_ratio"});
    BeamSection b;
    b.youngs_modulus = s.at("youngs_modulus").number();
    b.shear_modulus = s.at("shear_modulus").number();
    b.area = s.at("area").number();
    b.second_moment_y = s.at("second_moment_y").number();
    b.second_moment_z = s.at("second_moment_z").number();
    b.torsion_constant = s.at("torsion_constant").number();
    b.density = s.at("density").number();
    b.damping_ratio = s.number("damping_ratio", 0.0);
    seg = uniform_beam_segment(length, b, neutral, mask);
  } else {
    seg.length = length;
    seg.neutral_strain = neutral;
    seg.active_mask = mask;
    seg.stiffness = f.at("stiffness").matrix<6>();
    seg.damping = f.has("damping") ? f.at("damping").matrix<6>() : Mat6::Zero();
    seg.inertia_density = f.at("inertia_density").matrix<6>();
  }
  seg.strain = f.has("strain") ? read_twist(f.at("strain")) : neutral;
  return seg;
}

json write_segment(const PcsSegment& s) {
  return {{"length", s.length},
          {"strain", write_twist(s.strain)},
          {"neutral_strain", write_twist(s.neutral_strain)},
          {"active", write_mask(s.active_mask)},
          {"stiffness", write_matrix(s.stiffness)},
          {"damping", write_matrix(s.damping)},
          {"inertia_density", write_matrix(s.inertia_density)}};
}

class BodyNames {
 public:
  explicit BodyNames(const HybridModel& m) : m_(m) {}
  int operator()(const Field& f) const {
    const std::string name = f.string();
    for (std::size_t i = 0; i < m_.bodies.size(); ++i) {
      if (m_.bodies[i].name == name) return static_cast<int>(i);
    }
    fail(ErrorCode::ValidationError, f.pointer() + ": unknown body '" + name + "'");
  }

 private:
  const HybridModel& m_;
};

BodyPoint read_point(const Field& f, const BodyNames& bodies) {
  BodyPoint p;
  p.body = bodies(f.at("body"));
  if (f.has("position")) p.local = f.at("position").vector<3>();
  p.arclength = f.number("arclength", 0.0);
  return p;
}

json write_point(const HybridModel& m, const BodyPoint& p) {
  return {{"body", m.bodies[p.body].name},
          {"position", write_vec3(p.local)},
          {"arclength", p.arclength}};
}

MuscleParams read_params(const Field& f) {
  f.object({"f_max", "l_opt", "width", "v_max", "tau_ac", "tau_da", "u_mvc", "fv_curvature",
            "fv_eccentric"});
  MuscleParams p;
  p.f_max = f.number("f_max", p.f_max);
  p.l_opt = f.number("l_opt", p.l_opt);
  p.width = f.number("width", p.width);
  p.v_max = f.number("v_max", p.v_max);
  p.tau_ac = f.number("tau_ac", p.tau_ac);
  p.tau_da = f.number("tau_da", p.tau_da);
  p.u_mvc = f.number("u_mvc", p.u_mvc);
  p.fv_curvature = f.number("fv_curvature", p.fv_curvature);
  p.fv_eccentric = f.number("fv_eccentric", p.fv_eccentric);
  return p;
}

json write_params(const MuscleParams& p) {
  return {{"f_max", p.f_max},   {"l_opt", p.l_opt},   {"width", p.width},
          {"v_max", p.v_max},   {"tau_ac", p.tau_ac}, {"tau_da", p.tau_da},
          {"u_mvc", p.u_mvc},   {"fv_curvature", p.fv_curvature},
          {"fv_eccentric", p.fv_eccentric}};
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) fail(ErrorCode::IoError, "write to '" + path.string() + "' failed");
}

std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

HybridModel parse_model(std::string_view text, const std::string& source) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte == 0 ? 0 : e.byte - 1);
    fail(ErrorCode::ParseError, source + ":" + std::to_string(line) + ":" + std::to_string(col) +
                                    ": malformed JSON");
  }
  const Field root(doc, "", source);
  root.object({"schema_version", "gravity", "bodies", "markers", "contacts", "muscles"});
  const Field version = root.at("schema_version");
  if (!version.value().is_number_integer() || version.value().get<int>() != kModelSchemaVersion) {
    version.error("unsupported schema_version (expected " + std::to_string(kModelSchemaVersion) +
                  ")");
  }

  HybridModel m;
  if (root.has("gravity")) m.gravity = root.at("gravity").vector<3>();

  // Bodies may reference parents by name only once those are declared.
  const Field bodies = root.at("bodies");
  const std::size_t nb = bodies.array();
  for (std::size_t i = 0; i < nb; ++i) {
    const Field b = bodies.at(i);
    b.object({"name", "parent", "parent_arclength", "rigid", "rod"});
    Body body;
    body.name = b.at("name").string();
    if (b.has("parent")) {
      const Field pf = b.at("parent");
      const std::string parent = pf.string();
      body.parent = -2;
      for (std::size_t k = 0; k < m.bodies.size(); ++k) {
        if (m.bodies[k].name == parent) body.parent = static_cast<int>(k);
      }
      if (body.parent == -2) {
        fail(ErrorCode::ValidationError,
             pf.pointer() + ": parent '" + parent + "' is not declared before this body");
      }
    }
    body.parent_arclength = b.number("parent_arclength", -1.0);
    if (b.has("rigid") == b.has("rod")) b.error("a body needs exactly one of 'rigid' or 'rod'");
    if (b.has("rigid")) {
      body.element = read_rigid(b.at("rigid"));
    } else {
      const Field r = b.at("rod");
      r.object({"mount", "segments"});
      RodLink rl;
      if (r.has("mount")) rl.mount = read_pose(r.at("mount"));
      const Field segs = r.at("segments");
      const std::size_t ns = segs.array();
      for (std::size_t k = 0; k < ns; ++k) rl.rod.segments.push_back(read_segment(segs.at(k)));
      body.element = std::move(rl);
    }
    m.bodies.push_back(std::move(body));
  }

  const BodyNames names(m);
  if (root.has("markers")) {
    const Field arr = root.at("markers");
    for (std::size_t i = 0, n = arr.array(); i < n; ++i) {
      const Field f = arr.at(i);
      f.object({"label", "body", "position", "arclength"});
      m.markers.push_back({read_point(f, names), f.at("label").string()});
    }
  }
  if (root.has("contacts")) {
    const Field arr = root.at("contacts");
    for (std::size_t i = 0, n = arr.array(); i < n; ++i) {
      const Field f = arr.at(i);
      f.object({"label", "body", "position", "arclength", "mu", "group"});
      ContactPoint c;
      c.at = read_point(f, names);
      c.label = f.at("label").string();
      c.mu = f.number("mu", c.mu);
      if (f.has("group")) c.group = f.at("group").string();
      m.contacts.push_back(c);
    }
  }
  if (root.has("muscles")) {
    const Field arr = root.at("muscles");
    for (std::size_t i = 0, n = arr.array(); i < n; ++i) {
      const Field f = arr.at(i);
      f.object({"name", "path", "params", "wrap"});
      // Reserved for wrapping surfaces; only via-point paths exist today.
      if (f.has("wrap")) f.at("wrap").error("wrapping surfaces are not supported");
      MusclePath mp;
      mp.name = f.at("name").string();
      const Field path = f.at("path");
      for (std::size_t k = 0, np = path.array(); k < np; ++k) {
        const Field p = path.at(k);
        p.object({"body", "position", "arclength"});
        mp.via_points.push_back(read_point(p, names));
      }
      if (f.has("params")) mp.params = read_params(f.at("params"));
      m.muscles.push_back(std::move(mp));
    }
  }
  m.finalize();
  return m;
}

HybridModel load_model(const std::filesystem::path& path) {
  return parse_model(read_file(path), path.string());
}

std::string format_model(const HybridModel& m) {
  json doc;
  doc["schema_version"] = kModelSchemaVersion;
  doc["gravity"] = write_vec3(m.gravity);
  json bodies = json::array();
  for (const Body& b : m.bodies) {
    json jb;
    jb["name"] = b.name;
    jb["parent"] = b.parent < 0 ? json(nullptr) : json(m.bodies[b.parent].name);
    if (b.parent_arclength >= 0.0) jb["parent_arclength"] = b.parent_arclength;
    if (b.is_rod()) {
      json segs = json::array();
      for (const PcsSegment& s : b.rod().rod.segments) segs.push_back(write_segment(s));
      jb["rod"] = {{"mount", write_pose(b.rod().mount)}, {"segments", segs}};
    } else {
      jb["rigid"] = write_rigid(b.link());
    }
    bodies.push_back(jb);
  }
  doc["bodies"] = bodies;
  json markers = json::array();
  for (const Marker& mk : m.markers) {
    json j = write_point(m, mk.at);
    j["label"] = mk.label;
    markers.push_back(j);
  }
  doc["markers"] = markers;
  json contacts = json::array();
  for (const ContactPoint& c : m.contacts) {
    json j = write_point(m, c.at);
    j["label"] = c.label;
    j["mu"] = c.mu;
    j["group"] = c.group;
    contacts.push_back(j);
  }
  doc["contacts"] = contacts;
  json muscles = json::array();
  for (const MusclePath& mp : m.muscles) {
    json path = json::array();
    for (const BodyPoint& p : mp.via_points) path.push_back(write_point(m, p));
    muscles.push_back({{"name", mp.name}, {"path", path}, {"params", write_params(mp.params)}});
  }
  doc["muscles"] = muscles;
  return doc.dump(2) + "\n";
}

void save_model(const HybridModel& model, const std::filesystem::path& path) {
  write_file(path, format_model(model));
}

// ---------------------------------------------------------------------------
// Tables

int Table::find(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return static_cast<int>(i);
  }
  return -1;
}

int Table::column(std::string_view name) const {
  const int c = find(name);
  if (c < 0) fail(ErrorCode::ParseError, "table has no column '" + std::string(name) + "'");
  return c;
}

std::vector<double> Table::values(std::string_view name) const {
  const int c = column(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[c]);
  return out;
}

Table parse_table(std::string_view text, const std::string& source) {
  Table t;
  std::size_t line_no = 0, pos = 0;
  auto where = [&] { return source + ":" + std::to_string(line_no); };
  auto split = [](std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      out.push_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    return out;
  };
  auto trim = [](std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
  };
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split(line);
    if (t.columns.empty()) {
      std::set<std::string> seen;
      for (std::string_view f : fields) {
        const std::string name(trim(f));
        if (name.empty()) fail(ErrorCode::ParseError, where() + ": empty column name");
        if (!seen.insert(name).second) {
          fail(ErrorCode::ParseError, where() + ": duplicate column '" + name + "'");
        }
        t.columns.push_back(name);
      }
      continue;
    }
    if (fields.size() != t.columns.size()) {
      fail(ErrorCode::ParseError, where() + ": expected " + std::to_string(t.columns.size()) +
                                      " fields, found " + std::to_string(fields.size()));
    }
    std::vector<double> row(fields.size());
    for (std::size_t i = 0; i < fields.size(); ++i) {
      const std::string_view f = trim(fields[i]);
      if (f.empty()) {
        row[i] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      const char* first = f.data() + (f.front() == '+' ? 1 : 0);
      const auto [ptr, ec] = std::from_chars(first, f.data() + f.size(), row[i]);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        fail(ErrorCode::ParseError, where() + ": column '" + t.columns[i] + "': '" +
                                        std::string(f) + "' is not a number");
      }
    }
    t.rows.push_back(std::move(row));
  }
  if (t.columns.empty()) fail(ErrorCode::ParseError, source + ": missing header row");
  return t;
}

Table read_table(const std::filesystem::path& path) {
  return parse_table(read_file(path), path.string());
}

std::string format_table(const Table& t) {
  std::string out;
  for (std::size_t i = 0; i < t.columns.size(); ++i) {
    if (i) out += ',';
    out += t.columns[i];
  }
  out += '\n';
  char buf[64];
  for (const auto& row : t.rows) {
    if (row.size() != t.columns.size()) {
      fail(ErrorCode::DimensionMismatch, "table row width differs from the header");
    }
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      if (std::isnan(row[i])) {
        out += "nan";
        continue;
      }
      const auto res = std::to_chars(buf, buf + sizeof buf, row[i], std::chars_format::general, 17);
      out.append(buf, res.ptr);
    }
    out += '\n';
  }
  return out;
}

void write_table(const Table& table, const std::filesystem::path& path) {
  write_file(path, format_table(table));
}

double table_dt(const Table& t) {
  if (t.columns.empty() || t.columns[0] != "time") {
    fail(ErrorCode::ParseError, "the first column must be 'time'");
  }
  if (t.rows.empty()) fail(ErrorCode::ParseError, "table has no rows");
  if (t.rows.size() == 1) return 0.0;
  std::vector<double> times;
  for (const auto& r : t.rows) times.push_back(r[0]);
  for (std::size_t k = 1; k < times.size(); ++k) {
    if (!(times[k] > times[k - 1])) {
      fail(ErrorCode::ValidationError, "time is not strictly increasing at row " + std::to_string(k + 1));
    }
  }
  try {
    return uniform_step(times);
  } catch (const Error& e) {
    fail(ErrorCode::ValidationError, e.what());
  }
}

// ---------------------------------------------------------------------------
// Named layouts

namespace {

const char* const kTwistNames[6] = {"wx", "wy", "wz", "vx", "vy", "vz"};

std::vector<std::string> coordinate_names(const HybridModel& m) {
  const std::vector<std::string> v = velocity_names(m);
  return {v.begin() + 6, v.end()};
}

void check_time(const Table& t) { table_dt(t); }

Table with_times(const std::vector<double>& times, std::vector<std::string> columns) {
  Table t;
  t.columns.push_back("time");
  for (auto& c : columns) t.columns.push_back(std::move(c));
  for (double time : times) {
    std::vector<double> row(t.columns.size(), 0.0);
    row[0] = time;
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace

std::vector<std::string> velocity_names(const HybridModel& m) {
  std::vector<std::string> names;
  for (const char* c : kTwistNames) names.push_back(std::string("base_") + c);
  for (const Body& b : m.bodies) {
    if (!b.is_rod() && b.joint_coord >= 0) names.push_back(b.name);
  }
  for (const Body& b : m.bodies) {
    if (!b.is_rod()) continue;
    for (int col : b.rod().rod.active_columns()) {
      names.push_back(b.name + "_" + std::to_string(col / 6) + "_" + kTwistNames[col % 6]);
    }
  }
  return names;
}

Table markers_table(const HybridModel& m, const std::vector<MarkerFrame>& frames) {
  std::vector<std::string> cols;
  for (const Marker& mk : m.markers) {
    for (const char* a : {"_x", "_y", "_z"}) cols.push_back(mk.label + a);
  }
  std::vector<double> times;
  for (const MarkerFrame& f : frames) times.push_back(f.time);
  Table t = with_times(times, cols);
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const MarkerFrame& f = frames[k];
    if (f.positions.size() != m.markers.size()) {
      fail(ErrorCode::DimensionMismatch, "marker frame has the wrong marker count");
    }
    for (std::size_t i = 0; i < f.positions.size(); ++i) {
      const bool seen = f.visible.empty() || f.visible[i];
      for (int a = 0; a < 3; ++a) {
        t.rows[k][1 + 3 * i + a] = seen ? f.positions[i][a] : std::numeric_limits<double>::quiet_NaN();
      }
    }
  }
  return t;
}

std::vector<MarkerFrame> markers_from_table(const HybridModel& m, const Table& t) {
  check_time(t);
  std::vector<std::array<int, 3>> cols;
  for (const Marker& mk : m.markers) {
    cols.push_back({t.column(mk.label + "_x"), t.column(mk.label + "_y"), t.column(mk.label + "_z")});
  }
  std::vector<MarkerFrame> frames;
  for (const auto& row : t.rows) {
    MarkerFrame f;
    f.time = row[0];
    bool all = true;
    for (const auto& c : cols) {
      const Vec3 p(row[c[0]], row[c[1]], row[c[2]]);
      const bool seen = p.allFinite();
      all = all && seen;
      f.positions.push_back(seen ? p : Vec3::Zero());
      f.visible.push_back(seen);
    }
    if (all) f.visible.clear();
    frames.push_back(std::move(f));
  }
  return frames;
}

Table states_table(const HybridModel& m, const std::vector<double>& times,
                   const std::vector<GeneralizedState>& states) {
  if (times.size() != states.size()) fail(ErrorCode::DimensionMismatch, "one time per state");
  std::vector<std::string> cols;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) cols.push_back("base_r" + std::to_string(r) + std::to_string(c));
  }
  for (const char* a : {"base_px", "base_py", "base_pz"}) cols.push_back(a);
  for (const std::string& n : coordinate_names(m)) cols.push_back("q_" + n);
  const std::vector<std::string> vn = velocity_names(m);
  for (const std::string& n : vn) cols.push_back("v_" + n);
  for (const std::string& n : vn) cols.push_back("a_" + n);
  Table t = with_times(times, cols);
  const int n = m.dof();
  for (std::size_t k = 0; k < states.size(); ++k) {
    const GeneralizedState& s = states[k];
    check_dimensions(m, s);
    auto& row = t.rows[k];
    int c = 1;
    for (int r = 0; r < 3; ++r) {
      for (int cc = 0; cc < 3; ++cc) row[c++] = s.base_pose.rotation(r, cc);
    }
    for (int a = 0; a < 3; ++a) row[c++] = s.base_pose.position[a];
    const Eigen::VectorXd q = s.coordinates();
    for (int i = 0; i < q.size(); ++i) row[c++] = q[i];
    for (int i = 0; i < n; ++i) row[c++] = s.psi[i];
    for (int i = 0; i < n; ++i) row[c++] = s.psi_dot.size() ? s.psi_dot[i] : 0.0;
  }
  return t;
}

std::vector<GeneralizedState> states_from_table(const HybridModel& m, const Table& t) {
  check_time(t);
  std::vector<int> pose_cols;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) pose_cols.push_back(t.column("base_r" + std::to_string(r) + std::to_string(c)));
  }
  for (const char* a : {"base_px", "base_py", "base_pz"}) pose_cols.push_back(t.column(a));
  std::vector<int> q_cols, v_cols, a_cols;
  for (const std::string& n : coordinate_names(m)) q_cols.push_back(t.column("q_" + n));
  for (const std::string& n : velocity_names(m)) {
    v_cols.push_back(t.column("v_" + n));
    a_cols.push_back(t.column("a_" + n));
  }
  std::vector<GeneralizedState> out;
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    const auto& row = t.rows[k];
    for (double v : row) {
      if (!std::isfinite(v)) {
        fail(ErrorCode::ParseError, "state table row " + std::to_string(k + 1) + " has a missing value");
      }
    }
    GeneralizedState s = GeneralizedState::initial(m);
    for (int i = 0; i < 9; ++i) s.base_pose.rotation(i / 3, i % 3) = row[pose_cols[i]];
    for (int a = 0; a < 3; ++a) s.base_pose.position[a] = row[pose_cols[9 + a]];
    if (!is_rotation(s.base_pose.rotation, 1e-8)) {
      fail(ErrorCode::ValidationError, "state table row " + std::to_string(k + 1) +
                                           ": base rotation is not orthonormal");
    }
    Eigen::VectorXd q(q_cols.size());
    for (std::size_t i = 0; i < q_cols.size(); ++i) q[i] = row[q_cols[i]];
    s.set_coordinates(q);
    for (std::size_t i = 0; i < v_cols.size(); ++i) {
      s.psi[i] = row[v_cols[i]];
      s.psi_dot[i] = row[a_cols[i]];
    }
    out.push_back(std::move(s));
  }
  return out;
}

Table torques_table(const HybridModel& m, const std::vector<double>& times,
                    const std::vector<Eigen::VectorXd>& tauR,
                    const std::vector<Eigen::VectorXd>& tauS) {
  if (tauR.size() != times.size() || tauS.size() != times.size()) {
    fail(ErrorCode::DimensionMismatch, "one torque vector per time");
  }
  std::vector<std::string> cols;
  for (const std::string& n : coordinate_names(m)) cols.push_back("tau_" + n);
  Table t = with_times(times, cols);
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (tauR[k].size() != m.rigid_dof() || tauS[k].size() != m.strain_dof()) {
      fail(ErrorCode::DimensionMismatch, "torque vector has the wrong size");
    }
    for (int i = 0; i < m.rigid_dof(); ++i) t.rows[k][1 + i] = tauR[k][i];
    for (int i = 0; i < m.strain_dof(); ++i) t.rows[k][1 + m.rigid_dof() + i] = tauS[k][i];
  }
  return t;
}

Table grf_table(const HybridModel& m, const std::vector<double>& times,
                const std::vector<std::vector<Vec3>>& forces) {
  if (forces.size() != times.size()) fail(ErrorCode::DimensionMismatch, "one force set per time");
  std::vector<int> group_of;
  std::vector<std::string> groups = contact_groups(m, &group_of);
  groups.push_back("net");
  std::vector<std::string> cols;
  for (const std::string& g : groups) {
    for (const char* a : {"_fx", "_fy", "_fz"}) cols.push_back(g + a);
  }
  Table t = with_times(times, cols);
  const int net = static_cast<int>(groups.size()) - 1;
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (forces[k].size() != m.contacts.size()) {
      fail(ErrorCode::DimensionMismatch, "force set needs one entry per contact");
    }
    for (std::size_t c = 0; c < forces[k].size(); ++c) {
      for (int a = 0; a < 3; ++a) {
        t.rows[k][1 + 3 * group_of[c] + a] += forces[k][c][a];
        t.rows[k][1 + 3 * net + a] += forces[k][c][a];
      }
    }
  }
  return t;
}

Table stance_table(const HybridModel& m, const std::vector<double>& times,
                   const std::vector<std::vector<bool>>& grounded) {
  if (grounded.size() != times.size()) fail(ErrorCode::DimensionMismatch, "one stance row per time");
  std::vector<std::string> cols;
  for (const ContactPoint& c : m.contacts) cols.push_back(c.label);
  Table t = with_times(times, cols);
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (grounded[k].size() != m.contacts.size()) {
      fail(ErrorCode::DimensionMismatch, "stance row needs one entry per contact");
    }
    for (std::size_t c = 0; c < grounded[k].size(); ++c) t.rows[k][1 + c] = grounded[k][c] ? 1.0 : 0.0;
  }
  return t;
}

std::vector<std::vector<int>> active_sets_from_table(const HybridModel& m, const Table& t) {
  check_time(t);
  std::vector<int> cols;
  for (const ContactPoint& c : m.contacts) cols.push_back(t.column(c.label));
  std::vector<std::vector<int>> out;
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    std::vector<int> active;
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const double v = t.rows[k][cols[c]];
      if (v != 0.0 && v != 1.0) {
        fail(ErrorCode::ParseError, "stance table row " + std::to_string(k + 1) + ": column '" +
                                        m.contacts[c].label + "' must be 0 or 1");
      }
      if (v == 1.0) active.push_back(static_cast<int>(c));
    }
    out.push_back(std::move(active));
  }
  return out;
}

}  // namespace hybridlink
