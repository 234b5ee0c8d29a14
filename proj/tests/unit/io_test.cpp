#include <cmath>
#include <filesystem>
#include <functional>
#include <string>

#include <gtest/gtest.h>

#include "hybridlink/contact_id.hpp"
#include "hybridlink/errors.hpp"
#include "hybridlink/io.hpp"
#include "hybridlink/synthetic.hpp"

namespace hybridlink {
namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::InvalidArgument;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

const char* kBox = R"({"mass": 2.0, "inertia_cog": [[0.1,0,0],[0,0.1,0],[0,0,0.1]]})";

std::string single_body() {
  return std::string(R"({"schema_version": 1, "bodies": [{"name": "base", "rigid": )") + kBox + "}]}";
}

std::string angular_rod(int segments) {
  std::string segs;
  for (int i = 0; i < segments; ++i) {
    if (i) segs += ",";
    segs += R"({"length": 0.1,
      "neutral_strain": {"angular": [0,0,0], "linear": [1,0,0]},
      "active": {"angular": [true,true,true], "linear": [false,false,false]},
      "section": {"youngs_modulus": 7e9, "shear_modulus": 3e8, "area": 6e-4,
                  "second_moment_y": 1e-8, "second_moment_z": 1.2e-8,
                  "torsion_constant": 3e-8, "density": 1600}})";
  }
  return std::string(R"({"schema_version": 1, "bodies": [
    {"name": "base", "rigid": )") + kBox + R"(},
    {"name": "blade", "parent": "base", "rod": {"segments": [)" + segs + "]}}]}";
}

TEST(ModelIo, SingleRigidBodyIsSixDof) {
  const HybridModel m = parse_model(single_body());
  EXPECT_EQ(m.dof(), 6);
  EXPECT_EQ(m.rigid_dof(), 0);
}

TEST(ModelIo, AngularStrainRodCountsThreePerSegment) {
  const HybridModel m = parse_model(angular_rod(6));
  EXPECT_EQ(m.strain_dof(), 18);
  EXPECT_EQ(m.dof(), 24);
}

TEST(ModelIo, DuplicateBodyNameIsRejected) {
  std::string doc = R"({"schema_version": 1, "bodies": [{"name": "a", "rigid": )";
  doc += kBox;
  doc += R"(}, {"name": "a", "parent": "a", "rigid": )";
  doc += kBox;
  doc += "}]}";
  EXPECT_EQ(code_of([&] { parse_model(doc); }), ErrorCode::ValidationError);
}

TEST(ModelIo, SyntaxErrorReportsLine) {
  const std::string doc = "{\n  \"schema_version\": 1,\n  \"bodies\": [,]\n}";
  EXPECT_EQ(code_of([&] { parse_model(doc, "m.json"); }), ErrorCode::ParseError);
  EXPECT_NE(message_of([&] { parse_model(doc, "m.json"); }).find("m.json:3:"), std::string::npos);
}

TEST(ModelIo, UnknownFieldIsNamedByPointer) {
  std::string doc = single_body();
  doc.insert(doc.find("\"mass\""), "\"mas\": 1, ");
  EXPECT_EQ(code_of([&] { parse_model(doc); }), ErrorCode::ParseError);
  EXPECT_NE(message_of([&] { parse_model(doc); }).find("/bodies/0/rigid"), std::string::npos);
}

TEST(ModelIo, WrongSchemaVersionIsRejected) {
  std::string doc = single_body();
  doc.replace(doc.find("1,"), 1, "2");
  EXPECT_EQ(code_of([&] { parse_model(doc); }), ErrorCode::ParseError);
}

TEST(ModelIo, ReferenceModelRoundTripsExactly) {
  const HybridModel m = reference_model();
  const std::string text = format_model(m);
  const HybridModel back = parse_model(text);
  EXPECT_EQ(format_model(back), text);
  EXPECT_EQ(back.dof(), m.dof());
  EXPECT_EQ(back.markers.size(), m.markers.size());
  EXPECT_EQ(back.contacts.size(), m.contacts.size());
  EXPECT_EQ(back.muscles.size(), m.muscles.size());
}

const std::filesystem::path kSource = HYBRIDLINK_SOURCE_DIR;

TEST(ModelIo, FixtureDocument) {
  const HybridModel m = load_model(kSource / "tests/fixtures/two_link_rod.json");
  EXPECT_EQ(m.rigid_dof(), 1);
  EXPECT_EQ(m.strain_dof(), 6);
  EXPECT_EQ(m.markers.size(), 6u);
  EXPECT_EQ(m.muscles[0].params.f_max, 800.0);
  EXPECT_EQ(m.contacts[0].mu, 0.6);
  EXPECT_EQ(m.contacts[1].mu, 0.8);
  EXPECT_EQ(contact_groups(m, nullptr), (std::vector<std::string>{"prosthesis", "pad"}));
  // Strain defaults to the neutral strain.
  EXPECT_EQ(m.bodies[2].rod().rod.segments[0].strain, m.bodies[2].rod().rod.segments[0].neutral_strain);
  EXPECT_EQ(parse_model(format_model(m)).dof(), 13);
}

TEST(ModelIo, ShippedReferenceModelMatchesTheBuiltIn) {
  const HybridModel shipped = load_model(kSource / "data/reference_model.json");
  EXPECT_EQ(format_model(shipped), format_model(reference_model()));
}

TEST(TableIo, NumbersRoundTripBitExactly) {
  Table t;
  t.columns = {"time", "a", "b"};
  t.rows = {{0.0, 0.1, -1.0 / 3.0}, {0.005, 1e-300, std::nan("")}, {0.01, 6.02214076e23, -0.0}};
  const Table back = parse_table(format_table(t));
  ASSERT_EQ(back.columns, t.columns);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      if (std::isnan(t.rows[r][c])) {
        EXPECT_TRUE(std::isnan(back.rows[r][c]));
      } else {
        EXPECT_EQ(back.rows[r][c], t.rows[r][c]);
      }
    }
  }
  EXPECT_EQ(format_table(back), format_table(t));
}

TEST(TableIo, MalformedRowsAreParseErrors) {
  EXPECT_EQ(code_of([] { parse_table("time,a\n0,1,2\n"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_table("time,a\n0,abc\n"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_table("time,a\n0,1\n").column("b"); }), ErrorCode::ParseError);
}

TEST(TableIo, TimeColumnMustBeUniform) {
  EXPECT_NEAR(table_dt(parse_table("time,a\n0,1\n0.01,2\n0.02,3\n")), 0.01, 1e-15);
  EXPECT_EQ(code_of([] { table_dt(parse_table("time,a\n0,1\n0.01,2\n0.03,3\n")); }),
            ErrorCode::ValidationError);
  EXPECT_EQ(code_of([] { table_dt(parse_table("time,a\n0,1\n0,2\n")); }),
            ErrorCode::ValidationError);
  EXPECT_EQ(code_of([] { table_dt(parse_table("t,a\n0,1\n")); }), ErrorCode::ParseError);
}

TEST(TableIo, StatesRoundTrip) {
  const HybridModel m = reference_model();
  SyntheticOptions o;
  o.duration = 0.05;
  const Dataset d = run_synthetic(m, Scenario::ScriptedGait, o);
  const std::vector<GeneralizedState> back = states_from_table(m, parse_table(format_table(states_table(m, d.times, d.states))));
  ASSERT_EQ(back.size(), d.states.size());
  for (std::size_t k = 0; k < back.size(); ++k) {
    EXPECT_EQ(back[k].base_pose.rotation, d.states[k].base_pose.rotation);
    EXPECT_EQ(back[k].base_pose.position, d.states[k].base_pose.position);
    EXPECT_EQ(back[k].qR, d.states[k].qR);
    EXPECT_EQ(back[k].qS, d.states[k].qS);
    EXPECT_EQ(back[k].psi, d.states[k].psi);
    EXPECT_EQ(back[k].psi_dot, d.states[k].psi_dot);
  }
}

TEST(TableIo, HiddenMarkersAreNan) {
  const HybridModel m = reference_model();
  MarkerFrame f;
  f.positions.assign(m.markers.size(), Vec3(1.0, 2.0, 3.0));
  f.visible.assign(m.markers.size(), true);
  f.visible[4] = false;
  const Table t = markers_table(m, {f});
  EXPECT_TRUE(std::isnan(t.rows[0][1 + 3 * 4]));
  const std::vector<MarkerFrame> back = markers_from_table(m, t);
  EXPECT_FALSE(back[0].visible[4]);
  EXPECT_TRUE(back[0].visible[5]);
  EXPECT_EQ(back[0].positions[5], Vec3(1.0, 2.0, 3.0));
}

}  // namespace
}  // namespace hybridlink
