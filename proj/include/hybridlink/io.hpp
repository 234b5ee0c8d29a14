#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "hybridlink/ik.hpp"
#include "hybridlink/model.hpp"

namespace hybridlink {

inline constexpr int kModelSchemaVersion = 1;

/// JSON model document -> validated model. Syntax errors and malformed fields
/// throw ParseError naming the line or the JSON pointer of the field; broken
/// model invariants throw ValidationError.
HybridModel parse_model(std::string_view text, const std::string& source = "<memory>");
HybridModel load_model(const std::filesystem::path& path);
std::string format_model(const HybridModel& model);
void save_model(const HybridModel& model, const std::filesystem::path& path);

/// Comma-separated numeric table with a header row. Empty fields read as NaN.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  int find(std::string_view name) const;    // -1 when absent
  int column(std::string_view name) const;  // throws ParseError when absent
  std::vector<double> values(std::string_view name) const;
  std::size_t size() const { return rows.size(); }
};

Table parse_table(std::string_view text, const std::string& source = "<memory>");
Table read_table(const std::filesystem::path& path);
/// Numbers are written with 17 significant digits so they parse back exactly.
std::string format_table(const Table& table);
void write_table(const Table& table, const std::filesystem::path& path);

/// Checks the leading "time" column (strictly increasing, uniform within
/// 1e-9 s) and returns the sample period; 0 for a single row.
double table_dt(const Table& table);

/// Names of the psi columns: base_wx..base_vz, joint bodies, <rod>_<segment>_<component>.
std::vector<std::string> velocity_names(const HybridModel& model);

/// time, <label>_x/_y/_z per marker; hidden markers are NaN.
Table markers_table(const HybridModel& model, const std::vector<MarkerFrame>& frames);
std::vector<MarkerFrame> markers_from_table(const HybridModel& model, const Table& table);

/// time, base pose (base_r00..base_r22, base_px..base_pz), q_<coordinate>,
/// v_<psi column> and a_<psi column>.
Table states_table(const HybridModel& model, const std::vector<double>& times,
                   const std::vector<GeneralizedState>& states);
std::vector<GeneralizedState> states_from_table(const HybridModel& model, const Table& table);

/// time, tau_<coordinate> for every joint and strain coordinate.
Table torques_table(const HybridModel& model, const std::vector<double>& times,
                    const std::vector<Eigen::VectorXd>& tauR,
                    const std::vector<Eigen::VectorXd>& tauS);

/// time, <group>_fx/_fy/_fz per contact group, then net_fx/_fy/_fz.
Table grf_table(const HybridModel& model, const std::vector<double>& times,
                const std::vector<std::vector<Vec3>>& contact_forces);

/// time, one 0/1 column per contact label.
Table stance_table(const HybridModel& model, const std::vector<double>& times,
                   const std::vector<std::vector<bool>>& grounded);
/// Active contact indices per row of a stance table.
std::vector<std::vector<int>> active_sets_from_table(const HybridModel& model, const Table& table);

}  // namespace hybridlink
