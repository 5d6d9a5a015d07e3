#include "filtstab/report.hpp"

#include "filtstab/model_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace filtstab {

nlohmann::json to_json(const MeanEstimate& e) {
  return {{"mean", e.mean}, {"standard_error", e.standard_error}, {"n", e.n}};
}

nlohmann::json to_json(const BoundReport& b) {
  nlohmann::json j = {{"inequality", b.inequality}, {"lhs", b.lhs},         {"rhs", b.rhs},
                      {"tolerance", b.tolerance},   {"slack", b.slack()},   {"verdict", b.verdict},
                      {"horizon", b.horizon},       {"n_trials", b.n_trials}, {"gating", b.gating}};
  if (!b.note.empty()) j["note"] = b.note;
  return j;
}

nlohmann::json to_json(const MartingaleDiagnostic& d) {
  return {{"label", d.label},
          {"window", {d.window_start, d.window_end}},
          {"increment_mean", d.increment_mean},
          {"standard_error", d.standard_error},
          {"n_trials", d.n_trials},
          {"verdict", d.verdict},
          {"gating", !d.informational}};
}

nlohmann::json to_json(const PiConstants& pc) {
  nlohmann::json certified = nlohmann::json::object();
  for (const auto& [name, value] : pc.certified()) certified[name] = value;
  nlohmann::json j = {{"standard_c0", pc.standard_c0},
                      {"min_column_sum", pc.min_column_sum},
                      {"geometric_mean_min", pc.geometric_mean_min},
                      {"doeblin", pc.doeblin},
                      {"min_row_average", pc.min_row_average},
                      {"certified", certified}};
  const auto best = pc.best_certified();
  j["best_certified"] = best ? nlohmann::json(*best) : nlohmann::json(nullptr);
  return j;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

CsvTable::CsvTable(std::vector<std::string> columns) : width_(columns.size()) {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) text_ += ',';
    text_ += columns[i];
  }
  text_ += '\n';
}

void CsvTable::add_row(const std::vector<double>& row) {
  if (row.size() != width_) throw std::invalid_argument("csv: row width does not match the header");
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) text_ += ',';
    text_ += format_number(row[i]);
  }
  text_ += '\n';
  ++rows_;
}

CsvTable trajectory_table(const FilterTrajectory& traj, const BetaPath* beta, const std::vector<double>* gamma_moments) {
  const Index d = traj.distributions.cols();
  const std::size_t n = traj.grid.steps + 1;
  if (beta && beta->values.size() != n) throw std::invalid_argument("trajectory csv: beta path length differs");
  if (gamma_moments && gamma_moments->size() != n) throw std::invalid_argument("trajectory csv: gamma moments length differs");
  std::vector<std::string> cols{"t"};
  for (Index x = 0; x < d; ++x) cols.push_back("pi_" + std::to_string(x + 1));
  if (beta) cols.push_back(std::string("beta_") + beta_kind_name(beta->kind));
  if (gamma_moments) cols.push_back("var_gamma");
  CsvTable table(cols);
  std::vector<double> row;
  for (std::size_t k = 0; k < n; ++k) {
    row.assign(1, traj.grid.time(k));
    for (Index x = 0; x < d; ++x) row.push_back(traj.distributions(static_cast<Index>(k), x));
    if (beta) row.push_back(beta->values[k]);
    if (gamma_moments) row.push_back((*gamma_moments)[k]);
    table.add_row(row);
  }
  return table;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_trajectories(const std::filesystem::path& dir, const std::vector<TrajectoryDump>& dumps) {
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& dump : dumps) {
    if (!dump.trajectory) throw std::invalid_argument("trajectory dump without a trajectory");
    write_text_file(dir / dump.file, trajectory_table(*dump.trajectory, dump.beta, dump.gamma_moments).text());
    manifest.push_back({{"file", dump.file},
                        {"seed", dump.seed},
                        {"trial", dump.trial},
                        {"scheme", dump.trajectory->scheme},
                        {"dt", dump.trajectory->grid.dt},
                        {"steps", dump.trajectory->grid.steps},
                        {"prior", to_json(dump.trajectory->prior)}});
  }
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace filtstab
