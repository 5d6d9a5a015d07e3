#pragma once

#include "filtstab/chain_core.hpp"
#include "filtstab/duality.hpp"
#include "filtstab/montecarlo.hpp"
#include "filtstab/simulate.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace filtstab {

nlohmann::json to_json(const MeanEstimate& e);
nlohmann::json to_json(const BoundReport& b);
nlohmann::json to_json(const MartingaleDiagnostic& d);
nlohmann::json to_json(const PiConstants& pc);

/// Shortest round-trip decimal form; identical input gives identical text.
std::string format_number(double v);

/// Comma-separated table with a header row.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns);
  void add_row(const std::vector<double>& row);
  std::size_t rows() const { return rows_; }
  const std::string& text() const { return text_; }

 private:
  std::size_t width_;
  std::size_t rows_ = 0;
  std::string text_;
};

/// Columns t, pi_1..pi_d, then beta_t and gamma moments when supplied.
/// gamma_moments holds pi^mu(gamma) - 1 per grid point.
CsvTable trajectory_table(const FilterTrajectory& traj, const BetaPath* beta = nullptr,
                          const std::vector<double>* gamma_moments = nullptr);

/// Per-trial trajectory files plus manifest.json with seeds and scheme tags.
struct TrajectoryDump {
  std::uint64_t seed = 0;
  std::size_t trial = 0;
  std::string file;
  const FilterTrajectory* trajectory = nullptr;
  const BetaPath* beta = nullptr;
  const std::vector<double>* gamma_moments = nullptr;
};

void write_trajectories(const std::filesystem::path& dir, const std::vector<TrajectoryDump>& dumps);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace filtstab
