#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flywheel/orchestrator.hpp"

namespace flywheel {

// ---------------------------------------------------------------------------
// Datasets: one row per state, columns x0..x{d-1}, ctx_<name>..., split.

std::string dataset_to_csv(const ExpertDataset& data);
ExpertDataset dataset_from_csv(const std::string& text, const std::string& provenance = "csv");

/// Negative sets use the same layout without the split column.
std::string states_to_csv(const std::vector<StateVec>& states);
std::vector<StateVec> states_from_csv(const std::string& text);

// ---------------------------------------------------------------------------
// Heatmaps

struct Slice {
  std::size_t axis = 2;  // the fixed axis
  double value = 0.5;
};

struct Heatmap {
  std::size_t resolution = 0;
  std::size_t x_axis = 0;
  std::size_t y_axis = 1;
  std::vector<double> x;       // cell-center coordinates along x_axis
  std::vector<double> y;       // along y_axis
  std::vector<double> values;  // row-major: values[row * res + col], row indexes y
  double min = 0.0;
  double max = 0.0;
  std::optional<Slice> slice;

  nlohmann::json to_json() const;
  /// Long format: row,col,x,y,reward.
  std::string to_csv() const;
};

/// Rewards at cell centers over the domain box. d = 3 requires a slice.
Heatmap heatmap(const RewardArtifact& artifact, std::size_t resolution, const std::optional<Slice>& slice = std::nullopt);

// ---------------------------------------------------------------------------
// Session directories
//
//   config.json  session.json  world.json  constraints.json  data.csv
//   negatives_train.csv  negatives_holdout.csv  ensemble.json
//   artifacts/artifact_v<id>.json  lineage.json  sfkb.jsonl  reglib.json
//   clusters.json  refinements.json  reports/cycle_<i>.json

void save_session(const Session& s, const std::filesystem::path& dir);
/// Refuses (data error) with a diagnostic naming the missing or corrupt file.
Session load_session(const std::filesystem::path& dir);

/// Relative path -> file contents, exactly as save_session would write them.
std::map<std::string, std::string> session_files(const Session& s);
Session session_from_files(const std::map<std::string, std::string>& files);

/// Single-file JSON archive of a session directory. Refuses while a cycle
/// is running.
std::string export_session(const Session& s);
Session import_session(const std::string& archive);

nlohmann::json cluster_json(const FlawCluster& c, const SFKB& sfkb);

// ---------------------------------------------------------------------------
// Errors at the process boundary

/// 0 success, 1 usage, 2 verification failed / refused, 3 data error.
int exit_code(ErrorCode code);
int http_status(ErrorCode code);

}  // namespace flywheel
