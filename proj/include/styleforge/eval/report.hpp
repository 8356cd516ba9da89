#pragma once

#include <string>
#include <vector>

#include "styleforge/eval/metrics.hpp"

namespace styleforge::eval {

inline constexpr int kReportVersion = 1;

// One row per step; the first line declares the format and version.
std::string trajectory_csv(const Trajectory& traj);
// One row per model with a fixed column order.
std::string metrics_csv(const std::vector<MetricsReport>& reports);
nlohmann::json summary_json(const std::vector<MetricsReport>& reports);

struct EmittedFiles {
  std::vector<std::string> paths;
};

// Writes <dir>/<name>.csv per trajectory, <dir>/metrics.csv and <dir>/summary.json.
EmittedFiles emit_report(const std::string& dir, const std::vector<Trajectory>& trajectories,
                         const std::vector<MetricsReport>& reports);

}  // namespace styleforge::eval
