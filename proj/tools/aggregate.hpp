#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "prefviz/orchestrator.hpp"

namespace prefviz::cli {

struct SeriesPoint {
  int iteration = 0;
  double human_seconds = 0.0;  // mean across runs
  double mean = 0.0;
  double sem = 0.0;            // across runs; 0 for a single run
  int runs = 0;
};

/// One method on one env, x strictly increasing.
struct PlotSeries {
  std::string method;
  std::string env;
  std::vector<SeriesPoint> points;
};

/// Aligns records by iteration over the iterations every run reached. When
/// several iterations share one x value only the last is kept. Throws
/// std::invalid_argument on empty input or runs of different methods or
/// envs.
PlotSeries aggregate(const std::vector<std::string>& methods, const std::vector<std::string>& envs,
                     const std::vector<std::vector<orchestrator::RunRecord>>& runs);

/// Reads config.json and records.csv of each run directory.
PlotSeries aggregate_dirs(const std::vector<std::filesystem::path>& run_dirs);

/// `method,env,iteration,human_seconds,mean,sem,runs`
std::string series_csv(const PlotSeries& series);

}  // namespace prefviz::cli
