#include "aggregate.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace prefviz::cli {

PlotSeries aggregate(const std::vector<std::string>& methods, const std::vector<std::string>& envs,
                     const std::vector<std::vector<orchestrator::RunRecord>>& runs) {
  if (runs.empty()) throw std::invalid_argument("no runs to aggregate");
  if (methods.size() != runs.size() || envs.size() != runs.size())
    throw std::invalid_argument("every run needs a method and an env");
  for (size_t i = 1; i < runs.size(); ++i) {
    if (methods[i] != methods[0]) throw std::invalid_argument("runs mix methods: " + methods[0] + ", " + methods[i]);
    if (envs[i] != envs[0]) throw std::invalid_argument("runs mix envs: " + envs[0] + ", " + envs[i]);
  }
  size_t length = runs[0].size();
  for (const auto& r : runs) length = std::min(length, r.size());

  PlotSeries series{methods[0], envs[0], {}};
  for (size_t k = 0; k < length; ++k) {
    std::vector<double> scores;
    double x = 0.0;
    for (const auto& r : runs) {
      if (r[k].iteration != runs[0][k].iteration) throw std::invalid_argument("runs disagree on iteration numbering");
      scores.push_back(r[k].mean_reward);
      x += r[k].human_seconds;
    }
    x /= static_cast<double>(runs.size());
    auto stats = orchestrator::mean_and_sem(scores);
    SeriesPoint point{runs[0][k].iteration, x, stats.mean, stats.sem, static_cast<int>(runs.size())};
    if (!series.points.empty() && series.points.back().human_seconds >= x) {
      series.points.back() = point;
    } else {
      series.points.push_back(point);
    }
  }
  return series;
}

PlotSeries aggregate_dirs(const std::vector<std::filesystem::path>& run_dirs) {
  std::vector<std::string> methods;
  std::vector<std::string> envs;
  std::vector<std::vector<orchestrator::RunRecord>> runs;
  for (const auto& dir : run_dirs) {
    auto config = orchestrator::config_from_json(nlohmann::json::parse(orchestrator::read_file(dir / "config.json")));
    methods.emplace_back(orchestrator::to_string(config.method));
    envs.emplace_back(env::to_string(config.env));
    runs.push_back(orchestrator::parse_records_csv(orchestrator::read_file(dir / "records.csv")));
  }
  return aggregate(methods, envs, runs);
}

std::string series_csv(const PlotSeries& series) {
  std::ostringstream out;
  out << "method,env,iteration,human_seconds,mean,sem,runs\n" << std::setprecision(17);
  for (const auto& p : series.points)
    out << series.method << ',' << series.env << ',' << p.iteration << ',' << p.human_seconds << ',' << p.mean << ','
        << p.sem << ',' << p.runs << '\n';
  return out.str();
}

}  // namespace prefviz::cli
