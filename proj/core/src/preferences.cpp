#include "prefviz/preferences.hpp"

#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace prefviz::prefs {

std::vector<IdComparison> expand_ranking(const oracle::ClusterRanking& ranking) {
  std::vector<IdComparison> out;
  out.reserve(static_cast<size_t>(expansion_count(ranking)));
  const auto& c = ranking.clusters;
  for (size_t lower = 0; lower < c.size(); ++lower) {
    for (size_t higher = lower + 1; higher < c.size(); ++higher) {
      for (StateId a : c[higher])
        for (StateId b : c[lower]) out.push_back({a, b, 1});
    }
  }
  return out;
}

long long expansion_count(const oracle::ClusterRanking& ranking) {
  long long total = 0;
  long long seen = 0;
  for (const auto& cluster : ranking.clusters) {
    total += seen * static_cast<long long>(cluster.size());
    seen += static_cast<long long>(cluster.size());
  }
  return total;
}

std::vector<std::pair<StateId, StateId>> drlhp_queries(const std::vector<StateId>& pool, int count, Rng& rng) {
  std::vector<std::pair<StateId, StateId>> out;
  if (count <= 0) return out;
  if (pool.size() < 2) throw std::invalid_argument("query pool needs at least two states");
  std::uniform_int_distribution<size_t> first(0, pool.size() - 1);
  std::uniform_int_distribution<size_t> second(0, pool.size() - 2);
  for (int k = 0; k < count; ++k) {
    size_t i = first(rng);
    size_t j = second(rng);
    if (j >= i) ++j;  // uniform over the other pool entries
    out.emplace_back(pool[i], pool[j]);
  }
  return out;
}

IdComparison drlhp_label(std::pair<StateId, StateId> pair, double reward0, double reward1, Rng& rng) {
  int y = 0;
  if (reward0 > reward1) {
    y = 1;
  } else if (reward0 == reward1) {
    y = std::bernoulli_distribution(0.5)(rng) ? 1 : 0;
  }
  return {pair.first, pair.second, y};
}

std::vector<int> hyperbolic_schedule(int budget, double init_frac, int iterations) {
  if (iterations < 0 || budget < iterations) throw std::invalid_argument("schedule needs budget >= iterations >= 0");
  std::vector<int> counts(static_cast<size_t>(iterations) + 1, 0);
  if (iterations == 0) {
    counts[0] = budget;
    return counts;
  }
  counts[0] = static_cast<int>(std::lround(init_frac * budget));
  int rest = budget - counts[0];
  double weight_sum = 0.0;
  for (int i = 1; i <= iterations; ++i) weight_sum += 1.0 / (i + 1);
  int assigned = 0;
  for (int i = 1; i <= iterations; ++i) {
    counts[i] = static_cast<int>(std::floor(rest * (1.0 / (i + 1)) / weight_sum));
    assigned += counts[i];
  }
  for (int i = 1; assigned < rest; i = i % iterations + 1) {
    ++counts[i];
    ++assigned;
  }
  return counts;
}

std::string_view to_string(EventType type) {
  switch (type) {
    case EventType::kComparisons: return "comparisons";
    case EventType::kSimulatedRanking: return "simulated_ranking";
    case EventType::kLiveRanking: return "live_ranking";
  }
  return "unknown";
}

EventType parse_event_type(std::string_view text) {
  for (auto t : {EventType::kComparisons, EventType::kSimulatedRanking, EventType::kLiveRanking})
    if (to_string(t) == text) return t;
  throw std::invalid_argument("unknown event type: " + std::string(text));
}

const ClockEvent& HumanClock::charge(int iteration, EventType type, long long count, double measured_seconds) {
  ClockEvent event{iteration, type, count, 0.0};
  switch (type) {
    case EventType::kComparisons:
      event.seconds = model_.seconds_per_comparison * static_cast<double>(count);
      break;
    case EventType::kSimulatedRanking:
      event.seconds = model_.seconds_per_ranking * static_cast<double>(count);
      break;
    case EventType::kLiveRanking:
      if (measured_seconds < 0.0) throw std::invalid_argument("measured time cannot be negative");
      event.seconds = measured_seconds;
      break;
  }
  seconds_ += event.seconds;
  log_.push_back(event);
  return log_.back();
}

HumanClock HumanClock::replay(TimeModel model, const std::vector<ClockEvent>& events) {
  HumanClock clock(model);
  for (const auto& e : events) {
    clock.seconds_ += e.seconds;
    clock.log_.push_back(e);
  }
  return clock;
}

std::string events_csv(const std::vector<ClockEvent>& events) {
  std::ostringstream out;
  out << "iteration,event_type,count,seconds\n";
  out << std::setprecision(17);
  for (const auto& e : events) out << e.iteration << ',' << to_string(e.type) << ',' << e.count << ',' << e.seconds << '\n';
  return out.str();
}

std::vector<ClockEvent> parse_events_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (line != "iteration,event_type,count,seconds") throw std::runtime_error("unexpected events.csv header");
  std::vector<ClockEvent> events;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string iteration, type, count, seconds;
    std::getline(row, iteration, ',');
    std::getline(row, type, ',');
    std::getline(row, count, ',');
    std::getline(row, seconds, ',');
    events.push_back({std::stoi(iteration), parse_event_type(type), std::stoll(count), std::stod(seconds)});
  }
  return events;
}

}  // namespace prefviz::prefs
