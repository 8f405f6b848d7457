#pragma once

#include <string>
#include <utility>
#include <vector>

#include "prefviz/cluster_oracle.hpp"
#include "prefviz/common.hpp"

namespace prefviz::prefs {

/// Comparison by state id; y = 1 means s0 is preferred.
struct IdComparison {
  StateId s0 = 0;
  StateId s1 = 0;
  int y = 1;
  bool operator==(const IdComparison&) const = default;
};

/// Every cross-cluster pair of an ascending ranking, the member of the
/// higher-ranked cluster first with y = 1. Emits sum_{i<j} |C_i||C_j| pairs
/// and nothing within a cluster.
std::vector<IdComparison> expand_ranking(const oracle::ClusterRanking& ranking);

/// sum_{i<j} |C_i||C_j|.
long long expansion_count(const oracle::ClusterRanking& ranking);

/// `count` uniform pairs of distinct pool entries.
std::vector<std::pair<StateId, StateId>> drlhp_queries(const std::vector<StateId>& pool, int count, Rng& rng);

/// Noiseless label: y = 1 iff reward0 > reward1; exact ties by a fair coin.
IdComparison drlhp_label(std::pair<StateId, StateId> pair, double reward0, double reward1, Rng& rng);

/// Comparison counts for rounds 0..iterations: round 0 gets
/// round(init_frac * budget); the rest is split over rounds 1..iterations
/// in proportion to 1/(i+1), floored, with the leftover handed one by one to
/// the earliest rounds. Counts sum to `budget`.
std::vector<int> hyperbolic_schedule(int budget, double init_frac, int iterations);

struct TimeModel {
  double seconds_per_comparison = 3.0;
  double seconds_per_ranking = 60.0;
};

enum class EventType { kComparisons, kSimulatedRanking, kLiveRanking };

std::string_view to_string(EventType type);
EventType parse_event_type(std::string_view text);

struct ClockEvent {
  int iteration = 0;
  EventType type = EventType::kComparisons;
  long long count = 0;
  /// Seconds charged; for live rankings the measured wall time.
  double seconds = 0.0;
};

/// Accounted human labelling time.
class HumanClock {
 public:
  HumanClock() = default;
  explicit HumanClock(TimeModel model) : model_(model) {}

  /// Comparisons are charged per item, simulated rankings per ranking, and
  /// live rankings pass `measured_seconds` through. Returns the event as
  /// logged.
  const ClockEvent& charge(int iteration, EventType type, long long count, double measured_seconds = 0.0);

  double seconds() const { return seconds_; }
  const std::vector<ClockEvent>& log() const { return log_; }
  const TimeModel& model() const { return model_; }

  /// Restores a logged history (checkpoint resume).
  static HumanClock replay(TimeModel model, const std::vector<ClockEvent>& events);

 private:
  TimeModel model_;
  double seconds_ = 0.0;
  std::vector<ClockEvent> log_;
};

/// `iteration,event_type,count,seconds`
std::string events_csv(const std::vector<ClockEvent>& events);
std::vector<ClockEvent> parse_events_csv(const std::string& text);

}  // namespace prefviz::prefs
