#pragma once

// Iterated preference learning loop. One run alternates labelling rounds
// (cluster rankings or pairwise comparisons), reward fitting and a PPO phase,
// and logs the oracle score of the policy against accounted human time.
//
// Run directory layout:
//   config.json
//   records.csv        iteration,human_seconds,mean_reward,sem
//   events.csv         iteration,event_type,count,seconds
//   comparisons.csv    s0_id,s1_id,y
//   states.csv         id,obs_0..obs_{d-1}
//   snapshots/iter_<round>.json
//   checkpoints/iter_<record>/{policy,value,reward}.json + state.json

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "prefviz/cluster_oracle.hpp"
#include "prefviz/common.hpp"
#include "prefviz/contrastive.hpp"
#include "prefviz/embed_viz.hpp"
#include "prefviz/env.hpp"
#include "prefviz/ppo.hpp"
#include "prefviz/preferences.hpp"
#include "prefviz/reward_model.hpp"

namespace prefviz::orchestrator {

/// kOracle trains PPO on the hidden reward with no labelling and gives the
/// reference ceiling.
enum class Method { kClrvis, kDrlhp, kOracle };

std::string_view to_string(Method method);
std::optional<Method> parse_method(std::string_view text);

struct DrlhpConfig {
  double initial_fraction = 0.25;
  int initial_epochs = 200;
  int batch_size = 50;
  double lr = 3e-4;
  /// Total comparisons; 0 means the time-matched default of
  /// iterations * seconds_per_ranking / seconds_per_comparison.
  int budget = 0;
  /// States drawn per round to form the query pool.
  int pool_size = 500;
};

struct RunConfig {
  Method method = Method::kClrvis;
  env::EnvName env = env::EnvName::kPlanarReacher;
  int iterations = 8;
  int n_states = 500;
  oracle::FeedbackSource feedback = oracle::FeedbackSource::kSimulated;
  std::uint64_t seed = 0;
  int eval_episodes = 20;
  int ppo_steps_per_iteration = 20000;
  /// Mixed-rollout states drawn per snapshot state before subsampling.
  int oversample = 4;

  ppo::PpoConfig ppo;
  reward::TrainConfig reward_train;
  int initial_reward_steps = reward::kInitialTrainSteps;
  contrastive::ContrastiveConfig contrastive;
  viz::TsneConfig tsne;
  oracle::OracleConfig oracle;
  prefs::TimeModel time;
  DrlhpConfig drlhp;

  /// Comparison budget DRLHP runs with.
  int drlhp_budget() const;
};

/// Throws std::invalid_argument naming the first bad field.
void validate(const RunConfig& config);

nlohmann::json to_json(const RunConfig& config);
/// Missing keys keep their defaults; unknown enum values throw.
RunConfig config_from_json(const nlohmann::json& j);

struct RunRecord {
  int iteration = 0;
  double human_seconds = 0.0;
  double mean_reward = 0.0;
  double sem = 0.0;
  bool operator==(const RunRecord&) const = default;
};

/// `iteration,human_seconds,mean_reward,sem`, 17 significant digits.
std::string records_csv(const std::vector<RunRecord>& records);
std::vector<RunRecord> parse_records_csv(const std::string& text);

struct EvalResult {
  double mean = 0.0;
  double sem = 0.0;  // sample standard deviation / sqrt(episodes); 0 for one episode
};

using Controller = std::function<Eigen::VectorXd(const Eigen::VectorXd& obs, Rng& rng)>;

/// Sums the oracle reward of every post-step state of one episode per start.
EvalResult evaluate_controller(const Controller& controller, const env::EnvSpec& spec,
                               const std::vector<env::EnvState>& starts, Rng& rng);

/// Deterministic tanh(mean) policy from `episodes` resets drawn from a
/// stream fixed by `seed`.
EvalResult evaluate(const ppo::PolicyNet& policy, const env::EnvSpec& spec, int episodes, std::uint64_t seed);

/// Sample mean and standard error.
EvalResult mean_and_sem(const std::vector<double>& values);

enum class Phase { kTraining, kAwaitingLabels, kDone };

std::string_view to_string(Phase phase);

/// What a labeller is shown for one round. `states[k]` is the state of
/// `snapshot.points[k]`.
struct RankingRequest {
  const viz::EmbeddingSnapshot& snapshot;
  const std::vector<env::EnvState>& states;
  const env::EnvSpec& spec;
  int iteration = 0;
};

struct RankingResponse {
  oracle::ClusterRanking ranking;
  /// Labelling wall time; only meaningful for live rankings.
  double measured_seconds = 0.0;
};

/// Source of cluster rankings. Returning nullopt aborts the run.
class FeedbackProvider {
 public:
  virtual ~FeedbackProvider() = default;
  virtual std::optional<RankingResponse> request_ranking(const RankingRequest& request) = 0;
  virtual void set_phase(Phase, int /*iteration*/) {}
};

/// Ward clusters of the t-SNE map ranked by true mean reward.
class SimulatedFeedback final : public FeedbackProvider {
 public:
  explicit SimulatedFeedback(oracle::OracleConfig config) : config_(config) {}
  std::optional<RankingResponse> request_ranking(const RankingRequest& request) override;

 private:
  oracle::OracleConfig config_;
};

/// One run. Record 0 is the untrained policy at zero human time; labelling
/// round r (0-based) produces record r + 1.
class Runner {
 public:
  /// Writes config.json. An empty `out_dir` keeps everything in memory.
  /// `feedback` is required for live CLRVis runs and must outlive the runner.
  Runner(RunConfig config, std::filesystem::path out_dir, FeedbackProvider* feedback = nullptr);

  /// Reloads checkpoints/iter_<record>/ of an existing run directory. Files
  /// written after that checkpoint are rewritten as the run continues.
  static Runner resume(const std::filesystem::path& out_dir, int record, FeedbackProvider* feedback = nullptr);

  /// Runs all remaining rounds and returns every record. Stops early when
  /// the feedback provider aborts.
  const std::vector<RunRecord>& run();

  /// One labelling round; false once done or aborted.
  bool step();

  const RunConfig& config() const { return config_; }
  const std::vector<RunRecord>& records() const { return records_; }
  const std::vector<prefs::IdComparison>& dataset() const { return dataset_; }
  const std::vector<env::EnvState>& states() const { return states_; }
  const prefs::HumanClock& clock() const { return clock_; }
  const ppo::Agent& agent() const { return agent_; }
  const reward::RewardNet& reward_model() const { return reward_; }
  int next_round() const { return round_; }
  bool done() const { return round_ >= config_.iterations; }
  bool aborted() const { return aborted_; }
  /// Comparison counts per round for DRLHP.
  const std::vector<int>& schedule() const { return schedule_; }

 private:
  Runner() = default;

  void init_fresh();
  FeedbackProvider* provider() { return feedback_ ? feedback_ : simulated_ ? &*simulated_ : nullptr; }
  void append_record();
  bool clrvis_round();
  void drlhp_round();
  void add_comparisons(const std::vector<prefs::IdComparison>& items);
  StateId add_state(const env::EnvState& state);
  std::vector<env::EnvState> sample_snapshot_states();
  ppo::RewardFn learned_reward() const;
  ppo::RewardFn oracle_reward_fn() const;
  void policy_phase();
  void save_checkpoint() const;
  void write_outputs() const;

  RunConfig config_;
  env::EnvSpec spec_;
  std::filesystem::path out_dir_;
  FeedbackProvider* feedback_ = nullptr;
  std::optional<SimulatedFeedback> simulated_;

  Rng rng_;
  ppo::Agent agent_;
  reward::RewardNet reward_;
  bool reward_fitted_ = false;
  std::vector<env::EnvState> states_;
  std::vector<prefs::IdComparison> dataset_;
  std::vector<reward::Comparison> materialized_;
  prefs::HumanClock clock_;
  std::vector<RunRecord> records_;
  std::vector<int> schedule_;
  int round_ = 0;
  bool aborted_ = false;
};

/// Runner(config, out_dir, feedback).run().
std::vector<RunRecord> run(const RunConfig& config, const std::filesystem::path& out_dir,
                           FeedbackProvider* feedback = nullptr);

std::string comparisons_csv(const std::vector<prefs::IdComparison>& items);
std::vector<prefs::IdComparison> parse_comparisons_csv(const std::string& text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& text);

}  // namespace prefviz::orchestrator
