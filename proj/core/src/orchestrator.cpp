#include "prefviz/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "prefviz/render.hpp"

namespace prefviz::orchestrator {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kEvalStream = 1;
constexpr std::uint64_t kMainStream = 2;

template <typename T>
void read_opt(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

json ppo_json(const ppo::PpoConfig& c) {
  return {{"rollout_steps", c.rollout_steps}, {"epochs", c.epochs},       {"minibatch", c.minibatch},
          {"clip", c.clip},                   {"gamma", c.gamma},         {"gae_lambda", c.gae_lambda},
          {"lr", c.lr},                       {"value_coef", c.value_coef}, {"entropy_coef", c.entropy_coef},
          {"max_grad_norm", c.max_grad_norm}, {"hidden", c.hidden}};
}

void read_ppo(const json& j, ppo::PpoConfig& c) {
  read_opt(j, "rollout_steps", c.rollout_steps);
  read_opt(j, "epochs", c.epochs);
  read_opt(j, "minibatch", c.minibatch);
  read_opt(j, "clip", c.clip);
  read_opt(j, "gamma", c.gamma);
  read_opt(j, "gae_lambda", c.gae_lambda);
  read_opt(j, "lr", c.lr);
  read_opt(j, "value_coef", c.value_coef);
  read_opt(j, "entropy_coef", c.entropy_coef);
  read_opt(j, "max_grad_norm", c.max_grad_norm);
  read_opt(j, "hidden", c.hidden);
}

json contrastive_json(const contrastive::ContrastiveConfig& c) {
  return {{"embed_dim", c.embed_dim}, {"hidden", c.hidden},         {"temperature", c.temperature},
          {"epochs", c.epochs},       {"batch_size", c.batch_size}, {"lr", c.lr}};
}

void read_contrastive(const json& j, contrastive::ContrastiveConfig& c) {
  read_opt(j, "embed_dim", c.embed_dim);
  read_opt(j, "hidden", c.hidden);
  read_opt(j, "temperature", c.temperature);
  read_opt(j, "epochs", c.epochs);
  read_opt(j, "batch_size", c.batch_size);
  read_opt(j, "lr", c.lr);
}

json tsne_json(const viz::TsneConfig& c) {
  return {{"perplexity", c.perplexity},
          {"pca_dim", c.pca_dim},
          {"n_iter", c.n_iter},
          {"early_exaggeration", c.early_exaggeration},
          {"exaggeration_iters", c.exaggeration_iters},
          {"learning_rate", c.learning_rate},
          {"initial_momentum", c.initial_momentum},
          {"final_momentum", c.final_momentum},
          {"momentum_switch_iter", c.momentum_switch_iter},
          {"min_gain", c.min_gain},
          {"init_std", c.init_std},
          {"perplexity_tolerance", c.perplexity_tolerance}};
}

void read_tsne(const json& j, viz::TsneConfig& c) {
  read_opt(j, "perplexity", c.perplexity);
  read_opt(j, "pca_dim", c.pca_dim);
  read_opt(j, "n_iter", c.n_iter);
  read_opt(j, "early_exaggeration", c.early_exaggeration);
  read_opt(j, "exaggeration_iters", c.exaggeration_iters);
  read_opt(j, "learning_rate", c.learning_rate);
  read_opt(j, "initial_momentum", c.initial_momentum);
  read_opt(j, "final_momentum", c.final_momentum);
  read_opt(j, "momentum_switch_iter", c.momentum_switch_iter);
  read_opt(j, "min_gain", c.min_gain);
  read_opt(j, "init_std", c.init_std);
  read_opt(j, "perplexity_tolerance", c.perplexity_tolerance);
}

json oracle_json(const oracle::OracleConfig& c) {
  return {{"clusters_to_rank", c.clusters_to_rank},
          {"candidate_clusters", c.candidate_clusters},
          {"min_size_frac", c.min_size_frac},
          {"variance_quantile", c.variance_quantile},
          {"quantile_relax_step", c.quantile_relax_step}};
}

void read_oracle(const json& j, oracle::OracleConfig& c) {
  read_opt(j, "clusters_to_rank", c.clusters_to_rank);
  read_opt(j, "candidate_clusters", c.candidate_clusters);
  read_opt(j, "min_size_frac", c.min_size_frac);
  read_opt(j, "variance_quantile", c.variance_quantile);
  read_opt(j, "quantile_relax_step", c.quantile_relax_step);
}

void require(bool ok, const char* field) {
  if (!ok) throw std::invalid_argument(std::string("invalid config: ") + field);
}

Eigen::MatrixXd obs_matrix(const std::vector<env::EnvState>& states) {
  Eigen::MatrixXd m(states.front().obs.size(), static_cast<Eigen::Index>(states.size()));
  for (size_t i = 0; i < states.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = states[i].obs;
  return m;
}

std::string states_csv(const std::vector<env::EnvState>& states, int obs_dim) {
  std::ostringstream out;
  out << "id";
  for (int d = 0; d < obs_dim; ++d) out << ",obs_" << d;
  out << '\n' << std::setprecision(17);
  for (size_t i = 0; i < states.size(); ++i) {
    out << i;
    for (int d = 0; d < obs_dim; ++d) out << ',' << states[i].obs[d];
    out << '\n';
  }
  return out.str();
}

std::vector<env::EnvState> parse_states_csv(const std::string& text, int obs_dim) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  std::vector<env::EnvState> states;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    if (std::stoll(cell) != static_cast<long long>(states.size())) throw std::runtime_error("states.csv ids out of order");
    env::EnvState s{Eigen::VectorXd(obs_dim)};
    for (int d = 0; d < obs_dim; ++d) {
      if (!std::getline(row, cell, ',')) throw std::runtime_error("short row in states.csv");
      s.obs[d] = std::stod(cell);
    }
    states.push_back(std::move(s));
  }
  return states;
}

fs::path checkpoint_dir(const fs::path& out_dir, int record) {
  return out_dir / "checkpoints" / ("iter_" + std::to_string(record));
}

}  // namespace

std::string_view to_string(Method method) {
  switch (method) {
    case Method::kClrvis: return "clrvis";
    case Method::kDrlhp: return "drlhp";
    case Method::kOracle: return "oracle";
  }
  return "unknown";
}

std::optional<Method> parse_method(std::string_view text) {
  for (auto m : {Method::kClrvis, Method::kDrlhp, Method::kOracle})
    if (to_string(m) == text) return m;
  return std::nullopt;
}

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::kTraining: return "training";
    case Phase::kAwaitingLabels: return "awaiting_labels";
    case Phase::kDone: return "done";
  }
  return "unknown";
}

int RunConfig::drlhp_budget() const {
  if (drlhp.budget > 0) return drlhp.budget;
  return static_cast<int>(std::lround(iterations * time.seconds_per_ranking / time.seconds_per_comparison));
}

void validate(const RunConfig& c) {
  require(c.iterations >= 0, "iterations");
  require(c.eval_episodes >= 1, "eval_episodes");
  require(c.ppo_steps_per_iteration >= 1, "ppo_steps_per_iteration");
  require(c.oversample >= 1, "oversample");
  require(c.ppo.rollout_steps >= 1 && c.ppo.epochs >= 1 && c.ppo.minibatch >= 1, "ppo");
  require(c.reward_train.steps >= 1 && c.reward_train.batch_size >= 1 && c.initial_reward_steps >= 1, "reward_train");
  require(c.time.seconds_per_comparison > 0.0 && c.time.seconds_per_ranking >= 0.0, "time");
  if (c.method == Method::kClrvis) {
    require(c.n_states > 3.0 * c.tsne.perplexity, "n_states");
    require(c.contrastive.batch_size >= 2 && c.contrastive.batch_size <= c.n_states, "contrastive.batch_size");
    require(c.oracle.clusters_to_rank >= 2 && c.oracle.candidate_clusters >= c.oracle.clusters_to_rank, "oracle");
  }
  if (c.method == Method::kDrlhp) {
    require(c.drlhp.pool_size >= 2 && c.drlhp.batch_size >= 1 && c.drlhp.initial_epochs >= 1, "drlhp");
    require(c.drlhp.initial_fraction >= 0.0 && c.drlhp.initial_fraction <= 1.0, "drlhp.initial_fraction");
    require(c.drlhp_budget() >= std::max(0, c.iterations - 1), "drlhp.budget");
  }
  if (c.method != Method::kClrvis) require(c.feedback == oracle::FeedbackSource::kSimulated, "feedback");
}

json to_json(const RunConfig& c) {
  return {{"method", to_string(c.method)},
          {"env", env::to_string(c.env)},
          {"iterations", c.iterations},
          {"n_states", c.n_states},
          {"feedback", oracle::to_string(c.feedback)},
          {"seed", c.seed},
          {"eval_episodes", c.eval_episodes},
          {"ppo_steps_per_iteration", c.ppo_steps_per_iteration},
          {"oversample", c.oversample},
          {"ppo", ppo_json(c.ppo)},
          {"reward_train",
           {{"steps", c.reward_train.steps}, {"batch_size", c.reward_train.batch_size}, {"lr", c.reward_train.lr}}},
          {"initial_reward_steps", c.initial_reward_steps},
          {"contrastive", contrastive_json(c.contrastive)},
          {"tsne", tsne_json(c.tsne)},
          {"oracle", oracle_json(c.oracle)},
          {"time",
           {{"seconds_per_comparison", c.time.seconds_per_comparison},
            {"seconds_per_ranking", c.time.seconds_per_ranking}}},
          {"drlhp",
           {{"initial_fraction", c.drlhp.initial_fraction},
            {"initial_epochs", c.drlhp.initial_epochs},
            {"batch_size", c.drlhp.batch_size},
            {"lr", c.drlhp.lr},
            {"budget", c.drlhp.budget},
            {"pool_size", c.drlhp.pool_size}}}};
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  if (j.contains("method")) {
    auto m = parse_method(j.at("method").get<std::string>());
    if (!m) throw std::invalid_argument("unknown method: " + j.at("method").get<std::string>());
    c.method = *m;
  }
  if (j.contains("env")) {
    auto e = env::parse_env_name(j.at("env").get<std::string>());
    if (!e) throw std::invalid_argument("unknown env: " + j.at("env").get<std::string>());
    c.env = *e;
  }
  if (j.contains("feedback")) {
    auto f = oracle::parse_feedback_source(j.at("feedback").get<std::string>());
    if (!f) throw std::invalid_argument("unknown feedback source: " + j.at("feedback").get<std::string>());
    c.feedback = *f;
  }
  read_opt(j, "iterations", c.iterations);
  read_opt(j, "n_states", c.n_states);
  read_opt(j, "seed", c.seed);
  read_opt(j, "eval_episodes", c.eval_episodes);
  read_opt(j, "ppo_steps_per_iteration", c.ppo_steps_per_iteration);
  read_opt(j, "oversample", c.oversample);
  read_opt(j, "initial_reward_steps", c.initial_reward_steps);
  if (j.contains("ppo")) read_ppo(j.at("ppo"), c.ppo);
  if (j.contains("reward_train")) {
    const auto& r = j.at("reward_train");
    read_opt(r, "steps", c.reward_train.steps);
    read_opt(r, "batch_size", c.reward_train.batch_size);
    read_opt(r, "lr", c.reward_train.lr);
  }
  if (j.contains("contrastive")) read_contrastive(j.at("contrastive"), c.contrastive);
  if (j.contains("tsne")) read_tsne(j.at("tsne"), c.tsne);
  if (j.contains("oracle")) read_oracle(j.at("oracle"), c.oracle);
  if (j.contains("time")) {
    read_opt(j.at("time"), "seconds_per_comparison", c.time.seconds_per_comparison);
    read_opt(j.at("time"), "seconds_per_ranking", c.time.seconds_per_ranking);
  }
  if (j.contains("drlhp")) {
    const auto& d = j.at("drlhp");
    read_opt(d, "initial_fraction", c.drlhp.initial_fraction);
    read_opt(d, "initial_epochs", c.drlhp.initial_epochs);
    read_opt(d, "batch_size", c.drlhp.batch_size);
    read_opt(d, "lr", c.drlhp.lr);
    read_opt(d, "budget", c.drlhp.budget);
    read_opt(d, "pool_size", c.drlhp.pool_size);
  }
  return c;
}

std::string records_csv(const std::vector<RunRecord>& records) {
  std::ostringstream out;
  out << "iteration,human_seconds,mean_reward,sem\n" << std::setprecision(17);
  for (const auto& r : records) out << r.iteration << ',' << r.human_seconds << ',' << r.mean_reward << ',' << r.sem << '\n';
  return out.str();
}

std::vector<RunRecord> parse_records_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (line != "iteration,human_seconds,mean_reward,sem") throw std::runtime_error("unexpected records.csv header");
  std::vector<RunRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string a, b, c, d;
    if (!std::getline(row, a, ',') || !std::getline(row, b, ',') || !std::getline(row, c, ',') ||
        !std::getline(row, d, ','))
      throw std::runtime_error("short row in records.csv");
    records.push_back({std::stoi(a), std::stod(b), std::stod(c), std::stod(d)});
  }
  return records;
}

std::string comparisons_csv(const std::vector<prefs::IdComparison>& items) {
  std::ostringstream out;
  out << "s0_id,s1_id,y\n";
  for (const auto& c : items) out << c.s0 << ',' << c.s1 << ',' << c.y << '\n';
  return out.str();
}

std::vector<prefs::IdComparison> parse_comparisons_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (line != "s0_id,s1_id,y") throw std::runtime_error("unexpected comparisons.csv header");
  std::vector<prefs::IdComparison> items;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string a, b, y;
    std::getline(row, a, ',');
    std::getline(row, b, ',');
    std::getline(row, y, ',');
    items.push_back({std::stoll(a), std::stoll(b), std::stoi(y)});
  }
  return items;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

EvalResult mean_and_sem(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("mean of no values");
  // Welford: identical values give exactly zero spread.
  double mean = 0.0;
  double m2 = 0.0;
  double k = 0.0;
  for (double v : values) {
    k += 1.0;
    double delta = v - mean;
    mean += delta / k;
    m2 += delta * (v - mean);
  }
  if (values.size() == 1) return {mean, 0.0};
  return {mean, std::sqrt(m2 / (k - 1.0)) / std::sqrt(k)};
}

EvalResult evaluate_controller(const Controller& controller, const env::EnvSpec& spec,
                               const std::vector<env::EnvState>& starts, Rng& rng) {
  std::vector<double> returns;
  returns.reserve(starts.size());
  for (const auto& start : starts) {
    env::EnvState state = start;
    double total = 0.0;
    for (int t = 0; t < spec.episode_len; ++t) {
      state = env::step(spec, state, env::Action{controller(state.obs, rng)});
      total += env::oracle_reward(spec, state);
    }
    returns.push_back(total);
  }
  return mean_and_sem(returns);
}

EvalResult evaluate(const ppo::PolicyNet& policy, const env::EnvSpec& spec, int episodes, std::uint64_t seed) {
  Rng rng = make_stream(seed, kEvalStream);
  std::vector<env::EnvState> starts;
  for (int e = 0; e < episodes; ++e) starts.push_back(env::reset(spec, rng));
  return evaluate_controller([&](const Eigen::VectorXd& obs, Rng&) { return ppo::mean_action(policy, obs); }, spec,
                             starts, rng);
}

std::optional<RankingResponse> SimulatedFeedback::request_ranking(const RankingRequest& request) {
  Eigen::VectorXd rewards(static_cast<Eigen::Index>(request.states.size()));
  for (size_t i = 0; i < request.states.size(); ++i)
    rewards[static_cast<Eigen::Index>(i)] = env::oracle_reward(request.spec, request.states[i]);
  auto ranking = oracle::simulate_ranking(request.snapshot.coords(), rewards, request.snapshot.ids(), config_,
                                          request.iteration);
  return RankingResponse{std::move(ranking), 0.0};
}

Runner::Runner(RunConfig config, fs::path out_dir, FeedbackProvider* feedback)
    : config_(std::move(config)), out_dir_(std::move(out_dir)), feedback_(feedback) {
  validate(config_);
  if (config_.method == Method::kClrvis && config_.feedback == oracle::FeedbackSource::kLive && !feedback_)
    throw std::invalid_argument("live feedback needs a feedback provider");
  if (!out_dir_.empty()) {
    fs::create_directories(out_dir_);
    write_file(out_dir_ / "config.json", to_json(config_).dump(2) + "\n");
  }
  init_fresh();
}

void Runner::init_fresh() {
  spec_ = env::make_spec(config_.env);
  Rng init = make_stream(config_.seed, kInitStream);
  agent_ = ppo::make_agent(spec_, init, config_.ppo.hidden);
  reward_ = reward::RewardNet::create(spec_.obs_dim, init);
  rng_ = make_stream(config_.seed, kMainStream);
  clock_ = prefs::HumanClock(config_.time);
  if (config_.method == Method::kDrlhp && config_.iterations > 0)
    schedule_ = prefs::hyperbolic_schedule(config_.drlhp_budget(), config_.drlhp.initial_fraction,
                                           config_.iterations - 1);
  if (config_.feedback == oracle::FeedbackSource::kSimulated) {
    simulated_.emplace(config_.oracle);
  }
  append_record();
  save_checkpoint();
  write_outputs();
}

void Runner::append_record() {
  auto result = evaluate(agent_.policy, spec_, config_.eval_episodes, config_.seed);
  records_.push_back({round_, clock_.seconds(), result.mean, result.sem});
}

StateId Runner::add_state(const env::EnvState& state) {
  states_.push_back(state);
  return static_cast<StateId>(states_.size() - 1);
}

void Runner::add_comparisons(const std::vector<prefs::IdComparison>& items) {
  for (const auto& c : items) {
    dataset_.push_back(c);
    materialized_.push_back({states_.at(static_cast<size_t>(c.s0)).obs, states_.at(static_cast<size_t>(c.s1)).obs, c.y});
  }
}

std::vector<env::EnvState> Runner::sample_snapshot_states() {
  const int want = config_.n_states;
  const int episodes = (want * config_.oversample + spec_.episode_len - 1) / spec_.episode_len;
  std::vector<env::EnvState> pool;
  for (int e = 0; e < episodes; ++e) {
    auto ep = ppo::mixed_rollout(agent_.policy, spec_, rng_);
    pool.insert(pool.end(), ep.states.begin(), ep.states.end());
  }
  // Partial Fisher-Yates, then restore rollout order.
  std::vector<size_t> idx(pool.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto n = static_cast<size_t>(std::min<size_t>(static_cast<size_t>(want), pool.size()));
  for (size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng_)]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  std::vector<env::EnvState> out;
  out.reserve(n);
  for (size_t i : idx) out.push_back(pool[i]);
  return out;
}

ppo::RewardFn Runner::learned_reward() const {
  if (!reward_fitted_) return {};
  return [this](const Eigen::MatrixXd& obs) { return reward_.rewards(obs); };
}

ppo::RewardFn Runner::oracle_reward_fn() const {
  return [this](const Eigen::MatrixXd& obs) {
    Eigen::VectorXd r(obs.cols());
    for (Eigen::Index i = 0; i < obs.cols(); ++i) r[i] = env::oracle_reward(spec_, env::EnvState{obs.col(i)});
    return r;
  };
}

void Runner::policy_phase() {
  auto reward_fn = config_.method == Method::kOracle ? oracle_reward_fn() : learned_reward();
  ppo::train_phase(agent_, spec_, config_.ppo_steps_per_iteration, reward_fn, config_.ppo, rng_);
}

bool Runner::clrvis_round() {
  auto sampled = sample_snapshot_states();
  std::vector<StateId> ids;
  for (const auto& s : sampled) ids.push_back(add_state(s));

  std::vector<render::Frame> frames;
  frames.reserve(sampled.size());
  for (const auto& s : sampled) frames.push_back(render::render(spec_, s));
  auto encoder = contrastive::create(config_.contrastive, rng_);
  contrastive::train_on_frames(encoder, frames, config_.contrastive, rng_);
  Eigen::MatrixXd visual = contrastive::embed_frames(encoder, frames);
  std::optional<Eigen::MatrixXd> reward_block;
  if (reward_fitted_) reward_block = reward::embed_batch(reward_, obs_matrix(sampled));
  auto map = viz::embed_2d(viz::concat_embedding(visual, reward_block), config_.tsne, rng_);
  auto snapshot = viz::make_snapshot(round_, ids, map.y);
  if (!out_dir_.empty())
    write_file(out_dir_ / "snapshots" / ("iter_" + std::to_string(round_) + ".json"), viz::to_json(snapshot).dump() + "\n");

  FeedbackProvider* source = provider();
  source->set_phase(Phase::kAwaitingLabels, round_);
  auto response = source->request_ranking(RankingRequest{snapshot, sampled, spec_, round_});
  if (!response) return false;
  if (auto reason = oracle::validate(response->ranking, ids))
    throw std::runtime_error("feedback returned an invalid ranking: " + *reason);
  source->set_phase(Phase::kTraining, round_);

  if (response->ranking.source == oracle::FeedbackSource::kLive)
    clock_.charge(round_, prefs::EventType::kLiveRanking, 1, response->measured_seconds);
  else
    clock_.charge(round_, prefs::EventType::kSimulatedRanking, 1);
  add_comparisons(prefs::expand_ranking(response->ranking));

  reward::TrainConfig train = config_.reward_train;
  if (!reward_fitted_) train.steps = config_.initial_reward_steps;
  reward::train(reward_, materialized_, train, rng_);
  reward_fitted_ = true;
  return true;
}

void Runner::drlhp_round() {
  const int count = schedule_.at(static_cast<size_t>(round_));
  std::vector<env::EnvState> pool;
  const int episodes = (config_.drlhp.pool_size + spec_.episode_len - 1) / spec_.episode_len;
  for (int e = 0; e < episodes; ++e) {
    auto ep = round_ == 0 ? ppo::random_rollout(spec_, rng_) : ppo::mixed_rollout(agent_.policy, spec_, rng_).states;
    pool.insert(pool.end(), ep.begin(), ep.end());
  }
  pool.resize(static_cast<size_t>(config_.drlhp.pool_size));
  std::vector<StateId> local(pool.size());
  for (size_t i = 0; i < pool.size(); ++i) local[i] = static_cast<StateId>(i);

  std::vector<StateId> table_id(pool.size(), -1);
  auto id_of = [&](StateId k) {
    auto& slot = table_id[static_cast<size_t>(k)];
    if (slot < 0) slot = add_state(pool[static_cast<size_t>(k)]);
    return slot;
  };
  std::vector<prefs::IdComparison> labelled;
  for (auto [a, b] : prefs::drlhp_queries(local, count, rng_)) {
    double ra = env::oracle_reward(spec_, pool[static_cast<size_t>(a)]);
    double rb = env::oracle_reward(spec_, pool[static_cast<size_t>(b)]);
    StateId ia = id_of(a);
    StateId ib = id_of(b);
    labelled.push_back(prefs::drlhp_label({ia, ib}, ra, rb, rng_));
  }
  if (count > 0) clock_.charge(round_, prefs::EventType::kComparisons, count);
  add_comparisons(labelled);
  if (materialized_.empty()) return;
  if (!reward_fitted_) {
    reward::train_epochs(reward_, materialized_, config_.drlhp.initial_epochs, config_.drlhp.batch_size,
                         config_.drlhp.lr, rng_);
  } else {
    reward::train(reward_, materialized_, config_.reward_train, rng_);
  }
  reward_fitted_ = true;
}

bool Runner::step() {
  if (done() || aborted_) return false;
  if (auto* p = provider()) p->set_phase(Phase::kTraining, round_);
  switch (config_.method) {
    case Method::kClrvis:
      if (!clrvis_round()) {
        aborted_ = true;
        return false;
      }
      break;
    case Method::kDrlhp: drlhp_round(); break;
    case Method::kOracle: break;
  }
  policy_phase();
  ++round_;
  append_record();
  save_checkpoint();
  write_outputs();
  if (done())
    if (auto* p = provider()) p->set_phase(Phase::kDone, round_);
  return true;
}

const std::vector<RunRecord>& Runner::run() {
  if (done())
    if (auto* p = provider()) p->set_phase(Phase::kDone, round_);
  while (step()) {
  }
  return records_;
}

void Runner::write_outputs() const {
  if (out_dir_.empty()) return;
  write_file(out_dir_ / "records.csv", records_csv(records_));
  write_file(out_dir_ / "events.csv", prefs::events_csv(clock_.log()));
  write_file(out_dir_ / "comparisons.csv", comparisons_csv(dataset_));
  write_file(out_dir_ / "states.csv", states_csv(states_, spec_.obs_dim));
}

void Runner::save_checkpoint() const {
  if (out_dir_.empty()) return;
  const fs::path dir = checkpoint_dir(out_dir_, round_);
  fs::create_directories(dir);
  nn::save_network(agent_.policy.net, (dir / "policy.json").string());
  nn::save_network(agent_.value, (dir / "value.json").string());
  nn::save_network(reward_.net, (dir / "reward.json").string());
  json events = json::array();
  for (const auto& e : clock_.log())
    events.push_back({{"iteration", e.iteration}, {"type", prefs::to_string(e.type)}, {"count", e.count},
                      {"seconds", e.seconds}});
  json records = json::array();
  for (const auto& r : records_)
    records.push_back({{"iteration", r.iteration}, {"human_seconds", r.human_seconds}, {"mean_reward", r.mean_reward},
                       {"sem", r.sem}});
  json state = {{"round", round_},
                {"reward_fitted", reward_fitted_},
                {"n_states", states_.size()},
                {"n_comparisons", dataset_.size()},
                {"rng", save_rng(rng_)},
                {"policy_opt", nn::to_json(agent_.policy_opt)},
                {"value_opt", nn::to_json(agent_.value_opt)},
                {"events", events},
                {"records", records}};
  write_file(dir / "state.json", state.dump() + "\n");
}

Runner Runner::resume(const fs::path& out_dir, int record, FeedbackProvider* feedback) {
  Runner r;
  r.out_dir_ = out_dir;
  r.feedback_ = feedback;
  r.config_ = config_from_json(json::parse(read_file(out_dir / "config.json")));
  validate(r.config_);
  r.spec_ = env::make_spec(r.config_.env);
  if (r.config_.method == Method::kDrlhp && r.config_.iterations > 0)
    r.schedule_ = prefs::hyperbolic_schedule(r.config_.drlhp_budget(), r.config_.drlhp.initial_fraction,
                                             r.config_.iterations - 1);
  if (r.config_.feedback == oracle::FeedbackSource::kSimulated) {
    r.simulated_.emplace(r.config_.oracle);
  } else if (!r.feedback_) {
    throw std::invalid_argument("live feedback needs a feedback provider");
  }

  const fs::path dir = checkpoint_dir(out_dir, record);
  const json state = json::parse(read_file(dir / "state.json"));
  r.round_ = state.at("round").get<int>();
  r.reward_fitted_ = state.at("reward_fitted").get<bool>();
  restore_rng(r.rng_, state.at("rng").get<std::string>());
  r.agent_.policy.net = nn::load_network((dir / "policy.json").string());
  r.agent_.policy.act_dim = r.spec_.act_dim;
  r.agent_.value = nn::load_network((dir / "value.json").string());
  r.agent_.policy_opt = nn::adam_from_json(state.at("policy_opt"));
  r.agent_.value_opt = nn::adam_from_json(state.at("value_opt"));
  r.reward_.net = nn::load_network((dir / "reward.json").string());

  std::vector<prefs::ClockEvent> events;
  for (const auto& e : state.at("events"))
    events.push_back({e.at("iteration").get<int>(), prefs::parse_event_type(e.at("type").get<std::string>()),
                      e.at("count").get<long long>(), e.at("seconds").get<double>()});
  r.clock_ = prefs::HumanClock::replay(r.config_.time, events);
  for (const auto& rec : state.at("records"))
    r.records_.push_back({rec.at("iteration").get<int>(), rec.at("human_seconds").get<double>(),
                          rec.at("mean_reward").get<double>(), rec.at("sem").get<double>()});

  const auto n_states = state.at("n_states").get<size_t>();
  const auto n_comparisons = state.at("n_comparisons").get<size_t>();
  auto states = parse_states_csv(read_file(out_dir / "states.csv"), r.spec_.obs_dim);
  auto items = parse_comparisons_csv(read_file(out_dir / "comparisons.csv"));
  if (states.size() < n_states || items.size() < n_comparisons)
    throw std::runtime_error("run directory is shorter than the checkpoint");
  states.resize(n_states);
  items.resize(n_comparisons);
  r.states_ = std::move(states);
  r.add_comparisons(items);
  r.write_outputs();
  return r;
}

std::vector<RunRecord> run(const RunConfig& config, const fs::path& out_dir, FeedbackProvider* feedback) {
  Runner runner(config, out_dir, feedback);
  return runner.run();
}

}  // namespace prefviz::orchestrator
