#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "prefviz/cluster_oracle.hpp"
#include "prefviz/contrastive.hpp"
#include "prefviz/embed_viz.hpp"
#include "prefviz/ppo.hpp"
#include "prefviz/preferences.hpp"
#include "prefviz/render.hpp"
#include "prefviz/reward_model.hpp"

namespace {

using namespace prefviz;

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

void BM_Render(benchmark::State& state) {
  auto spec = env::make_spec(env::EnvName::kPlanarReacher);
  Rng rng = make_stream(1, 0);
  auto s = env::reset(spec, rng);
  for (auto _ : state) benchmark::DoNotOptimize(render::render(spec, s));
}
BENCHMARK(BM_Render);

void BM_ContrastiveGrad(benchmark::State& state) {
  Rng rng = make_stream(2, 0);
  contrastive::ContrastiveConfig config;
  config.embed_dim = static_cast<int>(state.range(0));
  auto model = contrastive::create(config, rng);
  Eigen::MatrixXd a = random_matrix(contrastive::kInputDim, config.batch_size, rng);
  Eigen::MatrixXd p = random_matrix(contrastive::kInputDim, config.batch_size, rng);
  for (auto _ : state) benchmark::DoNotOptimize(contrastive::infonce_loss_grad(model, a, p, config.temperature));
}
BENCHMARK(BM_ContrastiveGrad)->Arg(64)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_RewardTrainStep(benchmark::State& state) {
  Rng rng = make_stream(3, 0);
  auto spec = env::make_spec(env::EnvName::kPlanarReacher);
  auto model = reward::RewardNet::create(spec.obs_dim, rng);
  std::vector<reward::Comparison> data;
  for (int i = 0; i < 500; ++i)
    data.push_back({random_matrix(spec.obs_dim, 1, rng).col(0), random_matrix(spec.obs_dim, 1, rng).col(0), i % 2});
  for (auto _ : state) reward::train(model, data, {1, 500, 3e-4}, rng);
}
BENCHMARK(BM_RewardTrainStep)->Unit(benchmark::kMillisecond);

void BM_Tsne(benchmark::State& state) {
  Rng rng = make_stream(4, 0);
  Eigen::MatrixXd x = random_matrix(state.range(0), 20, rng);
  for (auto _ : state) benchmark::DoNotOptimize(viz::embed_2d(x, viz::TsneConfig{}, rng));
}
BENCHMARK(BM_Tsne)->Arg(250)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_WardAgglomerate(benchmark::State& state) {
  Rng rng = make_stream(5, 0);
  Eigen::MatrixXd coords = random_matrix(state.range(0), 2, rng);
  for (auto _ : state) benchmark::DoNotOptimize(oracle::agglomerate(coords, 30));
}
BENCHMARK(BM_WardAgglomerate)->Arg(250)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_ExpandRanking(benchmark::State& state) {
  oracle::ClusterRanking r;
  StateId next = 0;
  for (int c = 0; c < 5; ++c) {
    std::vector<StateId> ids;
    for (int i = 0; i < 20; ++i) ids.push_back(next++);
    r.clusters.push_back(ids);
  }
  for (auto _ : state) benchmark::DoNotOptimize(prefs::expand_ranking(r));
}
BENCHMARK(BM_ExpandRanking);

void BM_PpoRolloutAndUpdate(benchmark::State& state) {
  auto spec = env::make_spec(env::EnvName::kTiltStand);
  Rng rng = make_stream(6, 0);
  auto agent = ppo::make_agent(spec, rng);
  ppo::PpoConfig config;
  ppo::RewardFn reward = [&](const Eigen::MatrixXd& obs) {
    Eigen::VectorXd r(obs.cols());
    for (Eigen::Index i = 0; i < obs.cols(); ++i) r[i] = -obs.col(i).squaredNorm();
    return r;
  };
  ppo::RunningStats stats;
  for (auto _ : state) {
    auto buffer = ppo::collect_rollouts(agent, spec, config.rollout_steps, reward, config, rng, stats);
    benchmark::DoNotOptimize(ppo::ppo_update(agent, buffer, config, rng));
  }
}
BENCHMARK(BM_PpoRolloutAndUpdate)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
