#include <atomic>
#include <future>
#include <thread>

#include <gtest/gtest.h>

#include "prefviz/render.hpp"
#include "prefviz/session_server.hpp"

// After Eigen: resolv.h, pulled in here, defines a macro named _res.
#include <httplib.h>

namespace prefviz::server {
namespace {

using nlohmann::json;
using orchestrator::Phase;

/// Manually advanced clock.
struct FakeClock {
  std::shared_ptr<std::atomic<double>> now = std::make_shared<std::atomic<double>>(100.0);
  Clock fn() const {
    auto n = now;
    return [n] { return n->load(); };
  }
};

struct Fixture {
  env::EnvSpec spec = env::make_spec(env::EnvName::kPlanarReacher);
  std::vector<env::EnvState> states;
  viz::EmbeddingSnapshot snapshot;

  explicit Fixture(int n = 6) {
    Rng rng = make_stream(1, 0);
    std::vector<StateId> ids;
    Eigen::MatrixXd coords(n, 2);
    for (int i = 0; i < n; ++i) {
      states.push_back(env::reset(spec, rng));
      ids.push_back(40 + i);
      coords(i, 0) = i;
      coords(i, 1) = -i;
    }
    snapshot = viz::make_snapshot(3, ids, coords);
  }
  orchestrator::RankingRequest request() const { return {snapshot, states, spec, 3}; }
};

/// Polls until the server reports an active snapshot.
void wait_awaiting(SessionServer& s) {
  for (int i = 0; i < 2000; ++i) {
    if (json::parse(s.handle_status().body).at("state") == "awaiting_labels") return;
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  FAIL() << "server never entered awaiting_labels";
}

TEST(Status, FollowsPhases) {
  SessionServer s;
  EXPECT_EQ(json::parse(s.handle_status().body), (json{{"state", "training"}, {"iteration", 0}}));
  s.set_phase(Phase::kTraining, 2);
  EXPECT_EQ(json::parse(s.handle_status().body).at("iteration"), 2);

  Fixture f;
  auto pending = std::async(std::launch::async, [&] { return s.request_ranking(f.request()); });
  wait_awaiting(s);
  EXPECT_EQ(json::parse(s.handle_status().body).at("iteration"), 3);
  s.abort();
  EXPECT_FALSE(pending.get().has_value());

  s.set_phase(Phase::kDone, 8);
  EXPECT_EQ(json::parse(s.handle_status().body).at("state"), "done");
}

TEST(Status, AwaitingPhaseNeverReportedWithoutSnapshot) {
  SessionServer s;
  s.set_phase(Phase::kAwaitingLabels, 1);
  EXPECT_EQ(json::parse(s.handle_status().body).at("state"), "training");
  EXPECT_EQ(s.handle_snapshot().status, 409);
}

TEST(Snapshot, ServesPublishedPointsAndThumbnails) {
  SessionServer s;
  EXPECT_EQ(s.handle_snapshot().status, 409);
  EXPECT_EQ(s.handle_thumbnail(40).status, 409);
  Fixture f;
  auto pending = std::async(std::launch::async, [&] { return s.request_ranking(f.request()); });
  wait_awaiting(s);

  auto snap = s.handle_snapshot();
  ASSERT_EQ(snap.status, 200);
  auto parsed = viz::snapshot_from_json(json::parse(snap.body));
  EXPECT_EQ(parsed.points.size(), 6u);
  EXPECT_EQ(parsed.ids(), f.snapshot.ids());

  auto thumb = s.handle_thumbnail(42);
  ASSERT_EQ(thumb.status, 200);
  EXPECT_EQ(thumb.content_type, "image/png");
  auto image = render::decode_png(thumb.body);
  auto frame = render::render(f.spec, f.states[2]);
  ASSERT_EQ(image.pixels.size(), frame.pixels.size());
  for (size_t i = 0; i < frame.pixels.size(); ++i) ASSERT_EQ(image.pixels[i], render::quantize(frame.pixels[i]));
  EXPECT_EQ(s.handle_thumbnail(7).status, 404);

  s.abort();
  pending.get();
}

TEST(Ranking, AcceptsOnceAndUnblocksWithMeasuredTime) {
  FakeClock clock;
  ServerOptions options;
  options.clock = clock.fn();
  SessionServer s(options);
  Fixture f;
  auto pending = std::async(std::launch::async, [&] { return s.request_ranking(f.request()); });
  wait_awaiting(s);

  clock.now->store(110.0);
  s.handle_snapshot();  // starts the timer
  clock.now->store(130.0);
  s.handle_snapshot();  // does not restart it
  clock.now->store(157.2);

  auto r = s.handle_ranking(R"({"clusters": [[40, 41], [42], [45, 44]]})");
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(json::parse(r.body), (json{{"accepted", true}}));
  auto response = pending.get();
  ASSERT_TRUE(response.has_value());
  EXPECT_NEAR(response->measured_seconds, 47.2, 1e-9);
  EXPECT_EQ(response->ranking.source, oracle::FeedbackSource::kLive);
  EXPECT_EQ(response->ranking.iteration, 3);
  EXPECT_EQ(response->ranking.clusters, (std::vector<std::vector<StateId>>{{40, 41}, {42}, {45, 44}}));

  EXPECT_EQ(s.handle_ranking(R"({"clusters": [[40], [41]]})").status, 409);
  EXPECT_EQ(json::parse(s.handle_status().body).at("state"), "training");
}

TEST(Ranking, TimerFallsBackToPublication) {
  FakeClock clock;
  ServerOptions options;
  options.clock = clock.fn();
  SessionServer s(options);
  Fixture f;
  auto pending = std::async(std::launch::async, [&] { return s.request_ranking(f.request()); });
  wait_awaiting(s);
  clock.now->store(112.5);
  ASSERT_EQ(s.handle_ranking(R"({"clusters": [[40], [41]]})").status, 200);
  EXPECT_NEAR(pending.get()->measured_seconds, 12.5, 1e-12);
}

TEST(Ranking, RejectsInvalidSubmissions) {
  SessionServer s;
  EXPECT_EQ(s.handle_ranking(R"({"clusters": [[40], [41]]})").status, 409);
  Fixture f;
  auto pending = std::async(std::launch::async, [&] { return s.request_ranking(f.request()); });
  wait_awaiting(s);

  EXPECT_EQ(s.handle_ranking("not json").status, 400);
  EXPECT_EQ(s.handle_ranking(R"({"clusters": "x"})").status, 400);
  auto overlap = s.handle_ranking(R"({"clusters": [[40, 41], [41]]})");
  EXPECT_EQ(overlap.status, 422);
  EXPECT_EQ(json::parse(overlap.body), (json{{"accepted", false}, {"reason", "overlap"}}));
  EXPECT_EQ(json::parse(s.handle_ranking(R"({"clusters": [[40], [99]]})").body).at("reason"), "unknown id");
  EXPECT_EQ(json::parse(s.handle_ranking(R"({"clusters": [[40]]})").body).at("reason"), "too few clusters");
  // Rejections leave the snapshot open.
  EXPECT_EQ(s.handle_ranking(R"({"clusters": [[40], [41]]})").status, 200);
  EXPECT_TRUE(pending.get().has_value());
}

TEST(Http, EndToEndOverSocket) {
  SessionServer s;
  s.start();
  ASSERT_GT(s.port(), 0);
  httplib::Client client("127.0.0.1", s.port());

  auto status = client.Get("/status");
  ASSERT_TRUE(status);
  EXPECT_EQ(status->status, 200);
  EXPECT_EQ(status->get_header_value("Access-Control-Allow-Origin"), "*");
  EXPECT_EQ(client.Get("/snapshot")->status, 409);

  Fixture f;
  auto pending = std::async(std::launch::async, [&] { return s.request_ranking(f.request()); });
  wait_awaiting(s);

  // Concurrent readers while a submission lands.
  std::atomic<int> ok_reads{0};
  std::vector<std::thread> readers;
  for (int t = 0; t < 4; ++t)
    readers.emplace_back([&] {
      httplib::Client c("127.0.0.1", s.port());
      for (int i = 0; i < 5; ++i) {
        auto r = c.Get("/state/41/thumbnail");
        if (r && (r->status == 200 || r->status == 409)) ++ok_reads;
      }
    });
  auto snap = client.Get("/snapshot");
  ASSERT_EQ(snap->status, 200);
  EXPECT_EQ(json::parse(snap->body).at("points").size(), 6u);
  EXPECT_EQ(client.Get("/state/12345/thumbnail")->status, 404);
  auto posted = client.Post("/ranking", R"({"clusters": [[40, 43], [41, 42]]})", "application/json");
  ASSERT_TRUE(posted);
  EXPECT_EQ(posted->status, 200);
  for (auto& t : readers) t.join();
  EXPECT_EQ(ok_reads.load(), 20);
  EXPECT_EQ(client.Post("/ranking", R"({"clusters": [[40], [41]]})", "application/json")->status, 409);
  EXPECT_TRUE(pending.get().has_value());

  auto options = client.Options("/ranking");
  ASSERT_TRUE(options);
  EXPECT_EQ(options->status, 204);
  s.stop();
}

TEST(Http, AbortEndpointWakesOrchestrator) {
  SessionServer s;
  s.start();
  Fixture f;
  auto pending = std::async(std::launch::async, [&] { return s.request_ranking(f.request()); });
  wait_awaiting(s);
  httplib::Client client("127.0.0.1", s.port());
  EXPECT_EQ(client.Post("/abort", "", "application/json")->status, 200);
  EXPECT_FALSE(pending.get().has_value());
  s.stop();
}

TEST(Http, PortInUseThrows) {
  SessionServer first;
  first.start();
  ServerOptions options;
  options.port = first.port();
  SessionServer second(options);
  EXPECT_THROW(second.start(), PortInUse);
  first.stop();
}

TEST(Http, DrivesOrchestratorRound) {
  orchestrator::RunConfig c;
  c.iterations = 1;
  c.n_states = 100;
  c.eval_episodes = 3;
  c.ppo_steps_per_iteration = 500;
  c.reward_train.steps = 5;
  c.initial_reward_steps = 5;
  c.contrastive.embed_dim = 16;
  c.contrastive.hidden = {16};
  c.contrastive.epochs = 1;
  c.tsne.n_iter = 250;
  c.feedback = oracle::FeedbackSource::kLive;

  SessionServer s;
  s.start();
  std::thread labeller([&] {
    httplib::Client client("127.0.0.1", s.port());
    for (;;) {
      auto status = client.Get("/status");
      if (status && json::parse(status->body).at("state") == "awaiting_labels") break;
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    auto ids = viz::snapshot_from_json(json::parse(client.Get("/snapshot")->body)).ids();
    json body = {{"clusters", {{ids[0], ids[1]}, {ids[2]}, {ids[3], ids[4]}}}};
    client.Post("/ranking", body.dump(), "application/json");
  });
  orchestrator::Runner runner(c, {}, &s);
  runner.run();
  labeller.join();
  EXPECT_EQ(runner.records().size(), 2u);
  EXPECT_EQ(runner.dataset().size(), 2u * 1 + 2u * 2 + 1u * 2);
  EXPECT_EQ(runner.clock().log().at(0).type, prefs::EventType::kLiveRanking);
  EXPECT_EQ(json::parse(s.handle_status().body).at("state"), "done");
  s.stop();
}

}  // namespace
}  // namespace prefviz::server
