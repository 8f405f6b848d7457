#include "prefviz/session_server.hpp"

#include <chrono>
#include <condition_variable>
#include <mutex>
#include <thread>
#include <unordered_map>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "prefviz/render.hpp"

namespace prefviz::server {

using nlohmann::json;
using orchestrator::Phase;

double steady_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

namespace {

/// Immutable once published.
struct Published {
  std::string snapshot_json;
  std::vector<StateId> ids;
  std::unordered_map<StateId, env::EnvState> states;
  env::EnvSpec spec;
  int iteration = 0;
  double published_at = 0.0;
};

HttpResponse json_response(int status, const json& body) { return {status, "application/json", body.dump()}; }

HttpResponse error_response(int status, const std::string& reason) {
  return json_response(status, {{"accepted", false}, {"reason", reason}});
}

}  // namespace

struct SessionServer::Impl {
  ServerOptions options;
  httplib::Server http;
  std::thread worker;
  int bound_port = -1;

  mutable std::mutex mutex;
  std::condition_variable cv;
  Phase phase = Phase::kTraining;
  int iteration = 0;
  std::shared_ptr<const Published> active;
  std::optional<double> load_time;
  std::optional<orchestrator::RankingResponse> accepted;
  bool aborted = false;
};

SessionServer::SessionServer(ServerOptions options) : impl_(std::make_unique<Impl>()) {
  impl_->options = std::move(options);
  if (!impl_->options.clock) impl_->options.clock = steady_seconds;
}

SessionServer::~SessionServer() {
  abort();
  stop();
}

void SessionServer::start() {
  auto& http = impl_->http;
  // SO_REUSEADDR without SO_REUSEPORT, so binding a port in use fails.
  http.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  http.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                            {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                            {"Access-Control-Allow-Headers", "Content-Type"}});
  auto send = [](httplib::Response& res, const HttpResponse& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  http.Get("/status", [this, send](const httplib::Request&, httplib::Response& res) { send(res, handle_status()); });
  http.Get("/snapshot", [this, send](const httplib::Request&, httplib::Response& res) { send(res, handle_snapshot()); });
  http.Get(R"(/state/(-?\d+)/thumbnail)", [this, send](const httplib::Request& req, httplib::Response& res) {
    StateId id = 0;
    try {
      id = std::stoll(req.matches[1]);
    } catch (const std::exception&) {
      send(res, error_response(404, "unknown id"));
      return;
    }
    send(res, handle_thumbnail(id));
  });
  http.Post("/ranking", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, handle_ranking(req.body));
  });
  http.Post("/abort", [this, send](const httplib::Request&, httplib::Response& res) { send(res, handle_abort()); });
  http.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  if (impl_->options.static_dir && std::filesystem::is_directory(*impl_->options.static_dir))
    http.set_mount_point("/", impl_->options.static_dir->string());

  const auto& host = impl_->options.host;
  if (impl_->options.port == 0) {
    impl_->bound_port = http.bind_to_any_port(host);
    if (impl_->bound_port < 0) throw PortInUse("no free port on " + host);
  } else {
    if (!http.bind_to_port(host, impl_->options.port))
      throw PortInUse("port " + std::to_string(impl_->options.port) + " is in use");
    impl_->bound_port = impl_->options.port;
  }
  impl_->worker = std::thread([this] { impl_->http.listen_after_bind(); });
  impl_->http.wait_until_ready();
}

void SessionServer::stop() {
  if (!impl_->worker.joinable()) return;
  impl_->http.stop();
  impl_->worker.join();
}

int SessionServer::port() const { return impl_->bound_port; }

std::optional<orchestrator::RankingResponse> SessionServer::request_ranking(
    const orchestrator::RankingRequest& request) {
  auto pub = std::make_shared<Published>();
  pub->snapshot_json = viz::to_json(request.snapshot).dump();
  pub->ids = request.snapshot.ids();
  for (size_t i = 0; i < pub->ids.size(); ++i) pub->states.emplace(pub->ids[i], request.states.at(i));
  pub->spec = request.spec;
  pub->iteration = request.iteration;
  pub->published_at = impl_->options.clock();

  std::unique_lock lock(impl_->mutex);
  impl_->active = std::move(pub);
  impl_->load_time.reset();
  impl_->accepted.reset();
  impl_->phase = Phase::kAwaitingLabels;
  impl_->iteration = request.iteration;
  impl_->cv.wait(lock, [&] { return impl_->accepted.has_value() || impl_->aborted; });
  if (!impl_->accepted) {
    impl_->active.reset();
    return std::nullopt;
  }
  auto response = std::move(*impl_->accepted);
  impl_->accepted.reset();
  return response;
}

void SessionServer::set_phase(Phase phase, int iteration) {
  // Awaiting is entered only by request_ranking, once a snapshot exists.
  if (phase == Phase::kAwaitingLabels) return;
  std::lock_guard lock(impl_->mutex);
  impl_->active.reset();
  impl_->phase = phase;
  impl_->iteration = iteration;
}

void SessionServer::abort() {
  {
    std::lock_guard lock(impl_->mutex);
    impl_->aborted = true;
  }
  impl_->cv.notify_all();
}

HttpResponse SessionServer::handle_status() const {
  std::lock_guard lock(impl_->mutex);
  return json_response(200, {{"state", orchestrator::to_string(impl_->phase)}, {"iteration", impl_->iteration}});
}

HttpResponse SessionServer::handle_snapshot() {
  std::shared_ptr<const Published> pub;
  {
    std::lock_guard lock(impl_->mutex);
    if (!impl_->active || impl_->phase != Phase::kAwaitingLabels) return error_response(409, "no snapshot active");
    pub = impl_->active;
    if (!impl_->load_time) impl_->load_time = impl_->options.clock();
  }
  return {200, "application/json", pub->snapshot_json};
}

HttpResponse SessionServer::handle_thumbnail(StateId id) const {
  std::shared_ptr<const Published> pub;
  {
    std::lock_guard lock(impl_->mutex);
    pub = impl_->active;
  }
  if (!pub) return error_response(409, "no snapshot active");
  auto it = pub->states.find(id);
  if (it == pub->states.end()) return error_response(404, "unknown id");
  return {200, "image/png", render::encode_png(render::render(pub->spec, it->second))};
}

HttpResponse SessionServer::handle_ranking(const std::string& body) {
  oracle::ClusterRanking ranking;
  try {
    auto j = json::parse(body);
    ranking.clusters = j.at("clusters").get<std::vector<std::vector<StateId>>>();
  } catch (const std::exception&) {
    return error_response(400, "malformed ranking");
  }
  {
    std::lock_guard lock(impl_->mutex);
    if (!impl_->active || impl_->phase != Phase::kAwaitingLabels || impl_->accepted)
      return error_response(409, "no ranking expected");
    if (auto reason = oracle::validate(ranking, impl_->active->ids)) return error_response(422, *reason);
    ranking.source = oracle::FeedbackSource::kLive;
    ranking.iteration = impl_->active->iteration;
    double start = impl_->load_time.value_or(impl_->active->published_at);
    double seconds = std::max(0.0, impl_->options.clock() - start);
    impl_->accepted = orchestrator::RankingResponse{std::move(ranking), seconds};
    impl_->active.reset();
    impl_->phase = Phase::kTraining;
  }
  impl_->cv.notify_all();
  return json_response(200, {{"accepted", true}});
}

HttpResponse SessionServer::handle_abort() {
  abort();
  return json_response(200, {{"aborted", true}});
}

}  // namespace prefviz::server
