#pragma once

// HTTP bridge between a live labeller and a blocked orchestrator.
//
//   GET  /status                -> {"state": training|awaiting_labels|done, "iteration": i}
//   GET  /snapshot              -> EmbeddingSnapshot JSON; 409 when none is active
//   GET  /state/{id}/thumbnail  -> image/png; 404 for ids outside the snapshot
//   POST /ranking               -> {"accepted": true} | 422 {"accepted": false, "reason": ...} | 409
//   POST /abort                 -> ends a pending ranking request with no result
//
// Labelling time runs from the first GET /snapshot of a published snapshot
// (or its publication, if never fetched) to the accepted POST /ranking.

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "prefviz/orchestrator.hpp"

namespace prefviz::server {

/// Monotonic seconds.
using Clock = std::function<double()>;

double steady_seconds();

struct ServerOptions {
  std::string host = "127.0.0.1";
  /// 0 picks a free port.
  int port = 0;
  std::optional<std::filesystem::path> static_dir;
  Clock clock = steady_seconds;
};

class PortInUse : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

class SessionServer final : public orchestrator::FeedbackProvider {
 public:
  explicit SessionServer(ServerOptions options = {});
  ~SessionServer() override;
  SessionServer(const SessionServer&) = delete;
  SessionServer& operator=(const SessionServer&) = delete;

  /// Binds and serves on a background thread. Throws PortInUse when the
  /// port cannot be bound.
  void start();
  void stop();
  /// Bound port; valid after start().
  int port() const;

  /// Publishes the snapshot and blocks until a ranking is accepted or the
  /// session is aborted.
  std::optional<orchestrator::RankingResponse> request_ranking(const orchestrator::RankingRequest& request) override;
  void set_phase(orchestrator::Phase phase, int iteration) override;
  /// Wakes a pending request_ranking with no result.
  void abort();

  // Route handlers, callable without a socket.
  HttpResponse handle_status() const;
  HttpResponse handle_snapshot();
  HttpResponse handle_thumbnail(StateId id) const;
  HttpResponse handle_ranking(const std::string& body);
  HttpResponse handle_abort();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace prefviz::server
