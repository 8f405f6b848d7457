#include "cli.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "aggregate.hpp"
#include "prefviz/orchestrator.hpp"
#include "prefviz/session_server.hpp"

namespace prefviz::cli {

namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted.store(true); }

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

fs::path default_out_root() {
  if (const char* env = std::getenv("PREFVIZ_OUT"); env && *env) return env;
  return "runs";
}

orchestrator::RunConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  try {
    return orchestrator::config_from_json(nlohmann::json::parse(orchestrator::read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("bad config file " + path + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

std::string run_name(const orchestrator::RunConfig& c) {
  return std::string(orchestrator::to_string(c.method)) + "-" + std::string(env::to_string(c.env)) + "-s" +
         std::to_string(c.seed);
}

struct RunFlags {
  std::string method;
  std::string env;
  std::string feedback;
  std::uint64_t seed = 0;
  int iterations = -1;
  std::string out;
  std::string config;
};

void apply(const RunFlags& f, orchestrator::RunConfig& c, bool seed_set) {
  if (!f.method.empty()) c.method = *orchestrator::parse_method(f.method);
  if (!f.env.empty()) c.env = *env::parse_env_name(f.env);
  if (!f.feedback.empty()) c.feedback = *oracle::parse_feedback_source(f.feedback);
  if (seed_set) c.seed = f.seed;
  if (f.iterations >= 0) c.iterations = f.iterations;
  try {
    orchestrator::validate(c);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

int do_run(const RunFlags& f, bool seed_set, std::ostream& out) {
  auto config = load_config(f.config);
  apply(f, config, seed_set);
  if (config.feedback == oracle::FeedbackSource::kLive) throw UsageError("live feedback runs through `prefviz serve`");
  fs::path dir = (f.out.empty() ? default_out_root() : fs::path(f.out)) / run_name(config);
  auto records = orchestrator::run(config, dir);
  const auto& last = records.back();
  out << dir.string() << ": " << records.size() << " records, final mean reward " << last.mean_reward << " at "
      << last.human_seconds << " s\n";
  return kExitOk;
}

int do_aggregate(const std::vector<std::string>& dirs, const std::string& out_path, std::ostream& out) {
  std::vector<fs::path> paths(dirs.begin(), dirs.end());
  PlotSeries series;
  try {
    series = aggregate_dirs(paths);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  fs::path target = out_path.empty() ? default_out_root() / "series.csv" : fs::path(out_path);
  orchestrator::write_file(target, series_csv(series));
  out << target.string() << ": " << series.points.size() << " points\n";
  return kExitOk;
}

struct ServeFlags {
  int port = 8080;
  std::string run_config;
  std::string out;
  std::string static_dir = "webui/dist";
  bool exit_when_done = false;
};

int do_serve(const ServeFlags& f, std::ostream& out, std::ostream& err) {
  auto config = load_config(f.run_config);
  config.feedback = oracle::FeedbackSource::kLive;
  if (config.method != orchestrator::Method::kClrvis) throw UsageError("serve needs a clrvis run config");
  try {
    orchestrator::validate(config);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  server::ServerOptions options;
  options.port = f.port;
  if (fs::is_directory(f.static_dir)) options.static_dir = fs::path(f.static_dir);
  server::SessionServer session(options);
  try {
    session.start();
  } catch (const server::PortInUse& e) {
    err << "error: " << e.what() << '\n';
    return kExitPortInUse;
  }
  out << "serving on http://127.0.0.1:" << session.port() << '\n' << std::flush;

  g_interrupted.store(false);
  auto previous_int = std::signal(SIGINT, on_signal);
  auto previous_term = std::signal(SIGTERM, on_signal);
  std::atomic<bool> finished{false};
  std::thread watcher([&] {
    while (!finished.load()) {
      if (g_interrupted.load()) session.abort();
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
  });

  fs::path dir = (f.out.empty() ? default_out_root() : fs::path(f.out)) / run_name(config);
  int code = kExitOk;
  try {
    orchestrator::Runner runner(config, dir, &session);
    runner.run();
    if (runner.aborted()) {
      out << "session aborted; checkpoint at " << (dir / "checkpoints").string() << '\n';
    } else {
      out << "run complete: " << dir.string() << '\n' << std::flush;
      while (!f.exit_when_done && !g_interrupted.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    code = kExitFailure;
  }
  finished.store(true);
  watcher.join();
  std::signal(SIGINT, previous_int);
  std::signal(SIGTERM, previous_term);
  session.stop();
  return code;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Preference-based reward learning with cluster rankings", "prefviz"};
  app.require_subcommand(1);

  const std::vector<std::string> methods{"clrvis", "drlhp", "oracle"};
  const std::vector<std::string> envs{"planar-reacher", "tilt-stand", "chain-curl"};
  const std::vector<std::string> sources{"simulated", "live"};

  RunFlags run_flags;
  auto* run = app.add_subcommand("run", "Execute one run and write its run directory");
  run->add_option("--method", run_flags.method, "clrvis | drlhp | oracle")->check(CLI::IsMember(methods));
  run->add_option("--env", run_flags.env, "planar-reacher | tilt-stand | chain-curl")->check(CLI::IsMember(envs));
  run->add_option("--feedback", run_flags.feedback, "simulated | live")->check(CLI::IsMember(sources));
  auto* seed_opt = run->add_option("--seed", run_flags.seed, "Random seed");
  run->add_option("--iterations", run_flags.iterations, "Labelling rounds K")->check(CLI::NonNegativeNumber);
  run->add_option("--out", run_flags.out, "Output root (default $PREFVIZ_OUT or ./runs)");
  run->add_option("--config", run_flags.config, "RunConfig JSON; flags override it")->check(CLI::ExistingFile);

  std::vector<std::string> agg_dirs;
  std::string agg_out;
  auto* agg = app.add_subcommand("aggregate", "Mean and SEM across seeds into series.csv");
  agg->add_option("run_dirs", agg_dirs, "Run directories")->required()->check(CLI::ExistingDirectory);
  agg->add_option("--out", agg_out, "Output file (default <out root>/series.csv)");

  ServeFlags serve_flags;
  auto* serve = app.add_subcommand("serve", "Run a live-feedback session with the labelling server");
  serve->add_option("--port", serve_flags.port, "Listen port")->check(CLI::Range(0, 65535));
  serve->add_option("--run-config", serve_flags.run_config, "RunConfig JSON")->check(CLI::ExistingFile);
  serve->add_option("--out", serve_flags.out, "Output root (default $PREFVIZ_OUT or ./runs)");
  serve->add_option("--static", serve_flags.static_dir, "Directory of UI assets");
  serve->add_flag("--exit-when-done", serve_flags.exit_when_done, "Exit once the final round completes");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return kExitUsage;
  }

  try {
    if (run->parsed()) return do_run(run_flags, seed_opt->count() > 0, out);
    if (agg->parsed()) return do_aggregate(agg_dirs, agg_out, out);
    return do_serve(serve_flags, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace prefviz::cli
