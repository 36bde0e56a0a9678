// Command-line front end. Talks to the library only through nilm/nilm.h.

#include <pthread.h>
#include <signal.h>
#include <unistd.h>

#include <climits>
#include <cstdio>
#include <filesystem>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "nilm/nilm.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Globals {
  std::string out_dir = ".";
  std::int64_t seed = -1;
  std::string log_level = "info";
};

int report(nilm_status status) {
  if (status == NILM_OK) return kExitOk;
  std::fprintf(stderr, "error: %s\n", nilm_last_error());
  return status == NILM_ERR_INVALID_INPUT || status == NILM_ERR_PARSE ? kExitUsage : kExitRuntime;
}

std::string self_path() {
  char buf[PATH_MAX];
  auto n = ::readlink("/proc/self/exe", buf, sizeof buf - 1);
  if (n <= 0) return {};
  return std::string(buf, static_cast<std::size_t>(n));
}

sigset_t stop_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  return set;
}

/// Runs a started service until SIGINT or SIGTERM.
int serve(nilm_status started, nilm_service* svc, const char* what) {
  if (started != NILM_OK) return report(started);
  std::printf("%s listening on port %u\n", what, nilm_service_port(svc));
  std::fflush(stdout);
  auto set = stop_signals();
  int sig = 0;
  sigwait(&set, &sig);
  auto status = nilm_service_stop(svc);
  nilm_service_free(svc);
  return report(status);
}

int manifest(const Globals& g, const std::string& command, const nlohmann::json& details) {
  auto d = details;
  d["seed"] = g.seed;
  d["log_level"] = g.log_level;
  return report(nilm_write_manifest(g.out_dir.c_str(), command.c_str(), d.dump().c_str()));
}

std::string in_out_dir(const Globals& g, const std::string& path) {
  std::filesystem::path p(path);
  return p.is_absolute() ? path : (std::filesystem::path(g.out_dir) / p).string();
}

}  // namespace

int main(int argc, char** argv) {
  // Worker threads inherit this mask; services wait for the signals explicitly.
  auto set = stop_signals();
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  Globals g;
  CLI::App app{"Non-intrusive load monitoring toolkit"};
  app.require_subcommand(1);
  app.add_option("--out-dir", g.out_dir, "Directory for run outputs and the manifest");
  app.add_option("--seed", g.seed, "RNG seed override");
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error or off");

  std::string config, out, data, model, profile, target, format = "csv", listen = "127.0.0.1:5672";
  std::size_t capacity = 10000, start = 50, step = 50, max = 600, workers = 0;
  bool no_bench = false;

  auto* datagen = app.add_subcommand("datagen", "Generate a synthetic labeled dataset");
  datagen->add_option("--config", config, "Scenario JSON")->required();
  datagen->add_option("--out", out, "Output CSV")->required();

  auto* train = app.add_subcommand("train", "Train a model with a chronological 80/20 split");
  train->add_option("--model", model, "gbdt or s2p")->required()->check(CLI::IsMember({"gbdt", "s2p"}));
  train->add_option("--data", data, "Labeled CSV")->required();
  train->add_option("--config", config, "Training JSON");

  auto* eval = app.add_subcommand("eval", "Score a saved model on a labeled dataset");
  eval->add_option("--model", model, "Model file")->required();
  eval->add_option("--data", data, "Labeled CSV")->required();
  eval->add_option("--out", out, "Metrics CSV");

  auto* broker = app.add_subcommand("broker", "Run the message broker");
  broker->add_option("--listen", listen, "host:port");
  broker->add_option("--default-capacity", capacity, "Queue capacity in envelopes");

  auto* worker = app.add_subcommand("cloud-worker", "Run a cloud inference worker");
  worker->add_option("--config", config, "Worker JSON")->required();

  auto* balancer = app.add_subcommand("balancer", "Run the round-robin reverse proxy");
  balancer->add_option("--config", config, "Balancer JSON")->required();

  auto* edge = app.add_subcommand("edge-agent", "Run the edge pipeline for one household");
  edge->add_option("--config", config, "Edge agent JSON")->required();

  auto* bench = app.add_subcommand("bench", "Load tests");
  bench->require_subcommand(1);
  auto* bench_run = bench->add_subcommand("run", "Run a load profile");
  bench_run->add_option("--profile", profile, "Profile JSON");
  bench_run->add_option("--target", target, "http://host:port")->required();
  bench_run->add_option("--out", out, "Report path")->required();
  bench_run->add_option("--format", format, "csv or markdown")->check(CLI::IsMember({"csv", "markdown"}));
  auto* bench_sat = bench->add_subcommand("saturate", "Find the error-free concurrency threshold");
  bench_sat->add_option("--target", target, "http://host:port")->required();
  bench_sat->add_option("--start", start, "First concurrency level");
  bench_sat->add_option("--step", step, "Level increment");
  bench_sat->add_option("--max", max, "Last level");
  bench_sat->add_option("--profile", profile, "Profile JSON (think time, requests, template)");
  bench_sat->add_option("--out", out, "Result JSON");

  auto* demo = app.add_subcommand("demo", "Run the whole system end to end");
  demo->add_option("--config", config, "Demo JSON");
  demo->add_option("--workers", workers, "Number of cloud workers");
  demo->add_flag("--no-bench", no_bench, "Skip the benchmarks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  if (auto st = nilm_set_log_level(g.log_level.c_str()); st != NILM_OK) return report(st);
  std::error_code ec;
  std::filesystem::create_directories(g.out_dir, ec);
  if (ec) {
    std::fprintf(stderr, "error: cannot create %s: %s\n", g.out_dir.c_str(), ec.message().c_str());
    return kExitRuntime;
  }

  if (*datagen) {
    if (int rc = manifest(g, "datagen", {{"config", config}, {"out", out}})) return rc;
    std::size_t rows = 0, corrupted = 0;
    int rc = report(nilm_datagen(config.c_str(), out.c_str(), g.seed, &rows, &corrupted));
    if (rc == 0) std::printf("wrote %zu rows (%zu corrupted) to %s\n", rows, corrupted, out.c_str());
    return rc;
  }
  if (*train) {
    if (int rc = manifest(g, "train", {{"model", model}, {"data", data}, {"config", config}})) return rc;
    nilm_metric_values avg{};
    auto seed = static_cast<std::uint64_t>(g.seed < 0 ? 1 : g.seed);
    int rc = report(nilm_train(model.c_str(), data.c_str(), config.empty() ? nullptr : config.c_str(),
                               g.out_dir.c_str(), seed, &avg));
    if (rc == 0)
      std::printf("held-out average: accuracy %.4f recall %.4f precision %.4f f1 %.4f\n", avg.accuracy, avg.recall,
                  avg.precision, avg.f1);
    return rc;
  }
  if (*eval) {
    if (int rc = manifest(g, "eval", {{"model", model}, {"data", data}, {"out", out}})) return rc;
    nilm_metric_values avg{};
    int rc = report(nilm_eval(model.c_str(), data.c_str(), out.empty() ? nullptr : out.c_str(), &avg));
    if (rc == 0)
      std::printf("average: accuracy %.4f recall %.4f precision %.4f f1 %.4f\n", avg.accuracy, avg.recall,
                  avg.precision, avg.f1);
    return rc;
  }
  if (*broker) {
    if (int rc = manifest(g, "broker", {{"listen", listen}, {"default_capacity", capacity}})) return rc;
    nilm_service* svc = nullptr;
    return serve(nilm_broker_start(listen.c_str(), capacity, &svc), svc, "broker");
  }
  if (*worker) {
    if (int rc = manifest(g, "cloud-worker", {{"config", config}})) return rc;
    nilm_service* svc = nullptr;
    return serve(nilm_worker_start(config.c_str(), &svc), svc, "cloud worker");
  }
  if (*balancer) {
    if (int rc = manifest(g, "balancer", {{"config", config}})) return rc;
    nilm_service* svc = nullptr;
    return serve(nilm_balancer_start(config.c_str(), &svc), svc, "balancer");
  }
  if (*edge) {
    if (int rc = manifest(g, "edge-agent", {{"config", config}})) return rc;
    volatile int stop = 0;
    std::thread waiter([&] {
      int sig = 0;
      sigwait(&set, &sig);
      stop = 1;
    });
    nilm_edge_stats stats{};
    int rc = report(nilm_edge_agent_run(config.c_str(), &stop, &stats));
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    if (rc == 0)
      std::printf("published %zu samples in %zu envelopes, %zu rejected, %zu local results\n",
                  stats.published_samples, stats.envelopes, stats.rejected, stats.local_results);
    return rc;
  }
  if (*bench_run) {
    if (int rc = manifest(g, "bench run", {{"profile", profile}, {"target", target}, {"out", out}, {"format", format}}))
      return rc;
    return report(nilm_bench_run(profile.empty() ? nullptr : profile.c_str(), target.c_str(), out.c_str(),
                                 format.c_str()));
  }
  if (*bench_sat) {
    if (int rc = manifest(g, "bench saturate",
                          {{"target", target}, {"start", start}, {"step", step}, {"max", max}, {"profile", profile}}))
      return rc;
    std::size_t threshold = 0;
    auto out_path = out.empty() ? in_out_dir(g, "saturate.json") : out;
    int rc = report(nilm_bench_saturate(profile.empty() ? nullptr : profile.c_str(), target.c_str(), start, step, max,
                                        out_path.c_str(), &threshold));
    if (rc == 0) std::printf("error-free threshold: %zu\n", threshold);
    return rc;
  }
  if (*demo) {
    if (int rc = manifest(g, "demo", {{"config", config}, {"workers", workers}, {"bench", !no_bench}})) return rc;
    std::string config_json;
    if (!config.empty()) {
      std::FILE* f = std::fopen(config.c_str(), "rb");
      if (!f) {
        std::fprintf(stderr, "error: cannot read %s\n", config.c_str());
        return kExitUsage;
      }
      char buf[4096];
      std::size_t n;
      while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) config_json.append(buf, n);
      std::fclose(f);
    }
    nilm_demo_summary s{};
    auto seed = static_cast<std::uint64_t>(g.seed < 0 ? 7 : g.seed);
    int rc = report(nilm_demo_run(config_json.empty() ? nullptr : config_json.c_str(), g.out_dir.c_str(),
                                  self_path().c_str(), seed, no_bench ? 0 : 1, workers, &s));
    if (rc != 0) return rc;
    std::printf("cloud records %zu / %zu expected, edge records %zu, drained %s, ordered %s\n", s.cloud_records,
                s.expected_windows, s.edge_records, s.drained ? "yes" : "no", s.ordered ? "yes" : "no");
    return s.drained && s.ordered ? kExitOk : kExitRuntime;
  }
  return kExitUsage;
}
