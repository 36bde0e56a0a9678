#include "nilm/nilm.h"

#include <atomic>
#include <memory>
#include <string>
#include <thread>

#include "app/commands.hpp"
#include "app/demo.hpp"
#include "bench/bench.hpp"
#include "broker/server.hpp"
#include "common/error.hpp"
#include "common/io.hpp"
#include "common/log.hpp"
#include "gbdt/features.hpp"
#include "gbdt/gbdt.hpp"
#include "metrics/metrics.hpp"
#include "s2p/model.hpp"
#include "services/balancer.hpp"
#include "services/edge_agent.hpp"
#include "services/worker.hpp"

using namespace nilm;

struct nilm_gbdt {
  gbdt::GbdtModel model;
};

struct nilm_s2p {
  s2p::S2PModel model;
};

struct nilm_service {
  std::unique_ptr<broker::BrokerServer> broker;
  std::unique_ptr<services::CloudWorker> worker;
  std::unique_ptr<services::Balancer> balancer;

  std::uint16_t port() const {
    if (broker) return broker->port();
    if (worker) return worker->port();
    return balancer ? balancer->port() : 0;
  }
  void stop() {
    if (broker) broker->stop();
    if (worker) worker->stop();
    if (balancer) balancer->stop();
  }
};

namespace {

thread_local std::string g_last_error;

nilm_status fail(nilm_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

/// Runs `f`, translating exceptions into status codes.
template <typename F>
nilm_status guard(F&& f) noexcept {
  g_last_error.clear();
  try {
    f();
    return NILM_OK;
  } catch (const Error& e) {
    return fail(static_cast<nilm_status>(e.code()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(NILM_ERR_INVALID_INPUT, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(NILM_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return fail(NILM_ERR_RUNTIME, "out of memory");
  } catch (const std::exception& e) {
    return fail(NILM_ERR_RUNTIME, e.what());
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw InvalidInput(what);
}

nilm_metric_values values_of(const metrics::MetricRow& r) { return {r.accuracy, r.recall, r.precision, r.f1}; }

std::string opt(const char* s) { return s ? s : ""; }

}  // namespace

extern "C" {

const char* nilm_version(void) { return app::kLibraryVersion; }

const char* nilm_last_error(void) { return g_last_error.c_str(); }

const char* nilm_status_name(nilm_status status) {
  switch (status) {
    case NILM_OK: return "ok";
    case NILM_ERR_INVALID_INPUT: return "invalid input";
    case NILM_ERR_PARSE: return "parse error";
    case NILM_ERR_FORMAT: return "format error";
    case NILM_ERR_IO: return "i/o error";
    case NILM_ERR_STATE: return "state error";
    case NILM_ERR_PROTOCOL: return "protocol error";
    case NILM_ERR_NOT_FOUND: return "not found";
    case NILM_ERR_RUNTIME: return "runtime error";
  }
  return "unknown";
}

nilm_status nilm_set_log_level(const char* level) {
  return guard([&] {
    require(level, "level is null");
    set_log_level(level);
  });
}

nilm_status nilm_metrics_compute(const uint8_t* pred, const uint8_t* truth, size_t n, nilm_confusion* counts,
                                 nilm_metric_values* values) {
  return guard([&] {
    require(pred && truth, "null input");
    auto c = metrics::confusion({pred, n}, {truth, n});
    if (counts) *counts = {c.tp, c.tn, c.fp, c.fn};
    if (values) *values = values_of(metrics::evaluate("", c));
  });
}

nilm_status nilm_write_manifest(const char* out_dir, const char* command, const char* details_json) {
  return guard([&] {
    require(out_dir && command, "null argument");
    auto details = details_json ? nlohmann::json::parse(details_json) : nlohmann::json::object();
    app::write_manifest(out_dir, command, details);
  });
}

nilm_status nilm_datagen(const char* config_path, const char* out_csv, int64_t seed, size_t* rows, size_t* corrupted) {
  return guard([&] {
    require(config_path && out_csv, "null argument");
    auto r = app::cmd_datagen(config_path, out_csv,
                              seed >= 0 ? std::optional<std::uint64_t>(static_cast<std::uint64_t>(seed)) : std::nullopt);
    if (rows) *rows = r.rows;
    if (corrupted) *corrupted = r.corrupted;
  });
}

nilm_status nilm_train(const char* model_kind, const char* data_csv, const char* config_path, const char* out_dir,
                       uint64_t seed, nilm_metric_values* average) {
  return guard([&] {
    require(model_kind && data_csv && out_dir, "null argument");
    auto r = app::cmd_train(model_kind, data_csv, opt(config_path), out_dir, seed);
    if (average) *average = values_of(r.report.average);
  });
}

nilm_status nilm_eval(const char* model_path, const char* data_csv, const char* out_csv, nilm_metric_values* average) {
  return guard([&] {
    require(model_path && data_csv, "null argument");
    auto r = app::cmd_eval(model_path, data_csv, opt(out_csv));
    if (average) *average = values_of(r.average);
  });
}

nilm_status nilm_gbdt_load(const char* path, nilm_gbdt** out) {
  return guard([&] {
    require(path && out, "null argument");
    *out = new nilm_gbdt{gbdt::load(path)};
  });
}

size_t nilm_gbdt_window(const nilm_gbdt* m) { return m ? m->model.schema.window : 0; }
size_t nilm_gbdt_target_count(const nilm_gbdt* m) { return m ? m->model.targets.size() : 0; }

nilm_status nilm_gbdt_predict(const nilm_gbdt* m, const double* window, double* probs) {
  return guard([&] {
    require(m && window && probs, "null argument");
    preprocess::WindowBatch w;
    w.length = m->model.schema.window;
    w.values.assign(window, window + w.length * preprocess::kFeatureCount);
    auto p = m->model.predict_proba(w);
    std::copy(p.begin(), p.end(), probs);
  });
}

void nilm_gbdt_free(nilm_gbdt* m) { delete m; }

nilm_status nilm_s2p_load(const char* path, nilm_s2p** out) {
  return guard([&] {
    require(path && out, "null argument");
    *out = new nilm_s2p{s2p::load(path)};
  });
}

size_t nilm_s2p_window(const nilm_s2p* m) { return m ? m->model.window() : 0; }
size_t nilm_s2p_target_count(const nilm_s2p* m) { return m ? m->model.targets().size() : 0; }

nilm_status nilm_s2p_predict(const nilm_s2p* m, const double* windows, size_t batch, double* probs) {
  return guard([&] {
    require(m && windows && probs, "null argument");
    auto n = batch * m->model.window() * preprocess::kFeatureCount;
    auto p = m->model.predict(std::span<const double>(windows, n), batch);
    std::copy(p.begin(), p.end(), probs);
  });
}

void nilm_s2p_free(nilm_s2p* m) { delete m; }

nilm_status nilm_broker_start(const char* listen, size_t default_capacity, nilm_service** out) {
  return guard([&] {
    require(listen && out, "null argument");
    auto svc = std::make_unique<nilm_service>();
    svc->broker = std::make_unique<broker::BrokerServer>(net::parse_endpoint(listen),
                                                         default_capacity ? default_capacity : broker::kDefaultCapacity);
    svc->broker->start();
    *out = svc.release();
  });
}

nilm_status nilm_worker_start(const char* config_path, nilm_service** out) {
  return guard([&] {
    require(config_path && out, "null argument");
    auto svc = std::make_unique<nilm_service>();
    svc->worker = std::make_unique<services::CloudWorker>(services::cloud_config_from_json(read_json_file(config_path)));
    svc->worker->start();
    *out = svc.release();
  });
}

nilm_status nilm_balancer_start(const char* config_path, nilm_service** out) {
  return guard([&] {
    require(config_path && out, "null argument");
    auto svc = std::make_unique<nilm_service>();
    svc->balancer = std::make_unique<services::Balancer>(services::balancer_config_from_json(read_json_file(config_path)));
    svc->balancer->start();
    *out = svc.release();
  });
}

uint16_t nilm_service_port(const nilm_service* s) { return s ? s->port() : 0; }

nilm_status nilm_service_stop(nilm_service* s) {
  return guard([&] {
    require(s, "null service");
    s->stop();
  });
}

void nilm_service_free(nilm_service* s) {
  if (!s) return;
  try {
    s->stop();
  } catch (...) {
  }
  delete s;
}

nilm_status nilm_edge_agent_run(const char* config_path, const volatile int* stop_flag, nilm_edge_stats* stats) {
  return guard([&] {
    require(config_path, "null argument");
    auto cfg = services::edge_config_from_json(read_json_file(config_path));
    std::atomic<bool> stop{false}, done{false};
    std::thread watcher;
    if (stop_flag)
      watcher = std::thread([&] {
        while (!done) {
          if (*stop_flag) stop = true;
          std::this_thread::sleep_for(std::chrono::milliseconds(50));
        }
      });
    services::EdgeRunStats s;
    try {
      s = services::run_edge_agent(cfg, &stop);
    } catch (...) {
      done = true;
      if (watcher.joinable()) watcher.join();
      throw;
    }
    done = true;
    if (watcher.joinable()) watcher.join();
    if (stats) *stats = {s.input, s.rejected, s.published_samples, s.envelopes, s.local_results};
  });
}

nilm_status nilm_bench_run(const char* profile_path, const char* target, const char* out_path, const char* format) {
  return guard([&] {
    require(target && out_path, "null argument");
    auto fmt = bench::parse_format(format ? format : "csv");
    auto profile = profile_path ? bench::profile_from_json(read_json_file(profile_path)) : bench::LoadProfile{};
    auto report = bench::run_load(profile, target);
    bench::emit_report(report, fmt, out_path);
  });
}

nilm_status nilm_bench_saturate(const char* profile_path, const char* target, size_t start, size_t step, size_t max,
                                const char* out_path, size_t* threshold) {
  return guard([&] {
    require(target, "null target");
    bench::SaturateConfig cfg;
    if (profile_path) cfg.profile = bench::profile_from_json(read_json_file(profile_path));
    cfg.start = start;
    cfg.step = step;
    cfg.max = max;
    auto r = bench::saturate(cfg, target);
    if (out_path) write_file(out_path, bench::to_json(r).dump(2) + "\n");
    if (threshold) *threshold = r.threshold;
  });
}

nilm_status nilm_demo_run(const char* config_json, const char* out_dir, const char* executable, uint64_t seed,
                          int run_bench, size_t workers, nilm_demo_summary* summary) {
  return guard([&] {
    require(out_dir && executable, "null argument");
    auto opts = app::demo_options_from_json(config_json ? nlohmann::json::parse(config_json) : nlohmann::json::object());
    opts.out_dir = out_dir;
    opts.executable = executable;
    opts.seed = seed;
    opts.bench = run_bench != 0;
    if (workers) opts.workers = workers;
    auto s = app::run_demo(opts);
    if (summary)
      *summary = {s.live_samples, s.expected_windows, s.cloud_records, s.edge_records, s.drained ? 1 : 0,
                  s.ordered ? 1 : 0};
  });
}

}  // extern "C"
