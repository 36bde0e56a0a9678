#include "app/demo.hpp"

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <httplib.h>

#include <chrono>
#include <cstring>
#include <thread>

#include <spdlog/spdlog.h>

#include "app/commands.hpp"
#include "common/error.hpp"
#include "common/io.hpp"
#include "common/net.hpp"
#include "datagen/datagen.hpp"
#include "services/configs.hpp"

extern char** environ;

namespace nilm::app {

using namespace std::chrono_literals;
using Clock = std::chrono::steady_clock;

DemoOptions::DemoOptions() {
  profile.levels = {1, 10, 50};
  profile.think_time_s = 2;
  profile.repetitions = 1;
  profile.requests_per_thread = 2;
}

DemoOptions demo_options_from_json(const nlohmann::json& j) {
  try {
    DemoOptions o;
    o.seed = j.value("seed", o.seed);
    o.workers = j.value("workers", o.workers);
    o.live_samples = j.value("live_samples", o.live_samples);
    o.train_samples = j.value("train_samples", o.train_samples);
    o.window = j.value("window", o.window);
    o.batch_threshold = j.value("batch_threshold", o.batch_threshold);
    o.gbdt_trees = j.value("gbdt_trees", o.gbdt_trees);
    o.s2p_epochs = j.value("s2p_epochs", o.s2p_epochs);
    o.bench = j.value("bench", o.bench);
    if (j.contains("profile")) o.profile = bench::profile_from_json(j.at("profile"));
    o.child_log_level = j.value("child_log_level", o.child_log_level);
    o.drain_timeout_s = j.value("drain_timeout_s", o.drain_timeout_s);
    if (o.workers < 1 || o.workers > 16) throw InvalidInput("workers must be in [1,16]");
    if (o.window < 3 || o.window % 2 == 0) throw InvalidInput("window must be odd and >= 3");
    if (o.live_samples < o.window) throw InvalidInput("live_samples must cover one window");
    return o;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("demo config: ") + e.what());
  }
}

nlohmann::json DemoSummary::to_json() const {
  return {{"live_samples", live_samples},
          {"expected_windows", expected_windows},
          {"cloud_records", cloud_records},
          {"edge_records", edge_records},
          {"drained", drained},
          {"ordered", ordered},
          {"household_id", household_id},
          {"results_dir", results_dir.string()},
          {"bench", bench}};
}

namespace {

class Child {
 public:
  Child(std::string name, const std::filesystem::path& exe, const std::vector<std::string>& args,
        const std::filesystem::path& log)
      : name_(std::move(name)) {
    std::vector<std::string> argv_s{exe.string()};
    argv_s.insert(argv_s.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_s) argv.push_back(a.data());
    argv.push_back(nullptr);
    posix_spawn_file_actions_t fa;
    posix_spawn_file_actions_init(&fa);
    posix_spawn_file_actions_addopen(&fa, STDOUT_FILENO, log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    posix_spawn_file_actions_adddup2(&fa, STDOUT_FILENO, STDERR_FILENO);
    int rc = posix_spawn(&pid_, exe.c_str(), &fa, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&fa);
    if (rc != 0) throw IoError("cannot start " + name_ + ": " + std::strerror(rc));
    spdlog::info("started {} (pid {})", name_, pid_);
  }
  ~Child() { terminate(); }
  Child(const Child&) = delete;
  Child& operator=(const Child&) = delete;

  const std::string& name() const noexcept { return name_; }

  /// Exit status if the child has finished.
  std::optional<int> poll() {
    if (exited_) return status_;
    int st = 0;
    if (::waitpid(pid_, &st, WNOHANG) == pid_) finish(st);
    return exited_ ? std::optional<int>(status_) : std::nullopt;
  }

  int wait(std::chrono::seconds timeout) {
    auto deadline = Clock::now() + timeout;
    while (Clock::now() < deadline) {
      if (auto st = poll()) return *st;
      std::this_thread::sleep_for(20ms);
    }
    throw IoError(name_ + " did not finish in time");
  }

  void terminate() {
    if (exited_ || pid_ <= 0) return;
    ::kill(pid_, SIGTERM);
    auto deadline = Clock::now() + 5s;
    while (Clock::now() < deadline) {
      if (poll()) return;
      std::this_thread::sleep_for(20ms);
    }
    ::kill(pid_, SIGKILL);
    int st = 0;
    ::waitpid(pid_, &st, 0);
    finish(st);
  }

 private:
  void finish(int st) {
    exited_ = true;
    status_ = WIFEXITED(st) ? WEXITSTATUS(st) : 128 + (WIFSIGNALED(st) ? WTERMSIG(st) : 0);
  }

  std::string name_;
  pid_t pid_ = -1;
  bool exited_ = false;
  int status_ = 0;
};

void wait_listening(Child& child, const net::Endpoint& ep) {
  auto deadline = Clock::now() + 15s;
  while (Clock::now() < deadline) {
    if (auto st = child.poll()) throw IoError(child.name() + " exited with status " + std::to_string(*st));
    if (net::probe_tcp(ep, 200ms)) return;
    std::this_thread::sleep_for(20ms);
  }
  throw IoError(child.name() + " did not start listening on " + ep.str());
}

nlohmann::json query_results(const net::Endpoint& ep, const std::string& household, const std::string& producer) {
  httplib::Client cli(ep.host, ep.port);
  cli.set_keep_alive(false);
  cli.set_read_timeout(10s);
  auto res = cli.Get("/v1/results?household_id=" + household + "&producer=" + producer);
  if (!res || res->status != 200) throw IoError("results query failed");
  return nlohmann::json::parse(res->body).at("records");
}

void write_config(const std::filesystem::path& path, const nlohmann::json& j) { write_file(path, j.dump(2) + "\n"); }

}  // namespace

DemoSummary run_demo(const DemoOptions& opts) {
  if (opts.executable.empty()) throw InvalidInput("demo needs the path of the nilm executable");
  const auto out = std::filesystem::absolute(opts.out_dir);
  std::filesystem::create_directories(out / "logs");
  DemoSummary summary;
  summary.household_id = "house-1";

  // Models: trained in-process on their own synthetic history.
  datagen::ScenarioConfig train_cfg;
  train_cfg.catalog = ApplianceCatalog::household_default();
  train_cfg.duration_s = static_cast<double>(opts.train_samples) * train_cfg.sample_period_s;
  train_cfg.seed = opts.seed;
  auto train_data = datagen::generate_scenario(train_cfg);
  datagen::write_csv(train_data, out / "train.csv");
  TrainSettings settings = train_settings_from_json(nlohmann::json::object());
  settings.window = opts.window;
  settings.s2p.window = opts.window;
  settings.gbdt.n_trees = opts.gbdt_trees;
  settings.s2p.epochs = opts.s2p_epochs;
  auto gbdt_model = fit_gbdt(train_data.samples, train_data.targets, settings);
  gbdt::save(gbdt_model, out / "gbdt_model.json");
  auto s2p_model = fit_s2p(train_data.samples, train_data.targets, settings, opts.seed);
  s2p::save(s2p_model, out / "s2p_model.json");

  // Live stream for the edge agent.
  auto live_cfg = train_cfg;
  live_cfg.seed = opts.seed + 1;
  live_cfg.start_ts_ms = train_cfg.start_ts_ms + static_cast<std::int64_t>(train_cfg.duration_s * 1000);
  live_cfg.duration_s = static_cast<double>(opts.live_samples) * live_cfg.sample_period_s;
  auto live = datagen::generate_scenario(live_cfg);
  datagen::write_csv(live, out / "live.csv");
  summary.live_samples = live.samples.size();
  summary.expected_windows = live.samples.size() >= opts.window ? live.samples.size() - opts.window + 1 : 0;

  const auto results_dir = out / "results";
  std::filesystem::remove_all(results_dir);
  std::filesystem::remove_all(out / "edge_results");
  summary.results_dir = results_dir;

  net::Endpoint broker_ep{"127.0.0.1", net::find_free_port()};
  net::Endpoint balancer_ep{"127.0.0.1", net::find_free_port()};
  std::vector<net::Endpoint> worker_eps;
  for (std::size_t i = 0; i < opts.workers; ++i) worker_eps.push_back({"127.0.0.1", net::find_free_port()});

  std::vector<std::unique_ptr<Child>> children;  // torn down in reverse on scope exit
  auto spawn = [&](const std::string& name, std::vector<std::string> args) -> Child& {
    auto run_dir = (out / "runs" / name).string();
    args.insert(args.begin(), {"--log-level", opts.child_log_level, "--out-dir", run_dir});
    children.push_back(std::make_unique<Child>(name, opts.executable, args, out / "logs" / (name + ".log")));
    return *children.back();
  };
  auto teardown = [&] {
    while (!children.empty()) children.pop_back();
  };

  try {
    wait_listening(spawn("broker", {"broker", "--listen", broker_ep.str(), "--default-capacity", "10000"}), broker_ep);

    for (std::size_t i = 0; i < opts.workers; ++i) {
      services::CloudConfig wc;
      wc.broker = broker_ep;
      wc.batch_threshold = opts.batch_threshold;
      wc.model_path = (out / "s2p_model.json").string();
      wc.persist_dir = results_dir.string();
      wc.listen = worker_eps[i];
      wc.worker_name = "worker-" + std::to_string(i + 1);
      wc.consume = i == 0;  // one consume loop per queue
      auto path = out / ("worker_" + std::to_string(i + 1) + ".json");
      write_config(path, services::to_json(wc));
      wait_listening(spawn(wc.worker_name, {"cloud-worker", "--config", path.string()}), worker_eps[i]);
    }

    services::BalancerConfig bc;
    bc.listen = balancer_ep;
    bc.workers = worker_eps;
    write_config(out / "balancer.json", services::to_json(bc));
    wait_listening(spawn("balancer", {"balancer", "--config", (out / "balancer.json").string()}), balancer_ep);

    services::EdgeAgentConfig ec;
    ec.input_csv = (out / "live.csv").string();
    ec.broker = broker_ep;
    ec.household_id = summary.household_id;
    ec.mode = services::EdgeMode::edge_infer;
    ec.window = opts.window;
    ec.model_path = (out / "gbdt_model.json").string();
    ec.results_dir = (out / "edge_results").string();
    write_config(out / "edge_agent.json", services::to_json(ec));
    auto& edge = spawn("edge-agent", {"edge-agent", "--config", (out / "edge_agent.json").string()});
    if (int st = edge.wait(std::chrono::seconds(opts.drain_timeout_s)); st != 0)
      throw IoError("edge agent exited with status " + std::to_string(st));

    // Drain: the consumer flushes partial batches once the queue goes quiet.
    auto deadline = Clock::now() + std::chrono::seconds(opts.drain_timeout_s);
    nlohmann::json records = nlohmann::json::array();
    while (Clock::now() < deadline) {
      records = query_results(balancer_ep, summary.household_id, "cloud");
      if (records.size() >= summary.expected_windows) break;
      std::this_thread::sleep_for(200ms);
    }
    summary.cloud_records = records.size();
    summary.drained = records.size() == summary.expected_windows;
    summary.ordered = true;
    for (std::size_t i = 1; i < records.size(); ++i)
      if (records[i]["ts_ms"].get<std::int64_t>() < records[i - 1]["ts_ms"].get<std::int64_t>()) summary.ordered = false;
    summary.edge_records = query_results(balancer_ep, summary.household_id, "edge").size();
    write_file(out / "cloud_results.json", records.dump() + "\n");

    if (opts.bench) {
      const std::string target = "http://" + balancer_ep.str();
      auto cloud_profile = opts.profile;
      nlohmann::json window = nlohmann::json::array();
      for (std::size_t t = 0; t < opts.window; ++t)
        window.push_back({live.samples[t].active_power, live.samples[t].reactive_power});
      cloud_profile.request = {"POST", "/v1/infer",
                               nlohmann::json{{"household_id", summary.household_id}, {"mode", "cloud-infer"}, {"window", window}}.dump(),
                               "application/json"};
      auto edge_profile = opts.profile;
      edge_profile.request = {"GET", "/v1/result/latest?household_id=" + summary.household_id, "", "application/json"};
      auto cloud_report = bench::run_load(cloud_profile, target);
      auto edge_report = bench::run_load(edge_profile, target);
      for (auto [name, report] : {std::pair{"cloud", &cloud_report}, std::pair{"edge", &edge_report}}) {
        bench::emit_report(*report, bench::Format::csv, out / ("bench_" + std::string(name) + ".csv"));
        bench::emit_report(*report, bench::Format::markdown, out / ("bench_" + std::string(name) + ".md"));
      }
      auto ratios = bench::compare_reports(edge_report, cloud_report);
      write_file(out / "edge_vs_cloud.md", bench::ratio_markdown(ratios));
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& r : ratios)
        rows.push_back({{"concurrency", r.concurrency}, {"edge_ms", r.edge_ms}, {"cloud_ms", r.cloud_ms}, {"ratio", r.ratio}});
      summary.bench = {{"workers", opts.workers}, {"ratios", rows}};
    }
  } catch (...) {
    teardown();
    throw;
  }
  teardown();
  write_file(out / "summary.json", summary.to_json().dump(2) + "\n");
  return summary;
}

}  // namespace nilm::app
