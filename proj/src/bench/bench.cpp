#include "bench/bench.hpp"

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "common/error.hpp"
#include "common/io.hpp"
#include "common/net.hpp"

namespace nilm::bench {

using Clock = std::chrono::steady_clock;

void LoadProfile::validate() const {
  if (levels.empty()) throw InvalidInput("profile needs at least one concurrency level");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i] == 0) throw InvalidInput("concurrency levels must be positive");
    if (i > 0 && levels[i] <= levels[i - 1]) throw InvalidInput("concurrency levels must ascend");
  }
  if (!(think_time_s >= 0)) throw InvalidInput("think time must be >= 0");
  if (repetitions == 0 || requests_per_thread == 0) throw InvalidInput("repetitions and requests must be >= 1");
  if (request.method != "GET" && request.method != "POST") throw InvalidInput("method must be GET or POST");
}

LoadProfile profile_from_json(const nlohmann::json& j) {
  try {
    LoadProfile p;
    if (j.contains("levels")) p.levels = j.at("levels").get<std::vector<std::size_t>>();
    p.think_time_s = j.value("think_time_s", p.think_time_s);
    p.repetitions = j.value("repetitions", p.repetitions);
    p.requests_per_thread = j.value("requests_per_thread", p.requests_per_thread);
    p.ramp_up_s = j.value("ramp_up_s", p.ramp_up_s);
    p.timeout_ms = j.value("timeout_ms", p.timeout_ms);
    if (j.contains("request")) {
      const auto& r = j.at("request");
      p.request.method = r.value("method", p.request.method);
      p.request.path = r.value("path", p.request.path);
      if (r.contains("body")) p.request.body = r.at("body").is_string() ? r.at("body").get<std::string>() : r.at("body").dump();
      p.request.content_type = r.value("content_type", p.request.content_type);
    }
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("load profile: ") + e.what());
  }
}

nlohmann::json to_json(const LoadProfile& p) {
  return {{"levels", p.levels},
          {"think_time_s", p.think_time_s},
          {"repetitions", p.repetitions},
          {"requests_per_thread", p.requests_per_thread},
          {"ramp_up_s", p.ramp_up_s},
          {"timeout_ms", p.timeout_ms},
          {"request",
           {{"method", p.request.method},
            {"path", p.request.path},
            {"body", p.request.body},
            {"content_type", p.request.content_type}}}};
}

double percentile(std::vector<double> samples, double p) {
  if (samples.empty()) throw InvalidInput("percentile of an empty sample set");
  if (!(p > 0 && p <= 100)) throw InvalidInput("percentile must be in (0, 100]");
  std::sort(samples.begin(), samples.end());
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(samples.size()) - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, samples.size());
  return samples[rank - 1];
}

LevelReport summarize(std::size_t concurrency, std::vector<double> latencies_ms, std::size_t errors,
                      std::size_t successes, double duration_s) {
  LevelReport r;
  r.concurrency = concurrency;
  r.requests = latencies_ms.size();
  r.errors = errors;
  if (!latencies_ms.empty()) {
    r.average_ms = std::accumulate(latencies_ms.begin(), latencies_ms.end(), 0.0) / static_cast<double>(r.requests);
    r.median_ms = percentile(latencies_ms, 50);
    r.p90_ms = percentile(latencies_ms, 90);
    r.max_ms = *std::max_element(latencies_ms.begin(), latencies_ms.end());
    r.min_ms = *std::min_element(latencies_ms.begin(), latencies_ms.end());
  }
  r.throughput_tps = duration_s > 0 ? static_cast<double>(successes) / duration_s : 0;
  return r;
}

namespace {

struct Target {
  std::string host;
  int port = 80;
  std::string prefix;
};

Target parse_target(const std::string& url) {
  std::string rest = url;
  if (rest.starts_with("http://")) rest = rest.substr(7);
  else if (rest.find("://") != std::string::npos) throw InvalidInput("only http:// targets are supported");
  Target t;
  auto slash = rest.find('/');
  if (slash != std::string::npos) {
    t.prefix = rest.substr(slash);
    if (t.prefix == "/") t.prefix.clear();
    rest = rest.substr(0, slash);
  }
  auto colon = rest.rfind(':');
  if (colon == std::string::npos) {
    t.host = rest;
  } else {
    t.host = rest.substr(0, colon);
    auto port = parse_int(rest.substr(colon + 1));
    if (!port || *port <= 0 || *port > 65535) throw InvalidInput("bad port in target '" + url + "'");
    t.port = static_cast<int>(*port);
  }
  if (t.host.empty()) throw InvalidInput("target '" + url + "' has no host");
  return t;
}

struct Sink {
  std::mutex mu;
  std::vector<double> latencies;
  std::size_t errors = 0;
  std::size_t successes = 0;

  void add(double ms, bool ok) {
    std::lock_guard lock(mu);
    latencies.push_back(ms);
    ok ? ++successes : ++errors;
  }
};

/// One request on a fresh connection, closed afterwards.
bool send_once(const Target& t, const LoadProfile& p) {
  httplib::Client cli(t.host, t.port);
  cli.set_keep_alive(false);
  auto timeout = std::chrono::milliseconds(p.timeout_ms);
  cli.set_connection_timeout(timeout);
  cli.set_read_timeout(timeout);
  cli.set_write_timeout(timeout);
  auto path = t.prefix + p.request.path;
  auto res = p.request.method == "GET" ? cli.Get(path)
                                       : cli.Post(path, p.request.body, p.request.content_type);
  return res && res->status >= 200 && res->status < 300;
}

void sleep_seconds(double s) {
  if (s > 0) std::this_thread::sleep_for(std::chrono::duration<double>(s));
}

/// Runs one repetition; returns its wall-clock duration in seconds.
double run_repetition(const Target& t, const LoadProfile& p, std::size_t users, Sink& sink) {
  const double ramp = p.ramp_up();
  auto start = Clock::now();
  std::vector<std::thread> threads;
  threads.reserve(users);
  for (std::size_t u = 0; u < users; ++u) {
    threads.emplace_back([&, u] {
      sleep_seconds(ramp * static_cast<double>(u) / static_cast<double>(users));
      for (std::size_t k = 0; k < p.requests_per_thread; ++k) {
        auto t0 = Clock::now();
        bool ok = send_once(t, p);
        sink.add(std::chrono::duration<double, std::milli>(Clock::now() - t0).count(), ok);
        if (k + 1 < p.requests_per_thread) sleep_seconds(p.think_time_s);
      }
    });
  }
  for (auto& th : threads) th.join();
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void check_reachable(const Target& t) {
  net::Endpoint ep{t.host == "localhost" ? "127.0.0.1" : t.host, static_cast<std::uint16_t>(t.port)};
  if (!net::probe_tcp(ep, std::chrono::milliseconds(2000)))
    throw IoError("target " + t.host + ":" + std::to_string(t.port) + " is not reachable");
}

}  // namespace

LevelReport run_level(const LoadProfile& profile, const std::string& target, std::size_t concurrency) {
  auto t = parse_target(target);
  Sink sink;
  double duration = 0;
  for (std::size_t rep = 0; rep < profile.repetitions; ++rep) duration += run_repetition(t, profile, concurrency, sink);
  auto r = summarize(concurrency, std::move(sink.latencies), sink.errors, sink.successes, duration);
  spdlog::info("level {}: avg {:.1f} ms, p90 {:.1f} ms, {:.1f} tps, {} errors / {}", concurrency, r.average_ms,
               r.p90_ms, r.throughput_tps, r.errors, r.requests);
  return r;
}

LatencyReport run_load(const LoadProfile& profile, const std::string& target) {
  profile.validate();
  check_reachable(parse_target(target));
  LatencyReport report;
  for (auto level : profile.levels) report.levels.push_back(run_level(profile, target, level));
  return report;
}

std::vector<RatioRow> compare_reports(const LatencyReport& edge, const LatencyReport& cloud) {
  if (edge.levels.size() != cloud.levels.size()) throw InvalidInput("reports cover different level counts");
  std::vector<RatioRow> rows;
  for (std::size_t i = 0; i < edge.levels.size(); ++i) {
    const auto& e = edge.levels[i];
    const auto& c = cloud.levels[i];
    if (e.concurrency != c.concurrency) throw InvalidInput("reports cover different concurrency levels");
    if (!(c.average_ms > 0)) throw InvalidInput("cloud average must be positive");
    rows.push_back({e.concurrency, e.average_ms, c.average_ms, e.average_ms / c.average_ms});
  }
  return rows;
}

std::string ratio_markdown(const std::vector<RatioRow>& rows) {
  std::ostringstream out;
  out << "| Concurrency | Edge avg (ms) | Cloud avg (ms) | Edge / Cloud |\n|---|---|---|---|\n";
  for (const auto& r : rows)
    out << "| " << r.concurrency << " | " << format_fixed(r.edge_ms, 1) << " | " << format_fixed(r.cloud_ms, 1)
        << " | " << format_fixed(r.ratio, 3) << " |\n";
  return out.str();
}

Format parse_format(const std::string& name) {
  if (name == "csv") return Format::csv;
  if (name == "markdown" || name == "md") return Format::markdown;
  throw InvalidInput("unknown report format '" + name + "'");
}

namespace {

std::vector<std::string> cells(const LevelReport& l) {
  return {std::to_string(l.concurrency), format_fixed(l.average_ms, 1), format_fixed(l.median_ms, 1),
          format_fixed(l.p90_ms, 1),     format_fixed(l.max_ms, 1),     format_fixed(l.throughput_tps, 1),
          std::to_string(l.errors)};
}

const std::vector<std::string> kColumns{"concurrency", "average_ms", "median_ms", "p90_ms",
                                        "max_ms",      "throughput_tps", "errors"};

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
  return out;
}

}  // namespace

std::string to_csv(const LatencyReport& report) {
  std::string out = join(kColumns, ",") + "\n";
  for (const auto& l : report.levels) out += join(cells(l), ",") + "\n";
  return out;
}

std::string to_markdown(const LatencyReport& report) {
  std::string out = "| " + join(kColumns, " | ") + " |\n|" + join(std::vector<std::string>(kColumns.size(), "---"), "|") + "|\n";
  for (const auto& l : report.levels) out += "| " + join(cells(l), " | ") + " |\n";
  return out;
}

void emit_report(const LatencyReport& report, Format format, const std::filesystem::path& path) {
  write_file(path, format == Format::csv ? to_csv(report) : to_markdown(report));
}

SaturateResult saturate(const SaturateConfig& cfg, const std::string& target) {
  if (cfg.start == 0 || cfg.step == 0 || cfg.max < cfg.start) throw InvalidInput("bad saturate range");
  auto profile = cfg.profile;
  profile.repetitions = 1;
  profile.levels = {cfg.start};
  profile.validate();
  check_reachable(parse_target(target));
  SaturateResult result;
  for (std::size_t level = cfg.start; level <= cfg.max; level += cfg.step) {
    auto r = run_level(profile, target, level);
    result.levels.push_back(r);
    if (r.error_rate() > cfg.error_threshold) {
      result.failed = true;
      break;
    }
    result.threshold = level;
  }
  return result;
}

nlohmann::json to_json(const SaturateResult& r) {
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& l : r.levels)
    levels.push_back({{"concurrency", l.concurrency},
                      {"average_ms", l.average_ms},
                      {"requests", l.requests},
                      {"errors", l.errors},
                      {"error_rate", l.error_rate()}});
  return {{"threshold", r.threshold}, {"failed", r.failed}, {"levels", levels}};
}

}  // namespace nilm::bench
