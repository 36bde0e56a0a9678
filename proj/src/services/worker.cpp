#include "services/worker.hpp"

#include <httplib.h>

#include <condition_variable>
#include <limits>

#include <spdlog/spdlog.h>

#include "common/error.hpp"
#include "common/io.hpp"

namespace nilm::services {

namespace {

/// httplib's default pool caps concurrency at a handful of threads; a
/// thread per connection lets the backlog and the in-flight gate decide.
class ThreadPerConnection final : public httplib::TaskQueue {
 public:
  bool enqueue(std::function<void()> fn) override {
    {
      std::lock_guard lock(mu_);
      ++active_;
    }
    try {
      std::thread([this, fn = std::move(fn)] {
        fn();
        std::lock_guard lock(mu_);
        if (--active_ == 0) cv_.notify_all();
      }).detach();
    } catch (const std::system_error&) {
      std::lock_guard lock(mu_);
      --active_;
      return false;
    }
    return true;
  }

  void shutdown() override {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return active_ == 0; });
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t active_ = 0;
};

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

nlohmann::json result_body(const ResultRecord& r) {
  nlohmann::json targets = nlohmann::json::array();
  for (const auto& t : r.targets) targets.push_back({{"id", t.id}, {"prob", t.prob}, {"state", t.state}});
  return {{"ts_ms", r.ts_ms}, {"targets", targets}};
}

std::optional<std::int64_t> int_param(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  auto v = parse_int(req.get_param_value(key));
  if (!v) throw InvalidInput(std::string(key) + " must be an integer");
  return v;
}

}  // namespace

CloudWorker::CloudWorker(CloudConfig cfg) : CloudWorker(cfg, nullptr) {}

CloudWorker::CloudWorker(CloudConfig cfg, std::shared_ptr<const s2p::S2PModel> model)
    : cfg_(std::move(cfg)), model_(std::move(model)), store_(cfg_.persist_dir) {
  if (!model_ && !cfg_.model_path.empty()) model_ = std::make_shared<const s2p::S2PModel>(s2p::load(cfg_.model_path));
  if (!model_ && cfg_.synthetic_service_ms <= 0) throw InvalidInput("cloud worker needs a model");
  if (cfg_.consume) {
    if (!model_) throw InvalidInput("consuming worker needs a model");
    consumer_ = std::make_unique<CloudConsumer>(cfg_, *model_, model_mu_, store_);
  }
}

CloudWorker::~CloudWorker() { stop(); }

void CloudWorker::install_routes() {
  auto& svr = *server_;
  auto gated = [this](auto handler) {
    return [this, handler](const httplib::Request& req, httplib::Response& res) {
      struct Slot {
        std::atomic<std::size_t>& n;
        ~Slot() { --n; }
      } slot{inflight_};
      if (++inflight_ > cfg_.max_inflight) return send_error(res, 503, "worker overloaded");
      try {
        handler(req, res);
      } catch (const InvalidInput& e) {
        send_error(res, 400, e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      }
    };
  };

  auto lookup = [this](const std::string& household, httplib::Response& res) {
    if (!valid_household_id(household)) throw InvalidInput("invalid household_id");
    auto rec = store_.latest(household, "edge");
    if (!rec) return send_error(res, 404, "no edge result for household '" + household + "'");
    auto body = result_body(*rec);
    body["producer"] = "edge";
    send_json(res, 200, body);
  };

  svr.Post("/v1/infer", gated([this, lookup](const httplib::Request& req, httplib::Response& res) {
             auto body = nlohmann::json::parse(req.body, nullptr, false);
             if (body.is_discarded() || !body.is_object()) throw InvalidInput("body must be a JSON object");
             auto hh = body.find("household_id");
             if (hh == body.end() || !hh->is_string()) throw InvalidInput("household_id must be a string");
             auto mode = body.value("mode", std::string("cloud-infer"));
             if (mode == "edge-lookup") return lookup(hh->get<std::string>(), res);
             if (mode != "cloud-infer") throw InvalidInput("unknown mode '" + mode + "'");
             auto win = body.find("window");
             if (win == body.end() || !win->is_array() || win->empty()) throw InvalidInput("window must be a nonempty array");
             preprocess::WindowBatch w;
             w.length = win->size();
             w.household_id = hh->get<std::string>();
             for (const auto& row : *win) {
               if (!row.is_array() || row.size() != preprocess::kFeatureCount || !row[0].is_number() ||
                   !row[1].is_number())
                 throw InvalidInput("window rows must be [p, q] number pairs");
               w.values.push_back(row[0].get<double>());
               w.values.push_back(row[1].get<double>());
             }
             std::int64_t ts = now_ms();
             if (auto t = body.find("ts_ms"); t != body.end() && t->is_number_integer()) ts = t->get<std::int64_t>();

             ResultRecord r{w.household_id, ts, {}, "cloud", model_ ? model_->version : "synthetic"};
             if (cfg_.synthetic_service_ms > 0) {
               std::lock_guard lock(model_mu_);
               std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(cfg_.synthetic_service_ms));
             } else {
               if (w.length != model_->window())
                 throw InvalidInput("window has " + std::to_string(w.length) + " rows, model expects " +
                                    std::to_string(model_->window()));
               std::vector<double> probs;
               {
                 std::lock_guard lock(model_mu_);
                 probs = model_->predict(std::vector<preprocess::WindowBatch>{w});
               }
               for (std::size_t t = 0; t < probs.size(); ++t)
                 r.targets.push_back({model_->targets()[t], probs[t], probs[t] > 0.5 ? 1 : 0});
             }
             send_json(res, 200, result_body(r));
           }));

  svr.Get("/v1/result/latest", gated([lookup](const httplib::Request& req, httplib::Response& res) {
            if (!req.has_param("household_id")) throw InvalidInput("household_id is required");
            lookup(req.get_param_value("household_id"), res);
          }));

  svr.Get("/v1/results", gated([this](const httplib::Request& req, httplib::Response& res) {
            if (!req.has_param("household_id")) throw InvalidInput("household_id is required");
            auto household = req.get_param_value("household_id");
            if (!valid_household_id(household)) throw InvalidInput("invalid household_id");
            auto from = int_param(req, "from").value_or(std::numeric_limits<std::int64_t>::min());
            auto to = int_param(req, "to").value_or(std::numeric_limits<std::int64_t>::max());
            auto producer = req.has_param("producer") ? req.get_param_value("producer") : std::string();
            nlohmann::json records = nlohmann::json::array();
            for (const auto& r : store_.query(household, from, to, producer)) records.push_back(to_json(r));
            send_json(res, 200, {{"records", records}});
          }));

  svr.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}, {"worker", cfg_.worker_name}});
  });
}

void CloudWorker::start() {
  if (started_) return;
  server_ = std::make_unique<httplib::Server>();
  server_->new_task_queue = [] { return new ThreadPerConnection; };
  server_->set_keep_alive_max_count(100);
  install_routes();
  int port = cfg_.listen.port;
  if (port == 0) {
    port = server_->bind_to_any_port(cfg_.listen.host);
    if (port < 0) throw IoError("cannot bind worker on " + cfg_.listen.host);
  } else if (!server_->bind_to_port(cfg_.listen.host, port)) {
    throw IoError("cannot bind worker on " + cfg_.listen.str());
  }
  port_ = static_cast<std::uint16_t>(port);
  listener_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  if (consumer_) consumer_->start();
  started_ = true;
  spdlog::info("worker {} listening on {}:{}", cfg_.worker_name, cfg_.listen.host, port_);
}

void CloudWorker::stop() {
  if (!started_) return;
  started_ = false;
  if (consumer_) consumer_->stop();
  server_->stop();
  if (listener_.joinable()) listener_.join();
}

}  // namespace nilm::services
