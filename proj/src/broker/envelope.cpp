#include "broker/envelope.hpp"

#include <cmath>

#include "common/error.hpp"

namespace nilm::services {

nlohmann::json to_json(const ResultRecord& r) {
  nlohmann::json targets = nlohmann::json::array();
  for (const auto& t : r.targets) targets.push_back({{"id", t.id}, {"prob", t.prob}, {"state", t.state}});
  return {{"household_id", r.household_id},
          {"ts_ms", r.ts_ms},
          {"producer", r.producer},
          {"model_version", r.model_version},
          {"targets", targets}};
}

ResultRecord record_from_json(const nlohmann::json& j) {
  try {
    ResultRecord r;
    r.household_id = j.at("household_id").get<std::string>();
    r.ts_ms = j.at("ts_ms").get<std::int64_t>();
    r.producer = j.at("producer").get<std::string>();
    r.model_version = j.value("model_version", std::string());
    for (const auto& t : j.at("targets")) {
      TargetResult tr{t.at("id").get<std::string>(), t.at("prob").get<double>(), t.at("state").get<int>()};
      if (!(tr.prob >= 0 && tr.prob <= 1)) throw InvalidInput("probability outside [0,1]");
      if (tr.state != 0 && tr.state != 1) throw InvalidInput("state must be 0 or 1");
      r.targets.push_back(std::move(tr));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("result record: ") + e.what());
  }
}

}  // namespace nilm::services

namespace nilm::broker {

nlohmann::json to_json(const MessageEnvelope& env) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : env.samples) samples.push_back({{"ts", s.ts}, {"p", s.p}, {"q", s.q}});
  nlohmann::json j = {{"household_id", env.household_id},
                      {"seq", env.seq},
                      {"sent_at_ms", env.sent_at_ms},
                      {"samples", samples}};
  if (!env.results.empty()) {
    nlohmann::json results = nlohmann::json::array();
    for (const auto& r : env.results) results.push_back(services::to_json(r));
    j["results"] = results;
  }
  return j;
}

MessageEnvelope envelope_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object()) throw InvalidInput("envelope must be an object");
    MessageEnvelope env;
    env.household_id = j.at("household_id").get<std::string>();
    if (env.household_id.empty()) throw InvalidInput("empty household_id");
    env.seq = j.at("seq").get<std::uint64_t>();
    env.sent_at_ms = j.at("sent_at_ms").get<std::int64_t>();
    for (const auto& s : j.at("samples")) {
      EnvelopeSample es{s.at("ts").get<std::int64_t>(), s.at("p").get<double>(), s.at("q").get<double>()};
      if (!std::isfinite(es.p) || !std::isfinite(es.q)) throw InvalidInput("non-finite sample value");
      env.samples.push_back(es);
    }
    if (env.samples.empty()) throw InvalidInput("envelope carries no samples");
    if (j.contains("results"))
      for (const auto& r : j.at("results")) env.results.push_back(services::record_from_json(r));
    return env;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("envelope: ") + e.what());
  }
}

std::string serialize(const MessageEnvelope& env) { return to_json(env).dump(); }

MessageEnvelope parse_envelope(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidInput(std::string("envelope: ") + e.what());
  }
  return envelope_from_json(j);
}

}  // namespace nilm::broker
