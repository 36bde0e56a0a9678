#include "metrics/types.hpp"

#include <set>

#include "common/error.hpp"

namespace nilm {

namespace {

bool same_value(double a, double b) noexcept {
  if (is_missing(a) || is_missing(b)) return is_missing(a) && is_missing(b);
  return a == b && std::signbit(a) == std::signbit(b);
}

}  // namespace

bool same_sample(const PowerSample& a, const PowerSample& b) noexcept {
  return a.ts_ms == b.ts_ms && same_value(a.voltage, b.voltage) && same_value(a.frequency, b.frequency) &&
         same_value(a.current, b.current) && same_value(a.active_power, b.active_power) &&
         same_value(a.reactive_power, b.reactive_power) && same_value(a.apparent_power, b.apparent_power) &&
         same_value(a.power_factor, b.power_factor) && a.labels == b.labels;
}

ApplianceCatalog::ApplianceCatalog(std::vector<ApplianceEntry> entries) : entries_(std::move(entries)) {
  std::set<std::string> ids;
  for (std::size_t a = 0; a < entries_.size(); ++a) {
    const auto& e = entries_[a];
    if (e.appliance_id.empty()) throw InvalidInput("appliance id must be nonempty");
    if (!ids.insert(e.appliance_id).second) throw InvalidInput("duplicate appliance id '" + e.appliance_id + "'");
    if (e.levels.empty()) throw InvalidInput("appliance '" + e.appliance_id + "' has no levels");
    for (std::size_t l = 0; l < e.levels.size(); ++l) {
      const auto& lv = e.levels[l];
      if (!(lv.active_w >= 0) || !(lv.reactive_var >= 0))
        throw InvalidInput("appliance '" + e.appliance_id + "' has a negative level power");
      Target t;
      t.id = e.levels.size() == 1 ? e.appliance_id : e.appliance_id + "_" + std::to_string(l + 1);
      t.appliance_index = a;
      t.level = l;
      t.power = lv;
      targets_.push_back(std::move(t));
    }
  }
  std::set<std::string> target_ids;
  for (const auto& t : targets_)
    if (!target_ids.insert(t.id).second) throw InvalidInput("target id '" + t.id + "' is ambiguous");
}

std::vector<std::string> ApplianceCatalog::target_ids() const {
  std::vector<std::string> ids;
  ids.reserve(targets_.size());
  for (const auto& t : targets_) ids.push_back(t.id);
  return ids;
}

int ApplianceCatalog::target_index(const std::string& id) const noexcept {
  for (std::size_t i = 0; i < targets_.size(); ++i)
    if (targets_[i].id == id) return static_cast<int>(i);
  return -1;
}

ApplianceCatalog ApplianceCatalog::household_default() {
  return ApplianceCatalog({
      {"air_purifier", "Air purifier", {{45, 12}}},
      {"heater", "Heater", {{1000, 5}, {2000, 10}}},
      {"light_bulb", "Light bulb", {{60, 0}}},
      {"fan", "Fan", {{25, 8}, {35, 11}, {45, 14}, {55, 17}}},
      {"air_compressor", "Air compressor", {{750, 420}}},
      {"air_conditioner", "Air conditioner", {{1200, 380}}},
  });
}

}  // namespace nilm
