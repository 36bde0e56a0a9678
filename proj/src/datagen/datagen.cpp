#include "datagen/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "common/error.hpp"
#include "common/io.hpp"

namespace nilm::datagen {

namespace {

constexpr const char* kBaseColumns[] = {"ts_ms",          "voltage",        "frequency",     "current",
                                        "active_power",   "reactive_power", "apparent_power", "power_factor"};
constexpr std::size_t kBaseColumnCount = 8;

// Numeric fields in CSV order (ts_ms excluded).
constexpr double PowerSample::*kNumericFields[] = {
    &PowerSample::voltage,        &PowerSample::frequency,      &PowerSample::current,
    &PowerSample::active_power,   &PowerSample::reactive_power, &PowerSample::apparent_power,
    &PowerSample::power_factor,
};

// Fields whose sign is constrained by the cleaning rule.
constexpr double PowerSample::*kNonNegativeFields[] = {
    &PowerSample::voltage, &PowerSample::frequency, &PowerSample::current,
    &PowerSample::active_power, &PowerSample::apparent_power,
};

const ApplianceProfile* find_profile(const ScenarioConfig& cfg, const std::string& id) {
  for (const auto& p : cfg.profiles)
    if (p.appliance_id == id) return &p;
  return nullptr;
}

std::string mode_name(ProfileMode m) {
  switch (m) {
    case ProfileMode::always_on:
      return "always_on";
    case ProfileMode::always_off:
      return "always_off";
    default:
      return "markov";
  }
}

ProfileMode parse_mode(const std::string& s) {
  if (s == "markov") return ProfileMode::markov;
  if (s == "always_on") return ProfileMode::always_on;
  if (s == "always_off") return ProfileMode::always_off;
  throw InvalidInput("unknown profile mode '" + s + "'");
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

void ScenarioConfig::validate() const {
  if (catalog.empty()) throw InvalidInput("scenario catalog is empty");
  if (!(sample_period_s > 0)) throw InvalidInput("sample_period_s must be > 0");
  if (!(duration_s >= sample_period_s)) throw InvalidInput("duration_s must be >= sample_period_s");
  if (!(dirty_fraction >= 0 && dirty_fraction < 1)) throw InvalidInput("dirty_fraction must lie in [0,1)");
  for (const auto& p : profiles) {
    if (!(p.mean_on_s > 0) || !(p.mean_off_s > 0)) throw InvalidInput("profile durations must be > 0");
    if (!(p.noise_sigma_w >= 0)) throw InvalidInput("profile noise sigma must be >= 0");
  }
}

std::size_t ScenarioConfig::sample_count() const {
  return static_cast<std::size_t>(std::floor(duration_s / sample_period_s + 1e-9));
}

Dataset generate_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  const auto& targets = cfg.catalog.targets();
  const std::size_t n = cfg.sample_count();
  const double dt = cfg.sample_period_s;

  struct LevelSim {
    ApplianceProfile profile;
    double p_turn_off = 0;
    double p_turn_on = 0;
    bool on = false;
  };

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<LevelSim> sims;
  sims.reserve(targets.size());
  for (const auto& t : targets) {
    LevelSim s;
    const auto& appliance = cfg.catalog.entries()[t.appliance_index];
    if (const auto* p = find_profile(cfg, appliance.appliance_id)) s.profile = *p;
    s.profile.appliance_id = appliance.appliance_id;
    s.p_turn_off = 1.0 - std::exp(-dt / s.profile.mean_on_s);
    s.p_turn_on = 1.0 - std::exp(-dt / s.profile.mean_off_s);
    switch (s.profile.mode) {
      case ProfileMode::always_on:
        s.on = true;
        break;
      case ProfileMode::always_off:
        s.on = false;
        break;
      case ProfileMode::markov:
        s.on = unit(rng) < s.profile.mean_on_s / (s.profile.mean_on_s + s.profile.mean_off_s);
        break;
    }
    sims.push_back(s);
  }

  Dataset out;
  out.targets = cfg.catalog.target_ids();
  out.samples.reserve(n);
  double background = cfg.background.mean_w;
  const auto period_ms = static_cast<std::int64_t>(std::llround(dt * 1000));

  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) {
      for (auto& s : sims) {
        if (s.profile.mode != ProfileMode::markov) continue;
        double u = unit(rng);
        if (s.on && u < s.p_turn_off)
          s.on = false;
        else if (!s.on && u < s.p_turn_on)
          s.on = true;
      }
    }

    PowerSample row;
    row.ts_ms = cfg.start_ts_ms + static_cast<std::int64_t>(i) * period_ms;
    row.labels.resize(targets.size());
    double p = 0;
    double q = 0;
    for (std::size_t t = 0; t < targets.size(); ++t) {
      if (!sims[t].on) continue;
      row.labels[t] = 1;
      p += targets[t].power.active_w;
      q += targets[t].power.reactive_var;
      if (sims[t].profile.noise_sigma_w > 0) p += sims[t].profile.noise_sigma_w * gauss(rng);
    }
    if (cfg.background.walk_sigma_w > 0 || cfg.background.mean_w > 0) {
      if (cfg.background.walk_sigma_w > 0)
        background += cfg.background.walk_sigma_w * gauss(rng) +
                      cfg.background.reversion * (cfg.background.mean_w - background);
      background = std::max(background, 0.0);
      p += background;
      q += background * cfg.background.reactive_ratio;
    }
    p = std::max(p, 0.0);

    row.active_power = p;
    row.reactive_power = q;
    row.apparent_power = std::hypot(p, q);
    row.power_factor = row.apparent_power > 0 ? p / row.apparent_power : 1.0;
    row.voltage = 220.0 + 0.5 * gauss(rng);
    row.frequency = 50.0;
    row.current = row.apparent_power / row.voltage;
    out.samples.push_back(std::move(row));
  }
  return out;
}

DirtyResult inject_dirty(std::vector<PowerSample> samples, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0 && fraction < 1)) throw InvalidInput("dirty fraction must lie in [0,1)");
  DirtyResult out;
  const std::size_t n = samples.size();
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::mt19937_64 rng(seed);

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  out.corrupted.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(out.corrupted.begin(), out.corrupted.end());

  std::bernoulli_distribution blank(0.5);
  for (auto row : out.corrupted) {
    auto& s = samples[row];
    std::vector<double PowerSample::*> positive;
    for (auto f : kNonNegativeFields)
      if (s.*f > 0) positive.push_back(f);
    if (blank(rng) || positive.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, std::size(kNumericFields) - 1);
      s.*kNumericFields[pick(rng)] = kMissing;
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, positive.size() - 1);
      auto f = positive[pick(rng)];
      s.*f = -(s.*f);
    }
  }
  out.samples = std::move(samples);
  return out;
}

std::string to_csv(const Dataset& data) {
  std::string out;
  for (std::size_t c = 0; c < kBaseColumnCount; ++c) {
    if (c) out += ',';
    out += kBaseColumns[c];
  }
  for (const auto& t : data.targets) out += "," + t;
  out += '\n';
  for (const auto& s : data.samples) {
    out += std::to_string(s.ts_ms);
    for (auto f : kNumericFields) {
      out += ',';
      if (!is_missing(s.*f)) out += format_double(s.*f);
    }
    for (std::size_t t = 0; t < data.targets.size(); ++t) {
      out += ',';
      out += (t < s.labels.size() && s.labels[t]) ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

Dataset from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_commas(line);
  if (header.size() < kBaseColumnCount) throw ParseError("header has too few columns", 1);
  for (std::size_t c = 0; c < kBaseColumnCount; ++c)
    if (header[c] != kBaseColumns[c])
      throw ParseError("expected column '" + std::string(kBaseColumns[c]) + "', got '" + std::string(header[c]) + "'",
                       1);

  Dataset data;
  for (std::size_t c = kBaseColumnCount; c < header.size(); ++c) data.targets.emplace_back(header[c]);

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_commas(line);
    if (cells.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields, got " + std::to_string(cells.size()),
                       line_no);
    PowerSample s;
    auto ts = parse_int(cells[0]);
    if (!ts) throw ParseError("bad ts_ms '" + std::string(cells[0]) + "'", line_no);
    s.ts_ms = *ts;
    for (std::size_t f = 0; f < std::size(kNumericFields); ++f) {
      auto cell = cells[f + 1];
      if (cell.empty()) {
        s.*kNumericFields[f] = kMissing;
        continue;
      }
      auto v = parse_double(cell);
      if (!v) throw ParseError("non-numeric " + std::string(kBaseColumns[f + 1]) + " '" + std::string(cell) + "'", line_no);
      s.*kNumericFields[f] = *v;
    }
    s.labels.reserve(data.targets.size());
    for (std::size_t t = 0; t < data.targets.size(); ++t) {
      auto cell = cells[kBaseColumnCount + t];
      if (cell != "0" && cell != "1")
        throw ParseError("label " + data.targets[t] + " must be 0 or 1, got '" + std::string(cell) + "'", line_no);
      s.labels.push_back(cell == "1" ? 1 : 0);
    }
    data.samples.push_back(std::move(s));
  }
  return data;
}

void write_csv(const Dataset& data, const std::filesystem::path& path) { write_file(path, to_csv(data)); }

Dataset read_csv(const std::filesystem::path& path) {
  try {
    return from_csv(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  ScenarioConfig cfg;
  try {
    if (j.contains("catalog")) {
      std::vector<ApplianceEntry> entries;
      for (const auto& e : j.at("catalog")) {
        ApplianceEntry entry;
        entry.appliance_id = e.at("id").get<std::string>();
        entry.display_name = e.value("name", entry.appliance_id);
        for (const auto& lv : e.at("levels"))
          entry.levels.push_back({lv.at("p").get<double>(), lv.value("q", 0.0)});
        entries.push_back(std::move(entry));
      }
      cfg.catalog = ApplianceCatalog(std::move(entries));
    } else {
      cfg.catalog = ApplianceCatalog::household_default();
    }
    for (const auto& p : j.value("profiles", nlohmann::json::array())) {
      ApplianceProfile prof;
      prof.appliance_id = p.at("id").get<std::string>();
      prof.mean_on_s = p.value("mean_on_s", prof.mean_on_s);
      prof.mean_off_s = p.value("mean_off_s", prof.mean_off_s);
      prof.noise_sigma_w = p.value("sigma_w", prof.noise_sigma_w);
      prof.mode = parse_mode(p.value("mode", std::string("markov")));
      cfg.profiles.push_back(prof);
    }
    cfg.sample_period_s = j.value("sample_period_s", cfg.sample_period_s);
    cfg.duration_s = j.value("duration_s", cfg.duration_s);
    if (j.contains("samples")) cfg.duration_s = j.at("samples").get<double>() * cfg.sample_period_s;
    cfg.seed = j.value("seed", cfg.seed);
    cfg.dirty_fraction = j.value("dirty_fraction", cfg.dirty_fraction);
    cfg.start_ts_ms = j.value("start_ts_ms", cfg.start_ts_ms);
    if (j.contains("background")) {
      const auto& b = j.at("background");
      cfg.background.mean_w = b.value("mean_w", 0.0);
      cfg.background.walk_sigma_w = b.value("walk_sigma_w", 0.0);
      cfg.background.reversion = b.value("reversion", cfg.background.reversion);
      cfg.background.reactive_ratio = b.value("reactive_ratio", 0.0);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("scenario config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::json scenario_to_json(const ScenarioConfig& cfg) {
  nlohmann::json catalog = nlohmann::json::array();
  for (const auto& e : cfg.catalog.entries()) {
    nlohmann::json levels = nlohmann::json::array();
    for (const auto& lv : e.levels) levels.push_back({{"p", lv.active_w}, {"q", lv.reactive_var}});
    catalog.push_back({{"id", e.appliance_id}, {"name", e.display_name}, {"levels", levels}});
  }
  nlohmann::json profiles = nlohmann::json::array();
  for (const auto& p : cfg.profiles)
    profiles.push_back({{"id", p.appliance_id},
                        {"mean_on_s", p.mean_on_s},
                        {"mean_off_s", p.mean_off_s},
                        {"sigma_w", p.noise_sigma_w},
                        {"mode", mode_name(p.mode)}});
  return {{"catalog", catalog},
          {"profiles", profiles},
          {"duration_s", cfg.duration_s},
          {"sample_period_s", cfg.sample_period_s},
          {"seed", cfg.seed},
          {"dirty_fraction", cfg.dirty_fraction},
          {"start_ts_ms", cfg.start_ts_ms},
          {"background",
           {{"mean_w", cfg.background.mean_w},
            {"walk_sigma_w", cfg.background.walk_sigma_w},
            {"reversion", cfg.background.reversion},
            {"reactive_ratio", cfg.background.reactive_ratio}}}};
}

}  // namespace nilm::datagen
