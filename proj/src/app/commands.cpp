#include "app/commands.hpp"

#include <spdlog/spdlog.h>

#include "common/error.hpp"
#include "common/io.hpp"
#include "datagen/datagen.hpp"
#include "gbdt/features.hpp"

namespace nilm::app {

void write_manifest(const std::filesystem::path& out_dir, const std::string& command, const nlohmann::json& details) {
  nlohmann::json m = {{"command", command},
                      {"out_dir", std::filesystem::absolute(out_dir).string()},
                      {"started_at_ms", now_ms()},
                      {"library_version", kLibraryVersion},
                      {"details", details}};
  write_file(out_dir / "manifest.json", m.dump(2) + "\n");
}

LabeledWindows labeled_windows(std::span<const PowerSample> samples, std::size_t window, std::size_t stride) {
  LabeledWindows out;
  out.windows = preprocess::window_stream(samples, window, stride);
  if (out.windows.empty()) return out;
  const std::size_t targets = samples.front().labels.size();
  out.truth.assign(targets, {});
  const auto mid = preprocess::midpoint_offset(window);
  for (std::size_t i = 0; i < out.windows.size(); ++i) {
    const auto& labels = samples[i * stride + mid].labels;
    if (labels.size() != targets) throw InvalidInput("inconsistent label count");
    for (std::size_t t = 0; t < targets; ++t) out.truth[t].push_back(labels[t] ? 1 : 0);
  }
  return out;
}

std::vector<std::vector<std::uint8_t>> predict_states(const gbdt::GbdtModel& model,
                                                      const std::vector<preprocess::WindowBatch>& windows) {
  std::vector<std::vector<std::uint8_t>> out(model.targets.size());
  for (const auto& w : windows) {
    auto probs = model.predict_proba(w);
    for (std::size_t t = 0; t < probs.size(); ++t) out[t].push_back(probs[t] > 0.5 ? 1 : 0);
  }
  return out;
}

std::vector<std::vector<std::uint8_t>> predict_states(const s2p::S2PModel& model,
                                                      const std::vector<preprocess::WindowBatch>& windows,
                                                      std::size_t batch) {
  const auto T = model.targets().size();
  std::vector<std::vector<std::uint8_t>> out(T);
  for (std::size_t b = 0; b < windows.size(); b += batch) {
    std::vector<preprocess::WindowBatch> chunk(windows.begin() + static_cast<std::ptrdiff_t>(b),
                                               windows.begin() + static_cast<std::ptrdiff_t>(std::min(b + batch, windows.size())));
    auto probs = model.predict(chunk);
    for (std::size_t i = 0; i < chunk.size(); ++i)
      for (std::size_t t = 0; t < T; ++t) out[t].push_back(probs[i * T + t] > 0.5 ? 1 : 0);
  }
  return out;
}

metrics::MetricsReport score(const std::vector<std::string>& ids, const std::vector<std::vector<std::uint8_t>>& pred,
                             const std::vector<std::vector<std::uint8_t>>& truth) {
  if (ids.size() != pred.size() || ids.size() != truth.size()) throw InvalidInput("target count mismatch");
  std::vector<metrics::MetricRow> rows;
  for (std::size_t t = 0; t < ids.size(); ++t) rows.push_back(metrics::evaluate(ids[t], metrics::confusion(pred[t], truth[t])));
  return metrics::make_report(std::move(rows));
}

TrainSettings train_settings_from_json(const nlohmann::json& j) {
  try {
    TrainSettings s;
    s.window = j.value("window", s.window);
    s.stride = j.value("stride", s.stride);
    s.train_fraction = j.value("train_fraction", s.train_fraction);
    if (j.contains("gbdt")) s.gbdt = gbdt::params_from_json(j.at("gbdt"));
    if (j.contains("s2p")) {
      const auto& c = j.at("s2p");
      s.s2p.epochs = c.value("epochs", s.s2p.epochs);
      s.s2p.batch_size = c.value("batch_size", s.s2p.batch_size);
      s.s2p.learning_rate = c.value("learning_rate", s.s2p.learning_rate);
      s.s2p.momentum = c.value("momentum", s.s2p.momentum);
      if (c.contains("dims")) s.dims = s2p::dims_from_json(c.at("dims"));
    }
    s.s2p.window = s.window;
    if (s.window % 2 == 0) throw InvalidInput("window must be odd");
    if (s.stride == 0) throw InvalidInput("stride must be >= 1");
    if (!(s.train_fraction > 0 && s.train_fraction < 1)) throw InvalidInput("train_fraction must be in (0,1)");
    s.gbdt.validate();
    s.s2p.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("train config: ") + e.what());
  }
}

gbdt::GbdtModel fit_gbdt(std::span<const PowerSample> train, const std::vector<std::string>& targets,
                         const TrainSettings& settings) {
  auto data = labeled_windows(train, settings.window, settings.stride);
  if (data.windows.empty()) throw InvalidInput("training split is shorter than one window");
  return gbdt::train(gbdt::window_feature_matrix(data.windows), data.truth, targets, settings.gbdt, settings.window);
}

s2p::S2PModel fit_s2p(std::span<const PowerSample> train, const std::vector<std::string>& targets,
                      const TrainSettings& settings, std::uint64_t seed, std::vector<double>* loss_history) {
  s2p::S2PModel model(settings.window, targets, settings.dims, seed);
  model.norm = preprocess::normalize_fit(train);
  auto data = s2p::make_dataset(train, settings.window, settings.stride);
  auto cfg = settings.s2p;
  cfg.seed = seed;
  auto result = s2p::train(model, data, cfg);
  if (loss_history) *loss_history = result.loss_history;
  return model;
}

DatagenResult cmd_datagen(const std::filesystem::path& config, const std::filesystem::path& out_csv,
                          std::optional<std::uint64_t> seed) {
  auto cfg = datagen::scenario_from_json(read_json_file(config));
  if (seed) cfg.seed = *seed;
  auto data = datagen::generate_scenario(cfg);
  DatagenResult result;
  if (cfg.dirty_fraction > 0) {
    auto dirty = datagen::inject_dirty(std::move(data.samples), cfg.dirty_fraction, cfg.seed);
    data.samples = std::move(dirty.samples);
    result.corrupted = dirty.corrupted.size();
  }
  result.rows = data.samples.size();
  datagen::write_csv(data, out_csv);
  return result;
}

namespace {

struct Split {
  std::vector<PowerSample> train, test;
};

Split chronological_split(std::vector<PowerSample> samples, double fraction) {
  auto cut = static_cast<std::size_t>(static_cast<double>(samples.size()) * fraction);
  Split s;
  s.train.assign(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(cut));
  s.test.assign(samples.begin() + static_cast<std::ptrdiff_t>(cut), samples.end());
  return s;
}

std::vector<PowerSample> load_clean(const std::filesystem::path& data_csv, std::vector<std::string>* targets) {
  auto data = datagen::read_csv(data_csv);
  if (data.samples.empty()) throw InvalidInput("dataset " + data_csv.string() + " is empty");
  if (data.targets.empty()) throw InvalidInput("dataset " + data_csv.string() + " has no label columns");
  auto cleaned = preprocess::clean(data.samples);
  if (cleaned.rejected) spdlog::info("dropped {} dirty rows", cleaned.rejected);
  if (targets) *targets = data.targets;
  return std::move(cleaned.samples);
}

}  // namespace

TrainOutput cmd_train(const std::string& model_kind, const std::filesystem::path& data_csv,
                      const std::filesystem::path& config, const std::filesystem::path& out_dir, std::uint64_t seed) {
  if (model_kind != "gbdt" && model_kind != "s2p") throw InvalidInput("unknown model '" + model_kind + "'");
  auto settings = config.empty() ? train_settings_from_json(nlohmann::json::object())
                                 : train_settings_from_json(read_json_file(config));
  std::vector<std::string> targets;
  auto split = chronological_split(load_clean(data_csv, &targets), settings.train_fraction);
  auto test = labeled_windows(split.test, settings.window);
  if (test.windows.empty()) throw InvalidInput("held-out split is shorter than one window");

  TrainOutput out;
  if (model_kind == "gbdt") {
    auto model = fit_gbdt(split.train, targets, settings);
    out.model_path = out_dir / "gbdt_model.json";
    gbdt::save(model, out.model_path);
    out.report = score(targets, predict_states(model, test.windows), test.truth);
  } else {
    std::vector<double> history;
    auto model = fit_s2p(split.train, targets, settings, seed, &history);
    out.model_path = out_dir / "s2p_model.json";
    s2p::save(model, out.model_path);
    nlohmann::json curve = history;
    write_file(out_dir / "s2p_loss.json", curve.dump() + "\n");
    out.report = score(targets, predict_states(model, test.windows), test.truth);
  }
  out.metrics_path = out_dir / (model_kind + "_metrics.csv");
  write_file(out.metrics_path, metrics::to_csv(out.report));
  return out;
}

std::string model_kind(const std::filesystem::path& model_path) {
  auto j = read_json_file(model_path);
  auto kind = j.is_object() ? j.value("kind", std::string()) : std::string();
  if (kind != "gbdt" && kind != "s2p") throw FormatError(model_path.string() + ": unknown model kind");
  return kind;
}

std::string model_version(const std::filesystem::path& model_path) {
  try {
    auto j = read_json_file(model_path);
    return j.value("model_version", std::string());
  } catch (const std::exception&) {
    return {};
  }
}

metrics::MetricsReport cmd_eval(const std::filesystem::path& model_path, const std::filesystem::path& data_csv,
                                const std::filesystem::path& out_csv) {
  std::vector<std::string> targets;
  auto samples = load_clean(data_csv, &targets);
  metrics::MetricsReport report;
  auto check_targets = [&](const std::vector<std::string>& model_targets) {
    if (model_targets != targets) throw InvalidInput("model targets do not match the dataset's label columns");
  };
  if (model_kind(model_path) == "gbdt") {
    auto model = gbdt::load(model_path);
    check_targets(model.target_ids());
    auto data = labeled_windows(samples, model.schema.window);
    if (data.windows.empty()) throw InvalidInput("dataset is shorter than one window");
    report = score(targets, predict_states(model, data.windows), data.truth);
  } else {
    auto model = s2p::load(model_path);
    check_targets(model.targets());
    auto data = labeled_windows(samples, model.window());
    if (data.windows.empty()) throw InvalidInput("dataset is shorter than one window");
    report = score(targets, predict_states(model, data.windows), data.truth);
  }
  if (!out_csv.empty()) write_file(out_csv, metrics::to_csv(report));
  return report;
}

}  // namespace nilm::app
