#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gbdt/gbdt.hpp"
#include "metrics/metrics.hpp"
#include "preprocess/preprocess.hpp"
#include "s2p/model.hpp"
#include "s2p/train.hpp"

namespace nilm::app {

inline constexpr const char* kLibraryVersion = "1.0.0";

/// Writes `<out_dir>/manifest.json` describing a run before it starts.
void write_manifest(const std::filesystem::path& out_dir, const std::string& command, const nlohmann::json& details);

/// Windows with the midpoint label of every target, `truth[t][i]`.
struct LabeledWindows {
  std::vector<preprocess::WindowBatch> windows;
  std::vector<std::vector<std::uint8_t>> truth;
};
LabeledWindows labeled_windows(std::span<const PowerSample> samples, std::size_t window, std::size_t stride = 1);

/// Predicted states `[target][window]`.
std::vector<std::vector<std::uint8_t>> predict_states(const gbdt::GbdtModel& model,
                                                      const std::vector<preprocess::WindowBatch>& windows);
std::vector<std::vector<std::uint8_t>> predict_states(const s2p::S2PModel& model,
                                                      const std::vector<preprocess::WindowBatch>& windows,
                                                      std::size_t batch = 256);

metrics::MetricsReport score(const std::vector<std::string>& ids, const std::vector<std::vector<std::uint8_t>>& pred,
                             const std::vector<std::vector<std::uint8_t>>& truth);

/// Training settings read from an optional JSON file.
struct TrainSettings {
  std::size_t window = preprocess::kDefaultWindow;
  std::size_t stride = 1;
  double train_fraction = 0.8;
  gbdt::TrainParams gbdt;
  s2p::S2PTrainConfig s2p;
  s2p::S2PDims dims;
};
TrainSettings train_settings_from_json(const nlohmann::json& j);

gbdt::GbdtModel fit_gbdt(std::span<const PowerSample> train, const std::vector<std::string>& targets,
                         const TrainSettings& settings);
s2p::S2PModel fit_s2p(std::span<const PowerSample> train, const std::vector<std::string>& targets,
                      const TrainSettings& settings, std::uint64_t seed, std::vector<double>* loss_history = nullptr);

struct DatagenResult {
  std::size_t rows = 0;
  std::size_t corrupted = 0;
};
DatagenResult cmd_datagen(const std::filesystem::path& config, const std::filesystem::path& out_csv,
                          std::optional<std::uint64_t> seed);

struct TrainOutput {
  std::filesystem::path model_path;
  std::filesystem::path metrics_path;
  metrics::MetricsReport report;
};
/// Chronological split, fit on the head, score on the tail.
TrainOutput cmd_train(const std::string& model_kind, const std::filesystem::path& data_csv,
                      const std::filesystem::path& config, const std::filesystem::path& out_dir, std::uint64_t seed);

/// Scores a saved model on a labeled dataset; writes the metrics CSV when
/// `out_csv` is nonempty.
metrics::MetricsReport cmd_eval(const std::filesystem::path& model_path, const std::filesystem::path& data_csv,
                                const std::filesystem::path& out_csv);

/// "gbdt" or "s2p" from a model file's kind field.
std::string model_kind(const std::filesystem::path& model_path);
/// The version string stored in a model file, or empty when unreadable.
std::string model_version(const std::filesystem::path& model_path);

}  // namespace nilm::app
