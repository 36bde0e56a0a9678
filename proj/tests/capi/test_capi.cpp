// Exercises the shared library through its C header only.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "nilm/nilm.h"

namespace fs = std::filesystem;

namespace {

struct Scratch {
  fs::path path;
  Scratch() {
    path = fs::temp_directory_path() / ("nilm-capi-" + std::to_string(std::rand()));
    fs::create_directories(path);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

int run_cli(const std::string& args) {
  std::string cmd = std::string(NILM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

void write(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

const char* kScenario = R"({
  "catalog": [{"id": "kettle", "name": "Kettle", "levels": [{"p": 1500, "q": 20}]},
              {"id": "lamp", "name": "Lamp", "levels": [{"p": 80}]}],
  "duration_s": 1200, "sample_period_s": 2, "seed": 4
})";

}  // namespace

TEST_CASE("status names and version") {
  CHECK(std::string(nilm_version()) == "1.0.0");
  CHECK(std::string(nilm_status_name(NILM_OK)) == "ok");
  CHECK(nilm_set_log_level("warn") == NILM_OK);
  CHECK(nilm_set_log_level("loud") == NILM_ERR_INVALID_INPUT);
  CHECK(std::string(nilm_last_error()).size() > 0);
}

TEST_CASE("metrics through the C API") {
  const uint8_t pred[] = {1, 1, 0, 0};
  const uint8_t truth[] = {1, 0, 1, 0};
  nilm_confusion c{};
  nilm_metric_values v{};
  REQUIRE(nilm_metrics_compute(pred, truth, 4, &c, &v) == NILM_OK);
  CHECK(c.tp == 1);
  CHECK(c.fp == 1);
  CHECK(c.fn == 1);
  CHECK(c.tn == 1);
  CHECK(v.accuracy == 0.5);
  CHECK(v.f1 == 0.5);
  CHECK(nilm_metrics_compute(pred, truth, 0, &c, &v) == NILM_ERR_INVALID_INPUT);
  CHECK(nilm_metrics_compute(nullptr, truth, 4, &c, &v) == NILM_ERR_INVALID_INPUT);
}

TEST_CASE("datagen, train and model handles") {
  Scratch s;
  write(s.path / "scenario.json", kScenario);
  auto csv = (s.path / "data.csv").string();
  size_t rows = 0, corrupted = 0;
  REQUIRE(nilm_datagen((s.path / "scenario.json").c_str(), csv.c_str(), -1, &rows, &corrupted) == NILM_OK);
  CHECK(rows == 600);
  CHECK(corrupted == 0);

  write(s.path / "train.json", R"({"gbdt": {"n_trees": 5}})");
  nilm_metric_values avg{};
  REQUIRE(nilm_train("gbdt", csv.c_str(), (s.path / "train.json").c_str(), s.path.c_str(), 1, &avg) == NILM_OK);
  CHECK(avg.accuracy > 0.5);

  nilm_gbdt* model = nullptr;
  REQUIRE(nilm_gbdt_load((s.path / "gbdt_model.json").c_str(), &model) == NILM_OK);
  CHECK(nilm_gbdt_window(model) == 31);
  CHECK(nilm_gbdt_target_count(model) == 2);
  double window[31 * 2] = {};
  double probs[2] = {-1, -1};
  CHECK(nilm_gbdt_predict(model, window, probs) == NILM_OK);
  CHECK(probs[0] >= 0);
  CHECK(probs[0] <= 1);
  nilm_gbdt_free(model);

  CHECK(nilm_eval((s.path / "gbdt_model.json").c_str(), csv.c_str(), nullptr, &avg) == NILM_OK);
  CHECK(nilm_train("svm", csv.c_str(), nullptr, s.path.c_str(), 1, nullptr) == NILM_ERR_INVALID_INPUT);
  CHECK(nilm_gbdt_load((s.path / "missing.json").c_str(), &model) == NILM_ERR_IO);
  write(s.path / "bad.json", "{\"kind\": \"gbdt\"");
  CHECK(nilm_gbdt_load((s.path / "bad.json").c_str(), &model) == NILM_ERR_FORMAT);
}

TEST_CASE("broker service lifecycle") {
  nilm_service* svc = nullptr;
  REQUIRE(nilm_broker_start("127.0.0.1:0", 100, &svc) == NILM_OK);
  CHECK(nilm_service_port(svc) > 0);
  CHECK(nilm_service_stop(svc) == NILM_OK);
  nilm_service_free(svc);
  CHECK(nilm_broker_start("nonsense", 100, &svc) == NILM_ERR_INVALID_INPUT);
}

TEST_CASE("cli exit codes") {
  Scratch s;
  CHECK(run_cli("") == 2);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("train --model svm --data x.csv") == 2);
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("--out-dir " + s.path.string() + " eval --model " + (s.path / "none.json").string() + " --data " +
                (s.path / "none.csv").string()) == 1);

  write(s.path / "scenario.json", kScenario);
  auto out = s.path / "run";
  CHECK(run_cli("--out-dir " + out.string() + " --seed 5 datagen --config " + (s.path / "scenario.json").string() +
                " --out " + (out / "d.csv").string()) == 0);
  CHECK(fs::exists(out / "d.csv"));
  CHECK(fs::exists(out / "manifest.json"));
}
