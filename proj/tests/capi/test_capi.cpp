// Exercises the shared library through its C header only.
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>
#include <unistd.h>

#include "gridstab/gridstab.h"

namespace {

constexpr const char* kSmall = R"({
  "synth": {"n_bus": 12, "days": 3, "slots_per_day": 10, "seed": 4},
  "model": {"gcn_hidden": 6, "global_hidden": 6, "id_hidden": 4, "mlp_hidden": [8, 4], "cnn_kernel": 2},
  "train": {"epochs": 1},
  "svm": {"epochs": 2}
})";

std::string take(char* s) {
  std::string out = s ? s : "";
  gs_string_free(s);
  return out;
}

struct Tmp {
  std::filesystem::path path =
      std::filesystem::temp_directory_path() / ("gridstab_capi_" + std::to_string(::getpid()));
  Tmp() { std::filesystem::create_directories(path); }
  ~Tmp() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("status names and version") {
  CHECK(std::string(gs_status_name(GS_OK)) == "ok");
  CHECK(std::string(gs_status_name(GS_ERR_INFEASIBLE)).size() > 0);
  CHECK(std::string(gs_version()).size() > 0);
}

TEST_CASE("argument and config errors map to status codes") {
  gs_config* cfg = nullptr;
  CHECK(gs_config_default(nullptr) == GS_ERR_INVALID_ARGUMENT);
  CHECK(std::string(gs_last_error()).size() > 0);

  CHECK(gs_config_parse(R"({"synth": {"bogus": 1}})", &cfg) == GS_ERR_FORMAT);
  CHECK(cfg == nullptr);
  CHECK(std::string(gs_last_error()).find("synth.bogus") != std::string::npos);
  CHECK(gs_config_parse("{not json", &cfg) == GS_ERR_FORMAT);
  CHECK(gs_config_load("/nonexistent/gridstab.json", &cfg) == GS_ERR_IO);

  REQUIRE(gs_config_default(&cfg) == GS_OK);
  CHECK(gs_config_set_target_kkd(cfg, 150.0) == GS_ERR_INVALID_ARGUMENT);
  CHECK(gs_config_set_threshold(cfg, 2.0) == GS_ERR_INVALID_ARGUMENT);
  CHECK(gs_config_set_threshold(cfg, 0.25) == GS_OK);
  CHECK(take([&] { char* s = nullptr; gs_config_to_json(cfg, &s); return s; }()).find("0.25") != std::string::npos);
  CHECK(gs_config_set_threshold(cfg, NAN) == GS_OK);
  CHECK(gs_config_set_epochs(cfg, 0) == GS_ERR_INVALID_ARGUMENT);
  CHECK(gs_config_set_synth_size(cfg, 3, 0) == GS_ERR_INVALID_ARGUMENT);
  CHECK(gs_config_set_synth_size(cfg, 0, 0) == GS_OK);
  gs_config_free(cfg);

  gs_model* m = nullptr;
  CHECK(gs_model_load("/nonexistent/model.json", &m) == GS_ERR_IO);
  gs_dataset* ds = nullptr;
  CHECK(gs_dataset_load("/nonexistent/ds", &ds) == GS_ERR_IO);
}

TEST_CASE("synthesize, featurize, train, evaluate through handles") {
  Tmp tmp;
  gs_config* cfg = nullptr;
  REQUIRE(gs_config_parse(kSmall, &cfg) == GS_OK);
  gs_dataset* ds = nullptr;
  REQUIRE(gs_dataset_synthesize(cfg, &ds) == GS_OK);
  gs_dataset_info info{};
  REQUIRE(gs_dataset_get_info(ds, &info) == GS_OK);
  CHECK(info.buses == 12);
  CHECK(info.days == 3);
  CHECK(info.snapshots == 30);
  CHECK(info.faults == 30L * info.ac_lines);
  CHECK(gs_dataset_check_config(ds, cfg) == GS_OK);

  const std::string dir = (tmp.path / "ds").string();
  REQUIRE(gs_dataset_save(ds, cfg, dir.c_str()) == GS_OK);
  gs_dataset* loaded = nullptr;
  REQUIRE(gs_dataset_load(dir.c_str(), &loaded) == GS_OK);
  gs_config* other = nullptr;
  REQUIRE(gs_config_parse(kSmall, &other) == GS_OK);
  REQUIRE(gs_config_set_synth_seed(other, 99) == GS_OK);
  CHECK(gs_dataset_check_config(loaded, other) == GS_ERR_FORMAT);

  gs_features* f = nullptr;
  REQUIRE(gs_features_build(loaded, cfg, nullptr, 0, &f) == GS_OK);
  size_t n = 0;
  REQUIRE(gs_features_sample_count(f, &n) == GS_OK);
  CHECK(n == static_cast<size_t>(info.faults));
  CHECK(gs_features_check_config(f, cfg) == GS_OK);
  const int bad_days[] = {7};
  gs_features* none = nullptr;
  CHECK(gs_features_build(loaded, cfg, bad_days, 1, &none) == GS_ERR_INVALID_ARGUMENT);

  gs_model* m = nullptr;
  CHECK(gs_model_train(f, cfg, "transformer", nullptr, &m) == GS_ERR_INVALID_ARGUMENT);
  REQUIRE(gs_model_train(f, cfg, "graph", nullptr, &m) == GS_OK);
  CHECK(take([&] { char* s = nullptr; gs_model_variant(m, &s); return s; }()) == "GraphModel");
  CHECK(take([&] { char* s = nullptr; gs_model_history_csv(m, &s); return s; }()).find("epoch") == 0);

  size_t count = 0;
  REQUIRE(gs_model_predict(m, f, 1, nullptr, 0, &count) == GS_OK);
  REQUIRE(count > 0);
  std::vector<double> a(count), b(count);
  REQUIRE(gs_model_predict(m, f, 1, a.data(), a.size(), &count) == GS_OK);

  const std::string ckpt = (tmp.path / "m.json").string();
  REQUIRE(gs_model_save(m, ckpt.c_str()) == GS_OK);
  gs_model* back = nullptr;
  REQUIRE(gs_model_load(ckpt.c_str(), &back) == GS_OK);
  REQUIRE(gs_model_predict(back, f, 1, b.data(), b.size(), &count) == GS_OK);
  CHECK(a == b);

  gs_metrics stored{}, fixed{};
  REQUIRE(gs_model_evaluate(back, f, 1, NAN, &stored) == GS_OK);
  double thr = -1;
  REQUIRE(gs_model_threshold(back, &thr) == GS_OK);
  CHECK(stored.threshold == thr);
  REQUIRE(gs_model_evaluate(back, f, 1, 0.0, &fixed) == GS_OK);
  CHECK(fixed.kkd == 100.0);
  CHECK(fixed.ysl == 0.0);
  CHECK(gs_model_evaluate(back, f, 1, 1.5, &fixed) == GS_ERR_INVALID_ARGUMENT);

  gs_metrics prev{};
  REQUIRE(gs_run_system(f, cfg, "prevday", &prev) == GS_OK);
  CHECK(prev.kkd >= 0.0);
  CHECK(gs_run_system(f, cfg, "oracle", &prev) == GS_ERR_INVALID_ARGUMENT);

  char* csv = nullptr;
  char* table = nullptr;
  int infeasible = -1;
  REQUIRE(gs_report_daily(f, cfg, "prevday", &csv, &table, &infeasible) == GS_OK);
  const std::string daily = take(csv);
  CHECK(daily.rfind("date,threshold,kkd,ryd,ysl,acc\n", 0) == 0);
  CHECK(std::count(daily.begin(), daily.end(), '\n') == 3);
  CHECK(take(table).find("kkd") != std::string::npos);
  CHECK(infeasible == 0);

  gs_model_free(back);
  gs_model_free(m);
  gs_features_free(f);
  gs_dataset_free(loaded);
  gs_dataset_free(ds);
  gs_config_free(other);
  gs_config_free(cfg);
}
