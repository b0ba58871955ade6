#include "gridstab/gridstab.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <optional>
#include <string>

#include "gridstab/error.hpp"
#include "gridstab/log.hpp"
#include "gridstab/persist.hpp"
#include "gridstab/pipeline.hpp"

using namespace gridstab;

struct gs_config {
  RunConfig c;
};
struct gs_dataset {
  std::shared_ptr<const Dataset> ds;
};
struct gs_features {
  FeatureSet fs;
};
struct gs_model {
  Model model;
  std::vector<EpochRecord> history;
  std::optional<nn::AdamState> adam;
};

namespace {

thread_local std::string g_last_error;

gs_status status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return GS_ERR_INVALID_ARGUMENT;
    case ErrorCode::Io: return GS_ERR_IO;
    case ErrorCode::Format: return GS_ERR_FORMAT;
    case ErrorCode::Structure: return GS_ERR_STRUCTURE;
    case ErrorCode::Infeasible: return GS_ERR_INFEASIBLE;
    case ErrorCode::Numeric: return GS_ERR_NUMERIC;
    case ErrorCode::Internal: return GS_ERR_INTERNAL;
  }
  return GS_ERR_INTERNAL;
}

template <typename F>
gs_status guard(F&& body) {
  try {
    g_last_error.clear();
    body();
    return GS_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return GS_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return GS_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return GS_ERR_INTERNAL;
  }
}

template <typename... Ptrs>
void require(const char* what, Ptrs... ptrs) {
  if (((ptrs == nullptr) || ...)) fail(ErrorCode::InvalidArgument, std::string("null argument to ") + what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void fill(gs_metrics* out, const MetricRow& m, bool infeasible) {
  out->threshold = m.threshold;
  out->kkd = m.kkd;
  out->ryd = m.ryd;
  out->ysl = m.ysl;
  out->acc = m.acc;
  out->infeasible = infeasible ? 1 : 0;
}

ModelVariant resolve_variant(const char* variant, const char* ablate) {
  const ModelVariant v = variant ? variant_from_string(variant) : ModelVariant::GraphModel;
  if (!ablate) return v;
  if (v != ModelVariant::GraphModel) fail(ErrorCode::InvalidArgument, "ablations apply to the full graph model only");
  const std::string a = ablate;
  if (a == "global") return ModelVariant::NoGlobal;
  if (a == "local") return ModelVariant::NoLocal;
  if (a == "graph") return ModelVariant::NoGraph;
  if (a == "embedding") return ModelVariant::NoEmbedding;
  fail(ErrorCode::InvalidArgument, "unknown ablation '" + a + "'");
}

void emit_report(const std::vector<ReportRow>& rows, const char* key, char** csv, char** table, int* any_infeasible) {
  bool infeasible = false;
  for (const auto& r : rows) infeasible = infeasible || r.infeasible;
  std::unique_ptr<char, decltype(&std::free)> c(dup_string(report_csv(rows, key)), &std::free);
  *table = dup_string(report_table(rows, key));
  *csv = c.release();
  if (any_infeasible) *any_infeasible = infeasible ? 1 : 0;
}

}  // namespace

extern "C" {

GS_API const char* gs_version(void) { return "0.1.0"; }

GS_API const char* gs_last_error(void) { return g_last_error.c_str(); }

GS_API const char* gs_status_name(gs_status status) {
  switch (status) {
    case GS_OK: return "ok";
    case GS_ERR_INVALID_ARGUMENT: return "invalid argument";
    case GS_ERR_IO: return "i/o error";
    case GS_ERR_FORMAT: return "format error";
    case GS_ERR_STRUCTURE: return "structural error";
    case GS_ERR_INFEASIBLE: return "infeasible";
    case GS_ERR_NUMERIC: return "numeric error";
    case GS_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

GS_API void gs_string_free(char* s) { std::free(s); }

// ---- configuration ----

GS_API gs_status gs_config_default(gs_config** out) {
  return guard([&] {
    require("gs_config_default", out);
    *out = new gs_config{};
  });
}

GS_API gs_status gs_config_load(const char* path, gs_config** out) {
  return guard([&] {
    require("gs_config_load", path, out);
    *out = new gs_config{load_run_config(path)};
  });
}

GS_API gs_status gs_config_parse(const char* text, gs_config** out) {
  return guard([&] {
    require("gs_config_parse", text, out);
    *out = new gs_config{parse_run_config(text)};
  });
}

GS_API gs_status gs_config_set_synth_size(gs_config* cfg, int buses, int days) {
  return guard([&] {
    require("gs_config_set_synth_size", cfg);
    RunConfig c = cfg->c;
    if (buses != 0) c.synth.n_bus = buses;
    if (days != 0) c.synth.days = days;
    c.validate();
    cfg->c = c;
  });
}

GS_API gs_status gs_config_set_synth_seed(gs_config* cfg, uint64_t seed) {
  return guard([&] {
    require("gs_config_set_synth_seed", cfg);
    cfg->c.synth.seed = seed;
  });
}

GS_API gs_status gs_config_set_train_seed(gs_config* cfg, uint64_t seed) {
  return guard([&] {
    require("gs_config_set_train_seed", cfg);
    cfg->c.model.seed = seed;
    cfg->c.train.seed = seed;
    cfg->c.svm.seed = seed;
  });
}

GS_API gs_status gs_config_set_target_kkd(gs_config* cfg, double target_kkd) {
  return guard([&] {
    require("gs_config_set_target_kkd", cfg);
    if (!(target_kkd >= 0.0 && target_kkd <= 100.0)) fail(ErrorCode::InvalidArgument, "target kkd must lie in [0, 100]");
    cfg->c.eval.target_kkd = target_kkd;
  });
}

GS_API gs_status gs_config_set_threshold(gs_config* cfg, double threshold) {
  return guard([&] {
    require("gs_config_set_threshold", cfg);
    if (std::isnan(threshold)) {
      cfg->c.eval.threshold.reset();
      return;
    }
    if (!(threshold >= 0.0 && threshold <= 1.0)) fail(ErrorCode::InvalidArgument, "threshold must lie in [0, 1]");
    cfg->c.eval.threshold = threshold;
  });
}

GS_API gs_status gs_config_set_day(gs_config* cfg, int day) {
  return guard([&] {
    require("gs_config_set_day", cfg);
    if (day < 0) fail(ErrorCode::InvalidArgument, "day must be >= 0");
    cfg->c.eval.day = day;
  });
}

GS_API gs_status gs_config_set_epochs(gs_config* cfg, int epochs) {
  return guard([&] {
    require("gs_config_set_epochs", cfg);
    if (epochs < 1) fail(ErrorCode::InvalidArgument, "epochs must be >= 1");
    cfg->c.train.epochs = epochs;
  });
}

GS_API gs_status gs_config_to_json(const gs_config* cfg, char** out) {
  return guard([&] {
    require("gs_config_to_json", cfg, out);
    *out = dup_string(dump_run_config(cfg->c));
  });
}

GS_API gs_status gs_config_log(const gs_config* cfg) {
  return guard([&] {
    require("gs_config_log", cfg);
    logger().info("resolved config:\n{}", dump_run_config(cfg->c));
  });
}

GS_API void gs_config_free(gs_config* cfg) { delete cfg; }

// ---- datasets ----

GS_API gs_status gs_dataset_synthesize(const gs_config* cfg, gs_dataset** out) {
  return guard([&] {
    require("gs_dataset_synthesize", cfg, out);
    *out = new gs_dataset{std::make_shared<const Dataset>(synthesize(cfg->c.synth))};
  });
}

GS_API gs_status gs_dataset_save(const gs_dataset* ds, const gs_config* cfg, const char* dir) {
  return guard([&] {
    require("gs_dataset_save", ds, cfg, dir);
    save_dataset(*ds->ds, cfg->c, dir);
  });
}

GS_API gs_status gs_dataset_load(const char* dir, gs_dataset** out) {
  return guard([&] {
    require("gs_dataset_load", dir, out);
    *out = new gs_dataset{std::make_shared<const Dataset>(load_dataset(dir))};
  });
}

GS_API gs_status gs_dataset_get_info(const gs_dataset* ds, gs_dataset_info* out) {
  return guard([&] {
    require("gs_dataset_get_info", ds, out);
    const Dataset& d = *ds->ds;
    out->buses = static_cast<int>(d.network.bus_count());
    out->elements = static_cast<int>(d.network.element_count());
    out->ac_lines = static_cast<int>(d.network.ac_line_ids().size());
    out->days = d.config.days;
    out->slots_per_day = d.config.slots_per_day;
    out->snapshots = static_cast<long>(d.snapshots.size());
    out->faults = static_cast<long>(d.faults.size());
    out->unstable = 0;
    for (const auto& f : d.faults) out->unstable += f.label == Label::Unstable;
  });
}

GS_API gs_status gs_dataset_check_config(const gs_dataset* ds, const gs_config* cfg) {
  return guard([&] {
    require("gs_dataset_check_config", ds, cfg);
    RunConfig a, b;
    a.synth = ds->ds->config;
    b.synth = cfg->c.synth;
    if (dump_run_config(a) != dump_run_config(b))
      fail(ErrorCode::Format, "dataset was generated with a different synth configuration");
  });
}

GS_API void gs_dataset_free(gs_dataset* ds) { delete ds; }

// ---- features ----

GS_API gs_status gs_features_build(const gs_dataset* ds, const gs_config* cfg, const int* days, size_t n_days,
                                   gs_features** out) {
  return guard([&] {
    require("gs_features_build", ds, cfg, out);
    RunConfig c = cfg->c;
    c.synth.n_regions = ds->ds->config.n_regions;
    FeatureSet fs = featurize(ds->ds, c.feature_spec(), c.features.threads);
    if (days) fs = select_days(fs, std::vector<int>(days, days + n_days));
    *out = new gs_features{std::move(fs)};
  });
}

GS_API gs_status gs_features_save(const gs_features* f, const char* path) {
  return guard([&] {
    require("gs_features_save", f, path);
    save_features(f->fs, path);
  });
}

GS_API gs_status gs_features_load(const char* path, gs_features** out) {
  return guard([&] {
    require("gs_features_load", path, out);
    *out = new gs_features{load_features(path)};
  });
}

GS_API gs_status gs_features_sample_count(const gs_features* f, size_t* out) {
  return guard([&] {
    require("gs_features_sample_count", f, out);
    *out = f->fs.samples.size();
  });
}

GS_API gs_status gs_features_check_config(const gs_features* f, const gs_config* cfg) {
  return guard([&] {
    require("gs_features_check_config", f, cfg);
    if (cfg->c.feature_spec().hash() != f->fs.spec_hash)
      fail(ErrorCode::Format, "features were built with a different global feature spec");
  });
}

GS_API void gs_features_free(gs_features* f) { delete f; }

// ---- models ----

GS_API gs_status gs_model_train(const gs_features* f, const gs_config* cfg, const char* variant, const char* ablate,
                                gs_model** out) {
  return guard([&] {
    require("gs_model_train", f, cfg, out);
    const ModelVariant v = resolve_variant(variant, ablate);
    const ExperimentConfig e = cfg->c.experiment();
    const FeatureSet& fs = f->fs;
    const int cut = std::clamp(static_cast<int>(std::lround(fs.slots_per_day * (1.0 - e.calib_fraction))), 1,
                               fs.slots_per_day - 1);
    const int day = cfg->c.eval.day;
    const auto train = fs.day_indices(day, 0, cut);
    const auto calib = fs.day_indices(day, cut);
    if (train.empty() || calib.empty()) fail(ErrorCode::InvalidArgument, "no samples for day " + std::to_string(day));
    TrainResult r = train_model(fs, train, calib, v, e.model, e.train);
    if (e.threshold) r.model.threshold = *e.threshold;
    *out = new gs_model{std::move(r.model), std::move(r.history), std::move(r.adam)};
  });
}

GS_API gs_status gs_model_save(const gs_model* m, const char* path) {
  return guard([&] {
    require("gs_model_save", m, path);
    save_checkpoint(m->model, path, m->adam ? &*m->adam : nullptr);
  });
}

GS_API gs_status gs_model_load(const char* path, gs_model** out) {
  return guard([&] {
    require("gs_model_load", path, out);
    nn::AdamState adam;
    Model model = load_checkpoint(path, &adam);
    std::optional<nn::AdamState> kept;
    if (!adam.m.empty()) kept = std::move(adam);
    *out = new gs_model{std::move(model), {}, std::move(kept)};
  });
}

GS_API gs_status gs_model_variant(const gs_model* m, char** out) {
  return guard([&] {
    require("gs_model_variant", m, out);
    *out = dup_string(to_string(m->model.variant()));
  });
}

GS_API gs_status gs_model_threshold(const gs_model* m, double* out) {
  return guard([&] {
    require("gs_model_threshold", m, out);
    *out = m->model.threshold;
  });
}

GS_API gs_status gs_model_history_csv(const gs_model* m, char** out) {
  return guard([&] {
    require("gs_model_history_csv", m, out);
    *out = dup_string(history_csv(m->history));
  });
}

GS_API gs_status gs_model_predict(const gs_model* m, const gs_features* f, int day, double* scores, size_t capacity,
                                  size_t* n) {
  return guard([&] {
    require("gs_model_predict", m, f, n);
    const auto idx = f->fs.day_indices(day);
    if (idx.empty()) fail(ErrorCode::InvalidArgument, "no samples for day " + std::to_string(day));
    *n = idx.size();
    if (!scores || capacity < idx.size()) return;
    const auto s = m->model.predict(f->fs, idx);
    std::copy(s.begin(), s.end(), scores);
  });
}

GS_API gs_status gs_model_evaluate(const gs_model* m, const gs_features* f, int day, double threshold,
                                   gs_metrics* out) {
  return guard([&] {
    require("gs_model_evaluate", m, f, out);
    const auto idx = f->fs.day_indices(day);
    if (idx.empty()) fail(ErrorCode::InvalidArgument, "no samples for day " + std::to_string(day));
    const double t = std::isnan(threshold) ? m->model.threshold : threshold;
    const auto scores = m->model.predict(f->fs, idx);
    fill(out, compute_metrics(scores, labels_of(f->fs, idx), t), false);
  });
}

GS_API void gs_model_free(gs_model* m) { delete m; }

// ---- experiments ----

GS_API gs_status gs_run_system(const gs_features* f, const gs_config* cfg, const char* system, gs_metrics* out) {
  return guard([&] {
    require("gs_run_system", f, cfg, system, out);
    const ExperimentConfig e = cfg->c.experiment();
    const auto split = split_day(f->fs, cfg->c.eval.day, e.calib_fraction);
    const Outcome o = run_system(f->fs, split, system, e);
    fill(out, o.metrics, o.infeasible);
  });
}

GS_API gs_status gs_report_daily(const gs_features* f, const gs_config* cfg, const char* system, char** csv,
                                 char** table, int* any_infeasible) {
  return guard([&] {
    require("gs_report_daily", f, cfg, system, csv, table);
    const auto all = f->fs.days();
    std::vector<int> days;
    for (int d : all)
      if (std::find(all.begin(), all.end(), d + 1) != all.end()) days.push_back(d);
    const auto rows = daily_report(f->fs, system, days, cfg->c.experiment());
    emit_report(rows, "date", csv, table, any_infeasible);
  });
}

GS_API gs_status gs_report_ablation(const gs_features* f, const gs_config* cfg, char** csv, char** table,
                                    int* any_infeasible) {
  return guard([&] {
    require("gs_report_ablation", f, cfg, csv, table);
    const auto rows = ablation_report(f->fs, cfg->c.eval.day, cfg->c.experiment());
    emit_report(rows, "input", csv, table, any_infeasible);
  });
}

GS_API gs_status gs_report_compare(const gs_features* f, const gs_config* cfg, char** csv, char** table,
                                   int* any_infeasible) {
  return guard([&] {
    require("gs_report_compare", f, cfg, csv, table);
    const auto rows = compare_report(f->fs, cfg->c.eval.day, cfg->c.experiment());
    emit_report(rows, "model", csv, table, any_infeasible);
  });
}

}  // extern "C"
