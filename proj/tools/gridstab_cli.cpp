// Command-line front end. Talks to the library through the C API only.
#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gridstab/gridstab.h"

namespace {

constexpr int kExitError = 1;
constexpr int kExitUsage = 2;
constexpr int kExitInfeasible = 3;

struct Failure {
  int code;
  std::string message;
};

void check(gs_status s, const char* what) {
  if (s != GS_OK) throw Failure{kExitError, std::string(what) + ": " + gs_status_name(s) + ": " + gs_last_error()};
}

template <typename T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
  T** out() { return &p; }
  T* get() const { return p; }
};
using Config = Handle<gs_config, gs_config_free>;
using Dataset = Handle<gs_dataset, gs_dataset_free>;
using Features = Handle<gs_features, gs_features_free>;
using Model = Handle<gs_model, gs_model_free>;

std::string take(char* s) {
  std::string out = s ? s : "";
  gs_string_free(s);
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text)) throw Failure{kExitError, "cannot write " + path};
}

std::string metrics_line(const gs_metrics& m) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.2f %.2f %.2f %.2f", m.kkd, m.ryd, m.ysl, m.acc);
  return buf;
}

std::string metrics_csv(const char* key_name, const std::string& key, const gs_metrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,threshold,kkd,ryd,ysl,acc\n%s,%.6g,%.2f,%.2f,%.2f,%.2f\n", key_name, key.c_str(),
                m.threshold, m.kkd, m.ryd, m.ysl, m.acc);
  return buf;
}

// Options shared by every command.
struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  double target_kkd = 98.0;
  std::optional<double> threshold;
  std::optional<int> day;
  std::optional<int> epochs;
};

// Flags that feed a model or an evaluation.
struct Inputs {
  std::string data;
  std::string features;
};

void add_common(CLI::App* cmd, Common& c, bool with_out = true) {
  cmd->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "random seed");
  if (with_out) cmd->add_option("--out", c.out, "output path");
  cmd->add_option("--target-kkd", c.target_kkd, "reliability target in percent")->default_val(98.0);
  cmd->add_option("--threshold", c.threshold, "fixed decision threshold (skips calibration)");
}

void add_inputs(CLI::App* cmd, Inputs& in) {
  auto* d = cmd->add_option("--data", in.data, "dataset directory written by synth")->check(CLI::ExistingDirectory);
  auto* f = cmd->add_option("--features", in.features, "features.jsonl written by featurize")->check(CLI::ExistingFile);
  d->excludes(f);
  f->excludes(d);
}

void make_config(const Common& c, Config& cfg, bool train_seed) {
  if (c.config.empty())
    check(gs_config_default(cfg.out()), "config");
  else
    check(gs_config_load(c.config.c_str(), cfg.out()), "config");
  if (c.seed) {
    if (train_seed)
      check(gs_config_set_train_seed(cfg.get(), *c.seed), "--seed");
    else
      check(gs_config_set_synth_seed(cfg.get(), *c.seed), "--seed");
  }
  check(gs_config_set_target_kkd(cfg.get(), c.target_kkd), "--target-kkd");
  if (c.threshold) check(gs_config_set_threshold(cfg.get(), *c.threshold), "--threshold");
  if (c.day) check(gs_config_set_day(cfg.get(), *c.day), "--day");
  if (c.epochs) check(gs_config_set_epochs(cfg.get(), *c.epochs), "--epochs");
}

void load_features(const Inputs& in, const Common& c, const Config& cfg, Features& f) {
  if (!in.features.empty()) {
    check(gs_features_load(in.features.c_str(), f.out()), "features");
    if (!c.config.empty()) check(gs_features_check_config(f.get(), cfg.get()), "features");
    return;
  }
  if (in.data.empty()) throw Failure{kExitUsage, "one of --data or --features is required"};
  Dataset ds;
  check(gs_dataset_load(in.data.c_str(), ds.out()), "dataset");
  if (!c.config.empty()) check(gs_dataset_check_config(ds.get(), cfg.get()), "dataset");
  check(gs_features_build(ds.get(), cfg.get(), nullptr, 0, f.out()), "featurize");
}

int finish_report(const std::string& title, char* csv, char* table, int infeasible, const std::string& out) {
  const std::string c = take(csv), t = take(table);
  if (!title.empty()) std::cout << title << "\n";
  std::cout << t;
  if (!out.empty()) write_text(out, c);
  if (infeasible) std::cerr << "warning: calibration could not reach the reliability target\n";
  return infeasible ? kExitInfeasible : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transient-stability screening with graph convolutional networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(gs_version()));

  std::function<int()> run;

  // synth
  Common synth_c;
  int buses = 0, days = 0;
  auto* synth = app.add_subcommand("synth", "generate a synthetic grid, snapshots and labeled faults");
  add_common(synth, synth_c);
  synth->add_option("--buses", buses, "number of buses");
  synth->add_option("--days", days, "number of days");
  synth->get_option("--out")->required();
  synth->callback([&] {
    run = [&] {
      Config cfg;
      make_config(synth_c, cfg, false);
      if (buses > 0 || days > 0) check(gs_config_set_synth_size(cfg.get(), buses, days), "--buses/--days");
      check(gs_config_log(cfg.get()), "config");
      Dataset ds;
      check(gs_dataset_synthesize(cfg.get(), ds.out()), "synth");
      check(gs_dataset_save(ds.get(), cfg.get(), synth_c.out.c_str()), "save");
      gs_dataset_info info{};
      check(gs_dataset_get_info(ds.get(), &info), "synth");
      std::printf("buses %d elements %d ac_lines %d days %d snapshots %ld faults %ld unstable %ld (%.2f%%)\n",
                  info.buses, info.elements, info.ac_lines, info.days, info.snapshots, info.faults, info.unstable,
                  info.faults ? 100.0 * static_cast<double>(info.unstable) / static_cast<double>(info.faults) : 0.0);
      return 0;
    };
  });

  // featurize
  Common feat_c;
  std::string feat_data;
  std::vector<int> feat_days;
  auto* featurize = app.add_subcommand("featurize", "write global and local features as JSONL");
  add_common(featurize, feat_c);
  featurize->add_option("--data", feat_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  featurize->add_option("--days", feat_days, "only these days")->delimiter(',');
  featurize->get_option("--out")->required();
  featurize->callback([&] {
    run = [&] {
      Config cfg;
      make_config(feat_c, cfg, true);
      check(gs_config_log(cfg.get()), "config");
      Dataset ds;
      check(gs_dataset_load(feat_data.c_str(), ds.out()), "dataset");
      if (!feat_c.config.empty()) check(gs_dataset_check_config(ds.get(), cfg.get()), "dataset");
      Features f;
      check(gs_features_build(ds.get(), cfg.get(), feat_days.empty() ? nullptr : feat_days.data(), feat_days.size(),
                              f.out()),
            "featurize");
      check(gs_features_save(f.get(), feat_c.out.c_str()), "save");
      std::size_t n = 0;
      check(gs_features_sample_count(f.get(), &n), "featurize");
      std::printf("samples %zu\n", n);
      return 0;
    };
  });

  // train
  Common train_c;
  Inputs train_in;
  std::string variant = "graph", ablate, history;
  auto* train = app.add_subcommand("train", "train a model on one day and calibrate its threshold");
  add_common(train, train_c);
  add_inputs(train, train_in);
  train->add_option("--variant", variant, "model variant")
      ->check(CLI::IsMember({"graph", "graphpool", "mlp", "deepcnn5"}));
  train->add_option("--ablate", ablate, "drop one input of the graph model")
      ->check(CLI::IsMember({"global", "local", "graph", "embedding"}));
  train->add_option("--day", train_c.day, "training day");
  train->add_option("--epochs", train_c.epochs, "training epochs");
  train->add_option("--history", history, "write per-epoch history CSV here");
  train->get_option("--out")->required();
  train->callback([&] {
    run = [&] {
      Config cfg;
      make_config(train_c, cfg, true);
      check(gs_config_log(cfg.get()), "config");
      Features f;
      load_features(train_in, train_c, cfg, f);
      Model m;
      check(gs_model_train(f.get(), cfg.get(), variant.c_str(), ablate.empty() ? nullptr : ablate.c_str(), m.out()),
            "train");
      check(gs_model_save(m.get(), train_c.out.c_str()), "save");
      if (!history.empty()) {
        char* csv = nullptr;
        check(gs_model_history_csv(m.get(), &csv), "history");
        write_text(history, take(csv));
      }
      double t = 0.0;
      check(gs_model_threshold(m.get(), &t), "train");
      std::printf("threshold %.6g\n", t);
      return 0;
    };
  });

  // eval
  Common eval_c;
  Inputs eval_in;
  std::string checkpoint;
  auto* eval = app.add_subcommand("eval", "score one day with a checkpoint");
  add_common(eval, eval_c);
  add_inputs(eval, eval_in);
  eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--day", eval_c.day, "day to evaluate")->required();
  eval->callback([&] {
    run = [&] {
      Config cfg;
      make_config(eval_c, cfg, true);
      check(gs_config_log(cfg.get()), "config");
      Features f;
      load_features(eval_in, eval_c, cfg, f);
      Model m;
      check(gs_model_load(checkpoint.c_str(), m.out()), "checkpoint");
      gs_metrics r{};
      const double t = eval_c.threshold ? *eval_c.threshold : std::numeric_limits<double>::quiet_NaN();
      check(gs_model_evaluate(m.get(), f.get(), *eval_c.day, t, &r), "eval");
      std::printf("kkd ryd ysl acc\n%s\n", metrics_line(r).c_str());
      if (!eval_c.out.empty()) write_text(eval_c.out, metrics_csv("date", std::to_string(*eval_c.day), r));
      return 0;
    };
  });

  // ablate
  Common abl_c;
  Inputs abl_in;
  auto* ablate_cmd = app.add_subcommand("ablate", "retrain the graph model without each input group");
  add_common(ablate_cmd, abl_c);
  add_inputs(ablate_cmd, abl_in);
  ablate_cmd->add_option("--day", abl_c.day, "training day (evaluated on the next)");
  ablate_cmd->add_option("--epochs", abl_c.epochs, "training epochs");
  ablate_cmd->callback([&] {
    run = [&] {
      Config cfg;
      make_config(abl_c, cfg, true);
      check(gs_config_log(cfg.get()), "config");
      Features f;
      load_features(abl_in, abl_c, cfg, f);
      char *csv = nullptr, *table = nullptr;
      int infeasible = 0;
      check(gs_report_ablation(f.get(), cfg.get(), &csv, &table, &infeasible), "ablate");
      return finish_report("", csv, table, infeasible, abl_c.out);
    };
  });

  // baseline
  Common base_c;
  Inputs base_in;
  std::string baseline;
  auto* base = app.add_subcommand("baseline", "run one comparison system");
  add_common(base, base_c);
  add_inputs(base, base_in);
  base->add_option("--baseline", baseline, "baseline kind")
      ->required()
      ->check(CLI::IsMember({"prevday", "svm", "mlp"}));
  base->add_option("--day", base_c.day, "training day (evaluated on the next)");
  base->add_option("--epochs", base_c.epochs, "training epochs (mlp)");
  base->callback([&] {
    run = [&] {
      Config cfg;
      make_config(base_c, cfg, true);
      check(gs_config_log(cfg.get()), "config");
      Features f;
      load_features(base_in, base_c, cfg, f);
      gs_metrics r{};
      check(gs_run_system(f.get(), cfg.get(), baseline.c_str(), &r), "baseline");
      std::printf("kkd ryd ysl acc\n%s\n", metrics_line(r).c_str());
      if (!base_c.out.empty()) write_text(base_c.out, metrics_csv("model", baseline, r));
      if (r.infeasible) std::cerr << "warning: calibration could not reach the reliability target\n";
      return r.infeasible ? kExitInfeasible : 0;
    };
  });

  // report
  Common rep_c;
  Inputs rep_in;
  bool compare = false, ablation = false;
  std::string daily;
  auto* report = app.add_subcommand("report", "per-day, comparison and ablation tables");
  add_common(report, rep_c);
  add_inputs(report, rep_in);
  report->add_flag("--compare", compare, "model comparison table");
  report->add_flag("--ablation", ablation, "ablation table");
  report->add_option("--daily", daily, "per-day table for this system (variant or baseline)");
  report->add_option("--day", rep_c.day, "training day for the comparison and ablation tables");
  report->add_option("--epochs", rep_c.epochs, "training epochs");
  report->callback([&] {
    run = [&] {
      Config cfg;
      make_config(rep_c, cfg, true);
      check(gs_config_log(cfg.get()), "config");
      Features f;
      load_features(rep_in, rep_c, cfg, f);
      const bool all = !compare && !ablation && daily.empty();
      const std::string system = daily.empty() ? "graph" : daily;
      auto out_file = [&](const char* name) { return rep_c.out.empty() ? std::string() : rep_c.out + "/" + name; };
      if (!rep_c.out.empty()) std::filesystem::create_directories(rep_c.out);
      int code = 0;
      auto merge = [&](int c) { code = std::max(code, c); };
      if (all || !daily.empty()) {
        char *csv = nullptr, *table = nullptr;
        int inf = 0;
        check(gs_report_daily(f.get(), cfg.get(), system.c_str(), &csv, &table, &inf), "report");
        merge(finish_report("daily (" + system + ")", csv, table, inf, out_file("daily.csv")));
      }
      if (all || compare) {
        char *csv = nullptr, *table = nullptr;
        int inf = 0;
        check(gs_report_compare(f.get(), cfg.get(), &csv, &table, &inf), "report");
        merge(finish_report("comparison", csv, table, inf, out_file("compare.csv")));
      }
      if (all || ablation) {
        char *csv = nullptr, *table = nullptr;
        int inf = 0;
        check(gs_report_ablation(f.get(), cfg.get(), &csv, &table, &inf), "report");
        merge(finish_report("ablation", csv, table, inf, out_file("ablation.csv")));
      }
      return code;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }
  try {
    return run ? run() : kExitUsage;
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.code;
  }
}
