#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gridstab/baselines.hpp"
#include "gridstab/features.hpp"
#include "gridstab/model.hpp"
#include "gridstab/pipeline.hpp"
#include "gridstab/synth.hpp"

namespace gridstab {

inline constexpr int kFormatVersion = 1;

struct FeatureOptions {
  // Empty means GlobalFeatureSpec::full(synth.n_regions).
  std::vector<GlobalFeature> global;
  int local_nodes = kLocalNodes;
  int node_features = kNodeFeatureDim;
  unsigned threads = 0;  // 0: hardware concurrency
};

struct EvalOptions {
  double target_kkd = 98.0;
  double calib_fraction = 0.2;
  std::optional<double> threshold;
  int day = 0;  // training day for single-split commands
};

struct RunConfig {
  SynthConfig synth;
  FeatureOptions features;
  ModelConfig model;
  TrainConfig train;
  SvmConfig svm;
  EvalOptions eval;

  // Throws Error(InvalidArgument) on out-of-range values.
  void validate() const;
  GlobalFeatureSpec feature_spec() const;
  ExperimentConfig experiment() const;
};

// Missing keys keep their defaults; unknown keys throw Error(Format).
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string dump_run_config(const RunConfig& config);

// ---- dataset directory: config.json, network.json, snapshots.jsonl, faults.jsonl ----

std::string network_json(const Network& network);
Network parse_network(const std::string& json_text);

void save_dataset(const Dataset& dataset, const RunConfig& config, const std::filesystem::path& dir);
// The synth section of the stored config.json becomes Dataset::config.
Dataset load_dataset(const std::filesystem::path& dir);

// ---- features.jsonl -------------------------------------------------------------

// Header line, one record per snapshot (global vector, raw matrix), then one
// record per sample with its local graph.
void save_features(const FeatureSet& features, const std::filesystem::path& path);
FeatureSet load_features(const std::filesystem::path& path);

// ---- checkpoints --------------------------------------------------------------------

std::string checkpoint_json(const Model& model, const nn::AdamState* adam = nullptr);
// Throws Error(Format) on a version, shape or layer mismatch.
Model parse_checkpoint(const std::string& json_text, nn::AdamState* adam = nullptr);

void save_checkpoint(const Model& model, const std::filesystem::path& path, const nn::AdamState* adam = nullptr);
Model load_checkpoint(const std::filesystem::path& path, nn::AdamState* adam = nullptr);

// ---- helpers ------------------------------------------------------------------------

std::string read_file(const std::filesystem::path& path);
// Creates parent directories. Throws Error(Io).
void write_file(const std::filesystem::path& path, const std::string& text);

}  // namespace gridstab
