#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gridstab/features.hpp"
#include "gridstab/nn_core.hpp"

namespace gridstab {

enum class ModelVariant { GraphModel, GraphPool, MlpOnly, DeepCnn5, NoGlobal, NoLocal, NoGraph, NoEmbedding };

const char* to_string(ModelVariant v);
// Accepts the canonical names, the CLI spellings (graph, graphpool, mlp,
// deepcnn5) and the ablation keys (no-global, no-local, no-graph, no-embedding).
ModelVariant variant_from_string(const std::string& s);

enum class GlobalEncoder { StatsMlp, RawCnn };
enum class PoolKind { Mean, Max };

struct ModelConfig {
  GlobalEncoder global_encoder = GlobalEncoder::StatsMlp;
  int gcn_layers = 3;
  int gcn_hidden = 64;      // |S_l|
  PoolKind pool = PoolKind::Mean;
  int embed_dim = kEmbedDim;
  int global_hidden = 64;   // |S_g|
  int id_hidden = 32;       // |S_id|
  std::vector<int> mlp_hidden{200, 100};
  int cnn_channels = 16;
  int cnn_kernel = 5;
  bool final_gcn_relu = true;
  nn::LossForm loss = nn::LossForm::Binary;
  std::uint64_t seed = 7;

  void validate() const;
};

// Which inputs and heads a variant uses. Ablated inputs are never built.
struct Architecture {
  bool plain_mlp = false;    // global stats -> hidden stack -> logit
  bool global_stats = false;
  bool global_raw = false;
  int raw_stages = 0;
  bool local = false;
  bool graph = false;        // false: identity propagation in place of A_norm
  bool embedding = false;
  PoolKind pool = PoolKind::Mean;
};

Architecture architecture(ModelVariant v, const ModelConfig& c);

// Per-column standardization fitted on the training split.
struct Normalizer {
  std::vector<double> global_mean, global_scale;
  std::vector<double> node_mean, node_scale;
  std::vector<double> raw_mean, raw_scale;
};

struct Batch {
  std::size_t size = 0;
  Matrix global;                  // B x G
  std::vector<nn::Tensor> raw;    // per sample, C x N_bus x 1
  Matrix nodes;                   // (B * kLocalNodes) x kNodeFeatureDim
  nn::SparseOperator propagation; // block diagonal
  std::vector<std::uint8_t> mask; // B * kLocalNodes
  std::vector<int> element_ids;
  std::vector<double> labels;
};

struct ForwardCache {
  std::vector<Matrix> global_acts;                   // stats MLP, post-ReLU
  std::vector<std::vector<nn::ConvPoolCache>> conv;  // [sample][stage]
  std::vector<std::vector<std::size_t>> conv_shapes; // output shape of the last stage, per sample
  Matrix raw_flat;
  Matrix raw_dense;
  std::vector<nn::GcnCache> gcn;
  Matrix pooled;
  std::vector<int> pool_source;  // max pooling: winning row per (sample, column)
  std::vector<int> real_nodes;
  Matrix embedded;
  Matrix id_out;
  Matrix concat;
  std::vector<Matrix> mlp_acts;  // plain MLP, post-ReLU
};

class Model {
 public:
  Model(ModelVariant variant, ModelConfig config, int global_dim, int n_elements, int n_bus);

  ModelVariant variant() const { return variant_; }
  const ModelConfig& config() const { return config_; }
  const Architecture& arch() const { return arch_; }
  int global_dim() const { return global_dim_; }
  int n_elements() const { return n_elements_; }
  int n_bus() const { return n_bus_; }

  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }
  Normalizer& normalizer() { return normalizer_; }
  const Normalizer& normalizer() const { return normalizer_; }

  double threshold = 0.5;
  std::uint64_t feature_hash = 0;

  void fit_normalizer(const FeatureSet& fs, std::span<const std::size_t> indices);
  Batch make_batch(const FeatureSet& fs, std::span<const std::size_t> indices) const;

  std::vector<double> logits(const Batch& batch, ForwardCache* cache = nullptr) const;
  std::vector<double> forward(const Batch& batch) const;
  void backward(const Batch& batch, const ForwardCache& cache, std::span<const double> dlogits);
  // Zeroes gradients, then forward + backward. Returns the loss.
  double loss_and_grad(const Batch& batch);

  // Throws Error(Format) when the feature set was built with a different spec.
  std::vector<double> predict(const FeatureSet& fs, std::span<const std::size_t> indices,
                              std::size_t batch_size = 256) const;

 private:
  void build_params();

  ModelVariant variant_;
  ModelConfig config_;
  Architecture arch_;
  int global_dim_;
  int n_elements_;
  int n_bus_;
  nn::ParamSet params_;
  Normalizer normalizer_;
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 64;
  std::uint64_t seed = 7;
  bool balance = true;
  double target_kkd = 98.0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_kkd = 0.0;
  double val_acc = 0.0;
  double val_threshold = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  nn::AdamState adam;  // optimizer state at the kept epoch
};

// Adam on the cross-entropy objective; keeps the epoch with the best
// validation accuracy at the reliability-calibrated threshold, and stores that
// threshold in the returned model. Throws Error(InvalidArgument) on an empty
// training set and Error(Numeric) on a non-finite loss.
TrainResult train_model(const FeatureSet& fs, std::span<const std::size_t> train_indices,
                        std::span<const std::size_t> val_indices, ModelVariant variant, const ModelConfig& config,
                        const TrainConfig& train);

std::string history_csv(const std::vector<EpochRecord>& history);

}  // namespace gridstab
