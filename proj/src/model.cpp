#include "gridstab/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "gridstab/error.hpp"
#include "gridstab/eval.hpp"
#include "gridstab/log.hpp"
#include "gridstab/rng.hpp"

namespace gridstab {
namespace {

constexpr const char* kVariantNames[] = {"GraphModel", "GraphPool", "MlpOnly", "DeepCnn5",
                                         "NoGlobal",   "NoLocal",   "NoGraph", "NoEmbedding"};

using nn::Param;
using nn::Tensor;

std::vector<std::size_t> shape2(int r, int c) { return {static_cast<std::size_t>(r), static_cast<std::size_t>(c)}; }

void fit_columns(const std::vector<const double*>& rows, int width, std::vector<double>& mean,
                 std::vector<double>& scale) {
  mean.assign(width, 0.0);
  scale.assign(width, 1.0);
  if (rows.empty()) return;
  const double n = static_cast<double>(rows.size());
  for (const double* r : rows)
    for (int c = 0; c < width; ++c) mean[c] += r[c];
  for (auto& m : mean) m /= n;
  std::vector<double> var(width, 0.0);
  for (const double* r : rows)
    for (int c = 0; c < width; ++c) var[c] += (r[c] - mean[c]) * (r[c] - mean[c]);
  for (int c = 0; c < width; ++c) {
    const double sd = std::sqrt(var[c] / n);
    scale[c] = sd > 1e-12 ? sd : 1.0;
  }
}

// Halve the bus axis after a conv stage only while the next kernel still fits,
// so deep stacks also run on small grids.
int raw_pool(int conv_h, int kernel) { return conv_h / 2 >= kernel ? 2 : 1; }

int raw_output_height(int n_bus, int stages, int kernel) {
  int h = n_bus;
  for (int s = 0; s < stages; ++s) {
    const int conv = h - kernel + 1;
    if (conv < 1) return -1;
    h = conv / raw_pool(conv, kernel);
  }
  return h;
}

}  // namespace

const char* to_string(ModelVariant v) { return kVariantNames[static_cast<int>(v)]; }

ModelVariant variant_from_string(const std::string& s) {
  for (int i = 0; i < 8; ++i)
    if (s == kVariantNames[i]) return static_cast<ModelVariant>(i);
  if (s == "graph") return ModelVariant::GraphModel;
  if (s == "graphpool") return ModelVariant::GraphPool;
  if (s == "mlp") return ModelVariant::MlpOnly;
  if (s == "deepcnn5") return ModelVariant::DeepCnn5;
  if (s == "no-global") return ModelVariant::NoGlobal;
  if (s == "no-local") return ModelVariant::NoLocal;
  if (s == "no-graph") return ModelVariant::NoGraph;
  if (s == "no-embedding") return ModelVariant::NoEmbedding;
  fail(ErrorCode::InvalidArgument, "unknown model variant '" + s + "'");
}

void ModelConfig::validate() const {
  if (gcn_layers != 3) fail(ErrorCode::InvalidArgument, "model.gcn_layers must be 3");
  if (embed_dim != kEmbedDim) fail(ErrorCode::InvalidArgument, "model.embed_dim must be 20");
  if (gcn_hidden < 1 || global_hidden < 1 || id_hidden < 1 || cnn_channels < 1 || cnn_kernel < 1)
    fail(ErrorCode::InvalidArgument, "model widths must be positive");
  if (mlp_hidden.empty()) fail(ErrorCode::InvalidArgument, "model.mlp_hidden must not be empty");
  for (int h : mlp_hidden)
    if (h < 1) fail(ErrorCode::InvalidArgument, "model.mlp_hidden entries must be positive");
}

Architecture architecture(ModelVariant v, const ModelConfig& c) {
  Architecture a;
  const bool raw = c.global_encoder == GlobalEncoder::RawCnn;
  auto full = [&] {
    a.global_stats = !raw;
    a.global_raw = raw;
    a.raw_stages = raw ? 2 : 0;
    a.local = true;
    a.graph = true;
    a.embedding = true;
    a.pool = c.pool;
  };
  switch (v) {
    case ModelVariant::GraphModel: full(); break;
    case ModelVariant::GraphPool:
      full();
      a.pool = PoolKind::Max;
      break;
    case ModelVariant::MlpOnly:
      a.plain_mlp = true;
      a.global_stats = true;
      break;
    case ModelVariant::DeepCnn5:
      a.global_raw = true;
      a.raw_stages = 5;
      a.embedding = true;
      break;
    case ModelVariant::NoGlobal:
      full();
      a.global_stats = a.global_raw = false;
      a.raw_stages = 0;
      break;
    case ModelVariant::NoLocal:
      full();
      a.local = a.graph = a.embedding = false;
      break;
    case ModelVariant::NoGraph:
      full();
      a.graph = false;
      break;
    case ModelVariant::NoEmbedding:
      full();
      a.embedding = false;
      break;
  }
  return a;
}

Model::Model(ModelVariant variant, ModelConfig config, int global_dim, int n_elements, int n_bus)
    : variant_(variant),
      config_(std::move(config)),
      arch_(architecture(variant, config_)),
      global_dim_(global_dim),
      n_elements_(n_elements),
      n_bus_(n_bus) {
  config_.validate();
  if (arch_.global_stats && global_dim_ < 1) fail(ErrorCode::InvalidArgument, "global feature vector is empty");
  if (arch_.embedding && n_elements_ < 1) fail(ErrorCode::InvalidArgument, "embedding needs at least one element");
  if (arch_.global_raw && raw_output_height(n_bus_, arch_.raw_stages, config_.cnn_kernel) < 1)
    fail(ErrorCode::InvalidArgument, "raw CNN: " + std::to_string(n_bus_) + " buses too few for " +
                                         std::to_string(arch_.raw_stages) + " conv stages");
  build_params();
}

void Model::build_params() {
  nn::Initializer init(config_.seed);
  auto dense = [&](const std::string& name, int in, int out) {
    auto& w = params_.add(name + ".w", shape2(in, out));
    init.glorot(w, in, out);
    params_.add(name + ".b", {static_cast<std::size_t>(out)});
  };
  int concat = 0;
  if (arch_.plain_mlp) {
    int in = global_dim_;
    for (std::size_t i = 0; i < config_.mlp_hidden.size(); ++i) {
      dense("mlp." + std::to_string(i), in, config_.mlp_hidden[i]);
      in = config_.mlp_hidden[i];
    }
    dense("head", in, 1);
    return;
  }
  if (arch_.global_stats) {
    dense("global.0", global_dim_, config_.global_hidden);
    dense("global.1", config_.global_hidden, config_.global_hidden);
    concat += config_.global_hidden;
  }
  if (arch_.global_raw) {
    int in_ch = kBusStateDim;
    const int k = config_.cnn_kernel;
    for (int s = 0; s < arch_.raw_stages; ++s) {
      const std::string name = "cnn." + std::to_string(s);
      auto& kern = params_.add(name + ".k", {static_cast<std::size_t>(config_.cnn_channels),
                                             static_cast<std::size_t>(in_ch), static_cast<std::size_t>(k), 1});
      init.glorot(kern, static_cast<std::size_t>(in_ch * k), static_cast<std::size_t>(config_.cnn_channels * k));
      params_.add(name + ".b", {static_cast<std::size_t>(config_.cnn_channels)});
      in_ch = config_.cnn_channels;
    }
    const int flat = config_.cnn_channels * raw_output_height(n_bus_, arch_.raw_stages, k);
    dense("cnn.dense", flat, config_.global_hidden);
    concat += config_.global_hidden;
  }
  if (arch_.local) {
    int in = kNodeFeatureDim;
    for (int l = 0; l < config_.gcn_layers; ++l) {
      auto& w = params_.add("gcn." + std::to_string(l) + ".w", shape2(in, config_.gcn_hidden));
      init.glorot(w, in, config_.gcn_hidden);
      in = config_.gcn_hidden;
    }
    concat += config_.gcn_hidden;
  }
  if (arch_.embedding) {
    auto& table = params_.add("embed.table", shape2(n_elements_, config_.embed_dim));
    init.normal(table, 0.1);
    dense("embed.dense", config_.embed_dim, config_.id_hidden);
    concat += config_.id_hidden;
  }
  dense("head", concat, 1);
}

void Model::fit_normalizer(const FeatureSet& fs, std::span<const std::size_t> indices) {
  std::vector<const double*> rows;
  if (arch_.global_stats) {
    std::vector<int> seen(fs.global.size(), 0);
    for (auto i : indices) {
      const int s = fs.samples[i].snapshot;
      if (!seen[s]++) rows.push_back(fs.global[s].data());
    }
    fit_columns(rows, global_dim_, normalizer_.global_mean, normalizer_.global_scale);
  }
  if (arch_.global_raw) {
    if (!fs.has_raw()) fail(ErrorCode::InvalidArgument, "variant needs raw state matrices; feature set has none");
    rows.clear();
    std::vector<int> seen(fs.raw.size(), 0);
    for (auto i : indices) {
      const int s = fs.samples[i].snapshot;
      if (seen[s]++) continue;
      for (Eigen::Index r = 0; r < fs.raw[s].rows(); ++r) rows.push_back(fs.raw[s].row(r).data());
    }
    fit_columns(rows, kBusStateDim, normalizer_.raw_mean, normalizer_.raw_scale);
  }
  if (arch_.local) {
    // A strided subset keeps this cheap on large training days.
    const std::size_t stride = std::max<std::size_t>(1, indices.size() / 2000);
    std::vector<LocalGraph> graphs;
    for (std::size_t k = 0; k < indices.size(); k += stride) graphs.push_back(fs.local_graph(indices[k]));
    rows.clear();
    for (const auto& g : graphs)
      for (int r = 0; r < kLocalNodes; ++r)
        if (g.node_mask[r]) rows.push_back(g.node_features.row(r).data());
    fit_columns(rows, kNodeFeatureDim, normalizer_.node_mean, normalizer_.node_scale);
  }
}

Batch Model::make_batch(const FeatureSet& fs, std::span<const std::size_t> indices) const {
  Batch b;
  b.size = indices.size();
  const auto n = static_cast<Eigen::Index>(b.size);
  b.labels.reserve(b.size);
  for (auto i : indices) b.labels.push_back(fs.samples[i].label == Label::Unstable ? 1.0 : 0.0);

  if (arch_.global_stats) {
    if (fs.spec.size() != static_cast<std::size_t>(global_dim_))
      fail(ErrorCode::Format, "global feature width differs from the model");
    b.global.resize(n, global_dim_);
    const bool norm = normalizer_.global_mean.size() == static_cast<std::size_t>(global_dim_);
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto& g = fs.global[fs.samples[indices[r]].snapshot];
      for (int c = 0; c < global_dim_; ++c)
        b.global(r, c) = norm ? (g[c] - normalizer_.global_mean[c]) / normalizer_.global_scale[c] : g[c];
    }
  }
  if (arch_.global_raw) {
    if (!fs.has_raw()) fail(ErrorCode::InvalidArgument, "variant needs raw state matrices; feature set has none");
    const bool norm = normalizer_.raw_mean.size() == static_cast<std::size_t>(kBusStateDim);
    for (auto i : indices) {
      const Matrix& m = fs.raw[fs.samples[i].snapshot];
      if (m.rows() != n_bus_) fail(ErrorCode::Format, "raw state matrix bus count differs from the model");
      Tensor t({static_cast<std::size_t>(kBusStateDim), static_cast<std::size_t>(n_bus_), 1});
      for (int c = 0; c < kBusStateDim; ++c)
        for (int r = 0; r < n_bus_; ++r)
          t.data[static_cast<std::size_t>(c) * n_bus_ + r] =
              norm ? (m(r, c) - normalizer_.raw_mean[c]) / normalizer_.raw_scale[c] : m(r, c);
      b.raw.push_back(std::move(t));
    }
  }
  if (arch_.local) {
    const bool norm = normalizer_.node_mean.size() == static_cast<std::size_t>(kNodeFeatureDim);
    b.nodes = Matrix::Zero(n * kLocalNodes, kNodeFeatureDim);
    b.mask.assign(b.size * kLocalNodes, 0);
    for (Eigen::Index r = 0; r < n; ++r) {
      const LocalGraph g = fs.local_graph(indices[r]);
      if (g.node_features.rows() != kLocalNodes || g.node_features.cols() != kNodeFeatureDim ||
          g.node_mask.size() != static_cast<std::size_t>(kLocalNodes))
        fail(ErrorCode::Format, "local graph has the wrong shape");
      for (int k = 0; k < kLocalNodes; ++k) {
        if (!g.node_mask[k]) continue;
        b.mask[r * kLocalNodes + k] = 1;
        auto dst = b.nodes.row(r * kLocalNodes + k);
        for (int c = 0; c < kNodeFeatureDim; ++c)
          dst(c) = norm ? (g.node_features(k, c) - normalizer_.node_mean[c]) / normalizer_.node_scale[c]
                        : g.node_features(k, c);
      }
      const std::span<const std::uint8_t> mask(b.mask.data() + r * kLocalNodes, kLocalNodes);
      if (arch_.graph)
        b.propagation.append_block(nn::normalized_propagation(kLocalNodes, g.edges, mask));
      else
        b.propagation.append_block(nn::identity_propagation(mask));
    }
  }
  if (arch_.embedding) {
    for (auto i : indices) {
      const int id = fs.samples[i].element_id;
      if (id < 0 || id >= n_elements_) fail(ErrorCode::Format, "element id outside the embedding table");
      b.element_ids.push_back(id);
    }
  }
  return b;
}

std::vector<double> Model::logits(const Batch& b, ForwardCache* cache) const {
  ForwardCache local_cache;
  ForwardCache& c = cache ? *cache : local_cache;
  const auto n = static_cast<Eigen::Index>(b.size);
  std::vector<Matrix> parts;

  auto dense_relu = [&](const Matrix& x, const std::string& name) {
    return nn::relu(nn::dense_forward(x, params_.at(name + ".w").value, params_.at(name + ".b").value));
  };

  if (arch_.plain_mlp) {
    c.mlp_acts.clear();
    const Matrix* x = &b.global;
    for (std::size_t i = 0; i < config_.mlp_hidden.size(); ++i) {
      c.mlp_acts.push_back(dense_relu(*x, "mlp." + std::to_string(i)));
      x = &c.mlp_acts.back();
    }
    const Matrix z = nn::dense_forward(*x, params_.at("head.w").value, params_.at("head.b").value);
    return {z.data(), z.data() + z.size()};
  }

  if (arch_.global_stats) {
    c.global_acts.clear();
    c.global_acts.push_back(dense_relu(b.global, "global.0"));
    c.global_acts.push_back(dense_relu(c.global_acts[0], "global.1"));
    parts.push_back(c.global_acts[1]);
  }
  if (arch_.global_raw) {
    c.conv.assign(b.size, {});
    c.conv_shapes.assign(b.size, {});
    Matrix flat;
    for (std::size_t s = 0; s < b.size; ++s) {
      Tensor x = b.raw[s];
      c.conv[s].resize(arch_.raw_stages);
      for (int st = 0; st < arch_.raw_stages; ++st) {
        const std::string name = "cnn." + std::to_string(st);
        const int p = raw_pool(static_cast<int>(x.shape[1]) - config_.cnn_kernel + 1, config_.cnn_kernel);
        x = nn::conv_maxpool_forward(x, params_.at(name + ".k").value, params_.at(name + ".b").value, {p, 1, p, 1},
                                     &c.conv[s][st]);
      }
      if (s == 0) flat.resize(n, static_cast<Eigen::Index>(x.size()));
      c.conv_shapes[s] = x.shape;
      flat.row(static_cast<Eigen::Index>(s)) = Eigen::Map<const Eigen::RowVectorXd>(x.data.data(), x.size());
    }
    c.raw_flat = std::move(flat);
    c.raw_dense = dense_relu(c.raw_flat, "cnn.dense");
    parts.push_back(c.raw_dense);
  }
  if (arch_.local) {
    c.gcn.assign(config_.gcn_layers, {});
    Matrix h = b.nodes;
    for (int l = 0; l < config_.gcn_layers; ++l) {
      const bool act = l + 1 < config_.gcn_layers || config_.final_gcn_relu;
      h = nn::gcn_forward(b.propagation, h, params_.at("gcn." + std::to_string(l) + ".w").value, act, &c.gcn[l]);
    }
    const int width = config_.gcn_hidden;
    c.pooled = Matrix::Zero(n, width);
    c.real_nodes.assign(b.size, 0);
    if (arch_.pool == PoolKind::Max) c.pool_source.assign(b.size * width, -1);
    for (Eigen::Index s = 0; s < n; ++s) {
      int real = 0;
      for (int k = 0; k < kLocalNodes; ++k) real += b.mask[s * kLocalNodes + k];
      c.real_nodes[s] = real;
      if (real == 0) continue;
      if (arch_.pool == PoolKind::Mean) {
        for (int k = 0; k < kLocalNodes; ++k)
          if (b.mask[s * kLocalNodes + k]) c.pooled.row(s) += h.row(s * kLocalNodes + k);
        c.pooled.row(s) /= static_cast<double>(real);
      } else {
        for (int col = 0; col < width; ++col) {
          double best = -1e300;
          int src = -1;
          for (int k = 0; k < kLocalNodes; ++k) {
            const int row = static_cast<int>(s) * kLocalNodes + k;
            if (b.mask[row] && h(row, col) > best) {
              best = h(row, col);
              src = row;
            }
          }
          c.pooled(s, col) = best;
          c.pool_source[s * width + col] = src;
        }
      }
    }
    parts.push_back(c.pooled);
  }
  if (arch_.embedding) {
    c.embedded = nn::embedding_forward(params_.at("embed.table").value, b.element_ids);
    c.id_out = dense_relu(c.embedded, "embed.dense");
    parts.push_back(c.id_out);
  }

  Eigen::Index total = 0;
  for (const auto& p : parts) total += p.cols();
  c.concat.resize(n, total);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    c.concat.middleCols(off, p.cols()) = p;
    off += p.cols();
  }
  const Matrix z = nn::dense_forward(c.concat, params_.at("head.w").value, params_.at("head.b").value);
  return {z.data(), z.data() + z.size()};
}

std::vector<double> Model::forward(const Batch& b) const {
  // Keep probabilities inside the open interval; sigmoid rounds to 1 past z ~ 37.
  constexpr double lo = std::numeric_limits<double>::denorm_min();
  const double hi = std::nextafter(1.0, 0.0);
  auto z = logits(b);
  for (auto& v : z) v = std::clamp(nn::sigmoid(v), lo, hi);
  return z;
}

void Model::backward(const Batch& b, const ForwardCache& c, std::span<const double> dlogits) {
  const auto n = static_cast<Eigen::Index>(b.size);
  const Matrix dz = Eigen::Map<const Matrix>(dlogits.data(), n, 1);

  auto dense_relu_back = [&](const Matrix& x, const Matrix& out, const Matrix& dout, const std::string& name) {
    return nn::dense_backward(x, nn::relu_backward(out, dout), params_.at(name + ".w"), params_.at(name + ".b"));
  };

  if (arch_.plain_mlp) {
    const std::size_t layers = config_.mlp_hidden.size();
    Matrix d = nn::dense_backward(c.mlp_acts.back(), dz, params_.at("head.w"), params_.at("head.b"));
    for (std::size_t i = layers; i-- > 0;) {
      const Matrix& in = i == 0 ? b.global : c.mlp_acts[i - 1];
      d = dense_relu_back(in, c.mlp_acts[i], d, "mlp." + std::to_string(i));
    }
    return;
  }

  const Matrix dconcat = nn::dense_backward(c.concat, dz, params_.at("head.w"), params_.at("head.b"));
  Eigen::Index off = 0;
  auto take = [&](Eigen::Index width) {
    Matrix part = dconcat.middleCols(off, width);
    off += width;
    return part;
  };

  if (arch_.global_stats) {
    const Matrix d1 = dense_relu_back(c.global_acts[0], c.global_acts[1], take(config_.global_hidden), "global.1");
    dense_relu_back(b.global, c.global_acts[0], d1, "global.0");
  }
  if (arch_.global_raw) {
    const Matrix dflat = dense_relu_back(c.raw_flat, c.raw_dense, take(config_.global_hidden), "cnn.dense");
    for (std::size_t s = 0; s < b.size; ++s) {
      Tensor d(c.conv_shapes[s]);
      const auto row = dflat.row(static_cast<Eigen::Index>(s));
      std::copy(row.data(), row.data() + d.size(), d.data.begin());
      for (int st = arch_.raw_stages; st-- > 0;) {
        const std::string name = "cnn." + std::to_string(st);
        d = nn::conv_maxpool_backward(c.conv[s][st], d, params_.at(name + ".k"), params_.at(name + ".b"));
      }
    }
  }
  if (arch_.local) {
    const int width = config_.gcn_hidden;
    const Matrix dpool = take(width);
    Matrix dh = Matrix::Zero(n * kLocalNodes, width);
    for (Eigen::Index s = 0; s < n; ++s) {
      if (c.real_nodes[s] == 0) continue;
      if (arch_.pool == PoolKind::Mean) {
        const Eigen::RowVectorXd share = dpool.row(s) / static_cast<double>(c.real_nodes[s]);
        for (int k = 0; k < kLocalNodes; ++k)
          if (b.mask[s * kLocalNodes + k]) dh.row(s * kLocalNodes + k) = share;
      } else {
        for (int col = 0; col < width; ++col) dh(c.pool_source[s * width + col], col) += dpool(s, col);
      }
    }
    for (int l = config_.gcn_layers; l-- > 0;)
      dh = nn::gcn_backward(b.propagation, c.gcn[l], dh, params_.at("gcn." + std::to_string(l) + ".w"));
  }
  if (arch_.embedding) {
    const Matrix demb = dense_relu_back(c.embedded, c.id_out, take(config_.id_hidden), "embed.dense");
    nn::embedding_backward(b.element_ids, demb, params_.at("embed.table"));
  }
}

double Model::loss_and_grad(const Batch& b) {
  params_.zero_grad();
  ForwardCache cache;
  const auto z = logits(b, &cache);
  std::vector<double> dz;
  const double loss = nn::sigmoid_bce(z, b.labels, config_.loss, &dz);
  backward(b, cache, dz);
  return loss;
}

std::vector<double> Model::predict(const FeatureSet& fs, std::span<const std::size_t> indices,
                                   std::size_t batch_size) const {
  if (feature_hash != 0 && fs.spec_hash != feature_hash)
    fail(ErrorCode::Format, "feature spec hash of the data does not match the model checkpoint");
  std::vector<double> out;
  out.reserve(indices.size());
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const auto chunk = indices.subspan(start, std::min(batch_size, indices.size() - start));
    const auto p = forward(make_batch(fs, chunk));
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

TrainResult train_model(const FeatureSet& fs, std::span<const std::size_t> train_indices,
                        std::span<const std::size_t> val_indices, ModelVariant variant, const ModelConfig& config,
                        const TrainConfig& tc) {
  if (train_indices.empty()) fail(ErrorCode::InvalidArgument, "training set is empty");
  if (tc.epochs < 1 || tc.batch_size < 1) fail(ErrorCode::InvalidArgument, "epochs and batch size must be >= 1");

  std::vector<std::size_t> train(train_indices.begin(), train_indices.end());
  if (tc.balance) {
    std::vector<Label> labels;
    for (auto i : train) labels.push_back(fs.samples[i].label);
    train = undersample_balance(train, labels, mix_seed(tc.seed, 11));
  }

  int n_bus = fs.has_raw() ? static_cast<int>(fs.raw.front().rows()) : 0;
  TrainResult result{Model(variant, config, static_cast<int>(fs.spec.size()), fs.n_elements, n_bus), {}, -1, {}};
  Model& model = result.model;
  model.feature_hash = fs.spec_hash;
  model.fit_normalizer(fs, train);

  std::vector<Label> val_labels;
  for (auto i : val_indices) val_labels.push_back(fs.samples[i].label);

  nn::AdamState adam;
  std::vector<nn::Tensor> best;
  double best_acc = -1.0;
  double best_threshold = 0.5;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    Rng rng(mix_seed(tc.seed, 13, static_cast<std::uint64_t>(epoch)));
    std::vector<std::size_t> order = train;
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::span<const std::size_t> chunk(order.data() + start,
                                               std::min<std::size_t>(tc.batch_size, order.size() - start));
      const Batch batch = model.make_batch(fs, chunk);
      const double loss = model.loss_and_grad(batch);
      if (!std::isfinite(loss))
        fail(ErrorCode::Numeric, "non-finite loss at epoch " + std::to_string(epoch) + ", batch starting " +
                                     std::to_string(start) + " (" + to_string(variant) + ")");
      loss_sum += loss * static_cast<double>(chunk.size());
      seen += chunk.size();
      nn::adam_step(model.params(), adam);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    if (!val_indices.empty()) {
      const auto scores = model.predict(fs, val_indices);
      const auto cal = calibrate_threshold(scores, val_labels, tc.target_kkd);
      rec.val_threshold = cal.threshold;
      rec.val_kkd = cal.at_threshold.kkd;
      rec.val_acc = cal.at_threshold.acc;
    }
    result.history.push_back(rec);
    logger().debug("{} epoch {} loss {:.5f} val kkd {:.2f} acc {:.2f}", to_string(variant), epoch, rec.train_loss,
                   rec.val_kkd, rec.val_acc);

    if (val_indices.empty() || rec.val_acc > best_acc) {
      best_acc = rec.val_acc;
      best_threshold = val_indices.empty() ? 0.5 : rec.val_threshold;
      result.best_epoch = epoch;
      best.clear();
      for (const auto& p : model.params().all()) best.push_back(p.value);
      result.adam = adam;
    }
  }
  auto& all = model.params().all();
  for (std::size_t k = 0; k < all.size(); ++k) all[k].value = best[k];
  model.params().zero_grad();
  model.threshold = best_threshold;
  return result;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,val_kkd,val_acc\n";
  char buf[128];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.2f,%.2f\n", r.epoch, r.train_loss, r.val_kkd, r.val_acc);
    out += buf;
  }
  return out;
}

}  // namespace gridstab
