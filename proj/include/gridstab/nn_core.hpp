#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gridstab/matrix.hpp"
#include "gridstab/rng.hpp"

namespace gridstab::nn {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> extents, double fill = 0.0);

  std::size_t size() const { return data.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : (shape.size() == 1 ? 1 : shape[0]); }
  std::size_t cols() const { return rows() == 0 ? 0 : data.size() / rows(); }
  // 2-D view; a 1-D tensor is a single row.
  Eigen::Map<Matrix> mat() {
    return {data.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())};
  }
  Eigen::Map<const Matrix> mat() const {
    return {data.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())};
  }
  bool all_finite() const;
};

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
};

// Ordered parameter collection; references returned by add() stay valid.
class ParamSet {
 public:
  Param& add(std::string name, std::vector<std::size_t> shape);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::deque<Param>& all() { return params_; }
  const std::deque<Param>& all() const { return params_; }
  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::deque<Param> params_;
};

// ---- dense ----------------------------------------------------------------

// y = x W + b with x: B x in, W: in x out, b: out.
Matrix dense_forward(const Matrix& x, const Tensor& w, const Tensor& b);
// Accumulates into w.grad / b.grad; returns dL/dx.
Matrix dense_backward(const Matrix& x, const Matrix& dy, Param& w, Param& b);

Matrix relu(const Matrix& x);
// dy masked by the forward output (out > 0).
Matrix relu_backward(const Matrix& out, const Matrix& dy);

// ---- convolution + max pool --------------------------------------------------

struct PoolSpec {
  int window_h = 1;
  int window_w = 1;
  int stride_h = 1;
  int stride_w = 1;
};

struct ConvPoolCache {
  std::vector<std::size_t> input_shape;  // C, H, W
  Matrix columns;                        // im2col: (OH*OW) x (C*KH*KW)
  Matrix activation;                     // (OH*OW) x K, after ReLU
  std::vector<std::size_t> argmax;       // per pooled output, index into activation (row-major)
  int conv_h = 0, conv_w = 0;
};

// input: C x H x W; kernels: K x C x KH x KW; biases: K. Valid cross-correlation,
// bias, ReLU, then max pooling. Output: K x PH x PW.
Tensor conv_maxpool_forward(const Tensor& input, const Tensor& kernels, const Tensor& biases, const PoolSpec& pool,
                            ConvPoolCache* cache = nullptr);
// Accumulates into kernels.grad / biases.grad; returns dL/dinput.
Tensor conv_maxpool_backward(const ConvPoolCache& cache, const Tensor& dout, Param& kernels, Param& biases);

// ---- graph convolution -----------------------------------------------------

// CSR propagation operator; may be block diagonal over a batch of graphs.
struct SparseOperator {
  int n = 0;
  std::vector<int> row_ptr{0};
  std::vector<int> col;
  std::vector<double> val;

  Matrix dense() const;
  static SparseOperator from_dense(const Matrix& a);
  // Appends `other` as a diagonal block.
  void append_block(const SparseOperator& other);
};

// D^{-1/2} (A + I) D^{-1/2}. Masked nodes are padding and stay all-zero.
// Throws Error(InvalidArgument) when A is not square, symmetric and zero-diagonal.
Matrix normalize_adjacency(const Matrix& a, std::span<const std::uint8_t> mask = {});

// Sparse equivalent of normalize_adjacency from an edge list.
SparseOperator normalized_propagation(int n, std::span<const std::pair<int, int>> edges,
                                      std::span<const std::uint8_t> mask);
// Identity on real nodes, zero on padding.
SparseOperator identity_propagation(std::span<const std::uint8_t> mask);

Matrix propagate(const SparseOperator& a, const Matrix& h);

struct GcnCache {
  Matrix propagated;  // A H
  Matrix output;
  bool relu = true;
};

// H' = ReLU(A H W) (ReLU optional).
Matrix gcn_forward(const SparseOperator& a, const Matrix& h, const Tensor& w, bool apply_relu, GcnCache* cache = nullptr);
// A is symmetric, so dL/dH = A (dZ W^T). Accumulates into w.grad.
Matrix gcn_backward(const SparseOperator& a, const GcnCache& cache, const Matrix& dout, Param& w);

// ---- embedding ---------------------------------------------------------------

// Throws Error(InvalidArgument) on an out-of-range id.
Matrix embedding_forward(const Tensor& table, std::span<const int> ids);
// Gradient lands only on the looked-up rows.
void embedding_backward(std::span<const int> ids, const Matrix& dout, Param& table);

// ---- loss ------------------------------------------------------------------

enum class LossForm {
  Binary,     // -(1/N) sum [y log2 p + (1-y) log2 (1-p)]
  PaperForm,  // -(1/N) sum y log2 p
};

inline constexpr double kProbClamp = 1e-7;

double sigmoid(double z);
double bce_loss(std::span<const double> p, std::span<const double> y, LossForm form = LossForm::Binary);
// dL/dp of the clamped loss (zero where the clamp is active).
std::vector<double> bce_backward(std::span<const double> p, std::span<const double> y,
                                 LossForm form = LossForm::Binary);
// Loss of sigmoid(z) and dL/dz for the logistic output.
double sigmoid_bce(std::span<const double> z, std::span<const double> y, LossForm form, std::vector<double>* dz);

// ---- optimizer ---------------------------------------------------------------

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  long step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

void adam_step(ParamSet& params, AdamState& state);

// ---- initialization ----------------------------------------------------------

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}
  // uniform(+-sqrt(6 / (fan_in + fan_out)))
  void glorot(Param& p, std::size_t fan_in, std::size_t fan_out);
  void normal(Param& p, double sd);

 private:
  Rng rng_;
};

// ---- gradient check ----------------------------------------------------------

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

// Central differences against the gradients produced by compute_grads().
// `loss` must be a deterministic function of the current parameter values;
// `compute_grads` must leave dL/dparam in every Param::grad. When
// max_per_param > 0 only an evenly strided subset of each tensor is probed.
// Relative error is |a - n| / max(|a|, |n|, 1e-6).
GradCheckResult grad_check(const std::function<double()>& loss, const std::function<void()>& compute_grads,
                           ParamSet& params, double eps = 1e-5, std::size_t max_per_param = 0);

}  // namespace gridstab::nn
