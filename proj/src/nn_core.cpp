#include "gridstab/nn_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gridstab/error.hpp"

namespace gridstab::nn {

Tensor::Tensor(std::vector<std::size_t> extents, double fill) : shape(std::move(extents)) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  data.assign(shape.empty() ? 0 : n, fill);
}

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double x) { return std::isfinite(x); });
}

Param& ParamSet::add(std::string name, std::vector<std::size_t> shape) {
  if (contains(name)) fail(ErrorCode::Internal, "parameter '" + name + "' registered twice");
  Param p;
  p.name = std::move(name);
  p.value = Tensor(shape);
  p.grad = Tensor(std::move(shape));
  params_.push_back(std::move(p));
  return params_.back();
}

Param& ParamSet::at(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  fail(ErrorCode::InvalidArgument, "no parameter named '" + name + "'");
}

const Param& ParamSet::at(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  fail(ErrorCode::InvalidArgument, "no parameter named '" + name + "'");
}

bool ParamSet::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const Param& p) { return p.name == name; });
}

void ParamSet::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0);
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

// ---- dense ----------------------------------------------------------------

Matrix dense_forward(const Matrix& x, const Tensor& w, const Tensor& b) {
  const auto wm = w.mat();
  if (x.cols() != wm.rows() || b.size() != static_cast<std::size_t>(wm.cols()))
    fail(ErrorCode::InvalidArgument, "dense: shape mismatch (x cols " + std::to_string(x.cols()) + ", W " +
                                         std::to_string(wm.rows()) + "x" + std::to_string(wm.cols()) + ")");
  Matrix y = x * wm;
  y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data.data(), wm.cols());
  return y;
}

namespace {

// Fixed summation order; Eigen's vectorized reduction depends on the
// alignment of the destination, which would leak into the results.
void add_column_sums(const Matrix& m, std::vector<double>& out) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    double s = 0.0;
    for (Eigen::Index r = 0; r < m.rows(); ++r) s += m(r, c);
    out[static_cast<std::size_t>(c)] += s;
  }
}

}  // namespace

Matrix dense_backward(const Matrix& x, const Matrix& dy, Param& w, Param& b) {
  w.grad.mat().noalias() += x.transpose() * dy;
  add_column_sums(dy, b.grad.data);
  return dy * w.value.mat().transpose();
}

Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

Matrix relu_backward(const Matrix& out, const Matrix& dy) {
  return (out.array() > 0.0).select(dy, 0.0);
}

// ---- convolution + max pool --------------------------------------------------

Tensor conv_maxpool_forward(const Tensor& input, const Tensor& kernels, const Tensor& biases, const PoolSpec& pool,
                            ConvPoolCache* cache) {
  if (input.shape.size() != 3 || kernels.shape.size() != 4)
    fail(ErrorCode::InvalidArgument, "conv: expected input CxHxW and kernels KxCxKHxKW");
  const int c = static_cast<int>(input.shape[0]), h = static_cast<int>(input.shape[1]),
            w = static_cast<int>(input.shape[2]);
  const int k = static_cast<int>(kernels.shape[0]), kc = static_cast<int>(kernels.shape[1]),
            kh = static_cast<int>(kernels.shape[2]), kw = static_cast<int>(kernels.shape[3]);
  if (kc != c) fail(ErrorCode::InvalidArgument, "conv: kernel channel count does not match input");
  if (kh > h || kw > w) fail(ErrorCode::InvalidArgument, "conv: kernel larger than input");
  if (biases.size() != static_cast<std::size_t>(k)) fail(ErrorCode::InvalidArgument, "conv: bias count mismatch");
  if (pool.window_h < 1 || pool.window_w < 1 || pool.stride_h < 1 || pool.stride_w < 1)
    fail(ErrorCode::InvalidArgument, "conv: pool window and stride must be >= 1");
  const int oh = h - kh + 1, ow = w - kw + 1;
  if (pool.window_h > oh || pool.window_w > ow) fail(ErrorCode::InvalidArgument, "conv: pool window larger than feature map");
  const int ph = (oh - pool.window_h) / pool.stride_h + 1, pw = (ow - pool.window_w) / pool.stride_w + 1;

  const int patch = c * kh * kw;
  Matrix cols(oh * ow, patch);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double* dst = cols.row(y * ow + x).data();
      for (int ch = 0; ch < c; ++ch)
        for (int dy = 0; dy < kh; ++dy)
          for (int dx = 0; dx < kw; ++dx)
            *dst++ = input.data[(static_cast<std::size_t>(ch) * h + y + dy) * w + x + dx];
    }
  const Eigen::Map<const Matrix> kmat(kernels.data.data(), k, patch);
  Matrix act = cols * kmat.transpose();
  act.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(biases.data.data(), k);
  act = act.cwiseMax(0.0);

  Tensor out({static_cast<std::size_t>(k), static_cast<std::size_t>(ph), static_cast<std::size_t>(pw)});
  std::vector<std::size_t> argmax(out.size());
  for (int ch = 0; ch < k; ++ch)
    for (int y = 0; y < ph; ++y)
      for (int x = 0; x < pw; ++x) {
        double best = -1e300;
        std::size_t best_idx = 0;
        for (int m = 0; m < pool.window_h; ++m)
          for (int n = 0; n < pool.window_w; ++n) {
            const std::size_t pos = static_cast<std::size_t>(pool.stride_h * y + m) * ow + pool.stride_w * x + n;
            const double v = act(static_cast<Eigen::Index>(pos), ch);
            if (v > best) {
              best = v;
              best_idx = pos * k + ch;
            }
          }
        const std::size_t o = (static_cast<std::size_t>(ch) * ph + y) * pw + x;
        out.data[o] = best;
        argmax[o] = best_idx;
      }
  if (cache) {
    cache->input_shape = input.shape;
    cache->columns = std::move(cols);
    cache->activation = std::move(act);
    cache->argmax = std::move(argmax);
    cache->conv_h = oh;
    cache->conv_w = ow;
  }
  return out;
}

Tensor conv_maxpool_backward(const ConvPoolCache& cache, const Tensor& dout, Param& kernels, Param& biases) {
  const int c = static_cast<int>(cache.input_shape[0]), h = static_cast<int>(cache.input_shape[1]),
            w = static_cast<int>(cache.input_shape[2]);
  const int k = static_cast<int>(kernels.value.shape[0]), kh = static_cast<int>(kernels.value.shape[2]),
            kw = static_cast<int>(kernels.value.shape[3]);
  const int oh = cache.conv_h, ow = cache.conv_w, patch = c * kh * kw;
  if (dout.size() != cache.argmax.size()) fail(ErrorCode::InvalidArgument, "conv: gradient shape mismatch");

  Matrix dact = Matrix::Zero(oh * ow, k);
  double* dp = dact.data();
  for (std::size_t o = 0; o < dout.size(); ++o) dp[cache.argmax[o]] += dout.data[o];
  dact = (cache.activation.array() > 0.0).select(dact, 0.0);

  Eigen::Map<Matrix> dk(kernels.grad.data.data(), k, patch);
  dk.noalias() += dact.transpose() * cache.columns;
  add_column_sums(dact, biases.grad.data);

  const Eigen::Map<const Matrix> kmat(kernels.value.data.data(), k, patch);
  const Matrix dcols = dact * kmat;
  Tensor din(cache.input_shape);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      const double* src = dcols.row(y * ow + x).data();
      for (int ch = 0; ch < c; ++ch)
        for (int dy = 0; dy < kh; ++dy)
          for (int dx = 0; dx < kw; ++dx)
            din.data[(static_cast<std::size_t>(ch) * h + y + dy) * w + x + dx] += *src++;
    }
  return din;
}

// ---- graph convolution -----------------------------------------------------

Matrix SparseOperator::dense() const {
  Matrix d = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int p = row_ptr[i]; p < row_ptr[i + 1]; ++p) d(i, col[p]) = val[p];
  return d;
}

SparseOperator SparseOperator::from_dense(const Matrix& a) {
  if (a.rows() != a.cols()) fail(ErrorCode::InvalidArgument, "propagation operator must be square");
  SparseOperator s;
  s.n = static_cast<int>(a.rows());
  for (int i = 0; i < s.n; ++i) {
    for (int j = 0; j < s.n; ++j)
      if (a(i, j) != 0.0) {
        s.col.push_back(j);
        s.val.push_back(a(i, j));
      }
    s.row_ptr.push_back(static_cast<int>(s.col.size()));
  }
  return s;
}

void SparseOperator::append_block(const SparseOperator& other) {
  const int offset = n;
  const int base = static_cast<int>(col.size());
  for (int i = 0; i < other.n; ++i) row_ptr.push_back(base + other.row_ptr[i + 1]);
  for (int c : other.col) col.push_back(c + offset);
  val.insert(val.end(), other.val.begin(), other.val.end());
  n += other.n;
}

Matrix normalize_adjacency(const Matrix& a, std::span<const std::uint8_t> mask) {
  const auto n = a.rows();
  if (a.cols() != n) fail(ErrorCode::InvalidArgument, "adjacency must be square");
  if (!mask.empty() && static_cast<Eigen::Index>(mask.size()) != n)
    fail(ErrorCode::InvalidArgument, "mask length does not match adjacency");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (a(i, i) != 0.0) fail(ErrorCode::InvalidArgument, "adjacency diagonal must be zero");
    for (Eigen::Index j = i + 1; j < n; ++j)
      if (a(i, j) != a(j, i)) fail(ErrorCode::InvalidArgument, "adjacency must be symmetric");
  }
  auto real = [&](Eigen::Index i) { return mask.empty() || mask[i] != 0; };
  Matrix hat = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!real(i)) continue;
    for (Eigen::Index j = 0; j < n; ++j)
      if (real(j)) hat(i, j) = a(i, j);
    hat(i, i) = 1.0;
  }
  Vector inv_sqrt = Vector::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = hat.row(i).sum();
    if (d > 0.0) inv_sqrt[i] = 1.0 / std::sqrt(d);
  }
  return inv_sqrt.asDiagonal() * hat * inv_sqrt.asDiagonal();
}

SparseOperator normalized_propagation(int n, std::span<const std::pair<int, int>> edges,
                                      std::span<const std::uint8_t> mask) {
  auto real = [&](int i) { return mask.empty() || mask[i] != 0; };
  std::vector<std::vector<int>> nb(n);
  for (auto [i, j] : edges) {
    if (i < 0 || j < 0 || i >= n || j >= n || i == j)
      fail(ErrorCode::InvalidArgument, "edge outside the local graph or self-loop");
    if (!real(i) || !real(j)) continue;
    nb[i].push_back(j);
    nb[j].push_back(i);
  }
  std::vector<double> inv_sqrt(n, 0.0);
  for (int i = 0; i < n; ++i) {
    if (!real(i)) continue;
    nb[i].push_back(i);
    std::sort(nb[i].begin(), nb[i].end());
    nb[i].erase(std::unique(nb[i].begin(), nb[i].end()), nb[i].end());
    inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(nb[i].size()));
  }
  SparseOperator s;
  s.n = n;
  for (int i = 0; i < n; ++i) {
    for (int j : nb[i]) {
      s.col.push_back(j);
      s.val.push_back(inv_sqrt[i] * inv_sqrt[j]);
    }
    s.row_ptr.push_back(static_cast<int>(s.col.size()));
  }
  return s;
}

SparseOperator identity_propagation(std::span<const std::uint8_t> mask) {
  SparseOperator s;
  s.n = static_cast<int>(mask.size());
  for (int i = 0; i < s.n; ++i) {
    if (mask[i]) {
      s.col.push_back(i);
      s.val.push_back(1.0);
    }
    s.row_ptr.push_back(static_cast<int>(s.col.size()));
  }
  return s;
}

Matrix propagate(const SparseOperator& a, const Matrix& h) {
  if (h.rows() != a.n) fail(ErrorCode::InvalidArgument, "propagate: row count mismatch");
  Matrix out = Matrix::Zero(h.rows(), h.cols());
  for (int i = 0; i < a.n; ++i)
    for (int p = a.row_ptr[i]; p < a.row_ptr[i + 1]; ++p) out.row(i) += a.val[p] * h.row(a.col[p]);
  return out;
}

Matrix gcn_forward(const SparseOperator& a, const Matrix& h, const Tensor& w, bool apply_relu, GcnCache* cache) {
  const auto wm = w.mat();
  if (h.cols() != wm.rows()) fail(ErrorCode::InvalidArgument, "gcn: feature width does not match W");
  Matrix ah = propagate(a, h);
  Matrix out = ah * wm;
  if (apply_relu) out = out.cwiseMax(0.0);
  if (cache) {
    cache->propagated = std::move(ah);
    cache->output = out;
    cache->relu = apply_relu;
  }
  return out;
}

Matrix gcn_backward(const SparseOperator& a, const GcnCache& cache, const Matrix& dout, Param& w) {
  const Matrix dz = cache.relu ? relu_backward(cache.output, dout) : dout;
  w.grad.mat().noalias() += cache.propagated.transpose() * dz;
  return propagate(a, dz * w.value.mat().transpose());
}

// ---- embedding ---------------------------------------------------------------

Matrix embedding_forward(const Tensor& table, std::span<const int> ids) {
  const auto tm = table.mat();
  Matrix out(static_cast<Eigen::Index>(ids.size()), tm.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || ids[r] >= tm.rows())
      fail(ErrorCode::InvalidArgument, "embedding id " + std::to_string(ids[r]) + " out of range");
    out.row(static_cast<Eigen::Index>(r)) = tm.row(ids[r]);
  }
  return out;
}

void embedding_backward(std::span<const int> ids, const Matrix& dout, Param& table) {
  auto g = table.grad.mat();
  for (std::size_t r = 0; r < ids.size(); ++r) g.row(ids[r]) += dout.row(static_cast<Eigen::Index>(r));
}

// ---- loss ------------------------------------------------------------------

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) fail(ErrorCode::InvalidArgument, "loss: prediction/label length mismatch");
  if (a == 0) fail(ErrorCode::InvalidArgument, "loss: empty batch");
}

}  // namespace

double bce_loss(std::span<const double> p, std::span<const double> y, LossForm form) {
  check_lengths(p.size(), y.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p[i], kProbClamp, 1.0 - kProbClamp);
    sum += y[i] * std::log2(q);
    if (form == LossForm::Binary) sum += (1.0 - y[i]) * std::log2(1.0 - q);
  }
  return -sum / static_cast<double>(p.size());
}

std::vector<double> bce_backward(std::span<const double> p, std::span<const double> y, LossForm form) {
  check_lengths(p.size(), y.size());
  const double scale = 1.0 / (static_cast<double>(p.size()) * std::log(2.0));
  std::vector<double> g(p.size(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < kProbClamp || p[i] > 1.0 - kProbClamp) continue;
    g[i] = -y[i] / p[i] * scale;
    if (form == LossForm::Binary) g[i] += (1.0 - y[i]) / (1.0 - p[i]) * scale;
  }
  return g;
}

double sigmoid_bce(std::span<const double> z, std::span<const double> y, LossForm form, std::vector<double>* dz) {
  check_lengths(z.size(), y.size());
  std::vector<double> p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) p[i] = sigmoid(z[i]);
  const double loss = bce_loss(p, y, form);
  if (dz) {
    const double scale = 1.0 / (static_cast<double>(z.size()) * std::log(2.0));
    dz->resize(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
      (*dz)[i] = form == LossForm::Binary ? (p[i] - y[i]) * scale : -y[i] * (1.0 - p[i]) * scale;
  }
  return loss;
}

// ---- optimizer ---------------------------------------------------------------

void adam_step(ParamSet& params, AdamState& state) {
  auto& all = params.all();
  if (state.m.size() != all.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto& p : all) {
      state.m.emplace_back(p.value.shape);
      state.v.emplace_back(p.value.shape);
    }
  }
  const auto& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < all.size(); ++k) {
    auto& p = all[k];
    if (state.m[k].size() != p.value.size()) fail(ErrorCode::InvalidArgument, "adam: state shape mismatch");
    double* m = state.m[k].data.data();
    double* v = state.v[k].data.data();
    const double* g = p.grad.data.data();
    double* x = p.value.data.data();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      x[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

// ---- initialization ----------------------------------------------------------

void Initializer::glorot(Param& p, std::size_t fan_in, std::size_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& x : p.value.data) x = rng_.uniform(-limit, limit);
}

void Initializer::normal(Param& p, double sd) {
  for (auto& x : p.value.data) x = rng_.normal(0.0, sd);
}

// ---- gradient check ----------------------------------------------------------

GradCheckResult grad_check(const std::function<double()>& loss, const std::function<void()>& compute_grads,
                           ParamSet& params, double eps, std::size_t max_per_param) {
  params.zero_grad();
  compute_grads();
  GradCheckResult r;
  for (auto& p : params.all()) {
    const std::size_t n = p.value.size();
    const std::size_t stride = max_per_param > 0 && n > max_per_param ? (n + max_per_param - 1) / max_per_param : 1;
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = p.value.data[i];
      p.value.data[i] = saved + eps;
      const double up = loss();
      p.value.data[i] = saved - eps;
      const double down = loss();
      p.value.data[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = p.grad.data[i];
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      if (++r.checked == 1 || rel > r.max_rel_error) {
        r.max_rel_error = rel;
        r.worst_param = p.name;
        r.worst_index = i;
        r.analytic = analytic;
        r.numeric = numeric;
      }
    }
  }
  return r;
}

}  // namespace gridstab::nn
