#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "errors.hpp"

namespace rest::tensor {

namespace {

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 1 && t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected rank 1 or 2, got " + to_string(t.shape()));
  }
}

Shape matrix_shape(std::size_t rows, std::size_t cols) { return Shape{rows, cols}; }

// c[m×n] += a[m×k] · b[k×n]; zero entries of a are skipped so that masked
// attention weights contribute nothing, not even a signed zero.
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

// c[m×n] += a[m×k] · bᵀ where b is [n×k].
void gemm_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
      c[i * n + j] += s;
    }
  }
}

// c[k×n] += aᵀ · g where a is [m×k], g is [m×n].
void gemm_tn_acc(const double* a, const double* g, double* c, std::size_t m, std::size_t k,
                 std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) c[p * n + j] += aip * g[i * n + j];
    }
  }
}

}  // namespace

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : storage_(std::make_shared<Storage>()) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive: " + to_string(shape));
  }
  if (product(shape) != values.size()) {
    throw DimensionError("shape " + to_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  storage_->shape = std::move(shape);
  storage_->value = std::move(values);
  set_requires_grad(requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{1}, {value}, requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                      bool requires_grad) {
  return Tensor(Shape{rows, cols}, std::move(values), requires_grad);
}

Tensor::Storage& Tensor::storage() const {
  if (!storage_) throw ContractError("use of an undefined tensor");
  return *storage_;
}

const Shape& Tensor::shape() const { return storage().shape; }
std::size_t Tensor::numel() const { return storage().value.size(); }

std::size_t Tensor::rows() const {
  const auto& s = shape();
  return s.size() == 2 ? s[0] : 1;
}

std::size_t Tensor::cols() const {
  const auto& s = shape();
  return s.empty() ? 1 : s.back();
}

std::span<const double> Tensor::values() const { return storage().value; }
std::span<double> Tensor::mutable_values() { return storage().value; }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
  return storage().value[0];
}

bool Tensor::requires_grad() const { return storage().requires_grad; }

void Tensor::set_requires_grad(bool on) {
  auto& s = storage();
  s.requires_grad = on;
  if (on && s.grad.size() != s.value.size()) s.grad.assign(s.value.size(), 0.0);
}

std::span<const double> Tensor::grad() const {
  auto& s = storage();
  if (s.grad.size() != s.value.size()) s.grad.assign(s.value.size(), 0.0);
  return s.grad;
}

std::span<double> Tensor::mutable_grad() {
  auto& s = storage();
  if (s.grad.size() != s.value.size()) s.grad.assign(s.value.size(), 0.0);
  return s.grad;
}

void Tensor::zero_grad() {
  auto& s = storage();
  s.grad.assign(s.value.size(), 0.0);
}

Tensor Tensor::detached() const {
  return Tensor(shape(), std::vector<double>(values().begin(), values().end()), false);
}

// ---------------------------------------------------------------------------
// Tape

Tensor Tape::make_result(Shape shape, std::vector<double> values,
                         std::initializer_list<const Tensor*> inputs) {
  bool needs_grad = false;
  if (recording_) {
    for (const Tensor* t : inputs) needs_grad = needs_grad || t->requires_grad();
  }
  return Tensor(std::move(shape), std::move(values), needs_grad);
}

void Tape::record(const Tensor& out, std::function<void()> op) {
  if (consumed_) throw ContractError("tape already replayed; start a new tape");
  if (out.requires_grad()) ops_.push_back(std::move(op));
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ, " + to_string(a.shape()) + " x " +
                         to_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_acc(a.values().data(), b.values().data(), out.data(), m, k, n);
  Tensor result = make_result(matrix_shape(m, n), std::move(out), {&a, &b});
  record(result, [a = a.storage_, b = b.storage_, r = result.storage_, m, k, n] {
    if (a->requires_grad) gemm_nt_acc(r->grad.data(), b->value.data(), a->grad.data(), m, n, k);
    if (b->requires_grad) gemm_tn_acc(a->value.data(), r->grad.data(), b->grad.data(), m, k, n);
  });
  return result;
}

Tensor Tape::transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  auto v = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = v[i * n + j];
  Tensor result = make_result(matrix_shape(n, m), std::move(out), {&a});
  record(result, [a = a.storage_, r = result.storage_, m, n] {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) a->grad[i * n + j] += r->grad[j * m + i];
  });
  return result;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shapes differ, " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  Tensor result = make_result(a.shape(), std::move(out), {&a, &b});
  record(result, [a = a.storage_, b = b.storage_, r = result.storage_] {
    for (std::size_t i = 0; i < r->grad.size(); ++i) {
      if (a->requires_grad) a->grad[i] += r->grad[i];
      if (b->requires_grad) b->grad[i] += r->grad[i];
    }
  });
  return result;
}

Tensor Tape::add_row(const Tensor& m, const Tensor& row) {
  require_matrix(m, "add_row");
  const std::size_t rows = m.rows(), cols = m.cols();
  if (row.numel() != cols) {
    throw DimensionError("add_row: row of " + std::to_string(row.numel()) +
                         " values for matrix " + to_string(m.shape()));
  }
  std::vector<double> out(m.values().begin(), m.values().end());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += row[c];
  Tensor result = make_result(m.shape(), std::move(out), {&m, &row});
  record(result, [m = m.storage_, row = row.storage_, r = result.storage_, rows, cols] {
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t c = 0; c < cols; ++c) {
        const double g = r->grad[i * cols + c];
        if (m->requires_grad) m->grad[i * cols + c] += g;
        if (row->requires_grad) row->grad[c] += g;
      }
    }
  });
  return result;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mul: shapes differ, " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  Tensor result = make_result(a.shape(), std::move(out), {&a, &b});
  record(result, [a = a.storage_, b = b.storage_, r = result.storage_] {
    for (std::size_t i = 0; i < r->grad.size(); ++i) {
      if (a->requires_grad) a->grad[i] += r->grad[i] * b->value[i];
      if (b->requires_grad) b->grad[i] += r->grad[i] * a->value[i];
    }
  });
  return result;
}

Tensor Tape::scale(const Tensor& a, double factor) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  Tensor result = make_result(a.shape(), std::move(out), {&a});
  record(result, [a = a.storage_, r = result.storage_, factor] {
    for (std::size_t i = 0; i < r->grad.size(); ++i) a->grad[i] += r->grad[i] * factor;
  });
  return result;
}

Tensor Tape::sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  Tensor result = make_result(Shape{1}, {s}, {&a});
  record(result, [a = a.storage_, r = result.storage_] {
    for (double& g : a->grad) g += r->grad[0];
  });
  return result;
}

Tensor Tape::softmax_masked(const Tensor& logits, const Mask& mask) {
  require_matrix(logits, "softmax_masked");
  const std::size_t n = logits.rows(), c = logits.cols();
  if (mask.rows() != n || mask.cols() != c) {
    throw DimensionError("softmax_masked: mask is " + std::to_string(mask.rows()) + "x" +
                         std::to_string(mask.cols()) + ", logits " + to_string(logits.shape()));
  }
  std::vector<double> out(n * c, 0.0);
  auto x = logits.values();
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j)
      if (mask(i, j)) mx = std::max(mx, x[i * c + j]);
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw ContractError("softmax_masked: row " + std::to_string(i) + " is fully masked");
    }
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (!mask(i, j)) continue;
      out[i * c + j] = std::exp(x[i * c + j] - mx);
      z += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
  }
  Tensor result = make_result(logits.shape(), std::move(out), {&logits});
  record(result, [x = logits.storage_, r = result.storage_, n, c] {
    for (std::size_t i = 0; i < n; ++i) {
      const double* y = r->value.data() + i * c;
      const double* g = r->grad.data() + i * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += y[j] * g[j];
      for (std::size_t j = 0; j < c; ++j) x->grad[i * c + j] += y[j] * (g[j] - dot);
    }
  });
  return result;
}

Tensor Tape::layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_matrix(x, "layer_norm");
  const std::size_t n = x.rows(), d = x.cols();
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layer_norm: gain/bias length must equal last axis " + std::to_string(d));
  }
  if (!(eps > 0.0)) throw InvalidArgument("layer_norm: eps must be positive");
  std::vector<double> out(n * d), xhat(n * d), rstd(n);
  auto v = x.values();
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += v[i * d + j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double e = v[i * d + j] - mean;
      var += e * e;
    }
    var /= static_cast<double>(d);
    rstd[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (v[i * d + j] - mean) * rstd[i];
      out[i * d + j] = gain[j] * xhat[i * d + j] + bias[j];
    }
  }
  Tensor result = make_result(x.shape(), std::move(out), {&x, &gain, &bias});
  record(result, [x = x.storage_, g = gain.storage_, b = bias.storage_, r = result.storage_,
                  xhat = std::move(xhat), rstd = std::move(rstd), n, d] {
    std::vector<double> dxhat(d);
    for (std::size_t i = 0; i < n; ++i) {
      const double* dy = r->grad.data() + i * d;
      const double* xh = xhat.data() + i * d;
      double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        dxhat[j] = dy[j] * g->value[j];
        mean_dxhat += dxhat[j];
        mean_dxhat_xhat += dxhat[j] * xh[j];
        if (g->requires_grad) g->grad[j] += dy[j] * xh[j];
        if (b->requires_grad) b->grad[j] += dy[j];
      }
      mean_dxhat /= static_cast<double>(d);
      mean_dxhat_xhat /= static_cast<double>(d);
      if (!x->requires_grad) continue;
      for (std::size_t j = 0; j < d; ++j) {
        x->grad[i * d + j] += rstd[i] * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
      }
    }
  });
  return result;
}

Tensor Tape::gelu(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = gelu_value(x[i]);
  Tensor result = make_result(x.shape(), std::move(out), {&x});
  record(result, [x = x.storage_, r = result.storage_] {
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    for (std::size_t i = 0; i < r->grad.size(); ++i) {
      const double v = x->value[i];
      const double cdf = 0.5 * (1.0 + std::erf(v / std::sqrt(2.0)));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      x->grad[i] += r->grad[i] * (cdf + v * pdf);
    }
  });
  return result;
}

Tensor Tape::cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
  require_matrix(logits, "cross_entropy");
  const std::size_t n = logits.rows(), c = logits.cols();
  if (targets.size() != n) {
    throw ContractError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                        std::to_string(n) + " rows");
  }
  std::vector<double> probs(n * c);
  double loss = 0.0;
  auto x = logits.values();
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] >= c) {
      throw IndexError("cross_entropy: target " + std::to_string(targets[i]) +
                       " out of range for " + std::to_string(c) + " classes");
    }
    double mx = x[i * c];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x[i * c + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(x[i * c + j] - mx);
    const double log_z = std::log(z) + mx;
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(x[i * c + j] - log_z);
    loss += log_z - x[i * c + targets[i]];
  }
  loss /= static_cast<double>(n);
  Tensor result = make_result(Shape{1}, {loss}, {&logits});
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  record(result, [x = logits.storage_, r = result.storage_, probs = std::move(probs),
                  tgt = std::move(tgt), n, c] {
    const double g = r->grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        const double onehot = (j == tgt[i]) ? 1.0 : 0.0;
        x->grad[i * c + j] += g * (probs[i * c + j] - onehot);
      }
    }
  });
  return result;
}

Tensor Tape::gather_rows(const Tensor& table, std::span<const std::size_t> rows) {
  require_matrix(table, "gather_rows");
  if (rows.empty()) throw DimensionError("gather_rows: empty row list");
  const std::size_t d = table.cols();
  std::vector<double> out(rows.size() * d);
  auto v = table.values();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= table.rows()) {
      throw IndexError("gather_rows: row " + std::to_string(rows[i]) + " of " +
                       std::to_string(table.rows()));
    }
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(rows[i] * d), d, out.begin() + i * d);
  }
  Tensor result = make_result(matrix_shape(rows.size(), d), std::move(out), {&table});
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  record(result, [t = table.storage_, r = result.storage_, idx = std::move(idx), d] {
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) t->grad[idx[i] * d + j] += r->grad[i * d + j];
  });
  return result;
}

Tensor Tape::concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no parts");
  const std::size_t d = parts.front().cols();
  std::size_t total = 0;
  bool needs_grad = false;
  for (const auto& p : parts) {
    require_matrix(p, "concat_rows");
    if (p.cols() != d) throw DimensionError("concat_rows: column counts differ");
    total += p.rows();
    needs_grad = needs_grad || p.requires_grad();
  }
  std::vector<double> out;
  out.reserve(total * d);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  Tensor result(matrix_shape(total, d), std::move(out), recording_ && needs_grad);
  std::vector<std::shared_ptr<Tensor::Storage>> inputs;
  for (const auto& p : parts) inputs.push_back(p.storage_);
  record(result, [inputs = std::move(inputs), r = result.storage_] {
    std::size_t offset = 0;
    for (const auto& in : inputs) {
      if (in->requires_grad) {
        for (std::size_t i = 0; i < in->value.size(); ++i) in->grad[i] += r->grad[offset + i];
      }
      offset += in->value.size();
    }
  });
  return result;
}

Tensor Tape::slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  require_matrix(a, "slice_cols");
  const std::size_t n = a.rows(), c = a.cols();
  if (count == 0 || begin + count > c) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + std::to_string(c));
  }
  std::vector<double> out(n * count);
  auto v = a.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = v[i * c + begin + j];
  Tensor result = make_result(matrix_shape(n, count), std::move(out), {&a});
  record(result, [a = a.storage_, r = result.storage_, n, c, begin, count] {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < count; ++j) a->grad[i * c + begin + j] += r->grad[i * count + j];
  });
  return result;
}

Tensor Tape::concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no parts");
  const std::size_t n = parts.front().rows();
  std::size_t total = 0;
  bool needs_grad = false;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.rows() != n) throw DimensionError("concat_cols: row counts differ");
    total += p.cols();
    needs_grad = needs_grad || p.requires_grad();
  }
  std::vector<double> out(n * total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * total + offset + j] = p.at(i, j);
    offset += w;
  }
  Tensor result(matrix_shape(n, total), std::move(out), recording_ && needs_grad);
  std::vector<std::shared_ptr<Tensor::Storage>> inputs;
  for (const auto& p : parts) inputs.push_back(p.storage_);
  record(result, [inputs = std::move(inputs), r = result.storage_, n, total] {
    std::size_t off = 0;
    for (const auto& in : inputs) {
      const std::size_t w = in->value.size() / n;
      if (in->requires_grad) {
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < w; ++j) in->grad[i * w + j] += r->grad[i * total + off + j];
      }
      off += w;
    }
  });
  return result;
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw ContractError("backward: tape already replayed");
  if (loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got " + to_string(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward: loss does not depend on any requires_grad tensor");
  }
  consumed_ = true;
  loss.storage_->grad[0] = 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  ops_.clear();
}

}  // namespace rest::tensor
