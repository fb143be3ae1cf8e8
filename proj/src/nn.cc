// Copyright 2026 The HyFunc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "hyfunc/nn.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "hyfunc/errors.h"

namespace hyfunc {

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  std::size_t r = rows.size();
  std::size_t c = r ? rows.begin()->size() : 0;
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged rows in Matrix::from_rows");
    std::size_t j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
  Matrix m(1, values.size());
  std::copy(values.begin(), values.end(), m.data().begin());
  return m;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_string() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

namespace {

// Four fixed-order partial sums; deterministic and friendlier to the vector unit.
double dot(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t p = 0;
  for (; p + 4 <= n; p += 4) {
    s0 += x[p] * y[p];
    s1 += x[p + 1] * y[p + 1];
    s2 += x[p + 2] * y[p + 2];
    s3 += x[p + 3] * y[p + 3];
  }
  for (; p < n; ++p) s0 += x[p] * y[p];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace

void gemm(const Matrix& a, bool ta, const Matrix& b, bool tb, Matrix& c, bool accumulate) {
  const std::size_t m = ta ? a.cols() : a.rows();
  const std::size_t k = ta ? a.rows() : a.cols();
  const std::size_t kb = tb ? b.cols() : b.rows();
  const std::size_t n = tb ? b.rows() : b.cols();
  if (k != kb) {
    throw ShapeError("gemm inner dimensions differ: " + a.shape_string() + (ta ? "^T" : "") +
                     " * " + b.shape_string() + (tb ? "^T" : ""));
  }
  if (accumulate) {
    if (c.rows() != m || c.cols() != n) {
      throw ShapeError("gemm output " + c.shape_string() + " expected [" + std::to_string(m) +
                       "x" + std::to_string(n) + "]");
    }
  } else {
    c = Matrix(m, n);
  }
  // Loop orders keep the larger operand streaming once while the smaller one
  // stays in cache. Every order sums over p in increasing order.
  constexpr std::size_t kSmall = 1 << 15;
  if (!ta && !tb) {
    if (c.size() <= kSmall) {
      for (std::size_t p = 0; p < k; ++p) {
        auto brow = b.row(p);
        for (std::size_t i = 0; i < m; ++i) {
          const double av = a(i, p);
          if (av == 0.0) continue;
          auto crow = c.row(i);
          for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
      }
    } else {
      for (std::size_t i = 0; i < m; ++i) {
        auto crow = c.row(i);
        for (std::size_t p = 0; p < k; ++p) {
          const double av = a(i, p);
          if (av == 0.0) continue;
          auto brow = b.row(p);
          for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
      }
    }
  } else if (ta && !tb) {
    if (b.size() <= kSmall) {
      for (std::size_t i = 0; i < m; ++i) {
        auto crow = c.row(i);
        for (std::size_t p = 0; p < k; ++p) {
          const double av = a(p, i);
          if (av == 0.0) continue;
          auto brow = b.row(p);
          for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
      }
    } else {
      for (std::size_t p = 0; p < k; ++p) {
        auto arow = a.row(p);
        auto brow = b.row(p);
        for (std::size_t i = 0; i < m; ++i) {
          const double av = arow[i];
          if (av == 0.0) continue;
          auto crow = c.row(i);
          for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
      }
    }
  } else if (!ta && tb) {
    if (a.size() <= kSmall) {
      for (std::size_t j = 0; j < n; ++j) {
        auto brow = b.row(j);
        for (std::size_t i = 0; i < m; ++i) c(i, j) += dot(a.row(i), brow);
      }
    } else {
      for (std::size_t i = 0; i < m; ++i) {
        auto arow = a.row(i);
        auto crow = c.row(i);
        for (std::size_t j = 0; j < n; ++j) crow[j] += dot(arow, b.row(j));
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += a(p, i) * b(j, p);
        c(i, j) += s;
      }
    }
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c;
  gemm(a, false, b, false, c, false);
  return c;
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  double u1 = 1.0 - uniform();  // (0, 1]
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Param::Param(Matrix init)
    : value(std::move(init)),
      grad(value.rows(), value.cols()),
      adam_m(value.rows(), value.cols()),
      adam_v(value.rows(), value.cols()) {}

Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_in, fan_out);
  for (double& v : w.data()) v = rng.uniform(-limit, limit);
  return w;
}

Mlp2 Mlp2::create(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  Mlp2 m;
  m.w1 = Param(glorot_uniform(in, hidden, rng));
  m.b1 = Param(Matrix(1, hidden));
  m.w2 = Param(glorot_uniform(hidden, out, rng));
  m.b2 = Param(Matrix(1, out));
  return m;
}

namespace {

void add_row_bias(Matrix& x, const Matrix& bias) {
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = x.row(i);
    for (std::size_t j = 0; j < x.cols(); ++j) r[j] += bias(0, j);
  }
}

void add_column_sums(const Matrix& x, Matrix& out) {
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = x.row(i);
    for (std::size_t j = 0; j < x.cols(); ++j) out(0, j) += r[j];
  }
}

}  // namespace

Matrix mlp2_forward(const Mlp2& m, const Matrix& x, Mlp2Cache& cache) {
  if (x.cols() != m.in_dim()) {
    throw ShapeError("mlp2 input " + x.shape_string() + " does not fit W1 " +
                     m.w1.value.shape_string());
  }
  cache.x = x;
  gemm(x, false, m.w1.value, false, cache.pre, false);
  add_row_bias(cache.pre, m.b1.value);
  cache.hidden = cache.pre;
  for (double& v : cache.hidden.data()) v = v > 0.0 ? v : 0.0;
  Matrix out;
  gemm(cache.hidden, false, m.w2.value, false, out, false);
  add_row_bias(out, m.b2.value);
  return out;
}

Matrix mlp2_forward(const Mlp2& m, const Matrix& x) {
  Mlp2Cache cache;
  return mlp2_forward(m, x, cache);
}

Matrix mlp2_backward(Mlp2& m, const Mlp2Cache& cache, const Matrix& upstream) {
  if (upstream.rows() != cache.x.rows() || upstream.cols() != m.out_dim()) {
    throw ShapeError("mlp2 upstream gradient " + upstream.shape_string() + " for output [" +
                     std::to_string(cache.x.rows()) + "x" + std::to_string(m.out_dim()) + "]");
  }
  gemm(cache.hidden, true, upstream, false, m.w2.grad, true);
  add_column_sums(upstream, m.b2.grad);
  Matrix d_pre;
  gemm(upstream, false, m.w2.value, true, d_pre, false);
  auto pre = cache.pre.data();
  auto dp = d_pre.data();
  for (std::size_t i = 0; i < dp.size(); ++i) {
    if (pre[i] <= 0.0) dp[i] = 0.0;
  }
  gemm(cache.x, true, d_pre, false, m.w1.grad, true);
  add_column_sums(d_pre, m.b1.grad);
  Matrix dx;
  gemm(d_pre, false, m.w1.value, true, dx, false);
  return dx;
}

double softmax_cross_entropy(const Matrix& logits, std::span<const std::size_t> targets,
                             Matrix* grad) {
  if (targets.size() != logits.rows()) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                     " targets for logits " + logits.shape_string());
  }
  if (logits.rows() == 0) throw EmptyInputError("softmax_cross_entropy on zero rows");
  if (grad) *grad = Matrix(logits.rows(), logits.cols());
  const double inv_n = 1.0 / static_cast<double>(logits.rows());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    if (targets[i] >= row.size()) throw ShapeError("target index out of range");
    double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    double log_z = mx + std::log(z);
    total += log_z - row[targets[i]];
    if (grad) {
      auto g = grad->row(i);
      for (std::size_t j = 0; j < row.size(); ++j) g[j] = std::exp(row[j] - log_z) * inv_n;
      g[targets[i]] -= inv_n;
    }
  }
  return total * inv_n;
}

OptimConfig& OptimConfig::schedule(std::int64_t total, double warmup_fraction) {
  total_steps = std::max<std::int64_t>(total, 1);
  warmup_steps = static_cast<std::int64_t>(std::floor(warmup_fraction * static_cast<double>(total_steps)));
  return *this;
}

void OptimConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight decay must be non-negative");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in (0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (warmup_steps < 0 || warmup_steps > total_steps) {
    throw ConfigError("warmup_steps must lie in [0, total_steps]");
  }
}

void adamw_step(Param& p, const OptimConfig& cfg, double lr_now) {
  if (!p.grad.all_finite()) throw NumericsError("non-finite gradient in adamw_step");
  p.step_count += 1;
  const double t = static_cast<double>(p.step_count);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const double decay = 1.0 - lr_now * cfg.weight_decay;
  auto val = p.value.data();
  auto g = p.grad.data();
  auto m = p.adam_m.data();
  auto v = p.adam_v.data();
  for (std::size_t i = 0; i < val.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    val[i] = val[i] * decay - lr_now * m_hat / (std::sqrt(v_hat) + cfg.eps);
    g[i] = 0.0;
  }
}

double lr_at(const OptimConfig& cfg, std::int64_t step) {
  step = std::clamp<std::int64_t>(step, 0, cfg.total_steps);
  if (step < cfg.warmup_steps) {
    return cfg.lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  }
  if (cfg.total_steps == cfg.warmup_steps) return cfg.lr;
  const double t = static_cast<double>(step - cfg.warmup_steps) /
                   static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

double grad_check(const std::function<double()>& loss, std::span<Param* const> params,
                  double epsilon) {
  for (Param* p : params) p->zero_grad();
  loss();
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (Param* p : params) analytic.push_back(p->grad);

  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k]->value.data();
    auto a = analytic[k].data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      values[i] = orig + epsilon;
      const double up = loss();
      values[i] = orig - epsilon;
      const double down = loss();
      values[i] = orig;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double denom = std::max({std::abs(a[i]), std::abs(numeric), 1e-6});
      worst = std::max(worst, std::abs(a[i] - numeric) / denom);
    }
  }
  for (Param* p : params) p->zero_grad();
  return worst;
}

void Checkpoint::add(std::string name, const Matrix& m) {
  tensors_.emplace_back(std::move(name), m);
}

bool Checkpoint::has(std::string_view name) const {
  return std::any_of(tensors_.begin(), tensors_.end(),
                     [&](const auto& t) { return t.first == name; });
}

const Matrix& Checkpoint::get(std::string_view name) const {
  for (const auto& [n, m] : tensors_) {
    if (n == name) return m;
  }
  throw IoError("checkpoint has no tensor \"" + std::string(name) + "\"");
}

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return v;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IoError("checkpoint truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string Checkpoint::serialize() const {
  std::string out(kMagic);
  put_u64(out, kVersion);
  put_u64(out, meta.size());
  out += meta;
  put_u64(out, tensors_.size());
  for (const auto& [name, m] : tensors_) {
    put_u64(out, name.size());
    out += name;
    put_u64(out, m.rows());
    put_u64(out, m.cols());
    for (double v : m.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Checkpoint Checkpoint::deserialize(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(kMagic.size()) != kMagic) throw IoError("not a checkpoint (bad magic)");
  if (auto v = r.u64(); v != kVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(v));
  }
  Checkpoint ck;
  ck.meta = std::string(r.take(r.u64()));
  const std::uint64_t count = r.u64();
  for (std::uint64_t t = 0; t < count; ++t) {
    std::string name(r.take(r.u64()));
    const std::uint64_t rows = r.u64();
    const std::uint64_t cols = r.u64();
    if (cols != 0 && rows > (bytes.size() / 8) / cols) throw IoError("checkpoint truncated");
    Matrix m(rows, cols);
    for (double& v : m.data()) v = std::bit_cast<double>(r.u64());
    ck.tensors_.emplace_back(std::move(name), std::move(m));
  }
  if (!r.done()) throw IoError("trailing bytes after checkpoint");
  return ck;
}

void Checkpoint::save(const std::string& path) const { write_file(path, serialize()); }

Checkpoint Checkpoint::load(const std::string& path) { return deserialize(read_file(path)); }

void add_mlp2(Checkpoint& ck, const std::string& prefix, const Mlp2& m) {
  ck.add(prefix + ".w1", m.w1.value);
  ck.add(prefix + ".b1", m.b1.value);
  ck.add(prefix + ".w2", m.w2.value);
  ck.add(prefix + ".b2", m.b2.value);
}

Mlp2 get_mlp2(const Checkpoint& ck, const std::string& prefix) {
  Mlp2 m;
  m.w1 = Param(ck.get(prefix + ".w1"));
  m.b1 = Param(ck.get(prefix + ".b1"));
  m.w2 = Param(ck.get(prefix + ".w2"));
  m.b2 = Param(ck.get(prefix + ".b2"));
  if (m.b1.value.cols() != m.hidden_dim() || m.w2.value.rows() != m.hidden_dim() ||
      m.b2.value.cols() != m.out_dim()) {
    throw ShapeError("inconsistent MLP shapes under \"" + prefix + "\"");
  }
  return m;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace hyfunc
