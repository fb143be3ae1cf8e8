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

#ifndef HYFUNC_NN_H_
#define HYFUNC_NN_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace hyfunc {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix row_vector(std::span<const double> values);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  void fill(double v);
  bool all_finite() const;
  std::string shape_string() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// c = op(a) * op(b), or c += ... when `accumulate`. Throws ShapeError.
void gemm(const Matrix& a, bool transpose_a, const Matrix& b, bool transpose_b, Matrix& c,
          bool accumulate);
Matrix matmul(const Matrix& a, const Matrix& b);

// Seeded generator with platform-independent draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // [0, 1)
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

// Trainable tensor with its gradient and AdamW moments.
struct Param {
  Matrix value;
  Matrix grad;
  Matrix adam_m;
  Matrix adam_v;
  std::int64_t step_count = 0;

  Param() = default;
  explicit Param(Matrix init);

  void zero_grad() { grad.fill(0.0); }
};

// Glorot-uniform weights.
Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

// Two dense layers with a rectifier between them: relu(x W1 + b1) W2 + b2.
struct Mlp2 {
  Param w1;  // in x hidden
  Param b1;  // 1 x hidden
  Param w2;  // hidden x out
  Param b2;  // 1 x out

  static Mlp2 create(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);

  std::size_t in_dim() const { return w1.value.rows(); }
  std::size_t hidden_dim() const { return w1.value.cols(); }
  std::size_t out_dim() const { return w2.value.cols(); }
  std::vector<Param*> params() { return {&w1, &b1, &w2, &b2}; }
};

// Activations kept by a forward pass for the matching backward pass.
struct Mlp2Cache {
  Matrix x;
  Matrix pre;     // x W1 + b1
  Matrix hidden;  // relu(pre)
};

Matrix mlp2_forward(const Mlp2& m, const Matrix& x);
Matrix mlp2_forward(const Mlp2& m, const Matrix& x, Mlp2Cache& cache);
// Adds parameter gradients into `m` and returns d loss / d x.
Matrix mlp2_backward(Mlp2& m, const Mlp2Cache& cache, const Matrix& upstream);

// Mean over rows of -log softmax(logits)[target]; gradient written to
// `grad` (same shape as logits) when non-null.
double softmax_cross_entropy(const Matrix& logits, std::span<const std::size_t> targets,
                             Matrix* grad);

struct OptimConfig {
  double lr = 1e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t warmup_steps = 0;
  std::int64_t total_steps = 1;

  // Sets total_steps and a warmup of `warmup_fraction` of it (rounded down).
  OptimConfig& schedule(std::int64_t total, double warmup_fraction = 0.05);
  void validate() const;
};

// Decoupled-weight-decay Adam with bias correction. Zeroes the gradient and
// bumps step_count. Throws NumericsError on a non-finite gradient.
void adamw_step(Param& p, const OptimConfig& cfg, double lr_now);

// Linear warmup to cfg.lr, then half-cosine decay to zero at total_steps.
double lr_at(const OptimConfig& cfg, std::int64_t step);

// Compares the analytic gradient `loss` leaves in params[i].grad against
// central differences and returns the largest relative error
// |a - n| / max(|a|, |n|, 1e-6). `loss` must zero nothing and only add to
// gradients; this function zeroes them before and after.
double grad_check(const std::function<double()>& loss, std::span<Param* const> params,
                  double epsilon = 1e-5);

// Named tensors plus a JSON metadata string, stored in a versioned binary
// container.
class Checkpoint {
 public:
  static constexpr std::string_view kMagic = "HYFUNCCK";
  static constexpr std::uint32_t kVersion = 1;

  std::string meta;  // JSON text

  void add(std::string name, const Matrix& m);
  const Matrix& get(std::string_view name) const;
  bool has(std::string_view name) const;
  const std::vector<std::pair<std::string, Matrix>>& tensors() const { return tensors_; }

  std::string serialize() const;
  static Checkpoint deserialize(std::string_view bytes);
  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

 private:
  std::vector<std::pair<std::string, Matrix>> tensors_;
};

void add_mlp2(Checkpoint& ck, const std::string& prefix, const Mlp2& m);
Mlp2 get_mlp2(const Checkpoint& ck, const std::string& prefix);

// Whole-file helpers shared by every module that persists artifacts.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace hyfunc

#endif  // HYFUNC_NN_H_
