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

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "hyfunc/errors.h"
#include "hyfunc/nn.h"

using namespace hyfunc;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (auto& v : m.data()) v = rng.uniform(-1.0, 1.0);
  return m;
}

Matrix naive_product(const Matrix& a, bool ta, const Matrix& b, bool tb) {
  const std::size_t m = ta ? a.cols() : a.rows();
  const std::size_t k = ta ? a.rows() : a.cols();
  const std::size_t n = tb ? b.rows() : b.cols();
  Matrix c(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += (ta ? a(t, i) : a(i, t)) * (tb ? b(j, t) : b(t, j));
      c(i, j) = s;
    }
  }
  return c;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

Param scalar_param(double v) { return Param(Matrix(1, 1, v)); }

}  // namespace

TEST_CASE("gemm agrees with a naive product in every transpose mode") {
  Rng rng(1);
  const std::vector<std::array<std::size_t, 3>> shapes = {{1, 1, 1}, {3, 5, 2}, {17, 9, 13}, {200, 300, 2}, {64, 256, 180}};
  for (auto [m, k, n] : shapes) {
    for (int mode = 0; mode < 4; ++mode) {
      const bool ta = mode & 1;
      const bool tb = mode & 2;
      auto a = ta ? random_matrix(k, m, rng) : random_matrix(m, k, rng);
      auto b = tb ? random_matrix(n, k, rng) : random_matrix(k, n, rng);
      Matrix c(m, n);
      gemm(a, ta, b, tb, c, false);
      auto expect = naive_product(a, ta, b, tb);
      CHECK(max_abs_diff(c, expect) < 1e-10);
      gemm(a, ta, b, tb, c, true);
      for (auto& v : expect.data()) v *= 2.0;
      CHECK(max_abs_diff(c, expect) < 1e-10);
    }
  }
  Matrix c(2, 2);
  CHECK_THROWS_AS(gemm(Matrix(2, 3), false, Matrix(2, 2), false, c, false), ShapeError);
}

TEST_CASE("mlp2_forward examples") {
  Rng rng(2);
  auto m = Mlp2::create(3, 4, 2, rng);
  for (auto* p : m.params()) p->value.fill(0.0);
  auto zero = mlp2_forward(m, random_matrix(5, 3, rng));
  for (double v : zero.data()) CHECK(v == 0.0);

  auto id = Mlp2::create(3, 3, 3, rng);
  id.w1.value = Matrix::identity(3);
  id.w2.value = Matrix::identity(3);
  id.b1.value.fill(0.0);
  id.b2.value.fill(0.0);
  auto x = Matrix::from_rows({{0.5, 0.0, 2.0}, {1.0, 3.0, 0.25}});
  CHECK(mlp2_forward(id, x) == x);

  auto r = Mlp2::create(3, 4, 2, rng);
  for (auto* p : r.params()) {
    for (auto& v : p->value.data()) v = rng.uniform(-1.0, 1.0);
  }
  auto xr = random_matrix(2, 3, rng);
  auto out = mlp2_forward(r, xr);
  for (std::size_t b = 0; b < 2; ++b) {
    std::vector<double> h(4);
    for (std::size_t j = 0; j < 4; ++j) {
      double s = r.b1.value(0, j);
      for (std::size_t i = 0; i < 3; ++i) s += xr(b, i) * r.w1.value(i, j);
      h[j] = s > 0.0 ? s : 0.0;
    }
    for (std::size_t o = 0; o < 2; ++o) {
      double s = r.b2.value(0, o);
      for (std::size_t j = 0; j < 4; ++j) s += h[j] * r.w2.value(j, o);
      CHECK(out(b, o) == doctest::Approx(s).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(mlp2_forward(r, Matrix(2, 4)), ShapeError);
}

TEST_CASE("mlp2_backward scalar chain rule") {
  Rng rng(3);
  auto m = Mlp2::create(1, 1, 1, rng);
  m.w1.value(0, 0) = 2.0;
  m.b1.value(0, 0) = 0.0;
  m.w2.value(0, 0) = 1.0;
  m.b2.value(0, 0) = 0.0;
  Mlp2Cache cache;
  auto y = mlp2_forward(m, Matrix(1, 1, 3.0), cache);
  CHECK(y(0, 0) == 6.0);
  auto dx = mlp2_backward(m, cache, Matrix(1, 1, 1.0));
  CHECK(m.w1.grad(0, 0) == 3.0);
  CHECK(dx(0, 0) == 2.0);
}

TEST_CASE("mlp2_backward with zero upstream leaves grads untouched") {
  Rng rng(4);
  auto m = Mlp2::create(3, 5, 2, rng);
  Mlp2Cache cache;
  mlp2_forward(m, random_matrix(4, 3, rng), cache);
  auto dx = mlp2_backward(m, cache, Matrix(4, 2));
  for (auto* p : m.params()) {
    for (double g : p->grad.data()) CHECK(g == 0.0);
  }
  for (double g : dx.data()) CHECK(g == 0.0);
  CHECK_THROWS_AS(mlp2_backward(m, cache, Matrix(4, 3)), ShapeError);
}

TEST_CASE("mlp2 with softmax cross entropy passes grad_check") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t in = 2 + rng.below(6), hidden = 2 + rng.below(10), out = 2 + rng.below(6);
    const std::size_t batch = 1 + rng.below(5);
    auto m = Mlp2::create(in, hidden, out, rng);
    for (auto& v : m.b1.value.data()) v = rng.uniform(-0.5, 0.5);
    Param x(random_matrix(batch, in, rng));
    std::vector<std::size_t> targets;
    for (std::size_t b = 0; b < batch; ++b) targets.push_back(rng.below(out));
    auto loss = [&] {
      Mlp2Cache cache;
      auto logits = mlp2_forward(m, x.value, cache);
      Matrix g;
      double l = softmax_cross_entropy(logits, targets, &g);
      auto dx = mlp2_backward(m, cache, g);
      for (std::size_t i = 0; i < dx.size(); ++i) x.grad.data()[i] += dx.data()[i];
      return l;
    };
    std::vector<Param*> ps = m.params();
    ps.push_back(&x);
    CHECK(grad_check(loss, ps) < 1e-4);
  }
}

TEST_CASE("softmax_cross_entropy values") {
  auto logits = Matrix::from_rows({{0.0, 0.0, 0.0, 0.0}});
  std::vector<std::size_t> t = {2};
  Matrix g;
  CHECK(softmax_cross_entropy(logits, t, &g) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  CHECK(g(0, 2) == doctest::Approx(-0.75));
  CHECK(g(0, 0) == doctest::Approx(0.25));
  auto big = Matrix::from_rows({{1000.0, 0.0}});
  std::vector<std::size_t> t0 = {0};
  CHECK(softmax_cross_entropy(big, t0, nullptr) == doctest::Approx(0.0));
}

TEST_CASE("adamw_step examples") {
  OptimConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.01;
  auto p = scalar_param(1.0);
  adamw_step(p, cfg, 0.1);
  CHECK(p.value(0, 0) == doctest::Approx(0.999).epsilon(1e-15));
  CHECK(p.step_count == 1);

  cfg.weight_decay = 0.0;
  auto q = scalar_param(1.0);
  adamw_step(q, cfg, 0.1);
  CHECK(q.value(0, 0) == 1.0);

  auto r = scalar_param(1.0);
  r.grad(0, 0) = 1.0;
  adamw_step(r, cfg, 0.1);
  CHECK(r.value(0, 0) == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(r.grad(0, 0) == 0.0);

  auto bad = scalar_param(1.0);
  bad.grad(0, 0) = std::nan("");
  CHECK_THROWS_AS(adamw_step(bad, cfg, 0.1), NumericsError);
}

TEST_CASE("lr_at schedule") {
  OptimConfig cfg;
  cfg.lr = 0.2;
  cfg.warmup_steps = 10;
  cfg.total_steps = 110;
  CHECK(lr_at(cfg, 0) == 0.0);
  CHECK(lr_at(cfg, 5) == doctest::Approx(0.1));
  CHECK(lr_at(cfg, 10) == doctest::Approx(0.2));
  CHECK(lr_at(cfg, 60) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(lr_at(cfg, 110) == doctest::Approx(0.0));
  double prev = lr_at(cfg, 0);
  for (std::int64_t s = 1; s <= 110; ++s) {
    const double cur = lr_at(cfg, s);
    CHECK(cur >= 0.0);
    CHECK(std::abs(cur - prev) <= 0.2 / 10.0 + 1e-12);
    prev = cur;
  }
  OptimConfig sched;
  sched.schedule(100);
  CHECK(sched.warmup_steps == 5);
  CHECK(sched.total_steps == 100);
  OptimConfig invalid;
  invalid.warmup_steps = 5;
  invalid.total_steps = 1;
  CHECK_THROWS_AS(invalid.validate(), ConfigError);
}

TEST_CASE("grad_check examples") {
  auto p = scalar_param(1.0);
  std::vector<Param*> ps = {&p};
  auto quad = [&] {
    const double t = p.value(0, 0);
    p.grad(0, 0) += t;
    return 0.5 * t * t;
  };
  CHECK(grad_check(quad, ps) < 1e-8);
  auto constant = [] { return 3.0; };
  CHECK(grad_check(constant, ps) == 0.0);
}

TEST_CASE("checkpoint round trip and corruption") {
  Rng rng(6);
  auto m = Mlp2::create(3, 4, 2, rng);
  Checkpoint ck;
  ck.meta = R"({"kind":"test"})";
  add_mlp2(ck, "enc", m);
  auto bytes = ck.serialize();
  auto back = Checkpoint::deserialize(bytes);
  CHECK(back.meta == ck.meta);
  auto m2 = get_mlp2(back, "enc");
  CHECK(m2.w1.value == m.w1.value);
  CHECK(m2.b2.value == m.b2.value);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(Checkpoint::deserialize(bad), IoError);
  CHECK_THROWS_AS(Checkpoint::deserialize(bytes.substr(0, bytes.size() - 3)), IoError);
  CHECK_THROWS_AS(back.get("missing"), IoError);
}

TEST_CASE("rng is deterministic per seed") {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs |= x != c.next_u64();
  }
  CHECK(differs);
}

TEST_CASE("glorot init respects its bound") {
  Rng rng(7);
  auto w = glorot_uniform(10, 30, rng);
  const double bound = std::sqrt(6.0 / 40.0);
  for (double v : w.data()) CHECK(std::abs(v) <= bound);
}
