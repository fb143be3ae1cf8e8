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

#include "hyfunc/retriever.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hyfunc/errors.h"
#include "json.hpp"

namespace hyfunc {

RetrieverModel RetrieverModel::create(std::size_t in_dim, std::size_t hidden, std::size_t out,
                                      std::uint64_t seed, double tau, double alpha) {
  Rng rng(seed);
  RetrieverModel m;
  m.query_encoder = Mlp2::create(in_dim, hidden, out, rng);
  m.function_encoder = Mlp2::create(in_dim, hidden, out, rng);
  m.tau = tau;
  m.alpha = alpha;
  m.validate();
  return m;
}

void RetrieverModel::validate() const {
  if (!(tau > 0.0)) throw ConfigError("retriever temperature tau must be positive");
  if (alpha < -1.0 || alpha > 1.0) throw ConfigError("retriever threshold alpha must lie in [-1, 1]");
  if (query_encoder.out_dim() != function_encoder.out_dim()) {
    throw ShapeError("query and function encoders disagree on output width");
  }
  if (query_encoder.in_dim() != function_encoder.in_dim()) {
    throw ShapeError("query and function encoders disagree on input width");
  }
}

std::vector<Param*> RetrieverModel::params() {
  auto p = query_encoder.params();
  auto f = function_encoder.params();
  p.insert(p.end(), f.begin(), f.end());
  return p;
}

Checkpoint RetrieverModel::to_checkpoint() const {
  Checkpoint ck;
  ck.meta = nlohmann::ordered_json{{"kind", "retriever"}, {"tau", tau}, {"alpha", alpha}}.dump();
  add_mlp2(ck, "query_encoder", query_encoder);
  add_mlp2(ck, "function_encoder", function_encoder);
  return ck;
}

RetrieverModel RetrieverModel::from_checkpoint(const Checkpoint& ck) {
  auto meta = nlohmann::json::parse(ck.meta, nullptr, false);
  if (meta.is_discarded() || meta.value("kind", "") != "retriever") {
    throw IoError("checkpoint does not hold a retriever");
  }
  RetrieverModel m;
  m.query_encoder = get_mlp2(ck, "query_encoder");
  m.function_encoder = get_mlp2(ck, "function_encoder");
  m.tau = meta.at("tau").get<double>();
  m.alpha = meta.at("alpha").get<double>();
  m.validate();
  return m;
}

namespace {

Embedding encode_with(const Mlp2& enc, const Embedding& e) {
  if (e.dim() != enc.in_dim()) {
    throw DimError("embedding dim " + std::to_string(e.dim()) + " does not fit encoder input " +
                   std::to_string(enc.in_dim()));
  }
  Matrix out = mlp2_forward(enc, Matrix::row_vector(e.values));
  return Embedding(std::vector<double>(out.data().begin(), out.data().end()));
}

double norm_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

Embedding encode_query(const RetrieverModel& model, const Embedding& e_q) {
  return encode_with(model.query_encoder, e_q);
}

Embedding encode_function(const RetrieverModel& model, const Embedding& e_f) {
  return encode_with(model.function_encoder, e_f);
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimError("cosine of vectors with dims " + std::to_string(a.size()) + " and " +
                   std::to_string(b.size()));
  }
  const double na = norm_of(a);
  const double nb = norm_of(b);
  if (na == 0.0 || nb == 0.0) throw DegenerateVectorError("cosine of a zero vector");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

InfoNceResult infonce_loss(const Matrix& queries, const Matrix& functions, double tau) {
  const std::size_t batch = queries.rows();
  if (batch == 0) throw EmptyInputError("infonce_loss on an empty batch");
  if (functions.rows() != batch || functions.cols() != queries.cols()) {
    throw ShapeError("infonce_loss batches " + queries.shape_string() + " and " +
                     functions.shape_string() + " differ");
  }
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  const std::size_t dim = queries.cols();

  // Unit rows and norms.
  auto unit_rows = [&](const Matrix& z, std::vector<double>& norms) {
    Matrix u(z.rows(), dim);
    norms.resize(z.rows());
    for (std::size_t i = 0; i < z.rows(); ++i) {
      norms[i] = norm_of(z.row(i));
      if (norms[i] == 0.0) throw DegenerateVectorError("infonce_loss on a zero row");
      for (std::size_t k = 0; k < dim; ++k) u(i, k) = z(i, k) / norms[i];
    }
    return u;
  };
  std::vector<double> q_norm, f_norm;
  Matrix qu = unit_rows(queries, q_norm);
  Matrix fu = unit_rows(functions, f_norm);

  Matrix sim;
  gemm(qu, false, fu, true, sim, false);

  InfoNceResult r;
  Matrix d_sim(batch, batch);
  const double inv_b = 1.0 / static_cast<double>(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    auto s = sim.row(i);
    double mx = s[0] / tau;
    for (std::size_t j = 1; j < batch; ++j) mx = std::max(mx, s[j] / tau);
    double z = 0.0;
    for (std::size_t j = 0; j < batch; ++j) z += std::exp(s[j] / tau - mx);
    const double log_z = mx + std::log(z);
    r.loss += (log_z - s[i] / tau) * inv_b;
    for (std::size_t j = 0; j < batch; ++j) {
      const double p = std::exp(s[j] / tau - log_z);
      d_sim(i, j) = (p - (i == j ? 1.0 : 0.0)) * inv_b / tau;
    }
  }

  // d cos(a,b) / d a = (b_hat - cos * a_hat) / |a|
  r.grad_queries = Matrix(batch, dim);
  r.grad_functions = Matrix(batch, dim);
  for (std::size_t i = 0; i < batch; ++i) {
    auto gq = r.grad_queries.row(i);
    for (std::size_t j = 0; j < batch; ++j) {
      const double g = d_sim(i, j);
      if (g == 0.0) continue;
      const double c = sim(i, j);
      auto gf = r.grad_functions.row(j);
      for (std::size_t k = 0; k < dim; ++k) {
        gq[k] += g * (fu(j, k) - c * qu(i, k)) / q_norm[i];
        gf[k] += g * (qu(i, k) - c * fu(j, k)) / f_norm[j];
      }
    }
  }
  return r;
}

std::vector<double> train_retriever(const EmbeddingStore& store,
                                    const std::vector<TrainingPair>& pairs,
                                    const RetrieverTrainConfig& cfg, RetrieverModel& model) {
  if (pairs.empty()) throw ConfigError("train_retriever needs at least one pair");
  if (cfg.batch_size == 0 || cfg.epochs == 0) throw ConfigError("batch size and epochs must be positive");
  model.validate();
  const std::size_t in_dim = model.query_encoder.in_dim();
  for (const auto& p : pairs) {
    for (const auto* key : {&p.query_key, &p.function_key}) {
      if (store.get(*key).dim() != in_dim) {
        throw DimError("embedding \"" + *key + "\" does not fit retriever input dim " +
                       std::to_string(in_dim));
      }
    }
  }
  const std::size_t batch_size = std::min(cfg.batch_size, pairs.size());
  const std::size_t batches_per_epoch = (pairs.size() + batch_size - 1) / batch_size;
  OptimConfig optim = cfg.optim;
  optim.schedule(static_cast<std::int64_t>(batches_per_epoch * cfg.epochs), cfg.warmup_fraction);
  optim.validate();

  auto params = model.params();
  for (Param* p : params) p->zero_grad();

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> curve;
  std::int64_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t b = std::min(batch_size, order.size() - start);
      Matrix xq(b, in_dim), xf(b, in_dim);
      for (std::size_t i = 0; i < b; ++i) {
        const auto& pair = pairs[order[start + i]];
        const auto& q = store.get(pair.query_key).values;
        const auto& f = store.get(pair.function_key).values;
        std::copy(q.begin(), q.end(), xq.row(i).begin());
        std::copy(f.begin(), f.end(), xf.row(i).begin());
      }
      Mlp2Cache cq, cf;
      Matrix zq = mlp2_forward(model.query_encoder, xq, cq);
      Matrix zf = mlp2_forward(model.function_encoder, xf, cf);
      InfoNceResult r = infonce_loss(zq, zf, model.tau);
      mlp2_backward(model.query_encoder, cq, r.grad_queries);
      mlp2_backward(model.function_encoder, cf, r.grad_functions);
      const double lr_now = lr_at(optim, step);
      for (Param* p : params) adamw_step(*p, optim, lr_now);
      ++step;
      epoch_loss += r.loss * static_cast<double>(b);
    }
    curve.push_back(epoch_loss / static_cast<double>(pairs.size()));
  }
  return curve;
}

RetrievalResult select_by_threshold(const std::vector<std::string>& names,
                                    const std::vector<double>& scores, double alpha) {
  if (names.size() != scores.size()) throw ShapeError("one score per function required");
  if (names.empty()) throw EmptyInputError("retrieval over an empty library");
  std::vector<std::size_t> order(names.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  RetrievalResult r;
  for (std::size_t i : order) {
    r.ranked.push_back({names[i], scores[i]});
    if (scores[i] > alpha) r.selected.push_back(names[i]);
  }
  if (r.selected.empty()) {
    r.selected.push_back(r.ranked.front().name);
    r.fallback_used = true;
  }
  return r;
}

FunctionIndex build_function_index(const RetrieverModel& model, const EmbeddingStore& store,
                                   const FunctionLibrary& lib) {
  FunctionIndex index;
  for (const auto& f : lib.functions()) {
    index.names.push_back(f.name);
    index.encoded.push_back(encode_function(model, store.get(function_key(f.name))));
  }
  return index;
}

RetrievalResult retrieve(const RetrieverModel& model, const Embedding& e_q,
                         const FunctionIndex& index) {
  const Embedding z_q = encode_query(model, e_q);
  std::vector<double> scores;
  scores.reserve(index.encoded.size());
  for (const auto& z_f : index.encoded) scores.push_back(cosine(z_q, z_f));
  return select_by_threshold(index.names, scores, model.alpha);
}

RetrievalResult retrieve(const RetrieverModel& model, const Embedding& e_q,
                         const EmbeddingStore& store, const FunctionLibrary& lib) {
  return retrieve(model, e_q, build_function_index(model, store, lib));
}

}  // namespace hyfunc
