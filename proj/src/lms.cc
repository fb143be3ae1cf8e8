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

#include "hyfunc/lms.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hyfunc/errors.h"
#include "json.hpp"

namespace hyfunc {

Projector Projector::create_linear(std::size_t in_dim, std::size_t out_dim, std::uint64_t seed) {
  Rng rng(seed);
  Projector p;
  p.variant = ProjectorVariant::kLinear;
  p.weight = Param(glorot_uniform(out_dim, in_dim, rng));
  return p;
}

Projector Projector::create_mlp2(std::size_t in_dim, std::size_t hidden, std::size_t out_dim,
                                 std::uint64_t seed) {
  Rng rng(seed);
  Projector p;
  p.variant = ProjectorVariant::kMlp2;
  p.mlp = Mlp2::create(in_dim, hidden, out_dim, rng);
  return p;
}

std::size_t Projector::in_dim() const {
  return variant == ProjectorVariant::kLinear ? weight.value.cols() : mlp.in_dim();
}

std::size_t Projector::out_dim() const {
  return variant == ProjectorVariant::kLinear ? weight.value.rows() : mlp.out_dim();
}

std::vector<Param*> Projector::params() {
  if (variant == ProjectorVariant::kLinear) return {&weight};
  return mlp.params();
}

Checkpoint Projector::to_checkpoint() const {
  Checkpoint ck;
  const bool linear = variant == ProjectorVariant::kLinear;
  ck.meta = nlohmann::ordered_json{{"kind", "projector"}, {"variant", linear ? "linear" : "mlp2"}}
                .dump();
  if (linear) {
    ck.add("weight", weight.value);
  } else {
    add_mlp2(ck, "mlp", mlp);
  }
  return ck;
}

Projector Projector::from_checkpoint(const Checkpoint& ck) {
  auto meta = nlohmann::json::parse(ck.meta, nullptr, false);
  if (meta.is_discarded() || meta.value("kind", "") != "projector") {
    throw IoError("checkpoint does not hold a projector");
  }
  Projector p;
  const std::string variant = meta.value("variant", "");
  if (variant == "linear") {
    p.variant = ProjectorVariant::kLinear;
    p.weight = Param(ck.get("weight"));
  } else if (variant == "mlp2") {
    p.variant = ProjectorVariant::kMlp2;
    p.mlp = get_mlp2(ck, "mlp");
  } else {
    throw IoError("unknown projector variant \"" + variant + "\"");
  }
  return p;
}

namespace {

Matrix stack_rows(std::span<const Embedding> rows, std::size_t dim) {
  Matrix m(rows.size(), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].dim() != dim) {
      throw DimError("vector of dim " + std::to_string(rows[i].dim()) + " where " +
                     std::to_string(dim) + " was expected");
    }
    std::copy(rows[i].values.begin(), rows[i].values.end(), m.row(i).begin());
  }
  return m;
}

std::vector<Embedding> unstack_rows(const Matrix& m) {
  std::vector<Embedding> out;
  out.reserve(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out.emplace_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
  }
  return out;
}

// Forward pass over a k x d block, keeping what backward needs.
struct ProjectorPass {
  Matrix input;
  Mlp2Cache cache;
  Matrix output;  // k x d'
};

ProjectorPass projector_forward(const Projector& proj, std::span<const Embedding> e_q) {
  ProjectorPass pass;
  pass.input = stack_rows(e_q, proj.in_dim());
  if (proj.variant == ProjectorVariant::kLinear) {
    gemm(pass.input, false, proj.weight.value, true, pass.output, false);
  } else {
    pass.output = mlp2_forward(proj.mlp, pass.input, pass.cache);
  }
  return pass;
}

void projector_backward(Projector& proj, const ProjectorPass& pass, const Matrix& grad_out) {
  if (proj.variant == ProjectorVariant::kLinear) {
    gemm(grad_out, true, pass.input, false, proj.weight.grad, true);
  } else {
    mlp2_backward(proj.mlp, pass.cache, grad_out);
  }
}

// Stream = ids[0, off) ++ prefix ++ ids[off, end).
class Stream {
 public:
  Stream(std::span<const TokenId> ids, std::size_t prefix_len, std::size_t offset)
      : ids_(ids), k_(prefix_len), off_(std::min(offset, ids.size())) {}

  std::size_t size() const { return ids_.size() + k_; }
  bool is_prefix(std::size_t s) const { return s >= off_ && s < off_ + k_; }
  std::size_t prefix_index(std::size_t s) const { return s - off_; }
  TokenId id(std::size_t s) const { return s < off_ ? ids_[s] : ids_[s - k_]; }
  // Stream position of ids[t].
  std::size_t position_of(std::size_t t) const { return t < off_ ? t : t + k_; }

 private:
  std::span<const TokenId> ids_;
  std::size_t k_;
  std::size_t off_;
};

// Writes the window of the `end` stream items before a prediction into `out`
// (window * embed_dim values).
void fill_window(const TinyLM& lm, const Stream& stream, const Matrix& prefix, std::size_t end,
                 std::span<double> out) {
  const std::size_t d = lm.embed_dim;
  for (std::size_t w = 0; w < lm.window; ++w) {
    auto dst = out.subspan(w * d, d);
    const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(end) -
                             static_cast<std::ptrdiff_t>(lm.window) + static_cast<std::ptrdiff_t>(w);
    std::span<const double> src;
    if (s < 0) {
      src = lm.token_table.value.row(kPadId);
    } else if (stream.is_prefix(static_cast<std::size_t>(s))) {
      src = prefix.row(stream.prefix_index(static_cast<std::size_t>(s)));
    } else {
      src = lm.token_table.value.row(static_cast<std::size_t>(stream.id(static_cast<std::size_t>(s))));
    }
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

// Routes a window gradient back to the token table and the prefix rows.
void scatter_window_grad(TinyLM& lm, const Stream& stream, Matrix& prefix_grad, std::size_t end,
                         std::span<const double> grad) {
  const std::size_t d = lm.embed_dim;
  for (std::size_t w = 0; w < lm.window; ++w) {
    auto g = grad.subspan(w * d, d);
    const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(end) -
                             static_cast<std::ptrdiff_t>(lm.window) + static_cast<std::ptrdiff_t>(w);
    std::span<double> dst;
    if (s < 0) {
      dst = lm.token_table.grad.row(kPadId);
    } else if (stream.is_prefix(static_cast<std::size_t>(s))) {
      dst = prefix_grad.row(stream.prefix_index(static_cast<std::size_t>(s)));
    } else {
      dst = lm.token_table.grad.row(static_cast<std::size_t>(stream.id(static_cast<std::size_t>(s))));
    }
    for (std::size_t j = 0; j < d; ++j) dst[j] += g[j];
  }
}

void check_ids(const TinyLM& lm, std::span<const TokenId> ids) {
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= lm.vocab_size) {
      throw VocabError("token id " + std::to_string(id) + " outside model vocabulary of " +
                       std::to_string(lm.vocab_size));
    }
  }
}

TokenSeq joined_ids(const TrainingExample& ex) {
  TokenSeq ids = ex.context_ids;
  ids.insert(ids.end(), ex.target_ids.begin(), ex.target_ids.end());
  return ids;
}

double row_nll(std::span<const double> logits, std::size_t label, std::span<double> grad_out,
               double scale) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  const double log_z = mx + std::log(z);
  if (!grad_out.empty()) {
    for (std::size_t j = 0; j < logits.size(); ++j) grad_out[j] = std::exp(logits[j] - log_z) * scale;
    grad_out[label] -= scale;
  }
  return log_z - logits[label];
}

}  // namespace

Embedding project(const Projector& proj, const Embedding& e_q) {
  return project_all(proj, std::span<const Embedding>(&e_q, 1)).front();
}

std::vector<Embedding> project_all(const Projector& proj, std::span<const Embedding> e_q) {
  if (e_q.empty()) return {};
  return unstack_rows(projector_forward(proj, e_q).output);
}

TinyLM TinyLM::create(std::size_t vocab_size, std::size_t embed_dim, std::size_t window,
                      std::size_t hidden, std::uint64_t seed) {
  Rng rng(seed);
  TinyLM lm;
  lm.vocab_size = vocab_size;
  lm.embed_dim = embed_dim;
  lm.window = window;
  lm.token_table = Param(glorot_uniform(vocab_size, embed_dim, rng));
  lm.head = Mlp2::create(window * embed_dim, hidden, vocab_size, rng);
  lm.validate();
  return lm;
}

void TinyLM::validate() const {
  if (window < 1) throw ConfigError("TinyLM window must be >= 1");
  if (embed_dim < 1 || vocab_size < 1) throw ConfigError("TinyLM dims must be positive");
  if (token_table.value.rows() != vocab_size || token_table.value.cols() != embed_dim) {
    throw ShapeError("token table " + token_table.value.shape_string() + " does not match vocab " +
                     std::to_string(vocab_size) + " x dim " + std::to_string(embed_dim));
  }
  if (head.in_dim() != window * embed_dim || head.out_dim() != vocab_size) {
    throw ShapeError("TinyLM head shape does not match window and vocabulary");
  }
}

std::vector<Param*> TinyLM::params() {
  auto p = head.params();
  p.insert(p.begin(), &token_table);
  return p;
}

Checkpoint TinyLM::to_checkpoint() const {
  Checkpoint ck;
  ck.meta = nlohmann::ordered_json{{"kind", "tinylm"},
                                   {"vocab_size", vocab_size},
                                   {"embed_dim", embed_dim},
                                   {"window", window}}
                .dump();
  ck.add("token_table", token_table.value);
  add_mlp2(ck, "head", head);
  return ck;
}

TinyLM TinyLM::from_checkpoint(const Checkpoint& ck) {
  auto meta = nlohmann::json::parse(ck.meta, nullptr, false);
  if (meta.is_discarded() || meta.value("kind", "") != "tinylm") {
    throw IoError("checkpoint does not hold a TinyLM");
  }
  TinyLM lm;
  lm.vocab_size = meta.at("vocab_size").get<std::size_t>();
  lm.embed_dim = meta.at("embed_dim").get<std::size_t>();
  lm.window = meta.at("window").get<std::size_t>();
  lm.token_table = Param(ck.get("token_table"));
  lm.head = get_mlp2(ck, "head");
  lm.validate();
  return lm;
}

Matrix lm_logits(const TinyLM& lm, std::span<const Embedding> prefix, std::span<const TokenId> ids,
                 std::size_t prefix_offset) {
  check_ids(lm, ids);
  Matrix prefix_rows = stack_rows(prefix, lm.embed_dim);
  Stream stream(ids, prefix.size(), prefix_offset);
  Matrix x(ids.size(), lm.window * lm.embed_dim);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    fill_window(lm, stream, prefix_rows, stream.position_of(t) + 1, x.row(t));
  }
  if (ids.empty()) return Matrix(0, lm.vocab_size);
  return mlp2_forward(lm.head, x);
}

double weighted_nll(TinyLM& lm, Projector& proj, const TrainingExample& ex,
                    std::span<const double> weights, std::span<const TokenId> labels,
                    bool accumulate_grads) {
  const std::size_t m = ex.target_ids.size();
  if (m == 0) throw EmptyInputError("loss over an empty target sequence");
  if (weights.size() != m) throw ShapeError("one weight per target token required");
  if (!labels.empty() && labels.size() != m) throw ShapeError("one label per target token required");
  if (ex.prefix_offset > ex.context_ids.size()) {
    throw ConfigError("prefix offset lies beyond the context");
  }
  if (proj.out_dim() != lm.embed_dim && !ex.soft_tokens.empty()) {
    throw DimError("projector output " + std::to_string(proj.out_dim()) +
                   " does not match model embedding " + std::to_string(lm.embed_dim));
  }
  const double total_weight = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total_weight > 0.0)) throw DegenerateMaskError("no target token carries loss weight");
  const TokenSeq ids = joined_ids(ex);
  check_ids(lm, ids);
  if (!labels.empty()) check_ids(lm, labels);

  ProjectorPass pass;
  Matrix prefix_rows(0, lm.embed_dim);
  if (!ex.soft_tokens.empty()) {
    pass = projector_forward(proj, ex.soft_tokens);
    prefix_rows = pass.output;
  }
  Stream stream(ids, ex.soft_tokens.size(), ex.prefix_offset);
  const std::size_t base = ex.context_ids.size() + ex.soft_tokens.size();

  std::vector<std::size_t> positions;
  for (std::size_t t = 0; t < m; ++t) {
    if (weights[t] != 0.0) positions.push_back(t);
  }
  Matrix x(positions.size(), lm.window * lm.embed_dim);
  for (std::size_t r = 0; r < positions.size(); ++r) {
    fill_window(lm, stream, prefix_rows, base + positions[r], x.row(r));
  }
  Mlp2Cache cache;
  Matrix logits = mlp2_forward(lm.head, x, cache);
  Matrix grad_logits(logits.rows(), logits.cols());

  double loss = 0.0;
  for (std::size_t r = 0; r < positions.size(); ++r) {
    const std::size_t t = positions[r];
    const auto label = static_cast<std::size_t>(labels.empty() ? ex.target_ids[t] : labels[t]);
    const double scale = weights[t] / total_weight;
    const std::span<double> g = accumulate_grads ? grad_logits.row(r) : std::span<double>();
    loss += scale * row_nll(logits.row(r), label, g, scale);
  }
  if (!accumulate_grads) return loss;

  Matrix grad_x = mlp2_backward(lm.head, cache, grad_logits);
  Matrix prefix_grad(prefix_rows.rows(), lm.embed_dim);
  for (std::size_t r = 0; r < positions.size(); ++r) {
    scatter_window_grad(lm, stream, prefix_grad, base + positions[r], grad_x.row(r));
  }
  if (!ex.soft_tokens.empty()) projector_backward(proj, pass, prefix_grad);
  return loss;
}

std::vector<double> token_nlls(const TinyLM& lm, const Projector& proj, const TrainingExample& ex) {
  const TokenSeq ids = joined_ids(ex);
  Matrix prefix_rows(0, lm.embed_dim);
  if (!ex.soft_tokens.empty()) prefix_rows = projector_forward(proj, ex.soft_tokens).output;
  auto prefix = unstack_rows(prefix_rows);
  // Row (context + t - 1) of the joined logits predicts target t; the first
  // target token needs the window that ends before it.
  std::vector<double> out;
  check_ids(lm, ids);
  Stream stream(ids, prefix.size(), ex.prefix_offset);
  const std::size_t base = ex.context_ids.size() + prefix.size();
  Matrix x(ex.target_ids.size(), lm.window * lm.embed_dim);
  for (std::size_t t = 0; t < ex.target_ids.size(); ++t) {
    fill_window(lm, stream, prefix_rows, base + t, x.row(t));
  }
  if (ex.target_ids.empty()) return out;
  Matrix logits = mlp2_forward(lm.head, x);
  for (std::size_t t = 0; t < ex.target_ids.size(); ++t) {
    out.push_back(row_nll(logits.row(t), static_cast<std::size_t>(ex.target_ids[t]), {}, 0.0));
  }
  return out;
}

double sft_loss(TinyLM& lm, Projector& proj, const TrainingExample& ex) {
  if (ex.target_ids.empty()) throw EmptyInputError("sft_loss over an empty target sequence");
  std::vector<double> ones(ex.target_ids.size(), 1.0);
  return weighted_nll(lm, proj, ex, ones);
}

double selective_sft_loss(TinyLM& lm, Projector& proj, const TrainingExample& ex) {
  if (ex.target_ids.empty()) throw EmptyInputError("selective_sft_loss over an empty target");
  if (ex.mask.bits.size() != ex.target_ids.size()) {
    throw ShapeError("value mask length differs from target length");
  }
  std::vector<double> w(ex.mask.bits.begin(), ex.mask.bits.end());
  return weighted_nll(lm, proj, ex, w);
}

std::vector<double> train_lms(const std::vector<TrainingExample>& corpus, TinyLM& lm,
                              Projector& proj, const LmsTrainConfig& cfg, bool selective) {
  if (corpus.empty()) throw ConfigError("train_lms needs a non-empty corpus");
  if (cfg.epochs == 0 || cfg.batch_size == 0) throw ConfigError("epochs and batch size must be positive");
  const std::size_t batches = (corpus.size() + cfg.batch_size - 1) / cfg.batch_size;
  OptimConfig optim = cfg.optim;
  optim.schedule(static_cast<std::int64_t>(batches * cfg.epochs), cfg.warmup_fraction);
  optim.validate();

  std::vector<Param*> params = lm.params();
  for (Param* p : proj.params()) params.push_back(p);
  for (Param* p : params) p->zero_grad();

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> curve;
  std::int64_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, order.size() - start);
      for (std::size_t i = 0; i < b; ++i) {
        const auto& ex = corpus[order[start + i]];
        total += selective ? selective_sft_loss(lm, proj, ex) : sft_loss(lm, proj, ex);
      }
      if (b > 1) {
        const double inv = 1.0 / static_cast<double>(b);
        for (Param* p : params) {
          for (double& g : p->grad.data()) g *= inv;
        }
      }
      const double lr_now = lr_at(optim, step);
      for (Param* p : params) adamw_step(*p, optim, lr_now);
      ++step;
    }
    curve.push_back(total / static_cast<double>(corpus.size()));
  }
  return curve;
}

LmSession::LmSession(const TinyLM& lm, std::vector<Embedding> projected_prefix,
                     TokenSeq context_ids, std::size_t prefix_offset)
    : lm_(&lm),
      prefix_(std::move(projected_prefix)),
      prefix_offset_(prefix_offset),
      ids_(std::move(context_ids)) {
  if (prefix_offset_ > ids_.size()) throw ConfigError("prefix offset lies beyond the context");
  check_ids(lm, ids_);
  for (const auto& p : prefix_) {
    if (p.dim() != lm.embed_dim) throw DimError("prefix vector does not match model embedding");
  }
}

void LmSession::append(std::span<const TokenId> ids) {
  check_ids(*lm_, ids);
  ids_.insert(ids_.end(), ids.begin(), ids.end());
}

std::vector<double> LmSession::next_logits() const {
  Matrix prefix_rows = stack_rows(prefix_, lm_->embed_dim);
  Stream stream(ids_, prefix_.size(), prefix_offset_);
  Matrix x(1, lm_->window * lm_->embed_dim);
  fill_window(*lm_, stream, prefix_rows, stream.size(), x.row(0));
  Matrix logits = mlp2_forward(lm_->head, x);
  return {logits.data().begin(), logits.data().end()};
}

TokenId argmax_lowest(std::span<const double> logits) {
  if (logits.empty()) throw EmptyInputError("argmax over no logits");
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return static_cast<TokenId>(best);
}

TokenId generate_next(const LmSession& session) { return argmax_lowest(session.next_logits()); }

}  // namespace hyfunc
