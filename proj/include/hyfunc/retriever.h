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

#ifndef HYFUNC_RETRIEVER_H_
#define HYFUNC_RETRIEVER_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hyfunc/embed.h"
#include "hyfunc/nn.h"
#include "hyfunc/schema.h"

namespace hyfunc {

// Dual encoder: queries and functions are mapped by separate two-layer MLPs
// into one space and compared by cosine similarity.
struct RetrieverModel {
  Mlp2 query_encoder;
  Mlp2 function_encoder;
  double tau = 0.07;
  double alpha = 0.5;

  static RetrieverModel create(std::size_t in_dim, std::size_t hidden, std::size_t out,
                               std::uint64_t seed, double tau = 0.07, double alpha = 0.5);

  void validate() const;
  std::vector<Param*> params();

  Checkpoint to_checkpoint() const;
  static RetrieverModel from_checkpoint(const Checkpoint& ck);
};

Embedding encode_query(const RetrieverModel& model, const Embedding& e_q);
Embedding encode_function(const RetrieverModel& model, const Embedding& e_f);

// Throws DimError on a length mismatch, DegenerateVectorError on a zero
// vector.
double cosine(std::span<const double> a, std::span<const double> b);
inline double cosine(const Embedding& a, const Embedding& b) { return cosine(a.values, b.values); }

struct InfoNceResult {
  double loss = 0.0;
  Matrix grad_queries;    // d loss / d z_q
  Matrix grad_functions;  // d loss / d z_f
};

// Row i of `functions` is the positive for row i of `queries`; every other
// row in the batch is a negative. Loss is the batch mean.
InfoNceResult infonce_loss(const Matrix& queries, const Matrix& functions, double tau);

struct TrainingPair {
  std::string query_key;
  std::string function_key;
};

struct RetrieverTrainConfig {
  OptimConfig optim;  // lr 1e-3 by default
  std::size_t batch_size = 256;
  std::size_t epochs = 100;
  double warmup_fraction = 0.05;
  std::uint64_t seed = 0;
};

// Mini-batch InfoNCE training over seeded shuffles. Returns the mean loss of
// each epoch.
std::vector<double> train_retriever(const EmbeddingStore& store,
                                    const std::vector<TrainingPair>& pairs,
                                    const RetrieverTrainConfig& cfg, RetrieverModel& model);

struct ScoredFunction {
  std::string name;
  double score = 0.0;
  bool operator==(const ScoredFunction&) const = default;
};

struct RetrievalResult {
  std::vector<ScoredFunction> ranked;  // descending score, ties by library order
  std::vector<std::string> selected;   // score > alpha, or the top-1 fallback
  bool fallback_used = false;
};

// Threshold policy over precomputed scores (one per name, library order).
RetrievalResult select_by_threshold(const std::vector<std::string>& names,
                                    const std::vector<double>& scores, double alpha);

// Encoded function side, computed once per model.
struct FunctionIndex {
  std::vector<std::string> names;
  std::vector<Embedding> encoded;
};

FunctionIndex build_function_index(const RetrieverModel& model, const EmbeddingStore& store,
                                   const FunctionLibrary& lib);

RetrievalResult retrieve(const RetrieverModel& model, const Embedding& e_q,
                         const FunctionIndex& index);
RetrievalResult retrieve(const RetrieverModel& model, const Embedding& e_q,
                         const EmbeddingStore& store, const FunctionLibrary& lib);

}  // namespace hyfunc

#endif  // HYFUNC_RETRIEVER_H_
