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

#ifndef HYFUNC_LMS_H_
#define HYFUNC_LMS_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hyfunc/embed.h"
#include "hyfunc/nn.h"
#include "hyfunc/template.h"
#include "hyfunc/tokenizer.h"

namespace hyfunc {

enum class ProjectorVariant { kLinear, kMlp2 };

// Maps soft tokens from the large model's space (d) into the small model's
// embedding space (d').
struct Projector {
  ProjectorVariant variant = ProjectorVariant::kLinear;
  Param weight;  // linear: d' x d, applied as W e
  Mlp2 mlp;      // mlp2: d -> hidden -> d'

  static Projector create_linear(std::size_t in_dim, std::size_t out_dim, std::uint64_t seed);
  static Projector create_mlp2(std::size_t in_dim, std::size_t hidden, std::size_t out_dim,
                               std::uint64_t seed);

  std::size_t in_dim() const;
  std::size_t out_dim() const;
  std::vector<Param*> params();

  Checkpoint to_checkpoint() const;
  static Projector from_checkpoint(const Checkpoint& ck);
};

// Throws DimError when `e_q` does not fit the projector input.
Embedding project(const Projector& proj, const Embedding& e_q);
std::vector<Embedding> project_all(const Projector& proj, std::span<const Embedding> e_q);

// Fixed-window next-token model: the last `window` stream items (token
// embeddings or continuous prefix vectors, left-padded with the <pad>
// embedding) are concatenated and fed through a two-layer MLP head.
struct TinyLM {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 0;
  std::size_t window = 0;
  Param token_table;  // vocab_size x embed_dim
  Mlp2 head;          // window * embed_dim -> hidden -> vocab_size

  static TinyLM create(std::size_t vocab_size, std::size_t embed_dim, std::size_t window,
                       std::size_t hidden, std::uint64_t seed);

  void validate() const;
  std::vector<Param*> params();

  Checkpoint to_checkpoint() const;
  static TinyLM from_checkpoint(const Checkpoint& ck);
};

// One logit row per id: row t predicts the token after ids[t]. The stream is
// ids[0, prefix_offset) ++ prefix ++ ids[prefix_offset, end). Prefix vectors
// must already be in the model's embedding space. Throws VocabError for ids
// outside the vocabulary.
Matrix lm_logits(const TinyLM& lm, std::span<const Embedding> prefix, std::span<const TokenId> ids,
                 std::size_t prefix_offset = 0);

struct TrainingExample {
  TokenSeq context_ids;
  // Raw soft tokens (dim d); projected inside the loss so the projector
  // trains jointly with the model.
  std::vector<Embedding> soft_tokens;
  // Index into context_ids before which the projected soft tokens sit.
  std::size_t prefix_offset = 0;
  TokenSeq target_ids;
  ValueMask mask;
};

// Weighted mean of per-target-token negative log-likelihoods, teacher-forced
// on target_ids. `labels`, when non-empty, replaces target_ids as the
// predicted tokens (inputs stay target_ids). Adds gradients into lm and proj
// unless `accumulate_grads` is false. Throws DegenerateMaskError when all
// weights are zero.
double weighted_nll(TinyLM& lm, Projector& proj, const TrainingExample& ex,
                    std::span<const double> weights, std::span<const TokenId> labels = {},
                    bool accumulate_grads = true);

// Per-target-token negative log-likelihoods, no gradients.
std::vector<double> token_nlls(const TinyLM& lm, const Projector& proj, const TrainingExample& ex);

// Mean NLL over all target tokens. Throws EmptyInputError for an empty
// target.
double sft_loss(TinyLM& lm, Projector& proj, const TrainingExample& ex);
// Mean NLL over the tokens the value mask selects.
double selective_sft_loss(TinyLM& lm, Projector& proj, const TrainingExample& ex);

struct LmsTrainConfig {
  OptimConfig optim = [] {
    OptimConfig o;
    o.lr = 2e-5;
    return o;
  }();
  std::size_t epochs = 1;
  std::size_t batch_size = 1;
  double warmup_fraction = 0.05;
  std::uint64_t seed = 0;
};

// Joint AdamW training of model and projector over seeded shuffles. Returns
// the mean loss of each epoch.
std::vector<double> train_lms(const std::vector<TrainingExample>& corpus, TinyLM& lm,
                              Projector& proj, const LmsTrainConfig& cfg, bool selective);

// Decoding state over an immutable model: stream contents so far.
class LmSession {
 public:
  LmSession(const TinyLM& lm, std::vector<Embedding> projected_prefix, TokenSeq context_ids,
            std::size_t prefix_offset = 0);

  void append(std::span<const TokenId> ids);
  std::vector<double> next_logits() const;
  const TokenSeq& ids() const { return ids_; }
  std::size_t prefix_size() const { return prefix_.size(); }
  // Stream items seen so far (ids plus prefix vectors).
  std::size_t stream_length() const { return ids_.size() + prefix_.size(); }

 private:
  const TinyLM* lm_;
  std::vector<Embedding> prefix_;
  std::size_t prefix_offset_;
  TokenSeq ids_;
};

// Greedy choice at the session's current position; ties go to the lowest id.
TokenId generate_next(const LmSession& session);
TokenId argmax_lowest(std::span<const double> logits);

}  // namespace hyfunc

#endif  // HYFUNC_LMS_H_
