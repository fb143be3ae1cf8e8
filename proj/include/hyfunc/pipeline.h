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

#ifndef HYFUNC_PIPELINE_H_
#define HYFUNC_PIPELINE_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hyfunc/decode.h"
#include "hyfunc/embed.h"
#include "hyfunc/lms.h"
#include "hyfunc/retriever.h"
#include "hyfunc/schema.h"
#include "hyfunc/template.h"
#include "hyfunc/tokenizer.h"

namespace hyfunc {

struct PipelineConfig {
  std::uint64_t seed = 0;
  // d = provider.dim, k = provider.soft_token_count
  ProviderConfig provider = [] {
    ProviderConfig p;
    p.dim = 256;
    return p;
  }();

  double alpha = 0.5;
  double tau = 0.07;
  std::size_t retriever_hidden = 256;
  std::size_t retriever_out = 128;
  RetrieverTrainConfig retriever_train;

  ProjectorVariant projector = ProjectorVariant::kLinear;
  std::size_t projector_hidden = 64;
  std::size_t lm_embed_dim = 32;  // d'
  std::size_t lm_window = 64;     // W
  std::size_t lm_hidden = 256;
  LmsTrainConfig lms_train = desk_lms_train();
  bool selective = true;

  std::size_t max_value_tokens = 32;
  std::size_t max_calls = 8;
  bool include_optional = false;
  int vocab_min_count = 1;

  // Optimizer settings that let the small model fit a desk-scale corpus.
  static LmsTrainConfig desk_lms_train();

  void validate() const;
  std::string to_json() const;
  // Fields absent from `json_text` keep their value in `base`.
  static PipelineConfig from_json(std::string_view json_text, const PipelineConfig& base);
};

struct SyntheticSpec {
  std::size_t n_functions = 50;
  std::size_t min_params = 1;
  std::size_t max_params = 3;
  std::size_t value_vocab = 20;
  std::size_t queries_per_function = 20;
  double noise_sigma = 0.1;
  double test_fraction = 0.2;

  void validate() const;
};

struct SyntheticCorpus {
  FunctionLibrary library;
  std::vector<DatasetRecord> train;
  std::vector<DatasetRecord> test;
};

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

struct Artifacts {
  PipelineConfig config;
  FunctionLibrary library;
  Vocab vocab;
  EmbeddingStore store;
  RetrieverModel retriever;
  Projector projector;
  TinyLM lm;
  std::vector<double> retriever_curve;
  std::vector<double> lms_curve;

  static constexpr const char* kFiles[] = {"config.json", "library.json",  "vocab.json",
                                            "store.jsonl", "retriever.bin", "projector.bin",
                                            "lms.bin"};

  void save(const std::string& dir) const;
  // Throws IoError naming the first missing file.
  static Artifacts load(const std::string& dir);
};

// Soft tokens for every record and every function embedding.
EmbeddingStore embed_corpus(EmbeddingProvider& provider, const FunctionLibrary& lib,
                            const std::vector<DatasetRecord>& records);

Vocab build_pipeline_vocab(const FunctionLibrary& lib, const std::vector<DatasetRecord>& records,
                           int min_count);

// One (query, function) pair per distinct ground-truth function of a record.
std::vector<TrainingPair> retriever_pairs(const std::vector<DatasetRecord>& records);
std::vector<TrainingPair> parse_pairs(std::string_view jsonl_text);

RetrieverModel train_pipeline_retriever(const PipelineConfig& cfg, const EmbeddingStore& store,
                                        const std::vector<TrainingPair>& pairs,
                                        std::vector<double>* curve = nullptr);

struct GenerationContext {
  TokenSeq ids;
  std::size_t prefix_offset = 0;
};

GenerationContext build_generation_context(const FunctionLibrary& lib_subset,
                                           std::string_view query, const Vocab& vocab);

std::vector<TrainingExample> build_lms_examples(const PipelineConfig& cfg,
                                                const FunctionLibrary& lib, const Vocab& vocab,
                                                const EmbeddingStore& store,
                                                const std::vector<DatasetRecord>& records);

struct LmsBundle {
  Projector projector;
  TinyLM lm;
  std::vector<double> curve;
};

LmsBundle train_pipeline_lms(const PipelineConfig& cfg, const FunctionLibrary& lib,
                             const Vocab& vocab, const EmbeddingStore& store,
                             const std::vector<DatasetRecord>& records);

Artifacts offline_prepare(const PipelineConfig& cfg, const FunctionLibrary& lib,
                          const std::vector<DatasetRecord>& dataset);

// Generator backed by a TinyLM session.
class TinyLmGenerator : public Generator {
 public:
  explicit TinyLmGenerator(const TinyLM& lm) : lm_(&lm) {}
  void init(std::vector<Embedding> prefix, TokenSeq context_ids,
            std::size_t prefix_offset) override;
  void append(std::span<const TokenId> ids) override;
  TokenId next() override;
  std::size_t context_length() const override;

 private:
  const TinyLM* lm_;
  std::optional<LmSession> session_;
};

struct InferResult {
  std::string text;
  std::vector<ToolCall> calls;
  RetrievalResult retrieval;
  std::vector<DecodeTrace> traces;
  std::size_t input_tokens = 0;
};

InferResult infer(const Artifacts& art, std::string_view query,
                  const std::vector<Embedding>& soft_tokens);
InferResult infer(const Artifacts& art, EmbeddingProvider& provider, std::string_view query,
                  std::string_view record_id = "query");

// Greedy generation of a whole call with no template, for comparison.
std::optional<ToolCall> free_running_call(const Artifacts& art, std::string_view query,
                                          const std::vector<Embedding>& soft_tokens,
                                          const std::vector<std::string>& selected,
                                          std::size_t max_tokens = 64);

// Canonical form used by exact_match: values re-tokenized and detokenized.
ToolCall canonical_call(const ToolCall& call);

int exact_match(const std::vector<ToolCall>& pred, const std::vector<ToolCall>& truth);

struct RetrieverMetrics {
  double em = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

RetrieverMetrics retriever_metrics(const std::vector<std::vector<std::string>>& selected,
                                   const std::vector<std::vector<std::string>>& truth);

struct TokenCounts {
  std::size_t input = 0;
  std::size_t injected = 0;   // literal tokens placed by the template
  std::size_t generated = 0;  // value tokens produced by the model
  std::size_t control_injected = 0;
  std::size_t control_generated = 0;
  std::size_t forced_closes = 0;
  std::size_t next_calls = 0;
};

struct RedundancyStage {
  std::string stage;
  std::string mechanism;
  std::size_t tokens_eliminated = 0;
};

struct EvalReport {
  std::size_t n_records = 0;
  double call_em = 0.0;
  std::optional<double> baseline_call_em;
  RetrieverMetrics retriever;
  TokenCounts tokens;
  std::vector<RedundancyStage> redundancy;

  std::string to_json() const;
  std::string to_table() const;
};

TokenCounts count_tokens(const std::vector<DecodeTrace>& traces, const Vocab& vocab);

std::vector<RedundancyStage> redundancy_report(const std::vector<InferResult>& results,
                                               const FunctionLibrary& lib,
                                               const Vocab& vocab);

struct EvalOptions {
  std::size_t jobs = 1;
  bool baseline = false;
};

EvalReport evaluate(const Artifacts& art, EmbeddingProvider& provider,
                    const std::vector<DatasetRecord>& records, const EvalOptions& opts,
                    std::vector<InferResult>* results = nullptr);

}  // namespace hyfunc

#endif  // HYFUNC_PIPELINE_H_
