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

#ifndef HYFUNC_DECODE_H_
#define HYFUNC_DECODE_H_

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hyfunc/embed.h"
#include "hyfunc/template.h"
#include "hyfunc/tokenizer.h"

namespace hyfunc {

// Incremental next-token source. The orchestrator is the only writer of the
// generator's context: every id it wants the model to see goes through
// append(), including ids previously returned by next().
class Generator {
 public:
  virtual ~Generator() = default;
  virtual void init(std::vector<Embedding> prefix, TokenSeq context_ids,
                    std::size_t prefix_offset) = 0;
  virtual void append(std::span<const TokenId> ids) = 0;
  virtual TokenId next() = 0;
  // Stream items visible to the model (prefix vectors plus ids).
  virtual std::size_t context_length() const = 0;
};

enum class Origin { kInjected, kGenerated, kForced };

const char* origin_name(Origin origin);

struct DecodeEvent {
  TokenId id = 0;
  Origin origin = Origin::kInjected;
  bool operator==(const DecodeEvent&) const = default;
};

struct ValueSpan {
  std::string param_name;
  std::size_t begin = 0;  // event index of the first value token
  std::size_t end = 0;    // one past the last value token
  bool truncated = false;
  bool operator==(const ValueSpan&) const = default;
};

struct DecodeTrace {
  std::string function_name;
  std::vector<DecodeEvent> events;
  std::vector<ValueSpan> spans;
  std::string final_text;
  std::size_t next_calls = 0;

  TokenSeq ids() const;
  std::string to_json(const Vocab& vocab) const;
  bool operator==(const DecodeTrace&) const = default;
};

struct DecodeConfig {
  std::size_t max_value_tokens = 32;
  std::size_t max_calls = 8;
  void validate() const;
};

DecodeTrace run_dynamic_templating(Generator& gen, const DynamicTemplate& tmpl,
                                   const Vocab& vocab, const DecodeConfig& cfg);

// Returns a generator initialized with the shared context of one query.
using GeneratorFactory = std::function<std::unique_ptr<Generator>()>;

// Decodes the templates in order. Session i sees the ids of calls 0..i-1,
// each followed by ",", appended to its initial context.
std::vector<DecodeTrace> run_calls(const GeneratorFactory& factory,
                                   const std::vector<DynamicTemplate>& templates,
                                   const Vocab& vocab, const DecodeConfig& cfg);

// `[call1, call2]`.
std::string join_calls(const std::vector<DecodeTrace>& traces);

struct ContextAccounting {
  std::size_t injected = 0;
  std::size_t generated = 0;
  std::size_t forced = 0;
  // Ids appended without a preceding next(): injected plus forced closes.
  std::size_t appended_without_prediction = 0;
  bool operator==(const ContextAccounting&) const = default;
};

ContextAccounting context_accounting(const DecodeTrace& trace);

}  // namespace hyfunc

#endif  // HYFUNC_DECODE_H_
