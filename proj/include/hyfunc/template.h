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

#ifndef HYFUNC_TEMPLATE_H_
#define HYFUNC_TEMPLATE_H_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "hyfunc/schema.h"
#include "hyfunc/tokenizer.h"

namespace hyfunc {

// Fixed text of a call, held as token strings so a template does not depend
// on any particular vocabulary.
struct LiteralSegment {
  std::vector<std::string> tokens;
  bool operator==(const LiteralSegment&) const = default;
};

// A parameter value the model fills in between <param> and </param>.
struct SlotSegment {
  std::string param_name;
  bool operator==(const SlotSegment&) const = default;
};

using Segment = std::variant<LiteralSegment, SlotSegment>;

struct DynamicTemplate {
  std::string function_name;
  std::vector<Segment> segments;

  std::vector<std::string> slot_names() const;
  std::size_t slot_count() const;
  std::size_t literal_token_count() const;
  // Token strings with every slot rendered as <param> </param>.
  std::vector<std::string> tokens() const;
  // Canonical text, e.g. `get_weather(location=<param></param>)`.
  std::string text() const;
  // {"function_name": ..., "segments": [{"literal": [...]}, {"slot": "p"}]}
  std::string to_json() const;

  bool operator==(const DynamicTemplate&) const = default;
};

// Required parameters always, optional ones only if `include_optional`.
DynamicTemplate compile_template(const FunctionSpec& spec, bool include_optional = false);

// Ids of a literal segment. Throws VocabError for tokens outside `vocab`.
TokenSeq literal_ids(const LiteralSegment& literal, const Vocab& vocab);

struct ValueMask {
  std::vector<std::uint8_t> bits;

  std::size_t count() const;
  bool operator==(const ValueMask&) const = default;
};

// Literals verbatim; each slot becomes <param> + encode(value) + </param>.
// Throws AlignmentError if a slot has no value or the call has an argument
// the template does not.
TokenSeq call_to_training_sequence(const DynamicTemplate& tmpl, const ToolCall& call,
                                   const Vocab& vocab);

// 1 on every token strictly inside a slot and on the slot's closing
// </param>; 0 on literals and on <param>. Throws AlignmentError naming the
// first position where `target` leaves the template skeleton.
ValueMask build_value_mask(const DynamicTemplate& tmpl, const Vocab& vocab,
                           std::span<const TokenId> target);

// Matches `output` against the template with slots as wildcards and returns
// the slot values in order. Each slot takes the shortest span after which
// the rest of the template still matches. Throws MatchError with the byte
// offset of the first divergence.
std::vector<std::string> validate_output(const DynamicTemplate& tmpl, std::string_view output);

}  // namespace hyfunc

#endif  // HYFUNC_TEMPLATE_H_
