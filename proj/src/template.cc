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

#include "hyfunc/template.h"

#include <algorithm>
#include <optional>
#include <set>

#include "hyfunc/errors.h"
#include "json.hpp"

namespace hyfunc {

std::vector<std::string> DynamicTemplate::slot_names() const {
  std::vector<std::string> names;
  for (const auto& seg : segments) {
    if (auto* slot = std::get_if<SlotSegment>(&seg)) names.push_back(slot->param_name);
  }
  return names;
}

std::size_t DynamicTemplate::slot_count() const {
  return static_cast<std::size_t>(std::count_if(segments.begin(), segments.end(), [](const auto& s) {
    return std::holds_alternative<SlotSegment>(s);
  }));
}

std::size_t DynamicTemplate::literal_token_count() const {
  std::size_t n = 0;
  for (const auto& seg : segments) {
    if (auto* lit = std::get_if<LiteralSegment>(&seg)) n += lit->tokens.size();
  }
  return n;
}

std::vector<std::string> DynamicTemplate::tokens() const {
  std::vector<std::string> out;
  for (const auto& seg : segments) {
    if (auto* lit = std::get_if<LiteralSegment>(&seg)) {
      out.insert(out.end(), lit->tokens.begin(), lit->tokens.end());
    } else {
      out.emplace_back(kReservedTokens[kParamOpenId]);
      out.emplace_back(kReservedTokens[kParamCloseId]);
    }
  }
  return out;
}

std::string DynamicTemplate::text() const { return detokenize(tokens()); }

std::string DynamicTemplate::to_json() const {
  nlohmann::ordered_json segs = nlohmann::ordered_json::array();
  for (const auto& seg : segments) {
    nlohmann::ordered_json s;
    if (auto* lit = std::get_if<LiteralSegment>(&seg)) {
      s["literal"] = lit->tokens;
    } else {
      s["slot"] = std::get<SlotSegment>(seg).param_name;
    }
    segs.push_back(std::move(s));
  }
  nlohmann::ordered_json j;
  j["function_name"] = function_name;
  j["text"] = text();
  j["segments"] = std::move(segs);
  return j.dump(2);
}

DynamicTemplate compile_template(const FunctionSpec& spec, bool include_optional) {
  DynamicTemplate tmpl;
  tmpl.function_name = spec.name;
  std::string pending = spec.name + "(";
  bool first = true;
  for (const auto& p : spec.parameters) {
    if (!p.required && !include_optional) continue;
    if (!first) pending += ", ";
    first = false;
    pending += p.name + "=";
    tmpl.segments.emplace_back(LiteralSegment{segment(pending)});
    tmpl.segments.emplace_back(SlotSegment{p.name});
    pending.clear();
  }
  pending += ")";
  tmpl.segments.emplace_back(LiteralSegment{segment(pending)});
  return tmpl;
}

TokenSeq literal_ids(const LiteralSegment& literal, const Vocab& vocab) {
  TokenSeq ids;
  ids.reserve(literal.tokens.size());
  for (const auto& tok : literal.tokens) {
    auto id = vocab.find(tok);
    if (!id) throw VocabError("template token \"" + tok + "\" is not in the vocabulary");
    ids.push_back(*id);
  }
  return ids;
}

std::size_t ValueMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

TokenSeq call_to_training_sequence(const DynamicTemplate& tmpl, const ToolCall& call,
                                   const Vocab& vocab) {
  if (call.function_name != tmpl.function_name) {
    throw AlignmentError("call to " + call.function_name + " does not fit template of " +
                         tmpl.function_name);
  }
  const auto slots = tmpl.slot_names();
  for (const auto& [name, value] : call.arguments) {
    if (std::find(slots.begin(), slots.end(), name) == slots.end()) {
      throw AlignmentError(name);
    }
  }
  TokenSeq seq;
  for (const auto& seg : tmpl.segments) {
    if (auto* lit = std::get_if<LiteralSegment>(&seg)) {
      auto ids = literal_ids(*lit, vocab);
      seq.insert(seq.end(), ids.begin(), ids.end());
      continue;
    }
    const auto& name = std::get<SlotSegment>(seg).param_name;
    auto it = std::find_if(call.arguments.begin(), call.arguments.end(),
                           [&](const auto& a) { return a.first == name; });
    if (it == call.arguments.end()) throw AlignmentError(name);
    seq.push_back(kParamOpenId);
    auto value = encode(vocab, it->second);
    seq.insert(seq.end(), value.begin(), value.end());
    seq.push_back(kParamCloseId);
  }
  return seq;
}

ValueMask build_value_mask(const DynamicTemplate& tmpl, const Vocab& vocab,
                           std::span<const TokenId> target) {
  ValueMask mask;
  mask.bits.assign(target.size(), 0);
  std::size_t pos = 0;
  auto fail = [&](const std::string& expected) -> AlignmentError {
    return AlignmentError("position " + std::to_string(pos) + ": expected " + expected);
  };
  for (const auto& seg : tmpl.segments) {
    if (auto* lit = std::get_if<LiteralSegment>(&seg)) {
      for (TokenId id : literal_ids(*lit, vocab)) {
        if (pos >= target.size() || target[pos] != id) throw fail("\"" + vocab.token(id) + "\"");
        ++pos;
      }
      continue;
    }
    if (pos >= target.size() || target[pos] != kParamOpenId) throw fail("<param>");
    ++pos;
    while (true) {
      if (pos >= target.size()) throw fail("</param>");
      if (target[pos] == kParamOpenId) throw fail("slot value, got nested <param>");
      mask.bits[pos] = 1;
      if (target[pos++] == kParamCloseId) break;
    }
  }
  if (pos != target.size()) throw fail("end of call");
  return mask;
}

namespace {

class OutputMatcher {
 public:
  OutputMatcher(const DynamicTemplate& tmpl, std::string_view output)
      : tmpl_(tmpl), output_(output), toks_(segment_with_offsets(output)) {
    captures_.resize(tmpl.segments.size());
  }

  std::vector<std::string> run() {
    if (!match(0, 0)) {
      std::size_t offset = furthest_ < toks_.size() ? toks_[furthest_].begin : output_.size();
      throw MatchError("output does not match template of " + tmpl_.function_name +
                           " at offset " + std::to_string(offset),
                       offset);
    }
    std::vector<std::string> values;
    for (std::size_t s = 0; s < tmpl_.segments.size(); ++s) {
      if (!std::holds_alternative<SlotSegment>(tmpl_.segments[s])) continue;
      auto [b, e] = captures_[s];
      if (b == e) {
        values.emplace_back();
      } else {
        values.emplace_back(output_.substr(toks_[b].begin, toks_[e - 1].end - toks_[b].begin));
      }
    }
    return values;
  }

 private:
  bool match(std::size_t seg, std::size_t tok) {
    if (seg == tmpl_.segments.size()) {
      if (tok == toks_.size()) return true;
      furthest_ = std::max(furthest_, tok);
      return false;
    }
    if (failed_.count({seg, tok})) return false;
    bool ok = false;
    if (auto* lit = std::get_if<LiteralSegment>(&tmpl_.segments[seg])) {
      std::size_t t = tok;
      ok = true;
      for (const auto& want : lit->tokens) {
        if (t >= toks_.size() || toks_[t].text != want) {
          furthest_ = std::max(furthest_, t);
          ok = false;
          break;
        }
        ++t;
      }
      ok = ok && match(seg + 1, t);
    } else {
      for (std::size_t end = tok; end <= toks_.size(); ++end) {
        if (match(seg + 1, end)) {
          captures_[seg] = {tok, end};
          ok = true;
          break;
        }
      }
    }
    if (!ok) failed_.insert({seg, tok});
    return ok;
  }

  const DynamicTemplate& tmpl_;
  std::string_view output_;
  std::vector<TokenSpan> toks_;
  std::vector<std::pair<std::size_t, std::size_t>> captures_;
  std::set<std::pair<std::size_t, std::size_t>> failed_;
  std::size_t furthest_ = 0;
};

}  // namespace

std::vector<std::string> validate_output(const DynamicTemplate& tmpl, std::string_view output) {
  return OutputMatcher(tmpl, output).run();
}

}  // namespace hyfunc
