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

#include "hyfunc/decode.h"

#include <exception>
#include <variant>

#include "hyfunc/errors.h"
#include "json.hpp"

namespace hyfunc {

const char* origin_name(Origin origin) {
  switch (origin) {
    case Origin::kInjected:
      return "injected";
    case Origin::kGenerated:
      return "generated";
    case Origin::kForced:
      return "forced";
  }
  return "unknown";
}

TokenSeq DecodeTrace::ids() const {
  TokenSeq out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back(e.id);
  return out;
}

std::string DecodeTrace::to_json(const Vocab& vocab) const {
  nlohmann::ordered_json j;
  j["function"] = function_name;
  j["final_text"] = final_text;
  j["next_calls"] = next_calls;
  auto& ev = j["events"] = nlohmann::ordered_json::array();
  for (const auto& e : events) {
    ev.push_back({{"id", e.id}, {"token", vocab.token(e.id)}, {"origin", origin_name(e.origin)}});
  }
  auto& sp = j["spans"] = nlohmann::ordered_json::array();
  for (const auto& s : spans) {
    sp.push_back({{"param", s.param_name},
                  {"begin", s.begin},
                  {"end", s.end},
                  {"truncated", s.truncated}});
  }
  return j.dump();
}

void DecodeConfig::validate() const {
  if (max_value_tokens < 1) throw ConfigError("max_value_tokens must be >= 1");
  if (max_calls < 1) throw ConfigError("max_calls must be >= 1");
}

namespace {

class Session {
 public:
  Session(Generator& gen, const Vocab& vocab, DecodeTrace& trace)
      : gen_(gen), vocab_(vocab), trace_(trace) {}

  void inject(TokenId id, Origin origin) {
    guarded([&] {
      gen_.append(std::span<const TokenId>(&id, 1));
      return 0;
    });
    trace_.events.push_back({id, origin});
  }

  TokenId predict() {
    TokenId id = guarded([&] { return gen_.next(); });
    ++trace_.next_calls;
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size()) {
      throw GeneratorError("generator returned id " + std::to_string(id) +
                           " outside the vocabulary");
    }
    return id;
  }

  void accept(TokenId id) {
    guarded([&] {
      gen_.append(std::span<const TokenId>(&id, 1));
      return 0;
    });
    trace_.events.push_back({id, Origin::kGenerated});
  }

 private:
  template <typename F>
  auto guarded(F&& f) -> decltype(f()) {
    try {
      return f();
    } catch (const GeneratorError&) {
      throw;
    } catch (const std::exception& e) {
      throw GeneratorError(std::string("generator failed: ") + e.what());
    } catch (...) {
      throw GeneratorError("generator failed with an unknown exception");
    }
  }

  Generator& gen_;
  const Vocab& vocab_;
  DecodeTrace& trace_;
};

}  // namespace

DecodeTrace run_dynamic_templating(Generator& gen, const DynamicTemplate& tmpl,
                                   const Vocab& vocab, const DecodeConfig& cfg) {
  cfg.validate();
  DecodeTrace trace;
  trace.function_name = tmpl.function_name;
  if (tmpl.segments.empty()) return trace;

  // Resolve every literal before touching the generator.
  std::vector<TokenSeq> literal_tokens;
  for (const auto& seg : tmpl.segments) {
    if (const auto* lit = std::get_if<LiteralSegment>(&seg)) {
      literal_tokens.push_back(literal_ids(*lit, vocab));
    }
  }

  Session session(gen, vocab, trace);
  std::size_t next_literal = 0;
  for (const auto& seg : tmpl.segments) {
    if (std::holds_alternative<LiteralSegment>(seg)) {
      for (TokenId id : literal_tokens[next_literal]) session.inject(id, Origin::kInjected);
      ++next_literal;
      continue;
    }
    ValueSpan span;
    span.param_name = std::get<SlotSegment>(seg).param_name;
    session.inject(kParamOpenId, Origin::kInjected);
    span.begin = trace.events.size();
    std::size_t produced = 0;
    for (;;) {
      if (produced == cfg.max_value_tokens) {
        span.end = trace.events.size();
        span.truncated = true;
        session.inject(kParamCloseId, Origin::kForced);
        break;
      }
      TokenId id = session.predict();
      if (id == kParamCloseId) {
        span.end = trace.events.size();
        session.accept(id);
        break;
      }
      session.accept(id);
      ++produced;
    }
    trace.spans.push_back(span);
  }

  TokenSeq visible;
  for (const auto& e : trace.events) {
    if (!is_control(vocab, e.id)) visible.push_back(e.id);
  }
  trace.final_text = decode(vocab, visible);
  return trace;
}

std::vector<DecodeTrace> run_calls(const GeneratorFactory& factory,
                                   const std::vector<DynamicTemplate>& templates,
                                   const Vocab& vocab, const DecodeConfig& cfg) {
  cfg.validate();
  if (templates.empty()) throw ConfigError("run_calls needs at least one template");
  if (templates.size() > cfg.max_calls) {
    throw ConfigError(std::to_string(templates.size()) + " calls exceed max_calls " +
                      std::to_string(cfg.max_calls));
  }
  std::vector<DecodeTrace> traces;
  TokenSeq history;
  for (const auto& tmpl : templates) {
    std::unique_ptr<Generator> gen = factory();
    if (!gen) throw GeneratorError("generator factory returned no generator");
    if (!history.empty()) {
      try {
        gen->append(history);
      } catch (const std::exception& e) {
        throw GeneratorError(std::string("generator failed: ") + e.what());
      }
    }
    traces.push_back(run_dynamic_templating(*gen, tmpl, vocab, cfg));
    const TokenSeq ids = traces.back().ids();
    history.insert(history.end(), ids.begin(), ids.end());
    if (traces.size() < templates.size()) {
      auto comma = vocab.find(",");
      if (!comma) throw VocabError("vocabulary lacks \",\" needed between calls");
      history.push_back(*comma);
    }
  }
  return traces;
}

std::string join_calls(const std::vector<DecodeTrace>& traces) {
  std::string out = "[";
  for (std::size_t i = 0; i < traces.size(); ++i) {
    if (i > 0) out += ", ";
    out += traces[i].final_text;
  }
  out += "]";
  return out;
}

ContextAccounting context_accounting(const DecodeTrace& trace) {
  ContextAccounting acc;
  for (const auto& e : trace.events) {
    switch (e.origin) {
      case Origin::kInjected:
        ++acc.injected;
        break;
      case Origin::kGenerated:
        ++acc.generated;
        break;
      case Origin::kForced:
        ++acc.forced;
        break;
    }
  }
  acc.appended_without_prediction = acc.injected + acc.forced;
  return acc;
}

}  // namespace hyfunc
