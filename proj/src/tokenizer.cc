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

#include "hyfunc/tokenizer.h"

#include <algorithm>
#include <cctype>
#include <map>

#include "hyfunc/errors.h"
#include "json.hpp"

namespace hyfunc {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool is_punct_char(char c) {
  auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::ispunct(u) && c != '_';
}

std::optional<std::string_view> reserved_at(std::string_view text, std::size_t i) {
  if (text[i] != '<') return std::nullopt;
  for (auto r : kReservedTokens) {
    if (text.compare(i, r.size(), r) == 0) return r;
  }
  return std::nullopt;
}

bool is_special(std::string_view tok) { return is_reserved_token(tok); }

// True when tokens[i..] would read as a reserved token if glued after "<".
bool spells_reserved_after_lt(std::span<const std::string> tokens, std::size_t i) {
  auto at = [&](std::size_t k) -> std::string_view {
    return k < tokens.size() ? std::string_view(tokens[k]) : std::string_view();
  };
  if (at(i) == "/") return at(i + 1) == "param" && at(i + 2) == ">";
  for (auto r : kReservedTokens) {
    std::string_view name = r.substr(1, r.size() - 2);
    if (name == at(i)) return at(i + 1) == ">";
  }
  return false;
}

}  // namespace

bool is_reserved_token(std::string_view token) {
  return std::find(kReservedTokens.begin(), kReservedTokens.end(), token) !=
         kReservedTokens.end();
}

bool is_punct_token(std::string_view token) {
  return token.size() == 1 && is_punct_char(token[0]);
}

Vocab::Vocab() {
  for (auto r : kReservedTokens) {
    index_.emplace(std::string(r), static_cast<TokenId>(tokens_.size()));
    tokens_.emplace_back(r);
  }
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < kNumReserved) throw VocabError("vocabulary lacks reserved tokens");
  Vocab v;
  for (std::size_t i = 0; i < kNumReserved; ++i) {
    if (tokens[i] != kReservedTokens[i]) {
      throw VocabError("id " + std::to_string(i) + " must be " + std::string(kReservedTokens[i]));
    }
  }
  for (std::size_t i = kNumReserved; i < tokens.size(); ++i) {
    auto& tok = tokens[i];
    auto seg = segment(tok);
    if (seg.size() != 1 || seg[0] != tok || is_reserved_token(tok)) {
      throw VocabError("\"" + tok + "\" is not a single ordinary token");
    }
    if (!v.index_.emplace(tok, static_cast<TokenId>(i)).second) {
      throw VocabError("duplicate token \"" + tok + "\"");
    }
    v.tokens_.push_back(std::move(tok));
  }
  return v;
}

Vocab Vocab::from_json(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text.begin(), json_text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed vocabulary JSON: ") + e.what(), e.byte, false);
  }
  if (!j.is_array()) throw VocabError("vocabulary JSON must be an array of strings");
  std::vector<std::string> tokens;
  tokens.reserve(j.size());
  for (const auto& t : j) {
    if (!t.is_string()) throw VocabError("vocabulary JSON must be an array of strings");
    tokens.push_back(t.get<std::string>());
  }
  return from_tokens(std::move(tokens));
}

std::string Vocab::to_json() const { return nlohmann::json(tokens_).dump(); }

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw VocabError("token id " + std::to_string(id) + " out of range (vocab size " +
                     std::to_string(tokens_.size()) + ")");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocab::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocab::id_or_unk(std::string_view token) const { return find(token).value_or(kUnkId); }

std::vector<TokenSpan> segment_with_offsets(std::string_view text) {
  std::vector<TokenSpan> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (is_space(text[i])) {
      ++i;
      continue;
    }
    if (auto r = reserved_at(text, i)) {
      out.push_back({std::string(*r), i, i + r->size()});
      i += r->size();
      continue;
    }
    if (is_punct_char(text[i])) {
      out.push_back({std::string(1, text[i]), i, i + 1});
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j]) && !is_punct_char(text[j])) ++j;
    out.push_back({std::string(text.substr(i, j - i)), i, j});
    i = j;
  }
  return out;
}

std::vector<std::string> segment(std::string_view text) {
  std::vector<std::string> out;
  for (auto& span : segment_with_offsets(text)) out.push_back(std::move(span.text));
  return out;
}

Vocab build_vocab(const std::vector<std::string>& corpus, int min_count) {
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
  std::map<std::string, long> counts;
  for (const auto& text : corpus) {
    for (auto& tok : segment(text)) {
      if (!is_reserved_token(tok)) ++counts[std::move(tok)];
    }
  }
  std::vector<std::pair<std::string, long>> kept;
  for (auto& [tok, n] : counts) {
    if (n >= min_count) kept.emplace_back(tok, n);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens(kReservedTokens.begin(), kReservedTokens.end());
  for (auto& [tok, n] : kept) tokens.push_back(tok);
  return Vocab::from_tokens(std::move(tokens));
}

TokenSeq encode(const Vocab& vocab, std::string_view text) {
  TokenSeq ids;
  for (const auto& tok : segment(text)) ids.push_back(vocab.id_or_unk(tok));
  return ids;
}

std::string detokenize(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) {
      std::string_view a = tokens[i - 1];
      std::string_view b = tokens[i];
      bool space;
      if ((a == "," || a == ";" || a == ":") && !is_special(b)) {
        space = true;
      } else if (a == "<" && spells_reserved_after_lt(tokens, i)) {
        space = true;
      } else if (is_punct_token(b) || is_special(b)) {
        space = false;
      } else if (is_punct_token(a) || is_special(a)) {
        space = false;
      } else {
        space = true;
      }
      if (space) out += ' ';
    }
    out += tokens[i];
  }
  return out;
}

std::string decode(const Vocab& vocab, std::span<const TokenId> ids) {
  std::vector<std::string> toks;
  toks.reserve(ids.size());
  for (TokenId id : ids) toks.push_back(vocab.token(id));
  return detokenize(toks);
}

bool is_control(const Vocab& /*vocab*/, TokenId id) {
  return id == kParamOpenId || id == kParamCloseId;
}

}  // namespace hyfunc
