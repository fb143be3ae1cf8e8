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

#ifndef HYFUNC_TOKENIZER_H_
#define HYFUNC_TOKENIZER_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace hyfunc {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr TokenId kBosId = 2;
inline constexpr TokenId kEosId = 3;
inline constexpr TokenId kParamOpenId = 4;
inline constexpr TokenId kParamCloseId = 5;
inline constexpr std::size_t kNumReserved = 6;

inline constexpr std::array<std::string_view, kNumReserved> kReservedTokens = {
    "<pad>", "<unk>", "<bos>", "<eos>", "<param>", "</param>"};

// Token string <-> id bijection. Ids 0..5 are the reserved tokens above.
class Vocab {
 public:
  // Reserved tokens only.
  Vocab();

  // `tokens[i]` is the string of id i. The first six entries must be the
  // reserved tokens; every other entry must be a single canonical token
  // (one that segments to itself). Throws VocabError otherwise.
  static Vocab from_tokens(std::vector<std::string> tokens);
  static Vocab from_json(std::string_view json_text);
  std::string to_json() const;

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const;
  std::optional<TokenId> find(std::string_view token) const;
  // Id of `token`, or kUnkId.
  TokenId id_or_unk(std::string_view token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

struct TokenSpan {
  std::string text;
  std::size_t begin = 0;  // byte offsets into the segmented text
  std::size_t end = 0;
};

// Whitespace split, then each ASCII punctuation character (other than '_')
// becomes its own token. Reserved token strings are matched greedily as
// single tokens wherever they start.
std::vector<std::string> segment(std::string_view text);
std::vector<TokenSpan> segment_with_offsets(std::string_view text);

bool is_reserved_token(std::string_view token);
bool is_punct_token(std::string_view token);

// Vocabulary of the reserved tokens plus every segmented token occurring at
// least `min_count` times; ordinary ids by descending count, then
// lexicographically.
Vocab build_vocab(const std::vector<std::string>& corpus, int min_count);

TokenSeq encode(const Vocab& vocab, std::string_view text);
// Throws VocabError on an out-of-range id.
std::string decode(const Vocab& vocab, std::span<const TokenId> ids);
// Joins token strings with the canonical spacing table:
//
//   previous token      next token             separator
//   , ; :               anything but reserved  " "
//   <                   spells a reserved tok  " "
//   anything            punctuation/reserved   ""
//   punctuation/reserved word                  ""
//   word                word                   " "
std::string detokenize(std::span<const std::string> tokens);

// True for the `<param>` / `</param>` control ids.
bool is_control(const Vocab& vocab, TokenId id);

}  // namespace hyfunc

#endif  // HYFUNC_TOKENIZER_H_
