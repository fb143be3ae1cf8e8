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

#include <string>
#include <vector>

#include "doctest.h"
#include "hyfunc/errors.h"
#include "hyfunc/nn.h"
#include "hyfunc/tokenizer.h"

using namespace hyfunc;

namespace {

std::vector<std::string> token_strings(const Vocab& v, const TokenSeq& ids) {
  std::vector<std::string> out;
  for (auto id : ids) out.push_back(v.token(id));
  return out;
}

}  // namespace

TEST_CASE("build_vocab examples") {
  auto v = build_vocab({"a a b"}, 1);
  REQUIRE(v.size() == 8);
  for (std::size_t i = 0; i < kNumReserved; ++i) {
    CHECK(v.token(static_cast<TokenId>(i)) == kReservedTokens[i]);
  }
  CHECK(v.find("a") == 6);
  CHECK(v.find("b") == 7);

  CHECK(build_vocab({}, 1).size() == kNumReserved);

  auto rare = build_vocab({"x"}, 2);
  CHECK_FALSE(rare.find("x").has_value());
  CHECK(encode(rare, "x") == TokenSeq{kUnkId});
}

TEST_CASE("build_vocab orders ties lexicographically and is deterministic") {
  auto v = build_vocab({"c b a", "b"}, 1);
  CHECK(v.find("b") == 6);
  CHECK(v.find("a") == 7);
  CHECK(v.find("c") == 8);
  CHECK(build_vocab({"c b a", "b"}, 1) == v);
}

TEST_CASE("encode examples") {
  auto v = build_vocab({"get_weather ( ) x = location"}, 1);
  CHECK(token_strings(v, encode(v, "get_weather ( )")) ==
        std::vector<std::string>{"get_weather", "(", ")"});
  CHECK(token_strings(v, encode(v, "x=<param></param>")) ==
        std::vector<std::string>{"x", "=", "<param>", "</param>"});
  CHECK(encode(v, "").empty());
  CHECK(segment("a<<param>>b") == std::vector<std::string>{"a", "<", "<param>", ">", "b"});
}

TEST_CASE("decode examples") {
  auto v = build_vocab({"get_weather ( location = )"}, 1);
  TokenSeq ids = {*v.find("get_weather"), *v.find("("), *v.find("location"), *v.find("="),
                  kParamOpenId, kParamCloseId, *v.find(")")};
  CHECK(decode(v, ids) == "get_weather(location=<param></param>)");
  CHECK(decode(v, TokenSeq{}).empty());
  CHECK(decode(v, TokenSeq{kUnkId}) == "<unk>");
  CHECK_THROWS_AS(decode(v, TokenSeq{static_cast<TokenId>(v.size())}), VocabError);
  CHECK_THROWS_AS(decode(v, TokenSeq{-1}), VocabError);
}

TEST_CASE("decode reproduces canonical text") {
  const std::vector<std::string> texts = {
      R"(get_weather(location="USA", time="today"))",
      "[f(), g(x=1, y=[1, 2])]",
      R"(get_weather(location=<param>"USA"</param>, time=<param>"today"</param>))",
  };
  auto v = build_vocab(texts, 1);
  for (const auto& t : texts) CHECK(decode(v, encode(v, t)) == t);
}

TEST_CASE("is_control") {
  Vocab v = build_vocab({"a"}, 1);
  CHECK(is_control(v, 4));
  CHECK(is_control(v, 5));
  CHECK_FALSE(is_control(v, 6));
  CHECK_FALSE(is_control(v, 0));
}

TEST_CASE("encode is idempotent through decode") {
  const std::vector<std::string> corpus = {
      "get_weather ( location = \" USA \" , time = \" today \" )",
      "a b c [ ] { } : ; ' . - + * / ! ? @ # $ % ^ & | ~ ` _x y_z 12 3.5",
  };
  auto v = build_vocab(corpus, 1);
  Rng rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    TokenSeq seq;
    const std::size_t len = rng.below(20);
    for (std::size_t i = 0; i < len; ++i) seq.push_back(static_cast<TokenId>(1 + rng.below(v.size() - 1)));
    const auto once = encode(v, decode(v, seq));
    CHECK(encode(v, decode(v, once)) == once);
    CHECK(once == seq);
  }
}

TEST_CASE("control strings never hide inside ordinary tokens") {
  auto v = build_vocab({"x<param>y </param>z <paramz> a</param"}, 1);
  for (std::size_t i = kNumReserved; i < v.size(); ++i) {
    CHECK(v.token(static_cast<TokenId>(i)).find("<param>") == std::string::npos);
    CHECK(v.token(static_cast<TokenId>(i)).find("</param>") == std::string::npos);
  }
}

TEST_CASE("vocab persistence and validation") {
  auto v = build_vocab({"hello world ( )"}, 1);
  CHECK(Vocab::from_json(v.to_json()) == v);
  auto toks = v.tokens();
  toks.push_back("two words");
  CHECK_THROWS_AS(Vocab::from_tokens(toks), VocabError);
  toks = v.tokens();
  toks.push_back("<param>");
  CHECK_THROWS_AS(Vocab::from_tokens(toks), VocabError);
  toks = v.tokens();
  toks[0] = "<nope>";
  CHECK_THROWS_AS(Vocab::from_tokens(toks), VocabError);
}

TEST_CASE("segment_with_offsets points back into the text") {
  const std::string text = "f(x= \"a b\")";
  for (const auto& span : segment_with_offsets(text)) {
    CHECK(text.substr(span.begin, span.end - span.begin) == span.text);
  }
}
