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
#include "fixtures.h"
#include "hyfunc/errors.h"
#include "hyfunc/nn.h"
#include "hyfunc/template.h"
#include "hyfunc/tokenizer.h"

using namespace hyfunc;
using hyfunc::testing::weather_call;
using hyfunc::testing::weather_spec;

namespace {

Vocab weather_vocab() {
  return build_vocab({serialize_call(weather_call()), compile_template(weather_spec(), true).text()}, 1);
}

std::vector<TokenId> strip_control(const Vocab& v, const TokenSeq& seq) {
  std::vector<TokenId> out;
  for (auto id : seq) {
    if (!is_control(v, id)) out.push_back(id);
  }
  return out;
}

}  // namespace

TEST_CASE("compile_template golden text") {
  auto t = compile_template(weather_spec(), true);
  CHECK(t.text() == "get_weather(location=<param></param>, time=<param></param>)");
  CHECK(t.slot_names() == std::vector<std::string>{"location", "time"});
  CHECK(t.literal_token_count() == 8);
  CHECK(compile_template(weather_spec(), true) == t);
}

TEST_CASE("compile_template degenerate and optional cases") {
  FunctionSpec f{"f", "", {}};
  auto t0 = compile_template(f, true);
  CHECK(t0.text() == "f()");
  CHECK(t0.slot_count() == 0);

  FunctionSpec g{"g", "", {ParamSpec{"a", ParamType::kString, "", true, {}},
                           ParamSpec{"b", ParamType::kString, "", false, {}}}};
  CHECK(compile_template(g, false).slot_count() == 1);
  CHECK(compile_template(g, true).slot_count() == 2);
  CHECK(compile_template(g, false).text() == "g(a=<param></param>)");
}

TEST_CASE("call_to_training_sequence") {
  auto v = weather_vocab();
  auto t = compile_template(weather_spec(), true);
  auto seq = call_to_training_sequence(t, weather_call(), v);
  CHECK(decode(v, seq) == R"(get_weather(location=<param>"USA"</param>, time=<param>"today"</param>))");

  FunctionSpec f{"f", "", {}};
  auto fv = build_vocab({"f()"}, 1);
  CHECK(decode(fv, call_to_training_sequence(compile_template(f), ToolCall{"f", {}}, fv)) == "f()");

  try {
    call_to_training_sequence(t, ToolCall{"get_weather", {{"location", "\"USA\""}}}, v);
    FAIL("missing value accepted");
  } catch (const AlignmentError& e) {
    CHECK(std::string(e.what()).find("time") != std::string::npos);
  }
  auto extra = weather_call();
  extra.arguments.emplace_back("unit", "1");
  CHECK_THROWS_AS(call_to_training_sequence(t, extra, v), AlignmentError);
}

TEST_CASE("build_value_mask hand alignment") {
  auto v = weather_vocab();
  auto t = compile_template(weather_spec(), true);
  auto seq = call_to_training_sequence(t, weather_call(), v);
  // get_weather ( location = <param> " USA " </param> , time = <param> " today " </param> )
  const std::vector<std::uint8_t> expected = {0, 0, 0, 0, 0, 1, 1, 1, 1, 0, 0, 0, 0, 1, 1, 1, 1, 0};
  auto mask = build_value_mask(t, v, seq);
  CHECK(mask.bits == expected);
  CHECK(mask.count() == 8);
}

TEST_CASE("build_value_mask edge cases") {
  auto v = weather_vocab();
  auto t = compile_template(weather_spec(), true);
  ToolCall empty_loc{"get_weather", {{"location", ""}, {"time", "\"today\""}}};
  auto seq = call_to_training_sequence(t, empty_loc, v);
  auto mask = build_value_mask(t, v, seq);
  CHECK(mask.bits[4] == 0);
  CHECK(mask.bits[5] == 1);
  CHECK(seq[5] == kParamCloseId);
  CHECK(mask.count() == 1 + 4);

  FunctionSpec f{"f", "", {}};
  auto fv = build_vocab({"f()"}, 1);
  auto ft = compile_template(f);
  auto fseq = call_to_training_sequence(ft, ToolCall{"f", {}}, fv);
  CHECK(build_value_mask(ft, fv, fseq).count() == 0);

  auto bad = seq;
  bad[0] = *v.find("time");
  CHECK_THROWS_AS(build_value_mask(t, v, bad), AlignmentError);
  auto truncated = TokenSeq(seq.begin(), seq.end() - 1);
  CHECK_THROWS_AS(build_value_mask(t, v, truncated), AlignmentError);
}

TEST_CASE("validate_output examples") {
  auto t = compile_template(weather_spec(), true);
  CHECK(validate_output(t, R"(get_weather(location="USA", time="today"))") ==
        std::vector<std::string>{"\"USA\"", "\"today\""});
  CHECK_THROWS_AS(validate_output(t, R"(get_weather(location="USA"))"), MatchError);
  try {
    validate_output(t, R"(get_wether(location="USA", time="today"))");
    FAIL("divergent name accepted");
  } catch (const MatchError& e) {
    CHECK(e.offset() == 0);
  }
  try {
    validate_output(t, R"(get_weather(place="USA", time="today"))");
    FAIL("divergent parameter accepted");
  } catch (const MatchError& e) {
    CHECK(e.offset() == 12);
  }
  CHECK(validate_output(compile_template(FunctionSpec{"f", "", {}}), "f()").empty());
}

TEST_CASE("literal_ids needs every literal in the vocab") {
  auto t = compile_template(weather_spec(), true);
  auto lit = std::get<LiteralSegment>(t.segments.front());
  CHECK_THROWS_AS(literal_ids(lit, Vocab()), VocabError);
  auto v = weather_vocab();
  CHECK(literal_ids(lit, v).size() == lit.tokens.size());
}

TEST_CASE("round trip and mask count over random specs and calls") {
  Rng rng(21);
  const std::vector<std::string> names = {"alpha", "beta", "gamma", "delta", "eps"};
  const std::vector<std::string> values = {"\"USA\"", "42", "3.5", "\"New York\"", "true",
                                           "[1, 2]", "\"a-b\"", "x"};
  for (int trial = 0; trial < 300; ++trial) {
    FunctionSpec spec{"fn_" + std::to_string(trial), "", {}};
    const std::size_t m = rng.below(names.size() + 1);
    for (std::size_t i = 0; i < m; ++i) spec.parameters.push_back({names[i], ParamType::kString, "", true, {}});
    ToolCall call{spec.name, {}};
    std::size_t expected_ones = 0;
    std::vector<std::string> corpus = {spec.name + " ( ) = ,"};
    for (const auto& p : spec.parameters) {
      const auto& val = values[rng.below(values.size())];
      call.arguments.emplace_back(p.name, val);
      corpus.push_back(p.name + " " + val);
      expected_ones += segment(val).size() + 1;
    }
    auto v = build_vocab(corpus, 1);
    auto t = compile_template(spec, true);
    auto seq = call_to_training_sequence(t, call, v);
    CHECK(build_value_mask(t, v, seq).count() == expected_ones);

    auto plain = decode(v, strip_control(v, seq));
    std::vector<std::string> expected;
    for (const auto& [_, val] : call.arguments) expected.push_back(val);
    CHECK(validate_output(t, plain) == expected);
    CHECK(plain == serialize_call(call));
  }
}

TEST_CASE("template json names its segments") {
  auto json = compile_template(weather_spec(), true).to_json();
  CHECK(json.find("\"slot\"") != std::string::npos);
  CHECK(json.find("\"literal\"") != std::string::npos);
}
