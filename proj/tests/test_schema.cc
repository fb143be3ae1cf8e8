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

#include <set>
#include <string>

#include "doctest.h"
#include "fixtures.h"
#include "hyfunc/errors.h"
#include "hyfunc/nn.h"
#include "hyfunc/schema.h"

using namespace hyfunc;
using hyfunc::testing::kWeatherLibrary;

namespace {

std::size_t count_occurrences(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

std::string random_ident(Rng& rng) {
  static const std::string letters = "abcdefghijklmnopqrstuvwxyz";
  std::string s;
  const std::size_t len = 1 + rng.below(6);
  for (std::size_t i = 0; i < len; ++i) s += letters[rng.below(letters.size())];
  return s;
}

FunctionLibrary random_library(Rng& rng) {
  std::vector<FunctionSpec> specs;
  std::set<std::string> used;
  const std::size_t n = 1 + rng.below(5);
  while (specs.size() < n) {
    FunctionSpec spec;
    spec.name = random_ident(rng) + "_fn";
    if (!used.insert(spec.name).second) continue;
    spec.description = "does " + random_ident(rng) + " \"quoted\" \\ text";
    std::set<std::string> pnames;
    const std::size_t m = rng.below(4);
    while (spec.parameters.size() < m) {
      ParamSpec p;
      p.name = random_ident(rng);
      if (!pnames.insert(p.name).second) continue;
      p.type = static_cast<ParamType>(rng.below(7));
      p.description = random_ident(rng);
      p.required = rng.below(2) == 0;
      if (p.type == ParamType::kEnum) p.enum_values = {"a", "b"};
      spec.parameters.push_back(p);
    }
    specs.push_back(spec);
  }
  return FunctionLibrary(specs);
}

}  // namespace

TEST_CASE("parse_function_library accepts the weather library") {
  auto lib = parse_function_library(kWeatherLibrary);
  REQUIRE(lib.size() == 1);
  CHECK(lib[0].name == "get_weather");
  REQUIRE(lib[0].parameters.size() == 2);
  CHECK(lib[0].parameters[0].name == "location");
  CHECK(lib[0].parameters[1].name == "time");
  CHECK(lib[0].parameters[1].required);
}

TEST_CASE("parse_function_library rejects bad input") {
  CHECK_THROWS_AS(parse_function_library("[]"), SchemaError);
  try {
    parse_function_library(R"([{"name":"f","description":"","parameters":[]},)"
                           R"({"name":"f","description":"","parameters":[]}])");
    FAIL("duplicate accepted");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("\"f\"") != std::string::npos);
  }
  try {
    parse_function_library(R"([{"name":"f",)");
    FAIL("malformed accepted");
  } catch (const ParseError& e) {
    CHECK_FALSE(e.is_line());
    CHECK(e.position() > 0);
  }
  CHECK_THROWS_AS(parse_function_library(
                      R"([{"name":"f","description":"","parameters":[{"name":"x","type":"blob"}]}])"),
                  SchemaError);
  CHECK_THROWS_AS(parse_function_library(R"([{"name":"bad name","description":"","parameters":[]}])"),
                  SchemaError);
}

TEST_CASE("library serialization round trips") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    auto lib = random_library(rng);
    CHECK(parse_function_library(serialize_function_library(lib)) == lib);
  }
}

TEST_CASE("parse_dataset examples") {
  auto lib = parse_function_library(kWeatherLibrary);
  auto recs = parse_dataset(
      R"({"id":"r1","query":"weather in USA today","candidate_functions":["get_weather"],)"
      R"("ground_truth":[{"name":"get_weather","arguments":{"location":"\"USA\"","time":"\"today\""}}]})",
      lib);
  REQUIRE(recs.size() == 1);
  REQUIRE(recs[0].ground_truth.size() == 1);
  CHECK(recs[0].ground_truth[0] == hyfunc::testing::weather_call());

  auto empty = parse_dataset(
      R"({"id":"r2","query":"hi","candidate_functions":["get_weather"],"ground_truth":[]})", lib);
  REQUIRE(empty.size() == 1);
  CHECK(empty[0].ground_truth.empty());

  try {
    parse_dataset(R"({"id":"r3","query":"x","candidate_functions":["frob"],"ground_truth":[]})", lib);
    FAIL("unknown function accepted");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("frob") != std::string::npos);
  }
  try {
    parse_dataset(
        "{\"id\":\"a\",\"query\":\"x\",\"candidate_functions\":[],\"ground_truth\":[]}\n{oops\n", lib);
    FAIL("malformed line accepted");
  } catch (const ParseError& e) {
    CHECK(e.is_line());
    CHECK(e.position() == 2);
  }
}

TEST_CASE("dataset serialization round trips") {
  auto lib = parse_function_library(kWeatherLibrary);
  std::vector<DatasetRecord> recs = {
      {"a", "weather \"here\"", {"get_weather"}, {hyfunc::testing::weather_call()}},
      {"b", "", {"get_weather"}, {}},
  };
  CHECK(parse_dataset(serialize_dataset(recs), lib) == recs);
}

TEST_CASE("render_prompt") {
  auto lib = parse_function_library(kWeatherLibrary);
  auto distill = PromptTemplate::builtin(PromptKind::kLmlDistill);
  auto text = render_prompt(distill, lib, "weather in Palo Alto");
  CHECK(text.rfind("You are an expert in composing functions.", 0) == 0);
  CHECK(count_occurrences(text, "weather in Palo Alto") == 1);
  CHECK(text.find(serialize_function_library(lib)) != std::string::npos);

  CHECK_NOTHROW(render_prompt(distill, lib, ""));

  auto gen = PromptTemplate::builtin(PromptKind::kLmsGenerate);
  const std::string response = serialize_call(hyfunc::testing::weather_call());
  auto with_resp = render_prompt(gen, lib, "weather in USA", response);
  CHECK(with_resp.find("<tool_call>\n" + response + "\n</tool_call>") != std::string::npos);
  CHECK(count_occurrences(with_resp, "weather in USA") == 1);
  CHECK_THROWS_AS(render_prompt(gen, lib, "q"), TemplateError);

  auto ctx = render_generation_context(gen, lib, "weather in USA");
  CHECK(with_resp.rfind(ctx, 0) == 0);
  CHECK(ctx.find("<soft_token>") != std::string::npos);
}

TEST_CASE("prompt templates must carry their placeholders") {
  CHECK_NOTHROW(validate_prompt_template(PromptTemplate::builtin(PromptKind::kLmlDistill)));
  CHECK_NOTHROW(validate_prompt_template(PromptTemplate::builtin(PromptKind::kLmsGenerate)));
  CHECK_THROWS_AS(validate_prompt_template({PromptKind::kLmlDistill, "{functions} only"}),
                  TemplateError);
  CHECK_THROWS_AS(validate_prompt_template({PromptKind::kLmsGenerate, "{functions} {query}"}),
                  TemplateError);
}

TEST_CASE("serialize_call examples") {
  CHECK(serialize_call(hyfunc::testing::weather_call()) ==
        R"(get_weather(location="USA", time="today"))");
  CHECK(serialize_call(ToolCall{"name", {}}) == "name()");
  CHECK(serialize_call(ToolCall{"f", {{"x", "1"}}}) == "f(x=1)");
  CHECK(serialize_calls({ToolCall{"f", {}}, ToolCall{"g", {{"x", "1"}}}}) == "[f(), g(x=1)]");
}

TEST_CASE("parse_call inverts serialize_call") {
  auto call = hyfunc::testing::weather_call();
  auto back = parse_call(serialize_call(call));
  REQUIRE(back.has_value());
  CHECK(*back == call);
  CHECK_FALSE(parse_call("not a call").has_value());
}

TEST_CASE("serialize_call is injective on distinct calls") {
  Rng rng(5);
  std::set<std::string> seen_text;
  std::set<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>> seen_calls;
  for (int i = 0; i < 2000; ++i) {
    ToolCall c{random_ident(rng), {}};
    std::set<std::string> names;
    const std::size_t m = rng.below(3);
    while (c.arguments.size() < m) {
      auto n = random_ident(rng);
      if (!names.insert(n).second) continue;
      c.arguments.emplace_back(n, std::to_string(rng.below(5)));
    }
    const bool new_call = seen_calls.insert({c.function_name, c.arguments}).second;
    const bool new_text = seen_text.insert(serialize_call(c)).second;
    CHECK(new_call == new_text);
  }
}
