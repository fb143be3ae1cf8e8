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

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "fixtures.h"
#include "hyfunc/errors.h"
#include "hyfunc/pipeline.h"

using namespace hyfunc;
namespace fs = std::filesystem;

namespace {

PipelineConfig small_config() {
  PipelineConfig cfg;
  cfg.seed = 3;
  cfg.provider.dim = 64;
  cfg.retriever_hidden = 64;
  cfg.retriever_out = 32;
  cfg.retriever_train.epochs = 40;
  cfg.retriever_train.batch_size = 16;
  cfg.retriever_train.optim.lr = 3e-3;
  cfg.lm_embed_dim = 8;
  cfg.lm_window = 24;
  cfg.lm_hidden = 32;
  cfg.lms_train.epochs = 2;
  return cfg;
}

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.n_functions = 5;
  s.queries_per_function = 6;
  s.value_vocab = 6;
  return s;
}

const SyntheticCorpus& small_corpus() {
  static const SyntheticCorpus c = generate_synthetic(small_spec(), 7);
  return c;
}

const Artifacts& small_artifacts() {
  static const Artifacts a = offline_prepare(small_config(), small_corpus().library, small_corpus().train);
  return a;
}

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("hyfunc_pipeline_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("exact_match examples") {
  ToolCall a{"f", {{"x", "1"}, {"y", "\"s\""}}};
  ToolCall a_perm{"f", {{"y", "\"s\""}, {"x", "1"}}};
  ToolCall b{"g", {}};
  CHECK(exact_match({a}, {a}) == 1);
  CHECK(exact_match({a}, {a, b}) == 0);
  CHECK(exact_match({a_perm}, {a}) == 1);
  CHECK(exact_match({a, b}, {b, a}) == 0);
  CHECK(exact_match({}, {}) == 1);
  ToolCall spaced{"f", {{"x", " 1"}, {"y", "\"s\""}}};
  CHECK(exact_match({spaced}, {a}) == 1);
  ToolCall other{"f", {{"x", "2"}, {"y", "\"s\""}}};
  CHECK(exact_match({other}, {a}) == 0);

  const std::vector<std::vector<ToolCall>> pool = {{a}, {a_perm}, {b}, {a, b}, {b, a}, {other}, {}};
  for (const auto& p : pool) {
    for (const auto& q : pool) CHECK(exact_match(p, q) == exact_match(q, p));
  }
}

TEST_CASE("retriever_metrics examples") {
  auto all = retriever_metrics({{"a"}, {"b", "c"}}, {{"a"}, {"c", "b"}});
  CHECK(all.em == 1.0);
  CHECK(all.precision == 1.0);
  CHECK(all.recall == 1.0);
  CHECK(all.f1 == 1.0);

  auto under = retriever_metrics({{"a"}}, {{"a", "b"}});
  CHECK(under.em == 0.0);
  CHECK(under.recall == doctest::Approx(0.5));
  CHECK(under.precision == 1.0);

  auto over = retriever_metrics({{"a", "b"}}, {{"a"}});
  CHECK(over.em == 0.0);
  CHECK(over.precision == doctest::Approx(0.5));
  CHECK(over.f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("synthetic corpus shape") {
  SyntheticSpec spec;
  auto c = generate_synthetic(spec, 1);
  CHECK(c.library.size() == 50);
  CHECK(c.train.size() + c.test.size() == 1000);
  CHECK(c.test.size() == 200);

  auto again = generate_synthetic(spec, 1);
  CHECK(again.library == c.library);
  CHECK(again.train == c.train);
  CHECK(again.test == c.test);
  CHECK_FALSE(generate_synthetic(spec, 2).train == c.train);

  std::set<std::string> train_queries;
  for (const auto& r : c.train) train_queries.insert(r.query);
  for (const auto& r : c.test) {
    CHECK_FALSE(train_queries.count(r.query));
    for (const auto& call : r.ground_truth) {
      for (const auto& [_, value] : call.arguments) {
        for (const auto& tok : segment(value)) {
          if (!is_punct_token(tok)) CHECK(r.query.find(tok) != std::string::npos);
        }
      }
    }
  }
  CHECK_NOTHROW(parse_dataset(serialize_dataset(c.test), c.library));
}

TEST_CASE("config json round trip and validation") {
  auto cfg = small_config();
  cfg.provider.soft_token_count = 2;
  cfg.projector = ProjectorVariant::kMlp2;
  auto back = PipelineConfig::from_json(cfg.to_json(), PipelineConfig{});
  CHECK(back.to_json() == cfg.to_json());
  CHECK_THROWS_AS(PipelineConfig::from_json(R"({"bogus": 1})", cfg), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_json(R"({"lm": {"windw": 3}})", cfg), ConfigError);
  auto partial = PipelineConfig::from_json(R"({"alpha": 0.25})", cfg);
  CHECK(partial.alpha == 0.25);
  CHECK(partial.lm_window == cfg.lm_window);
  cfg.alpha = 2.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("offline preparation is deterministic and persists") {
  const auto& art = small_artifacts();
  auto again = offline_prepare(small_config(), small_corpus().library, small_corpus().train);
  CHECK(again.retriever.to_checkpoint().serialize() == art.retriever.to_checkpoint().serialize());
  CHECK(again.lm.to_checkpoint().serialize() == art.lm.to_checkpoint().serialize());
  CHECK(again.projector.to_checkpoint().serialize() == art.projector.to_checkpoint().serialize());
  CHECK(again.lms_curve == art.lms_curve);

  auto dir = scratch_dir("persist");
  art.save(dir.string());
  for (const char* f : Artifacts::kFiles) CHECK(fs::exists(dir / f));
  auto loaded = Artifacts::load(dir.string());
  CHECK(loaded.vocab == art.vocab);
  CHECK(loaded.library == art.library);
  CHECK(loaded.store == art.store);
  CHECK(loaded.lm.to_checkpoint().serialize() == art.lm.to_checkpoint().serialize());
  CHECK(loaded.config.to_json() == art.config.to_json());

  fs::remove(dir / "lms.bin");
  try {
    Artifacts::load(dir.string());
    FAIL("missing file accepted");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("lms.bin") != std::string::npos);
  }
  fs::remove_all(dir);

  CHECK_THROWS_AS(offline_prepare(small_config(), small_corpus().library, {}), ConfigError);
}

TEST_CASE("inference output always fits the chosen templates") {
  const auto& art = small_artifacts();
  auto provider = make_provider(art.config.provider);
  for (const auto& rec : small_corpus().test) {
    auto r = infer(art, *provider, rec.query, rec.id);
    REQUIRE_FALSE(r.retrieval.selected.empty());
    REQUIRE(r.traces.size() == r.retrieval.selected.size());
    for (std::size_t i = 0; i < r.traces.size(); ++i) {
      const auto* spec = art.library.find(r.retrieval.selected[i]);
      REQUIRE(spec != nullptr);
      CHECK_NOTHROW(validate_output(compile_template(*spec, art.config.include_optional), r.traces[i].final_text));
    }
    CHECK(r.text == join_calls(r.traces));
    CHECK(r.calls.size() == r.traces.size());
    CHECK(r.input_tokens > 0);
  }
}

TEST_CASE("k soft tokens flow through as k prefix vectors") {
  auto cfg = small_config();
  cfg.provider.soft_token_count = 3;
  cfg.retriever_train.epochs = 5;
  cfg.lms_train.epochs = 1;
  auto art = offline_prepare(cfg, small_corpus().library, small_corpus().train);
  auto provider = make_provider(art.config.provider);
  const auto& rec = small_corpus().test.front();
  auto soft = provider->distill_soft_tokens(art.library, rec.query, rec.id);
  CHECK(soft.size() == 3);
  auto r = infer(art, rec.query, soft);
  CHECK_FALSE(r.traces.empty());
  auto examples = build_lms_examples(cfg, art.library, art.vocab, art.store, small_corpus().train);
  REQUIRE_FALSE(examples.empty());
  CHECK(examples.front().soft_tokens.size() == 3);
  CHECK_THROWS_AS(infer(art, rec.query, {soft[0]}), Error);
}

TEST_CASE("generation context places the prefix at the soft token slot") {
  const auto& art = small_artifacts();
  auto sub = art.library.subset({art.library[0].name});
  auto ctx = build_generation_context(sub, "hello there", art.vocab);
  REQUIRE(ctx.prefix_offset <= ctx.ids.size());
  CHECK(art.vocab.token(ctx.ids[ctx.prefix_offset - 1]) == ">");
  const std::string head = decode(art.vocab, std::span<const TokenId>(ctx.ids.data(), ctx.prefix_offset));
  CHECK(head.size() >= std::string("<soft_token>").size());
  CHECK(head.substr(head.size() - 12) == "<soft_token>");
}

TEST_CASE("token accounting and redundancy stages") {
  const auto& art = small_artifacts();
  auto provider = make_provider(art.config.provider);
  std::vector<InferResult> results;
  auto report = evaluate(art, *provider, small_corpus().test, EvalOptions{}, &results);
  CHECK(report.n_records == small_corpus().test.size());
  CHECK(results.size() == report.n_records);

  std::size_t output_tokens = 0;
  for (const auto& r : results) {
    for (const auto& t : r.traces) output_tokens += encode(art.vocab, t.final_text).size();
  }
  CHECK(report.tokens.generated + report.tokens.injected == output_tokens);

  REQUIRE(report.redundancy.size() == 3);
  CHECK(report.redundancy[0].stage == "Context Processing");
  CHECK(report.redundancy[1].tokens_eliminated == report.tokens.generated);
  CHECK(report.redundancy[2].tokens_eliminated == report.tokens.injected);

  InferResult one;
  one.retrieval.selected = {art.library[0].name};
  std::size_t others = 0;
  for (std::size_t i = 1; i < art.library.size(); ++i) {
    others += encode(art.vocab, serialize_function_spec(art.library[i])).size();
  }
  auto stages = redundancy_report({one}, art.library, art.vocab);
  CHECK(stages[0].tokens_eliminated == others);
  CHECK(stages[1].tokens_eliminated == 0);
  CHECK(stages[2].tokens_eliminated == 0);

  EvalOptions par;
  par.jobs = 3;
  auto parallel = evaluate(art, *provider, small_corpus().test, par);
  CHECK(parallel.to_json() == report.to_json());
  CHECK(report.to_table().find("Syntactic Generation") != std::string::npos);
}

TEST_CASE("all-literal templates count as fully injected") {
  auto vocab = build_vocab({"f ( )"}, 1);
  DecodeTrace trace;
  trace.function_name = "f";
  for (const char* tok : {"f", "(", ")"}) trace.events.push_back({*vocab.find(tok), Origin::kInjected});
  auto c = count_tokens({trace}, vocab);
  CHECK(c.injected == 3);
  CHECK(c.generated == 0);
}

TEST_CASE("weather template literals are the syntactic stage") {
  auto spec = hyfunc::testing::weather_spec();
  auto vocab = build_vocab({serialize_call(hyfunc::testing::weather_call()), "get_weather ( location = , time = )"}, 1);
  auto t = compile_template(spec, true);
  DecodeTrace trace;
  for (const auto& tok : t.tokens()) {
    trace.events.push_back({vocab.find(tok).value(), Origin::kInjected});
  }
  auto c = count_tokens({trace}, vocab);
  CHECK(c.injected == t.literal_token_count());
  CHECK(c.control_injected == 2 * t.slot_count());
}

TEST_CASE("canonical_call normalizes argument order and spacing") {
  ToolCall c{"f", {{"b", " 2"}, {"a", "\"x  y\""}}};
  auto canon = canonical_call(c);
  REQUIRE(canon.arguments.size() == 2);
  CHECK(canon.arguments[0].first == "a");
  CHECK(canon.arguments[1].second == "2");
}
