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

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hyfunc/decode.h"
#include "hyfunc/errors.h"
#include "hyfunc/lms.h"
#include "hyfunc/nn.h"
#include "hyfunc/pipeline.h"
#include "hyfunc/retriever.h"
#include "hyfunc/schema.h"
#include "hyfunc/template.h"

using namespace hyfunc;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& body) {
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("threw: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("%s %2d %-22s %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a = 0, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (auto& v : m.data()) v = rng.uniform(-1.0, 1.0);
  return m;
}

void randomize(std::vector<Param*> ps, Rng& rng) {
  for (Param* p : ps) {
    for (auto& v : p->value.data()) v = rng.uniform(-0.5, 0.5);
  }
}

TrainingExample random_example(std::size_t vocab, std::size_t d, Rng& rng, bool uniform_mask) {
  TrainingExample ex;
  const std::size_t ctx = rng.below(6);
  for (std::size_t i = 0; i < ctx; ++i) ex.context_ids.push_back(static_cast<TokenId>(rng.below(vocab)));
  const std::size_t k = 1 + rng.below(2);
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<double> v(d);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    ex.soft_tokens.emplace_back(v);
  }
  ex.prefix_offset = rng.below(ctx + 1);
  const std::size_t m = 1 + rng.below(6);
  for (std::size_t i = 0; i < m; ++i) {
    ex.target_ids.push_back(static_cast<TokenId>(rng.below(vocab)));
    ex.mask.bits.push_back(uniform_mask ? 1 : static_cast<std::uint8_t>(rng.below(2)));
  }
  ex.mask.bits[rng.below(m)] = 1;
  return ex;
}

class FuzzGenerator : public Generator {
 public:
  enum class Mode { kUniform, kNeverClose, kInstantClose };
  FuzzGenerator(Mode mode, std::size_t vocab, std::uint64_t seed) : mode_(mode), vocab_(vocab), rng_(seed) {}
  void init(std::vector<Embedding>, TokenSeq, std::size_t) override {}
  void append(std::span<const TokenId> ids) override { length_ += ids.size(); }
  TokenId next() override {
    switch (mode_) {
      case Mode::kInstantClose:
        return kParamCloseId;
      case Mode::kNeverClose: {
        TokenId id;
        do {
          id = static_cast<TokenId>(rng_.below(vocab_));
        } while (id == kParamCloseId);
        return id;
      }
      case Mode::kUniform:
        break;
    }
    return static_cast<TokenId>(rng_.below(vocab_));
  }
  std::size_t context_length() const override { return length_; }

 private:
  Mode mode_;
  std::size_t vocab_;
  Rng rng_;
  std::size_t length_ = 0;
};

struct FullRun {
  Artifacts artifacts;
  EvalReport report;
  std::vector<InferResult> results;
  std::vector<std::string> checkpoints;
  double seconds = 0.0;
};

FullRun full_run(const SyntheticCorpus& corpus, const PipelineConfig& cfg) {
  const auto t0 = Clock::now();
  FullRun r{offline_prepare(cfg, corpus.library, corpus.train), {}, {}, {}, 0.0};
  auto provider = make_provider(cfg.provider);
  EvalOptions opts;
  opts.baseline = true;
  r.report = evaluate(r.artifacts, *provider, corpus.test, opts, &r.results);
  r.seconds = seconds_since(t0);
  r.checkpoints = {r.artifacts.retriever.to_checkpoint().serialize(),
                   r.artifacts.projector.to_checkpoint().serialize(),
                   r.artifacts.lm.to_checkpoint().serialize(), r.artifacts.store.to_jsonl(),
                   r.artifacts.vocab.to_json()};
  return r;
}

}  // namespace

int main() {
  report(1, "template-golden", [] {
    const auto lib = parse_function_library(
        R"([{"name":"get_weather","description":"Get the weather.","parameters":[)"
        R"({"name":"location","type":"string","required":true},)"
        R"({"name":"time","type":"string","required":true}]}])");
    const auto t0 = Clock::now();
    const std::string text = compile_template(lib[0], true).text();
    const double ms = 1e3 * seconds_since(t0);
    const bool ok = text == "get_weather(location=<param></param>, time=<param></param>)";
    return Outcome{ok && ms < 1.0, "\"" + text + "\"" + fmt(" in %.4f ms (< 1 ms)", ms)};
  });

  report(2, "decode-safety-fuzz", [] {
    const auto t0 = Clock::now();
    Rng rng(2024);
    const auto vocab = build_vocab(
        {"f g h tool_a tool_b p q r s t u x y 0 1 2 ( ) [ ] { } , = \" ' : ; . < > unk param - +"}, 1);
    const std::vector<std::string> names = {"p", "q", "r", "s", "t", "u"};
    std::size_t runs = 0, valid = 0;
    for (int i = 0; i < 1000; ++i) {
      FunctionSpec spec{i % 3 == 0 ? "f" : (i % 3 == 1 ? "tool_a" : "g"), "", {}};
      const std::size_t m = rng.below(names.size() + 1);
      for (std::size_t j = 0; j < m; ++j) spec.parameters.push_back({names[j], ParamType::kString, "", true, {}});
      const auto tmpl = compile_template(spec, true);
      DecodeConfig cfg;
      cfg.max_value_tokens = 1 + rng.below(32);
      for (auto mode : {FuzzGenerator::Mode::kUniform, FuzzGenerator::Mode::kNeverClose,
                        FuzzGenerator::Mode::kInstantClose}) {
        FuzzGenerator gen(mode, vocab.size(), rng.next_u64());
        ++runs;
        try {
          const auto trace = run_dynamic_templating(gen, tmpl, vocab, cfg);
          validate_output(tmpl, trace.final_text);
          ++valid;
        } catch (const std::exception&) {
        }
      }
    }
    const double s = seconds_since(t0);
    return Outcome{valid == runs && s < 10.0,
                   fmt("%.0f/%.0f outputs valid in %.2f s (< 10 s)", static_cast<double>(valid),
                       static_cast<double>(runs), s)};
  });

  report(3, "gradient-oracle", [] {
    const auto t0 = Clock::now();
    Rng rng(3);
    const int instances = 25;
    double worst_mlp = 0, worst_nce = 0, worst_sft = 0, worst_sel = 0;
    for (int i = 0; i < instances; ++i) {
      const std::size_t in = 1 + rng.below(16), hid = 1 + rng.below(16), out = 2 + rng.below(15);
      const std::size_t batch = 1 + rng.below(8);
      auto m = Mlp2::create(in, hid, out, rng);
      for (auto& v : m.b1.value.data()) v = rng.uniform(-0.5, 0.5);
      const auto x = random_matrix(batch, in, rng);
      std::vector<std::size_t> targets;
      for (std::size_t b = 0; b < batch; ++b) targets.push_back(rng.below(out));
      auto mlp_loss = [&] {
        Mlp2Cache cache;
        Matrix g;
        const double l = softmax_cross_entropy(mlp2_forward(m, x, cache), targets, &g);
        mlp2_backward(m, cache, g);
        return l;
      };
      auto mps = m.params();
      worst_mlp = std::max(worst_mlp, grad_check(mlp_loss, mps));

      const std::size_t p = 2 + rng.below(15);
      Param q(random_matrix(batch, p, rng)), f(random_matrix(batch, p, rng));
      const double tau = rng.uniform(0.1, 1.0);
      auto nce = [&] {
        auto r = infonce_loss(q.value, f.value, tau);
        for (std::size_t k = 0; k < q.grad.size(); ++k) {
          q.grad.data()[k] += r.grad_queries.data()[k];
          f.grad.data()[k] += r.grad_functions.data()[k];
        }
        return r.loss;
      };
      std::vector<Param*> nps = {&q, &f};
      worst_nce = std::max(worst_nce, grad_check(nce, nps));

      const std::size_t v = 3 + rng.below(8), dm = 1 + rng.below(4), win = 1 + rng.below(4);
      auto lm = TinyLM::create(v, dm, win, 2 + rng.below(8), i);
      randomize(lm.params(), rng);
      const std::size_t din = 1 + rng.below(6);
      auto proj = i % 2 ? Projector::create_mlp2(din, 1 + rng.below(6), dm, i)
                        : Projector::create_linear(din, dm, i);
      randomize(proj.params(), rng);
      const auto ex = random_example(v, din, rng, false);
      auto ps = lm.params();
      for (auto* pp : proj.params()) ps.push_back(pp);
      worst_sft = std::max(worst_sft, grad_check([&] { return sft_loss(lm, proj, ex); }, ps));
      worst_sel = std::max(worst_sel, grad_check([&] { return selective_sft_loss(lm, proj, ex); }, ps));
    }
    const double s = seconds_since(t0);
    const double worst = std::max({worst_mlp, worst_nce, worst_sft, worst_sel});
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "%d instances each; max rel err mlp2 %.1e, infonce %.1e, sft %.1e, selective %.1e "
                  "(< 1e-4) in %.2f s (< 30 s)",
                  instances, worst_mlp, worst_nce, worst_sft, worst_sel, s);
    return Outcome{worst < 1e-4 && s < 30.0, buf};
  });

  report(4, "infonce-analytic", [] {
    const double b1 = infonce_loss(Matrix::from_rows({{0.3, -0.7, 0.2}}),
                                   Matrix::from_rows({{-0.1, 0.4, 0.9}}), 0.07)
                          .loss;
    const auto eye = Matrix::identity(2);
    const double e1 = std::abs(infonce_loss(eye, eye, 1.0).loss - std::log1p(std::exp(-1.0)));
    const double e2 = std::abs(infonce_loss(eye, eye, 0.07).loss - std::log1p(std::exp(-1.0 / 0.07)));
    return Outcome{b1 == 0.0 && e1 < 1e-9 && e2 < 1e-9,
                   fmt("B=1 loss %.1e (exact 0); |err| tau=1 %.1e, tau=0.07 %.1e (< 1e-9)", b1, e1, e2)};
  });

  report(5, "selective-equivalence", [] {
    Rng rng(5);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const std::size_t v = 3 + rng.below(10), dm = 1 + rng.below(6);
      auto lm = TinyLM::create(v, dm, 1 + rng.below(6), 2 + rng.below(10), i);
      randomize(lm.params(), rng);
      auto proj = Projector::create_linear(4, dm, i);
      const auto ex = random_example(v, 4, rng, true);
      worst = std::max(worst, std::abs(selective_sft_loss(lm, proj, ex) - sft_loss(lm, proj, ex)));
    }
    bool degenerate = false;
    {
      auto lm = TinyLM::create(5, 2, 2, 3, 1);
      auto proj = Projector::create_linear(4, 2, 1);
      auto ex = random_example(5, 4, rng, true);
      ex.mask.bits.assign(ex.target_ids.size(), 0);
      try {
        selective_sft_loss(lm, proj, ex);
      } catch (const DegenerateMaskError&) {
        degenerate = true;
      }
    }
    return Outcome{worst <= 1e-12 && degenerate,
                   fmt("100 instances, max |selective - sft| %.1e (<= 1e-12); zero mask raises: ", worst) +
                       (degenerate ? "yes" : "no")};
  });

  SyntheticSpec spec;
  PipelineConfig cfg;
  cfg.provider.query_noise_sigma = spec.noise_sigma;
  const SyntheticCorpus corpus = generate_synthetic(spec, cfg.seed);
  std::optional<FullRun> first;
  std::string first_error;
  try {
    first = full_run(corpus, cfg);
  } catch (const std::exception& e) {
    first_error = e.what();
  }

  report(6, "retriever-learning", [&] {
    if (!first) return Outcome{false, "pipeline failed: " + first_error};
    const auto& r = first->report.retriever;
    return Outcome{r.em >= 0.95 && r.f1 >= 0.97 && first->seconds < 120.0,
                   fmt("held-out EM %.3f (>= 0.95), F1 %.3f (>= 0.97); prepare + eval %.1f s (< 120 s)",
                       r.em, r.f1, first->seconds)};
  });

  report(7, "end-to-end-values", [&] {
    if (!first) return Outcome{false, "pipeline failed: " + first_error};
    const double em = first->report.call_em;
    const double base = first->report.baseline_call_em.value_or(1.0);
    return Outcome{em >= 0.90 && base < em,
                   fmt("call EM %.3f (>= 0.90); free-running baseline EM %.3f (< templated)", em, base)};
  });

  report(8, "token-accounting", [&] {
    if (!first) return Outcome{false, "pipeline failed: " + first_error};
    const auto& vocab = first->artifacts.vocab;
    bool identities = true;
    std::size_t full = 0, generated = 0, injected = 0;
    for (const auto& r : first->results) {
      for (const auto& t : r.traces) {
        const auto c = count_tokens({t}, vocab);
        std::size_t value_tokens = 0;
        for (const auto& s : t.spans) value_tokens += s.end - s.begin;
        identities = identities && c.generated == value_tokens &&
                     c.next_calls == value_tokens + c.control_generated &&
                     c.control_generated + c.forced_closes == t.spans.size() &&
                     c.control_injected == t.spans.size();
        const std::size_t call_tokens = encode(vocab, t.final_text).size();
        identities = identities && c.generated + c.injected == call_tokens;
        full += call_tokens;
        generated += c.generated;
        injected += c.injected;
      }
    }
    const double reduction = full ? 1.0 - static_cast<double>(generated) / static_cast<double>(full) : 0.0;
    const double injected_fraction = full ? static_cast<double>(injected) / static_cast<double>(full) : 0.0;
    const bool ok = identities && std::abs(reduction - injected_fraction) < 1e-12 && reduction >= 0.25;
    return Outcome{ok, fmt("generated %.0f of %.0f call tokens; reduction %.2f%% = injected fraction %.2f%% (>= 25%%)",
                           static_cast<double>(generated), static_cast<double>(full), 100.0 * reduction,
                           100.0 * injected_fraction) +
                           (identities ? "; per-trace identities hold" : "; identity violated")};
  });

  report(9, "exact-match-suite", [] {
    const ToolCall a{"get_weather", {{"location", "\"USA\""}, {"time", "\"today\""}}};
    const ToolCall a_perm{"get_weather", {{"time", "\"today\""}, {"location", "\"USA\""}}};
    const ToolCall b{"search", {{"q", "\"rain\""}}};
    const ToolCall b_other{"search", {{"q", "\"snow\""}}};
    const ToolCall c{"ping", {}};
    struct Case {
      std::vector<ToolCall> pred, truth;
      int expect;
    };
    const std::vector<Case> cases = {
        {{a}, {a}, 1},           {{a, b}, {a, b}, 1}, {{a}, {a, b}, 0},  {{a, b}, {a}, 0},
        {{a_perm}, {a}, 1},      {{b, a}, {a, b}, 0}, {{b_other}, {b}, 0}, {{}, {}, 1},
        {{c}, {c}, 1},           {{c}, {}, 0},
    };
    int correct = 0, sum = 0, expect_sum = 0;
    for (const auto& cs : cases) {
      const int got = exact_match(cs.pred, cs.truth);
      correct += got == cs.expect;
      sum += got;
      expect_sum += cs.expect;
    }
    const double mean = static_cast<double>(sum) / static_cast<double>(cases.size());
    const double expect_mean = static_cast<double>(expect_sum) / static_cast<double>(cases.size());
    return Outcome{correct == static_cast<int>(cases.size()) && mean == expect_mean,
                   fmt("%.0f/10 cases exact; mean EM %.1f = arithmetic mean %.1f", correct, mean, expect_mean)};
  });

  report(10, "determinism", [&] {
    if (!first) return Outcome{false, "pipeline failed: " + first_error};
    const FullRun second = full_run(corpus, cfg);
    const bool ck = second.checkpoints == first->checkpoints;
    const bool rep = second.report.to_json() == first->report.to_json();
    return Outcome{ck && rep, std::string("second seeded run: checkpoints ") + (ck ? "identical" : "differ") +
                                  ", EvalReport " + (rep ? "identical" : "differs")};
  });

  std::printf("%s: %d of 10 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
