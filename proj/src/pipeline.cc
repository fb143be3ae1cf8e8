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

#include "hyfunc/pipeline.h"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <exception>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "hyfunc/errors.h"
#include "json.hpp"

namespace hyfunc {

namespace {

using ojson = nlohmann::ordered_json;

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) { return mix(seed ^ mix(salt)); }

const char* backend_name(ProviderBackend b) {
  switch (b) {
    case ProviderBackend::kMock:
      return "mock";
    case ProviderBackend::kFile:
      return "file";
    case ProviderBackend::kHttp:
      return "http";
  }
  return "mock";
}

ProviderBackend parse_backend(const std::string& s) {
  if (s == "mock") return ProviderBackend::kMock;
  if (s == "file") return ProviderBackend::kFile;
  if (s == "http") return ProviderBackend::kHttp;
  throw ConfigError("unknown provider backend \"" + s + "\"");
}

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = std::any_of(allowed.begin(), allowed.end(),
                          [&](const char* a) { return it.key() == a; });
    if (!ok) throw ConfigError("unknown config key \"" + where + "." + it.key() + "\"");
  }
}

template <typename T>
void take(const nlohmann::json& j, const char* key, T& field) {
  if (auto it = j.find(key); it != j.end()) {
    try {
      field = it->get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("config key \"") + key + "\" has the wrong type");
    }
  }
}

ojson optim_json(const OptimConfig& o, std::size_t batch, std::size_t epochs, double warmup) {
  return ojson{{"lr", o.lr},
               {"weight_decay", o.weight_decay},
               {"batch_size", batch},
               {"epochs", epochs},
               {"warmup_fraction", warmup}};
}

template <typename C>
void take_train(const nlohmann::json& j, const std::string& where, C& c) {
  check_keys(j, {"lr", "weight_decay", "batch_size", "epochs", "warmup_fraction"}, where);
  take(j, "lr", c.optim.lr);
  take(j, "weight_decay", c.optim.weight_decay);
  take(j, "batch_size", c.batch_size);
  take(j, "epochs", c.epochs);
  take(j, "warmup_fraction", c.warmup_fraction);
}

}  // namespace

LmsTrainConfig PipelineConfig::desk_lms_train() {
  LmsTrainConfig c;
  c.optim.lr = 3e-3;
  c.optim.weight_decay = 0.0;
  c.epochs = 12;
  c.batch_size = 8;
  return c;
}

void PipelineConfig::validate() const {
  provider.validate();
  if (!(alpha >= -1.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [-1, 1]");
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  if (provider.dim < 2 || retriever_hidden < 2 || retriever_out < 2 || lm_embed_dim < 2 ||
      lm_window < 1 || lm_hidden < 2 || projector_hidden < 2) {
    throw ConfigError("dimensions must be >= 2 and the window >= 1");
  }
  if (retriever_train.batch_size < 1 || retriever_train.epochs < 1) {
    throw ConfigError("retriever batch size and epochs must be positive");
  }
  if (lms_train.batch_size < 1 || lms_train.epochs < 1) {
    throw ConfigError("lms batch size and epochs must be positive");
  }
  if (max_value_tokens < 1 || max_calls < 1) {
    throw ConfigError("max_value_tokens and max_calls must be positive");
  }
  if (vocab_min_count < 1) throw ConfigError("vocab_min_count must be >= 1");
}

std::string PipelineConfig::to_json() const {
  ojson j;
  j["seed"] = seed;
  j["provider"] = ojson{{"backend", backend_name(provider.backend)},
                        {"dim", provider.dim},
                        {"soft_token_count", provider.soft_token_count},
                        {"seed", provider.seed},
                        {"soft_token_sigma", provider.soft_token_sigma},
                        {"query_noise_sigma", provider.query_noise_sigma},
                        {"store_path", provider.store_path},
                        {"endpoint", provider.endpoint},
                        {"timeout_seconds", provider.timeout_seconds},
                        {"max_in_flight", provider.max_in_flight}};
  j["alpha"] = alpha;
  j["tau"] = tau;
  j["retriever"] = ojson{{"hidden", retriever_hidden}, {"out", retriever_out}};
  j["retriever_train"] = optim_json(retriever_train.optim, retriever_train.batch_size,
                                    retriever_train.epochs, retriever_train.warmup_fraction);
  j["projector"] = ojson{{"variant", projector == ProjectorVariant::kLinear ? "linear" : "mlp2"},
                         {"hidden", projector_hidden}};
  j["lm"] = ojson{{"embed_dim", lm_embed_dim}, {"window", lm_window}, {"hidden", lm_hidden}};
  j["lms_train"] = optim_json(lms_train.optim, lms_train.batch_size, lms_train.epochs,
                              lms_train.warmup_fraction);
  j["selective"] = selective;
  j["max_value_tokens"] = max_value_tokens;
  j["max_calls"] = max_calls;
  j["include_optional"] = include_optional;
  j["vocab_min_count"] = vocab_min_count;
  return j.dump(2);
}

PipelineConfig PipelineConfig::from_json(std::string_view json_text, const PipelineConfig& base) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text.begin(), json_text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed config JSON: ") + e.what(), e.byte, false);
  }
  check_keys(j,
             {"seed", "provider", "alpha", "tau", "retriever", "retriever_train", "projector", "lm",
              "lms_train", "selective", "max_value_tokens", "max_calls", "include_optional",
              "vocab_min_count"},
             "config");
  PipelineConfig c = base;
  take(j, "seed", c.seed);
  if (auto it = j.find("provider"); it != j.end()) {
    const auto& p = *it;
    check_keys(p,
               {"backend", "dim", "soft_token_count", "seed", "soft_token_sigma",
                "query_noise_sigma", "store_path", "endpoint", "timeout_seconds", "max_in_flight"},
               "provider");
    std::string backend = backend_name(c.provider.backend);
    take(p, "backend", backend);
    c.provider.backend = parse_backend(backend);
    take(p, "dim", c.provider.dim);
    take(p, "soft_token_count", c.provider.soft_token_count);
    take(p, "seed", c.provider.seed);
    take(p, "soft_token_sigma", c.provider.soft_token_sigma);
    take(p, "query_noise_sigma", c.provider.query_noise_sigma);
    take(p, "store_path", c.provider.store_path);
    take(p, "endpoint", c.provider.endpoint);
    take(p, "timeout_seconds", c.provider.timeout_seconds);
    take(p, "max_in_flight", c.provider.max_in_flight);
  }
  take(j, "alpha", c.alpha);
  take(j, "tau", c.tau);
  if (auto it = j.find("retriever"); it != j.end()) {
    check_keys(*it, {"hidden", "out"}, "retriever");
    take(*it, "hidden", c.retriever_hidden);
    take(*it, "out", c.retriever_out);
  }
  if (auto it = j.find("retriever_train"); it != j.end()) {
    take_train(*it, "retriever_train", c.retriever_train);
  }
  if (auto it = j.find("projector"); it != j.end()) {
    check_keys(*it, {"variant", "hidden"}, "projector");
    std::string variant = c.projector == ProjectorVariant::kLinear ? "linear" : "mlp2";
    take(*it, "variant", variant);
    if (variant == "linear") {
      c.projector = ProjectorVariant::kLinear;
    } else if (variant == "mlp2") {
      c.projector = ProjectorVariant::kMlp2;
    } else {
      throw ConfigError("unknown projector variant \"" + variant + "\"");
    }
    take(*it, "hidden", c.projector_hidden);
  }
  if (auto it = j.find("lm"); it != j.end()) {
    check_keys(*it, {"embed_dim", "window", "hidden"}, "lm");
    take(*it, "embed_dim", c.lm_embed_dim);
    take(*it, "window", c.lm_window);
    take(*it, "hidden", c.lm_hidden);
  }
  if (auto it = j.find("lms_train"); it != j.end()) take_train(*it, "lms_train", c.lms_train);
  take(j, "selective", c.selective);
  take(j, "max_value_tokens", c.max_value_tokens);
  take(j, "max_calls", c.max_calls);
  take(j, "include_optional", c.include_optional);
  take(j, "vocab_min_count", c.vocab_min_count);
  return c;
}

void SyntheticSpec::validate() const {
  if (n_functions < 1 || value_vocab < 1 || queries_per_function < 1 || min_params < 1 ||
      max_params < min_params) {
    throw ConfigError("synthetic spec sizes must be positive with min_params <= max_params");
  }
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be non-negative");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test_fraction must lie in [0, 1)");
  }
}

namespace {

constexpr const char* kParamNames[] = {"city", "date", "mode", "unit",
                                       "level", "color", "size", "target"};
constexpr const char* kFiller[] = {"please", "can",   "you", "now",  "for",  "me",
                                   "i",      "need",  "to",  "help", "with", "the",
                                   "quickly", "today", "a",  "show", "get",  "some"};
constexpr const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p",
                                   "r", "s", "t", "v", "z", "br", "kr", "st", "tr"};
constexpr const char* kNuclei[] = {"a", "e", "i", "o", "u", "ai", "or", "an", "el", "is"};

class WordMaker {
 public:
  WordMaker(Rng& rng, std::set<std::string> reserved) : rng_(rng), used_(std::move(reserved)) {}

  std::string make() {
    for (;;) {
      std::string w;
      const std::size_t syllables = 2 + rng_.below(2);
      for (std::size_t s = 0; s < syllables; ++s) {
        w += kOnsets[rng_.below(std::size(kOnsets))];
        w += kNuclei[rng_.below(std::size(kNuclei))];
      }
      if (used_.insert(w).second) return w;
    }
  }

 private:
  Rng& rng_;
  std::set<std::string> used_;
};

std::string join(const std::vector<std::string>& words, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i > 0) out += sep;
    out += words[i];
  }
  return out;
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(derive_seed(seed, 0x5e17));
  std::set<std::string> reserved(std::begin(kFiller), std::end(kFiller));
  reserved.insert(std::begin(kParamNames), std::end(kParamNames));
  for (auto kind : {PromptKind::kLmlDistill, PromptKind::kLmsGenerate}) {
    for (auto& tok : segment(PromptTemplate::builtin(kind).body)) reserved.insert(tok);
  }
  WordMaker words(rng, std::move(reserved));

  const std::size_t n_names = std::min(std::size(kParamNames), spec.value_vocab);
  const std::size_t max_params = std::min(spec.max_params, n_names);
  const std::size_t min_params = std::min(spec.min_params, max_params);
  std::vector<std::vector<std::string>> pools(n_names);
  for (std::size_t v = 0; v < spec.value_vocab; ++v) pools[v % n_names].push_back(words.make());

  struct Meta {
    std::vector<std::string> keywords;
    std::vector<std::size_t> params;  // indices into kParamNames
  };
  std::vector<FunctionSpec> specs;
  std::vector<Meta> metas;
  for (std::size_t f = 0; f < spec.n_functions; ++f) {
    Meta m;
    for (int i = 0; i < 4; ++i) m.keywords.push_back(words.make());
    std::vector<std::size_t> names(n_names);
    for (std::size_t i = 0; i < n_names; ++i) names[i] = i;
    rng.shuffle(names);
    const std::size_t np = min_params + rng.below(max_params - min_params + 1);
    m.params.assign(names.begin(), names.begin() + static_cast<std::ptrdiff_t>(np));
    FunctionSpec fs;
    fs.name = m.keywords[0] + "_" + m.keywords[1];
    fs.description = "Handles " + join(m.keywords, " ") + " requests.";
    for (std::size_t p : m.params) {
      ParamSpec ps;
      ps.name = kParamNames[p];
      ps.type = ParamType::kString;
      ps.description = std::string("The ") + kParamNames[p] + " to use.";
      fs.parameters.push_back(std::move(ps));
    }
    specs.push_back(std::move(fs));
    metas.push_back(std::move(m));
  }

  SyntheticCorpus corpus{FunctionLibrary(specs), {}, {}};
  const auto n_test = static_cast<std::size_t>(
      static_cast<double>(spec.queries_per_function) * spec.test_fraction + 0.5);
  const std::size_t n_train = spec.queries_per_function - std::min(n_test, spec.queries_per_function);
  std::set<std::string> seen;
  for (std::size_t f = 0; f < spec.n_functions; ++f) {
    const Meta& m = metas[f];
    for (std::size_t q = 0; q < spec.queries_per_function; ++q) {
      DatasetRecord rec;
      char id[32];
      std::snprintf(id, sizeof id, "f%03zu-q%02zu", f, q);
      rec.id = id;
      ToolCall call;
      call.function_name = specs[f].name;
      for (int attempt = 0;; ++attempt) {
        std::vector<std::string> kw = m.keywords;
        rng.shuffle(kw);
        std::vector<std::string> toks(kw.begin(), kw.begin() + 2);
        const std::size_t n_fill = 2 + rng.below(3);
        for (std::size_t i = 0; i < n_fill; ++i) toks.push_back(kFiller[rng.below(std::size(kFiller))]);
        call.arguments.clear();
        for (std::size_t p : m.params) {
          const auto& pool = pools[p];
          const std::string& v = pool[rng.below(pool.size())];
          toks.push_back(v);
          call.arguments.emplace_back(kParamNames[p], "\"" + v + "\"");
        }
        rng.shuffle(toks);
        rec.query = join(toks, " ");
        if (seen.insert(rec.query).second) break;
        if (attempt > 1000) throw ConfigError("synthetic spec too small for unique queries");
      }
      rec.ground_truth.push_back(std::move(call));
      (q < n_train ? corpus.train : corpus.test).push_back(std::move(rec));
    }
  }
  return corpus;
}

void Artifacts::save(const std::string& dir) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
  const std::filesystem::path d(dir);
  write_file((d / "config.json").string(), config.to_json() + "\n");
  write_file((d / "library.json").string(), serialize_function_library(library) + "\n");
  write_file((d / "vocab.json").string(), vocab.to_json() + "\n");
  store.save((d / "store.jsonl").string());
  retriever.to_checkpoint().save((d / "retriever.bin").string());
  projector.to_checkpoint().save((d / "projector.bin").string());
  lm.to_checkpoint().save((d / "lms.bin").string());
}

Artifacts Artifacts::load(const std::string& dir) {
  const std::filesystem::path d(dir);
  for (const char* f : kFiles) {
    if (!std::filesystem::exists(d / f)) {
      throw IoError("missing artifact file " + (d / f).string());
    }
  }
  PipelineConfig cfg = PipelineConfig::from_json(read_file((d / "config.json").string()), {});
  Artifacts art{cfg,
                parse_function_library(read_file((d / "library.json").string())),
                Vocab::from_json(read_file((d / "vocab.json").string())),
                EmbeddingStore::load((d / "store.jsonl").string()),
                RetrieverModel::from_checkpoint(Checkpoint::load((d / "retriever.bin").string())),
                Projector::from_checkpoint(Checkpoint::load((d / "projector.bin").string())),
                TinyLM::from_checkpoint(Checkpoint::load((d / "lms.bin").string())),
                {},
                {}};
  if (art.lm.vocab_size != art.vocab.size()) {
    throw ShapeError("model vocabulary " + std::to_string(art.lm.vocab_size) +
                     " differs from vocab.json size " + std::to_string(art.vocab.size()));
  }
  return art;
}

EmbeddingStore embed_corpus(EmbeddingProvider& provider, const FunctionLibrary& lib,
                            const std::vector<DatasetRecord>& records) {
  EmbeddingStore store(provider.config().dim);
  for (const auto& f : lib.functions()) {
    store.put(function_key(f.name), provider.embed_function(lib, f, ""));
  }
  for (const auto& r : records) {
    const FunctionLibrary subset =
        r.candidate_functions.empty() ? lib : lib.subset(r.candidate_functions);
    auto soft = provider.distill_soft_tokens(subset, r.query, r.id);
    for (std::size_t j = 0; j < soft.size(); ++j) store.put(query_key(r.id, j), std::move(soft[j]));
  }
  return store;
}

namespace {

std::vector<std::string> truth_names(const DatasetRecord& r) {
  std::vector<std::string> names;
  for (const auto& c : r.ground_truth) {
    if (std::find(names.begin(), names.end(), c.function_name) == names.end()) {
      names.push_back(c.function_name);
    }
  }
  return names;
}

const PromptTemplate& generate_prompt() {
  static const PromptTemplate t = PromptTemplate::builtin(PromptKind::kLmsGenerate);
  return t;
}

}  // namespace

Vocab build_pipeline_vocab(const FunctionLibrary& lib, const std::vector<DatasetRecord>& records,
                           int min_count) {
  std::vector<std::string> corpus;
  corpus.push_back(serialize_function_library(lib));
  corpus.push_back(",");
  for (const auto& f : lib.functions()) corpus.push_back(compile_template(f, true).text());
  for (const auto& r : records) {
    corpus.push_back(render_generation_context(generate_prompt(), lib.subset(truth_names(r)), r.query));
    corpus.push_back(serialize_calls(r.ground_truth));
  }
  return build_vocab(corpus, min_count);
}

std::vector<TrainingPair> retriever_pairs(const std::vector<DatasetRecord>& records) {
  std::vector<TrainingPair> pairs;
  for (const auto& r : records) {
    for (const auto& name : truth_names(r)) pairs.push_back({query_key(r.id), function_key(name)});
  }
  return pairs;
}

std::vector<TrainingPair> parse_pairs(std::string_view jsonl_text) {
  std::vector<TrainingPair> pairs;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < jsonl_text.size()) {
    std::size_t end = jsonl_text.find('\n', start);
    if (end == std::string_view::npos) end = jsonl_text.size();
    const std::string_view line = jsonl_text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    nlohmann::json j = nlohmann::json::parse(line.begin(), line.end(), nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("query_key") ||
        !j.contains("function_key") || !j["query_key"].is_string() ||
        !j["function_key"].is_string()) {
      throw ParseError("pairs line " + std::to_string(line_no) +
                           " must be {\"query_key\": ..., \"function_key\": ...}",
                       line_no, true);
    }
    pairs.push_back({j["query_key"].get<std::string>(), j["function_key"].get<std::string>()});
  }
  return pairs;
}

RetrieverModel train_pipeline_retriever(const PipelineConfig& cfg, const EmbeddingStore& store,
                                        const std::vector<TrainingPair>& pairs,
                                        std::vector<double>* curve) {
  RetrieverModel model = RetrieverModel::create(store.dim(), cfg.retriever_hidden,
                                                cfg.retriever_out, derive_seed(cfg.seed, 1),
                                                cfg.tau, cfg.alpha);
  RetrieverTrainConfig tc = cfg.retriever_train;
  tc.seed = derive_seed(cfg.seed, 2);
  auto c = train_retriever(store, pairs, tc, model);
  if (curve) *curve = std::move(c);
  return model;
}

GenerationContext build_generation_context(const FunctionLibrary& lib_subset,
                                           std::string_view query, const Vocab& vocab) {
  const std::string text = render_generation_context(generate_prompt(), lib_subset, query);
  constexpr std::string_view kOpen = "<soft_token>";
  const std::size_t pos = text.rfind(kOpen);
  if (pos == std::string::npos) throw TemplateError("generation prompt lacks <soft_token>");
  GenerationContext ctx;
  ctx.ids = encode(vocab, text);
  ctx.prefix_offset = encode(vocab, std::string_view(text).substr(0, pos + kOpen.size())).size();
  return ctx;
}

namespace {

std::vector<Embedding> stored_soft_tokens(const EmbeddingStore& store, const std::string& id,
                                          std::size_t k) {
  std::vector<Embedding> out;
  for (std::size_t j = 0; j < k; ++j) out.push_back(store.get(query_key(id, j)));
  return out;
}

}  // namespace

std::vector<TrainingExample> build_lms_examples(const PipelineConfig& cfg,
                                                const FunctionLibrary& lib, const Vocab& vocab,
                                                const EmbeddingStore& store,
                                                const std::vector<DatasetRecord>& records) {
  const TokenId comma = vocab.find(",").value_or(kUnkId);
  std::vector<TrainingExample> out;
  for (const auto& r : records) {
    const GenerationContext ctx = build_generation_context(lib.subset(truth_names(r)), r.query, vocab);
    const auto soft = stored_soft_tokens(store, r.id, cfg.provider.soft_token_count);
    TokenSeq history;
    for (const auto& call : r.ground_truth) {
      const FunctionSpec* spec = lib.find(call.function_name);
      if (!spec) throw SchemaError("unknown function \"" + call.function_name + "\"");
      const DynamicTemplate tmpl = compile_template(*spec, cfg.include_optional);
      TrainingExample ex;
      ex.context_ids = ctx.ids;
      ex.context_ids.insert(ex.context_ids.end(), history.begin(), history.end());
      ex.soft_tokens = soft;
      ex.prefix_offset = ctx.prefix_offset;
      ex.target_ids = call_to_training_sequence(tmpl, call, vocab);
      ex.mask = build_value_mask(tmpl, vocab, ex.target_ids);
      history.insert(history.end(), ex.target_ids.begin(), ex.target_ids.end());
      history.push_back(comma);
      out.push_back(std::move(ex));
    }
  }
  return out;
}

LmsBundle train_pipeline_lms(const PipelineConfig& cfg, const FunctionLibrary& lib,
                             const Vocab& vocab, const EmbeddingStore& store,
                             const std::vector<DatasetRecord>& records) {
  cfg.validate();
  if (records.empty()) throw ConfigError("lms training needs a non-empty dataset");
  LmsBundle b;
  b.projector = cfg.projector == ProjectorVariant::kLinear
                    ? Projector::create_linear(cfg.provider.dim, cfg.lm_embed_dim,
                                               derive_seed(cfg.seed, 3))
                    : Projector::create_mlp2(cfg.provider.dim, cfg.projector_hidden,
                                             cfg.lm_embed_dim, derive_seed(cfg.seed, 3));
  b.lm = TinyLM::create(vocab.size(), cfg.lm_embed_dim, cfg.lm_window, cfg.lm_hidden,
                        derive_seed(cfg.seed, 4));
  auto examples = build_lms_examples(cfg, lib, vocab, store, records);
  LmsTrainConfig lc = cfg.lms_train;
  lc.seed = derive_seed(cfg.seed, 5);
  b.curve = train_lms(examples, b.lm, b.projector, lc, cfg.selective);
  return b;
}

Artifacts offline_prepare(const PipelineConfig& cfg, const FunctionLibrary& lib,
                          const std::vector<DatasetRecord>& dataset) {
  cfg.validate();
  if (dataset.empty()) throw ConfigError("offline_prepare needs a non-empty dataset");
  auto provider = make_provider(cfg.provider);
  EmbeddingStore store = embed_corpus(*provider, lib, dataset);
  Vocab vocab = build_pipeline_vocab(lib, dataset, cfg.vocab_min_count);

  std::vector<double> retriever_curve;
  RetrieverModel retriever = train_pipeline_retriever(cfg, store, retriever_pairs(dataset), &retriever_curve);

  LmsBundle lms = train_pipeline_lms(cfg, lib, vocab, store, dataset);

  return Artifacts{cfg,
                   lib,
                   std::move(vocab),
                   std::move(store),
                   std::move(retriever),
                   std::move(lms.projector),
                   std::move(lms.lm),
                   std::move(retriever_curve),
                   std::move(lms.curve)};
}

void TinyLmGenerator::init(std::vector<Embedding> prefix, TokenSeq context_ids,
                           std::size_t prefix_offset) {
  session_.emplace(*lm_, std::move(prefix), std::move(context_ids), prefix_offset);
}

void TinyLmGenerator::append(std::span<const TokenId> ids) {
  if (!session_) throw GeneratorError("generator used before init");
  session_->append(ids);
}

TokenId TinyLmGenerator::next() {
  if (!session_) throw GeneratorError("generator used before init");
  return generate_next(*session_);
}

std::size_t TinyLmGenerator::context_length() const {
  return session_ ? session_->stream_length() : 0;
}

namespace {

std::vector<ToolCall> calls_from_traces(const std::vector<DecodeTrace>& traces,
                                        const Vocab& vocab) {
  std::vector<ToolCall> calls;
  for (const auto& t : traces) {
    ToolCall call;
    call.function_name = t.function_name;
    for (const auto& span : t.spans) {
      TokenSeq value;
      for (std::size_t i = span.begin; i < span.end; ++i) {
        if (!is_control(vocab, t.events[i].id)) value.push_back(t.events[i].id);
      }
      call.arguments.emplace_back(span.param_name, decode(vocab, value));
    }
    calls.push_back(std::move(call));
  }
  return calls;
}

}  // namespace

InferResult infer(const Artifacts& art, std::string_view query,
                  const std::vector<Embedding>& soft_tokens) {
  if (soft_tokens.empty()) throw EmptyInputError("inference needs at least one soft token");
  if (soft_tokens.size() != art.config.provider.soft_token_count) {
    throw ConfigError("expected " + std::to_string(art.config.provider.soft_token_count) +
                      " soft tokens, got " + std::to_string(soft_tokens.size()));
  }
  InferResult res;
  const FunctionIndex index = build_function_index(art.retriever, art.store, art.library);
  res.retrieval = retrieve(art.retriever, soft_tokens.front(), index);
  std::vector<std::string> selected = res.retrieval.selected;
  if (selected.size() > art.config.max_calls) selected.resize(art.config.max_calls);

  std::vector<DynamicTemplate> templates;
  for (const auto& name : selected) {
    templates.push_back(compile_template(*art.library.find(name), art.config.include_optional));
  }
  const GenerationContext ctx = build_generation_context(art.library.subset(selected), query, art.vocab);
  const auto projected = project_all(art.projector, soft_tokens);
  res.input_tokens = ctx.ids.size();

  GeneratorFactory factory = [&]() -> std::unique_ptr<Generator> {
    auto gen = std::make_unique<TinyLmGenerator>(art.lm);
    gen->init(projected, ctx.ids, ctx.prefix_offset);
    return gen;
  };
  DecodeConfig dc;
  dc.max_value_tokens = art.config.max_value_tokens;
  dc.max_calls = art.config.max_calls;
  res.traces = run_calls(factory, templates, art.vocab, dc);
  res.text = join_calls(res.traces);
  res.calls = calls_from_traces(res.traces, art.vocab);
  return res;
}

InferResult infer(const Artifacts& art, EmbeddingProvider& provider, std::string_view query,
                  std::string_view record_id) {
  return infer(art, query, provider.distill_soft_tokens(art.library, query, record_id));
}

std::optional<ToolCall> free_running_call(const Artifacts& art, std::string_view query,
                                          const std::vector<Embedding>& soft_tokens,
                                          const std::vector<std::string>& selected,
                                          std::size_t max_tokens) {
  const GenerationContext ctx = build_generation_context(art.library.subset(selected), query, art.vocab);
  LmSession session(art.lm, project_all(art.projector, soft_tokens), ctx.ids, ctx.prefix_offset);
  const TokenId close = art.vocab.find(")").value_or(kUnkId);
  TokenSeq out;
  for (std::size_t i = 0; i < max_tokens; ++i) {
    const TokenId id = generate_next(session);
    if (id == kEosId) break;
    session.append(std::span<const TokenId>(&id, 1));
    if (!is_control(art.vocab, id)) out.push_back(id);
    if (id == close) break;
  }
  return parse_call(decode(art.vocab, out));
}

ToolCall canonical_call(const ToolCall& call) {
  ToolCall c;
  c.function_name = call.function_name;
  for (const auto& [name, value] : call.arguments) {
    const auto toks = segment(value);
    c.arguments.emplace_back(name, detokenize(toks));
  }
  std::sort(c.arguments.begin(), c.arguments.end());
  return c;
}

int exact_match(const std::vector<ToolCall>& pred, const std::vector<ToolCall>& truth) {
  if (pred.size() != truth.size()) return 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (canonical_call(pred[i]) != canonical_call(truth[i])) return 0;
  }
  return 1;
}

RetrieverMetrics retriever_metrics(const std::vector<std::vector<std::string>>& selected,
                                   const std::vector<std::vector<std::string>>& truth) {
  if (selected.size() != truth.size()) throw ShapeError("one selection per truth set required");
  RetrieverMetrics m;
  if (selected.empty()) return m;
  std::size_t tp = 0, fp = 0, fn = 0, exact = 0;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    const std::set<std::string> s(selected[i].begin(), selected[i].end());
    const std::set<std::string> t(truth[i].begin(), truth[i].end());
    if (s == t) ++exact;
    for (const auto& x : s) (t.count(x) ? tp : fp) += 1;
    for (const auto& x : t) {
      if (!s.count(x)) ++fn;
    }
  }
  m.em = static_cast<double>(exact) / static_cast<double>(selected.size());
  m.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  m.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  m.f1 = m.precision + m.recall > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

TokenCounts count_tokens(const std::vector<DecodeTrace>& traces, const Vocab& vocab) {
  TokenCounts c;
  for (const auto& t : traces) {
    c.next_calls += t.next_calls;
    for (const auto& e : t.events) {
      const bool control = is_control(vocab, e.id);
      switch (e.origin) {
        case Origin::kInjected:
          ++(control ? c.control_injected : c.injected);
          break;
        case Origin::kGenerated:
          ++(control ? c.control_generated : c.generated);
          break;
        case Origin::kForced:
          ++c.forced_closes;
          break;
      }
    }
  }
  return c;
}

std::vector<RedundancyStage> redundancy_report(const std::vector<InferResult>& results,
                                               const FunctionLibrary& lib,
                                               const Vocab& vocab) {
  std::vector<std::size_t> spec_tokens;
  for (const auto& f : lib.functions()) {
    spec_tokens.push_back(encode(vocab, serialize_function_spec(f)).size());
  }
  std::size_t context = 0, generated = 0, injected = 0;
  for (const auto& r : results) {
    std::set<std::string> chosen(r.retrieval.selected.begin(), r.retrieval.selected.end());
    for (std::size_t i = 0; i < lib.size(); ++i) {
      if (!chosen.count(lib[i].name)) context += spec_tokens[i];
    }
    const TokenCounts c = count_tokens(r.traces, vocab);
    generated += c.generated;
    injected += c.injected;
  }
  return {{"Context Processing", "function embedding & retrieve", context},
          {"Full-Sequence Generation", "LM_L → LM_S", generated},
          {"Syntactic Generation", "LM_L (output) → Dynamic Template (input)", injected}};
}

std::string EvalReport::to_json() const {
  ojson j;
  j["n_records"] = n_records;
  j["call_em"] = call_em;
  j["baseline_call_em"] = baseline_call_em ? ojson(*baseline_call_em) : ojson(nullptr);
  j["retriever"] = ojson{{"em", retriever.em},
                         {"precision", retriever.precision},
                         {"recall", retriever.recall},
                         {"f1", retriever.f1}};
  j["tokens"] = ojson{{"input", tokens.input},
                      {"injected", tokens.injected},
                      {"generated", tokens.generated},
                      {"control_injected", tokens.control_injected},
                      {"control_generated", tokens.control_generated},
                      {"forced_closes", tokens.forced_closes},
                      {"next_calls", tokens.next_calls}};
  auto& red = j["redundancy"] = ojson::array();
  for (const auto& s : redundancy) {
    red.push_back(ojson{{"stage", s.stage},
                        {"mechanism", s.mechanism},
                        {"tokens_eliminated", s.tokens_eliminated}});
  }
  return j.dump(2);
}

std::string EvalReport::to_table() const {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-26s %-44s %18s\n", "Redundant Stage", "Mechanism",
                "Tokens Eliminated");
  out << line;
  for (const auto& s : redundancy) {
    std::snprintf(line, sizeof line, "%-26s %-44s %18zu\n", s.stage.c_str(), s.mechanism.c_str(),
                  s.tokens_eliminated);
    out << line;
  }
  out << "\n";
  std::snprintf(line, sizeof line, "records %zu  call_em %.4f", n_records, call_em);
  out << line;
  if (baseline_call_em) {
    std::snprintf(line, sizeof line, "  baseline_call_em %.4f", *baseline_call_em);
    out << line;
  }
  std::snprintf(line, sizeof line,
                "\nretriever em %.4f  precision %.4f  recall %.4f  f1 %.4f\n"
                "tokens input %zu  injected %zu  generated %zu\n",
                retriever.em, retriever.precision, retriever.recall, retriever.f1, tokens.input,
                tokens.injected, tokens.generated);
  out << line;
  return out.str();
}

namespace {

template <typename F>
void parallel_for(std::size_t n, std::size_t jobs, F&& body) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

EvalReport evaluate(const Artifacts& art, EmbeddingProvider& provider,
                    const std::vector<DatasetRecord>& records, const EvalOptions& opts,
                    std::vector<InferResult>* results_out) {
  if (records.empty()) throw EmptyInputError("evaluation over an empty dataset");
  std::vector<std::vector<Embedding>> soft;
  soft.reserve(records.size());
  for (const auto& r : records) {
    const FunctionLibrary subset =
        r.candidate_functions.empty() ? art.library : art.library.subset(r.candidate_functions);
    soft.push_back(provider.distill_soft_tokens(subset, r.query, r.id));
  }

  std::vector<InferResult> results(records.size());
  std::vector<int> baseline(records.size(), 0);
  parallel_for(records.size(), opts.jobs, [&](std::size_t i) {
    results[i] = infer(art, records[i].query, soft[i]);
    if (opts.baseline) {
      auto call = free_running_call(art, records[i].query, soft[i], results[i].retrieval.selected);
      std::vector<ToolCall> pred;
      if (call) pred.push_back(*call);
      baseline[i] = exact_match(pred, records[i].ground_truth);
    }
  });

  EvalReport rep;
  rep.n_records = records.size();
  std::size_t em = 0, base_em = 0;
  std::vector<std::vector<std::string>> selected, truth;
  for (std::size_t i = 0; i < records.size(); ++i) {
    em += static_cast<std::size_t>(exact_match(results[i].calls, records[i].ground_truth));
    base_em += static_cast<std::size_t>(baseline[i]);
    selected.push_back(results[i].retrieval.selected);
    truth.push_back(truth_names(records[i]));
    const TokenCounts c = count_tokens(results[i].traces, art.vocab);
    rep.tokens.input += results[i].input_tokens;
    rep.tokens.injected += c.injected;
    rep.tokens.generated += c.generated;
    rep.tokens.control_injected += c.control_injected;
    rep.tokens.control_generated += c.control_generated;
    rep.tokens.forced_closes += c.forced_closes;
    rep.tokens.next_calls += c.next_calls;
  }
  const double n = static_cast<double>(records.size());
  rep.call_em = static_cast<double>(em) / n;
  if (opts.baseline) rep.baseline_call_em = static_cast<double>(base_em) / n;
  rep.retriever = retriever_metrics(selected, truth);
  rep.redundancy = redundancy_report(results, art.library, art.vocab);
  if (results_out) *results_out = std::move(results);
  return rep;
}

}  // namespace hyfunc
