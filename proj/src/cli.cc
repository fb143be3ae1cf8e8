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

#include "hyfunc/cli.h"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>

#include "CLI11.hpp"
#include "hyfunc/errors.h"
#include "hyfunc/pipeline.h"

namespace hyfunc {

namespace {

namespace fs = std::filesystem;

struct Overrides {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string backend;
  std::size_t dim = 0;
  std::size_t k = 0;
  double noise_sigma = 0.0;
  std::string endpoint;
  std::string store_path;
  std::size_t epochs = 0;
  double alpha = 0.0;
  std::string projector;
  std::size_t max_value_tokens = 0;

  CLI::Option* seed_opt = nullptr;
  CLI::Option* backend_opt = nullptr;
  CLI::Option* dim_opt = nullptr;
  CLI::Option* k_opt = nullptr;
  CLI::Option* noise_opt = nullptr;
  CLI::Option* endpoint_opt = nullptr;
  CLI::Option* store_opt = nullptr;
  CLI::Option* epochs_opt = nullptr;
  CLI::Option* alpha_opt = nullptr;
  CLI::Option* projector_opt = nullptr;
  CLI::Option* mvt_opt = nullptr;
};

void add_config_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "JSON config file; flags take precedence")
      ->check(CLI::ExistingFile);
  o.seed_opt = cmd->add_option("--seed", o.seed, "Random seed");
}

void add_provider_flags(CLI::App* cmd, Overrides& o) {
  o.backend_opt = cmd->add_option("--backend", o.backend, "Embedding backend")
                      ->check(CLI::IsMember({"mock", "file", "http"}));
  o.dim_opt = cmd->add_option("--dim", o.dim, "Embedding dimension d");
  o.k_opt = cmd->add_option("--k", o.k, "Soft tokens per query");
  o.noise_opt = cmd->add_option("--noise-sigma", o.noise_sigma, "Mock query noise");
  o.endpoint_opt = cmd->add_option("--endpoint", o.endpoint, "HTTP provider endpoint");
  o.store_opt = cmd->add_option("--store", o.store_path, "Embedding store for the file backend");
}

PipelineConfig resolve_config(PipelineConfig base, const Overrides& o) {
  if (!o.config_path.empty()) base = PipelineConfig::from_json(read_file(o.config_path), base);
  if (o.seed_opt && o.seed_opt->count()) base.seed = o.seed;
  if (o.backend_opt && o.backend_opt->count()) {
    base.provider.backend = o.backend == "mock"   ? ProviderBackend::kMock
                            : o.backend == "file" ? ProviderBackend::kFile
                                                  : ProviderBackend::kHttp;
  }
  if (o.dim_opt && o.dim_opt->count()) base.provider.dim = o.dim;
  if (o.k_opt && o.k_opt->count()) base.provider.soft_token_count = o.k;
  if (o.noise_opt && o.noise_opt->count()) base.provider.query_noise_sigma = o.noise_sigma;
  if (o.endpoint_opt && o.endpoint_opt->count()) base.provider.endpoint = o.endpoint;
  if (o.store_opt && o.store_opt->count()) base.provider.store_path = o.store_path;
  if (o.alpha_opt && o.alpha_opt->count()) base.alpha = o.alpha;
  if (o.projector_opt && o.projector_opt->count()) {
    base.projector = o.projector == "mlp2" ? ProjectorVariant::kMlp2 : ProjectorVariant::kLinear;
  }
  if (o.mvt_opt && o.mvt_opt->count()) base.max_value_tokens = o.max_value_tokens;
  if (const char* env = std::getenv("HYFUNC_HTTP_ENDPOINT"); env && *env) {
    base.provider.endpoint = env;
  }
  base.validate();
  return base;
}

std::string need_file(const fs::path& p) {
  if (!fs::exists(p)) throw IoError("missing file " + p.string());
  return read_file(p.string());
}

PipelineConfig artifacts_config(const std::string& dir) {
  const fs::path p = fs::path(dir) / "config.json";
  if (!fs::exists(p)) return PipelineConfig{};
  return PipelineConfig::from_json(read_file(p.string()), PipelineConfig{});
}

std::vector<DatasetRecord> load_dataset(const std::string& path, const FunctionLibrary& lib) {
  return parse_dataset(need_file(path), lib);
}

class Logger {
 public:
  explicit Logger(std::ostream& err) : err_(err), start_(std::chrono::steady_clock::now()) {}
  void operator()(const std::string& msg) {
    const double s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    char stamp[32];
    std::snprintf(stamp, sizeof stamp, "[hyfunc %8.3fs] ", s);
    err_ << stamp << msg << "\n";
  }

 private:
  std::ostream& err_;
  std::chrono::steady_clock::time_point start_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"HyFunc function-calling pipeline", "hyfunc"};
  app.require_subcommand(1);
  app.fallthrough(false);
  Logger log(err);

  // gen-data
  SyntheticSpec synth;
  std::string gen_out;
  Overrides gen_o;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic library and dataset");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--n-functions", synth.n_functions, "Functions in the library");
  gen->add_option("--values", synth.value_vocab, "Size of the closed value vocabulary");
  gen->add_option("--queries", synth.queries_per_function, "Queries per function");
  gen->add_option("--min-params", synth.min_params, "Minimum parameters per function");
  gen->add_option("--max-params", synth.max_params, "Maximum parameters per function");
  gen->add_option("--test-fraction", synth.test_fraction, "Held-out share of queries");
  gen_o.seed_opt = gen->add_option("--seed", gen_o.seed, "Random seed");

  // embed
  Overrides emb_o;
  std::string emb_library, emb_dir;
  std::vector<std::string> emb_data;
  auto* emb = app.add_subcommand("embed", "Embed functions and queries into a store");
  emb->add_option("--library", emb_library, "Function library JSON")->required();
  emb->add_option("--data", emb_data, "Dataset JSON-lines files")->required();
  emb->add_option("--artifacts", emb_dir, "Artifact directory to write")->required();
  add_config_flags(emb, emb_o);
  add_provider_flags(emb, emb_o);

  // train-retriever
  Overrides tr_o;
  std::string tr_dir, tr_data, tr_pairs, tr_store, tr_out;
  double tr_tau = 0.07;
  auto* tr = app.add_subcommand("train-retriever", "Train the dual-encoder retriever");
  tr->add_option("--artifacts", tr_dir, "Artifact directory (default source and target)");
  tr->add_option("--data", tr_data, "Training dataset; pairs are derived from ground truth");
  tr->add_option("--pairs", tr_pairs, "JSON-lines {query_key, function_key} pairs");
  tr->add_option("--store", tr_store, "Embedding store (default <artifacts>/store.jsonl)");
  tr->add_option("--out", tr_out, "Checkpoint path (default <artifacts>/retriever.bin)");
  tr_o.epochs_opt = tr->add_option("--epochs", tr_o.epochs, "Training epochs");
  tr_o.alpha_opt = tr->add_option("--alpha", tr_o.alpha, "Selection threshold");
  auto* tau_opt = tr->add_option("--tau", tr_tau, "InfoNCE temperature");
  add_config_flags(tr, tr_o);

  // train-lms
  Overrides tl_o;
  std::string tl_dir, tl_corpus, tl_out;
  bool tl_selective = false;
  auto* tl = app.add_subcommand("train-lms", "Train the projector and small model");
  tl->add_option("--artifacts", tl_dir, "Artifact directory")->required();
  tl->add_option("--corpus", tl_corpus, "Training dataset")->required();
  tl->add_option("--out", tl_out, "Model checkpoint path (default <artifacts>/lms.bin)");
  tl->add_flag("--selective", tl_selective, "Mask the loss to parameter values");
  tl_o.epochs_opt = tl->add_option("--epochs", tl_o.epochs, "Training epochs");
  tl_o.projector_opt = tl->add_option("--projector", tl_o.projector, "Projector variant")
                           ->check(CLI::IsMember({"linear", "mlp2"}));
  add_config_flags(tl, tl_o);

  // infer
  Overrides in_o;
  std::string in_dir, in_query, in_id = "query";
  bool in_trace = false;
  auto* inf = app.add_subcommand("infer", "Answer one query with function calls");
  inf->add_option("--artifacts", in_dir, "Artifact directory")->required();
  inf->add_option("--query", in_query, "User query")->required();
  inf->add_option("--id", in_id, "Record id (file backend key)");
  inf->add_flag("--trace", in_trace, "Print decode traces as JSON lines");
  in_o.mvt_opt = inf->add_option("--max-value-tokens", in_o.max_value_tokens, "Value length guard");
  add_config_flags(inf, in_o);
  add_provider_flags(inf, in_o);

  // eval
  Overrides ev_o;
  std::string ev_dir, ev_test, ev_report;
  std::size_t ev_jobs = 1;
  bool ev_baseline = false;
  auto* ev = app.add_subcommand("eval", "Evaluate on a held-out dataset");
  ev->add_option("--artifacts", ev_dir, "Artifact directory")->required();
  ev->add_option("--test", ev_test, "Test dataset")->required();
  ev->add_option("--report", ev_report, "Write the JSON report here");
  ev->add_option("--jobs", ev_jobs, "Parallel records")->check(CLI::PositiveNumber);
  ev->add_flag("--baseline", ev_baseline, "Also score free-running generation");
  add_config_flags(ev, ev_o);
  add_provider_flags(ev, ev_o);

  // bench
  Overrides bn_o;
  SyntheticSpec bn_synth;
  std::string bn_report, bn_artifacts;
  std::size_t bn_jobs = 1;
  auto* bn = app.add_subcommand("bench", "Run the synthetic pipeline end to end with timings");
  bn->add_option("--n-functions", bn_synth.n_functions, "Functions in the library");
  bn->add_option("--queries", bn_synth.queries_per_function, "Queries per function");
  bn->add_option("--values", bn_synth.value_vocab, "Size of the closed value vocabulary");
  bn->add_option("--jobs", bn_jobs, "Parallel records")->check(CLI::PositiveNumber);
  bn->add_option("--report", bn_report, "Write the JSON report here");
  bn->add_option("--artifacts", bn_artifacts, "Also save artifacts here");
  bn_o.epochs_opt = bn->add_option("--lms-epochs", bn_o.epochs, "Small-model epochs");
  add_config_flags(bn, bn_o);

  // template
  std::string tp_library, tp_function;
  bool tp_optional = false;
  auto* tp = app.add_subcommand("template", "Show the dynamic template of a function");
  tp->add_option("--library", tp_library, "Function library JSON")->required();
  tp->add_option("--function", tp_function, "Function name (default: all)");
  tp->add_flag("--include-optional", tp_optional, "Include optional parameters");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 1;
  }

  try {
    if (*gen) {
      const SyntheticCorpus c = generate_synthetic(synth, gen_o.seed);
      fs::create_directories(gen_out);
      write_file((fs::path(gen_out) / "library.json").string(),
                 serialize_function_library(c.library) + "\n");
      write_file((fs::path(gen_out) / "train.jsonl").string(), serialize_dataset(c.train));
      write_file((fs::path(gen_out) / "test.jsonl").string(), serialize_dataset(c.test));
      log("wrote " + std::to_string(c.library.size()) + " functions, " +
          std::to_string(c.train.size()) + " train and " + std::to_string(c.test.size()) +
          " test records to " + gen_out);
      return 0;
    }

    if (*emb) {
      PipelineConfig cfg = resolve_config(PipelineConfig{}, emb_o);
      const FunctionLibrary lib = parse_function_library(need_file(emb_library));
      std::vector<DatasetRecord> records;
      for (const auto& path : emb_data) {
        auto part = load_dataset(path, lib);
        records.insert(records.end(), part.begin(), part.end());
      }
      auto provider = make_provider(cfg.provider);
      const EmbeddingStore store = embed_corpus(*provider, lib, records);
      fs::create_directories(emb_dir);
      store.save((fs::path(emb_dir) / "store.jsonl").string());
      write_file((fs::path(emb_dir) / "library.json").string(),
                 serialize_function_library(lib) + "\n");
      write_file((fs::path(emb_dir) / "config.json").string(), cfg.to_json() + "\n");
      log("embedded " + std::to_string(lib.size()) + " functions and " +
          std::to_string(records.size()) + " queries");
      return 0;
    }

    if (*tr) {
      if (tr_dir.empty() && (tr_store.empty() || tr_out.empty())) {
        throw ConfigError("train-retriever needs --artifacts or both --store and --out");
      }
      if (tr_data.empty() == tr_pairs.empty()) {
        throw ConfigError("train-retriever needs exactly one of --data and --pairs");
      }
      PipelineConfig cfg = resolve_config(tr_dir.empty() ? PipelineConfig{} : artifacts_config(tr_dir), tr_o);
      if (tr_o.epochs_opt->count()) cfg.retriever_train.epochs = tr_o.epochs;
      if (tau_opt->count()) cfg.tau = tr_tau;
      cfg.validate();
      const fs::path dir(tr_dir);
      const fs::path store_path = tr_store.empty() ? dir / "store.jsonl" : fs::path(tr_store);
      need_file(store_path);
      const EmbeddingStore store = EmbeddingStore::load(store_path.string());
      std::vector<TrainingPair> pairs;
      if (!tr_pairs.empty()) {
        pairs = parse_pairs(need_file(tr_pairs));
      } else {
        if (tr_dir.empty()) throw ConfigError("--data needs --artifacts for the library");
        const FunctionLibrary lib = parse_function_library(need_file(dir / "library.json"));
        pairs = retriever_pairs(load_dataset(tr_data, lib));
      }
      std::vector<double> curve;
      const RetrieverModel model = train_pipeline_retriever(cfg, store, pairs, &curve);
      model.to_checkpoint().save(tr_out.empty() ? (dir / "retriever.bin").string() : tr_out);
      if (!tr_dir.empty()) write_file((dir / "config.json").string(), cfg.to_json() + "\n");
      log("retriever loss " + std::to_string(curve.front()) + " -> " +
          std::to_string(curve.back()));
      return 0;
    }

    if (*tl) {
      PipelineConfig cfg = resolve_config(artifacts_config(tl_dir), tl_o);
      if (tl_o.epochs_opt->count()) cfg.lms_train.epochs = tl_o.epochs;
      cfg.selective = tl_selective;
      const fs::path dir(tl_dir);
      const FunctionLibrary lib = parse_function_library(need_file(dir / "library.json"));
      need_file(dir / "store.jsonl");
      const EmbeddingStore store = EmbeddingStore::load((dir / "store.jsonl").string());
      const auto records = load_dataset(tl_corpus, lib);
      const Vocab vocab = build_pipeline_vocab(lib, records, cfg.vocab_min_count);
      const LmsBundle b = train_pipeline_lms(cfg, lib, vocab, store, records);
      write_file((dir / "vocab.json").string(), vocab.to_json() + "\n");
      b.projector.to_checkpoint().save((dir / "projector.bin").string());
      b.lm.to_checkpoint().save(tl_out.empty() ? (dir / "lms.bin").string() : tl_out);
      write_file((dir / "config.json").string(), cfg.to_json() + "\n");
      log("lms loss " + std::to_string(b.curve.front()) + " -> " + std::to_string(b.curve.back()));
      return 0;
    }

    if (*inf) {
      Artifacts art = Artifacts::load(in_dir);
      art.config = resolve_config(art.config, in_o);
      auto provider = make_provider(art.config.provider);
      const InferResult r = infer(art, *provider, in_query, in_id);
      out << r.text << "\n";
      if (in_trace) {
        for (const auto& t : r.traces) out << t.to_json(art.vocab) << "\n";
      }
      return 0;
    }

    if (*ev) {
      Artifacts art = Artifacts::load(ev_dir);
      art.config = resolve_config(art.config, ev_o);
      const auto records = load_dataset(ev_test, art.library);
      auto provider = make_provider(art.config.provider);
      const auto t0 = std::chrono::steady_clock::now();
      const EvalReport rep = evaluate(art, *provider, records, {ev_jobs, ev_baseline});
      log("evaluated " + std::to_string(records.size()) + " records in " +
          std::to_string(seconds_since(t0)) + " s");
      if (!ev_report.empty()) write_file(ev_report, rep.to_json() + "\n");
      out << rep.to_table();
      return 0;
    }

    if (*bn) {
      PipelineConfig cfg = resolve_config(PipelineConfig{}, bn_o);
      if (bn_o.epochs_opt->count()) cfg.lms_train.epochs = bn_o.epochs;
      cfg.provider.query_noise_sigma = bn_synth.noise_sigma;
      auto t0 = std::chrono::steady_clock::now();
      const SyntheticCorpus c = generate_synthetic(bn_synth, cfg.seed);
      const double t_gen = seconds_since(t0);
      t0 = std::chrono::steady_clock::now();
      const Artifacts art = offline_prepare(cfg, c.library, c.train);
      const double t_prep = seconds_since(t0);
      if (!bn_artifacts.empty()) art.save(bn_artifacts);
      auto provider = make_provider(cfg.provider);
      t0 = std::chrono::steady_clock::now();
      const EvalReport rep = evaluate(art, *provider, c.test, {bn_jobs, true});
      const double t_eval = seconds_since(t0);
      if (!bn_report.empty()) write_file(bn_report, rep.to_json() + "\n");
      out << rep.to_table() << "\n";
      char line[200];
      std::snprintf(line, sizeof line,
                    "timing gen-data %.3f s  offline %.3f s  eval %.3f s  (%.2f ms/query)\n",
                    t_gen, t_prep, t_eval, 1e3 * t_eval / static_cast<double>(c.test.size()));
      out << line;
      return 0;
    }

    if (*tp) {
      const FunctionLibrary lib = parse_function_library(need_file(tp_library));
      if (!tp_function.empty()) {
        const FunctionSpec* spec = lib.find(tp_function);
        if (!spec) throw SchemaError("unknown function \"" + tp_function + "\"");
        out << compile_template(*spec, tp_optional).to_json() << "\n";
        return 0;
      }
      for (const auto& f : lib.functions()) out << compile_template(f, tp_optional).text() << "\n";
      return 0;
    }
  } catch (const ParseError& e) {
    err << "error: " << e.what() << (e.is_line() ? " (line " : " (byte ") << e.position()
        << ")\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace hyfunc
