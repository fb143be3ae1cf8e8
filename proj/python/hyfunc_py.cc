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

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hyfunc/cli.h"
#include "hyfunc/errors.h"
#include "hyfunc/pipeline.h"
#include "hyfunc/retriever.h"
#include "hyfunc/schema.h"
#include "hyfunc/template.h"

namespace py = pybind11;

namespace {

using namespace hyfunc;

std::vector<ToolCall> parse_calls(const std::vector<std::string>& texts) {
  std::vector<ToolCall> out;
  for (const auto& t : texts) {
    auto c = parse_call(t);
    if (!c) throw SchemaError("not a function call: " + t);
    out.push_back(*c);
  }
  return out;
}

Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return Matrix();
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.cols()) throw ShapeError("ragged rows");
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

class PyPipeline {
 public:
  static PyPipeline prepare(const std::string& library_json, const std::string& train_jsonl,
                            const std::string& config_json) {
    PipelineConfig cfg = config_json.empty() ? PipelineConfig{}
                                             : PipelineConfig::from_json(config_json, PipelineConfig{});
    const FunctionLibrary lib = parse_function_library(library_json);
    const auto records = parse_dataset(train_jsonl, lib);
    PyPipeline p;
    {
      py::gil_scoped_release release;
      p.art_ = std::make_shared<Artifacts>(offline_prepare(cfg, lib, records));
    }
    p.provider_ = make_provider(p.art_->config.provider);
    return p;
  }

  static PyPipeline load(const std::string& dir) {
    PyPipeline p;
    p.art_ = std::make_shared<Artifacts>(Artifacts::load(dir));
    p.provider_ = make_provider(p.art_->config.provider);
    return p;
  }

  void save(const std::string& dir) const { art_->save(dir); }

  py::dict infer(const std::string& query, const std::string& record_id) {
    InferResult r;
    {
      py::gil_scoped_release release;
      r = hyfunc::infer(*art_, *provider_, query, record_id);
    }
    py::dict d;
    d["text"] = r.text;
    d["selected"] = r.retrieval.selected;
    d["fallback"] = r.retrieval.fallback_used;
    std::vector<std::string> calls;
    for (const auto& c : r.calls) calls.push_back(serialize_call(c));
    d["calls"] = calls;
    return d;
  }

  std::string evaluate(const std::string& test_jsonl, std::size_t jobs, bool baseline) {
    const auto records = parse_dataset(test_jsonl, art_->library);
    py::gil_scoped_release release;
    return hyfunc::evaluate(*art_, *provider_, records, {jobs, baseline}).to_json();
  }

  std::string config_json() const { return art_->config.to_json(); }
  std::vector<double> retriever_curve() const { return art_->retriever_curve; }
  std::vector<double> lms_curve() const { return art_->lms_curve; }

 private:
  std::shared_ptr<Artifacts> art_;
  std::shared_ptr<EmbeddingProvider> provider_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "HyFunc core bindings";
  static py::exception<hyfunc::Error> error(m, "HyfuncError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const hyfunc::Error& e) {
      py::set_error(error, e.what());
    }
  });

  m.def(
      "compile_template",
      [](const std::string& library_json, const std::string& name, bool include_optional) {
        const auto lib = hyfunc::parse_function_library(library_json);
        const auto* spec = lib.find(name);
        if (!spec) throw hyfunc::SchemaError("unknown function \"" + name + "\"");
        return hyfunc::compile_template(*spec, include_optional).text();
      },
      py::arg("library_json"), py::arg("name"), py::arg("include_optional") = false,
      "Canonical dynamic template text of one library function.");

  m.def(
      "validate_output",
      [](const std::string& library_json, const std::string& name, const std::string& output,
         bool include_optional) {
        const auto lib = hyfunc::parse_function_library(library_json);
        const auto* spec = lib.find(name);
        if (!spec) throw hyfunc::SchemaError("unknown function \"" + name + "\"");
        return hyfunc::validate_output(hyfunc::compile_template(*spec, include_optional), output);
      },
      py::arg("library_json"), py::arg("name"), py::arg("output"), py::arg("include_optional") = false,
      "Slot values of `output` matched against the function's template.");

  m.def(
      "serialize_call",
      [](const std::string& name, const std::vector<std::pair<std::string, std::string>>& args) {
        return hyfunc::serialize_call(hyfunc::ToolCall{name, args});
      },
      py::arg("name"), py::arg("arguments"));

  m.def(
      "exact_match",
      [](const std::vector<std::string>& pred, const std::vector<std::string>& truth) {
        return hyfunc::exact_match(parse_calls(pred), parse_calls(truth));
      },
      py::arg("pred"), py::arg("truth"), "1 if the call lists match exactly, else 0.");

  m.def(
      "infonce_loss",
      [](const std::vector<std::vector<double>>& queries,
         const std::vector<std::vector<double>>& functions, double tau) {
        return hyfunc::infonce_loss(to_matrix(queries), to_matrix(functions), tau).loss;
      },
      py::arg("queries"), py::arg("functions"), py::arg("tau") = 0.07);

  m.def(
      "generate_synthetic",
      [](std::size_t n_functions, std::size_t queries_per_function, std::size_t value_vocab,
         std::uint64_t seed) {
        hyfunc::SyntheticSpec spec;
        spec.n_functions = n_functions;
        spec.queries_per_function = queries_per_function;
        spec.value_vocab = value_vocab;
        const auto c = hyfunc::generate_synthetic(spec, seed);
        py::dict d;
        d["library"] = hyfunc::serialize_function_library(c.library);
        d["train"] = hyfunc::serialize_dataset(c.train);
        d["test"] = hyfunc::serialize_dataset(c.test);
        return d;
      },
      py::arg("n_functions") = 50, py::arg("queries_per_function") = 20, py::arg("value_vocab") = 20,
      py::arg("seed") = 0);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<std::string> argv = {"hyfunc"};
        argv.insert(argv.end(), args.begin(), args.end());
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = hyfunc::dispatch(argv, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run a CLI subcommand; returns (exit_code, stdout, stderr).");

  py::class_<PyPipeline>(m, "Pipeline")
      .def_static("prepare", &PyPipeline::prepare, py::arg("library_json"), py::arg("train_jsonl"),
                  py::arg("config_json") = "")
      .def_static("load", &PyPipeline::load, py::arg("directory"))
      .def("save", &PyPipeline::save, py::arg("directory"))
      .def("infer", &PyPipeline::infer, py::arg("query"), py::arg("record_id") = "query")
      .def("evaluate", &PyPipeline::evaluate, py::arg("test_jsonl"), py::arg("jobs") = 1,
           py::arg("baseline") = false)
      .def_property_readonly("config_json", &PyPipeline::config_json)
      .def_property_readonly("retriever_curve", &PyPipeline::retriever_curve)
      .def_property_readonly("lms_curve", &PyPipeline::lms_curve);
}
