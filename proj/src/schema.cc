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

#include "hyfunc/schema.h"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "hyfunc/errors.h"
#include "json.hpp"
#include "prompt_assets.h"

namespace hyfunc {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::pair<ParamType, std::string_view> kTypeNames[] = {
    {ParamType::kString, "string"},   {ParamType::kInteger, "integer"},
    {ParamType::kNumber, "number"},   {ParamType::kBoolean, "boolean"},
    {ParamType::kArray, "array"},     {ParamType::kObject, "object"},
    {ParamType::kEnum, "enum"},
};

std::string require_string(const ordered_json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(where + ": missing key \"" + key + "\"");
  if (!it->is_string()) throw SchemaError(where + ": key \"" + key + "\" must be a string");
  return it->get<std::string>();
}

std::string optional_string(const ordered_json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_string()) throw SchemaError(where + ": key \"" + key + "\" must be a string");
  return it->get<std::string>();
}

ParamSpec param_from_json(const ordered_json& j, const std::string& fn) {
  if (!j.is_object()) throw SchemaError("function " + fn + ": parameter must be an object");
  ParamSpec p;
  p.name = require_string(j, "name", "function " + fn);
  const std::string where = "parameter " + fn + "." + p.name;
  p.type = parse_param_type(require_string(j, "type", where));
  p.description = optional_string(j, "description", where);
  if (auto it = j.find("required"); it != j.end()) {
    if (!it->is_boolean()) throw SchemaError(where + ": \"required\" must be a boolean");
    p.required = it->get<bool>();
  }
  if (auto it = j.find("enum"); it != j.end()) {
    if (!it->is_array()) throw SchemaError(where + ": \"enum\" must be an array");
    for (const auto& v : *it) {
      if (!v.is_string()) throw SchemaError(where + ": enum values must be strings");
      p.enum_values.push_back(v.get<std::string>());
    }
  }
  return p;
}

FunctionSpec spec_from_json(const ordered_json& j, std::size_t index) {
  if (!j.is_object()) {
    throw SchemaError("function #" + std::to_string(index) + " must be an object");
  }
  FunctionSpec spec;
  spec.name = require_string(j, "name", "function #" + std::to_string(index));
  spec.description = optional_string(j, "description", "function " + spec.name);
  if (auto it = j.find("parameters"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw SchemaError("function " + spec.name + ": parameters must be an array");
    for (const auto& pj : *it) spec.parameters.push_back(param_from_json(pj, spec.name));
  }
  return spec;
}

ordered_json spec_to_json(const FunctionSpec& spec) {
  ordered_json params = ordered_json::array();
  for (const auto& p : spec.parameters) {
    ordered_json pj;
    pj["name"] = p.name;
    pj["type"] = std::string(param_type_name(p.type));
    pj["description"] = p.description;
    pj["required"] = p.required;
    if (p.type == ParamType::kEnum) pj["enum"] = p.enum_values;
    params.push_back(std::move(pj));
  }
  ordered_json j;
  j["name"] = spec.name;
  j["description"] = spec.description;
  j["parameters"] = std::move(params);
  return j;
}

ordered_json parse_json_or_throw(std::string_view text) {
  try {
    return ordered_json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), e.byte, false);
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string_view param_type_name(ParamType type) {
  for (const auto& [t, name] : kTypeNames) {
    if (t == type) return name;
  }
  return "string";
}

ParamType parse_param_type(std::string_view tag) {
  for (const auto& [t, name] : kTypeNames) {
    if (name == tag) return t;
  }
  throw SchemaError("unknown parameter type \"" + std::string(tag) + "\"");
}

bool is_identifier(std::string_view name) {
  if (name.empty()) return false;
  auto head = static_cast<unsigned char>(name.front());
  if (!(std::isalpha(head) || head == '_')) return false;
  return std::all_of(name.begin() + 1, name.end(), [](char c) {
    auto u = static_cast<unsigned char>(c);
    return std::isalnum(u) || u == '_' || u == '.';
  });
}

const ParamSpec* FunctionSpec::find_param(std::string_view param_name) const {
  for (const auto& p : parameters) {
    if (p.name == param_name) return &p;
  }
  return nullptr;
}

void validate_function_spec(const FunctionSpec& spec) {
  if (!is_identifier(spec.name)) {
    throw SchemaError("invalid function name \"" + spec.name + "\"");
  }
  std::set<std::string_view> seen;
  for (const auto& p : spec.parameters) {
    if (p.name.empty()) throw SchemaError("function " + spec.name + ": empty parameter name");
    if (!seen.insert(p.name).second) {
      throw SchemaError("function " + spec.name + ": duplicate parameter \"" + p.name + "\"");
    }
    const bool is_enum = p.type == ParamType::kEnum;
    if (is_enum && p.enum_values.empty()) {
      throw SchemaError("parameter " + spec.name + "." + p.name + ": enum without values");
    }
    if (!is_enum && !p.enum_values.empty()) {
      throw SchemaError("parameter " + spec.name + "." + p.name + ": enum values on non-enum type");
    }
  }
}

FunctionLibrary::FunctionLibrary(std::vector<FunctionSpec> functions)
    : functions_(std::move(functions)) {
  if (functions_.empty()) throw SchemaError("function library must contain at least one function");
  std::set<std::string_view> seen;
  for (const auto& f : functions_) {
    validate_function_spec(f);
    if (!seen.insert(f.name).second) {
      throw SchemaError("duplicate function name \"" + f.name + "\"");
    }
  }
}

const FunctionSpec* FunctionLibrary::find(std::string_view name) const {
  auto idx = index_of(name);
  return idx ? &functions_[*idx] : nullptr;
}

std::optional<std::size_t> FunctionLibrary::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < functions_.size(); ++i) {
    if (functions_[i].name == name) return i;
  }
  return std::nullopt;
}

FunctionLibrary FunctionLibrary::subset(const std::vector<std::string>& names) const {
  std::vector<FunctionSpec> out;
  out.reserve(names.size());
  for (const auto& n : names) {
    const FunctionSpec* f = find(n);
    if (f == nullptr) throw SchemaError("unknown function \"" + n + "\"");
    out.push_back(*f);
  }
  return FunctionLibrary(std::move(out));
}

void validate_tool_call(const ToolCall& call) {
  std::set<std::string_view> seen;
  for (const auto& [name, value] : call.arguments) {
    if (!seen.insert(name).second) {
      throw SchemaError("call " + call.function_name + ": argument \"" + name + "\" given twice");
    }
  }
}

PromptTemplate PromptTemplate::builtin(PromptKind kind) {
  if (kind == PromptKind::kLmlDistill) {
    return {kind, std::string(assets::kLmlDistillPrompt)};
  }
  return {kind, std::string(assets::kLmsGeneratePrompt)};
}

void validate_prompt_template(const PromptTemplate& tmpl) {
  auto need = [&](std::string_view s) {
    if (tmpl.body.find(s) == std::string::npos) {
      throw TemplateError("prompt template lacks \"" + std::string(s) + "\"");
    }
  };
  need("{functions}");
  if (tmpl.kind == PromptKind::kLmlDistill) {
    need("{question}");
  } else {
    need("{query}");
    need("{response}");
    need("<soft_token>");
    need("</soft_token>");
    need("<param>");
    need("</param>");
  }
}

FunctionLibrary parse_function_library(std::string_view json_text) {
  ordered_json doc = parse_json_or_throw(json_text);
  if (!doc.is_array()) throw SchemaError("function library must be a JSON array");
  std::vector<FunctionSpec> specs;
  specs.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) specs.push_back(spec_from_json(doc[i], i));
  return FunctionLibrary(std::move(specs));
}

std::string serialize_function_spec(const FunctionSpec& spec) { return spec_to_json(spec).dump(); }

std::string serialize_function_library(const FunctionLibrary& lib) {
  ordered_json arr = ordered_json::array();
  for (const auto& f : lib.functions()) arr.push_back(spec_to_json(f));
  return arr.dump();
}

std::vector<DatasetRecord> parse_dataset(std::string_view jsonl_text, const FunctionLibrary& lib) {
  std::vector<DatasetRecord> records;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= jsonl_text.size()) {
    std::size_t end = jsonl_text.find('\n', pos);
    if (end == std::string_view::npos) end = jsonl_text.size();
    std::string_view line = trim(jsonl_text.substr(pos, end - pos));
    ++line_no;
    pos = end + 1;
    if (line.empty()) continue;

    ordered_json j;
    try {
      j = ordered_json::parse(line.begin(), line.end());
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what(), line_no, true);
    }
    if (!j.is_object()) {
      throw ParseError("line " + std::to_string(line_no) + ": record must be an object", line_no,
                       true);
    }
    const std::string where = "line " + std::to_string(line_no);
    DatasetRecord rec;
    rec.id = require_string(j, "id", where);
    rec.query = require_string(j, "query", "record " + rec.id);
    const std::string rwhere = "record " + rec.id;

    if (auto it = j.find("candidate_functions"); it != j.end()) {
      if (!it->is_array()) throw SchemaError(rwhere + ": candidate_functions must be an array");
      for (const auto& c : *it) {
        if (!c.is_string()) throw SchemaError(rwhere + ": candidate names must be strings");
        std::string name = c.get<std::string>();
        if (!lib.find(name)) throw SchemaError(rwhere + ": unknown function \"" + name + "\"");
        rec.candidate_functions.push_back(std::move(name));
      }
    }
    auto gt = j.find("ground_truth");
    if (gt == j.end() || !gt->is_array()) {
      throw SchemaError(rwhere + ": ground_truth must be an array");
    }
    for (const auto& cj : *gt) {
      if (!cj.is_object()) throw SchemaError(rwhere + ": ground-truth call must be an object");
      ToolCall call;
      call.function_name = require_string(cj, "name", rwhere);
      const FunctionSpec* spec = lib.find(call.function_name);
      if (!spec) {
        throw SchemaError(rwhere + ": unknown function \"" + call.function_name + "\"");
      }
      if (auto args = cj.find("arguments"); args != cj.end() && !args->is_null()) {
        if (!args->is_object()) throw SchemaError(rwhere + ": arguments must be an object");
        for (const auto& [key, value] : args->items()) {
          if (!spec->find_param(key)) {
            throw SchemaError(rwhere + ": function " + spec->name + " has no parameter \"" + key +
                              "\"");
          }
          call.arguments.emplace_back(key, value.is_string() ? value.get<std::string>()
                                                             : value.dump());
        }
      }
      validate_tool_call(call);
      rec.ground_truth.push_back(std::move(call));
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::string serialize_dataset(const std::vector<DatasetRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    ordered_json j;
    j["id"] = r.id;
    j["query"] = r.query;
    j["candidate_functions"] = r.candidate_functions;
    ordered_json gt = ordered_json::array();
    for (const auto& c : r.ground_truth) {
      ordered_json args = ordered_json::object();
      for (const auto& [k, v] : c.arguments) args[k] = v;
      ordered_json cj;
      cj["name"] = c.function_name;
      cj["arguments"] = std::move(args);
      gt.push_back(std::move(cj));
    }
    j["ground_truth"] = std::move(gt);
    out += j.dump();
    out += '\n';
  }
  return out;
}

namespace {

struct Substitutions {
  std::optional<std::string> functions;
  std::optional<std::string_view> query;
  std::optional<std::string_view> response;
};

std::string substitute(std::string_view body, const Substitutions& subs) {
  std::string out;
  out.reserve(body.size() + 256);
  for (std::size_t i = 0; i < body.size();) {
    char c = body[i];
    if (c == '{' && i + 1 < body.size() && body[i + 1] == '{') {
      out += '{';
      i += 2;
      continue;
    }
    if (c == '}' && i + 1 < body.size() && body[i + 1] == '}') {
      out += '}';
      i += 2;
      continue;
    }
    if (c == '{') {
      std::size_t close = body.find('}', i + 1);
      if (close != std::string_view::npos) {
        std::string_view name = body.substr(i + 1, close - i - 1);
        const std::optional<std::string_view>* slot = nullptr;
        std::optional<std::string_view> fn_view;
        if (name == "functions") {
          if (subs.functions) fn_view = *subs.functions;
          slot = &fn_view;
        } else if (name == "question" || name == "query") {
          slot = &subs.query;
        } else if (name == "response") {
          slot = &subs.response;
        }
        if (slot != nullptr) {
          if (!slot->has_value()) {
            throw TemplateError("no value supplied for {" + std::string(name) + "}");
          }
          out += **slot;
          i = close + 1;
          continue;
        }
      }
    }
    out += c;
    ++i;
  }
  return out;
}

}  // namespace

std::string render_prompt(const PromptTemplate& tmpl, const FunctionLibrary& lib_subset,
                          std::string_view query, std::optional<std::string_view> response) {
  validate_prompt_template(tmpl);
  if (tmpl.kind == PromptKind::kLmsGenerate && !response) {
    throw TemplateError("lms_generate prompt requires a response");
  }
  return substitute(tmpl.body, {serialize_function_library(lib_subset), query, response});
}

std::string render_generation_context(const PromptTemplate& tmpl,
                                      const FunctionLibrary& lib_subset,
                                      std::string_view query) {
  validate_prompt_template(tmpl);
  if (tmpl.kind != PromptKind::kLmsGenerate) {
    throw TemplateError("generation context needs an lms_generate template");
  }
  std::string_view head(tmpl.body);
  head = head.substr(0, head.find("{response}"));
  return substitute(head, {serialize_function_library(lib_subset), query, std::nullopt});
}

std::string serialize_call(const ToolCall& call) {
  std::string out = call.function_name;
  out += '(';
  for (std::size_t i = 0; i < call.arguments.size(); ++i) {
    if (i > 0) out += ", ";
    out += call.arguments[i].first;
    out += '=';
    out += call.arguments[i].second;
  }
  out += ')';
  return out;
}

std::string serialize_calls(const std::vector<ToolCall>& calls) {
  std::string out = "[";
  for (std::size_t i = 0; i < calls.size(); ++i) {
    if (i > 0) out += ", ";
    out += serialize_call(calls[i]);
  }
  out += ']';
  return out;
}

std::optional<ToolCall> parse_call(std::string_view text) {
  text = trim(text);
  std::size_t open = text.find('(');
  if (open == std::string_view::npos || text.empty() || text.back() != ')') return std::nullopt;
  ToolCall call;
  call.function_name = std::string(trim(text.substr(0, open)));
  if (!is_identifier(call.function_name)) return std::nullopt;
  std::string_view body = text.substr(open + 1, text.size() - open - 2);
  if (trim(body).empty()) return call;

  // Split on top-level commas; quotes and brackets nest.
  std::vector<std::string_view> parts;
  int depth = 0;
  char quote = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < body.size(); ++i) {
    char c = body[i];
    if (quote) {
      if (c == '\\') {
        ++i;
      } else if (c == quote) {
        quote = 0;
      }
      continue;
    }
    if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '(' || c == '[' || c == '{') {
      ++depth;
    } else if (c == ')' || c == ']' || c == '}') {
      if (--depth < 0) return std::nullopt;
    } else if (c == ',' && depth == 0) {
      parts.push_back(body.substr(start, i - start));
      start = i + 1;
    }
  }
  if (quote || depth != 0) return std::nullopt;
  parts.push_back(body.substr(start));

  std::set<std::string> seen;
  for (auto part : parts) {
    std::size_t eq = part.find('=');
    if (eq == std::string_view::npos) return std::nullopt;
    std::string name(trim(part.substr(0, eq)));
    if (!is_identifier(name) || !seen.insert(name).second) return std::nullopt;
    call.arguments.emplace_back(std::move(name), std::string(trim(part.substr(eq + 1))));
  }
  return call;
}

}  // namespace hyfunc
