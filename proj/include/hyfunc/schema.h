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

#ifndef HYFUNC_SCHEMA_H_
#define HYFUNC_SCHEMA_H_

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace hyfunc {

enum class ParamType { kString, kInteger, kNumber, kBoolean, kArray, kObject, kEnum };

std::string_view param_type_name(ParamType type);
// Throws SchemaError for an unknown tag.
ParamType parse_param_type(std::string_view tag);

struct ParamSpec {
  std::string name;
  ParamType type = ParamType::kString;
  std::string description;
  bool required = true;
  // Non-empty iff type == kEnum.
  std::vector<std::string> enum_values;

  bool operator==(const ParamSpec&) const = default;
};

struct FunctionSpec {
  std::string name;
  std::string description;
  std::vector<ParamSpec> parameters;

  const ParamSpec* find_param(std::string_view param_name) const;
  bool operator==(const FunctionSpec&) const = default;
};

// Throws SchemaError when the spec breaks a naming or uniqueness rule.
void validate_function_spec(const FunctionSpec& spec);

bool is_identifier(std::string_view name);

// Ordered, non-empty set of uniquely named functions. Immutable once built.
class FunctionLibrary {
 public:
  explicit FunctionLibrary(std::vector<FunctionSpec> functions);

  const std::vector<FunctionSpec>& functions() const { return functions_; }
  std::size_t size() const { return functions_.size(); }
  const FunctionSpec& operator[](std::size_t i) const { return functions_[i]; }

  const FunctionSpec* find(std::string_view name) const;
  // Library position of `name`, or nullopt.
  std::optional<std::size_t> index_of(std::string_view name) const;
  // Sub-library in the order the names are given. Throws SchemaError on an
  // unknown name.
  FunctionLibrary subset(const std::vector<std::string>& names) const;

  bool operator==(const FunctionLibrary&) const = default;

 private:
  std::vector<FunctionSpec> functions_;
};

struct ToolCall {
  std::string function_name;
  // Values are literal source text, so string values keep their quotes.
  std::vector<std::pair<std::string, std::string>> arguments;

  bool operator==(const ToolCall&) const = default;
};

void validate_tool_call(const ToolCall& call);

struct DatasetRecord {
  std::string id;
  std::string query;
  std::vector<std::string> candidate_functions;
  std::vector<ToolCall> ground_truth;

  bool operator==(const DatasetRecord&) const = default;
};

enum class PromptKind { kLmlDistill, kLmsGenerate };

struct PromptTemplate {
  PromptKind kind;
  std::string body;

  // The shipped template text for `kind`.
  static PromptTemplate builtin(PromptKind kind);
};

// Throws TemplateError if `tmpl.body` lacks a placeholder or tag its kind
// requires.
void validate_prompt_template(const PromptTemplate& tmpl);

FunctionLibrary parse_function_library(std::string_view json_text);
// Canonical JSON form: keys name/description/parameters, parameters with
// name/type/description/required[/enum]. Compact, no trailing newline.
std::string serialize_function_library(const FunctionLibrary& lib);
std::string serialize_function_spec(const FunctionSpec& spec);

std::vector<DatasetRecord> parse_dataset(std::string_view jsonl_text,
                                         const FunctionLibrary& lib);
std::string serialize_dataset(const std::vector<DatasetRecord>& records);

// Substitutes placeholders in one pass; `{{` and `}}` render as braces.
// lml_distill needs {functions} and {question}; lms_generate needs
// {functions}, {query} and a response.
std::string render_prompt(const PromptTemplate& tmpl, const FunctionLibrary& lib_subset,
                          std::string_view query,
                          std::optional<std::string_view> response = std::nullopt);

// Text an lms_generate prompt shows the model before it starts answering:
// everything up to the {response} placeholder.
std::string render_generation_context(const PromptTemplate& tmpl,
                                      const FunctionLibrary& lib_subset,
                                      std::string_view query);

// `name(p1=v1, p2=v2)`.
std::string serialize_call(const ToolCall& call);
// `[call1, call2]`.
std::string serialize_calls(const std::vector<ToolCall>& calls);

// Inverse of serialize_call for flat values. Returns nullopt when the text is
// not a single well-formed call.
std::optional<ToolCall> parse_call(std::string_view text);

}  // namespace hyfunc

#endif  // HYFUNC_SCHEMA_H_
