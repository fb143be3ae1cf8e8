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

#ifndef HYFUNC_ERRORS_H_
#define HYFUNC_ERRORS_H_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hyfunc {

// Exit-code category a CLI maps an error onto.
enum class ErrorKind {
  kUsage = 1,
  kData = 2,
  kNumeric = 3,
};

// Root of every error the library throws.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

#define HYFUNC_DEFINE_ERROR(Name, Kind)                        \
  class Name : public Error {                                  \
   public:                                                     \
    explicit Name(const std::string& what) : Error(Kind, what) {} \
  };

HYFUNC_DEFINE_ERROR(SchemaError, ErrorKind::kData)
HYFUNC_DEFINE_ERROR(TemplateError, ErrorKind::kData)
HYFUNC_DEFINE_ERROR(VocabError, ErrorKind::kData)
HYFUNC_DEFINE_ERROR(AlignmentError, ErrorKind::kData)
HYFUNC_DEFINE_ERROR(MissingEmbeddingError, ErrorKind::kData)
HYFUNC_DEFINE_ERROR(ProviderError, ErrorKind::kData)
HYFUNC_DEFINE_ERROR(DimError, ErrorKind::kData)
HYFUNC_DEFINE_ERROR(ConfigError, ErrorKind::kUsage)
HYFUNC_DEFINE_ERROR(GeneratorError, ErrorKind::kData)
HYFUNC_DEFINE_ERROR(IoError, ErrorKind::kData)
HYFUNC_DEFINE_ERROR(ShapeError, ErrorKind::kNumeric)
HYFUNC_DEFINE_ERROR(NumericsError, ErrorKind::kNumeric)
HYFUNC_DEFINE_ERROR(EmptyInputError, ErrorKind::kNumeric)
HYFUNC_DEFINE_ERROR(DegenerateVectorError, ErrorKind::kNumeric)
HYFUNC_DEFINE_ERROR(DegenerateMaskError, ErrorKind::kNumeric)

#undef HYFUNC_DEFINE_ERROR

// Malformed input. `position` is a byte offset for JSON documents and a
// 1-based line number for JSON-lines files; `is_line` says which.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position, bool is_line)
      : Error(ErrorKind::kData, what), position_(position), is_line_(is_line) {}

  std::size_t position() const { return position_; }
  bool is_line() const { return is_line_; }

 private:
  std::size_t position_;
  bool is_line_;
};

// Output text does not fit a template skeleton.
class MatchError : public Error {
 public:
  MatchError(const std::string& what, std::size_t offset)
      : Error(ErrorKind::kData, what), offset_(offset) {}

  // Byte offset of the first divergence in the checked text.
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace hyfunc

#endif  // HYFUNC_ERRORS_H_
