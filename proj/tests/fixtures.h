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

#ifndef HYFUNC_TESTS_FIXTURES_H_
#define HYFUNC_TESTS_FIXTURES_H_

#include <string>
#include <vector>

#include "hyfunc/schema.h"

namespace hyfunc::testing {

inline constexpr const char* kWeatherLibrary =
    R"([{"name":"get_weather","description":"Get the weather for a place and time.",)"
    R"("parameters":[{"name":"location","type":"string","required":true},)"
    R"({"name":"time","type":"string","required":true}]}])";

inline FunctionSpec weather_spec() {
  return parse_function_library(kWeatherLibrary).functions().front();
}

inline ToolCall weather_call() {
  return ToolCall{"get_weather", {{"location", "\"USA\""}, {"time", "\"today\""}}};
}

}  // namespace hyfunc::testing

#endif  // HYFUNC_TESTS_FIXTURES_H_
