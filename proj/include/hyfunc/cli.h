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

#ifndef HYFUNC_CLI_H_
#define HYFUNC_CLI_H_

#include <iosfwd>
#include <string>
#include <vector>

namespace hyfunc {

// Runs one command line (args[0] is the program name). Returns the exit code:
// 0 success, 1 usage error, 2 data error, 3 numeric error.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv);

}  // namespace hyfunc

#endif  // HYFUNC_CLI_H_
