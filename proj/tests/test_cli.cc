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

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "fixtures.h"
#include "hyfunc/cli.h"
#include "hyfunc/nn.h"
#include "hyfunc/pipeline.h"

using namespace hyfunc;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "hyfunc");
  std::ostringstream out, err;
  Run r;
  r.code = dispatch(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path work_dir() {
  const char* env = std::getenv("HYFUNC_TEST_TMP");
  fs::path dir = env && *env ? fs::path(env) : fs::temp_directory_path() / "hyfunc_cli_test";
  fs::create_directories(dir);
  return dir;
}

std::string small_config_file(const fs::path& dir) {
  PipelineConfig cfg;
  cfg.provider.dim = 32;
  cfg.retriever_hidden = 32;
  cfg.retriever_out = 16;
  cfg.retriever_train.epochs = 5;
  cfg.lm_embed_dim = 8;
  cfg.lm_window = 16;
  cfg.lm_hidden = 16;
  cfg.lms_train.epochs = 1;
  const auto path = (dir / "small_config.json").string();
  write_file(path, cfg.to_json());
  return path;
}

}  // namespace

TEST_CASE("usage errors exit with 1, help with 0") {
  CHECK(run({}).code == 1);
  CHECK(run({"frobnicate"}).code == 1);
  CHECK(run({"infer"}).code == 1);
  auto help = run({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("train-retriever") != std::string::npos);
  CHECK(run({"eval", "--help"}).code == 0);
}

TEST_CASE("missing artifacts exit with the data code and name the file") {
  const auto dir = work_dir() / "empty_artifacts";
  fs::create_directories(dir);
  auto r = run({"eval", "--artifacts", dir.string(), "--test", (dir / "none.jsonl").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("config.json") != std::string::npos);
}

TEST_CASE("template subcommand") {
  const auto dir = work_dir();
  const auto lib = (dir / "weather.json").string();
  write_file(lib, hyfunc::testing::kWeatherLibrary);
  auto all = run({"template", "--library", lib});
  CHECK(all.code == 0);
  CHECK(all.out == "get_weather(location=<param></param>, time=<param></param>)\n");
  auto one = run({"template", "--library", lib, "--function", "get_weather"});
  CHECK(one.code == 0);
  CHECK(one.out.find("\"slot\"") != std::string::npos);
  CHECK(run({"template", "--library", lib, "--function", "nope"}).code == 2);

  const auto bad = (dir / "bad.json").string();
  write_file(bad, "[{\"name\":");
  auto r = run({"template", "--library", bad});
  CHECK(r.code == 2);
  CHECK(r.err.find("byte") != std::string::npos);
}

TEST_CASE("numeric configuration errors map to their exit codes") {
  const auto dir = work_dir();
  const auto cfg = (dir / "bad_config.json").string();
  write_file(cfg, R"({"unknown_key": 1})");
  const auto lib = (dir / "weather.json").string();
  write_file(lib, hyfunc::testing::kWeatherLibrary);
  auto r = run({"embed", "--library", lib, "--data", lib, "--artifacts", (dir / "x").string(), "--config", cfg});
  CHECK(r.code == 1);
}

TEST_CASE("end to end through the subcommands") {
  const auto dir = work_dir() / "flow";
  fs::remove_all(dir);
  const auto data = dir / "data";
  const auto art = dir / "art";
  const auto cfg = small_config_file(work_dir());

  REQUIRE(run({"gen-data", "--out", data.string(), "--n-functions", "4", "--queries", "5", "--values", "5", "--seed", "2"}).code == 0);
  const auto first_train = read_file((data / "train.jsonl").string());
  REQUIRE(run({"gen-data", "--out", (dir / "data2").string(), "--n-functions", "4", "--queries", "5", "--values", "5", "--seed", "2"}).code == 0);
  CHECK(read_file((dir / "data2" / "train.jsonl").string()) == first_train);

  const auto lib = (data / "library.json").string();
  const auto train = (data / "train.jsonl").string();
  const auto test = (data / "test.jsonl").string();
  auto e = run({"embed", "--library", lib, "--data", train, test, "--artifacts", art.string(), "--config", cfg});
  REQUIRE_MESSAGE(e.code == 0, e.err);
  auto tr = run({"train-retriever", "--artifacts", art.string(), "--data", train, "--epochs", "3"});
  REQUIRE_MESSAGE(tr.code == 0, tr.err);
  auto tl = run({"train-lms", "--artifacts", art.string(), "--corpus", train, "--selective"});
  REQUIRE_MESSAGE(tl.code == 0, tl.err);
  for (const char* f : Artifacts::kFiles) CHECK(fs::exists(art / f));

  auto inf = run({"infer", "--artifacts", art.string(), "--query", "some query text", "--trace"});
  REQUIRE_MESSAGE(inf.code == 0, inf.err);
  CHECK(inf.out.front() == '[');
  CHECK(inf.out.find("\"events\"") != std::string::npos);

  const auto report = (dir / "report.json").string();
  auto ev = run({"eval", "--artifacts", art.string(), "--test", test, "--report", report, "--baseline"});
  REQUIRE_MESSAGE(ev.code == 0, ev.err);
  CHECK(ev.out.find("Context Processing") != std::string::npos);
  CHECK(read_file(report).find("\"call_em\"") != std::string::npos);

  auto pairs = (dir / "pairs.jsonl").string();
  write_file(pairs, "{\"query_key\":\"q:missing\",\"function_key\":\"fn:none\"}\n");
  auto bad = run({"train-retriever", "--artifacts", art.string(), "--pairs", pairs, "--out", (dir / "r.bin").string()});
  CHECK(bad.code == 2);
  CHECK(run({"train-retriever", "--artifacts", art.string()}).code == 1);
}
