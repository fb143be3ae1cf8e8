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

#include "hyfunc/embed.h"

#include <cmath>
#include <semaphore>
#include <unordered_map>

#include "hyfunc/errors.h"
#include "hyfunc/tokenizer.h"
#include "httplib.h"
#include "json.hpp"

namespace hyfunc {

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Adds noise of expected norm `sigma` and renormalizes.
Embedding perturb(const Embedding& base, double sigma, Rng& rng) {
  Embedding out = base;
  const double scale = sigma / std::sqrt(static_cast<double>(base.dim()));
  for (double& v : out.values) v += scale * rng.normal();
  return normalized(std::move(out));
}

}  // namespace

double Embedding::norm() const {
  double s = 0.0;
  for (double v : values) s += v * v;
  return std::sqrt(s);
}

Embedding normalized(Embedding e) {
  const double n = e.norm();
  if (n > 0.0) {
    for (double& v : e.values) v /= n;
  }
  return e;
}

Embedding mean_pool(const Matrix& states) {
  if (states.rows() == 0) throw EmptyInputError("mean_pool over zero states");
  std::vector<double> out(states.cols(), 0.0);
  for (std::size_t i = 0; i < states.rows(); ++i) {
    auto r = states.row(i);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += r[j];
  }
  for (double& v : out) v /= static_cast<double>(states.rows());
  return Embedding(std::move(out));
}

Embedding mean_pool(std::span<const Embedding> states) {
  if (states.empty()) throw EmptyInputError("mean_pool over zero states");
  Matrix m(states.size(), states[0].dim());
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (states[i].dim() != m.cols()) throw DimError("mean_pool over mixed dimensions");
    std::copy(states[i].values.begin(), states[i].values.end(), m.row(i).begin());
  }
  return mean_pool(m);
}

Embedding feature_hash(std::span<const std::string> tokens, std::size_t dim, std::uint64_t seed) {
  if (dim < 2) throw DimError("feature_hash needs dim >= 2");
  std::vector<double> v(dim, 0.0);
  for (const auto& tok : tokens) {
    const std::uint64_t h = splitmix64(fnv1a(tok) ^ splitmix64(seed));
    const double sign = (h >> 63) ? -1.0 : 1.0;
    v[h % dim] += sign;
  }
  return normalized(Embedding(std::move(v)));
}

std::string function_key(std::string_view name) { return "fn:" + std::string(name); }

std::string query_key(std::string_view record_id, std::size_t j) {
  std::string key = "q:" + std::string(record_id);
  if (j > 0) key += "/" + std::to_string(j);
  return key;
}

EmbeddingStore::EmbeddingStore(const EmbeddingStore& other)
    : dim_(other.dim_), entries_(other.entries_) {}

EmbeddingStore& EmbeddingStore::operator=(const EmbeddingStore& other) {
  if (this != &other) {
    dim_ = other.dim_;
    entries_ = other.entries_;
  }
  return *this;
}

void EmbeddingStore::put(const std::string& key, Embedding e) {
  std::lock_guard<std::mutex> lock(write_mu_);
  if (dim_ == 0 && entries_.empty()) dim_ = e.dim();
  if (e.dim() != dim_) {
    throw DimError("embedding \"" + key + "\" has dim " + std::to_string(e.dim()) +
                   ", store dim is " + std::to_string(dim_));
  }
  entries_.insert_or_assign(key, std::move(e));
}

const Embedding& EmbeddingStore::get(std::string_view key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw MissingEmbeddingError(std::string(key));
  return it->second;
}

bool EmbeddingStore::contains(std::string_view key) const { return entries_.contains(key); }

std::string EmbeddingStore::to_jsonl() const {
  std::string out;
  for (const auto& [key, e] : entries_) {
    nlohmann::ordered_json j;
    j["key"] = key;
    j["dim"] = e.dim();
    j["values"] = e.values;
    out += j.dump();
    out += '\n';
  }
  return out;
}

EmbeddingStore EmbeddingStore::from_jsonl(std::string_view text) {
  EmbeddingStore store;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line.begin(), line.end());
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("store line " + std::to_string(line_no) + ": " + e.what(), line_no, true);
    }
    auto bad = [&](const char* why) {
      return ParseError("store line " + std::to_string(line_no) + ": " + why, line_no, true);
    };
    if (!j.is_object() || !j.contains("key") || !j["key"].is_string()) throw bad("missing key");
    if (!j.contains("values") || !j["values"].is_array()) throw bad("missing values");
    std::vector<double> values;
    for (const auto& v : j["values"]) {
      if (!v.is_number()) throw bad("non-numeric value");
      values.push_back(v.get<double>());
    }
    if (j.contains("dim") && (!j["dim"].is_number_unsigned() || j["dim"].get<std::size_t>() != values.size())) {
      throw bad("dim does not match number of values");
    }
    store.put(j["key"].get<std::string>(), Embedding(std::move(values)));
  }
  return store;
}

void EmbeddingStore::save(const std::string& path) const { write_file(path, to_jsonl()); }

EmbeddingStore EmbeddingStore::load(const std::string& path) {
  return from_jsonl(read_file(path));
}

void ProviderConfig::validate() const {
  if (dim < 2) throw ConfigError("embedding dim must be >= 2");
  if (soft_token_count < 1) throw ConfigError("soft token count k must be >= 1");
  if (soft_token_sigma < 0.0 || query_noise_sigma < 0.0) {
    throw ConfigError("noise levels must be non-negative");
  }
  if (backend == ProviderBackend::kHttp) {
    if (endpoint.empty()) throw ConfigError("http backend needs an endpoint");
    if (!(timeout_seconds > 0.0)) throw ConfigError("http timeout must be positive");
    if (max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
  }
  if (backend == ProviderBackend::kFile && store_path.empty()) {
    throw ConfigError("file backend needs a store path");
  }
}

void EmbeddingProvider::check_dim(const Embedding& e, std::string_view what) const {
  if (e.dim() != cfg_.dim) {
    throw DimError(std::string(what) + " has dim " + std::to_string(e.dim()) + ", expected " +
                   std::to_string(cfg_.dim));
  }
}

Embedding MockProvider::embed_function(const FunctionLibrary& /*lib*/, const FunctionSpec& spec,
                                       std::string_view /*query_context*/) {
  return feature_hash(segment(spec.name + " " + spec.description), cfg_.dim, cfg_.seed);
}

std::vector<Embedding> MockProvider::distill_soft_tokens(const FunctionLibrary& /*lib_subset*/,
                                                         std::string_view query,
                                                         std::string_view /*record_id*/) {
  Embedding first = feature_hash(segment(query), cfg_.dim, cfg_.seed);
  const std::uint64_t query_seed = splitmix64(fnv1a(query) ^ splitmix64(cfg_.seed + 1));
  if (cfg_.query_noise_sigma > 0.0) {
    Rng rng(query_seed);
    first = perturb(first, cfg_.query_noise_sigma, rng);
  }
  std::vector<Embedding> out{first};
  for (std::size_t j = 1; j < cfg_.soft_token_count; ++j) {
    Rng rng(splitmix64(query_seed + j));
    out.push_back(perturb(first, cfg_.soft_token_sigma, rng));
  }
  return out;
}

FileProvider::FileProvider(ProviderConfig cfg)
    : FileProvider(cfg, EmbeddingStore::load(cfg.store_path)) {}

FileProvider::FileProvider(ProviderConfig cfg, EmbeddingStore store)
    : EmbeddingProvider(std::move(cfg)), store_(std::move(store)) {
  if (store_.size() > 0 && store_.dim() != cfg_.dim) {
    throw DimError("store dim " + std::to_string(store_.dim()) + " differs from configured dim " +
                   std::to_string(cfg_.dim));
  }
}

Embedding FileProvider::embed_function(const FunctionLibrary& /*lib*/, const FunctionSpec& spec,
                                       std::string_view /*query_context*/) {
  return store_.get(function_key(spec.name));
}

std::vector<Embedding> FileProvider::distill_soft_tokens(const FunctionLibrary& /*lib_subset*/,
                                                         std::string_view /*query*/,
                                                         std::string_view record_id) {
  std::vector<Embedding> out;
  for (std::size_t j = 0; j < cfg_.soft_token_count; ++j) {
    out.push_back(store_.get(query_key(record_id, j)));
  }
  return out;
}

struct HttpProvider::Impl {
  std::string host;         // scheme://host:port
  std::string path_prefix;  // "" or "/api"
  std::counting_semaphore<1024> slots;
  std::mutex cache_mu;
  std::unordered_map<std::string, std::vector<Embedding>> cache;
  std::size_t sent = 0;

  explicit Impl(std::ptrdiff_t max_in_flight) : slots(max_in_flight) {}
};

HttpProvider::HttpProvider(ProviderConfig cfg) : EmbeddingProvider(std::move(cfg)) {
  impl_ = std::make_unique<Impl>(static_cast<std::ptrdiff_t>(std::min<std::size_t>(cfg_.max_in_flight, 1024)));
  std::string_view ep = cfg_.endpoint;
  while (!ep.empty() && ep.back() == '/') ep.remove_suffix(1);
  std::size_t scheme = ep.find("://");
  std::size_t host_start = scheme == std::string_view::npos ? 0 : scheme + 3;
  std::size_t slash = ep.find('/', host_start);
  impl_->host = std::string(ep.substr(0, slash));
  if (slash != std::string_view::npos) impl_->path_prefix = std::string(ep.substr(slash));
}

HttpProvider::~HttpProvider() = default;

std::size_t HttpProvider::requests_sent() const {
  std::lock_guard<std::mutex> lock(impl_->cache_mu);
  return impl_->sent;
}

namespace {

std::vector<Embedding> http_embed(HttpProvider::Impl& impl, const ProviderConfig& cfg,
                                  const std::string& mode, const std::vector<std::string>& texts) {
  nlohmann::ordered_json req;
  req["mode"] = mode;
  req["texts"] = texts;
  req["k"] = cfg.soft_token_count;
  const std::string body = req.dump();
  {
    std::lock_guard<std::mutex> lock(impl.cache_mu);
    if (auto it = impl.cache.find(body); it != impl.cache.end()) return it->second;
  }

  impl.slots.acquire();
  httplib::Result res;
  {
    httplib::Client client(impl.host);
    const auto secs = static_cast<time_t>(cfg.timeout_seconds);
    const auto usecs = static_cast<time_t>((cfg.timeout_seconds - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    res = client.Post(impl.path_prefix + "/embed", body, "application/json");
  }
  impl.slots.release();
  {
    std::lock_guard<std::mutex> lock(impl.cache_mu);
    ++impl.sent;
  }

  if (!res) {
    throw ProviderError("embedding request to " + impl.host + " failed: " +
                        httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw ProviderError("embedding server returned status " + std::to_string(res->status));
  }
  std::vector<Embedding> out;
  try {
    auto j = nlohmann::json::parse(res->body);
    for (const auto& row : j.at("embeddings")) {
      out.emplace_back(row.get<std::vector<double>>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(std::string("malformed embedding response: ") + e.what());
  }
  if (out.empty()) throw ProviderError("embedding response holds no vectors");
  std::lock_guard<std::mutex> lock(impl.cache_mu);
  impl.cache.emplace(body, out);
  return out;
}

}  // namespace

Embedding HttpProvider::embed_function(const FunctionLibrary& lib, const FunctionSpec& spec,
                                       std::string_view query_context) {
  const auto prompt =
      render_prompt(PromptTemplate::builtin(PromptKind::kLmlDistill), lib, query_context);
  auto states = http_embed(*impl_, cfg_, "function", {prompt, serialize_function_spec(spec)});
  for (const auto& s : states) check_dim(s, "function state of " + spec.name);
  return mean_pool(states);
}

std::vector<Embedding> HttpProvider::distill_soft_tokens(const FunctionLibrary& lib_subset,
                                                         std::string_view query,
                                                         std::string_view /*record_id*/) {
  const auto prompt = render_prompt(PromptTemplate::builtin(PromptKind::kLmlDistill), lib_subset, query);
  auto tokens = http_embed(*impl_, cfg_, "soft_token", {prompt});
  if (tokens.size() != cfg_.soft_token_count) {
    throw ProviderError("expected " + std::to_string(cfg_.soft_token_count) +
                        " soft tokens, server returned " + std::to_string(tokens.size()));
  }
  for (const auto& t : tokens) check_dim(t, "soft token");
  return tokens;
}

std::unique_ptr<EmbeddingProvider> make_provider(const ProviderConfig& cfg) {
  switch (cfg.backend) {
    case ProviderBackend::kMock:
      return std::make_unique<MockProvider>(cfg);
    case ProviderBackend::kFile:
      return std::make_unique<FileProvider>(cfg);
    case ProviderBackend::kHttp:
      return std::make_unique<HttpProvider>(cfg);
  }
  throw ConfigError("unknown provider backend");
}

}  // namespace hyfunc
