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

#ifndef HYFUNC_EMBED_H_
#define HYFUNC_EMBED_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hyfunc/nn.h"
#include "hyfunc/schema.h"

namespace hyfunc {

struct Embedding {
  std::vector<double> values;

  Embedding() = default;
  explicit Embedding(std::vector<double> v) : values(std::move(v)) {}

  std::size_t dim() const { return values.size(); }
  double norm() const;
  bool operator==(const Embedding&) const = default;
};

// Unit-length copy; a zero vector is returned unchanged.
Embedding normalized(Embedding e);

// Column-wise mean of a k x d block of states. Throws EmptyInputError for
// k == 0.
Embedding mean_pool(const Matrix& states);
Embedding mean_pool(std::span<const Embedding> states);

// Signed feature hashing: each token maps (under `seed`) to one coordinate
// and a sign; the signed counts are unit-normalized. Empty input gives the
// zero vector.
Embedding feature_hash(std::span<const std::string> tokens, std::size_t dim, std::uint64_t seed);

std::string function_key(std::string_view name);
// Key of the j-th soft token for a record: `q:<id>`, then `q:<id>/1`, ...
std::string query_key(std::string_view record_id, std::size_t j = 0);

// Keyed embeddings of one dimension, persisted as JSON lines
// {"key": ..., "dim": D, "values": [...]}, sorted by key.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(std::size_t dim = 0) : dim_(dim) {}
  EmbeddingStore(const EmbeddingStore& other);
  EmbeddingStore& operator=(const EmbeddingStore& other);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }

  // Throws DimError if `e` has the wrong dimension.
  void put(const std::string& key, Embedding e);
  // Throws MissingEmbeddingError naming the key.
  const Embedding& get(std::string_view key) const;
  bool contains(std::string_view key) const;
  const std::map<std::string, Embedding, std::less<>>& entries() const { return entries_; }

  std::string to_jsonl() const;
  // Throws ParseError with the 1-based line number, DimError on mixed dims.
  static EmbeddingStore from_jsonl(std::string_view text);
  void save(const std::string& path) const;
  static EmbeddingStore load(const std::string& path);

  bool operator==(const EmbeddingStore& other) const {
    return dim_ == other.dim_ && entries_ == other.entries_;
  }

 private:
  std::size_t dim_;
  std::map<std::string, Embedding, std::less<>> entries_;
  std::mutex write_mu_;
};

enum class ProviderBackend { kMock, kFile, kHttp };

struct ProviderConfig {
  ProviderBackend backend = ProviderBackend::kMock;
  std::size_t dim = 128;
  std::size_t soft_token_count = 1;  // k
  std::uint64_t seed = 0;
  // Mock: spread of soft tokens 2..k around the first one.
  double soft_token_sigma = 0.2;
  // Mock: expected norm of seeded noise added to the first soft token
  // before normalization.
  double query_noise_sigma = 0.0;
  std::string store_path;  // file backend
  std::string endpoint;    // http backend, e.g. http://127.0.0.1:8080
  double timeout_seconds = 30.0;
  std::size_t max_in_flight = 4;

  void validate() const;
};

// Source of function embeddings e_f and soft-token embeddings e_q.
class EmbeddingProvider {
 public:
  explicit EmbeddingProvider(ProviderConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }
  virtual ~EmbeddingProvider() = default;

  const ProviderConfig& config() const { return cfg_; }

  virtual Embedding embed_function(const FunctionLibrary& lib, const FunctionSpec& spec,
                                   std::string_view query_context) = 0;
  // k soft tokens for `query`. `record_id` keys the file backend.
  virtual std::vector<Embedding> distill_soft_tokens(const FunctionLibrary& lib_subset,
                                                     std::string_view query,
                                                     std::string_view record_id) = 0;

 protected:
  void check_dim(const Embedding& e, std::string_view what) const;

  ProviderConfig cfg_;
};

// Feature-hashing stand-in for a large model's hidden states.
class MockProvider : public EmbeddingProvider {
 public:
  explicit MockProvider(ProviderConfig cfg) : EmbeddingProvider(std::move(cfg)) {}

  Embedding embed_function(const FunctionLibrary& lib, const FunctionSpec& spec,
                           std::string_view query_context) override;
  std::vector<Embedding> distill_soft_tokens(const FunctionLibrary& lib_subset,
                                             std::string_view query,
                                             std::string_view record_id) override;
};

// Precomputed embeddings looked up by `fn:<name>` / `q:<record-id>`.
class FileProvider : public EmbeddingProvider {
 public:
  explicit FileProvider(ProviderConfig cfg);
  FileProvider(ProviderConfig cfg, EmbeddingStore store);

  Embedding embed_function(const FunctionLibrary& lib, const FunctionSpec& spec,
                           std::string_view query_context) override;
  std::vector<Embedding> distill_soft_tokens(const FunctionLibrary& lib_subset,
                                             std::string_view query,
                                             std::string_view record_id) override;

 private:
  EmbeddingStore store_;
};

class HttpProvider : public EmbeddingProvider {
 public:
  explicit HttpProvider(ProviderConfig cfg);
  ~HttpProvider() override;

  Embedding embed_function(const FunctionLibrary& lib, const FunctionSpec& spec,
                           std::string_view query_context) override;
  std::vector<Embedding> distill_soft_tokens(const FunctionLibrary& lib_subset,
                                             std::string_view query,
                                             std::string_view record_id) override;

  // Number of requests that actually went over the wire.
  std::size_t requests_sent() const;

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

std::unique_ptr<EmbeddingProvider> make_provider(const ProviderConfig& cfg);

}  // namespace hyfunc

#endif  // HYFUNC_EMBED_H_
