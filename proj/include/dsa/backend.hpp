// SPDX-License-Identifier: Apache-2.0
#ifndef DSA_BACKEND_HPP
#define DSA_BACKEND_HPP

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsa/choice_model.hpp"

namespace dsa {

/// Remote log-probability service. The endpoint receives
/// `POST /logprobs {"prompt": ..., "options": [label...]}` and answers
/// `{"logprobs": [real...]}`, one entry per label.
struct RemoteBackendConfig {
  std::string endpoint;
  std::string template_name = "default";
  /// Empty disables caching. DSA_CACHE_DIR overrides this when set.
  std::filesystem::path cache_dir;
  std::chrono::milliseconds timeout{30'000};
  std::size_t max_inflight = 4;
  /// In-process stand-in for the service: "" (none), "constant" or
  /// "template_hash".
  std::string stub;

  static RemoteBackendConfig from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

class LogprobTransport {
 public:
  virtual ~LogprobTransport() = default;
  /// Raw per-label log-probabilities, in label order.
  virtual std::vector<double> fetch(const std::string& prompt, const std::vector<std::string>& labels) = 0;
  virtual std::string name() const = 0;
};

class HttpTransport final : public LogprobTransport {
 public:
  HttpTransport(std::string endpoint, std::chrono::milliseconds timeout);
  std::vector<double> fetch(const std::string& prompt, const std::vector<std::string>& labels) override;
  std::string name() const override { return endpoint_; }

 private:
  std::string endpoint_;
  std::string host_;
  std::string path_;
  std::chrono::milliseconds timeout_;
};

enum class StubMode { Constant, TemplateHash };

/// Deterministic fake service. Constant mode ignores the prompt; template-hash
/// mode perturbs the log-probabilities by a hash of the prompt text.
class StubTransport final : public LogprobTransport {
 public:
  explicit StubTransport(StubMode mode) : mode_(mode) {}
  std::vector<double> fetch(const std::string& prompt, const std::vector<std::string>& labels) override;
  std::string name() const override;

 private:
  StubMode mode_;
};

/// One JSON file per request under the cache directory.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

  static std::string key(const std::string& endpoint, const std::string& prompt, const std::vector<std::string>& labels);
  std::optional<ModelOutput> get(const std::string& key) const;
  void put(const std::string& key, const ModelOutput& output);
  bool enabled() const { return !dir_.empty(); }

 private:
  std::mutex& lock_for(const std::string& key);

  std::filesystem::path dir_;
  std::mutex locks_guard_;
  std::map<std::string, std::unique_ptr<std::mutex>> locks_;
};

class BackendClient {
 public:
  explicit BackendClient(RemoteBackendConfig config);
  BackendClient(RemoteBackendConfig config, std::unique_ptr<LogprobTransport> transport);

  /// Option probabilities renormalized over the label set; cached on disk.
  ModelOutput query(const std::string& prompt, const std::vector<std::string>& labels);
  /// Issues up to max_inflight requests at a time; results in input order.
  std::vector<ModelOutput> query_many(const std::vector<std::string>& prompts, const std::vector<std::string>& labels);

  const RemoteBackendConfig& config() const { return config_; }
  std::size_t network_calls() const { return network_calls_.load(); }

 private:
  RemoteBackendConfig config_;
  std::unique_ptr<LogprobTransport> transport_;
  ResponseCache cache_;
  std::atomic<std::size_t> network_calls_{0};
};

/// Renormalizes raw label log-probabilities over the option set.
ModelOutput renormalize_logprobs(const std::vector<double>& logprobs);

ModelOutput query_backend(const RemoteBackendConfig& config, const std::string& prompt,
                          const std::vector<std::string>& option_labels);

}  // namespace dsa

#endif  // DSA_BACKEND_HPP
