// SPDX-License-Identifier: Apache-2.0
#include "dsa/backend.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <future>
#include <sstream>

#include <httplib.h>

#include "dsa/error.hpp"
#include "dsa/hashing.hpp"

namespace dsa {

RemoteBackendConfig RemoteBackendConfig::from_json(const nlohmann::json& doc) {
  RemoteBackendConfig cfg;
  try {
    cfg.endpoint = doc.value("endpoint", "");
    cfg.template_name = doc.value("template_name", cfg.template_name);
    cfg.cache_dir = doc.value("cache_dir", "");
    cfg.timeout = std::chrono::milliseconds(doc.value("timeout_ms", 30'000));
    cfg.max_inflight = doc.value("max_inflight", std::size_t{4});
    cfg.stub = doc.value("stub", "");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("backend config: ") + e.what());
  }
  if (const char* env = std::getenv("DSA_CACHE_DIR"); env && *env) cfg.cache_dir = env;
  if (cfg.max_inflight < 1) fail(ErrorCode::Validation, "max_inflight must be >= 1");
  if (cfg.endpoint.empty() && cfg.stub.empty()) fail(ErrorCode::Validation, "backend needs an endpoint or a stub");
  return cfg;
}

nlohmann::json RemoteBackendConfig::to_json() const {
  return {{"endpoint", endpoint},         {"template_name", template_name}, {"cache_dir", cache_dir.string()},
          {"timeout_ms", timeout.count()}, {"max_inflight", max_inflight},   {"stub", stub}};
}

HttpTransport::HttpTransport(std::string endpoint, std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), timeout_(timeout) {
  auto scheme = endpoint_.find("://");
  std::size_t host_start = scheme == std::string::npos ? 0 : scheme + 3;
  std::size_t slash = endpoint_.find('/', host_start);
  host_ = endpoint_.substr(0, slash);
  std::string prefix = slash == std::string::npos ? "" : endpoint_.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  path_ = prefix.size() >= 9 && prefix.ends_with("/logprobs") ? prefix : prefix + "/logprobs";
}

std::vector<double> HttpTransport::fetch(const std::string& prompt, const std::vector<std::string>& labels) {
  httplib::Client client(host_);
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());

  nlohmann::json request{{"prompt", prompt}, {"options", labels}};
  auto res = client.Post(path_, request.dump(), "application/json");
  if (!res) {
    fail(ErrorCode::BackendUnavailable, "backend " + endpoint_ + ": " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    fail(ErrorCode::BackendUnavailable, "backend " + endpoint_ + " returned HTTP " + std::to_string(res->status));
  }
  nlohmann::json body;
  try {
    body = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::MalformedResponse, std::string("backend response is not JSON: ") + e.what());
  }
  if (!body.is_object() || !body.contains("logprobs") || !body["logprobs"].is_array()) {
    fail(ErrorCode::MalformedResponse, "backend response lacks a 'logprobs' array");
  }
  const auto& lp = body["logprobs"];
  if (lp.size() > labels.size()) fail(ErrorCode::MalformedResponse, "backend returned more logprobs than options");
  std::vector<double> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i >= lp.size() || lp[i].is_null()) {
      fail(ErrorCode::OptionMissing, "backend returned no logprob for option '" + labels[i] + "'");
    }
    if (!lp[i].is_number()) fail(ErrorCode::MalformedResponse, "non-numeric logprob for option '" + labels[i] + "'");
    out.push_back(lp[i].get<double>());
  }
  return out;
}

std::vector<double> StubTransport::fetch(const std::string& prompt, const std::vector<std::string>& labels) {
  std::vector<double> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = -0.25 * static_cast<double>(i);
  if (mode_ == StubMode::TemplateHash) {
    std::uint64_t h = std::stoull(sha256_hex(prompt).substr(0, 16), nullptr, 16);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      out[i] += 0.5 * (static_cast<double>((h >> (i % 8) * 8) & 0xFF) / 255.0 - 0.5);
    }
  }
  return out;
}

std::string StubTransport::name() const {
  return mode_ == StubMode::Constant ? "stub:constant" : "stub:template_hash";
}

std::string ResponseCache::key(const std::string& endpoint, const std::string& prompt,
                               const std::vector<std::string>& labels) {
  nlohmann::json canonical{{"endpoint", endpoint}, {"options", labels}, {"prompt", prompt}};
  return sha256_hex(canonical.dump());
}

std::mutex& ResponseCache::lock_for(const std::string& key) {
  std::lock_guard guard(locks_guard_);
  auto& slot = locks_[key];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

std::optional<ModelOutput> ResponseCache::get(const std::string& key) const {
  if (!enabled()) return std::nullopt;
  std::ifstream in(dir_ / (key + ".json"));
  if (!in) return std::nullopt;
  try {
    nlohmann::json doc = nlohmann::json::parse(in);
    return output_from_json(doc);
  } catch (const std::exception&) {
    return std::nullopt;  // unreadable entry: refetch
  }
}

void ResponseCache::put(const std::string& key, const ModelOutput& output) {
  if (!enabled()) return;
  std::lock_guard guard(lock_for(key));
  std::filesystem::create_directories(dir_);
  auto final_path = dir_ / (key + ".json");
  auto tmp = dir_ / (key + ".json.tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write cache entry " + tmp.string());
    out << to_json(output).dump();
  }
  std::filesystem::rename(tmp, final_path);
}

ModelOutput renormalize_logprobs(const std::vector<double>& logprobs) {
  for (double v : logprobs) {
    if (!std::isfinite(v)) fail(ErrorCode::MalformedResponse, "non-finite logprob");
  }
  return make_output(logprobs);
}

namespace {

std::unique_ptr<LogprobTransport> make_transport(const RemoteBackendConfig& cfg) {
  if (cfg.stub == "constant") return std::make_unique<StubTransport>(StubMode::Constant);
  if (cfg.stub == "template_hash") return std::make_unique<StubTransport>(StubMode::TemplateHash);
  if (!cfg.stub.empty()) fail(ErrorCode::Validation, "unknown stub mode '" + cfg.stub + "'");
  if (cfg.endpoint.empty()) fail(ErrorCode::BackendRequired, "no backend endpoint configured");
  return std::make_unique<HttpTransport>(cfg.endpoint, cfg.timeout);
}

}  // namespace

BackendClient::BackendClient(RemoteBackendConfig config)
    : BackendClient(config, make_transport(config)) {}

BackendClient::BackendClient(RemoteBackendConfig config, std::unique_ptr<LogprobTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)), cache_(config_.cache_dir) {
  if (config_.max_inflight < 1) fail(ErrorCode::Validation, "max_inflight must be >= 1");
}

ModelOutput BackendClient::query(const std::string& prompt, const std::vector<std::string>& labels) {
  const std::string key = ResponseCache::key(transport_->name(), prompt, labels);
  if (auto hit = cache_.get(key)) return *hit;
  ++network_calls_;
  auto out = renormalize_logprobs(transport_->fetch(prompt, labels));
  cache_.put(key, out);
  return out;
}

std::vector<ModelOutput> BackendClient::query_many(const std::vector<std::string>& prompts,
                                                   const std::vector<std::string>& labels) {
  std::vector<ModelOutput> out(prompts.size());
  const std::size_t width = config_.max_inflight;
  for (std::size_t start = 0; start < prompts.size(); start += width) {
    std::size_t end = std::min(prompts.size(), start + width);
    if (end - start == 1) {
      out[start] = query(prompts[start], labels);
      continue;
    }
    std::vector<std::future<ModelOutput>> batch;
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(std::async(std::launch::async, [this, &prompts, &labels, i] { return query(prompts[i], labels); }));
    }
    for (std::size_t i = start; i < end; ++i) out[i] = batch[i - start].get();
  }
  return out;
}

ModelOutput query_backend(const RemoteBackendConfig& config, const std::string& prompt,
                          const std::vector<std::string>& option_labels) {
  BackendClient client(config);
  return client.query(prompt, option_labels);
}

}  // namespace dsa
