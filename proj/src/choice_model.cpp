// SPDX-License-Identifier: Apache-2.0
#include "dsa/choice_model.hpp"

#include <algorithm>
#include <cmath>

#include "dsa/error.hpp"

namespace dsa {

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

ModelOutput make_output(std::vector<double> logits) {
  ModelOutput out;
  out.probs = softmax(logits);
  out.logits = std::move(logits);
  return out;
}

nlohmann::json to_json(const ModelOutput& out) { return {{"logits", out.logits}, {"probs", out.probs}}; }

ModelOutput output_from_json(const nlohmann::json& doc) {
  try {
    return ModelOutput{doc.at("logits").get<std::vector<double>>(), doc.at("probs").get<std::vector<double>>()};
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::MalformedResponse, std::string("model output: ") + e.what());
  }
}

LogitChoiceModel::LogitChoiceModel(SchemaPtr schema, FeatureOptions options)
    : schema_(std::move(schema)), options_(options), n_(schema_->num_options()) {
  const std::size_t m = schema_->num_backgrounds();
  std::size_t offset = 1;  // bias
  for (std::size_t i = 0; i < m; ++i) {
    option_offset_.push_back(offset);
    offset += schema_->background(i).size();
  }
  profile_offset_ = offset;
  if (options_.profile_block) {
    if (schema_->num_profiles() > kMaxProfileBlock) {
      fail(ErrorCode::TooLarge, "profile block needs " + std::to_string(schema_->num_profiles()) +
                                    " features; disable it for schemas this large");
    }
    offset += schema_->num_profiles();
  }
  if (options_.pairwise_interactions) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t k = i + 1; k < m; ++k) {
        pairs_.emplace_back(i, k);
        pair_offset_.push_back(offset);
        offset += schema_->background(i).size() * schema_->background(k).size();
      }
    }
  }
  extra_offset_ = offset;
  offset += options_.extra_features;
  num_features_ = offset;
  weights_.assign(n_ * num_features_, 0.0);
}

std::vector<std::string> LogitChoiceModel::feature_names() const {
  const auto& s = *schema_;
  std::vector<std::string> names{"bias"};
  for (const auto& q : s.backgrounds()) {
    for (const auto& o : q.options) names.push_back(q.id + "=" + o);
  }
  if (options_.profile_block) {
    for (std::uint64_t k = 0; k < s.num_profiles(); ++k) names.push_back("profile:" + s.profile_key(s.profile_at(k)));
  }
  for (auto [i, k] : pairs_) {
    for (const auto& a : s.background(i).options) {
      for (const auto& b : s.background(k).options) {
        names.push_back(s.background(i).id + "=" + a + "&" + s.background(k).id + "=" + b);
      }
    }
  }
  for (std::size_t e = 0; e < options_.extra_features; ++e) {
    names.push_back("extra:" + (e < n_ ? s.core().options[e].label : std::to_string(e)));
  }
  return names;
}

void LogitChoiceModel::set_extra_features(std::vector<std::vector<double>> per_profile) {
  if (per_profile.size() != schema_->num_profiles()) {
    fail(ErrorCode::LengthMismatch, "extra features must cover every profile");
  }
  for (const auto& row : per_profile) {
    if (row.size() != options_.extra_features) fail(ErrorCode::LengthMismatch, "extra feature width mismatch");
  }
  extra_ = std::move(per_profile);
}

std::vector<SparseFeature> LogitChoiceModel::features(const BackgroundProfile& profile) const {
  schema_->validate(profile);
  std::vector<SparseFeature> x;
  x.reserve(1 + profile.size() + 1 + pairs_.size() + options_.extra_features);
  x.push_back({0, 1.0});
  for (std::size_t i = 0; i < profile.size(); ++i) x.push_back({option_offset_[i] + profile[i], 1.0});
  if (options_.profile_block) x.push_back({profile_offset_ + schema_->profile_index(profile), 1.0});
  for (std::size_t p = 0; p < pairs_.size(); ++p) {
    auto [i, k] = pairs_[p];
    x.push_back({pair_offset_[p] + profile[i] * schema_->background(k).size() + profile[k], 1.0});
  }
  if (options_.extra_features > 0) {
    if (extra_.empty()) fail(ErrorCode::Validation, "model expects extra features but none were set");
    const auto& row = extra_[schema_->profile_index(profile)];
    for (std::size_t e = 0; e < row.size(); ++e) x.push_back({extra_offset_ + e, row[e]});
  }
  return x;
}

ModelOutput LogitChoiceModel::predict(const BackgroundProfile& profile) const {
  auto x = features(profile);
  std::vector<double> logits(n_, 0.0);
  for (std::size_t c = 0; c < n_; ++c) {
    const double* row = weights_.data() + c * num_features_;
    double t = 0.0;
    for (const auto& f : x) t += row[f.index] * f.value;
    logits[c] = t;
  }
  return make_output(std::move(logits));
}

std::vector<double> LogitChoiceModel::predict_gradient(const BackgroundProfile& profile,
                                                       std::span<const double> upstream) const {
  if (upstream.size() != n_) fail(ErrorCode::LengthMismatch, "upstream gradient has wrong length");
  auto out = predict(profile);
  // d<g, p>/dt_c = p_c (g_c - <g, p>)
  double gp = 0.0;
  for (std::size_t c = 0; c < n_; ++c) gp += upstream[c] * out.probs[c];
  std::vector<double> dlogits(n_);
  for (std::size_t c = 0; c < n_; ++c) dlogits[c] = out.probs[c] * (upstream[c] - gp);
  std::vector<double> grad(weights_.size(), 0.0);
  accumulate_logit_gradient(profile, dlogits, grad);
  return grad;
}

void LogitChoiceModel::accumulate_logit_gradient(const BackgroundProfile& profile, std::span<const double> dlogits,
                                                 std::span<double> grad) const {
  if (grad.size() != weights_.size()) fail(ErrorCode::LengthMismatch, "gradient buffer has wrong size");
  auto x = features(profile);
  for (std::size_t c = 0; c < n_; ++c) {
    if (dlogits[c] == 0.0) continue;
    double* row = grad.data() + c * num_features_;
    for (const auto& f : x) row[f.index] += dlogits[c] * f.value;
  }
}

nlohmann::json LogitChoiceModel::to_checkpoint() const {
  return {{"schema_hash", schema_->hash()},
          {"num_options", n_},
          {"num_features", num_features_},
          {"feature_options",
           {{"profile_block", options_.profile_block},
            {"pairwise_interactions", options_.pairwise_interactions},
            {"extra_features", options_.extra_features}}},
          {"feature_names", feature_names()},
          {"weights", weights_},
          {"extra_features", extra_}};
}

LogitChoiceModel LogitChoiceModel::from_checkpoint(const nlohmann::json& doc, SchemaPtr schema) {
  try {
    if (doc.at("schema_hash").get<std::string>() != schema->hash()) {
      fail(ErrorCode::SchemaMismatch, "checkpoint was trained against a different schema");
    }
    FeatureOptions opts;
    const auto& fo = doc.at("feature_options");
    opts.profile_block = fo.at("profile_block").get<bool>();
    opts.pairwise_interactions = fo.at("pairwise_interactions").get<bool>();
    opts.extra_features = fo.at("extra_features").get<std::size_t>();
    LogitChoiceModel model(std::move(schema), opts);
    auto w = doc.at("weights").get<std::vector<double>>();
    if (w.size() != model.weights_.size()) fail(ErrorCode::LengthMismatch, "checkpoint weight count mismatch");
    model.weights_ = std::move(w);
    if (opts.extra_features > 0) model.set_extra_features(doc.at("extra_features").get<std::vector<std::vector<double>>>());
    return model;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("checkpoint: ") + e.what());
  }
}

}  // namespace dsa
