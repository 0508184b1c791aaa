// SPDX-License-Identifier: Apache-2.0
#ifndef DSA_CHOICE_MODEL_HPP
#define DSA_CHOICE_MODEL_HPP

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dsa/survey_model.hpp"

namespace dsa {

struct ModelOutput {
  std::vector<double> logits;
  std::vector<double> probs;

  bool operator==(const ModelOutput&) const = default;
};

std::vector<double> softmax(std::span<const double> logits);
ModelOutput make_output(std::vector<double> logits);

nlohmann::json to_json(const ModelOutput& out);
ModelOutput output_from_json(const nlohmann::json& doc);

struct FeatureOptions {
  /// One indicator per cell of the cross product, letting the head fit every
  /// observed cell exactly.
  bool profile_block = true;
  bool pairwise_interactions = false;
  /// Real-valued per-profile inputs appended after the indicator features.
  std::size_t extra_features = 0;

  bool operator==(const FeatureOptions&) const = default;
};

inline constexpr std::uint64_t kMaxProfileBlock = 1u << 18;

struct SparseFeature {
  std::size_t index;
  double value;
};

/// Linear head plus softmax over the core options: logits = W x(profile).
/// Weights start at zero, i.e. the uniform prediction.
class LogitChoiceModel {
 public:
  LogitChoiceModel(SchemaPtr schema, FeatureOptions options = {});

  const SurveySchema& schema() const { return *schema_; }
  const SchemaPtr& schema_ptr() const { return schema_; }
  const FeatureOptions& options() const { return options_; }
  std::size_t num_options() const { return n_; }
  std::size_t num_features() const { return num_features_; }
  std::vector<std::string> feature_names() const;

  /// Row-major [num_options x num_features].
  std::span<double> weights() { return weights_; }
  std::span<const double> weights() const { return weights_; }
  double& weight(std::size_t option, std::size_t feature) { return weights_[option * num_features_ + feature]; }

  /// Per-profile extra inputs indexed by profile rank; must match
  /// options().extra_features in width.
  void set_extra_features(std::vector<std::vector<double>> per_profile);
  const std::vector<std::vector<double>>& extra_features() const { return extra_; }

  std::vector<SparseFeature> features(const BackgroundProfile& profile) const;
  ModelOutput predict(const BackgroundProfile& profile) const;

  /// Gradient of <upstream, probs> with respect to the weights, dense and
  /// row-major like weights().
  std::vector<double> predict_gradient(const BackgroundProfile& profile, std::span<const double> upstream) const;

  /// grad += dlogits (outer) x(profile). Used by the training losses.
  void accumulate_logit_gradient(const BackgroundProfile& profile, std::span<const double> dlogits,
                                 std::span<double> grad) const;

  nlohmann::json to_checkpoint() const;
  static LogitChoiceModel from_checkpoint(const nlohmann::json& doc, SchemaPtr schema);

 private:
  SchemaPtr schema_;
  FeatureOptions options_;
  std::size_t n_ = 0;
  std::vector<std::size_t> option_offset_;
  std::size_t profile_offset_ = 0;
  std::vector<std::pair<std::size_t, std::size_t>> pairs_;
  std::vector<std::size_t> pair_offset_;
  std::size_t extra_offset_ = 0;
  std::size_t num_features_ = 0;
  std::vector<double> weights_;
  std::vector<std::vector<double>> extra_;
};

inline constexpr std::string_view kDirectInstruction =
    "Answer with exactly one of the option labels above and output nothing else.";

/// Fills {{background_qa}}, {{core_question}} and {{instruction}} in the named
/// template. Both {{background_qa}} and {{core_question}} must appear.
std::string render_prompt(const SurveySchema& schema, const BackgroundProfile& profile,
                          std::string_view template_name);

}  // namespace dsa

#endif  // DSA_CHOICE_MODEL_HPP
