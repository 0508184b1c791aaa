// SPDX-License-Identifier: Apache-2.0
#ifndef DSA_EVALUATION_HPP
#define DSA_EVALUATION_HPP

#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsa/backend.hpp"
#include "dsa/choice_model.hpp"
#include "dsa/distributions.hpp"
#include "dsa/synthetic.hpp"
#include "dsa/training.hpp"

namespace dsa {

enum class MethodKind { TS, Direct, PE, AAE, TKFT, DSA, QuantilePool, ProductPool };

std::string_view to_string(MethodKind kind);
MethodKind method_kind_from_string(std::string_view name);

struct MethodSpec {
  MethodKind kind = MethodKind::DSA;
  TrainConfig train;
  FeatureOptions features;
  std::optional<RemoteBackendConfig> backend;
  double smoothing = kDefaultSmoothing;
  /// Empty picks "default" (or "pe" for the PE baseline).
  std::string template_name;

  bool needs_backend() const;
  std::string effective_template() const;
  nlohmann::json to_json() const;
  /// {"kind": "DSA", "train": {...}, "features": {...}, "backend": {...}, ...}
  static MethodSpec from_json(const nlohmann::json& doc);
  static MethodSpec of(MethodKind kind);
};

struct MethodResult {
  /// Profile -> prediction; pooled estimators may leave profiles out.
  DistributionTable predictions;
  std::optional<TrainReport> report;
};

MethodResult run_method(const MethodSpec& method, const SurveyDataset& train, SchemaPtr schema);

/// The training-set baseline: smoothed observed cells, pooled marginal for
/// unseen profiles.
DistributionTable ts_predictions(const EmpiricalTable& table);

/// Predictions of a trained model for every profile of its schema.
DistributionTable model_predictions(const LogitChoiceModel& model);

struct ProfileMetrics {
  double kld = 0.0;
  double jsd = 0.0;
  double ts_kld = 0.0;
  double weight = 0.0;
  std::size_t support = 0;
  bool seen = false;
};

struct EvalOptions {
  WeightMode weighting = WeightMode::RespondentWeighted;
  /// Skip truth profiles the predictions do not cover instead of failing.
  bool partial = false;
};

struct EvalReport {
  std::map<BackgroundProfile, ProfileMetrics> per_profile;
  double kld = 0.0;
  double jsd = 0.0;
  double kld_seen = 0.0;
  double kld_unseen = 0.0;
  double improvement_fraction = 0.0;
  std::size_t skipped = 0;

  nlohmann::json summary_json() const;
};

/// Per-profile KLD(truth || prediction) and JSD. The improvement fraction
/// compares against ts_predictions(train_table) with strict inequality.
EvalReport evaluate(const DistributionTable& predictions, const DistributionTable& truth,
                    const EmpiricalTable& train_table, const EvalOptions& options = {});

std::vector<std::uint64_t> default_seeds();

/// Caps the worker threads used across seeds; 0 means hardware concurrency.
void set_thread_limit(std::size_t threads);

struct SweepPoint {
  std::size_t n = 0;
  double mean = 0.0;
  double stdev = 0.0;
};

struct SavingsReport {
  std::vector<SweepPoint> method;
  std::vector<SweepPoint> target;
  double target_at_max = 0.0;
  /// Sample size at which the method first matches target_at_max
  /// (interpolated in log N); unset when it never does.
  std::optional<double> matched_n;
  /// 1 - matched_n / max N; 0 when the level is never reached.
  double savings = 0.0;
  bool reached = false;

  nlohmann::json to_json() const;
};

/// Mean aggregate KLD of one method for one population at one N.
SweepPoint mean_kld(const MethodSpec& method, const PopulationSpec& spec, std::size_t n,
                    const std::vector<std::uint64_t>& seeds);

SavingsReport data_efficiency_sweep(const MethodSpec& method, const PopulationSpec& spec,
                                    const std::vector<std::size_t>& sizes, const MethodSpec& target,
                                    const std::vector<std::uint64_t>& seeds = default_seeds());

struct SizeSweepRow {
  std::string method;
  SweepPoint point;
};

std::vector<SizeSweepRow> size_sweep(const std::vector<MethodSpec>& methods, const PopulationSpec& spec,
                                     const std::vector<std::size_t>& sizes,
                                     const std::vector<std::uint64_t>& seeds = default_seeds());

/// Mean over profiles of the average pairwise JSD between per-template
/// predictions, times 100.
double prompt_consistency(const MethodSpec& method, const std::vector<std::string>& templates,
                          const SurveyDataset& train, SchemaPtr schema);

struct AblationRow {
  std::string phases;
  double kld = 0.0;
};

/// Phase-1-only versus phases 1+2 under one configuration.
std::vector<AblationRow> ablation(const SurveyDataset& train, SchemaPtr schema, const DistributionTable& truth,
                                  const MethodSpec& config = MethodSpec::of(MethodKind::DSA));

}  // namespace dsa

#endif  // DSA_EVALUATION_HPP
