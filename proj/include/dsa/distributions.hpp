// SPDX-License-Identifier: Apache-2.0
#ifndef DSA_DISTRIBUTIONS_HPP
#define DSA_DISTRIBUTIONS_HPP

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "dsa/survey_model.hpp"

namespace dsa {

inline constexpr double kProbabilityFloor = 1e-9;
inline constexpr double kDefaultSmoothing = 0.5;

/// Probability vector over the core options, carrying the option scores it
/// was built against. Construction validates nonnegativity and unit mass.
class ChoiceDistribution {
 public:
  ChoiceDistribution() = default;
  ChoiceDistribution(std::vector<double> probs, std::vector<double> scores);

  /// Normalizes nonnegative weights (must have positive total).
  static ChoiceDistribution from_weights(std::span<const double> weights, std::vector<double> scores);
  static ChoiceDistribution uniform(std::vector<double> scores);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const { return probs_; }
  const std::vector<double>& scores() const { return scores_; }

 private:
  std::vector<double> probs_;
  std::vector<double> scores_;
};

struct KlResult {
  double value = 0.0;
  /// True when some q_i was raised to the floor to keep the log finite.
  bool clamped = false;
};

/// KL(p || q) in nats with 0 ln 0 = 0; q is floor-clamped at 1e-9.
KlResult kld(const ChoiceDistribution& p, const ChoiceDistribution& q);
KlResult kl_divergence(std::span<const double> p, std::span<const double> q);

/// Jensen-Shannon divergence in nats, bounded by ln 2.
double jsd(const ChoiceDistribution& p, const ChoiceDistribution& q);
double js_divergence(std::span<const double> p, std::span<const double> q);

double total_variation(std::span<const double> p, std::span<const double> q);

struct EmpiricalCell {
  ChoiceDistribution dist;
  std::vector<std::size_t> counts;
  std::size_t support = 0;
};

/// Smoothed per-profile choice distributions of a training sample. Profiles
/// with no respondents are absent.
class EmpiricalTable {
 public:
  EmpiricalTable(SchemaPtr schema, std::map<BackgroundProfile, EmpiricalCell> cells, double alpha);

  const SurveySchema& schema() const { return *schema_; }
  const SchemaPtr& schema_ptr() const { return schema_; }
  const std::map<BackgroundProfile, EmpiricalCell>& cells() const { return cells_; }
  const EmpiricalCell* find(const BackgroundProfile& profile) const;
  std::size_t total_respondents() const { return total_; }
  double smoothing_alpha() const { return alpha_; }

  /// Respondents choosing `option` on background question `question`.
  std::size_t option_count(std::size_t question, std::size_t option) const;
  /// Core-choice counts pooled over every cell with the given option.
  std::vector<std::size_t> pooled_counts(std::size_t question, std::size_t option) const;
  /// Core-choice counts pooled over all respondents.
  std::vector<std::size_t> overall_counts() const;
  /// Smoothed distribution built from raw counts with this table's alpha.
  ChoiceDistribution smoothed(std::span<const std::size_t> counts) const;

 private:
  SchemaPtr schema_;
  std::map<BackgroundProfile, EmpiricalCell> cells_;
  double alpha_;
  std::size_t total_ = 0;
  std::vector<std::vector<std::size_t>> option_counts_;
};

EmpiricalTable estimate_empirical(const SurveyDataset& data, double alpha = kDefaultSmoothing);

/// Profile -> distribution map used for predictions, ground truth and pooled
/// estimates alike. `weight` is the cell's ground-truth mass or count.
struct TableEntry {
  ChoiceDistribution dist;
  double weight = 1.0;
};

struct DistributionTable {
  SchemaPtr schema;
  std::map<BackgroundProfile, TableEntry> entries;

  const TableEntry* find(const BackgroundProfile& p) const {
    auto it = entries.find(p);
    return it == entries.end() ? nullptr : &it->second;
  }
};

enum class WeightMode { Uniform, RespondentWeighted };

struct WeightedValue {
  double value = 0.0;
  double weight = 1.0;
};

double aggregate_metric(std::span<const WeightedValue> values, WeightMode mode = WeightMode::RespondentWeighted);

}  // namespace dsa

#endif  // DSA_DISTRIBUTIONS_HPP
