// SPDX-License-Identifier: Apache-2.0
#include "dsa/distributions.hpp"

#include <cmath>
#include <numeric>

#include "dsa/error.hpp"

namespace dsa {

ChoiceDistribution::ChoiceDistribution(std::vector<double> probs, std::vector<double> scores)
    : probs_(std::move(probs)), scores_(std::move(scores)) {
  if (probs_.size() != scores_.size()) fail(ErrorCode::LengthMismatch, "probabilities and scores differ in length");
  if (probs_.size() < 2) fail(ErrorCode::Validation, "distribution needs at least 2 options");
  double total = 0.0;
  for (double& p : probs_) {
    if (!std::isfinite(p) || p < -1e-12) fail(ErrorCode::Validation, "negative or non-finite probability");
    if (p < 0.0) p = 0.0;
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) fail(ErrorCode::Validation, "probabilities do not sum to 1");
}

ChoiceDistribution ChoiceDistribution::from_weights(std::span<const double> weights, std::vector<double> scores) {
  double total = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) fail(ErrorCode::Validation, "negative or non-finite weight");
    total += w;
  }
  if (!(total > 0.0)) fail(ErrorCode::Degenerate, "weights have zero total mass");
  std::vector<double> probs(weights.begin(), weights.end());
  for (double& p : probs) p /= total;
  return ChoiceDistribution(std::move(probs), std::move(scores));
}

ChoiceDistribution ChoiceDistribution::uniform(std::vector<double> scores) {
  std::vector<double> probs(scores.size(), 1.0 / static_cast<double>(scores.size()));
  return ChoiceDistribution(std::move(probs), std::move(scores));
}

KlResult kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) fail(ErrorCode::LengthMismatch, "kld: length mismatch");
  KlResult out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    double qi = q[i];
    if (qi < kProbabilityFloor) {
      qi = kProbabilityFloor;
      out.clamped = true;
    }
    out.value += p[i] * std::log(p[i] / qi);
  }
  // Rounding can leave a tiny negative value for p == q.
  if (out.value < 0.0) out.value = 0.0;
  return out;
}

KlResult kld(const ChoiceDistribution& p, const ChoiceDistribution& q) {
  return kl_divergence(p.probs(), q.probs());
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) fail(ErrorCode::LengthMismatch, "jsd: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    const double a = p[i] > 0.0 ? p[i] * std::log(p[i] / m) : 0.0;
    const double b = q[i] > 0.0 ? q[i] * std::log(q[i] / m) : 0.0;
    // a + b commutes exactly, so jsd(p, q) == jsd(q, p) bit for bit.
    total += 0.5 * (a + b);
  }
  return std::max(total, 0.0);
}

double jsd(const ChoiceDistribution& p, const ChoiceDistribution& q) { return js_divergence(p.probs(), q.probs()); }

double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) fail(ErrorCode::LengthMismatch, "total_variation: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

EmpiricalTable::EmpiricalTable(SchemaPtr schema, std::map<BackgroundProfile, EmpiricalCell> cells, double alpha)
    : schema_(std::move(schema)), cells_(std::move(cells)), alpha_(alpha) {
  option_counts_.resize(schema_->num_backgrounds());
  for (std::size_t i = 0; i < schema_->num_backgrounds(); ++i) {
    option_counts_[i].assign(schema_->background(i).size(), 0);
  }
  for (const auto& [profile, cell] : cells_) {
    total_ += cell.support;
    for (std::size_t i = 0; i < profile.size(); ++i) option_counts_[i][profile[i]] += cell.support;
  }
}

const EmpiricalCell* EmpiricalTable::find(const BackgroundProfile& profile) const {
  auto it = cells_.find(profile);
  return it == cells_.end() ? nullptr : &it->second;
}

std::size_t EmpiricalTable::option_count(std::size_t question, std::size_t option) const {
  return option_counts_.at(question).at(option);
}

std::vector<std::size_t> EmpiricalTable::pooled_counts(std::size_t question, std::size_t option) const {
  std::vector<std::size_t> counts(schema_->num_options(), 0);
  for (const auto& [profile, cell] : cells_) {
    if (profile[question] != option) continue;
    for (std::size_t c = 0; c < counts.size(); ++c) counts[c] += cell.counts[c];
  }
  return counts;
}

std::vector<std::size_t> EmpiricalTable::overall_counts() const {
  std::vector<std::size_t> counts(schema_->num_options(), 0);
  for (const auto& [profile, cell] : cells_) {
    for (std::size_t c = 0; c < counts.size(); ++c) counts[c] += cell.counts[c];
  }
  return counts;
}

ChoiceDistribution EmpiricalTable::smoothed(std::span<const std::size_t> counts) const {
  std::vector<double> w(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) w[c] = static_cast<double>(counts[c]) + alpha_;
  return ChoiceDistribution::from_weights(w, schema_->core().scores());
}

EmpiricalTable estimate_empirical(const SurveyDataset& data, double alpha) {
  if (!(alpha >= 0.0)) fail(ErrorCode::InvalidArgument, "smoothing alpha must be >= 0");
  if (data.respondents.empty()) fail(ErrorCode::EmptyInput, "empty dataset");
  const auto& schema = *data.schema;
  const std::size_t n = schema.num_options();

  std::map<BackgroundProfile, std::vector<std::size_t>> counts;
  for (const auto& r : data.respondents) {
    auto& c = counts[r.profile];
    if (c.empty()) c.assign(n, 0);
    ++c[r.core_choice];
  }

  std::map<BackgroundProfile, EmpiricalCell> cells;
  const auto scores = schema.core().scores();
  for (auto& [profile, c] : counts) {
    std::size_t support = std::accumulate(c.begin(), c.end(), std::size_t{0});
    std::vector<double> w(n);
    for (std::size_t j = 0; j < n; ++j) w[j] = static_cast<double>(c[j]) + alpha;
    cells.emplace(profile, EmpiricalCell{ChoiceDistribution::from_weights(w, scores), std::move(c), support});
  }
  return EmpiricalTable(data.schema, std::move(cells), alpha);
}

double aggregate_metric(std::span<const WeightedValue> values, WeightMode mode) {
  if (values.empty()) fail(ErrorCode::EmptyInput, "aggregate_metric: no values");
  double num = 0.0, den = 0.0;
  for (const auto& v : values) {
    double w = mode == WeightMode::Uniform ? 1.0 : v.weight;
    num += w * v.value;
    den += w;
  }
  if (!(den > 0.0)) fail(ErrorCode::EmptyInput, "aggregate_metric: weights sum to zero");
  return num / den;
}

}  // namespace dsa
