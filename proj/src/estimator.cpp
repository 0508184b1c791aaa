// SPDX-License-Identifier: Apache-2.0
#include "dsa/estimator.hpp"

#include <cmath>
#include <map>
#include <optional>
#include <tuple>

#include "dsa/error.hpp"

namespace dsa {

std::string_view to_string(PoolMethod method) {
  switch (method) {
    case PoolMethod::MultiplicativeEdge: return "multiplicative_edge";
    case PoolMethod::ProductPool: return "product_pool";
    case PoolMethod::QuantilePool: return "quantile_pool";
  }
  return "unknown";
}

RatioVector transfer_ratio(const ChoiceDistribution& from, const ChoiceDistribution& to) {
  if (from.size() != to.size()) fail(ErrorCode::LengthMismatch, "transfer_ratio: length mismatch");
  RatioVector out;
  out.ratios.resize(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) {
    double denom = from[i];
    if (denom < kProbabilityFloor) {
      denom = kProbabilityFloor;
      out.floored = true;
    }
    out.ratios[i] = std::max(to[i] / denom, kProbabilityFloor);
  }
  return out;
}

ChoiceDistribution multiplicative_transfer(const ChoiceDistribution& base, const RatioVector& ratio) {
  if (base.size() != ratio.ratios.size()) fail(ErrorCode::LengthMismatch, "multiplicative_transfer: length mismatch");
  std::vector<double> w(base.size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = base[i] * ratio.ratios[i];
    total += w[i];
  }
  if (!(total > 0.0) || !std::isfinite(total)) fail(ErrorCode::Degenerate, "multiplicative_transfer: no mass left");
  return ChoiceDistribution::from_weights(w, base.scores());
}

std::vector<double> combine_factors(std::span<const double> base, std::span<const std::vector<double>> factors) {
  const std::size_t n = base.size();
  std::vector<double> logw(n);
  for (std::size_t c = 0; c < n; ++c) logw[c] = std::log(std::max(base[c], kProbabilityFloor));
  for (const auto& f : factors) {
    if (f.size() != n) fail(ErrorCode::LengthMismatch, "combine_factors: length mismatch");
    for (std::size_t c = 0; c < n; ++c) {
      logw[c] += std::log(std::max(f[c], kProbabilityFloor)) - std::log(std::max(base[c], kProbabilityFloor));
    }
  }
  double top = *std::max_element(logw.begin(), logw.end());
  double total = 0.0;
  for (double& v : logw) {
    v = std::exp(v - top);
    total += v;
  }
  for (double& v : logw) v /= total;
  return logw;
}

namespace {

// Support-weighted mean of log-probabilities, renormalized.
struct LogPool {
  std::vector<double> sum;
  double weight = 0.0;

  void add(const ChoiceDistribution& dist, double w) {
    if (sum.empty()) sum.assign(dist.size(), 0.0);
    for (std::size_t c = 0; c < dist.size(); ++c) sum[c] += w * std::log(std::max(dist[c], kProbabilityFloor));
    weight += w;
  }
  std::vector<double> distribution() const {
    std::vector<double> out(sum.size());
    double top = -INFINITY;
    for (double s : sum) top = std::max(top, s / weight);
    double total = 0.0;
    for (std::size_t c = 0; c < sum.size(); ++c) {
      out[c] = std::exp(sum[c] / weight - top);
      total += out[c];
    }
    for (double& v : out) v /= total;
    return out;
  }
};

}  // namespace

PooledEstimate product_pool_estimate(const EmpiricalTable& table, const SurveySchema& schema) {
  if (table.cells().empty()) fail(ErrorCode::NoData, "product_pool_estimate: empty table");
  const std::size_t m = schema.num_backgrounds();

  LogPool overall;
  std::vector<std::vector<LogPool>> per_option(m);
  for (std::size_t i = 0; i < m; ++i) per_option[i].resize(schema.background(i).size());
  for (const auto& [profile, cell] : table.cells()) {
    double w = static_cast<double>(cell.support);
    if (w <= 0.0) continue;
    overall.add(cell.dist, w);
    for (std::size_t i = 0; i < m; ++i) per_option[i][profile[i]].add(cell.dist, w);
  }
  if (overall.weight <= 0.0) fail(ErrorCode::NoData, "product_pool_estimate: no respondents");

  const auto base = overall.distribution();
  std::vector<std::vector<std::optional<std::vector<double>>>> factors(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (const auto& pool : per_option[i]) {
      factors[i].push_back(pool.weight > 0.0 ? std::optional(pool.distribution()) : std::nullopt);
    }
  }

  PooledEstimate out;
  out.method = PoolMethod::ProductPool;
  out.table.schema = table.schema_ptr();
  const auto scores = schema.core().scores();
  std::vector<std::vector<double>> chosen(m);
  for (const auto& profile : enumerate_profiles(schema)) {
    bool ok = true;
    for (std::size_t i = 0; i < m && ok; ++i) {
      const auto& f = factors[i][profile[i]];
      if (!f) ok = false;
      else chosen[i] = *f;
    }
    if (!ok) continue;
    auto probs = combine_factors(base, chosen);
    const EmpiricalCell* cell = table.find(profile);
    out.table.entries.emplace(profile, TableEntry{ChoiceDistribution(std::move(probs), scores),
                                                  cell ? static_cast<double>(cell->support) : 0.0});
  }
  out.coverage = static_cast<double>(out.table.entries.size()) / static_cast<double>(schema.num_profiles());
  return out;
}

PooledEstimate quantile_pool_estimate(const EmpiricalTable& table, const SurveySchema& schema,
                                      const QuantileGrid& grid, std::size_t min_cell) {
  if (table.cells().empty()) fail(ErrorCode::NoData, "quantile_pool_estimate: empty table");
  const std::size_t m = schema.num_backgrounds();

  // Reference shifts d(i, a, b) = q(a) - q(b); missing when NoData.
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::optional<ShiftVector>> refs;
  auto reference = [&](std::size_t i, std::size_t a, std::size_t b) -> const std::optional<ShiftVector>& {
    auto key = std::make_tuple(i, a, b);
    auto it = refs.find(key);
    if (it != refs.end()) return it->second;
    std::optional<ShiftVector> value;
    auto reverse = refs.find(std::make_tuple(i, b, a));
    if (reverse != refs.end()) {
      if (reverse->second) value = -*reverse->second;
    } else {
      try {
        value = aggregate_reference_shift(table, i, a, b, grid, min_cell);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NoData) throw;
      }
    }
    return refs.emplace(key, std::move(value)).first->second;
  };

  PooledEstimate out;
  out.method = PoolMethod::QuantilePool;
  out.table.schema = table.schema_ptr();
  const auto scores = schema.core().scores();
  const std::size_t n = schema.num_options();

  for (const auto& target : enumerate_profiles(schema)) {
    std::vector<double> acc(n, 0.0);
    double total_weight = 0.0;
    for (const auto& [source, cell] : table.cells()) {
      if (cell.support == 0) continue;
      ShiftVector path;
      path.grid = grid;
      path.deltas.assign(grid.size(), 0.0);
      bool ok = true;
      // Fixed question order 1..m.
      for (std::size_t i = 0; i < m && ok; ++i) {
        if (source[i] == target[i]) continue;
        const auto& d = reference(i, target[i], source[i]);
        if (!d) {
          ok = false;
          break;
        }
        for (std::size_t k = 0; k < grid.size(); ++k) path.deltas[k] += d->deltas[k];
      }
      if (!ok) continue;
      bool zero = std::all_of(path.deltas.begin(), path.deltas.end(), [](double v) { return v == 0.0; });
      double w = static_cast<double>(cell.support);
      if (zero) {
        for (std::size_t c = 0; c < n; ++c) acc[c] += w * cell.dist[c];
      } else {
        auto moved = apply_shift(cell.dist, path);
        for (std::size_t c = 0; c < n; ++c) acc[c] += w * moved[c];
      }
      total_weight += w;
    }
    if (total_weight <= 0.0) continue;
    const EmpiricalCell* own = table.find(target);
    out.table.entries.emplace(target, TableEntry{ChoiceDistribution::from_weights(acc, scores),
                                                 own ? static_cast<double>(own->support) : 0.0});
  }
  if (out.table.entries.empty()) fail(ErrorCode::NoPath, "quantile_pool_estimate: no profile reachable");
  out.coverage = static_cast<double>(out.table.entries.size()) / static_cast<double>(schema.num_profiles());
  return out;
}

}  // namespace dsa
