// SPDX-License-Identifier: Apache-2.0
#ifndef DSA_ESTIMATOR_HPP
#define DSA_ESTIMATOR_HPP

#include <span>
#include <string_view>
#include <vector>

#include "dsa/distributions.hpp"
#include "dsa/quantile_shift.hpp"

namespace dsa {

/// Option-wise likelihood ratio carrying one distribution onto another.
struct RatioVector {
  std::vector<double> ratios;
  bool floored = false;
};

enum class PoolMethod { MultiplicativeEdge, ProductPool, QuantilePool };

std::string_view to_string(PoolMethod method);

struct PooledEstimate {
  DistributionTable table;
  PoolMethod method = PoolMethod::ProductPool;
  /// Fraction of the cross product that received an estimate.
  double coverage = 0.0;
};

RatioVector transfer_ratio(const ChoiceDistribution& from, const ChoiceDistribution& to);
ChoiceDistribution multiplicative_transfer(const ChoiceDistribution& base, const RatioVector& ratio);

/// Normalized product base * prod_i (factor_i / base), computed in log space.
/// Multiplying the base or any factor by a positive constant does not change
/// the result.
std::vector<double> combine_factors(std::span<const double> base, std::span<const std::vector<double>> factors);

/// Log-linear pooling: each option's factor is the support-weighted geometric
/// mean of every observed cell carrying that option. Profiles whose options
/// were all observed somewhere get an estimate, seen or not.
PooledEstimate product_pool_estimate(const EmpiricalTable& table, const SurveySchema& schema);

/// Transports every observed cell to each target profile by chaining the
/// aggregated per-question reference shifts, then averages the transported
/// distributions weighted by cell support.
PooledEstimate quantile_pool_estimate(const EmpiricalTable& table, const SurveySchema& schema,
                                      const QuantileGrid& grid, std::size_t min_cell = kDefaultMinCell);

}  // namespace dsa

#endif  // DSA_ESTIMATOR_HPP
