// SPDX-License-Identifier: Apache-2.0
#ifndef DSA_QUANTILE_SHIFT_HPP
#define DSA_QUANTILE_SHIFT_HPP

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "dsa/distributions.hpp"

namespace dsa {

inline constexpr std::size_t kDefaultMinCell = 5;

/// Quantile levels in [0, 1], strictly increasing, starting at 0 and ending at 1.
class QuantileGrid {
 public:
  /// Default grid: 0%, 10%, ..., 100%.
  QuantileGrid() : QuantileGrid(uniform(11)) {}
  explicit QuantileGrid(std::vector<double> levels);
  static QuantileGrid uniform(std::size_t count);

  std::size_t size() const { return levels_.size(); }
  const std::vector<double>& levels() const { return levels_; }
  bool operator==(const QuantileGrid&) const = default;

 private:
  std::vector<double> levels_;
};

struct QuantileProfile {
  QuantileGrid grid;
  std::vector<double> values;
};

enum class ShiftProvenance { Pair, Aggregated };

/// Quantile-space difference between two distributions, in score units.
struct ShiftVector {
  QuantileGrid grid;
  std::vector<double> deltas;
  ShiftProvenance provenance = ShiftProvenance::Pair;
  /// Sum of aggregation weights (0 for a plain pairwise shift).
  double weight_total = 0.0;
  /// Set for aggregated shifts: which edge this vector describes.
  std::optional<std::size_t> question, opt_a, opt_b;
  bool from_marginals = false;

  ShiftVector operator-() const;
  ShiftVector& operator+=(const ShiftVector& other);
};

nlohmann::json to_json(const ShiftVector& shift);
ShiftVector shift_from_json(const nlohmann::json& doc);

/// Option intervals under the uniform-spread convention: option j covers
/// [edge_j, edge_{j+1}], edges at score midpoints, outer edges half a gap out.
std::vector<double> option_edges(std::span<const double> scores);

/// Continuous inverse CDF of the uniform-spread density, one value per level.
QuantileProfile quantiles(const ChoiceDistribution& dist, const QuantileGrid& grid);
std::vector<double> quantile_values(std::span<const double> probs, std::span<const double> scores,
                                    std::span<const double> levels);

/// Rebuilds the distribution whose uniform-spread CDF best passes through the
/// points (values[k], levels[k]). Values are clamped to the score range and
/// made nondecreasing first.
ChoiceDistribution reconstruct(std::span<const double> levels, std::span<const double> values,
                               const std::vector<double>& scores);

ShiftVector shift(const ChoiceDistribution& a, const ChoiceDistribution& b, const QuantileGrid& grid);

/// Reference shift for changing background question `question` from option
/// `opt_b` to option `opt_a`, pooled over every context in which both cells
/// are observed with at least `min_cell` respondents.
ShiftVector aggregate_reference_shift(const EmpiricalTable& table, std::size_t question, std::size_t opt_a,
                                      std::size_t opt_b, const QuantileGrid& grid,
                                      std::size_t min_cell = kDefaultMinCell);

/// Transports `base` along `d` in quantile space.
ChoiceDistribution apply_shift(const ChoiceDistribution& base, const ShiftVector& d);

}  // namespace dsa

#endif  // DSA_QUANTILE_SHIFT_HPP
