// SPDX-License-Identifier: Apache-2.0
#include "dsa/quantile_shift.hpp"

#include <algorithm>
#include <cmath>

#include "dsa/error.hpp"

namespace dsa {

namespace {

constexpr int kRefineIterations = 3;
// Weight of the interpolation prior in the edge-CDF least-squares fit. Only
// decides edge values that the grid points leave undetermined.
constexpr double kPriorWeight = 1e-6;

// Right-continuous piecewise-linear CDF through (values[k], levels[k]).
double interpolated_cdf(std::span<const double> levels, std::span<const double> values, double x) {
  if (x < values.front()) return 0.0;
  if (x >= values.back()) return 1.0;
  auto it = std::upper_bound(values.begin(), values.end(), x);
  std::size_t k = static_cast<std::size_t>(it - values.begin()) - 1;  // values[k] <= x < values[k+1]
  double span = values[k + 1] - values[k];
  if (span <= 0.0) return levels[k];
  return levels[k] + (levels[k + 1] - levels[k]) * (x - values[k]) / span;
}

// Solves a symmetric tridiagonal system in place (Thomas algorithm).
void solve_tridiagonal(std::vector<double>& diag, std::vector<double>& off, std::vector<double>& rhs) {
  const std::size_t m = diag.size();
  for (std::size_t i = 1; i < m; ++i) {
    double f = off[i - 1] / diag[i - 1];
    diag[i] -= f * off[i - 1];
    rhs[i] -= f * rhs[i - 1];
  }
  rhs[m - 1] /= diag[m - 1];
  for (std::size_t i = m - 1; i-- > 0;) rhs[i] = (rhs[i] - off[i] * rhs[i + 1]) / diag[i];
}


}  // namespace

QuantileGrid::QuantileGrid(std::vector<double> levels) : levels_(std::move(levels)) {
  if (levels_.size() < 2) fail(ErrorCode::Validation, "quantile grid needs at least 2 levels");
  if (levels_.front() != 0.0 || levels_.back() != 1.0) {
    fail(ErrorCode::Validation, "quantile grid must start at 0 and end at 1");
  }
  for (std::size_t k = 1; k < levels_.size(); ++k) {
    if (!(levels_[k] > levels_[k - 1])) fail(ErrorCode::Validation, "quantile grid must be strictly increasing");
  }
}

QuantileGrid QuantileGrid::uniform(std::size_t count) {
  if (count < 2) fail(ErrorCode::Validation, "quantile grid needs at least 2 levels");
  std::vector<double> levels(count);
  for (std::size_t k = 0; k < count; ++k) levels[k] = static_cast<double>(k) / static_cast<double>(count - 1);
  levels.back() = 1.0;
  return QuantileGrid(std::move(levels));
}

ShiftVector ShiftVector::operator-() const {
  ShiftVector out = *this;
  for (double& d : out.deltas) d = -d;
  if (opt_a && opt_b) std::swap(out.opt_a, out.opt_b);
  return out;
}

ShiftVector& ShiftVector::operator+=(const ShiftVector& other) {
  if (!(grid == other.grid)) fail(ErrorCode::LengthMismatch, "shift vectors on different grids");
  for (std::size_t k = 0; k < deltas.size(); ++k) deltas[k] += other.deltas[k];
  provenance = ShiftProvenance::Aggregated;
  question.reset();
  opt_a.reset();
  opt_b.reset();
  return *this;
}

nlohmann::json to_json(const ShiftVector& s) {
  nlohmann::json doc{{"grid", s.grid.levels()},
                     {"deltas", s.deltas},
                     {"weight_total", s.weight_total},
                     {"provenance", s.provenance == ShiftProvenance::Pair ? "pair" : "aggregated"},
                     {"from_marginals", s.from_marginals}};
  doc["question"] = s.question ? nlohmann::json(*s.question) : nlohmann::json(nullptr);
  doc["opt_a"] = s.opt_a ? nlohmann::json(*s.opt_a) : nlohmann::json(nullptr);
  doc["opt_b"] = s.opt_b ? nlohmann::json(*s.opt_b) : nlohmann::json(nullptr);
  return doc;
}

ShiftVector shift_from_json(const nlohmann::json& doc) {
  try {
    ShiftVector s;
    s.grid = QuantileGrid(doc.at("grid").get<std::vector<double>>());
    s.deltas = doc.at("deltas").get<std::vector<double>>();
    if (s.deltas.size() != s.grid.size()) fail(ErrorCode::LengthMismatch, "shift deltas do not match grid");
    s.weight_total = doc.value("weight_total", 0.0);
    s.provenance = doc.value("provenance", "aggregated") == "pair" ? ShiftProvenance::Pair : ShiftProvenance::Aggregated;
    s.from_marginals = doc.value("from_marginals", false);
    if (doc.contains("question") && !doc["question"].is_null()) s.question = doc["question"].get<std::size_t>();
    if (doc.contains("opt_a") && !doc["opt_a"].is_null()) s.opt_a = doc["opt_a"].get<std::size_t>();
    if (doc.contains("opt_b") && !doc["opt_b"].is_null()) s.opt_b = doc["opt_b"].get<std::size_t>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("shift vector: ") + e.what());
  }
}

std::vector<double> option_edges(std::span<const double> scores) {
  const std::size_t n = scores.size();
  if (n < 2) fail(ErrorCode::Validation, "need at least 2 scores");
  std::vector<double> edges(n + 1);
  edges[0] = scores[0] - 0.5 * (scores[1] - scores[0]);
  for (std::size_t j = 1; j < n; ++j) edges[j] = 0.5 * (scores[j - 1] + scores[j]);
  edges[n] = scores[n - 1] + 0.5 * (scores[n - 1] - scores[n - 2]);
  return edges;
}

std::vector<double> quantile_values(std::span<const double> probs, std::span<const double> scores,
                                    std::span<const double> levels) {
  const std::size_t n = probs.size();
  const auto edges = option_edges(scores);
  std::size_t first = 0, last = n - 1;
  while (first < n && probs[first] <= 0.0) ++first;
  while (last > first && probs[last] <= 0.0) --last;
  if (first == n) fail(ErrorCode::Degenerate, "distribution has no mass");

  std::vector<double> out(levels.size());
  std::size_t j = first;
  double cum_before = 0.0;  // CDF at edges[j]
  for (std::size_t k = 0; k < levels.size(); ++k) {
    double u = levels[k];
    if (u <= 0.0) {
      out[k] = edges[first];
      continue;
    }
    if (u >= 1.0) {
      out[k] = edges[last + 1];
      continue;
    }
    // Levels are nondecreasing, so the option pointer only moves forward.
    while (j < last && (probs[j] <= 0.0 || cum_before + probs[j] < u)) {
      cum_before += probs[j];
      ++j;
    }
    double frac = probs[j] > 0.0 ? (u - cum_before) / probs[j] : 1.0;
    frac = std::clamp(frac, 0.0, 1.0);
    out[k] = edges[j] + frac * (edges[j + 1] - edges[j]);
  }
  return out;
}

QuantileProfile quantiles(const ChoiceDistribution& dist, const QuantileGrid& grid) {
  return {grid, quantile_values(dist.probs(), dist.scores(), grid.levels())};
}

ChoiceDistribution reconstruct(std::span<const double> levels, std::span<const double> values_in,
                               const std::vector<double>& scores) {
  if (levels.size() != values_in.size()) fail(ErrorCode::LengthMismatch, "levels and values differ in length");
  const std::size_t n = scores.size();
  const auto edges = option_edges(scores);

  std::vector<double> values(values_in.begin(), values_in.end());
  double running = edges.front();
  for (double& v : values) {
    v = std::clamp(v, edges.front(), edges.back());
    running = std::max(running, v);
    v = running;
  }

  if (values.back() - values.front() <= 1e-12) {
    // Everything collapsed onto one point: point mass on the nearest option.
    double x = values.front();
    std::size_t best = 0;
    for (std::size_t j = 1; j < n; ++j) {
      if (std::abs(scores[j] - x) < std::abs(scores[best] - x)) best = j;
    }
    std::vector<double> probs(n, 0.0);
    probs[best] = 1.0;
    return ChoiceDistribution(std::move(probs), scores);
  }

  // Unknowns: CDF at interior edges 1..n-1. CDF(edge_0) = 0, CDF(edge_n) = 1.
  const std::size_t m = n - 1;
  std::vector<double> diag(m, 0.0), off(m > 0 ? m - 1 : 0, 0.0), rhs(m, 0.0);
  for (std::size_t k = 0; k < levels.size(); ++k) {
    double x = values[k];
    std::size_t j = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), x) - edges.begin());
    j = std::clamp<std::size_t>(j, 1, n) - 1;  // edges[j] <= x <= edges[j+1]
    double t = (x - edges[j]) / (edges[j + 1] - edges[j]);
    // Solve (1 - t) F_j + t F_{j+1} = u.
    double u = levels[k];
    double ca = 1.0 - t, cb = t;
    bool a_free = j >= 1 && j <= m;
    bool b_free = j + 1 <= m;
    double known = 0.0;
    if (!b_free) known += cb * 1.0;  // F_n
    double r = u - known;
    if (a_free) {
      diag[j - 1] += ca * ca;
      rhs[j - 1] += ca * r;
    }
    if (b_free) {
      diag[j] += cb * cb;
      rhs[j] += cb * r;
    }
    if (a_free && b_free) off[j - 1] += ca * cb;
  }
  const double w2 = kPriorWeight * kPriorWeight;
  for (std::size_t i = 0; i < m; ++i) {
    double prior = interpolated_cdf(levels, values, edges[i + 1]);
    diag[i] += w2;
    rhs[i] += w2 * prior;
  }
  solve_tridiagonal(diag, off, rhs);

  std::vector<double> cdf(n + 1);
  cdf[0] = 0.0;
  cdf[n] = 1.0;
  double prev = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double v = std::clamp(rhs[i], 0.0, 1.0);
    prev = std::max(prev, v);
    cdf[i + 1] = prev;
  }
  std::vector<double> mass(n);
  for (std::size_t j = 0; j < n; ++j) mass[j] = std::max(0.0, cdf[j + 1] - cdf[j]);
  return ChoiceDistribution::from_weights(mass, scores);
}

ShiftVector shift(const ChoiceDistribution& a, const ChoiceDistribution& b, const QuantileGrid& grid) {
  if (a.size() != b.size()) fail(ErrorCode::LengthMismatch, "shift: distributions differ in length");
  auto qa = quantile_values(a.probs(), a.scores(), grid.levels());
  auto qb = quantile_values(b.probs(), b.scores(), grid.levels());
  ShiftVector out;
  out.grid = grid;
  out.deltas.resize(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) out.deltas[k] = qa[k] - qb[k];
  out.provenance = ShiftProvenance::Pair;
  return out;
}

ShiftVector aggregate_reference_shift(const EmpiricalTable& table, std::size_t question, std::size_t opt_a,
                                      std::size_t opt_b, const QuantileGrid& grid, std::size_t min_cell) {
  const auto& schema = table.schema();
  if (question >= schema.num_backgrounds()) fail(ErrorCode::InvalidArgument, "question index out of range");
  const std::size_t options = schema.background(question).size();
  if (opt_a >= options || opt_b >= options) fail(ErrorCode::InvalidArgument, "option index out of range");
  if (opt_a == opt_b) fail(ErrorCode::InvalidArgument, "reference shift needs two different options");
  if (table.cells().empty()) fail(ErrorCode::NoData, "empty table");

  ShiftVector out;
  out.grid = grid;
  out.deltas.assign(grid.size(), 0.0);
  out.provenance = ShiftProvenance::Aggregated;
  out.question = question;
  out.opt_a = opt_a;
  out.opt_b = opt_b;

  // Map iteration is lexicographic, so the accumulation order is fixed.
  double weight_total = 0.0;
  for (const auto& [profile, cell_a] : table.cells()) {
    if (profile[question] != opt_a || cell_a.support < min_cell) continue;
    BackgroundProfile other = profile;
    other.choices[question] = static_cast<std::uint32_t>(opt_b);
    const EmpiricalCell* cell_b = table.find(other);
    if (!cell_b || cell_b->support < min_cell) continue;
    double na = static_cast<double>(cell_a.support), nb = static_cast<double>(cell_b->support);
    double w = 2.0 * na * nb / (na + nb);
    auto qa = quantile_values(cell_a.dist.probs(), cell_a.dist.scores(), grid.levels());
    auto qb = quantile_values(cell_b->dist.probs(), cell_b->dist.scores(), grid.levels());
    for (std::size_t k = 0; k < grid.size(); ++k) out.deltas[k] += w * (qa[k] - qb[k]);
    weight_total += w;
  }

  if (weight_total > 0.0) {
    for (double& d : out.deltas) d /= weight_total;
    out.weight_total = weight_total;
    return out;
  }

  // No shared context qualifies: compare pooled marginals instead.
  auto counts_a = table.pooled_counts(question, opt_a);
  auto counts_b = table.pooled_counts(question, opt_b);
  std::size_t na = table.option_count(question, opt_a), nb = table.option_count(question, opt_b);
  if (na == 0 || nb == 0) {
    fail(ErrorCode::NoData, "no respondents with option '" + schema.background(question).options[na == 0 ? opt_a : opt_b] +
                                "' of question '" + schema.background(question).id + "'");
  }
  auto marginal = shift(table.smoothed(counts_a), table.smoothed(counts_b), grid);
  out.deltas = std::move(marginal.deltas);
  out.weight_total = 2.0 * static_cast<double>(na) * static_cast<double>(nb) / static_cast<double>(na + nb);
  out.from_marginals = true;
  return out;
}

ChoiceDistribution apply_shift(const ChoiceDistribution& base, const ShiftVector& d) {
  if (d.deltas.size() != d.grid.size()) fail(ErrorCode::LengthMismatch, "shift deltas do not match grid");
  const auto probs = base.probs();
  const auto& scores = base.scores();
  const std::size_t n = probs.size();
  const auto edges = option_edges(scores);
  const auto& grid = d.grid.levels();
  const auto anchors = quantile_values(probs, scores, grid);

  // Sample the base quantile function at the grid levels and at its own CDF
  // breakpoints (both sides of a jump over a zero-mass option), where it is
  // exactly piecewise linear.
  std::vector<std::pair<double, double>> points;
  points.reserve(grid.size() + 2 * n);
  for (std::size_t k = 0; k < grid.size(); ++k) points.emplace_back(grid[k], anchors[k]);
  double cum = 0.0;
  for (std::size_t j = 0; j + 1 < n; ++j) {
    if (probs[j] <= 0.0) continue;
    cum += probs[j];
    if (cum <= 0.0 || cum >= 1.0) continue;
    std::size_t next = j + 1;
    while (next < n && probs[next] <= 0.0) ++next;
    if (next == n) continue;
    points.emplace_back(cum, edges[j + 1]);
    if (next != j + 1) points.emplace_back(cum, edges[next]);
  }
  std::sort(points.begin(), points.end());

  // Between two grid levels the delta is interpolated in base-value space, so
  // the transported value moves monotonically between the two exact grid
  // targets and follows the base's shape in between.
  auto transported = [&](double level, double x) {
    auto it = std::upper_bound(grid.begin(), grid.end(), level);
    std::size_t k = it == grid.begin() ? 0 : static_cast<std::size_t>(it - grid.begin()) - 1;
    if (k + 1 >= grid.size()) return std::clamp(x + d.deltas.back(), edges.front(), edges.back());
    double x0 = anchors[k], x1 = anchors[k + 1];
    double t = x1 > x0 ? std::clamp((x - x0) / (x1 - x0), 0.0, 1.0)
                       : (level - grid[k]) / (grid[k + 1] - grid[k]);
    return std::clamp(x + d.deltas[k] + t * (d.deltas[k + 1] - d.deltas[k]), edges.front(), edges.back());
  };

  // Push the uniform level measure through the transported quantile function
  // segment by segment. The deltas need not keep it monotone, so this counts
  // the level measure landing below each edge rather than inverting.
  std::vector<double> below(n + 1, 0.0);
  below[n] = 1.0;
  for (std::size_t k = 0; k + 1 < points.size(); ++k) {
    const double len = points[k + 1].first - points[k].first;
    if (len <= 0.0) continue;
    double v0 = transported(points[k].first, points[k].second);
    double v1 = transported(points[k].first, points[k + 1].second);
    const double lo = std::min(v0, v1), hi = std::max(v0, v1);
    for (std::size_t j = 1; j < n; ++j) {
      const double e = edges[j];
      if (e <= lo) continue;
      below[j] += hi > lo ? len * std::min(1.0, (e - lo) / (hi - lo)) : len;
    }
  }

  std::vector<double> mass(n);
  for (std::size_t j = 0; j < n; ++j) mass[j] = std::max(0.0, std::min(below[j + 1], 1.0) - std::min(below[j], 1.0));

  // Grid targets: clamped, monotonized by running max.
  std::vector<double> target(grid.size());
  double running = edges.front();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    running = std::max(running, std::clamp(anchors[k] + d.deltas[k], edges.front(), edges.back()));
    target[k] = running;
  }
  if (target.back() - target.front() <= 1e-12) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < n; ++j) {
      if (std::abs(scores[j] - target.front()) < std::abs(scores[best] - target.front())) best = j;
    }
    std::vector<double> point(n, 0.0);
    point[best] = 1.0;
    return ChoiceDistribution(std::move(point), scores);
  }

  // The grid only says that levels [u_k, u_k+1] land in [T_k, T_k+1]. Starting
  // from the pushforward, reassign each level band to the options it covers in
  // proportion to the current estimate (EM for interval-censored mass). Any
  // distribution that meets every grid target is a fixed point.
  std::vector<double> next(n), share(n);
  for (int iter = 0; iter < kRefineIterations; ++iter) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
      const double du = grid[k + 1] - grid[k];
      const double lo = target[k], hi = target[k + 1];
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        double overlap = std::min(hi, edges[j + 1]) - std::max(lo, edges[j]);
        share[j] = 0.0;
        if (hi <= lo) {
          if (lo >= edges[j] && (lo < edges[j + 1] || j + 1 == n)) share[j] = 1.0;
        } else if (overlap > 0.0) {
          share[j] = mass[j] > 0.0 ? mass[j] * overlap / (edges[j + 1] - edges[j]) : 0.0;
        }
        total += share[j];
      }
      if (total <= 0.0) {
        // No current mass in the band: spread it by length.
        for (std::size_t j = 0; j < n; ++j) {
          double overlap = std::min(hi, edges[j + 1]) - std::max(lo, edges[j]);
          share[j] = overlap > 0.0 ? overlap : 0.0;
          total += share[j];
        }
      }
      if (total <= 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) next[j] += du * share[j] / total;
    }
    double change = 0.0;
    for (std::size_t j = 0; j < n; ++j) change += std::abs(next[j] - mass[j]);
    mass.swap(next);
    if (change < 1e-13) break;
  }
  return ChoiceDistribution::from_weights(mass, scores);
}

}  // namespace dsa
