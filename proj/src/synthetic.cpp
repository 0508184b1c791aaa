// SPDX-License-Identifier: Apache-2.0
#include "dsa/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "dsa/error.hpp"
#include "dsa/hashing.hpp"
#include "dsa/quantile_shift.hpp"

namespace dsa {

namespace {

constexpr std::uint64_t kExclusionStream = 0xE1C1;
constexpr std::uint64_t kSampleStream = 0x5A3F;

std::vector<double> rescaled_scores(const SurveySchema& schema) {
  auto s = schema.core().scores();
  const double lo = s.front(), hi = s.back();
  for (double& v : s) v = 2.0 * (v - lo) / (hi - lo) - 1.0;
  return s;
}

double option_position(std::size_t option, std::size_t count) {
  return 2.0 * static_cast<double>(option) / static_cast<double>(count - 1) - 1.0;
}

std::size_t coupled_option(std::size_t prev, std::size_t prev_count, std::size_t count) {
  return static_cast<std::size_t>(
      std::lround(static_cast<double>(prev) * static_cast<double>(count - 1) / static_cast<double>(prev_count - 1)));
}

std::size_t draw(CounterRng& rng, std::span<const double> probs) {
  double u = rng.next_double();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // u fell in the rounding slack past the last partial sum.
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return i;
  }
  return probs.size() - 1;
}

void check_distribution(std::span<const double> p, const std::string& what) {
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) fail(ErrorCode::Validation, what + " has a negative or non-finite entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) fail(ErrorCode::Validation, what + " does not sum to 1");
}

template <class T>
T get_or(const nlohmann::json& doc, const char* key, T fallback) {
  return doc.contains(key) ? doc[key].get<T>() : fallback;
}

}  // namespace

std::string_view to_string(Structure s) {
  switch (s) {
    case Structure::ProductForm: return "product_form";
    case Structure::LocationShift: return "location_shift";
    case Structure::Correlated: return "correlated";
  }
  return "?";
}

void PopulationSpec::validate() const {
  if (!schema) fail(ErrorCode::Validation, "population spec has no schema");
  const std::size_t n = schema->num_options();
  const std::size_t m = schema->num_backgrounds();
  if (base.size() != n) fail(ErrorCode::Validation, "base must have one entry per core option");
  check_distribution(base, "base");
  if (factors.size() != m) fail(ErrorCode::Validation, "factors must have one table per background question");
  for (std::size_t i = 0; i < m; ++i) {
    if (factors[i].size() != schema->background(i).size()) {
      fail(ErrorCode::Validation, "factor table " + std::to_string(i) + " has the wrong number of options");
    }
    for (const auto& f : factors[i]) {
      if (f.size() != n) fail(ErrorCode::Validation, "factor vectors must have one entry per core option");
      for (double v : f) {
        if (!(v > 0.0) || !std::isfinite(v)) fail(ErrorCode::Validation, "factor entries must be positive");
      }
    }
  }
  if (offsets.size() != m) fail(ErrorCode::Validation, "offsets must have one row per background question");
  for (std::size_t i = 0; i < m; ++i) {
    if (offsets[i].size() != schema->background(i).size()) {
      fail(ErrorCode::Validation, "offset row " + std::to_string(i) + " has the wrong number of options");
    }
  }
  if (!(rho >= 0.0 && rho < 1.0)) fail(ErrorCode::Validation, "rho must lie in [0, 1)");
  if (!std::isfinite(kappa)) fail(ErrorCode::Validation, "kappa must be finite");
  if (marginals.size() != m) fail(ErrorCode::Validation, "background_marginals must cover every question");
  for (std::size_t i = 0; i < m; ++i) {
    if (marginals[i].size() != schema->background(i).size()) {
      fail(ErrorCode::Validation, "marginal " + std::to_string(i) + " has the wrong number of options");
    }
    check_distribution(marginals[i], "background_marginals[" + std::to_string(i) + "]");
  }
  if (!(excluded_fraction >= 0.0 && excluded_fraction < 1.0)) {
    fail(ErrorCode::Validation, "excluded_fraction must lie in [0, 1)");
  }
}

PopulationSpec PopulationSpec::from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  PopulationSpec spec;
  try {
    if (!doc.is_object()) fail(ErrorCode::Parse, "population spec must be a JSON object");
    spec.name = doc.value("name", std::string("population"));
    spec.seed = doc.value("seed", std::uint64_t{0});
    if (!doc.contains("schema")) fail(ErrorCode::Validation, "population spec lacks a schema");
    const auto& s = doc["schema"];
    if (s.is_string()) {
      std::filesystem::path p = s.get<std::string>();
      if (p.is_relative()) p = base_dir / p;
      spec.schema = std::make_shared<const SurveySchema>(load_schema(p));
    } else {
      spec.schema = std::make_shared<const SurveySchema>(SurveySchema::from_json(s));
    }
    const auto& schema = *spec.schema;
    const std::size_t n = schema.num_options();
    const std::size_t m = schema.num_backgrounds();

    std::string structure = doc.value("structure", std::string("product_form"));
    if (structure == "product_form") spec.structure = Structure::ProductForm;
    else if (structure == "location_shift") spec.structure = Structure::LocationShift;
    else if (structure == "correlated") spec.structure = Structure::Correlated;
    else fail(ErrorCode::Validation, "unknown structure '" + structure + "'");

    spec.base = get_or(doc, "base", std::vector<double>(n, 1.0 / static_cast<double>(n)));
    spec.rho = doc.value("rho", 0.0);
    spec.kappa = doc.value("kappa", 1.0);
    spec.excluded_fraction = doc.value("excluded_fraction", 0.0);

    spec.factors.resize(m);
    spec.offsets.resize(m);
    spec.marginals.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t k = schema.background(i).size();
      spec.factors[i].assign(k, std::vector<double>(n, 1.0));
      spec.offsets[i].assign(k, 0.0);
      spec.marginals[i].assign(k, 1.0 / static_cast<double>(k));
    }
    if (doc.contains("factors")) {
      auto f = doc["factors"].get<std::vector<std::vector<std::vector<double>>>>();
      if (f.size() != m) fail(ErrorCode::Validation, "factors must have one table per background question");
      spec.factors = std::move(f);
    }
    if (doc.contains("tilts")) {
      auto t = doc["tilts"].get<std::vector<std::vector<double>>>();
      if (t.size() != m) fail(ErrorCode::Validation, "tilts must have one row per background question");
      const auto z = rescaled_scores(schema);
      for (std::size_t i = 0; i < m; ++i) {
        if (t[i].size() != spec.factors[i].size()) fail(ErrorCode::Validation, "tilt row has the wrong size");
        for (std::size_t j = 0; j < t[i].size(); ++j) {
          if (spec.factors[i][j].size() != n) fail(ErrorCode::Validation, "factor vector has the wrong size");
          for (std::size_t c = 0; c < n; ++c) spec.factors[i][j][c] *= std::exp(t[i][j] * z[c]);
        }
      }
    }
    if (doc.contains("offsets")) spec.offsets = doc["offsets"].get<std::vector<std::vector<double>>>();
    if (doc.contains("background_marginals")) {
      spec.marginals = doc["background_marginals"].get<std::vector<std::vector<double>>>();
      // Accept unnormalized weights.
      for (auto& row : spec.marginals) {
        double total = std::accumulate(row.begin(), row.end(), 0.0);
        if (total > 0.0) {
          for (double& v : row) v /= total;
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("population spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

nlohmann::json PopulationSpec::to_json() const {
  return {{"name", name},
          {"seed", seed},
          {"schema", schema->to_json()},
          {"structure", std::string(dsa::to_string(structure))},
          {"base", base},
          {"factors", factors},
          {"offsets", offsets},
          {"rho", rho},
          {"kappa", kappa},
          {"background_marginals", marginals},
          {"excluded_fraction", excluded_fraction}};
}

std::set<std::uint64_t> PopulationSpec::excluded_profiles() const {
  std::set<std::uint64_t> out;
  const std::uint64_t total = schema->num_profiles();
  const auto count = static_cast<std::uint64_t>(std::llround(excluded_fraction * static_cast<double>(total)));
  if (count == 0) return out;
  std::vector<std::uint64_t> ranks(total);
  std::iota(ranks.begin(), ranks.end(), 0);
  CounterRng rng(seed, kExclusionStream);
  // Partial Fisher-Yates: the first `count` slots are the excluded ranks.
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint64_t j = i + rng.next_below(total - i);
    std::swap(ranks[i], ranks[j]);
    out.insert(ranks[i]);
  }
  return out;
}

PopulationSpec load_population(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open population spec " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, path.string() + ": " + e.what());
  }
  return PopulationSpec::from_json(doc, path.parent_path());
}

ChoiceDistribution true_distribution(const PopulationSpec& spec, const BackgroundProfile& profile) {
  const auto& schema = *spec.schema;
  schema.validate(profile);
  const std::size_t n = schema.num_options();
  const std::size_t m = schema.num_backgrounds();
  auto scores = schema.core().scores();

  if (spec.structure == Structure::LocationShift) {
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) total += spec.offsets[i][profile[i]];
    ShiftVector d;
    d.grid = QuantileGrid::uniform(101);
    d.deltas.assign(d.grid.size(), total);
    return apply_shift(ChoiceDistribution(spec.base, scores), d);
  }

  std::vector<double> log_w(n);
  for (std::size_t c = 0; c < n; ++c) {
    double v = std::log(std::max(spec.base[c], 1e-300));
    for (std::size_t i = 0; i < m; ++i) v += std::log(spec.factors[i][profile[i]][c]);
    log_w[c] = v;
  }
  if (spec.structure == Structure::Correlated && spec.rho > 0.0) {
    const auto z = rescaled_scores(schema);
    double coupling = 0.0;
    for (std::size_t i = 0; i + 1 < m; ++i) {
      coupling += option_position(profile[i], schema.background(i).size()) *
                  option_position(profile[i + 1], schema.background(i + 1).size());
    }
    for (std::size_t c = 0; c < n; ++c) log_w[c] += spec.rho * spec.kappa * coupling * z[c];
  }
  const double hi = *std::max_element(log_w.begin(), log_w.end());
  std::vector<double> w(n);
  for (std::size_t c = 0; c < n; ++c) w[c] = std::exp(log_w[c] - hi);
  return ChoiceDistribution::from_weights(w, std::move(scores));
}

double profile_mass(const PopulationSpec& spec, const BackgroundProfile& profile) {
  const auto& schema = *spec.schema;
  schema.validate(profile);
  double mass = spec.marginals[0][profile[0]];
  const bool coupled = spec.structure == Structure::Correlated && spec.rho > 0.0;
  for (std::size_t i = 1; i < schema.num_backgrounds(); ++i) {
    double p = spec.marginals[i][profile[i]];
    if (coupled) {
      std::size_t copy = coupled_option(profile[i - 1], schema.background(i - 1).size(), schema.background(i).size());
      p = (1.0 - spec.rho) * p + (copy == profile[i] ? spec.rho : 0.0);
    }
    mass *= p;
  }
  return mass;
}

SurveyDataset sample_dataset(const PopulationSpec& spec, std::size_t n, std::uint64_t seed) {
  if (n < 1) fail(ErrorCode::InvalidArgument, "sample_dataset: N must be >= 1");
  const auto& schema = *spec.schema;
  const std::size_t m = schema.num_backgrounds();
  const auto excluded = spec.excluded_profiles();
  const bool coupled = spec.structure == Structure::Correlated && spec.rho > 0.0;
  const std::uint64_t base_seed = mix64(spec.seed) ^ mix64(seed + 0x51ED);

  std::map<BackgroundProfile, ChoiceDistribution> truth_cache;
  SurveyDataset data{spec.schema, {}, spec.name};
  data.respondents.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    CounterRng rng(base_seed, kSampleStream + r);
    Respondent resp;
    resp.profile.choices.resize(m);
    for (std::size_t attempt = 0;; ++attempt) {
      if (attempt == 100'000) fail(ErrorCode::Validation, "sampling rejected 100000 excluded profiles in a row");
      for (std::size_t i = 0; i < m; ++i) {
        std::size_t opt = draw(rng, spec.marginals[i]);
        if (coupled && i > 0 && rng.next_double() < spec.rho) {
          opt = coupled_option(resp.profile[i - 1], schema.background(i - 1).size(), schema.background(i).size());
        }
        resp.profile.choices[i] = static_cast<std::uint32_t>(opt);
      }
      if (!excluded.contains(schema.profile_index(resp.profile))) break;
    }
    auto it = truth_cache.find(resp.profile);
    if (it == truth_cache.end()) it = truth_cache.emplace(resp.profile, true_distribution(spec, resp.profile)).first;
    resp.core_choice = static_cast<std::uint32_t>(draw(rng, it->second.probs()));
    data.respondents.push_back(std::move(resp));
  }
  return data;
}

DistributionTable truth_table(const PopulationSpec& spec) {
  DistributionTable table{spec.schema, {}};
  for (auto& profile : enumerate_profiles(*spec.schema)) {
    TableEntry entry{true_distribution(spec, profile), profile_mass(spec, profile)};
    table.entries.emplace(std::move(profile), std::move(entry));
  }
  return table;
}

}  // namespace dsa
