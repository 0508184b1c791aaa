// SPDX-License-Identifier: Apache-2.0
#ifndef DSA_SYNTHETIC_HPP
#define DSA_SYNTHETIC_HPP

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsa/distributions.hpp"

namespace dsa {

enum class Structure { ProductForm, LocationShift, Correlated };

std::string_view to_string(Structure s);

/// Ground-truth population over a schema.
///
/// JSON form:
///   {"name", "seed", "schema": {...} | "path.json", "structure",
///    "base": [n], "factors": [q][opt][n], "tilts": [q][opt],
///    "offsets": [q][opt], "rho", "kappa", "background_marginals": [q][opt],
///    "excluded_fraction"}
/// A tilt t gives the factor exp(t * z(score)) with z the score rescaled to
/// [-1, 1]; tilts and explicit factors multiply.
struct PopulationSpec {
  std::string name;
  SchemaPtr schema;
  Structure structure = Structure::ProductForm;
  std::vector<double> base;
  std::vector<std::vector<std::vector<double>>> factors;
  std::vector<std::vector<double>> offsets;
  /// Correlated only: strength of the pairwise coupling, in [0, 1).
  double rho = 0.0;
  double kappa = 1.0;
  std::vector<std::vector<double>> marginals;
  std::uint64_t seed = 0;
  /// Share of the cross product that sampling never produces.
  double excluded_fraction = 0.0;

  void validate() const;
  static PopulationSpec from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
  nlohmann::json to_json() const;
  /// Profile ranks excluded from sampling; deterministic in `seed`.
  std::set<std::uint64_t> excluded_profiles() const;
};

PopulationSpec load_population(const std::filesystem::path& path);

ChoiceDistribution true_distribution(const PopulationSpec& spec, const BackgroundProfile& profile);
/// Population share of a profile (sums to one over the cross product).
double profile_mass(const PopulationSpec& spec, const BackgroundProfile& profile);

/// N respondents: profile from the background marginals (coupled for the
/// correlated structure, never an excluded profile), core choice from the
/// true distribution. Respondent r draws from its own counter stream.
SurveyDataset sample_dataset(const PopulationSpec& spec, std::size_t n, std::uint64_t seed);

/// Every profile with its true distribution, weighted by population share.
DistributionTable truth_table(const PopulationSpec& spec);

}  // namespace dsa

#endif  // DSA_SYNTHETIC_HPP
