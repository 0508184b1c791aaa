// SPDX-License-Identifier: Apache-2.0
#ifndef DSA_SURVEY_MODEL_HPP
#define DSA_SURVEY_MODEL_HPP

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

namespace dsa {

inline constexpr std::uint64_t kDefaultProfileCap = 10'000'000;

struct CoreOption {
  std::string label;
  double score = 0.0;
};

/// The question whose answer distribution is simulated.
struct CoreQuestion {
  std::string id;
  std::string text;
  std::vector<CoreOption> options;

  std::size_t size() const { return options.size(); }
  std::vector<double> scores() const;
  std::vector<std::string> labels() const;
};

struct BackgroundQuestion {
  std::string id;
  std::string text;
  std::vector<std::string> options;

  std::size_t size() const { return options.size(); }
};

/// One option index per background question.
struct BackgroundProfile {
  std::vector<std::uint32_t> choices;

  std::size_t size() const { return choices.size(); }
  std::uint32_t operator[](std::size_t i) const { return choices[i]; }
  auto operator<=>(const BackgroundProfile&) const = default;
  bool operator==(const BackgroundProfile&) const = default;
};

/// Immutable after construction; the constructor enforces every invariant.
class SurveySchema {
 public:
  SurveySchema(CoreQuestion core, std::vector<BackgroundQuestion> backgrounds,
               std::map<std::string, std::string> prompt_templates,
               std::uint64_t profile_cap = kDefaultProfileCap);

  static SurveySchema from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
  /// Hex SHA-256 of the canonical JSON form.
  std::string hash() const;

  const CoreQuestion& core() const { return core_; }
  const std::vector<BackgroundQuestion>& backgrounds() const { return backgrounds_; }
  const BackgroundQuestion& background(std::size_t i) const { return backgrounds_.at(i); }
  std::size_t num_backgrounds() const { return backgrounds_.size(); }
  std::size_t num_options() const { return core_.size(); }
  const std::map<std::string, std::string>& prompt_templates() const { return templates_; }

  /// Size of the full cross product B1 x ... x Bm.
  std::uint64_t num_profiles() const { return num_profiles_; }
  std::uint64_t profile_cap() const { return profile_cap_; }

  /// Lexicographic rank of a profile within the cross product.
  std::uint64_t profile_index(const BackgroundProfile& profile) const;
  BackgroundProfile profile_at(std::uint64_t index) const;

  void validate(const BackgroundProfile& profile) const;
  std::string profile_key(const BackgroundProfile& profile) const;

  std::size_t find_background(const std::string& id) const;
  std::size_t core_option_index(const std::string& label) const;

 private:
  CoreQuestion core_;
  std::vector<BackgroundQuestion> backgrounds_;
  std::map<std::string, std::string> templates_;
  std::uint64_t num_profiles_ = 0;
  std::uint64_t profile_cap_ = kDefaultProfileCap;
};

using SchemaPtr = std::shared_ptr<const SurveySchema>;

struct Respondent {
  BackgroundProfile profile;
  std::uint32_t core_choice = 0;
};

struct SurveyDataset {
  SchemaPtr schema;
  std::vector<Respondent> respondents;
  std::string name;

  std::size_t size() const { return respondents.size(); }
};

SurveySchema load_schema(const std::filesystem::path& path);

/// Reads a respondent CSV: header of question ids plus the core id column,
/// cells are option labels. Extra columns are ignored.
SurveyDataset ingest_csv(const std::filesystem::path& path, SchemaPtr schema);
SurveyDataset parse_respondents(const std::string& text, SchemaPtr schema, std::string name = {});

void write_respondents(const SurveyDataset& data, std::ostream& out);

std::size_t hamming_distance(const BackgroundProfile& a, const BackgroundProfile& b);

std::vector<BackgroundProfile> enumerate_profiles(const SurveySchema& schema);
std::vector<BackgroundProfile> enumerate_profiles(const SurveySchema& schema, std::uint64_t cap);

}  // namespace dsa

#endif  // DSA_SURVEY_MODEL_HPP
