// SPDX-License-Identifier: Apache-2.0
#include "dsa/survey_model.hpp"

#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "dsa/csv.hpp"
#include "dsa/error.hpp"
#include "dsa/hashing.hpp"
#include "dsa/io.hpp"

namespace dsa {

namespace {

const char* const kBuiltinTemplate =
    "{{background_qa}}\n\n{{core_question}}\n\n{{instruction}}";

void require_unique(const std::vector<std::string>& labels, const std::string& where) {
  std::set<std::string> seen;
  for (const auto& label : labels) {
    if (!seen.insert(label).second) {
      fail(ErrorCode::Validation, where + ": duplicate label '" + label + "'");
    }
  }
}

}  // namespace

std::vector<double> CoreQuestion::scores() const {
  std::vector<double> out;
  out.reserve(options.size());
  for (const auto& o : options) out.push_back(o.score);
  return out;
}

std::vector<std::string> CoreQuestion::labels() const {
  std::vector<std::string> out;
  out.reserve(options.size());
  for (const auto& o : options) out.push_back(o.label);
  return out;
}

SurveySchema::SurveySchema(CoreQuestion core, std::vector<BackgroundQuestion> backgrounds,
                           std::map<std::string, std::string> prompt_templates,
                           std::uint64_t profile_cap)
    : core_(std::move(core)),
      backgrounds_(std::move(backgrounds)),
      templates_(std::move(prompt_templates)),
      profile_cap_(profile_cap) {
  if (core_.size() < 2) fail(ErrorCode::Validation, "core question '" + core_.id + "' needs at least 2 options");
  require_unique(core_.labels(), "core question '" + core_.id + "'");
  for (std::size_t j = 1; j < core_.size(); ++j) {
    if (!(core_.options[j].score > core_.options[j - 1].score)) {
      fail(ErrorCode::Validation, "core option scores must be strictly increasing");
    }
  }
  if (backgrounds_.empty()) fail(ErrorCode::Validation, "schema needs at least one background question");

  std::set<std::string> ids{core_.id};
  std::uint64_t product = 1;
  for (const auto& q : backgrounds_) {
    if (!ids.insert(q.id).second) fail(ErrorCode::Validation, "duplicate question id '" + q.id + "'");
    if (q.size() < 2) fail(ErrorCode::Validation, "background question '" + q.id + "' needs at least 2 options");
    require_unique(q.options, "background question '" + q.id + "'");
    if (product > profile_cap_ / q.size()) {
      fail(ErrorCode::Validation, "background cross product exceeds the cap of " + std::to_string(profile_cap_));
    }
    product *= q.size();
  }
  num_profiles_ = product;
  if (!templates_.contains("default")) fail(ErrorCode::Validation, "prompt_templates lacks a 'default' template");
}

SurveySchema SurveySchema::from_json(const nlohmann::json& doc) {
  try {
    const auto& c = doc.at("core");
    CoreQuestion core;
    core.id = c.at("id").get<std::string>();
    core.text = c.value("text", "");
    const auto& opts = c.at("options");
    for (std::size_t j = 0; j < opts.size(); ++j) {
      CoreOption o;
      if (opts[j].is_string()) {
        o.label = opts[j].get<std::string>();
        o.score = static_cast<double>(j + 1);
      } else {
        o.label = opts[j].at("label").get<std::string>();
        o.score = opts[j].contains("score") ? opts[j]["score"].get<double>() : static_cast<double>(j + 1);
      }
      core.options.push_back(std::move(o));
    }

    std::vector<BackgroundQuestion> backgrounds;
    for (const auto& b : doc.at("backgrounds")) {
      BackgroundQuestion q;
      q.id = b.at("id").get<std::string>();
      q.text = b.value("text", "");
      q.options = b.at("options").get<std::vector<std::string>>();
      backgrounds.push_back(std::move(q));
    }

    std::map<std::string, std::string> templates;
    if (doc.contains("prompt_templates")) {
      templates = doc["prompt_templates"].get<std::map<std::string, std::string>>();
    } else {
      templates["default"] = kBuiltinTemplate;
    }
    std::uint64_t cap = doc.value("profile_cap", kDefaultProfileCap);
    return SurveySchema(std::move(core), std::move(backgrounds), std::move(templates), cap);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("schema: ") + e.what());
  }
}

nlohmann::json SurveySchema::to_json() const {
  nlohmann::json core_opts = nlohmann::json::array();
  for (const auto& o : core_.options) core_opts.push_back({{"label", o.label}, {"score", o.score}});
  nlohmann::json bgs = nlohmann::json::array();
  for (const auto& q : backgrounds_) bgs.push_back({{"id", q.id}, {"text", q.text}, {"options", q.options}});
  return {{"core", {{"id", core_.id}, {"text", core_.text}, {"options", core_opts}}},
          {"backgrounds", bgs},
          {"prompt_templates", templates_}};
}

std::string SurveySchema::hash() const { return sha256_hex(to_json().dump()); }

std::uint64_t SurveySchema::profile_index(const BackgroundProfile& profile) const {
  validate(profile);
  std::uint64_t index = 0;
  for (std::size_t i = 0; i < backgrounds_.size(); ++i) {
    index = index * backgrounds_[i].size() + profile.choices[i];
  }
  return index;
}

BackgroundProfile SurveySchema::profile_at(std::uint64_t index) const {
  if (index >= num_profiles_) fail(ErrorCode::InvalidArgument, "profile index out of range");
  BackgroundProfile p;
  p.choices.resize(backgrounds_.size());
  for (std::size_t i = backgrounds_.size(); i-- > 0;) {
    p.choices[i] = static_cast<std::uint32_t>(index % backgrounds_[i].size());
    index /= backgrounds_[i].size();
  }
  return p;
}

void SurveySchema::validate(const BackgroundProfile& profile) const {
  if (profile.size() != backgrounds_.size()) {
    fail(ErrorCode::SchemaMismatch, "profile has " + std::to_string(profile.size()) + " entries, schema has " +
                                        std::to_string(backgrounds_.size()) + " background questions");
  }
  for (std::size_t i = 0; i < profile.size(); ++i) {
    if (profile.choices[i] >= backgrounds_[i].size()) {
      fail(ErrorCode::SchemaMismatch, "option index out of range for question '" + backgrounds_[i].id + "'");
    }
  }
}

std::string SurveySchema::profile_key(const BackgroundProfile& profile) const {
  validate(profile);
  std::string key;
  for (std::size_t i = 0; i < profile.size(); ++i) {
    if (i) key += '|';
    key += backgrounds_[i].options[profile.choices[i]];
  }
  return key;
}

std::size_t SurveySchema::find_background(const std::string& id) const {
  for (std::size_t i = 0; i < backgrounds_.size(); ++i) {
    if (backgrounds_[i].id == id) return i;
  }
  fail(ErrorCode::MissingColumn, "no background question '" + id + "'");
}

std::size_t SurveySchema::core_option_index(const std::string& label) const {
  for (std::size_t j = 0; j < core_.size(); ++j) {
    if (core_.options[j].label == label) return j;
  }
  fail(ErrorCode::UnknownLabel, "unknown core option '" + label + "'");
}

SurveySchema load_schema(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, path.string() + ": " + e.what());
  }
  return SurveySchema::from_json(doc);
}

SurveyDataset parse_respondents(const std::string& text, SchemaPtr schema, std::string name) {
  auto rows = csv::parse(text);
  if (rows.empty()) fail(ErrorCode::MissingColumn, "respondent file has no header row");
  const auto& header = rows.front();

  auto column_of = [&](const std::string& id) -> std::size_t {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == id) return c;
    }
    fail(ErrorCode::MissingColumn, "missing column '" + id + "'");
  };

  const std::size_t m = schema->num_backgrounds();
  std::vector<std::size_t> bg_columns(m);
  for (std::size_t i = 0; i < m; ++i) bg_columns[i] = column_of(schema->background(i).id);
  const std::size_t core_column = column_of(schema->core().id);

  // Label -> index lookup per question.
  std::vector<std::map<std::string, std::uint32_t>> lookup(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& opts = schema->background(i).options;
    for (std::uint32_t j = 0; j < opts.size(); ++j) lookup[i][opts[j]] = j;
  }
  std::map<std::string, std::uint32_t> core_lookup;
  for (std::uint32_t j = 0; j < schema->num_options(); ++j) core_lookup[schema->core().options[j].label] = j;

  SurveyDataset data{schema, {}, std::move(name)};
  data.respondents.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    auto cell = [&](std::size_t column, const std::string& id) -> const std::string& {
      if (column >= row.size() || row[column].empty()) {
        fail(ErrorCode::Validation, "missing value at row " + std::to_string(r) + ", column '" + id + "'");
      }
      return row[column];
    };
    Respondent resp;
    resp.profile.choices.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      const auto& id = schema->background(i).id;
      const auto& value = cell(bg_columns[i], id);
      auto it = lookup[i].find(value);
      if (it == lookup[i].end()) {
        fail(ErrorCode::UnknownLabel,
             "unknown label '" + value + "' at row " + std::to_string(r) + ", column '" + id + "'");
      }
      resp.profile.choices[i] = it->second;
    }
    const auto& core_value = cell(core_column, schema->core().id);
    auto it = core_lookup.find(core_value);
    if (it == core_lookup.end()) {
      fail(ErrorCode::UnknownLabel, "unknown label '" + core_value + "' at row " + std::to_string(r) +
                                        ", column '" + schema->core().id + "'");
    }
    resp.core_choice = it->second;
    data.respondents.push_back(std::move(resp));
  }
  return data;
}

SurveyDataset ingest_csv(const std::filesystem::path& path, SchemaPtr schema) {
  return parse_respondents(read_text(path), std::move(schema), path.stem().string());
}

void write_respondents(const SurveyDataset& data, std::ostream& out) {
  const auto& schema = *data.schema;
  csv::Row header;
  for (const auto& q : schema.backgrounds()) header.push_back(q.id);
  header.push_back(schema.core().id);
  csv::write_row(out, header);
  for (const auto& r : data.respondents) {
    csv::Row row;
    for (std::size_t i = 0; i < schema.num_backgrounds(); ++i) {
      row.push_back(schema.background(i).options[r.profile.choices[i]]);
    }
    row.push_back(schema.core().options[r.core_choice].label);
    csv::write_row(out, row);
  }
}

std::size_t hamming_distance(const BackgroundProfile& a, const BackgroundProfile& b) {
  if (a.size() != b.size()) fail(ErrorCode::SchemaMismatch, "profiles have different lengths");
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a.choices[i] != b.choices[i];
  return d;
}

std::vector<BackgroundProfile> enumerate_profiles(const SurveySchema& schema, std::uint64_t cap) {
  if (schema.num_profiles() > cap) {
    fail(ErrorCode::TooLarge, "cross product of " + std::to_string(schema.num_profiles()) +
                                  " profiles exceeds cap " + std::to_string(cap));
  }
  std::vector<BackgroundProfile> out;
  out.reserve(schema.num_profiles());
  BackgroundProfile p;
  p.choices.assign(schema.num_backgrounds(), 0);
  for (std::uint64_t k = 0; k < schema.num_profiles(); ++k) {
    out.push_back(p);
    // Odometer increment, last question fastest.
    for (std::size_t i = schema.num_backgrounds(); i-- > 0;) {
      if (++p.choices[i] < schema.background(i).size()) break;
      p.choices[i] = 0;
    }
  }
  return out;
}

std::vector<BackgroundProfile> enumerate_profiles(const SurveySchema& schema) {
  return enumerate_profiles(schema, schema.profile_cap());
}

}  // namespace dsa
