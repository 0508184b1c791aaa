// SPDX-License-Identifier: Apache-2.0
#include "dsa/dsa.h"

#include <cstring>
#include <filesystem>
#include <memory>
#include <sstream>
#include <string>

#include <json.hpp>

#include "dsa/distributions.hpp"
#include "dsa/error.hpp"
#include "dsa/evaluation.hpp"
#include "dsa/hashing.hpp"
#include "dsa/io.hpp"
#include "dsa/survey_model.hpp"
#include "dsa/synthetic.hpp"
#include "dsa/training.hpp"

struct dsa_schema {
  dsa::SchemaPtr schema;
};
struct dsa_dataset {
  dsa::SurveyDataset data;
};
struct dsa_population {
  dsa::PopulationSpec spec;
};
struct dsa_table {
  dsa::DistributionTable table;
  std::string method;
  double coverage = 1.0;
};
struct dsa_model {
  dsa::LogitChoiceModel model;
};

namespace {

thread_local std::string g_last_error;

using nlohmann::json;

dsa_status status_of(dsa::ErrorCode code) {
  using dsa::ErrorCode;
  switch (code) {
    case ErrorCode::InvalidArgument: return DSA_ERR_INVALID_ARGUMENT;
    case ErrorCode::Parse: return DSA_ERR_PARSE;
    case ErrorCode::Validation: return DSA_ERR_VALIDATION;
    case ErrorCode::Io: return DSA_ERR_IO;
    case ErrorCode::UnknownLabel: return DSA_ERR_UNKNOWN_LABEL;
    case ErrorCode::MissingColumn: return DSA_ERR_MISSING_COLUMN;
    case ErrorCode::SchemaMismatch: return DSA_ERR_SCHEMA_MISMATCH;
    case ErrorCode::TooLarge: return DSA_ERR_TOO_LARGE;
    case ErrorCode::EmptyInput: return DSA_ERR_EMPTY_INPUT;
    case ErrorCode::LengthMismatch: return DSA_ERR_LENGTH_MISMATCH;
    case ErrorCode::NoData: return DSA_ERR_NO_DATA;
    case ErrorCode::NoPath: return DSA_ERR_NO_PATH;
    case ErrorCode::Degenerate: return DSA_ERR_DEGENERATE;
    case ErrorCode::UnknownTemplate: return DSA_ERR_UNKNOWN_TEMPLATE;
    case ErrorCode::UnboundPlaceholder: return DSA_ERR_UNBOUND_PLACEHOLDER;
    case ErrorCode::BackendUnavailable: return DSA_ERR_BACKEND_UNAVAILABLE;
    case ErrorCode::MalformedResponse: return DSA_ERR_MALFORMED_RESPONSE;
    case ErrorCode::OptionMissing: return DSA_ERR_OPTION_MISSING;
    case ErrorCode::MissingReference: return DSA_ERR_MISSING_REFERENCE;
    case ErrorCode::Diverged: return DSA_ERR_DIVERGED;
    case ErrorCode::BackendRequired: return DSA_ERR_BACKEND_REQUIRED;
    case ErrorCode::CoverageGap: return DSA_ERR_COVERAGE_GAP;
  }
  return DSA_ERR_INTERNAL;
}

template <class Fn>
dsa_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    fn();
    return DSA_OK;
  } catch (const dsa::Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const json::exception& e) {
    g_last_error = e.what();
    return DSA_ERR_PARSE;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return DSA_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DSA_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return DSA_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) dsa::fail(dsa::ErrorCode::InvalidArgument, std::string(what) + " is null");
}

char* dup_string(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

json parse_json(const char* text, const char* what) {
  require(text, what);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    dsa::fail(dsa::ErrorCode::Parse, std::string(what) + ": " + e.what());
  }
}

dsa::MethodSpec method_from(const char* method_json) {
  return dsa::MethodSpec::from_json(parse_json(method_json, "method_json"));
}

std::filesystem::path resolve(const json& cfg, const std::string& key) {
  auto p = std::filesystem::path(cfg.at(key).get<std::string>());
  if (p.is_relative() && cfg.contains("base_dir")) p = std::filesystem::path(cfg["base_dir"].get<std::string>()) / p;
  return p;
}

std::vector<std::uint64_t> seeds_from(const json& cfg) {
  if (!cfg.contains("seeds")) return dsa::default_seeds();
  auto seeds = cfg["seeds"].get<std::vector<std::uint64_t>>();
  if (seeds.empty()) dsa::fail(dsa::ErrorCode::InvalidArgument, "seed list is empty");
  return seeds;
}

// Training data for single-dataset sweeps: either sampled from a population
// or read from a respondent CSV against a schema.
struct SweepInputs {
  dsa::SchemaPtr schema;
  dsa::SurveyDataset train;
  std::optional<dsa::DistributionTable> truth;
};

SweepInputs inputs_from(const json& cfg, bool need_truth) {
  SweepInputs in;
  if (cfg.contains("population")) {
    auto spec = dsa::load_population(resolve(cfg, "population"));
    in.schema = spec.schema;
    in.train = dsa::sample_dataset(spec, cfg.value("n", std::size_t{4000}), cfg.value("seed", std::uint64_t{0}));
    if (need_truth) in.truth = dsa::truth_table(spec);
    return in;
  }
  if (!cfg.contains("schema") || !cfg.contains("data")) {
    dsa::fail(dsa::ErrorCode::InvalidArgument, "sweep needs 'population' or 'schema' plus 'data'");
  }
  in.schema = std::make_shared<const dsa::SurveySchema>(dsa::load_schema(resolve(cfg, "schema")));
  in.train = dsa::ingest_csv(resolve(cfg, "data"), in.schema);
  if (need_truth) {
    if (!cfg.contains("truth")) dsa::fail(dsa::ErrorCode::InvalidArgument, "sweep needs a 'truth' table");
    in.truth = dsa::read_table_csv(resolve(cfg, "truth"), in.schema);
  }
  return in;
}

std::vector<std::size_t> sizes_from(const json& cfg) {
  if (!cfg.contains("sizes")) dsa::fail(dsa::ErrorCode::InvalidArgument, "sweep needs 'sizes'");
  return cfg["sizes"].get<std::vector<std::size_t>>();
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

json sweep(const std::string& kind, const json& cfg) {
  json out;
  std::ostringstream csv;
  if (kind == "data_efficiency") {
    auto spec = dsa::load_population(resolve(cfg, "population"));
    auto method = dsa::MethodSpec::from_json(cfg.value("method", json("DSA")));
    auto target = dsa::MethodSpec::from_json(cfg.value("target", json("TS")));
    auto rep = dsa::data_efficiency_sweep(method, spec, sizes_from(cfg), target, seeds_from(cfg));
    out["summary"] = rep.to_json();
    out["summary"]["method_name"] = std::string(dsa::to_string(method.kind));
    out["summary"]["target_name"] = std::string(dsa::to_string(target.kind));
    csv << "method,n,kld_mean,kld_stdev\n";
    for (const auto& p : rep.method) csv << dsa::to_string(method.kind) << ',' << p.n << ',' << fmt(p.mean) << ',' << fmt(p.stdev) << '\n';
    for (const auto& p : rep.target) csv << "target:" << dsa::to_string(target.kind) << ',' << p.n << ',' << fmt(p.mean) << ',' << fmt(p.stdev) << '\n';
  } else if (kind == "size") {
    auto spec = dsa::load_population(resolve(cfg, "population"));
    std::vector<dsa::MethodSpec> methods;
    for (const auto& m : cfg.value("methods", json::array({"TS", "DSA"}))) methods.push_back(dsa::MethodSpec::from_json(m));
    auto rows = dsa::size_sweep(methods, spec, sizes_from(cfg), seeds_from(cfg));
    csv << "method,n,kld_mean,kld_stdev\n";
    json rows_json = json::array();
    for (const auto& r : rows) {
      csv << r.method << ',' << r.point.n << ',' << fmt(r.point.mean) << ',' << fmt(r.point.stdev) << '\n';
      rows_json.push_back({{"method", r.method}, {"n", r.point.n}, {"kld_mean", r.point.mean}, {"kld_stdev", r.point.stdev}});
    }
    out["summary"] = {{"rows", rows_json}};
  } else if (kind == "ablation") {
    auto in = inputs_from(cfg, true);
    auto method = dsa::MethodSpec::from_json(cfg.value("method", json("DSA")));
    auto rows = dsa::ablation(in.train, in.schema, *in.truth, method);
    csv << "phases,kld\n";
    json rows_json = json::array();
    for (const auto& r : rows) {
      csv << r.phases << ',' << fmt(r.kld) << '\n';
      rows_json.push_back({{"phases", r.phases}, {"kld", r.kld}});
    }
    out["summary"] = {{"rows", rows_json}};
  } else if (kind == "prompt") {
    auto in = inputs_from(cfg, false);
    auto method = dsa::MethodSpec::from_json(cfg.value("method", json("PE")));
    if (!method.backend) {
      dsa::fail(dsa::ErrorCode::BackendRequired,
                "prompt sweep needs a backend: set method.backend.endpoint or method.backend.stub");
    }
    auto templates = cfg.contains("templates") ? cfg["templates"].get<std::vector<std::string>>() : [&] {
      std::vector<std::string> names;
      for (const auto& [name, text] : in.schema->prompt_templates()) names.push_back(name);
      return names;
    }();
    double value = dsa::prompt_consistency(method, templates, in.train, in.schema);
    csv << "method,templates,jsd_x100\n" << dsa::to_string(method.kind) << ',' << templates.size() << ',' << fmt(value) << '\n';
    out["summary"] = {{"method", std::string(dsa::to_string(method.kind))}, {"templates", templates}, {"jsd_x100", value}};
  } else {
    dsa::fail(dsa::ErrorCode::InvalidArgument, "unknown sweep kind '" + kind + "'");
  }
  out["csv"] = csv.str();
  return out;
}

std::string table_csv(const dsa_table& t) {
  std::ostringstream s;
  dsa::write_table_csv(t.table, s, t.method, t.coverage);
  return s.str();
}

// Raw arrays to validated distributions (scores are irrelevant to the metrics).
std::pair<dsa::ChoiceDistribution, dsa::ChoiceDistribution> checked_pair(const double* p, const double* q, size_t n) {
  if (n == 0) dsa::fail(dsa::ErrorCode::InvalidArgument, "distributions must have at least one entry");
  std::vector<double> scores(n);
  for (size_t i = 0; i < n; ++i) scores[i] = static_cast<double>(i + 1);
  return {dsa::ChoiceDistribution(std::vector<double>(p, p + n), scores),
          dsa::ChoiceDistribution(std::vector<double>(q, q + n), scores)};
}

}  // namespace

extern "C" {

const char* dsa_version(void) { return "0.1.0"; }

const char* dsa_status_name(dsa_status status) {
  switch (status) {
    case DSA_OK: return "ok";
    case DSA_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case DSA_ERR_PARSE: return "parse";
    case DSA_ERR_VALIDATION: return "validation";
    case DSA_ERR_IO: return "io";
    case DSA_ERR_UNKNOWN_LABEL: return "unknown_label";
    case DSA_ERR_MISSING_COLUMN: return "missing_column";
    case DSA_ERR_SCHEMA_MISMATCH: return "schema_mismatch";
    case DSA_ERR_TOO_LARGE: return "too_large";
    case DSA_ERR_EMPTY_INPUT: return "empty_input";
    case DSA_ERR_LENGTH_MISMATCH: return "length_mismatch";
    case DSA_ERR_NO_DATA: return "no_data";
    case DSA_ERR_NO_PATH: return "no_path";
    case DSA_ERR_DEGENERATE: return "degenerate";
    case DSA_ERR_UNKNOWN_TEMPLATE: return "unknown_template";
    case DSA_ERR_UNBOUND_PLACEHOLDER: return "unbound_placeholder";
    case DSA_ERR_BACKEND_UNAVAILABLE: return "backend_unavailable";
    case DSA_ERR_MALFORMED_RESPONSE: return "malformed_response";
    case DSA_ERR_OPTION_MISSING: return "option_missing";
    case DSA_ERR_MISSING_REFERENCE: return "missing_reference";
    case DSA_ERR_DIVERGED: return "diverged";
    case DSA_ERR_BACKEND_REQUIRED: return "backend_required";
    case DSA_ERR_COVERAGE_GAP: return "coverage_gap";
    case DSA_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* dsa_last_error(void) { return g_last_error.c_str(); }

void dsa_string_free(char* s) { std::free(s); }

dsa_status dsa_set_threads(size_t threads) {
  return guarded([&] { dsa::set_thread_limit(threads); });
}

dsa_status dsa_sha256_file(const char* path, char** hex_out) {
  return guarded([&] {
    require(path, "path");
    require(hex_out, "hex_out");
    *hex_out = dup_string(dsa::sha256_file(path));
  });
}

dsa_status dsa_schema_load(const char* path, dsa_schema** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new dsa_schema{std::make_shared<const dsa::SurveySchema>(dsa::load_schema(path))};
  });
}

dsa_status dsa_schema_from_json(const char* text, dsa_schema** out) {
  return guarded([&] {
    require(out, "out");
    auto doc = parse_json(text, "schema json");
    *out = new dsa_schema{std::make_shared<const dsa::SurveySchema>(dsa::SurveySchema::from_json(doc))};
  });
}

dsa_status dsa_schema_to_json(const dsa_schema* schema, char** json_out) {
  return guarded([&] {
    require(schema, "schema");
    require(json_out, "json_out");
    *json_out = dup_string(schema->schema->to_json().dump(2));
  });
}

dsa_status dsa_schema_hash(const dsa_schema* schema, char** hex_out) {
  return guarded([&] {
    require(schema, "schema");
    require(hex_out, "hex_out");
    *hex_out = dup_string(schema->schema->hash());
  });
}

uint64_t dsa_schema_num_profiles(const dsa_schema* schema) { return schema ? schema->schema->num_profiles() : 0; }

size_t dsa_schema_num_options(const dsa_schema* schema) { return schema ? schema->schema->num_options() : 0; }

void dsa_schema_free(dsa_schema* schema) { delete schema; }

dsa_status dsa_dataset_load_csv(const dsa_schema* schema, const char* path, dsa_dataset** out) {
  return guarded([&] {
    require(schema, "schema");
    require(path, "path");
    require(out, "out");
    *out = new dsa_dataset{dsa::ingest_csv(path, schema->schema)};
  });
}

dsa_status dsa_dataset_write_csv(const dsa_dataset* data, const char* path) {
  return guarded([&] {
    require(data, "data");
    require(path, "path");
    std::ostringstream s;
    dsa::write_respondents(data->data, s);
    dsa::write_text(path, s.str());
  });
}

dsa_status dsa_dataset_summary(const dsa_dataset* data, char** json_out) {
  return guarded([&] {
    require(data, "data");
    require(json_out, "json_out");
    const auto table = dsa::estimate_empirical(data->data);
    std::size_t min_support = 0, max_support = 0;
    for (const auto& [p, cell] : table.cells()) {
      min_support = min_support == 0 ? cell.support : std::min(min_support, cell.support);
      max_support = std::max(max_support, cell.support);
    }
    const auto& schema = *data->data.schema;
    json doc{{"respondents", data->data.size()},
             {"profiles_observed", table.cells().size()},
             {"profiles_total", schema.num_profiles()},
             {"min_cell_support", min_support},
             {"max_cell_support", max_support},
             {"core_counts", table.overall_counts()},
             {"schema_hash", schema.hash()}};
    *json_out = dup_string(doc.dump(2));
  });
}

size_t dsa_dataset_size(const dsa_dataset* data) { return data ? data->data.size() : 0; }

void dsa_dataset_free(dsa_dataset* data) { delete data; }

dsa_status dsa_population_load(const char* path, dsa_population** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new dsa_population{dsa::load_population(path)};
  });
}

dsa_status dsa_population_schema(const dsa_population* pop, dsa_schema** out) {
  return guarded([&] {
    require(pop, "population");
    require(out, "out");
    *out = new dsa_schema{pop->spec.schema};
  });
}

dsa_status dsa_population_sample(const dsa_population* pop, size_t n, uint64_t seed, dsa_dataset** out) {
  return guarded([&] {
    require(pop, "population");
    require(out, "out");
    *out = new dsa_dataset{dsa::sample_dataset(pop->spec, n, seed)};
  });
}

dsa_status dsa_population_truth(const dsa_population* pop, dsa_table** out) {
  return guarded([&] {
    require(pop, "population");
    require(out, "out");
    *out = new dsa_table{dsa::truth_table(pop->spec), "truth", 1.0};
  });
}

void dsa_population_free(dsa_population* pop) { delete pop; }

dsa_status dsa_table_read_csv(const dsa_schema* schema, const char* path, dsa_table** out) {
  return guarded([&] {
    require(schema, "schema");
    require(path, "path");
    require(out, "out");
    *out = new dsa_table{dsa::read_table_csv(path, schema->schema), "", 1.0};
  });
}

dsa_status dsa_table_write_csv(const dsa_table* table, const char* path) {
  return guarded([&] {
    require(table, "table");
    require(path, "path");
    dsa::write_text(path, table_csv(*table));
  });
}

size_t dsa_table_size(const dsa_table* table) { return table ? table->table.entries.size() : 0; }

void dsa_table_free(dsa_table* table) { delete table; }

dsa_status dsa_run_method(const dsa_dataset* train, const char* method_json, dsa_table** out) {
  return guarded([&] {
    require(train, "train");
    require(out, "out");
    auto method = method_from(method_json);
    auto result = dsa::run_method(method, train->data, train->data.schema);
    const double total = static_cast<double>(train->data.schema->num_profiles());
    const double coverage = total > 0 ? static_cast<double>(result.predictions.entries.size()) / total : 0.0;
    *out = new dsa_table{std::move(result.predictions), std::string(dsa::to_string(method.kind)), coverage};
  });
}

dsa_status dsa_train(const dsa_dataset* train, const char* method_json, dsa_model** model_out,
                     char** report_json_out, char** loss_csv_out) {
  auto emit = [&](const dsa::TrainReport& report) {
    if (report_json_out) *report_json_out = dup_string(report.to_json().dump(2));
    if (loss_csv_out) {
      std::ostringstream s;
      dsa::write_loss_curve_csv(report, s);
      *loss_csv_out = dup_string(s.str());
    }
    *model_out = new dsa_model{report.final_model};
  };
  return guarded([&] {
    require(train, "train");
    require(model_out, "model_out");
    auto method = method_from(method_json);
    if (method.kind != dsa::MethodKind::TKFT && method.kind != dsa::MethodKind::DSA &&
        method.kind != dsa::MethodKind::AAE) {
      dsa::fail(dsa::ErrorCode::InvalidArgument,
                "only TKFT, DSA and AAE train a model; use run_method for " + std::string(dsa::to_string(method.kind)));
    }
    try {
      auto result = dsa::run_method(method, train->data, train->data.schema);
      emit(*result.report);
    } catch (const dsa::TrainingDiverged& e) {
      emit(e.report());
      throw;
    }
  });
}

dsa_status dsa_model_save(const dsa_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    dsa::write_text(path, model->model.to_checkpoint().dump(1) + "\n");
  });
}

dsa_status dsa_model_load(const dsa_schema* schema, const char* path, dsa_model** out) {
  return guarded([&] {
    require(schema, "schema");
    require(path, "path");
    require(out, "out");
    auto text = dsa::read_text(path);
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::exception& e) {
      dsa::fail(dsa::ErrorCode::Parse, std::string("checkpoint: ") + e.what());
    }
    *out = new dsa_model{dsa::LogitChoiceModel::from_checkpoint(doc, schema->schema)};
  });
}

dsa_status dsa_model_predict_all(const dsa_model* model, dsa_table** out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = new dsa_table{dsa::model_predictions(model->model), "checkpoint", 1.0};
  });
}

dsa_status dsa_model_predict(const dsa_model* model, const uint32_t* choices, size_t num_choices, double* probs_out,
                             size_t num_options) {
  return guarded([&] {
    require(model, "model");
    require(choices, "choices");
    require(probs_out, "probs_out");
    if (num_options != model->model.num_options()) {
      dsa::fail(dsa::ErrorCode::LengthMismatch, "probs_out must hold " + std::to_string(model->model.num_options()) + " values");
    }
    dsa::BackgroundProfile profile{std::vector<std::uint32_t>(choices, choices + num_choices)};
    auto pred = model->model.predict(profile);
    std::copy(pred.probs.begin(), pred.probs.end(), probs_out);
  });
}

void dsa_model_free(dsa_model* model) { delete model; }

dsa_status dsa_evaluate(const dsa_table* predictions, const dsa_table* truth, const dsa_dataset* train,
                        const char* options_json, char** summary_json_out, char** metrics_csv_out) {
  return guarded([&] {
    require(predictions, "predictions");
    require(truth, "truth");
    require(train, "train");
    dsa::EvalOptions opts;
    if (options_json) {
      auto doc = parse_json(options_json, "options_json");
      auto w = doc.value("weighting", std::string("respondent"));
      if (w == "uniform") {
        opts.weighting = dsa::WeightMode::Uniform;
      } else if (w != "respondent") {
        dsa::fail(dsa::ErrorCode::Validation, "weighting must be 'respondent' or 'uniform'");
      }
      opts.partial = doc.value("partial", false);
    }
    if (predictions->table.schema->hash() != truth->table.schema->hash()) {
      dsa::fail(dsa::ErrorCode::SchemaMismatch, "predictions and truth use different schemas");
    }
    const auto table = dsa::estimate_empirical(train->data);
    auto report = dsa::evaluate(predictions->table, truth->table, table, opts);
    if (summary_json_out) {
      auto doc = report.summary_json();
      doc["weighting"] = opts.weighting == dsa::WeightMode::Uniform ? "uniform" : "respondent";
      *summary_json_out = dup_string(doc.dump(2));
    }
    if (metrics_csv_out) {
      std::ostringstream s;
      dsa::write_metrics_csv(report, *truth->table.schema, s);
      *metrics_csv_out = dup_string(s.str());
    }
  });
}

dsa_status dsa_sweep(const char* kind, const char* config_json, char** result_json_out) {
  return guarded([&] {
    require(kind, "kind");
    require(result_json_out, "result_json_out");
    auto cfg = parse_json(config_json, "config_json");
    *result_json_out = dup_string(sweep(kind, cfg).dump(2));
  });
}

dsa_status dsa_kld(const double* p, const double* q, size_t n, double* out) {
  return guarded([&] {
    require(p, "p");
    require(q, "q");
    require(out, "out");
    auto [a, b] = checked_pair(p, q, n);
    *out = dsa::kld(a, b).value;
  });
}

dsa_status dsa_jsd(const double* p, const double* q, size_t n, double* out) {
  return guarded([&] {
    require(p, "p");
    require(q, "q");
    require(out, "out");
    auto [a, b] = checked_pair(p, q, n);
    *out = dsa::jsd(a, b);
  });
}

}  // extern "C"
