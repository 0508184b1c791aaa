// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "dsa/dsa.h"

namespace fs = std::filesystem;

namespace {

const fs::path kData = DSA_DATA_DIR;
const fs::path kFixtures = DSA_FIXTURE_DIR;

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("dsa_capi_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string take(char* s) {
  std::string out = s ? s : "";
  dsa_string_free(s);
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Owns the handles a test creates.
struct Session {
  dsa_population* pop = nullptr;
  dsa_schema* schema = nullptr;
  dsa_dataset* data = nullptr;
  dsa_table* truth = nullptr;

  explicit Session(std::size_t n = 800, std::uint64_t seed = 1) {
    REQUIRE(dsa_population_load((kData / "bench-small.json").c_str(), &pop) == DSA_OK);
    REQUIRE(dsa_population_schema(pop, &schema) == DSA_OK);
    REQUIRE(dsa_population_sample(pop, n, seed, &data) == DSA_OK);
    REQUIRE(dsa_population_truth(pop, &truth) == DSA_OK);
  }
  ~Session() {
    dsa_table_free(truth);
    dsa_dataset_free(data);
    dsa_schema_free(schema);
    dsa_population_free(pop);
  }
};

}  // namespace

TEST_CASE("c api: version, status names and null arguments") {
  CHECK(std::string(dsa_version()).size() > 0);
  CHECK(std::string(dsa_status_name(DSA_OK)) == "ok");
  CHECK(std::string(dsa_status_name(DSA_ERR_COVERAGE_GAP)).size() > 0);
  dsa_schema* schema = nullptr;
  CHECK(dsa_schema_load(nullptr, &schema) == DSA_ERR_INVALID_ARGUMENT);
  CHECK(schema == nullptr);
  CHECK(std::string(dsa_last_error()).size() > 0);
  dsa_schema_free(nullptr);
  dsa_string_free(nullptr);
}

TEST_CASE("c api: schema loading and errors") {
  dsa_schema* schema = nullptr;
  REQUIRE(dsa_schema_load((kData / "ess-like.schema.json").c_str(), &schema) == DSA_OK);
  CHECK(dsa_schema_num_options(schema) == 11);
  CHECK(dsa_schema_num_profiles(schema) == 432);
  char* hash = nullptr;
  REQUIRE(dsa_schema_hash(schema, &hash) == DSA_OK);
  auto h = take(hash);
  CHECK(h.size() == 64);

  char* json = nullptr;
  REQUIRE(dsa_schema_to_json(schema, &json) == DSA_OK);
  dsa_schema* again = nullptr;
  REQUIRE(dsa_schema_from_json(take(json).c_str(), &again) == DSA_OK);
  REQUIRE(dsa_schema_hash(again, &hash) == DSA_OK);
  CHECK(take(hash) == h);
  dsa_schema_free(again);
  dsa_schema_free(schema);

  dsa_schema* bad = nullptr;
  CHECK(dsa_schema_from_json("{not json", &bad) == DSA_ERR_PARSE);
  CHECK(dsa_schema_from_json(R"({"core": {"id": "c", "options": ["a"]}, "backgrounds": []})", &bad) ==
        DSA_ERR_VALIDATION);
  CHECK(dsa_schema_load("/nonexistent/schema.json", &bad) == DSA_ERR_IO);
  CHECK(bad == nullptr);
}

TEST_CASE("c api: dataset ingest, summary and round trip") {
  dsa_schema* schema = nullptr;
  REQUIRE(dsa_schema_load((kFixtures / "2x2" / "schema.json").c_str(), &schema) == DSA_OK);
  dsa_dataset* data = nullptr;
  REQUIRE(dsa_dataset_load_csv(schema, (kFixtures / "2x2" / "respondents.csv").c_str(), &data) == DSA_OK);
  CHECK(dsa_dataset_size(data) == 40);

  char* summary = nullptr;
  REQUIRE(dsa_dataset_summary(data, &summary) == DSA_OK);
  auto doc = nlohmann::json::parse(take(summary));
  CHECK(doc["respondents"] == 40);
  CHECK(doc["profiles_observed"] == 4);
  CHECK(doc["min_cell_support"] == 10);

  auto dir = scratch("dataset");
  REQUIRE(dsa_dataset_write_csv(data, (dir / "out.csv").c_str()) == DSA_OK);
  dsa_dataset* back = nullptr;
  REQUIRE(dsa_dataset_load_csv(schema, (dir / "out.csv").c_str(), &back) == DSA_OK);
  CHECK(dsa_dataset_size(back) == 40);
  dsa_dataset_free(back);

  std::ofstream(dir / "typo.csv") << "group,region,answer\nA,North,Yes\nC,North,No\n";
  CHECK(dsa_dataset_load_csv(schema, (dir / "typo.csv").c_str(), &back) == DSA_ERR_UNKNOWN_LABEL);
  CHECK(std::string(dsa_last_error()).find("'C'") != std::string::npos);
  std::ofstream(dir / "short.csv") << "group,answer\nA,Yes\n";
  CHECK(dsa_dataset_load_csv(schema, (dir / "short.csv").c_str(), &back) == DSA_ERR_MISSING_COLUMN);

  dsa_dataset_free(data);
  dsa_schema_free(schema);
}

TEST_CASE("c api: methods, tables and evaluation") {
  Session s;
  dsa_table* ts = nullptr;
  REQUIRE(dsa_run_method(s.data, "\"TS\"", &ts) == DSA_OK);
  CHECK(dsa_table_size(ts) == 12);

  char* summary = nullptr;
  char* metrics = nullptr;
  REQUIRE(dsa_evaluate(ts, s.truth, s.data, nullptr, &summary, &metrics) == DSA_OK);
  auto doc = nlohmann::json::parse(take(summary));
  CHECK(doc["kld"].get<double>() > 0.0);
  CHECK(doc["improvement_fraction"] == 0.0);
  CHECK(take(metrics).find("kld") != std::string::npos);

  auto dir = scratch("tables");
  REQUIRE(dsa_table_write_csv(ts, (dir / "ts.csv").c_str()) == DSA_OK);
  dsa_table* back = nullptr;
  REQUIRE(dsa_table_read_csv(s.schema, (dir / "ts.csv").c_str(), &back) == DSA_OK);
  REQUIRE(dsa_evaluate(back, s.truth, s.data, R"({"weighting": "uniform"})", &summary, nullptr) == DSA_OK);
  auto uniform = nlohmann::json::parse(take(summary));
  CHECK(uniform["kld"].get<double>() > 0.0);
  dsa_table_free(back);

  dsa_table* partial = nullptr;
  REQUIRE(dsa_run_method(s.data, R"({"kind": "ProductPool"})", &partial) == DSA_OK);
  CHECK(dsa_evaluate(partial, s.truth, s.data, R"({"weighting": "sideways"})", &summary, nullptr) ==
        DSA_ERR_VALIDATION);
  dsa_table_free(partial);

  CHECK(dsa_run_method(s.data, R"({"kind": "Direct"})", &partial) == DSA_ERR_BACKEND_REQUIRED);
  CHECK(dsa_run_method(s.data, R"({"kind": "Nope"})", &partial) == DSA_ERR_VALIDATION);
  CHECK(dsa_run_method(s.data, "{", &partial) == DSA_ERR_PARSE);
  dsa_table_free(ts);
}

TEST_CASE("c api: train, save, load and predict") {
  Session s;
  dsa_model* model = nullptr;
  char* report = nullptr;
  char* loss = nullptr;
  const char* method = R"({"kind": "DSA", "train": {"phase1_epochs": 200, "phase2_epochs": 50, "seed": 3}})";
  REQUIRE(dsa_train(s.data, method, &model, &report, &loss) == DSA_OK);
  auto rep = nlohmann::json::parse(take(report));
  CHECK(rep["phase1_loss_curve"].size() == 200);
  CHECK(rep["phase2_loss_curve"].size() == 50);
  CHECK(take(loss).rfind("phase,epoch,loss", 0) == 0);

  auto dir = scratch("model");
  REQUIRE(dsa_model_save(model, (dir / "ckpt.json").c_str()) == DSA_OK);
  dsa_model* loaded = nullptr;
  REQUIRE(dsa_model_load(s.schema, (dir / "ckpt.json").c_str(), &loaded) == DSA_OK);

  const uint32_t choices[3] = {1, 2, 0};
  double a[5], b[5];
  REQUIRE(dsa_model_predict(model, choices, 3, a, 5) == DSA_OK);
  REQUIRE(dsa_model_predict(loaded, choices, 3, b, 5) == DSA_OK);
  double total = 0.0;
  for (int c = 0; c < 5; ++c) {
    CHECK(a[c] == b[c]);
    total += a[c];
  }
  CHECK(total == doctest::Approx(1.0));
  CHECK(dsa_model_predict(model, choices, 2, a, 5) == DSA_ERR_SCHEMA_MISMATCH);
  CHECK(dsa_model_predict(model, choices, 3, a, 4) == DSA_ERR_LENGTH_MISMATCH);

  dsa_table* all = nullptr;
  REQUIRE(dsa_model_predict_all(loaded, &all) == DSA_OK);
  CHECK(dsa_table_size(all) == 12);
  dsa_table_free(all);

  dsa_schema* other = nullptr;
  REQUIRE(dsa_schema_load((kData / "ess-like.schema.json").c_str(), &other) == DSA_OK);
  dsa_model* wrong = nullptr;
  CHECK(dsa_model_load(other, (dir / "ckpt.json").c_str(), &wrong) == DSA_ERR_SCHEMA_MISMATCH);
  dsa_schema_free(other);

  CHECK(dsa_train(s.data, "\"TS\"", &wrong, &report, &loss) == DSA_ERR_INVALID_ARGUMENT);
  dsa_model_free(loaded);
  dsa_model_free(model);
}

TEST_CASE("c api: divergence still returns the model and report") {
  Session s(200);
  dsa_model* model = nullptr;
  char* report = nullptr;
  char* loss = nullptr;
  CHECK(dsa_train(s.data, R"({"kind": "TKFT", "train": {"learning_rate": 1e308, "phase1_epochs": 20}})", &model,
                  &report, &loss) == DSA_ERR_DIVERGED);
  REQUIRE(model != nullptr);
  CHECK_FALSE(take(report).empty());
  take(loss);
  double p[5];
  const uint32_t choices[3] = {0, 0, 0};
  REQUIRE(dsa_model_predict(model, choices, 3, p, 5) == DSA_OK);
  for (double v : p) CHECK(std::isfinite(v));
  dsa_model_free(model);
}

TEST_CASE("c api: coverage gap") {
  Session s(30, 2);
  dsa_table* pooled = nullptr;
  REQUIRE(dsa_run_method(s.data, "\"ProductPool\"", &pooled) == DSA_OK);
  char* summary = nullptr;
  if (dsa_table_size(pooled) < 12) {
    CHECK(dsa_evaluate(pooled, s.truth, s.data, nullptr, &summary, nullptr) == DSA_ERR_COVERAGE_GAP);
    REQUIRE(dsa_evaluate(pooled, s.truth, s.data, R"({"partial": true})", &summary, nullptr) == DSA_OK);
    CHECK(nlohmann::json::parse(take(summary))["skipped"].get<int>() > 0);
  }
  dsa_table_free(pooled);

  // A prediction table over fewer profiles than the truth.
  auto dir = scratch("gap");
  dsa_table* ts = nullptr;
  REQUIRE(dsa_run_method(s.data, "\"TS\"", &ts) == DSA_OK);
  REQUIRE(dsa_table_write_csv(ts, (dir / "ts.csv").c_str()) == DSA_OK);
  dsa_table_free(ts);
  auto text = slurp(dir / "ts.csv");
  auto cut = text.find('\n', text.find('\n') + 1);
  std::ofstream(dir / "short.csv") << text.substr(0, text.find('\n') + 1) << text.substr(cut + 1);
  dsa_table* shorter = nullptr;
  REQUIRE(dsa_table_read_csv(s.schema, (dir / "short.csv").c_str(), &shorter) == DSA_OK);
  CHECK(dsa_table_size(shorter) == 11);
  CHECK(dsa_evaluate(shorter, s.truth, s.data, nullptr, &summary, nullptr) == DSA_ERR_COVERAGE_GAP);
  dsa_table_free(shorter);
}

TEST_CASE("c api: metrics") {
  const double p[2] = {0.5, 0.5}, q[2] = {0.25, 0.75}, r[3] = {0.2, 0.3, 0.5};
  double out = 0.0;
  REQUIRE(dsa_kld(p, q, 2, &out) == DSA_OK);
  CHECK(std::abs(out - 0.14384) < 1e-5);
  REQUIRE(dsa_jsd(p, q, 2, &out) == DSA_OK);
  CHECK(std::abs(out - 0.03382) < 1e-5);
  const double bad[2] = {0.5, 0.6};
  CHECK(dsa_kld(bad, q, 2, &out) == DSA_ERR_VALIDATION);
  CHECK(dsa_jsd(p, r, 0, &out) == DSA_ERR_INVALID_ARGUMENT);
}

TEST_CASE("c api: sweeps") {
  char* result = nullptr;
  const std::string pop = (kData / "bench-small.json").string();
  nlohmann::json cfg{{"population", pop}, {"method", "TS"}, {"sizes", {200, 400, 800}}, {"seeds", {1, 2}}};
  REQUIRE(dsa_sweep("data_efficiency", cfg.dump().c_str(), &result) == DSA_OK);
  auto doc = nlohmann::json::parse(take(result));
  CHECK(doc["summary"]["savings"] == 0.0);
  CHECK(doc["csv"].get<std::string>().rfind("method,n,kld_mean,kld_stdev", 0) == 0);

  nlohmann::json size{{"population", pop}, {"methods", {"TS", "ProductPool"}}, {"sizes", {300}}, {"seeds", {1}}};
  REQUIRE(dsa_sweep("size", size.dump().c_str(), &result) == DSA_OK);
  doc = nlohmann::json::parse(take(result));
  CHECK(doc["csv"].get<std::string>().find("ProductPool") != std::string::npos);

  nlohmann::json prompt{{"population", pop}, {"method", "Direct"}, {"n", 100}};
  CHECK(dsa_sweep("prompt", prompt.dump().c_str(), &result) == DSA_ERR_BACKEND_REQUIRED);
  CHECK(dsa_sweep("bogus", "{}", &result) == DSA_ERR_INVALID_ARGUMENT);
}

TEST_CASE("c api: file hashing") {
  auto dir = scratch("hash");
  std::ofstream(dir / "abc.txt") << "abc";
  char* hex = nullptr;
  REQUIRE(dsa_sha256_file((dir / "abc.txt").c_str(), &hex) == DSA_OK);
  CHECK(take(hex) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(dsa_sha256_file((dir / "missing").c_str(), &hex) == DSA_ERR_IO);
  CHECK(dsa_set_threads(2) == DSA_OK);
  CHECK(dsa_set_threads(0) == DSA_OK);
}
