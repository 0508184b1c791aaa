// SPDX-License-Identifier: Apache-2.0
// Command-line front end. Everything goes through the C API in dsa/dsa.h.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dsa/dsa.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitInput = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitCoverage = 4;

struct CliFailure {
  int exit_code;
  std::string message;
};

int exit_code_for(dsa_status s) {
  switch (s) {
    case DSA_OK: return kExitOk;
    case DSA_ERR_DIVERGED: return kExitDiverged;
    case DSA_ERR_COVERAGE_GAP: return kExitCoverage;
    case DSA_ERR_INTERNAL:
    case DSA_ERR_BACKEND_UNAVAILABLE:
    case DSA_ERR_MALFORMED_RESPONSE: return kExitInternal;
    default: return kExitInput;
  }
}

[[noreturn]] void input_error(const std::string& msg) { throw CliFailure{kExitInput, msg}; }

void check(dsa_status s, const std::string& context) {
  if (s == DSA_OK) return;
  throw CliFailure{exit_code_for(s), context + ": " + dsa_last_error() + " [" + dsa_status_name(s) + "]"};
}

// Owning wrappers for C handles and strings.
template <class T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Schema = std::unique_ptr<dsa_schema, Deleter<dsa_schema, dsa_schema_free>>;
using Dataset = std::unique_ptr<dsa_dataset, Deleter<dsa_dataset, dsa_dataset_free>>;
using Population = std::unique_ptr<dsa_population, Deleter<dsa_population, dsa_population_free>>;
using Table = std::unique_ptr<dsa_table, Deleter<dsa_table, dsa_table_free>>;
using Model = std::unique_ptr<dsa_model, Deleter<dsa_model, dsa_model_free>>;

std::string take(char* s) {
  std::string out = s ? s : "";
  dsa_string_free(s);
  return out;
}

std::string sha256(const fs::path& p) {
  char* hex = nullptr;
  check(dsa_sha256_file(p.string().c_str(), &hex), "hashing " + p.string());
  return take(hex);
}

// ---------------------------------------------------------------------------
// Parameters. Each command declares its keys once; the same key is accepted
// as a --flag (dashes) and as a config-file entry (underscores).

enum class Kind { Path, String, Int, Double, Bool, Json, IntList, StrList };

struct Param {
  std::string key;
  Kind kind;
  std::string help;
  json fallback = nullptr;
};

std::string flag_name(const std::string& key) {
  std::string s = "--" + key;
  for (auto& c : s) c = c == '_' ? '-' : c;
  return s;
}

json convert(const Param& p, const std::string& raw) {
  try {
    switch (p.kind) {
      case Kind::Path:
      case Kind::String: return raw;
      case Kind::Int: {
        std::size_t used = 0;
        long long v = std::stoll(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
        return v;
      }
      case Kind::Double: {
        std::size_t used = 0;
        double v = std::stod(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
        return v;
      }
      case Kind::Bool: return raw == "true" || raw == "1";
      case Kind::Json:
        if (!raw.empty() && (raw[0] == '{' || raw[0] == '[' || raw[0] == '"')) return json::parse(raw);
        return raw;
      case Kind::IntList:
      case Kind::StrList: {
        json arr = json::array();
        std::stringstream ss(raw);
        std::string item;
        while (std::getline(ss, item, ',')) {
          if (item.empty()) continue;
          arr.push_back(p.kind == Kind::IntList ? convert({p.key, Kind::Int, ""}, item) : json(item));
        }
        return arr;
      }
    }
  } catch (const std::exception&) {
    input_error("bad value for " + flag_name(p.key) + ": '" + raw + "'");
  }
  return nullptr;
}

struct Command {
  std::string name;
  std::vector<Param> params;
  CLI::App* app = nullptr;
  std::map<std::string, std::string> raw{};
  std::map<std::string, bool> flags{};
};

const std::map<std::string, std::string> kCommandHelp = {
    {"generate", "draw a synthetic sample and its truth table from a population spec"},
    {"ingest", "validate a respondent CSV against a schema and summarize it"},
    {"train", "fit a choice model (TKFT, DSA or AAE) and write a checkpoint"},
    {"estimate", "write per-profile predictions for one method"},
    {"evaluate", "score predictions against a truth table"},
    {"sweep", "run a data-efficiency, size, ablation or prompt sweep"},
    {"report", "check and summarize the outputs of an earlier run"},
};

const std::vector<Param> kMethodParams = {
    {"method", Kind::Json, "method name or JSON object"},
    {"phase1_epochs", Kind::Int, "phase-1 epochs"},
    {"phase2_epochs", Kind::Int, "phase-2 epochs"},
    {"learning_rate", Kind::Double, "learning rate"},
    {"lambda", Kind::Double, "phase-2 loss weight"},
    {"no_phase2", Kind::Bool, "train phase 1 only"},
    {"grid_levels", Kind::Int, "quantile grid size"},
    {"smoothing", Kind::Double, "additive smoothing alpha"},
    {"template", Kind::String, "prompt template name"},
    {"endpoint", Kind::String, "backend URL"},
    {"stub", Kind::String, "in-process backend stub: constant | template_hash"},
};

std::vector<Param> with_method(std::vector<Param> params, const std::string& default_method) {
  for (auto p : kMethodParams) {
    if (p.key == "method") p.fallback = default_method;
    params.push_back(p);
  }
  return params;
}

// Effective configuration: defaults < config file < flags.
json effective_config(const Command& cmd, const json& file_cfg, const fs::path& file_dir) {
  json cfg = json::object();
  cfg["seed"] = 0;
  for (const auto& p : cmd.params) {
    if (!p.fallback.is_null()) cfg[p.key] = p.fallback;
  }
  auto absorb = [&](const json& section, bool strict) {
    for (auto it = section.begin(); it != section.end(); ++it) {
      if (it.key() == "seed") {
        if (!it.value().is_number_unsigned()) input_error("config 'seed' must be a non-negative integer");
        cfg["seed"] = it.value();
        continue;
      }
      const Param* match = nullptr;
      for (const auto& p : cmd.params) {
        if (p.key == it.key()) match = &p;
      }
      if (!match) {
        if (strict) input_error("unknown key '" + it.key() + "' in config section '" + cmd.name + "'");
        continue;
      }
      json v = it.value();
      if (match->kind == Kind::Path) {
        if (!v.is_string()) input_error("config key '" + it.key() + "' must be a path string");
        fs::path path(v.get<std::string>());
        if (path.is_relative()) path = file_dir / path;
        v = path.lexically_normal().string();
      }
      cfg[it.key()] = v;
    }
  };
  if (file_cfg.is_object()) {
    json top = file_cfg;
    for (const char* section : {"generate", "ingest", "train", "estimate", "evaluate", "sweep", "report"}) top.erase(section);
    absorb(top, false);
    if (file_cfg.contains(cmd.name)) absorb(file_cfg[cmd.name], true);
  }
  for (const auto& p : cmd.params) {
    if (p.kind == Kind::Bool) {
      auto it = cmd.flags.find(p.key);
      if (it != cmd.flags.end() && it->second) cfg[p.key] = true;
      continue;
    }
    auto* opt = cmd.app->get_option_no_throw(flag_name(p.key));
    if (opt && opt->count() > 0) cfg[p.key] = convert(p, cmd.raw.at(p.key));
  }
  return cfg;
}

bool has(const json& cfg, const std::string& key) { return cfg.contains(key) && !cfg[key].is_null(); }

std::string need_path(const json& cfg, const std::string& key) {
  if (!has(cfg, key)) input_error("missing required " + flag_name(key));
  return cfg[key].get<std::string>();
}

// Method spec JSON for the C API, with individual overrides folded in.
json method_spec(const json& cfg) {
  json m = cfg.value("method", json("DSA"));
  if (m.is_string()) m = json{{"kind", m}};
  if (!m.is_object()) input_error("method must be a name or an object");
  json& t = m["train"];
  if (!t.is_object()) t = json::object();
  t["seed"] = cfg["seed"];
  if (has(cfg, "phase1_epochs")) t["phase1_epochs"] = cfg["phase1_epochs"];
  if (has(cfg, "phase2_epochs")) t["phase2_epochs"] = cfg["phase2_epochs"];
  if (has(cfg, "learning_rate")) t["learning_rate"] = cfg["learning_rate"];
  if (has(cfg, "lambda")) t["lambda"] = cfg["lambda"];
  if (cfg.value("no_phase2", false)) t["phase2_enabled"] = false;
  if (has(cfg, "grid_levels")) t["grid"] = cfg["grid_levels"];
  if (has(cfg, "smoothing")) m["smoothing"] = cfg["smoothing"];
  if (has(cfg, "template")) m["template"] = cfg["template"];
  if (has(cfg, "endpoint") || has(cfg, "stub")) {
    json& b = m["backend"];
    if (!b.is_object()) b = json::object();
    if (has(cfg, "endpoint")) b["endpoint"] = cfg["endpoint"];
    if (has(cfg, "stub")) b["stub"] = cfg["stub"];
  }
  return m;
}

// ---------------------------------------------------------------------------
// Output directory and manifest.

class Run {
 public:
  Run(std::string command, json config, bool force) : command_(std::move(command)), config_(std::move(config)) {
    dir_ = need_path(config_, "out");
    std::error_code ec;
    if (fs::exists(dir_, ec) && !fs::is_empty(dir_, ec) && !force) {
      input_error("output directory " + dir_.string() + " is not empty (use --force to overwrite)");
    }
    fs::create_directories(dir_, ec);
    if (ec) input_error("cannot create " + dir_.string() + ": " + ec.message());
  }

  fs::path path(const std::string& name) {
    outputs_.push_back(name);
    return dir_ / name;
  }

  void write(const std::string& name, const std::string& text) {
    auto p = path(name);
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) input_error("cannot write " + p.string());
    out << text;
  }

  void input(const std::string& role, const std::string& file) { inputs_.emplace_back(role, file); }

  void finish(const std::string& status = "ok") {
    json cfg = config_;
    for (const char* k : {"out", "force", "print_config", "threads"}) cfg.erase(k);
    json ins = json::array();
    for (const auto& [role, file] : inputs_) {
      ins.push_back({{"role", role}, {"file", fs::path(file).filename().string()}, {"sha256", sha256(file)}});
    }
    json outs = json::object();
    for (const auto& name : outputs_) outs[name] = sha256(dir_ / name);
    json manifest{{"tool", "dsa"},        {"version", dsa_version()}, {"command", command_}, {"status", status},
                  {"config", cfg},        {"inputs", ins},            {"outputs", outs}};
    std::ofstream(dir_ / "manifest.json", std::ios::binary | std::ios::trunc) << manifest.dump(2) << '\n';
  }

 private:
  std::string command_;
  json config_;
  fs::path dir_;
  std::vector<std::string> outputs_;
  std::vector<std::pair<std::string, std::string>> inputs_;
};

// ---------------------------------------------------------------------------
// Shared loaders.

Schema schema_from(const json& cfg, Run* run) {
  dsa_schema* s = nullptr;
  if (has(cfg, "schema")) {
    auto path = need_path(cfg, "schema");
    check(dsa_schema_load(path.c_str(), &s), "loading schema " + path);
    if (run) run->input("schema", path);
  } else if (has(cfg, "population")) {
    auto path = need_path(cfg, "population");
    dsa_population* pop = nullptr;
    check(dsa_population_load(path.c_str(), &pop), "loading population " + path);
    Population owned(pop);
    check(dsa_population_schema(pop, &s), "population schema");
    if (run) run->input("population", path);
  } else {
    input_error("missing required --schema (or --population)");
  }
  return Schema(s);
}

Dataset dataset_from(const json& cfg, const dsa_schema* schema, Run* run) {
  auto path = need_path(cfg, "data");
  dsa_dataset* d = nullptr;
  check(dsa_dataset_load_csv(schema, path.c_str(), &d), "reading " + path);
  if (run) run->input("data", path);
  return Dataset(d);
}

// ---------------------------------------------------------------------------
// Commands.

int cmd_generate(const json& cfg, bool force) {
  Run run("generate", cfg, force);
  auto spec_path = need_path(cfg, "spec");
  dsa_population* p = nullptr;
  check(dsa_population_load(spec_path.c_str(), &p), "loading " + spec_path);
  Population pop(p);
  run.input("spec", spec_path);

  const auto n = cfg.value("n", std::size_t{2000});
  const auto seed = cfg.value("seed", std::uint64_t{0});
  dsa_dataset* d = nullptr;
  check(dsa_population_sample(pop.get(), n, seed, &d), "sampling");
  Dataset data(d);
  check(dsa_dataset_write_csv(data.get(), run.path("respondents.csv").string().c_str()), "writing respondents");

  dsa_table* t = nullptr;
  check(dsa_population_truth(pop.get(), &t), "truth table");
  Table truth(t);
  check(dsa_table_write_csv(truth.get(), run.path("truth.csv").string().c_str()), "writing truth");

  dsa_schema* s = nullptr;
  check(dsa_population_schema(pop.get(), &s), "schema");
  Schema schema(s);
  char* sj = nullptr;
  check(dsa_schema_to_json(schema.get(), &sj), "schema json");
  run.write("schema.json", take(sj) + "\n");

  char* summary = nullptr;
  check(dsa_dataset_summary(data.get(), &summary), "summary");
  auto summary_text = take(summary);
  run.write("summary.json", summary_text + "\n");
  run.finish();
  auto doc = json::parse(summary_text);
  std::cout << "generated " << doc["respondents"] << " respondents over " << doc["profiles_observed"] << " of "
            << doc["profiles_total"] << " profiles; truth covers " << dsa_table_size(truth.get()) << " profiles\n";
  return kExitOk;
}

int cmd_ingest(const json& cfg, bool force) {
  Run run("ingest", cfg, force);
  auto schema = schema_from(cfg, &run);
  auto data = dataset_from(cfg, schema.get(), &run);
  check(dsa_dataset_write_csv(data.get(), run.path("respondents.csv").string().c_str()), "writing respondents");
  char* summary = nullptr;
  check(dsa_dataset_summary(data.get(), &summary), "summary");
  auto text = take(summary);
  run.write("summary.json", text + "\n");
  char* sj = nullptr;
  check(dsa_schema_to_json(schema.get(), &sj), "schema json");
  run.write("schema.json", take(sj) + "\n");
  run.finish();
  std::cout << text << "\n";
  return kExitOk;
}

int cmd_train(const json& cfg, bool force) {
  Run run("train", cfg, force);
  auto schema = schema_from(cfg, &run);
  auto data = dataset_from(cfg, schema.get(), &run);
  const auto method = method_spec(cfg).dump();

  dsa_model* m = nullptr;
  char* report = nullptr;
  char* curve = nullptr;
  dsa_status st = dsa_train(data.get(), method.c_str(), &m, &report, &curve);
  if (st != DSA_OK && st != DSA_ERR_DIVERGED) check(st, "training");
  const std::string error = st == DSA_ERR_DIVERGED ? dsa_last_error() : "";
  Model model(m);
  check(dsa_model_save(model.get(), run.path("checkpoint.json").string().c_str()), "saving checkpoint");
  run.write("train_report.json", take(report) + "\n");
  run.write("loss_curve.csv", take(curve));
  run.finish(st == DSA_ERR_DIVERGED ? "diverged" : "ok");
  if (st == DSA_ERR_DIVERGED) {
    std::cerr << "dsa: training diverged: " << error << " (last finite checkpoint written)\n";
    return kExitDiverged;
  }
  std::cout << "checkpoint written to " << (fs::path(need_path(cfg, "out")) / "checkpoint.json").string() << "\n";
  return kExitOk;
}

int cmd_estimate(const json& cfg, bool force) {
  Run run("estimate", cfg, force);
  auto schema = schema_from(cfg, &run);
  auto data = dataset_from(cfg, schema.get(), &run);
  const auto method = method_spec(cfg).dump();
  dsa_table* t = nullptr;
  check(dsa_run_method(data.get(), method.c_str(), &t), "estimating");
  Table table(t);
  check(dsa_table_write_csv(table.get(), run.path("predictions.csv").string().c_str()), "writing predictions");
  run.finish();
  std::cout << "estimated " << dsa_table_size(table.get()) << " of " << dsa_schema_num_profiles(schema.get())
            << " profiles\n";
  return kExitOk;
}

int cmd_evaluate(const json& cfg, bool force) {
  Run run("evaluate", cfg, force);
  auto schema = schema_from(cfg, &run);
  auto data = dataset_from(cfg, schema.get(), &run);

  dsa_table* t = nullptr;
  if (has(cfg, "truth")) {
    auto path = need_path(cfg, "truth");
    check(dsa_table_read_csv(schema.get(), path.c_str(), &t), "reading truth " + path);
    run.input("truth", path);
  } else if (has(cfg, "population")) {
    dsa_population* p = nullptr;
    check(dsa_population_load(need_path(cfg, "population").c_str(), &p), "loading population");
    Population pop(p);
    check(dsa_population_truth(pop.get(), &t), "truth table");
  } else {
    input_error("missing required --truth (or --population)");
  }
  Table truth(t);

  dsa_table* pr = nullptr;
  if (has(cfg, "checkpoint")) {
    auto path = need_path(cfg, "checkpoint");
    dsa_model* m = nullptr;
    check(dsa_model_load(schema.get(), path.c_str(), &m), "loading checkpoint " + path);
    Model model(m);
    run.input("checkpoint", path);
    check(dsa_model_predict_all(model.get(), &pr), "predicting");
  } else if (has(cfg, "predictions")) {
    auto path = need_path(cfg, "predictions");
    check(dsa_table_read_csv(schema.get(), path.c_str(), &pr), "reading predictions " + path);
    run.input("predictions", path);
  } else {
    const auto method = method_spec(cfg).dump();
    check(dsa_run_method(data.get(), method.c_str(), &pr), "running method");
  }
  Table predictions(pr);

  json opts{{"weighting", cfg.value("weighting", std::string("respondent"))}, {"partial", cfg.value("partial", false)}};
  char* summary = nullptr;
  char* metrics = nullptr;
  check(dsa_evaluate(predictions.get(), truth.get(), data.get(), opts.dump().c_str(), &summary, &metrics), "evaluating");
  auto text = take(summary);
  run.write("eval_summary.json", text + "\n");
  run.write("metrics.csv", take(metrics));
  run.finish();
  auto doc = json::parse(text);
  std::printf("KLD %.6f  JSD %.6f  improvement_fraction %.4f  profiles %zu\n", doc["kld"].get<double>(),
              doc["jsd"].get<double>(), doc["improvement_fraction"].get<double>(),
              doc["profiles"].get<std::size_t>());
  return kExitOk;
}

int cmd_sweep(const json& cfg, bool force) {
  const auto kind = cfg.value("kind", std::string());
  if (kind != "data_efficiency" && kind != "size" && kind != "ablation" && kind != "prompt") {
    input_error("sweep kind must be one of data_efficiency, size, ablation, prompt");
  }
  Run run("sweep", cfg, force);
  json sc = json::object();
  for (const char* k : {"population", "schema", "data", "truth"}) {
    if (has(cfg, k)) {
      auto p = fs::absolute(cfg[k].get<std::string>()).lexically_normal().string();
      sc[k] = p;
      run.input(k, p);
    }
  }
  for (const char* k : {"sizes", "seeds", "n", "templates", "target", "seed"}) {
    if (has(cfg, k)) sc[k] = cfg[k];
  }
  if (kind == "data_efficiency" && !has(cfg, "sizes")) sc["sizes"] = {250, 500, 1000, 2000, 4000};
  if (kind == "size" && !has(cfg, "sizes")) sc["sizes"] = {500, 1000, 2000, 4000};
  json method = method_spec(cfg);
  if (kind == "prompt" && !method.contains("backend")) {
    input_error("prompt sweep needs a backend: pass --endpoint URL or --stub constant|template_hash");
  }
  if (kind == "size" && has(cfg, "methods")) {
    json ms = json::array();
    for (const auto& name : cfg["methods"]) {
      json c = cfg;
      c["method"] = name;
      ms.push_back(method_spec(c));
    }
    sc["methods"] = ms;
  }
  sc["method"] = method;
  char* result = nullptr;
  check(dsa_sweep(kind.c_str(), sc.dump().c_str(), &result), "sweep " + kind);
  auto doc = json::parse(take(result));
  run.write("sweep_" + kind + ".csv", doc["csv"].get<std::string>());
  run.write("sweep_summary.json", doc["summary"].dump(2) + "\n");
  run.finish();
  std::cout << doc["summary"].dump(2) << "\n";
  return kExitOk;
}

int cmd_report(const json& cfg) {
  const fs::path dir = need_path(cfg, "run_dir");
  std::ifstream in(dir / "manifest.json");
  if (!in) input_error("no manifest.json in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    input_error(std::string("manifest.json: ") + e.what());
  }
  std::cout << "command: " << manifest.value("command", "?") << "  status: " << manifest.value("status", "?") << "\n";
  std::cout << "config: " << manifest["config"].dump() << "\n";
  bool intact = true;
  for (auto it = manifest["outputs"].begin(); it != manifest["outputs"].end(); ++it) {
    const auto file = dir / it.key();
    const bool ok = fs::exists(file) && sha256(file) == it.value().get<std::string>();
    intact = intact && ok;
    std::cout << (ok ? "  ok       " : "  CHANGED  ") << it.key() << "\n";
  }
  for (const char* name : {"summary.json", "eval_summary.json", "sweep_summary.json"}) {
    std::ifstream s(dir / name);
    if (s) std::cout << name << ":\n" << json::parse(s).dump(2) << "\n";
  }
  if (!intact) input_error("outputs do not match the manifest");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Survey response distribution simulation"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::string seed_raw;
  std::size_t threads = 0;
  bool force = false, print_config = false;
  app.add_option("--config", config_path, "JSON config file; paths inside are relative to it");
  app.add_option("--seed", seed_raw, "random seed (default 0)");
  app.add_option("--threads", threads, "worker thread cap (0 = all cores)");
  app.add_flag("--force", force, "write into a non-empty output directory");
  app.add_flag("--print-config", print_config, "print the effective config and exit");

  const Param out{"out", Kind::Path, "output directory"};
  std::vector<Command> commands = {
      {"generate",
       {out, {"spec", Kind::Path, "population spec"}, {"n", Kind::Int, "respondents to draw", 2000}}},
      {"ingest",
       {out, {"schema", Kind::Path, "survey schema"}, {"population", Kind::Path, "population spec (schema source)"},
        {"data", Kind::Path, "respondent CSV"}}},
      {"train",
       with_method({out, {"schema", Kind::Path, "survey schema"}, {"population", Kind::Path, "population spec"},
                    {"data", Kind::Path, "respondent CSV"}},
                   "DSA")},
      {"estimate",
       with_method({out, {"schema", Kind::Path, "survey schema"}, {"population", Kind::Path, "population spec"},
                    {"data", Kind::Path, "respondent CSV"}},
                   "TS")},
      {"evaluate",
       with_method({out, {"schema", Kind::Path, "survey schema"}, {"population", Kind::Path, "population spec"},
                    {"data", Kind::Path, "training respondent CSV"}, {"truth", Kind::Path, "truth table CSV"},
                    {"checkpoint", Kind::Path, "trained checkpoint"},
                    {"predictions", Kind::Path, "prediction table CSV"},
                    {"weighting", Kind::String, "respondent | uniform", "respondent"},
                    {"partial", Kind::Bool, "skip profiles without predictions"}},
                   "TS")},
      {"sweep",
       with_method({out, {"kind", Kind::String, "data_efficiency | size | ablation | prompt"},
                    {"population", Kind::Path, "population spec"}, {"schema", Kind::Path, "survey schema"},
                    {"data", Kind::Path, "respondent CSV"}, {"truth", Kind::Path, "truth table CSV"},
                    {"sizes", Kind::IntList, "comma-separated sample sizes"},
                    {"seeds", Kind::IntList, "comma-separated seeds (default 0-9)"},
                    {"n", Kind::Int, "sample size for ablation/prompt"},
                    {"target", Kind::Json, "comparison method for data_efficiency"},
                    {"methods", Kind::StrList, "methods for the size sweep"},
                    {"templates", Kind::StrList, "prompt templates to compare"}},
                   "DSA")},
      {"report", {{"run_dir", Kind::Path, "output directory of an earlier run"}}},
  };

  for (auto& cmd : commands) {
    cmd.app = app.add_subcommand(cmd.name, kCommandHelp.at(cmd.name));
    for (const auto& p : cmd.params) {
      const bool positional = (cmd.name == "sweep" && p.key == "kind") || (cmd.name == "report" && p.key == "run_dir");
      if (p.kind == Kind::Bool) {
        cmd.app->add_flag(flag_name(p.key), cmd.flags[p.key], p.help);
      } else if (positional) {
        cmd.app->add_option(p.key + "," + flag_name(p.key), cmd.raw[p.key], p.help);
      } else {
        cmd.app->add_option(flag_name(p.key), cmd.raw[p.key], p.help);
      }
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInput;
  }

  try {
    json file_cfg = json::object();
    fs::path file_dir = fs::current_path();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) input_error("cannot open config " + config_path);
      try {
        file_cfg = json::parse(in);
      } catch (const json::exception& e) {
        input_error("config " + config_path + ": " + e.what());
      }
      if (!file_cfg.is_object()) input_error("config must be a JSON object");
      file_dir = fs::absolute(config_path).parent_path();
    }
    Command* active = nullptr;
    for (auto& cmd : commands) {
      if (cmd.app->parsed()) active = &cmd;
    }
    json cfg = effective_config(*active, file_cfg, file_dir);
    if (!seed_raw.empty()) cfg["seed"] = convert({"seed", Kind::Int, ""}, seed_raw);
    if (cfg["seed"].is_number_integer() && cfg["seed"].get<long long>() < 0) input_error("--seed must be non-negative");

    if (print_config) {
      std::cout << cfg.dump(2) << "\n";
      return kExitOk;
    }
    check(dsa_set_threads(threads), "threads");

    const auto& name = active->name;
    if (name == "generate") return cmd_generate(cfg, force);
    if (name == "ingest") return cmd_ingest(cfg, force);
    if (name == "train") return cmd_train(cfg, force);
    if (name == "estimate") return cmd_estimate(cfg, force);
    if (name == "evaluate") return cmd_evaluate(cfg, force);
    if (name == "sweep") return cmd_sweep(cfg, force);
    return cmd_report(cfg);
  } catch (const CliFailure& f) {
    std::cerr << "dsa: " << f.message << "\n";
    return f.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "dsa: " << e.what() << "\n";
    return kExitInternal;
  }
}
