// SPDX-License-Identifier: Apache-2.0
#include "dsa/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>
#include <numeric>
#include <thread>

#include "dsa/error.hpp"
#include "dsa/estimator.hpp"

namespace dsa {

namespace {

std::atomic<std::size_t> g_thread_limit{0};

std::size_t thread_limit() {
  std::size_t t = g_thread_limit.load();
  if (t == 0) t = std::max(1u, std::thread::hardware_concurrency());
  return t;
}

// Runs fn(i) for i in [0, count) on up to thread_limit() workers; results stay
// in index order.
template <class Fn>
auto parallel_map(std::size_t count, Fn fn) -> std::vector<decltype(fn(std::size_t{}))> {
  using R = decltype(fn(std::size_t{}));
  std::vector<R> out;
  out.reserve(count);
  const std::size_t width = thread_limit();
  if (width <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) out.push_back(fn(i));
    return out;
  }
  for (std::size_t start = 0; start < count; start += width) {
    std::vector<std::future<R>> batch;
    for (std::size_t i = start; i < std::min(count, start + width); ++i) {
      batch.push_back(std::async(std::launch::async, fn, i));
    }
    for (auto& f : batch) out.push_back(f.get());
  }
  return out;
}

std::vector<std::vector<double>> backend_logprobs(const SurveySchema& schema, const RemoteBackendConfig& cfg,
                                                  const std::string& template_name) {
  BackendClient client(cfg);
  const auto profiles = enumerate_profiles(schema, kMaxProfileBlock);
  std::vector<std::string> prompts;
  prompts.reserve(profiles.size());
  for (const auto& p : profiles) prompts.push_back(render_prompt(schema, p, template_name));
  auto outputs = client.query_many(prompts, schema.core().labels());
  std::vector<std::vector<double>> out;
  out.reserve(outputs.size());
  for (const auto& o : outputs) {
    std::vector<double> lp(o.probs.size());
    for (std::size_t c = 0; c < lp.size(); ++c) lp[c] = std::log(std::max(o.probs[c], kProbabilityFloor));
    out.push_back(std::move(lp));
  }
  return out;
}

SweepPoint summarize(std::size_t n, const std::vector<double>& values) {
  SweepPoint p;
  p.n = n;
  p.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - p.mean) * (v - p.mean);
    p.stdev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return p;
}

bool is_pool(MethodKind k) { return k == MethodKind::QuantilePool || k == MethodKind::ProductPool; }

}  // namespace

void set_thread_limit(std::size_t threads) { g_thread_limit = threads; }

std::string_view to_string(MethodKind kind) {
  switch (kind) {
    case MethodKind::TS: return "TS";
    case MethodKind::Direct: return "Direct";
    case MethodKind::PE: return "PE";
    case MethodKind::AAE: return "AAE";
    case MethodKind::TKFT: return "TKFT";
    case MethodKind::DSA: return "DSA";
    case MethodKind::QuantilePool: return "QuantilePool";
    case MethodKind::ProductPool: return "ProductPool";
  }
  return "?";
}

MethodKind method_kind_from_string(std::string_view name) {
  for (auto k : {MethodKind::TS, MethodKind::Direct, MethodKind::PE, MethodKind::AAE, MethodKind::TKFT,
                 MethodKind::DSA, MethodKind::QuantilePool, MethodKind::ProductPool}) {
    std::string a(to_string(k)), b(name);
    std::transform(a.begin(), a.end(), a.begin(), ::tolower);
    std::transform(b.begin(), b.end(), b.begin(), ::tolower);
    if (a == b) return k;
  }
  fail(ErrorCode::Validation, "unknown method '" + std::string(name) + "'");
}

bool MethodSpec::needs_backend() const {
  return kind == MethodKind::Direct || kind == MethodKind::PE || kind == MethodKind::AAE;
}

std::string MethodSpec::effective_template() const {
  if (!template_name.empty()) return template_name;
  return kind == MethodKind::PE ? "pe" : "default";
}

MethodSpec MethodSpec::of(MethodKind kind) {
  MethodSpec m;
  m.kind = kind;
  if (kind == MethodKind::TKFT || kind == MethodKind::AAE) m.train.phase2_enabled = false;
  return m;
}

nlohmann::json MethodSpec::to_json() const {
  nlohmann::json doc{{"kind", std::string(to_string(kind))},
                     {"train", train.to_json()},
                     {"features",
                      {{"profile_block", features.profile_block},
                       {"pairwise_interactions", features.pairwise_interactions}}},
                     {"smoothing", smoothing},
                     {"template", effective_template()}};
  if (backend) doc["backend"] = backend->to_json();
  return doc;
}

MethodSpec MethodSpec::from_json(const nlohmann::json& doc) {
  if (doc.is_string()) return of(method_kind_from_string(doc.get<std::string>()));
  if (!doc.is_object() || !doc.contains("kind")) fail(ErrorCode::Validation, "method needs a 'kind'");
  MethodSpec m;
  try {
    m = of(method_kind_from_string(doc["kind"].get<std::string>()));
    if (doc.contains("train")) {
      nlohmann::json t = m.train.to_json();
      t.merge_patch(doc["train"]);
      m.train = TrainConfig::from_json(t);
    }
    if (doc.contains("features")) {
      const auto& f = doc["features"];
      m.features.profile_block = f.value("profile_block", m.features.profile_block);
      m.features.pairwise_interactions = f.value("pairwise_interactions", m.features.pairwise_interactions);
    }
    if (doc.contains("backend") && !doc["backend"].is_null()) m.backend = RemoteBackendConfig::from_json(doc["backend"]);
    m.smoothing = doc.value("smoothing", m.smoothing);
    m.template_name = doc.value("template", std::string());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("method spec: ") + e.what());
  }
  return m;
}

DistributionTable ts_predictions(const EmpiricalTable& table) {
  const auto& schema = table.schema();
  DistributionTable out{table.schema_ptr(), {}};
  const auto fallback = table.smoothed(table.overall_counts());
  for (auto& profile : enumerate_profiles(schema)) {
    const auto* cell = table.find(profile);
    double w = cell ? static_cast<double>(cell->support) : 0.0;
    out.entries.emplace(std::move(profile), TableEntry{cell ? cell->dist : fallback, w});
  }
  return out;
}

DistributionTable model_predictions(const LogitChoiceModel& model) {
  DistributionTable out{model.schema_ptr(), {}};
  const auto scores = model.schema().core().scores();
  for (auto& profile : enumerate_profiles(model.schema())) {
    auto pred = model.predict(profile);
    out.entries.emplace(std::move(profile), TableEntry{ChoiceDistribution(std::move(pred.probs), scores), 1.0});
  }
  return out;
}

MethodResult run_method(const MethodSpec& method, const SurveyDataset& train_data, SchemaPtr schema) {
  if (!schema) fail(ErrorCode::InvalidArgument, "run_method: no schema");
  if (train_data.schema && train_data.schema->hash() != schema->hash()) {
    fail(ErrorCode::SchemaMismatch, "training data was read against a different schema");
  }
  if (method.needs_backend() && !method.backend) {
    fail(ErrorCode::BackendRequired, std::string(to_string(method.kind)) + " needs a backend configuration");
  }

  MethodResult result;
  if (method.kind == MethodKind::Direct || method.kind == MethodKind::PE) {
    auto lps = backend_logprobs(*schema, *method.backend, method.effective_template());
    result.predictions.schema = schema;
    const auto scores = schema->core().scores();
    auto profiles = enumerate_profiles(*schema, kMaxProfileBlock);
    for (std::size_t i = 0; i < profiles.size(); ++i) {
      result.predictions.entries.emplace(profiles[i], TableEntry{ChoiceDistribution(softmax(lps[i]), scores), 1.0});
    }
    return result;
  }

  const auto table = estimate_empirical(train_data, method.smoothing);
  switch (method.kind) {
    case MethodKind::TS:
      result.predictions = ts_predictions(table);
      return result;
    case MethodKind::ProductPool:
      result.predictions = product_pool_estimate(table, *schema).table;
      return result;
    case MethodKind::QuantilePool:
      result.predictions = quantile_pool_estimate(table, *schema, method.train.grid, method.train.min_cell).table;
      return result;
    default:
      break;
  }

  FeatureOptions features = method.features;
  TrainConfig cfg = method.train;
  if (method.kind == MethodKind::AAE) {
    features.profile_block = false;
    features.pairwise_interactions = false;
  }
  if (method.kind == MethodKind::AAE || method.kind == MethodKind::TKFT) cfg.phase2_enabled = false;
  if (method.kind == MethodKind::DSA) cfg.phase2_enabled = true;
  features.extra_features = method.backend ? schema->num_options() : 0;

  LogitChoiceModel model(schema, features);
  if (method.backend) model.set_extra_features(backend_logprobs(*schema, *method.backend, method.effective_template()));
  auto report = train(std::move(model), table, cfg);
  result.predictions = model_predictions(report.final_model);
  result.report = std::move(report);
  return result;
}

nlohmann::json EvalReport::summary_json() const {
  return {{"kld", kld},
          {"jsd", jsd},
          {"kld_seen", kld_seen},
          {"kld_unseen", kld_unseen},
          {"improvement_fraction", improvement_fraction},
          {"profiles", per_profile.size()},
          {"skipped", skipped}};
}

EvalReport evaluate(const DistributionTable& predictions, const DistributionTable& truth,
                    const EmpiricalTable& train_table, const EvalOptions& options) {
  if (truth.entries.empty()) fail(ErrorCode::EmptyInput, "evaluate: empty truth table");
  const auto ts = ts_predictions(train_table);
  EvalReport report;
  std::vector<WeightedValue> kl_all, js_all, kl_seen, kl_unseen;
  std::size_t improved = 0;
  for (const auto& [profile, entry] : truth.entries) {
    const auto* pred = predictions.find(profile);
    if (!pred) {
      if (options.partial) {
        ++report.skipped;
        continue;
      }
      fail(ErrorCode::CoverageGap, "no prediction for profile " + truth.schema->profile_key(profile));
    }
    ProfileMetrics m;
    m.kld = kld(entry.dist, pred->dist).value;
    m.jsd = jsd(entry.dist, pred->dist);
    m.ts_kld = kld(entry.dist, ts.find(profile)->dist).value;
    m.weight = entry.weight;
    const auto* cell = train_table.find(profile);
    m.support = cell ? cell->support : 0;
    m.seen = cell != nullptr;
    if (m.kld < m.ts_kld) ++improved;
    kl_all.push_back({m.kld, m.weight});
    js_all.push_back({m.jsd, m.weight});
    (m.seen ? kl_seen : kl_unseen).push_back({m.kld, m.weight});
    report.per_profile.emplace(profile, m);
  }
  if (report.per_profile.empty()) fail(ErrorCode::CoverageGap, "predictions cover no truth profile");
  report.kld = aggregate_metric(kl_all, options.weighting);
  report.jsd = aggregate_metric(js_all, options.weighting);
  report.kld_seen = kl_seen.empty() ? 0.0 : aggregate_metric(kl_seen, options.weighting);
  report.kld_unseen = kl_unseen.empty() ? 0.0 : aggregate_metric(kl_unseen, options.weighting);
  report.improvement_fraction = static_cast<double>(improved) / static_cast<double>(report.per_profile.size());
  return report;
}

std::vector<std::uint64_t> default_seeds() { return {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}; }

nlohmann::json SavingsReport::to_json() const {
  auto points = [](const std::vector<SweepPoint>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& p : v) a.push_back({{"n", p.n}, {"kld_mean", p.mean}, {"kld_stdev", p.stdev}});
    return a;
  };
  return {{"method", points(method)},
          {"target", points(target)},
          {"target_kld_at_max_n", target_at_max},
          {"matched_n", matched_n ? nlohmann::json(*matched_n) : nlohmann::json(nullptr)},
          {"reached", reached},
          {"savings", savings}};
}

SweepPoint mean_kld(const MethodSpec& method, const PopulationSpec& spec, std::size_t n,
                    const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) fail(ErrorCode::InvalidArgument, "no seeds");
  const auto truth = truth_table(spec);
  auto values = parallel_map(seeds.size(), [&](std::size_t i) {
    auto data = sample_dataset(spec, n, seeds[i]);
    MethodSpec m = method;
    m.train.seed = seeds[i];
    auto result = run_method(m, data, spec.schema);
    auto table = estimate_empirical(data, m.smoothing);
    EvalOptions opts;
    opts.partial = is_pool(m.kind);
    return evaluate(result.predictions, truth, table, opts).kld;
  });
  return summarize(n, values);
}

SavingsReport data_efficiency_sweep(const MethodSpec& method, const PopulationSpec& spec,
                                    const std::vector<std::size_t>& sizes, const MethodSpec& target,
                                    const std::vector<std::uint64_t>& seeds) {
  if (sizes.size() < 3) fail(ErrorCode::InvalidArgument, "data_efficiency_sweep needs at least 3 sizes");
  if (!std::is_sorted(sizes.begin(), sizes.end()) ||
      std::adjacent_find(sizes.begin(), sizes.end()) != sizes.end() || sizes.front() < 1) {
    fail(ErrorCode::InvalidArgument, "sizes must be positive and strictly ascending");
  }
  SavingsReport rep;
  for (std::size_t n : sizes) rep.method.push_back(mean_kld(method, spec, n, seeds));
  // Same method and seeds as the method curve: reuse rather than retrain.
  const bool same = method.to_json() == target.to_json();
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    rep.target.push_back(same ? rep.method[i] : mean_kld(target, spec, sizes[i], seeds));
  }
  rep.target_at_max = rep.target.back().mean;
  const double level = rep.target_at_max;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (rep.method[i].mean > level) continue;
    double matched = static_cast<double>(sizes[i]);
    if (i > 0) {
      // Between the previous point (above the level) and this one, linear in log N.
      double y0 = rep.method[i - 1].mean, y1 = rep.method[i].mean;
      double x0 = std::log(static_cast<double>(sizes[i - 1])), x1 = std::log(static_cast<double>(sizes[i]));
      double t = y0 == y1 ? 1.0 : (y0 - level) / (y0 - y1);
      if (t < 1.0) matched = std::exp(x0 + t * (x1 - x0));
    }
    rep.matched_n = matched;
    rep.reached = true;
    rep.savings = 1.0 - matched / static_cast<double>(sizes.back());
    break;
  }
  return rep;
}

std::vector<SizeSweepRow> size_sweep(const std::vector<MethodSpec>& methods, const PopulationSpec& spec,
                                     const std::vector<std::size_t>& sizes,
                                     const std::vector<std::uint64_t>& seeds) {
  if (methods.empty() || sizes.empty()) fail(ErrorCode::InvalidArgument, "size_sweep needs methods and sizes");
  std::vector<SizeSweepRow> rows;
  for (const auto& m : methods) {
    for (std::size_t n : sizes) rows.push_back({std::string(to_string(m.kind)), mean_kld(m, spec, n, seeds)});
  }
  return rows;
}

double prompt_consistency(const MethodSpec& method, const std::vector<std::string>& templates,
                          const SurveyDataset& train_data, SchemaPtr schema) {
  if (templates.size() < 2) fail(ErrorCode::InvalidArgument, "prompt_consistency needs at least two templates");
  if (!method.backend) {
    fail(ErrorCode::BackendRequired, "prompt consistency needs a backend endpoint or a stub");
  }
  std::vector<DistributionTable> outputs;
  for (const auto& t : templates) {
    MethodSpec m = method;
    m.template_name = t;
    outputs.push_back(run_method(m, train_data, schema).predictions);
  }
  double total = 0.0;
  std::size_t profiles = 0;
  for (const auto& [profile, first] : outputs.front().entries) {
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < outputs.size(); ++a) {
      for (std::size_t b = a + 1; b < outputs.size(); ++b) {
        sum += jsd(outputs[a].entries.at(profile).dist, outputs[b].entries.at(profile).dist);
        ++pairs;
      }
    }
    total += sum / static_cast<double>(pairs);
    ++profiles;
  }
  return 100.0 * total / static_cast<double>(profiles);
}

std::vector<AblationRow> ablation(const SurveyDataset& train_data, SchemaPtr schema, const DistributionTable& truth,
                                  const MethodSpec& config) {
  MethodSpec p1 = config;
  p1.kind = MethodKind::TKFT;
  MethodSpec p12 = config;
  p12.kind = MethodKind::DSA;
  const auto table = estimate_empirical(train_data, config.smoothing);
  std::vector<AblationRow> rows;
  rows.push_back({"phase1", evaluate(run_method(p1, train_data, schema).predictions, truth, table).kld});
  rows.push_back({"phase1+2", evaluate(run_method(p12, train_data, schema).predictions, truth, table).kld});
  return rows;
}

}  // namespace dsa
