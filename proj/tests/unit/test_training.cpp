// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dsa/csv.hpp"
#include "dsa/io.hpp"
#include "dsa/synthetic.hpp"
#include "dsa/training.hpp"
#include "support.hpp"

using namespace dsa;
using dsa::test::error_code_of;

namespace {

double kl_ref(std::span<const double> p, std::span<const double> q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0) s += p[i] * std::log(p[i] / std::max(q[i], 1e-9));
  }
  return s;
}

struct Fixture {
  SchemaPtr schema;
  SurveyDataset data;
};

Fixture fixture_2x2() {
  auto dir = test::fixture_dir() / "2x2";
  auto schema = std::make_shared<const SurveySchema>(load_schema(dir / "schema.json"));
  return {schema, ingest_csv(dir / "respondents.csv", schema)};
}

void randomize(LogitChoiceModel& model, std::mt19937_64& rng, double scale = 0.5) {
  std::normal_distribution<double> g(0.0, scale);
  for (double& w : model.weights()) w = g(rng);
}

EmpiricalTable random_table(const SchemaPtr& schema, std::mt19937_64& rng, std::size_t respondents) {
  SurveyDataset data{schema, {}, "rand"};
  for (std::size_t r = 0; r < respondents; ++r) {
    BackgroundProfile p;
    for (std::size_t i = 0; i < schema->num_backgrounds(); ++i) {
      p.choices.push_back(static_cast<std::uint32_t>(rng() % schema->background(i).size()));
    }
    data.respondents.push_back({p, static_cast<std::uint32_t>(rng() % schema->num_options())});
  }
  return estimate_empirical(data);
}

TrainConfig sgd(double lr, std::size_t phase1, std::size_t phase2 = 0) {
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::Sgd;
  cfg.lr_schedule = "constant";
  cfg.learning_rate = lr;
  cfg.phase1_epochs = phase1;
  cfg.phase2_epochs = phase2;
  cfg.phase2_enabled = phase2 > 0;
  return cfg;
}

std::vector<double> weights_of(const LogitChoiceModel& m) { return {m.weights().begin(), m.weights().end()}; }

}  // namespace

TEST_CASE("phase1_loss: worked value and zero at the targets") {
  auto schema = test::make_schema(2, {2});
  SurveyDataset data{schema, {}, "one"};
  data.respondents = {{BackgroundProfile{{0}}, 0}, {BackgroundProfile{{0}}, 1}, {BackgroundProfile{{0}}, 1},
                      {BackgroundProfile{{0}}, 1}};
  auto table = estimate_empirical(data, 0.0);
  LogitChoiceModel model(schema);
  CHECK(std::abs(phase1_loss(model, table).loss - 0.14384) < 1e-5);

  // Fit the single cell exactly through its profile indicator.
  auto names = model.feature_names();
  auto f = static_cast<std::size_t>(std::find(names.begin(), names.end(), "profile:q0_0") - names.begin());
  REQUIRE(f < names.size());
  model.weight(1, f) = std::log(3.0);
  auto lg = phase1_loss(model, table);
  CHECK(std::abs(lg.loss) < 1e-14);
  for (double g : lg.gradient) CHECK(std::abs(g) < 1e-14);

  EmpiricalTable empty(schema, {}, 0.5);
  CHECK(error_code_of([&] { phase1_loss(model, empty); }) == ErrorCode::EmptyInput);
}

TEST_CASE("phase1_loss: gradient matches finite differences") {
  std::mt19937_64 rng(41);
  auto schema = test::make_schema(4, {2, 3});
  for (int t = 0; t < 100; ++t) {
    LogitChoiceModel model(schema, FeatureOptions{t % 2 == 0, t % 3 == 0, 0});
    randomize(model, rng);
    auto table = random_table(schema, rng, 30);
    auto lg = phase1_loss(model, table);
    double direct = 0.0;
    for (const auto& [profile, cell] : table.cells()) direct += kl_ref(model.predict(profile).probs, cell.dist.probs());
    CHECK(lg.loss == doctest::Approx(direct).epsilon(1e-12));
    auto numeric = test::numeric_gradient(
        [&](const std::vector<double>& w) {
          LogitChoiceModel m = model;
          std::copy(w.begin(), w.end(), m.weights().begin());
          return phase1_loss(m, table).loss;
        },
        weights_of(model));
    CHECK(test::relative_error(lg.gradient, numeric) <= 1e-4);
  }
}

TEST_CASE("sample_pairs") {
  auto schema = test::make_schema(3, {3, 4});
  auto pairs = sample_pairs(*schema, 5, 10000);
  REQUIRE(pairs.size() == 10000);
  std::size_t per_question[2] = {0, 0};
  for (const auto& p : pairs) {
    CHECK(hamming_distance(p.first, p.second) == 1);
    CHECK(p.first[p.question] != p.second[p.question]);
    ++per_question[p.question];
  }
  CHECK(per_question[0] >= 4700);
  CHECK(per_question[0] <= 5300);

  auto again = sample_pairs(*schema, 5, 10000);
  bool same = true;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    same = same && pairs[i].first == again[i].first && pairs[i].second == again[i].second;
  }
  CHECK(same);
  auto other = sample_pairs(*schema, 6, 50);
  CHECK_FALSE(std::equal(other.begin(), other.end(), pairs.begin(),
                         [](const VirtualPair& a, const VirtualPair& b) { return a.first == b.first && a.second == b.second; }));
  CHECK(error_code_of([&] { sample_pairs(*schema, 1, 0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("anchor is the side whose option has more respondents") {
  auto schema = test::make_schema(2, {3});
  SurveyDataset data{schema, {}, "anchor"};
  for (std::uint32_t r = 0; r < 5; ++r) data.respondents.push_back({BackgroundProfile{{1}}, r % 2});
  for (std::uint32_t r = 0; r < 2; ++r) data.respondents.push_back({BackgroundProfile{{0}}, r % 2});
  auto table = estimate_empirical(data);
  CHECK_FALSE(first_is_anchor({BackgroundProfile{{0}}, BackgroundProfile{{1}}, 0}, table));
  CHECK(first_is_anchor({BackgroundProfile{{1}}, BackgroundProfile{{0}}, 0}, table));
  // Option 2 has no respondents, so option 0 is the anchor.
  CHECK(first_is_anchor({BackgroundProfile{{0}}, BackgroundProfile{{2}}, 0}, table));
  SurveyDataset tie{schema, {}, "tie"};
  tie.respondents = {{BackgroundProfile{{0}}, 0}, {BackgroundProfile{{2}}, 1}};
  auto tied = estimate_empirical(tie);
  CHECK(first_is_anchor({BackgroundProfile{{0}}, BackgroundProfile{{2}}, 0}, tied));
  CHECK_FALSE(first_is_anchor({BackgroundProfile{{2}}, BackgroundProfile{{0}}, 0}, tied));
}

TEST_CASE("phase2_loss: zero and nonzero cases") {
  auto fx = fixture_2x2();
  auto table = estimate_empirical(fx.data);
  auto grid = QuantileGrid();
  ShiftVector zero;
  zero.grid = grid;
  zero.deltas.assign(grid.size(), 0.0);
  ReferenceShifts reference;
  for (std::size_t q = 0; q < 2; ++q) {
    reference[{q, 0, 1}] = zero;
    reference[{q, 1, 0}] = zero;
  }
  auto pairs = sample_pairs(*fx.schema, 3, 64);

  LogitChoiceModel uniform(fx.schema);
  auto lg = phase2_loss(uniform, pairs, reference, table);
  CHECK(std::abs(lg.loss) < 1e-12);
  for (double g : lg.gradient) CHECK(std::abs(g) < 1e-12);

  std::mt19937_64 rng(3);
  LogitChoiceModel varied(fx.schema);
  randomize(varied, rng);
  CHECK(phase2_loss(varied, pairs, reference, table).loss > 0.0);

  SUBCASE("reference shifts taken from the model leave only transport error") {
    // One context per edge, so the model's own shift fits it exactly.
    LogitChoiceModel additive(fx.schema, FeatureOptions{false, false, 0});
    randomize(additive, rng);
    const auto scores = fx.schema->core().scores();
    auto grid101 = QuantileGrid::uniform(101);
    ReferenceShifts own;
    std::vector<VirtualPair> aligned;
    for (const auto& p : pairs) {
      if (p.first[1 - p.question] != 0) continue;
      const bool fa = first_is_anchor(p, table);
      const auto& anchor = fa ? p.first : p.second;
      const auto& other = fa ? p.second : p.first;
      own[{p.question, other[p.question], anchor[p.question]}] =
          shift(ChoiceDistribution(additive.predict(other).probs, scores),
                ChoiceDistribution(additive.predict(anchor).probs, scores), grid101);
      aligned.push_back(p);
    }
    REQUIRE_FALSE(aligned.empty());
    CHECK(phase2_loss(additive, aligned, own, table).loss < 1e-3);
  }
}

TEST_CASE("phase2_loss: missing reference") {
  auto fx = fixture_2x2();
  auto table = estimate_empirical(fx.data);
  LogitChoiceModel model(fx.schema);
  auto pairs = sample_pairs(*fx.schema, 1, 4);
  CHECK(error_code_of([&] { phase2_loss(model, pairs, ReferenceShifts{}, table); }) == ErrorCode::MissingReference);
}

TEST_CASE("phase2_loss: gradient matches finite differences with the anchor frozen") {
  std::mt19937_64 rng(99);
  auto schema = test::make_schema(5, {2, 3, 2});
  for (int t = 0; t < 100; ++t) {
    auto table = random_table(schema, rng, 200);
    auto reference = compute_reference_shifts(table, QuantileGrid(), 1);
    LogitChoiceModel model(schema, FeatureOptions{t % 2 == 0, false, 0});
    randomize(model, rng);
    std::vector<VirtualPair> pairs;
    for (auto& p : sample_pairs(*schema, rng(), 8)) {
      const bool fa = first_is_anchor(p, table);
      const auto& a = fa ? p.first : p.second;
      const auto& o = fa ? p.second : p.first;
      if (reference.contains({p.question, o[p.question], a[p.question]})) pairs.push_back(p);
    }
    if (pairs.empty()) continue;
    auto lg = phase2_loss(model, pairs, reference, table);

    // Oracle: targets computed once from the unperturbed model.
    const auto scores = schema->core().scores();
    std::vector<std::pair<BackgroundProfile, std::vector<double>>> fixed;
    for (const auto& p : pairs) {
      const bool fa = first_is_anchor(p, table);
      const auto& a = fa ? p.first : p.second;
      const auto& o = fa ? p.second : p.first;
      auto target = apply_shift(ChoiceDistribution(model.predict(a).probs, scores),
                                reference.at({p.question, o[p.question], a[p.question]}));
      fixed.emplace_back(o, std::vector<double>(target.probs().begin(), target.probs().end()));
    }
    auto frozen_loss = [&](const std::vector<double>& w) {
      LogitChoiceModel m = model;
      std::copy(w.begin(), w.end(), m.weights().begin());
      double s = 0.0;
      for (const auto& [o, target] : fixed) s += kl_ref(m.predict(o).probs, target);
      return s / static_cast<double>(fixed.size());
    };
    CHECK(lg.loss == doctest::Approx(frozen_loss(weights_of(model))).epsilon(1e-12));
    CHECK(test::relative_error(lg.gradient, test::numeric_gradient(frozen_loss, weights_of(model))) <= 1e-4);
  }
}

TEST_CASE("phase2_loss: no gradient along anchor-only directions") {
  auto schema = test::make_schema(4, {2, 2});
  std::mt19937_64 rng(7);
  auto table = random_table(schema, rng, 400);
  auto reference = compute_reference_shifts(table, QuantileGrid());
  LogitChoiceModel model(schema);
  randomize(model, rng);
  auto names = model.feature_names();
  for (const auto& p : sample_pairs(*schema, 11, 20)) {
    const bool fa = first_is_anchor(p, table);
    const auto& anchor = fa ? p.first : p.second;
    auto lg = phase2_loss(model, {p}, reference, table);
    // The anchor's profile indicator moves the anchor prediction only.
    auto key = "profile:" + schema->profile_key(anchor);
    auto f = static_cast<std::size_t>(std::find(names.begin(), names.end(), key) - names.begin());
    REQUIRE(f < names.size());
    for (std::size_t o = 0; o < 4; ++o) CHECK(lg.gradient[o * model.num_features() + f] == 0.0);

    // Perturbing along that direction changes the anchor but not the other side.
    LogitChoiceModel moved = model;
    moved.weight(0, f) += 0.3;
    const auto& other = fa ? p.second : p.first;
    CHECK(moved.predict(other) == model.predict(other));
    CHECK_FALSE(moved.predict(anchor) == model.predict(anchor));
  }
}

TEST_CASE("compute_reference_shifts stores both orientations") {
  auto fx = fixture_2x2();
  auto table = estimate_empirical(fx.data);
  auto ref = compute_reference_shifts(table, QuantileGrid());
  CHECK(ref.size() == 4);
  auto ab = ref.at({0, 0, 1}), ba = ref.at({0, 1, 0});
  for (std::size_t k = 0; k < ab.deltas.size(); ++k) CHECK(ab.deltas[k] == -ba.deltas[k]);
}

TEST_CASE("train: Phase-1 converges on the 2x2 fixture and matches the golden log") {
  auto fx = fixture_2x2();
  auto table = estimate_empirical(fx.data);
  auto report = train(LogitChoiceModel(fx.schema), table, sgd(0.1, 2000));
  REQUIRE(report.phase1_curve.size() == 2000);
  CHECK(report.phase2_curve.empty());
  CHECK(report.phase1_curve.back() < 1e-4);

  std::ostringstream csv_out;
  write_loss_curve_csv(report, csv_out);
  const auto golden = test::fixture_dir() / "2x2" / "phase1_sgd_lr0.1.csv";
  if (std::getenv("DSA_UPDATE_GOLDEN")) {
    std::ofstream(golden) << csv_out.str();
  }
  auto expected = csv::parse(read_text(golden));
  auto actual = csv::parse(csv_out.str());
  REQUIRE(expected.size() == actual.size());
  CHECK(expected[0] == actual[0]);
  double worst = 0.0;
  for (std::size_t r = 1; r < expected.size(); ++r) {
    const double e = std::stod(expected[r].back()), a = std::stod(actual[r].back());
    worst = std::max(worst, std::abs(e - a) - 1e-9 * std::abs(e));
  }
  CHECK(worst <= 1e-15);
}

TEST_CASE("train: Phase-1 loss never increases under plain gradient descent") {
  auto fx = fixture_2x2();
  auto table = estimate_empirical(fx.data);
  for (double lr : {0.05, 0.1, 0.25, 0.5}) {
    auto curve = train(LogitChoiceModel(fx.schema), table, sgd(lr, 500)).phase1_curve;
    bool monotone = true;
    for (std::size_t e = 1; e < curve.size(); ++e) monotone = monotone && curve[e] <= curve[e - 1] + 1e-15;
    CHECK(monotone);
  }
  auto spec = load_population(test::data_dir() / "bench-small.json");
  auto small = estimate_empirical(sample_dataset(spec, 800, 2));
  auto curve = train(LogitChoiceModel(spec.schema), small, sgd(0.5, 300)).phase1_curve;
  for (std::size_t e = 1; e < curve.size(); ++e) CHECK(curve[e] <= curve[e - 1] + 1e-15);
}

TEST_CASE("train: deterministic and phase-2-disabled runs reproduce Phase 1") {
  auto spec = load_population(test::data_dir() / "bench-small.json");
  auto table = estimate_empirical(sample_dataset(spec, 600, 4));
  TrainConfig cfg;
  cfg.phase1_epochs = 150;
  cfg.phase2_epochs = 60;
  cfg.pairs_per_epoch = 32;
  cfg.seed = 9;
  auto a = train(LogitChoiceModel(spec.schema), table, cfg);
  auto b = train(LogitChoiceModel(spec.schema), table, cfg);
  CHECK(a.to_json().dump() == b.to_json().dump());
  CHECK(weights_of(a.final_model) == weights_of(b.final_model));
  CHECK(a.phase2_curve.size() == 60);
  for (double v : a.phase2_curve) CHECK(v >= 0.0);

  auto only1 = cfg;
  only1.phase2_enabled = false;
  auto p1 = train(LogitChoiceModel(spec.schema), table, only1);
  CHECK(p1.phase1_curve == a.phase1_curve);
  CHECK(p1.phase2_curve.empty());
  CHECK(p1.reference.empty());
  auto zero2 = cfg;
  zero2.phase2_epochs = 0;
  CHECK(weights_of(train(LogitChoiceModel(spec.schema), table, zero2).final_model) == weights_of(p1.final_model));

  auto reseeded = cfg;
  reseeded.seed = 10;
  CHECK(weights_of(train(LogitChoiceModel(spec.schema), table, reseeded).final_model) != weights_of(a.final_model));
}

TEST_CASE("train: divergence keeps the last finite state") {
  auto fx = fixture_2x2();
  auto table = estimate_empirical(fx.data);
  TrainConfig cfg;
  cfg.learning_rate = 1e308;
  cfg.phase1_epochs = 50;
  try {
    train(LogitChoiceModel(fx.schema), table, cfg);
    FAIL("expected divergence");
  } catch (const TrainingDiverged& e) {
    CHECK(e.code() == ErrorCode::Diverged);
    for (double w : e.report().final_model.weights()) CHECK(std::isfinite(w));
    for (double v : e.report().phase1_curve) CHECK(std::isfinite(v));
  }
}

TEST_CASE("TrainConfig validation and JSON") {
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  CHECK(error_code_of([&] { cfg.validate(); }) == ErrorCode::Validation);
  cfg = TrainConfig{};
  cfg.pairs_per_epoch = 0;
  CHECK(error_code_of([&] { cfg.validate(); }) == ErrorCode::Validation);
  cfg = TrainConfig{};
  cfg.phase1_epochs = 12;
  cfg.grid = QuantileGrid::uniform(21);
  auto back = TrainConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  CHECK(TrainConfig::from_json({{"grid", 5}}).grid.size() == 5);
}
