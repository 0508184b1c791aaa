// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dsa/choice_model.hpp"
#include "support.hpp"

using namespace dsa;
using dsa::test::error_code_of;

namespace {

void randomize(LogitChoiceModel& model, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  for (double& w : model.weights()) w = g(rng);
}

BackgroundProfile random_profile(const SurveySchema& schema, std::mt19937_64& rng) {
  BackgroundProfile p;
  for (std::size_t i = 0; i < schema.num_backgrounds(); ++i) {
    p.choices.push_back(static_cast<std::uint32_t>(rng() % schema.background(i).size()));
  }
  return p;
}

SchemaPtr schema_with_templates(std::map<std::string, std::string> templates) {
  auto base = test::make_schema(3, {2, 2});
  std::vector<BackgroundQuestion> bgs{base->background(0), base->background(1)};
  return std::make_shared<const SurveySchema>(base->core(), std::move(bgs), std::move(templates));
}

}  // namespace

TEST_CASE("softmax and make_output") {
  auto p = softmax(std::vector<double>{std::numbers::ln2, 0.0});
  CHECK(p[0] == doctest::Approx(2.0 / 3));
  CHECK(p[1] == doctest::Approx(1.0 / 3));
  auto big = softmax(std::vector<double>{1000.0, 0.0, -1000.0});
  CHECK(big[0] == doctest::Approx(1.0));
  CHECK(std::isfinite(big[2]));
  auto out = make_output({1.0, 2.0, 3.0});
  CHECK(output_from_json(to_json(out)) == out);
}

TEST_CASE("zero weights predict uniform") {
  auto schema = test::make_schema(4, {2, 3});
  LogitChoiceModel model(schema);
  for (const auto& profile : enumerate_profiles(*schema)) {
    for (double v : model.predict(profile).probs) CHECK(v == doctest::Approx(0.25));
  }
}

TEST_CASE("bias weights [ln2, 0] give [2/3, 1/3]") {
  auto schema = test::make_schema(2, {2});
  LogitChoiceModel model(schema, FeatureOptions{false, false, 0});
  auto names = model.feature_names();
  const auto bias = static_cast<std::size_t>(std::find(names.begin(), names.end(), "bias") - names.begin());
  REQUIRE(bias < names.size());
  model.weight(0, bias) = std::numbers::ln2;
  auto out = model.predict(BackgroundProfile{{1}});
  CHECK(out.probs[0] == doctest::Approx(2.0 / 3));
  CHECK(out.probs[1] == doctest::Approx(1.0 / 3));
}

TEST_CASE("adding a constant to every logit leaves the prediction unchanged") {
  auto schema = test::make_schema(5, {2, 3});
  LogitChoiceModel model(schema);
  std::mt19937_64 rng(4);
  randomize(model, rng);
  auto shifted = model;
  auto feats = model.features(BackgroundProfile{{1, 2}});
  // Adding c to the weight of one active feature with value v in every row
  // adds c*v to every logit.
  const auto f = feats.front().index;
  for (std::size_t o = 0; o < 5; ++o) shifted.weight(o, f) += 3.7;
  auto a = model.predict(BackgroundProfile{{1, 2}}), b = shifted.predict(BackgroundProfile{{1, 2}});
  for (std::size_t o = 0; o < 5; ++o) CHECK(a.probs[o] == doctest::Approx(b.probs[o]).epsilon(1e-12));
}

TEST_CASE("predict_gradient matches finite differences") {
  std::mt19937_64 rng(17);
  for (auto options : {FeatureOptions{true, false, 0}, FeatureOptions{false, true, 0}, FeatureOptions{false, false, 0}}) {
    auto schema = test::make_schema(4, {2, 3, 2});
    for (int t = 0; t < 30; ++t) {
      LogitChoiceModel model(schema, options);
      randomize(model, rng, 0.5);
      auto profile = random_profile(*schema, rng);
      std::vector<double> upstream(4);
      std::normal_distribution<double> g;
      for (double& u : upstream) u = g(rng);
      auto analytic = model.predict_gradient(profile, upstream);
      std::vector<double> w(model.weights().begin(), model.weights().end());
      auto numeric = test::numeric_gradient(
          [&](const std::vector<double>& x) {
            LogitChoiceModel m = model;
            std::copy(x.begin(), x.end(), m.weights().begin());
            auto p = m.predict(profile).probs;
            double s = 0.0;
            for (std::size_t o = 0; o < 4; ++o) s += upstream[o] * p[o];
            return s;
          },
          w);
      CHECK(test::relative_error(analytic, numeric) <= 1e-4);
    }
  }
}

TEST_CASE("features") {
  auto schema = test::make_schema(3, {2, 3});
  LogitChoiceModel with_block(schema);
  LogitChoiceModel without(schema, FeatureOptions{false, false, 0});
  CHECK(with_block.num_features() == without.num_features() + 6);
  CHECK(without.num_features() == 1 + 2 + 3);
  LogitChoiceModel pairs(schema, FeatureOptions{false, true, 0});
  CHECK(pairs.num_features() == without.num_features() + 6);
  CHECK(with_block.features(BackgroundProfile{{1, 2}}).size() == without.features(BackgroundProfile{{1, 2}}).size() + 1);
  CHECK(error_code_of([&] { with_block.predict(BackgroundProfile{{2, 0}}); }) == ErrorCode::SchemaMismatch);
  CHECK(error_code_of([] { LogitChoiceModel(test::make_schema(2, {8, 8, 8, 8, 8, 8, 8})); }) == ErrorCode::TooLarge);
}

TEST_CASE("extra features") {
  auto schema = test::make_schema(2, {2});
  LogitChoiceModel model(schema, FeatureOptions{false, false, 1});
  CHECK(error_code_of([&] { model.predict(BackgroundProfile{{0}}); }) == ErrorCode::Validation);
  CHECK(error_code_of([&] { model.set_extra_features({{1.0}}); }) == ErrorCode::LengthMismatch);
  model.set_extra_features({{1.0}, {-1.0}});
  auto names = model.feature_names();
  model.weight(0, names.size() - 1) = std::numbers::ln2;
  CHECK(model.predict(BackgroundProfile{{0}}).probs[0] == doctest::Approx(2.0 / 3));
  CHECK(model.predict(BackgroundProfile{{1}}).probs[0] == doctest::Approx(1.0 / 3));
}

TEST_CASE("checkpoint round trip") {
  auto schema = test::make_schema(4, {2, 3});
  LogitChoiceModel model(schema, FeatureOptions{true, true, 0});
  std::mt19937_64 rng(12);
  randomize(model, rng);
  auto back = LogitChoiceModel::from_checkpoint(model.to_checkpoint(), schema);
  CHECK(back.options() == model.options());
  CHECK(std::equal(back.weights().begin(), back.weights().end(), model.weights().begin()));
  for (const auto& profile : enumerate_profiles(*schema)) CHECK(back.predict(profile) == model.predict(profile));

  auto other = test::make_schema(4, {2, 4});
  CHECK(error_code_of([&] { LogitChoiceModel::from_checkpoint(model.to_checkpoint(), other); }) == ErrorCode::SchemaMismatch);
  auto broken = model.to_checkpoint();
  broken["weights"] = std::vector<double>{1.0, 2.0};
  CHECK(error_code_of([&] { LogitChoiceModel::from_checkpoint(broken, schema); }) == ErrorCode::LengthMismatch);
}

TEST_CASE("render_prompt") {
  auto schema = schema_with_templates({{"default", "{{background_qa}}\n\n{{core_question}}\n{{instruction}}"},
                                       {"short", "{{core_question}} | {{background_qa}}"},
                                       {"no_bg", "{{core_question}}"},
                                       {"bad", "{{background_qa}} {{core_question}} {{mood}}"}});
  BackgroundProfile p{{1, 0}};
  auto text = render_prompt(*schema, p, "default");
  CHECK(text == render_prompt(*schema, p, "default"));
  CHECK(text.find("A: q0_1") != std::string::npos);
  CHECK(text.find("A: q1_0") != std::string::npos);
  CHECK(text.find("- o2") != std::string::npos);
  CHECK(text.find(kDirectInstruction) != std::string::npos);
  CHECK(text != render_prompt(*schema, BackgroundProfile{{0, 0}}, "default"));
  CHECK(render_prompt(*schema, p, "short") != text);
  CHECK(error_code_of([&] { render_prompt(*schema, p, "no_bg"); }) == ErrorCode::UnboundPlaceholder);
  CHECK(error_code_of([&] { render_prompt(*schema, p, "bad"); }) == ErrorCode::UnboundPlaceholder);
  CHECK(error_code_of([&] { render_prompt(*schema, p, "missing"); }) == ErrorCode::UnknownTemplate);
}
