// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>

#include "dsa/estimator.hpp"
#include "dsa/synthetic.hpp"
#include "support.hpp"

using namespace dsa;
using dsa::test::error_code_of;

namespace {

ChoiceDistribution dist(std::vector<double> p) {
  auto scores = test::scores_1_to(p.size());
  return ChoiceDistribution(std::move(p), std::move(scores));
}

// Brute-force product form: P(c | b) proportional to base_c * prod_i f_i[b_i]_c.
std::vector<double> brute_product(const std::vector<double>& base, const std::vector<std::vector<std::vector<double>>>& f,
                                  const std::vector<std::uint32_t>& b) {
  std::vector<double> w(base);
  for (std::size_t i = 0; i < b.size(); ++i) {
    for (std::size_t c = 0; c < w.size(); ++c) w[c] *= f[i][b[i]][c];
  }
  double s = 0.0;
  for (double v : w) s += v;
  for (double& v : w) v /= s;
  return w;
}

EmpiricalTable exact_table(const PopulationSpec& spec, std::size_t support, double alpha = 0.0) {
  std::map<BackgroundProfile, EmpiricalCell> cells;
  for (const auto& profile : enumerate_profiles(*spec.schema)) {
    cells.emplace(profile, EmpiricalCell{true_distribution(spec, profile),
                                         std::vector<std::size_t>(spec.schema->num_options(), 0), support});
  }
  return EmpiricalTable(spec.schema, std::move(cells), alpha);
}

PopulationSpec random_product_spec(std::mt19937_64& rng, std::size_t n, const std::vector<std::size_t>& sizes) {
  PopulationSpec spec;
  spec.schema = test::make_schema(n, sizes);
  spec.base = test::random_simplex(rng, n);
  std::uniform_real_distribution<double> u(0.2, 5.0);
  for (std::size_t k : sizes) {
    std::vector<std::vector<double>> table(k, std::vector<double>(n));
    for (auto& row : table) {
      for (auto& v : row) v = u(rng);
    }
    spec.factors.push_back(std::move(table));
    spec.offsets.emplace_back(k, 0.0);
    spec.marginals.emplace_back(k, 1.0 / static_cast<double>(k));
  }
  return spec;
}

}  // namespace

TEST_CASE("transfer_ratio") {
  auto same = transfer_ratio(dist({0.2, 0.3, 0.5}), dist({0.2, 0.3, 0.5}));
  for (double r : same.ratios) CHECK(r == doctest::Approx(1.0));
  CHECK_FALSE(same.floored);

  auto r = transfer_ratio(dist({0.5, 0.5}), dist({1.0 / 3, 2.0 / 3}));
  CHECK(r.ratios[0] == doctest::Approx(2.0 / 3));
  CHECK(r.ratios[1] == doctest::Approx(4.0 / 3));

  auto z = transfer_ratio(dist({0.0, 1.0}), dist({0.5, 0.5}));
  CHECK(z.floored);
  CHECK(z.ratios[0] == doctest::Approx(0.5 / 1e-9));

  CHECK(error_code_of([] { transfer_ratio(dist({0.5, 0.5}), dist({0.2, 0.3, 0.5})); }) == ErrorCode::LengthMismatch);
}

TEST_CASE("multiplicative_transfer: the 2x2 example matches brute force") {
  // f1 = (1, 2) at option 1 of q0, f2 = (1, 3) at option 1 of q1, base (1, 1).
  std::vector<double> base{0.5, 0.5};
  std::vector<std::vector<std::vector<double>>> f{{{1, 1}, {1, 2}}, {{1, 1}, {1, 3}}};
  auto p11 = brute_product(base, f, {0, 0}), p12 = brute_product(base, f, {0, 1}),
       p21 = brute_product(base, f, {1, 0}), p22 = brute_product(base, f, {1, 1});
  CHECK(p12[0] == doctest::Approx(0.25));
  CHECK(p21[1] == doctest::Approx(2.0 / 3));

  auto out = multiplicative_transfer(dist(p12), transfer_ratio(dist(p11), dist(p21)));
  CHECK(std::abs(out[0] - 1.0 / 7) <= 1e-15);
  CHECK(std::abs(out[1] - 6.0 / 7) <= 1e-15);
  CHECK(std::abs(out[0] - p22[0]) <= 1e-15);
}

TEST_CASE("multiplicative_transfer: identity and scale invariance") {
  auto base = dist({0.1, 0.6, 0.3});
  auto same = multiplicative_transfer(base, RatioVector{{1, 1, 1}, false});
  auto doubled = multiplicative_transfer(base, RatioVector{{2, 2, 2}, false});
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(same[c] == doctest::Approx(base[c]).epsilon(1e-15));
    CHECK(doubled[c] == doctest::Approx(base[c]).epsilon(1e-15));
  }
  CHECK(error_code_of([&] { multiplicative_transfer(dist({1.0, 0.0}), RatioVector{{0, 1}, false}); }) ==
        ErrorCode::Degenerate);
}

TEST_CASE("multiplicative_transfer is exact on random product-form 2x2 sub-squares") {
  std::mt19937_64 rng(8);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng() % 6;
    auto spec = random_product_spec(rng, n, {2 + rng() % 3, 2 + rng() % 3, 2});
    BackgroundProfile b{{static_cast<std::uint32_t>(rng() % spec.schema->background(0).size()),
                         static_cast<std::uint32_t>(rng() % spec.schema->background(1).size()), 0}};
    auto b_i = b, b_j = b, b_ij = b;
    b_i.choices[0] = (b[0] + 1) % spec.schema->background(0).size();
    b_j.choices[1] = (b[1] + 1) % spec.schema->background(1).size();
    b_ij.choices[0] = b_i[0];
    b_ij.choices[1] = b_j[1];
    auto out = multiplicative_transfer(true_distribution(spec, b_j),
                                       transfer_ratio(true_distribution(spec, b), true_distribution(spec, b_i)));
    auto truth = true_distribution(spec, b_ij);
    for (std::size_t c = 0; c < n; ++c) worst = std::max(worst, std::abs(out[c] - truth[c]));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("combine_factors is scale invariant") {
  std::vector<double> base{0.2, 0.3, 0.5};
  std::vector<std::vector<double>> f{{0.1, 0.4, 0.5}, {0.3, 0.3, 0.4}};
  auto ref = combine_factors(base, f);
  auto scaled = f;
  for (double& v : scaled[1]) v *= 7.0;
  std::vector<double> base3{0.6, 0.9, 1.5};
  auto out = combine_factors(base3, scaled);
  for (std::size_t c = 0; c < 3; ++c) CHECK(out[c] == doctest::Approx(ref[c]).epsilon(1e-12));
}

TEST_CASE("product_pool_estimate") {
  SUBCASE("exact product-form cells on a 2x2x3 cross product are reproduced everywhere") {
    std::mt19937_64 rng(21);
    for (int t = 0; t < 20; ++t) {
      auto spec = random_product_spec(rng, 4, {2, 2, 3});
      auto est = product_pool_estimate(exact_table(spec, 10), *spec.schema);
      CHECK(est.coverage == 1.0);
      double worst = 0.0;
      for (const auto& profile : enumerate_profiles(*spec.schema)) {
        auto truth = brute_product(spec.base, spec.factors, profile.choices);
        const auto& got = est.table.entries.at(profile).dist;
        for (std::size_t c = 0; c < 4; ++c) worst = std::max(worst, std::abs(got[c] - truth[c]));
      }
      CHECK(worst <= 1e-9);
    }
  }
  SUBCASE("multiplying a factor by a constant changes nothing") {
    std::mt19937_64 rng(22);
    auto spec = random_product_spec(rng, 3, {2, 3});
    auto scaled = spec;
    for (auto& v : scaled.factors[1][2]) v *= 4.5;
    auto a = product_pool_estimate(exact_table(spec, 10), *spec.schema);
    auto b = product_pool_estimate(exact_table(scaled, 10), *scaled.schema);
    for (const auto& [profile, entry] : a.table.entries) {
      for (std::size_t c = 0; c < 3; ++c) CHECK(b.table.entries.at(profile).dist[c] == doctest::Approx(entry.dist[c]).epsilon(1e-12));
    }
  }
  SUBCASE("a single question reproduces each smoothed cell") {
    auto schema = test::make_schema(3, {3});
    SurveyDataset data{schema, {}, "m1"};
    std::mt19937_64 rng(2);
    for (int r = 0; r < 90; ++r) {
      data.respondents.push_back({BackgroundProfile{{static_cast<std::uint32_t>(rng() % 3)}}, static_cast<std::uint32_t>(rng() % 3)});
    }
    auto table = estimate_empirical(data);
    auto est = product_pool_estimate(table, *schema);
    for (const auto& [profile, cell] : table.cells()) {
      for (std::size_t c = 0; c < 3; ++c) CHECK(est.table.entries.at(profile).dist[c] == doctest::Approx(cell.dist[c]).epsilon(1e-12));
    }
  }
  SUBCASE("a never-observed option leaves its profiles out") {
    auto schema = test::make_schema(2, {2, 3});
    SurveyDataset data{schema, {}, "gap"};
    for (std::uint32_t a = 0; a < 2; ++a) {
      for (std::uint32_t b = 0; b < 2; ++b) data.respondents.push_back({BackgroundProfile{{a, b}}, (a + b) % 2});
    }
    auto est = product_pool_estimate(estimate_empirical(data), *schema);
    CHECK(est.coverage == doctest::Approx(4.0 / 6.0));
    CHECK(est.table.find(BackgroundProfile{{0, 2}}) == nullptr);
  }
}

TEST_CASE("product_pool_estimate: worst-profile error shrinks with N") {
  auto spec = load_population(test::data_dir() / "bench-small.json");
  auto truth = truth_table(spec);
  std::vector<double> mean_worst;
  for (std::size_t n : {1000u, 10000u, 100000u}) {
    double acc = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto est = product_pool_estimate(estimate_empirical(sample_dataset(spec, n, seed)), *spec.schema);
      double worst = 0.0;
      for (const auto& [profile, entry] : truth.entries) {
        worst = std::max(worst, kld(est.table.entries.at(profile).dist, entry.dist).value);
      }
      acc += worst;
    }
    mean_worst.push_back(acc / 10.0);
  }
  CHECK(mean_worst[1] <= mean_worst[0]);
  CHECK(mean_worst[2] <= mean_worst[1]);
}

TEST_CASE("product_pool_estimate beats the raw cells at N=2000") {
  auto spec = load_population(test::data_dir() / "bench-small.json");
  auto truth = truth_table(spec);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto table = estimate_empirical(sample_dataset(spec, 2000, seed));
    auto est = product_pool_estimate(table, *spec.schema);
    std::vector<WeightedValue> pooled, raw;
    for (const auto& [profile, cell] : table.cells()) {
      const auto& t = truth.entries.at(profile).dist;
      pooled.push_back({kld(est.table.entries.at(profile).dist, t).value, static_cast<double>(cell.support)});
      raw.push_back({kld(cell.dist, t).value, static_cast<double>(cell.support)});
    }
    CHECK(aggregate_metric(pooled) < aggregate_metric(raw));
  }
}

TEST_CASE("quantile_pool_estimate") {
  QuantileGrid grid;
  SUBCASE("unseen profiles are estimated from neighbours") {
    auto spec = load_population(test::data_dir() / "bench-small.json");
    auto data = sample_dataset(spec, 400, 1);
    BackgroundProfile hole{{1, 2, 1}};
    std::erase_if(data.respondents, [&](const Respondent& r) { return r.profile == hole; });
    auto table = estimate_empirical(data);
    auto est = quantile_pool_estimate(table, *spec.schema, grid);
    CHECK(table.find(hole) == nullptr);
    REQUIRE(est.table.find(hole) != nullptr);
    CHECK(est.table.find(hole)->weight == 0.0);
    CHECK(est.coverage == 1.0);
  }
  SUBCASE("a single observed cell maps onto itself") {
    auto schema = test::make_schema(3, {2});
    SurveyDataset data{schema, {}, "one"};
    for (std::uint32_t c : {0u, 1u, 1u, 2u, 2u, 2u}) data.respondents.push_back({BackgroundProfile{{0}}, c});
    auto table = estimate_empirical(data);
    auto est = quantile_pool_estimate(table, *schema, grid);
    CHECK(est.coverage == 0.5);
    const auto& got = est.table.entries.at(BackgroundProfile{{0}}).dist;
    for (std::size_t c = 0; c < 3; ++c) CHECK(got[c] == doctest::Approx(table.cells().begin()->second.dist[c]));
  }
  SUBCASE("location-shift truth: pooled estimate beats the raw cell almost everywhere") {
    auto schema = std::make_shared<const SurveySchema>(load_schema(test::data_dir() / "ess-like.schema.json"));
    PopulationSpec spec;
    spec.schema = schema;
    spec.structure = Structure::LocationShift;
    spec.base = {0.02, 0.04, 0.08, 0.14, 0.2, 0.2, 0.14, 0.1, 0.05, 0.02, 0.01};
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-0.6, 0.6);
    for (std::size_t i = 0; i < schema->num_backgrounds(); ++i) {
      const std::size_t k = schema->background(i).size();
      std::vector<double> row(k);
      for (auto& v : row) v = u(rng);
      spec.offsets.push_back(row);
      spec.factors.emplace_back(k, std::vector<double>(11, 1.0));
      spec.marginals.emplace_back(k, 1.0 / static_cast<double>(k));
    }
    std::size_t better = 0, total = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto table = estimate_empirical(sample_dataset(spec, 2000, seed));
      auto est = quantile_pool_estimate(table, *schema, grid);
      for (const auto& [profile, cell] : table.cells()) {
        auto t = true_distribution(spec, profile);
        better += kld(t, est.table.entries.at(profile).dist).value < kld(t, cell.dist).value;
        ++total;
      }
    }
    CHECK(static_cast<double>(better) >= 0.9 * static_cast<double>(total));
  }
  SUBCASE("empty table") {
    auto schema = test::make_schema(2, {2});
    EmpiricalTable empty(schema, {}, 0.5);
    CHECK(error_code_of([&] { quantile_pool_estimate(empty, *schema, grid); }) == ErrorCode::NoData);
    CHECK(error_code_of([&] { product_pool_estimate(empty, *schema); }) == ErrorCode::NoData);
  }
}
