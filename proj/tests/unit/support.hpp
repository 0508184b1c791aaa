// SPDX-License-Identifier: Apache-2.0
#ifndef DSA_TESTS_SUPPORT_HPP
#define DSA_TESTS_SUPPORT_HPP

#include <cmath>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <doctest.h>

#include "dsa/error.hpp"
#include "dsa/survey_model.hpp"

namespace dsa::test {

inline std::filesystem::path data_dir() { return DSA_DATA_DIR; }
inline std::filesystem::path fixture_dir() { return DSA_FIXTURE_DIR; }

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("dsa_unit_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Core question with n options scored 1..n (or `scores`), one background
/// question per entry of `sizes`.
inline SchemaPtr make_schema(std::size_t n, const std::vector<std::size_t>& sizes, std::vector<double> scores = {}) {
  CoreQuestion core{"c", "Core question?", {}};
  for (std::size_t j = 0; j < n; ++j) {
    core.options.push_back({"o" + std::to_string(j), scores.empty() ? static_cast<double>(j + 1) : scores[j]});
  }
  std::vector<BackgroundQuestion> bgs;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    BackgroundQuestion q{"q" + std::to_string(i), "Question " + std::to_string(i) + "?", {}};
    for (std::size_t j = 0; j < sizes[i]; ++j) q.options.push_back("q" + std::to_string(i) + "_" + std::to_string(j));
    bgs.push_back(std::move(q));
  }
  return std::make_shared<const SurveySchema>(std::move(core), std::move(bgs),
                                              std::map<std::string, std::string>{{"default", "{{background_qa}}\n{{core_question}}\n{{instruction}}"}});
}

inline std::vector<double> scores_1_to(std::size_t n) {
  std::vector<double> s(n);
  for (std::size_t j = 0; j < n; ++j) s[j] = static_cast<double>(j + 1);
  return s;
}

/// Dirichlet(alpha) draw.
inline std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t n, double alpha = 1.0) {
  std::gamma_distribution<double> g(alpha, 1.0);
  std::vector<double> p(n);
  double total = 0.0;
  for (auto& v : p) {
    v = g(rng);
    total += v;
  }
  if (total <= 0.0) {
    p.assign(n, 1.0 / static_cast<double>(n));
    return p;
  }
  for (auto& v : p) v /= total;
  return p;
}

inline double tv(const std::vector<double>& a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

/// Central finite-difference derivative of f along every coordinate of x.
inline std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// max_i |a_i - b_i| / max(scale, max_i |b_i|): relative error against the
/// gradient's magnitude, robust to individual near-zero components.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b, double scale = 1e-8) {
  double diff = 0.0, mag = scale;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    mag = std::max(mag, std::abs(b[i]));
  }
  return diff / mag;
}

template <class Fn>
ErrorCode error_code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected a dsa::Error");
  return ErrorCode::InvalidArgument;
}

}  // namespace dsa::test

#endif  // DSA_TESTS_SUPPORT_HPP
