// SPDX-License-Identifier: Apache-2.0
#include "dsa/training.hpp"

#include <chrono>
#include <cmath>

#include "dsa/hashing.hpp"

namespace dsa {

namespace {

// KL(p || q) and its gradient with respect to the logits behind p.
double kl_logit_gradient(std::span<const double> p, std::span<const double> q, std::span<double> dlogits) {
  const std::size_t n = p.size();
  std::vector<double> log_ratio(n);
  double kl = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    double qc = std::max(q[c], kProbabilityFloor);
    double pc = std::max(p[c], 1e-300);
    log_ratio[c] = std::log(pc / qc);
    kl += p[c] * log_ratio[c];
  }
  for (std::size_t c = 0; c < n; ++c) dlogits[c] = p[c] * (log_ratio[c] - kl);
  return kl;
}

class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, std::size_t size) : cfg_(cfg) {
    if (cfg_.optimizer == OptimizerKind::Adam) {
      m_.assign(size, 0.0);
      v_.assign(size, 0.0);
    }
  }

  void step(std::span<double> weights, std::span<const double> grad, double lr) {
    if (cfg_.optimizer == OptimizerKind::Sgd) {
      for (std::size_t i = 0; i < weights.size(); ++i) weights[i] -= lr * grad[i];
      return;
    }
    ++t_;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < weights.size(); ++i) {
      m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
      v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
      weights[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.eps);
    }
  }

 private:
  const TrainConfig& cfg_;
  std::vector<double> m_, v_;
  std::uint64_t t_ = 0;
};

double scheduled_rate(const TrainConfig& cfg, std::size_t epoch, std::size_t epochs) {
  if (cfg.lr_schedule == "constant" || epochs <= 1) return cfg.learning_rate;
  const double pi = std::acos(-1.0);
  double t = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
  double scale = cfg.lr_floor + (1.0 - cfg.lr_floor) * 0.5 * (1.0 + std::cos(pi * t));
  return cfg.learning_rate * scale;
}

bool all_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

EmpiricalTable table_from_model(const LogitChoiceModel& model, const EmpiricalTable& table) {
  std::map<BackgroundProfile, EmpiricalCell> cells;
  const auto scores = table.schema().core().scores();
  for (const auto& [profile, cell] : table.cells()) {
    auto out = model.predict(profile);
    cells.emplace(profile, EmpiricalCell{ChoiceDistribution(out.probs, scores), cell.counts, cell.support});
  }
  return EmpiricalTable(table.schema_ptr(), std::move(cells), table.smoothing_alpha());
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail(ErrorCode::Validation, "learning_rate must be > 0");
  if (pairs_per_epoch < 1) fail(ErrorCode::Validation, "pairs_per_epoch must be >= 1");
  if (lr_schedule != "cosine" && lr_schedule != "constant") {
    fail(ErrorCode::Validation, "lr_schedule must be 'cosine' or 'constant'");
  }
  if (!(lr_floor > 0.0 && lr_floor <= 1.0)) fail(ErrorCode::Validation, "lr_floor must lie in (0, 1]");
  if (!(lambda >= 0.0)) fail(ErrorCode::Validation, "lambda must be >= 0");
  if (optimizer == OptimizerKind::Adam && (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1 || eps <= 0)) {
    fail(ErrorCode::Validation, "invalid Adam parameters");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"phase1_epochs", phase1_epochs},
          {"phase2_epochs", phase2_epochs},
          {"learning_rate", learning_rate},
          {"pairs_per_epoch", pairs_per_epoch},
          {"seed", seed},
          {"grid", grid.levels()},
          {"optimizer", optimizer == OptimizerKind::Adam ? "adam" : "sgd"},
          {"beta1", beta1},
          {"beta2", beta2},
          {"eps", eps},
          {"lr_schedule", lr_schedule},
          {"lr_floor", lr_floor},
          {"phase2_enabled", phase2_enabled},
          {"lambda", lambda},
          {"mix_phase1", mix_phase1},
          {"shifts_from_model", shifts_from_model},
          {"min_cell", min_cell}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& doc) {
  TrainConfig c;
  try {
    c.phase1_epochs = doc.value("phase1_epochs", c.phase1_epochs);
    c.phase2_epochs = doc.value("phase2_epochs", c.phase2_epochs);
    c.learning_rate = doc.value("learning_rate", c.learning_rate);
    c.pairs_per_epoch = doc.value("pairs_per_epoch", c.pairs_per_epoch);
    c.seed = doc.value("seed", c.seed);
    if (doc.contains("grid")) {
      const auto& g = doc["grid"];
      c.grid = g.is_number_integer() ? QuantileGrid::uniform(g.get<std::size_t>())
                                     : QuantileGrid(g.get<std::vector<double>>());
    }
    std::string opt = doc.value("optimizer", std::string("adam"));
    if (opt == "adam") c.optimizer = OptimizerKind::Adam;
    else if (opt == "sgd") c.optimizer = OptimizerKind::Sgd;
    else fail(ErrorCode::Validation, "unknown optimizer '" + opt + "'");
    c.beta1 = doc.value("beta1", c.beta1);
    c.beta2 = doc.value("beta2", c.beta2);
    c.eps = doc.value("eps", c.eps);
    c.lr_schedule = doc.value("lr_schedule", c.lr_schedule);
    c.lr_floor = doc.value("lr_floor", c.lr_floor);
    c.phase2_enabled = doc.value("phase2_enabled", c.phase2_enabled);
    c.lambda = doc.value("lambda", c.lambda);
    c.mix_phase1 = doc.value("mix_phase1", c.mix_phase1);
    c.shifts_from_model = doc.value("shifts_from_model", c.shifts_from_model);
    c.min_cell = doc.value("min_cell", c.min_cell);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

LossAndGradient phase1_loss(const LogitChoiceModel& model, const EmpiricalTable& table) {
  if (table.cells().empty()) fail(ErrorCode::EmptyInput, "phase1_loss: empty table");
  LossAndGradient out;
  out.gradient.assign(model.weights().size(), 0.0);
  std::vector<double> dlogits(model.num_options());
  for (const auto& [profile, cell] : table.cells()) {
    auto pred = model.predict(profile);
    out.loss += kl_logit_gradient(pred.probs, cell.dist.probs(), dlogits);
    model.accumulate_logit_gradient(profile, dlogits, out.gradient);
  }
  return out;
}

std::vector<VirtualPair> sample_pairs(const SurveySchema& schema, std::uint64_t seed, std::size_t k) {
  if (k < 1) fail(ErrorCode::InvalidArgument, "sample_pairs: k must be >= 1");
  CounterRng rng(seed, 0x9A1E5ULL);
  const std::size_t m = schema.num_backgrounds();
  std::vector<VirtualPair> pairs;
  pairs.reserve(k);
  for (std::size_t p = 0; p < k; ++p) {
    VirtualPair pair;
    pair.first.choices.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      pair.first.choices[i] = static_cast<std::uint32_t>(rng.next_below(schema.background(i).size()));
    }
    pair.question = static_cast<std::size_t>(rng.next_below(m));
    const std::size_t options = schema.background(pair.question).size();
    auto a = static_cast<std::uint32_t>(rng.next_below(options));
    auto b = static_cast<std::uint32_t>(rng.next_below(options - 1));
    if (b >= a) ++b;
    pair.first.choices[pair.question] = a;
    pair.second = pair.first;
    pair.second.choices[pair.question] = b;
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

ReferenceShifts compute_reference_shifts(const EmpiricalTable& table, const QuantileGrid& grid,
                                         std::size_t min_cell) {
  ReferenceShifts out;
  const auto& schema = table.schema();
  for (std::size_t q = 0; q < schema.num_backgrounds(); ++q) {
    const std::size_t options = schema.background(q).size();
    for (std::size_t a = 0; a < options; ++a) {
      for (std::size_t b = a + 1; b < options; ++b) {
        try {
          auto d = aggregate_reference_shift(table, q, a, b, grid, min_cell);
          out.emplace(EdgeKey{q, b, a}, -d);
          out.emplace(EdgeKey{q, a, b}, std::move(d));
        } catch (const Error& e) {
          if (e.code() != ErrorCode::NoData) throw;
        }
      }
    }
  }
  return out;
}

bool first_is_anchor(const VirtualPair& pair, const EmpiricalTable& table) {
  const std::size_t q = pair.question;
  const std::size_t a = pair.first[q], b = pair.second[q];
  const std::size_t na = table.option_count(q, a), nb = table.option_count(q, b);
  if (na != nb) return na > nb;
  return a < b;
}

LossAndGradient phase2_loss(const LogitChoiceModel& model, const std::vector<VirtualPair>& pairs,
                            const ReferenceShifts& reference, const EmpiricalTable& table) {
  LossAndGradient out;
  out.gradient.assign(model.weights().size(), 0.0);
  if (pairs.empty()) return out;
  const auto scores = model.schema().core().scores();
  std::vector<double> dlogits(model.num_options());
  const double scale = 1.0 / static_cast<double>(pairs.size());
  for (const auto& pair : pairs) {
    if (hamming_distance(pair.first, pair.second) != 1 || pair.first[pair.question] == pair.second[pair.question]) {
      fail(ErrorCode::InvalidArgument, "virtual pair must differ on exactly its question");
    }
    const bool first_anchor = first_is_anchor(pair, table);
    const auto& anchor = first_anchor ? pair.first : pair.second;
    const auto& other = first_anchor ? pair.second : pair.first;
    const std::size_t q = pair.question;
    auto it = reference.find(EdgeKey{q, other[q], anchor[q]});
    if (it == reference.end()) {
      fail(ErrorCode::MissingReference, "no reference shift for question " + std::to_string(q) + " options " +
                                            std::to_string(other[q]) + "/" + std::to_string(anchor[q]));
    }
    // Stop-gradient: anchor prediction and its transport are constants.
    const auto frozen = model.predict(anchor);
    const auto target = apply_shift(ChoiceDistribution(frozen.probs, scores), it->second);
    const auto pred = model.predict(other);
    out.loss += scale * kl_logit_gradient(pred.probs, target.probs(), dlogits);
    for (double& g : dlogits) g *= scale;
    model.accumulate_logit_gradient(other, dlogits, out.gradient);
  }
  return out;
}

nlohmann::json TrainReport::to_json() const {
  nlohmann::json shifts = nlohmann::json::array();
  for (const auto& [key, s] : reference) {
    auto [q, a, b] = key;
    if (a < b) shifts.push_back(dsa::to_json(s));
  }
  return {{"config", config.to_json()},
          {"phase1_loss_curve", phase1_curve},
          {"phase2_loss_curve", phase2_curve},
          {"skipped_pairs", skipped_pairs},
          {"reference_shifts", shifts}};
}

TrainReport train(LogitChoiceModel model, const EmpiricalTable& table, const TrainConfig& config) {
  config.validate();
  if (table.cells().empty()) fail(ErrorCode::EmptyInput, "train: empty table");
  const auto start = std::chrono::steady_clock::now();

  TrainReport report{{}, {}, model, {}, 0, 0.0, config};
  Optimizer optimizer(config, model.weights().size());
  const double observed = static_cast<double>(table.cells().size());
  std::vector<double> last_finite(model.weights().begin(), model.weights().end());

  auto finish = [&](LogitChoiceModel& m) {
    report.final_model = m;
    report.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  auto diverged = [&](const char* phase, std::size_t epoch) {
    std::copy(last_finite.begin(), last_finite.end(), model.weights().begin());
    finish(model);
    throw TrainingDiverged(std::string(phase) + " loss became non-finite at epoch " + std::to_string(epoch),
                           std::move(report));
  };

  // Stage 1: full-batch alignment to the smoothed training cells. The loss is
  // averaged over observed profiles so it sits on the same scale as the
  // per-pair mean of stage 2.
  for (std::size_t epoch = 0; epoch < config.phase1_epochs; ++epoch) {
    auto lg = phase1_loss(model, table);
    double loss = lg.loss / observed;
    for (double& g : lg.gradient) g /= observed;
    if (!std::isfinite(loss) || !all_finite(lg.gradient)) diverged("phase 1", epoch);
    report.phase1_curve.push_back(loss);
    std::copy(model.weights().begin(), model.weights().end(), last_finite.begin());
    optimizer.step(model.weights(), lg.gradient, scheduled_rate(config, epoch, config.phase1_epochs));
    if (!all_finite(model.weights())) diverged("phase 1", epoch);
  }

  if (config.phase2_enabled && config.phase2_epochs > 0) {
    report.reference = config.shifts_from_model
                           ? compute_reference_shifts(table_from_model(model, table), config.grid, config.min_cell)
                           : compute_reference_shifts(table, config.grid, config.min_cell);
    for (std::size_t epoch = 0; epoch < config.phase2_epochs; ++epoch) {
      auto sampled = sample_pairs(model.schema(), mix64(config.seed) ^ mix64(epoch + 1), config.pairs_per_epoch);
      std::vector<VirtualPair> pairs;
      pairs.reserve(sampled.size());
      for (auto& p : sampled) {
        const bool fa = first_is_anchor(p, table);
        const auto& other = fa ? p.second : p.first;
        const auto& anchor = fa ? p.first : p.second;
        if (report.reference.contains(EdgeKey{p.question, other[p.question], anchor[p.question]})) {
          pairs.push_back(std::move(p));
        } else {
          ++report.skipped_pairs;
        }
      }
      auto shift_term = phase2_loss(model, pairs, report.reference, table);
      double loss = config.lambda * shift_term.loss;
      std::vector<double> grad = std::move(shift_term.gradient);
      for (double& g : grad) g *= config.lambda;
      if (config.mix_phase1) {
        auto align = phase1_loss(model, table);
        loss += align.loss / observed;
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += align.gradient[i] / observed;
      }
      if (!std::isfinite(loss) || !all_finite(grad)) diverged("phase 2", epoch);
      report.phase2_curve.push_back(loss);
      std::copy(model.weights().begin(), model.weights().end(), last_finite.begin());
      optimizer.step(model.weights(), grad, scheduled_rate(config, epoch, config.phase2_epochs));
      if (!all_finite(model.weights())) diverged("phase 2", epoch);
    }
  }

  finish(model);
  return report;
}

}  // namespace dsa
