// SPDX-License-Identifier: Apache-2.0
#ifndef DSA_TRAINING_HPP
#define DSA_TRAINING_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "dsa/choice_model.hpp"
#include "dsa/distributions.hpp"
#include "dsa/error.hpp"
#include "dsa/quantile_shift.hpp"

namespace dsa {

enum class OptimizerKind { Sgd, Adam };

struct TrainConfig {
  std::size_t phase1_epochs = 3000;
  std::size_t phase2_epochs = 1000;
  double learning_rate = 0.05;
  std::size_t pairs_per_epoch = 256;
  std::uint64_t seed = 0;
  QuantileGrid grid;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// "cosine": the rate decays within each phase from learning_rate to
  /// learning_rate * lr_floor. "constant": no decay.
  std::string lr_schedule = "cosine";
  double lr_floor = 0.01;
  bool phase2_enabled = true;
  /// Weight of the shift-alignment loss in stage 2.
  double lambda = 1.0;
  /// Stage 2 optimizes phase1 + lambda * shift loss; false drops the phase-1 term.
  bool mix_phase1 = true;
  /// Recompute reference shifts from the stage-1 model instead of the table.
  bool shifts_from_model = false;
  std::size_t min_cell = kDefaultMinCell;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults.
  static TrainConfig from_json(const nlohmann::json& doc);
};

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient;
};

/// Sum over observed profiles of KL(model || smoothed training cell).
LossAndGradient phase1_loss(const LogitChoiceModel& model, const EmpiricalTable& table);

/// Two virtual respondents differing only on background question `question`.
struct VirtualPair {
  BackgroundProfile first;
  BackgroundProfile second;
  std::size_t question = 0;
};

std::vector<VirtualPair> sample_pairs(const SurveySchema& schema, std::uint64_t seed, std::size_t k);

using EdgeKey = std::tuple<std::size_t, std::size_t, std::size_t>;  // (question, opt_a, opt_b)
/// d(q, a, b) = quantiles(option a) - quantiles(option b), both orientations.
using ReferenceShifts = std::map<EdgeKey, ShiftVector>;

/// Aggregated reference shifts for every option pair of every question with
/// data on both sides.
ReferenceShifts compute_reference_shifts(const EmpiricalTable& table, const QuantileGrid& grid,
                                         std::size_t min_cell = kDefaultMinCell);

/// The side whose differing option has more respondents (ties: smaller option
/// index) is the anchor; returns true when `first` is the anchor.
bool first_is_anchor(const VirtualPair& pair, const EmpiricalTable& table);

/// Mean over pairs of KL(model(other) || apply_shift(model(anchor), d_hat)),
/// with the anchor prediction and the transported target held constant.
LossAndGradient phase2_loss(const LogitChoiceModel& model, const std::vector<VirtualPair>& pairs,
                            const ReferenceShifts& reference, const EmpiricalTable& table);

struct TrainReport {
  std::vector<double> phase1_curve;
  std::vector<double> phase2_curve;
  LogitChoiceModel final_model;
  ReferenceShifts reference;
  std::size_t skipped_pairs = 0;
  double wall_time_seconds = 0.0;
  TrainConfig config;

  /// Excludes wall time so identical runs serialize identically.
  nlohmann::json to_json() const;
};

/// Raised when a loss turns NaN/Inf; carries the last finite state.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& message, TrainReport report)
      : Error(ErrorCode::Diverged, message), report_(std::move(report)) {}
  const TrainReport& report() const { return report_; }

 private:
  TrainReport report_;
};

TrainReport train(LogitChoiceModel model, const EmpiricalTable& table, const TrainConfig& config);

}  // namespace dsa

#endif  // DSA_TRAINING_HPP
