// SPDX-License-Identifier: Apache-2.0
#ifndef DSA_IO_HPP
#define DSA_IO_HPP

#include <filesystem>
#include <iosfwd>
#include <string>

#include "dsa/distributions.hpp"
#include "dsa/evaluation.hpp"
#include "dsa/training.hpp"

namespace dsa {

/// Distribution table CSV: one column per background question (option
/// labels), then p_<label> per core option, weight, method, coverage.
void write_table_csv(const DistributionTable& table, std::ostream& out, std::string_view method = "",
                     double coverage = 1.0);
DistributionTable parse_table_csv(const std::string& text, SchemaPtr schema);
DistributionTable read_table_csv(const std::filesystem::path& path, SchemaPtr schema);

/// profile, kld, jsd, ts_kld, support_count, seen, weight
void write_metrics_csv(const EvalReport& report, const SurveySchema& schema, std::ostream& out);

/// phase, epoch, loss
void write_loss_curve_csv(const TrainReport& report, std::ostream& out);

std::string read_text(const std::filesystem::path& path);
/// Writes via a temporary file and rename.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace dsa

#endif  // DSA_IO_HPP
