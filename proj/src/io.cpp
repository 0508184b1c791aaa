// SPDX-License-Identifier: Apache-2.0
#include "dsa/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dsa/csv.hpp"
#include "dsa/error.hpp"

namespace dsa {

namespace {

double parse_number(const std::string& field, std::size_t row, const std::string& column) {
  double v = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) {
    fail(ErrorCode::Parse, "row " + std::to_string(row) + ", column '" + column + "': '" + field + "' is not a number");
  }
  return v;
}

}  // namespace

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write " + tmp.string());
    out << text;
    if (!out) fail(ErrorCode::Io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::Io, "cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void write_table_csv(const DistributionTable& table, std::ostream& out, std::string_view method, double coverage) {
  const auto& schema = *table.schema;
  csv::Row header;
  for (const auto& q : schema.backgrounds()) header.push_back(q.id);
  for (const auto& o : schema.core().options) header.push_back("p_" + o.label);
  header.insert(header.end(), {"weight", "method", "coverage"});
  csv::write_row(out, header);
  for (const auto& [profile, entry] : table.entries) {
    csv::Row row;
    for (std::size_t i = 0; i < schema.num_backgrounds(); ++i) row.push_back(schema.background(i).options[profile[i]]);
    for (double p : entry.dist.probs()) row.push_back(csv::format_double(p));
    row.push_back(csv::format_double(entry.weight));
    row.emplace_back(method);
    row.push_back(csv::format_double(coverage));
    csv::write_row(out, row);
  }
}

DistributionTable parse_table_csv(const std::string& text, SchemaPtr schema) {
  auto rows = csv::parse(text);
  if (rows.empty()) fail(ErrorCode::MissingColumn, "distribution table has no header row");
  const auto& header = rows.front();
  auto column = [&](const std::string& name, bool required) -> std::ptrdiff_t {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == name) return static_cast<std::ptrdiff_t>(c);
    }
    if (required) fail(ErrorCode::MissingColumn, "distribution table lacks column '" + name + "'");
    return -1;
  };
  std::vector<std::size_t> bg_cols, p_cols;
  for (const auto& q : schema->backgrounds()) bg_cols.push_back(static_cast<std::size_t>(column(q.id, true)));
  for (const auto& o : schema->core().options) p_cols.push_back(static_cast<std::size_t>(column("p_" + o.label, true)));
  const auto weight_col = column("weight", false);
  const auto scores = schema->core().scores();

  DistributionTable table{schema, {}};
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() < header.size()) fail(ErrorCode::Parse, "row " + std::to_string(r) + " has too few fields");
    BackgroundProfile profile;
    for (std::size_t i = 0; i < bg_cols.size(); ++i) {
      const auto& opts = schema->background(i).options;
      auto it = std::find(opts.begin(), opts.end(), row[bg_cols[i]]);
      if (it == opts.end()) {
        fail(ErrorCode::UnknownLabel, "unknown label '" + row[bg_cols[i]] + "' at row " + std::to_string(r) +
                                          ", column '" + schema->background(i).id + "'");
      }
      profile.choices.push_back(static_cast<std::uint32_t>(it - opts.begin()));
    }
    std::vector<double> probs;
    double total = 0.0;
    for (std::size_t c = 0; c < p_cols.size(); ++c) {
      double v = parse_number(row[p_cols[c]], r, header[p_cols[c]]);
      if (!(v >= 0.0) || !std::isfinite(v)) fail(ErrorCode::Validation, "negative probability at row " + std::to_string(r));
      probs.push_back(v);
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-6) {
      fail(ErrorCode::Validation, "probabilities at row " + std::to_string(r) + " sum to " + csv::format_double(total));
    }
    double weight = weight_col >= 0 ? parse_number(row[static_cast<std::size_t>(weight_col)], r, "weight") : 1.0;
    auto entry = TableEntry{ChoiceDistribution::from_weights(probs, scores), weight};
    if (!table.entries.emplace(std::move(profile), std::move(entry)).second) {
      fail(ErrorCode::Validation, "duplicate profile at row " + std::to_string(r));
    }
  }
  return table;
}

DistributionTable read_table_csv(const std::filesystem::path& path, SchemaPtr schema) {
  return parse_table_csv(read_text(path), std::move(schema));
}

void write_metrics_csv(const EvalReport& report, const SurveySchema& schema, std::ostream& out) {
  csv::write_row(out, {"profile", "kld", "jsd", "ts_kld", "support_count", "seen", "weight"});
  for (const auto& [profile, m] : report.per_profile) {
    csv::write_row(out, {schema.profile_key(profile), csv::format_double(m.kld), csv::format_double(m.jsd),
                         csv::format_double(m.ts_kld), std::to_string(m.support), m.seen ? "1" : "0",
                         csv::format_double(m.weight)});
  }
}

void write_loss_curve_csv(const TrainReport& report, std::ostream& out) {
  csv::write_row(out, {"phase", "epoch", "loss"});
  for (std::size_t e = 0; e < report.phase1_curve.size(); ++e) {
    csv::write_row(out, {"1", std::to_string(e), csv::format_double(report.phase1_curve[e])});
  }
  for (std::size_t e = 0; e < report.phase2_curve.size(); ++e) {
    csv::write_row(out, {"2", std::to_string(e), csv::format_double(report.phase2_curve[e])});
  }
}

}  // namespace dsa
