// SPDX-License-Identifier: Apache-2.0
#ifndef DSA_CSV_HPP
#define DSA_CSV_HPP

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace dsa::csv {

using Row = std::vector<std::string>;

// RFC 4180 reader: quoted fields, doubled quotes, CRLF or LF line endings.
// Blank lines are skipped. A leading UTF-8 BOM is dropped.
std::vector<Row> parse(std::string_view text);
std::vector<Row> read_file(const std::string& path);

std::string escape(std::string_view field);
void write_row(std::ostream& out, const Row& row);

// Shortest-round-trip decimal representation, stable across runs.
std::string format_double(double value);

}  // namespace dsa::csv

#endif  // DSA_CSV_HPP
