#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fairmap::csv {

using Row = std::vector<std::string>;

// RFC-4180 reader: quoted fields, doubled-quote escapes, CRLF or LF endings.
std::vector<Row> read_file(const std::string& path);
std::vector<Row> read_stream(std::istream& in);

std::string escape_field(const std::string& field);
void write_row(std::ostream& out, const Row& row);
void write_file(const std::string& path, const std::vector<Row>& rows);

}  // namespace fairmap::csv
