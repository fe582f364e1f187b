#pragma once

#include <iosfwd>
#include <string>

#include "rcassoc/table.hpp"

namespace rcassoc {

/// CSV table format: first line is a header with an empty first field then the
/// c column labels; each following line is a row label then c numeric cells.
/// UTF-8, comma separated, no thousands separators.
ContingencyTable read_table_csv(std::istream& in, const std::string& source_name = "<stream>");
ContingencyTable read_table_csv_file(const std::string& path);

/// Fixture names ("table5", "table6", "table7") resolve to bundled data,
/// anything else is read as a CSV file path.
ContingencyTable parse_table_csv(const std::string& path_or_fixture);

std::string write_table_csv(const ContingencyTable& t);
void write_table_csv_file(const ContingencyTable& t, const std::string& path);

}  // namespace rcassoc
