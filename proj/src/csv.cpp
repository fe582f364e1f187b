#include "rcassoc/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "rcassoc/fixtures.hpp"

namespace rcassoc {

namespace {

std::vector<std::string> split_fields(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(std::move(cur));
    return out;
}

double parse_number(const std::string& field, int line_no, int col_no) {
    double value = 0.0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end || field.empty()) {
        std::ostringstream os;
        os << "cannot parse numeric cell '" << field << "' at line " << line_no << ", column "
           << col_no;
        throw Error(ErrorCode::parse_error, os.str());
    }
    return value;
}

std::string format_number(double v) {
    if (std::isfinite(v) && v == std::round(v) && std::abs(v) < 1e15) {
        return std::to_string(static_cast<long long>(v));
    }
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

}  // namespace

ContingencyTable read_table_csv(std::istream& in, const std::string& source_name) {
    std::string line;
    if (!std::getline(in, line)) {
        throw Error(ErrorCode::parse_error, source_name + ": empty input at line 1");
    }
    const auto header = split_fields(line);
    if (header.size() < 2 || !header[0].empty()) {
        throw Error(ErrorCode::parse_error,
                    source_name + ": malformed header at line 1 "
                                  "(expected an empty first field then column labels)");
    }
    std::vector<std::string> col_labels(header.begin() + 1, header.end());
    const int c = static_cast<int>(col_labels.size());

    std::vector<std::string> row_labels;
    std::vector<std::vector<double>> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_fields(line);
        if (static_cast<int>(fields.size()) != c + 1) {
            std::ostringstream os;
            os << source_name << ": expected " << c + 1 << " fields at line " << line_no
               << ", got " << fields.size();
            throw Error(ErrorCode::parse_error, os.str());
        }
        row_labels.push_back(fields[0]);
        std::vector<double> vals;
        for (int j = 0; j < c; ++j) {
            vals.push_back(parse_number(fields[j + 1], line_no, j + 2));
        }
        rows.push_back(std::move(vals));
    }
    const int r = static_cast<int>(rows.size());
    if (r == 0) {
        throw Error(ErrorCode::parse_error, source_name + ": no data rows after the header");
    }
    Eigen::MatrixXd counts(r, c);
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) counts(i, j) = rows[i][j];
    }
    return validate_table(std::move(row_labels), std::move(col_labels), std::move(counts));
}

ContingencyTable read_table_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::usage_error, "cannot open table file '" + path + "'");
    }
    return read_table_csv(in, path);
}

ContingencyTable parse_table_csv(const std::string& path_or_fixture) {
    if (is_fixture_name(path_or_fixture)) return fixture_table(path_or_fixture);
    return read_table_csv_file(path_or_fixture);
}

std::string write_table_csv(const ContingencyTable& t) {
    std::ostringstream os;
    for (const auto& l : t.col_labels) os << ',' << l;
    os << '\n';
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
        os << t.row_labels[i];
        for (Eigen::Index j = 0; j < t.cols(); ++j) os << ',' << format_number(t.counts(i, j));
        os << '\n';
    }
    return os.str();
}

void write_table_csv_file(const ContingencyTable& t, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::io_error, "cannot write table file '" + path + "'");
    }
    out << write_table_csv(t);
    if (!out) {
        throw Error(ErrorCode::io_error, "failed writing table file '" + path + "'");
    }
}

}  // namespace rcassoc
