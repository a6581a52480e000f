#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "kpca_attn/mat.hpp"

namespace kpca_attn {

/// Matrix text format: first line "rows,cols", then one CSV row per matrix
/// row. Writes 17 significant digits so doubles round-trip exactly.

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_matrix_csv(std::ostream& out, const Mat& a) {
    out << a.rows() << "," << a.cols() << "\n";
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            if (j) out << ",";
            out << format_double(a(i, j));
        }
        out << "\n";
    }
}

inline void write_matrix_csv(const std::string& path, const Mat& a) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot open " + path + " for writing");
    write_matrix_csv(out, a);
    if (!out)
        throw std::runtime_error("write failed on " + path);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

inline double parse_double(const std::string& s, const std::string& path, std::size_t lineno) {
    double v;
    try {
        std::size_t pos = 0;
        v = std::stod(s, &pos);
        while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
        if (pos != s.size())
            throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": cannot parse '" + s + "' as a number");
    }
    if (!std::isfinite(v))
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": non-finite entry '" + s + "'");
    return v;
}

}  // namespace detail

inline Mat read_matrix_csv(std::istream& in, const std::string& path = "<stream>") {
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(in, line))
        throw std::runtime_error(path + ":1: empty file, expected 'rows,cols' header");
    auto header = detail::split_csv_line(line);
    if (header.size() != 2)
        throw std::runtime_error(path + ":1: malformed header, expected 'rows,cols'");
    std::size_t rows, cols;
    try {
        rows = std::stoul(header[0]);
        cols = std::stoul(header[1]);
    } catch (const std::exception&) {
        throw std::runtime_error(path + ":1: malformed header, expected 'rows,cols'");
    }
    if (rows == 0 || cols == 0)
        throw std::runtime_error(path + ":1: dimensions must be positive");
    std::vector<double> entries;
    entries.reserve(rows * cols);
    for (std::size_t i = 0; i < rows; ++i) {
        ++lineno;
        if (!std::getline(in, line))
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": unexpected end of file, expected row " +
                                     std::to_string(i + 1) + " of " + std::to_string(rows));
        auto fields = detail::split_csv_line(line);
        if (fields.size() != cols)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected " +
                                     std::to_string(cols) + " fields, got " +
                                     std::to_string(fields.size()));
        for (const auto& f : fields)
            entries.push_back(detail::parse_double(f, path, lineno));
    }
    return Mat(rows, cols, std::move(entries));
}

inline Mat read_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path);
    return read_matrix_csv(in, path);
}

}  // namespace kpca_attn
