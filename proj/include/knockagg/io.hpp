#pragma once

// Numeric matrix files (CSV or whitespace separated) and atomic file output.

#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "knockagg/error.hpp"
#include "knockagg/format.hpp"
#include "knockagg/numerics.hpp"

namespace knockagg {

/// Parses rows of numbers separated by commas and/or whitespace. Blank lines
/// and lines starting with '#' are skipped. Errors name the 1-based row and column.
inline Matrix parse_matrix(const std::string& text, const std::string& source = "input") {
    std::vector<std::vector<double>> rows;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        std::vector<double> row;
        std::size_t pos = 0;
        while (pos < line.size()) {
            while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
            std::size_t end = pos;
            while (end < line.size() && line[end] != ',' && line[end] != ' ' && line[end] != '\t') ++end;
            const std::string token = line.substr(pos, end - pos);
            const std::size_t column = row.size() + 1;
            auto where = [&] { return source + ": row " + std::to_string(rows.size() + 1) + " (line " + std::to_string(line_no) + "), column " + std::to_string(column); };
            if (token.empty()) {
                // separator directly after another comma, or trailing comma
                if (end < line.size() && line[end] == ',') fail(ErrorCode::invalid_input, where() + ": empty field");
            } else {
                char* stop = nullptr;
                errno = 0;
                const double v = std::strtod(token.c_str(), &stop);
                if (stop != token.c_str() + token.size() || errno == ERANGE || !std::isfinite(v)) {
                    fail(ErrorCode::invalid_input, where() + ": not a finite number '" + token + "'");
                }
                row.push_back(v);
            }
            pos = end;
            while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
            if (pos < line.size() && line[pos] == ',') ++pos;
        }
        if (row.empty()) continue;
        if (!rows.empty() && row.size() != rows.front().size()) {
            fail(ErrorCode::invalid_input, source + ": row " + std::to_string(rows.size() + 1) + " has " + std::to_string(row.size()) +
                                               " columns, expected " + std::to_string(rows.front().size()));
        }
        rows.push_back(std::move(row));
    }
    require(!rows.empty(), ErrorCode::invalid_input, source + ": no numeric rows");
    Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return out;
}

/// Thrown for filesystem failures (runtime, not validation).
class IoError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return std::string(std::istreambuf_iterator<char>(in), {});
}

inline std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    return std::vector<std::uint8_t>(text.begin(), text.end());
}

inline Matrix read_matrix_file(const std::filesystem::path& path) { return parse_matrix(read_text_file(path), path.string()); }

/// A single-column or single-row matrix file as a vector.
inline Vector read_vector_file(const std::filesystem::path& path) {
    const Matrix m = read_matrix_file(path);
    require(m.rows() == 1 || m.cols() == 1, ErrorCode::invalid_input, path.string() + ": expected a single row or column");
    return Eigen::Map<const Vector>(m.data(), m.size());
}

inline std::string format_matrix(const Matrix& m) {
    std::string out;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out += ',';
            out += format_real(m(i, j));
        }
        out += '\n';
    }
    return out;
}

/// Writes via a temporary file in the same directory and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    const auto dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    std::filesystem::path tmp = dir / ("." + path.filename().string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw IoError("write to '" + tmp.string() + "' failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

inline void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace knockagg
