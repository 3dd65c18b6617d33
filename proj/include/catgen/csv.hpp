#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace catgen {

// Minimal strict CSV support: header row, comma separated, no quoting
// (the pipeline only moves numeric tables). Empty string or "NA" is an
// absent value.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column_index(const std::string& name) const; // -1 when missing
};

CsvTable read_csv(const std::filesystem::path& path);

bool is_absent_cell(const std::string& cell);

// Parses a decimal number; `row` is the 1-based data row used in messages.
double parse_numeric_cell(const std::string& cell, const std::string& column, int row);

// Shortest decimal digits that round-trip a double exactly (up to 17
// significant digits).
std::string format_double(double x);

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

} // namespace catgen
