#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace nysgrad::cli {

/// In-memory table with a mandatory header row.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows{};

    /// Index of `name` in the header; throws IoError when absent.
    std::size_t column(const std::string& name) const;
    void add_row(std::vector<std::string> row);
};

/// 17 significant digits, so a value survives a write/read round trip.
std::string format_double(double v);
double parse_double(const std::string& field);

/// RFC 4180 quoting: fields with commas, quotes or line breaks are quoted.
std::string escape_field(const std::string& field);

void write_csv(std::ostream& out, const CsvTable& table);
void write_csv(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv(std::istream& in);
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace nysgrad::cli
