#pragma once

#include "downgen/grid.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace downgen {

/// Raw NPY v1.0 array: little-endian float64, C-order.
struct NpyArray {
    std::vector<std::size_t> shape;
    std::vector<double> data;
};

void write_npy(const std::filesystem::path& path, const std::vector<std::size_t>& shape,
               const std::vector<double>& data);
NpyArray read_npy(const std::filesystem::path& path);

/// Sidecar manifest path for an array file: same stem with a .json extension.
std::filesystem::path sidecar_path(const std::filesystem::path& array_path);

/// Write the payload as NPY [nt, nx, ny, nv] and coordinates to the sidecar.
/// Non-finite data or inconsistent metadata is rejected with ValidationError.
void write_array(const GridField& field, const std::filesystem::path& path);

/// Read an array written by write_array. Throws FormatError on a malformed
/// payload or manifest and ShapeError when the two disagree.
GridField read_array(const std::filesystem::path& path);

/// Per-pixel statistics as <stem>_mean.npy and <stem>_std.npy, each [nx, ny, nv].
void write_stats(const std::filesystem::path& dir, const std::string& stem, const EnsembleStats& stats);
EnsembleStats read_stats(const std::filesystem::path& dir, const std::string& stem);

/// RFC-4180 field quoting: fields containing a comma, quote, CR or LF are
/// wrapped in quotes with embedded quotes doubled.
std::string csv_quote(const std::string& field);

/// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

/// Small CSV table with a header row.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header);

    void add_row(std::vector<std::string> row);
    const std::vector<std::string>& header() const { return header_; }
    const std::vector<std::vector<std::string>>& rows() const { return rows_; }

    std::string to_string() const;
    void write(const std::filesystem::path& path) const;

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

/// Parse RFC-4180 text (used by tests and the evaluate command).
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

}  // namespace downgen
