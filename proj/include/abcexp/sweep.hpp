#pragma once

#include <string>
#include <vector>

#include "abcexp/config.hpp"

// Parameter sweeps with machine-readable output. Sweep points go to a worker
// pool; results are assembled in deterministic order (lexicographic in the
// sweep axes) regardless of completion order. CSVs use '.' decimals, no
// thousands separators, 12 significant digits. One JSON-lines diagnostics
// record is appended per solved point.

namespace abcexp {

struct RunOutput {
    int exit_code = 0;
    std::vector<std::string> files;  // paths written
};

RunOutput run(const RunConfig& cfg);

// Formats a double the way every CSV writer here does (12 significant digits).
std::string csv_number(double v);

// Minimal CSV reader used by the acceptance checks and round-trip tests.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    int col(const std::string& name) const;  // -1 if absent
    double num(size_t row, int col) const;
};
CsvTable read_csv(const std::string& path);

}  // namespace abcexp
