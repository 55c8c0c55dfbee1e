#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gti3d/trainer.hpp"

// metrics.csv: one header and homogeneous rows of two kinds.
//   iter   iteration, L_G, L_C, L, KL_1..KL_J   (split/accuracy columns empty)
//   final  split, correct, total, accuracy, seed (loss columns empty)
// Floating-point values are written with 17 significant digits so that the
// file round-trips exactly.
namespace gti3d::harness {

struct AccuracyRow {
    std::string split;
    std::size_t correct = 0;
    std::size_t total = 0;
    double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

std::string metrics_csv(const std::vector<train::CurveRow>& curve, int taps, const std::vector<AccuracyRow>& finals,
                        std::uint64_t seed);

std::string format_double(double v);

// Minimal reader for the CSV files written here: header + comma-separated
// rows, no quoting. CorruptData on ragged rows.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const;  // -1 when absent
    std::vector<std::map<std::string, std::string>> records() const;
};

CsvTable read_csv(const std::filesystem::path& path);

} // namespace gti3d::harness
