#include "gti3d/metrics.hpp"

#include <charconv>
#include <sstream>

#include "gti3d/blob_io.hpp"
#include "gti3d/errors.hpp"

namespace gti3d::harness {

std::string format_double(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, r.ptr);
}

std::string metrics_csv(const std::vector<train::CurveRow>& curve, int taps, const std::vector<AccuracyRow>& finals,
                        std::uint64_t seed) {
    std::ostringstream os;
    os << "kind,iteration,L_G,L_C,L";
    for (int j = 1; j <= taps; ++j) os << ",KL_" << j;
    os << ",split,correct,total,accuracy,seed\n";
    for (const auto& r : curve) {
        os << "iter," << r.iteration << ',' << format_double(r.guidance) << ',' << format_double(r.classification) << ','
           << format_double(r.total);
        for (int j = 0; j < taps; ++j)
            os << ',' << format_double(j < static_cast<int>(r.per_module.size()) ? r.per_module[j] : 0.0);
        os << ",,,,," << seed << '\n';
    }
    const int last = curve.empty() ? 0 : curve.back().iteration;
    for (const auto& f : finals) {
        os << "final," << last << ",,,";
        for (int j = 0; j < taps; ++j) os << ',';
        os << ',' << f.split << ',' << f.correct << ',' << f.total << ',' << format_double(f.accuracy()) << ',' << seed
           << '\n';
    }
    return os.str();
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

} // namespace

int CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

std::vector<std::map<std::string, std::string>> CsvTable::records() const {
    std::vector<std::map<std::string, std::string>> out;
    for (const auto& row : rows) {
        std::map<std::string, std::string> m;
        for (std::size_t i = 0; i < header.size(); ++i) m[header[i]] = row[i];
        out.push_back(std::move(m));
    }
    return out;
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::istringstream in(io::read_file(path));
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw CorruptData(path.string() + ": empty CSV");
    t.header = split_line(line);
    int n = 1;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        auto row = split_line(line);
        if (row.size() != t.header.size())
            throw CorruptData(path.string() + ":" + std::to_string(n) + ": expected " +
                              std::to_string(t.header.size()) + " columns, got " + std::to_string(row.size()));
        t.rows.push_back(std::move(row));
    }
    return t;
}

} // namespace gti3d::harness
