// Deterministic columnar output: fixed header, one line per row, numbers
// rendered with a stable shortest-round-trip format.
#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace subloc {

inline std::string csv_num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0.0 ? "inf" : "-inf";
    if (v == 0.0) return "0";  // normalizes -0
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

class CsvTable {
   public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {
        if (header_.empty()) throw std::invalid_argument("CsvTable: empty header");
    }

    void add_row(const std::vector<std::string>& cells) {
        if (cells.size() != header_.size())
            throw std::invalid_argument("CsvTable: row width does not match header");
        rows_.push_back(cells);
    }

    void add_numeric_row(const std::vector<double>& cells) {
        std::vector<std::string> out;
        out.reserve(cells.size());
        for (double v : cells) out.push_back(csv_num(v));
        add_row(out);
    }

    std::size_t row_count() const { return rows_.size(); }

    std::string str() const {
        std::string out = join(header_);
        for (const auto& row : rows_) out += join(row);
        return out;
    }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("CsvTable: cannot write " + path);
        f << str();
    }

   private:
    static std::string join(const std::vector<std::string>& cells) {
        std::string line;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) line += ',';
            line += cells[i];
        }
        line += '\n';
        return line;
    }

    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

}  // namespace subloc
