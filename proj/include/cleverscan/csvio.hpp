#pragma once

// Deterministic CSV emission and minimal parsing. All floating-point fields
// go through one fixed "%.9g" formatting so reruns produce byte-identical
// files.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cleverscan::csv {

inline std::string fmt(double value) {
    char buffer[40];
    std::snprintf(buffer, sizeof buffer, "%.9g", value);
    return buffer;
}

inline std::string fmt(int value) { return std::to_string(value); }
inline std::string fmt(std::size_t value) { return std::to_string(value); }

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("csv::Writer: cannot open " + path);
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

private:
    std::ofstream out_;
};

inline std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

inline std::vector<std::vector<std::string>> read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("csv::read_file: cannot open " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        rows.push_back(split_row(line));
    }
    return rows;
}

} // namespace cleverscan::csv
