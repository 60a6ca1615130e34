#include "bsdelab/csv.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bsdelab {

CsvWriter::CsvWriter(std::vector<std::string> header) : n_cols_(header.size()) {
    if (header.empty())
        throw std::invalid_argument("CsvWriter: empty header");
    for (size_t i = 0; i < header.size(); ++i) {
        if (i) body_ += ',';
        body_ += header[i];
    }
    body_ += '\n';
}

std::string CsvWriter::format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void CsvWriter::add(double v) { add(format_double(v)); }
void CsvWriter::add(int v) { add(std::to_string(v)); }
void CsvWriter::add(long long v) { add(std::to_string(v)); }

void CsvWriter::add(const std::string& v) {
    if (col_ >= n_cols_)
        throw std::logic_error("CsvWriter: row has too many cells");
    if (col_) body_ += ',';
    body_ += v;
    ++col_;
}

void CsvWriter::end_row() {
    if (col_ != n_cols_)
        throw std::logic_error("CsvWriter: row has too few cells");
    body_ += '\n';
    col_ = 0;
}

size_t CsvWriter::write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("CsvWriter: cannot open " + path);
    out << body_;
    if (!out)
        throw std::runtime_error("CsvWriter: write failed for " + path);
    return body_.size();
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("read_csv: cannot open " + path);
    CsvTable table;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (first) {
            table.header = cells;
            first = false;
            continue;
        }
        std::vector<double> nums(cells.size());
        for (size_t i = 0; i < cells.size(); ++i) {
            try {
                size_t pos = 0;
                nums[i] = std::stod(cells[i], &pos);
                if (pos != cells[i].size()) nums[i] = std::nan("");
            } catch (...) {
                nums[i] = std::nan("");
            }
        }
        table.numbers.push_back(std::move(nums));
        table.cells.push_back(std::move(cells));
    }
    return table;
}

} // namespace bsdelab
