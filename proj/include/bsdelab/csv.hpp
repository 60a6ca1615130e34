#pragma once

#include <string>
#include <vector>

namespace bsdelab {

/// Minimal CSV writer. Floats are serialized with 17 significant digits so a
/// parse of the file reproduces the doubles bit for bit.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);

    void add(double v);
    void add(int v);
    void add(long long v);
    void add(const std::string& v);
    void end_row();

    /// Writes the accumulated table; returns the byte count.
    size_t write(const std::string& path) const;
    const std::string& buffer() const { return body_; }

    static std::string format_double(double v);

private:
    size_t n_cols_;
    size_t col_ = 0;
    std::string body_;
};

/// Parses a CSV produced by CsvWriter back into numeric cells; non-numeric
/// cells come back as NaN in `numbers` and verbatim in `cells`.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> numbers;
    std::vector<std::vector<std::string>> cells;
};

CsvTable read_csv(const std::string& path);

} // namespace bsdelab
