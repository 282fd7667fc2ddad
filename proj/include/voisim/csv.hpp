#pragma once

// CSV reading/writing used by every exported artifact. Numbers are written
// with round-trip precision ("%.17g") so that re-importing a file reproduces
// the original doubles bit-for-bit.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "voisim/common.hpp"

namespace voisim {

inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

class CsvWriter {
  public:
    explicit CsvWriter(const std::string& path) : file_(path), out_(&file_) {
        require(file_.good(), "CsvWriter: cannot open " + path);
    }

    explicit CsvWriter(std::ostream& os) : out_(&os) {}

    void header(const std::vector<std::string>& cols) { raw_row(cols); }

    void row(const Vec& values) {
        std::vector<std::string> cells;
        cells.reserve(values.size());
        for (double v : values) cells.push_back(format_double(v));
        raw_row(cells);
    }

    void raw_row(const std::vector<std::string>& cells) {
        for (size_t i = 0; i < cells.size(); ++i) {
            if (i) *out_ << ',';
            *out_ << cells[i];
        }
        *out_ << '\n';
    }

  private:
    std::ofstream file_;
    std::ostream* out_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Column index by name, -1 when absent.
    int column(const std::string& name) const {
        for (size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        // trim surrounding whitespace
        size_t b = cell.find_first_not_of(" \t\r");
        size_t e = cell.find_last_not_of(" \t\r");
        cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

inline CsvTable read_csv_stream(std::istream& in, const std::string& what) {
    CsvTable t;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto cells = split_csv_line(line);
        if (first) {
            t.header = cells;
            first = false;
        } else {
            t.rows.push_back(cells);
        }
    }
    require(!first, "read_csv: empty input " + what);
    return t;
}

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "read_csv: cannot open " + path);
    return read_csv_stream(in, path);
}

inline CsvTable read_csv_string(const std::string& text) {
    std::istringstream in(text);
    return read_csv_stream(in, "<string>");
}

inline double parse_double(const std::string& s, const std::string& ctx) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        require(pos == s.size(), ctx + ": trailing characters in number '" + s + "'");
        return v;
    } catch (const contract_violation&) {
        throw;
    } catch (const std::exception&) {
        throw contract_violation(ctx + ": cannot parse number '" + s + "'");
    }
}

}  // namespace voisim
