#pragma once

#include <charconv>
#include <fstream>
#include <string>
#include <system_error>
#include <vector>

#include "fiberheat/errors.hpp"

namespace fiberheat {

/// Shortest round-trip decimal form of a double. Deterministic across
/// runs, so CSV data files are byte-stable.
inline std::string csv_num(double x) {
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, r.ptr);
}

inline std::string csv_num(int x) { return std::to_string(x); }
inline std::string csv_num(long x) { return std::to_string(x); }
inline std::string csv_num(size_t x) { return std::to_string(x); }

/// Minimal CSV writer: one header row, then data rows in call order.
class CsvWriter {
   public:
    CsvWriter(const std::string& path, const std::vector<std::string>& columns)
        : out_(path) {
        if (!out_) throw Error("cannot open " + path + " for writing");
        write_row(columns);
    }

    void write_row(const std::vector<std::string>& cells) {
        for (size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

   private:
    std::ofstream out_;
};

}  // namespace fiberheat
