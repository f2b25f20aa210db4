#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "latentfuse/error.hpp"

namespace latentfuse {

// Full round-trip precision so equivalent runs diff clean at the file level.
inline std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return std::string(buf);
}

inline std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header) : out_(path) {
        if (!out_) throw Error("CsvWriter: cannot open " + path);
        row(header);
    }

    void row(const std::vector<std::string>& cells) {
        for (size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << csv_quote(cells[i]);
        }
        out_ << '\n';
    }

private:
    std::ofstream out_;
};

}  // namespace latentfuse
