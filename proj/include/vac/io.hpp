#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include "vac/errors.hpp"
#include "vac/tensor.hpp"

namespace vac {

// Shortest round-trippable decimal for a double; NaN prints as "nan" (the
// sweep's failed-cell marker).
inline std::string fmt_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    for (int prec = 1; prec <= 16; ++prec) {
        char shorter[64];
        std::snprintf(shorter, sizeof shorter, "%.*g", prec, v);
        std::sscanf(shorter, "%lf", &back);
        if (back == v) return shorter;
    }
    return buf;
}

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header) : path_(path) {
        os_.open(path, std::ios::trunc);
        if (!os_) throw IoError("cannot open for write: " + path);
        write_row(header);
    }

    void write_row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) os_ << ',';
            os_ << cells[i];
        }
        os_ << '\n';
        if (!os_) throw IoError("write failed: " + path_);
    }

    void flush() { os_.flush(); }

private:
    std::string path_;
    std::ofstream os_;
};

// Minimal CSV reader for our own outputs: no quoting, comma-separated.
inline std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open: " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            cells.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        rows.push_back(std::move(cells));
    }
    return rows;
}

// Binary PGM (P5, maxval 255). Accepts [H,W] or [1,H,W]; values in [0,1] are
// quantized by rounding.
template <class S>
void write_pgm(const std::string& path, const Tensor<S>& image) {
    std::size_t h = 0, w = 0;
    if (image.rank() == 2) {
        h = image.shape[0];
        w = image.shape[1];
    } else if (image.rank() == 3 && image.shape[0] == 1) {
        h = image.shape[1];
        w = image.shape[2];
    } else {
        throw ConfigError("pgm: expected [H,W] or [1,H,W], got " + shape_str(image.shape));
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    os << "P5\n" << w << " " << h << "\n255\n";
    for (std::size_t i = 0; i < h * w; ++i) {
        const double v = std::clamp(double(image[i]), 0.0, 1.0);
        const unsigned char byte = (unsigned char)std::lround(v * 255.0);
        os.write(reinterpret_cast<const char*>(&byte), 1);
    }
    if (!os) throw IoError("write failed: " + path);
}

} // namespace vac
