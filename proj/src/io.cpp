// Copyright 2026 the saasr authors
// Licensed under the Apache License, Version 2.0

#include "saasr/io.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

namespace saasr::io {

void write_matrix(const std::string& path, const Mat& m) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write matrix file: " + path);
    const int32_t rows = static_cast<int32_t>(m.rows());
    const int32_t cols = static_cast<int32_t>(m.cols());
    f.write(reinterpret_cast<const char*>(&rows), 4);
    f.write(reinterpret_cast<const char*>(&cols), 4);
    std::vector<float> buf(static_cast<size_t>(rows) * cols);
    for (int32_t i = 0; i < rows; ++i)
        for (int32_t j = 0; j < cols; ++j)
            buf[static_cast<size_t>(i) * cols + j] = static_cast<float>(m(i, j));
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f) throw DataError("short write on matrix file: " + path);
}

Mat read_matrix(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open matrix file: " + path);
    int32_t rows = 0, cols = 0;
    f.read(reinterpret_cast<char*>(&rows), 4);
    f.read(reinterpret_cast<char*>(&cols), 4);
    if (!f || rows < 0 || cols < 0) throw DataError("malformed matrix header: " + path);
    std::vector<float> buf(static_cast<size_t>(rows) * cols);
    f.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f) throw DataError("truncated matrix file: " + path);
    Mat m(rows, cols);
    for (int32_t i = 0; i < rows; ++i)
        for (int32_t j = 0; j < cols; ++j)
            m(i, j) = static_cast<Real>(buf[static_cast<size_t>(i) * cols + j]);
    return m;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write file: " + path);
    f << text;
}

std::string read_text(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(f, line)) lines.push_back(line);
    return lines;
}

uint64_t file_hash(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open file for hashing: " + path);
    uint64_t h = 0xcbf29ce484222325ull;
    char buf[4096];
    while (f) {
        f.read(buf, sizeof(buf));
        h = fnv1a(buf, static_cast<size_t>(f.gcount()), h);
    }
    return h;
}

void write_heatmap_ppm(const std::string& path, const Mat& m, int upscale) {
    if (m.size() == 0) throw DataError("cannot render empty matrix");
    if (upscale < 1) upscale = 1;
    const Real lo = m.minCoeff(), hi = m.maxCoeff();
    const Real span = (hi - lo) < 1e-12 ? 1.0 : hi - lo;
    // 5-stop dark-blue -> warm colormap
    static const int stops[5][3] = {
        {13, 8, 64}, {84, 39, 143}, {187, 55, 84}, {249, 140, 10}, {252, 255, 164}};
    auto color = [&](Real v, unsigned char* rgb) {
        Real x = (v - lo) / span * 4.0;
        int i = std::min(3, static_cast<int>(x));
        Real f = x - i;
        for (int c = 0; c < 3; ++c)
            rgb[c] = static_cast<unsigned char>(stops[i][c] + f * (stops[i + 1][c] - stops[i][c]));
    };
    const int W = static_cast<int>(m.cols()) * upscale;
    const int H = static_cast<int>(m.rows()) * upscale;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write image file: " + path);
    f << "P6\n" << W << " " << H << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(W) * 3);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x)
            color(m(y / upscale, x / upscale), &row[static_cast<size_t>(x) * 3]);
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
}

}  // namespace saasr::io
