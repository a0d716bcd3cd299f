// Copyright 2026 the saasr authors
// Licensed under the Apache License, Version 2.0
//
// On-disk formats: binary float matrices (two little-endian int32 dims
// followed by row-major float32 data) and small text helpers.
#pragma once

#include "saasr/common.hpp"

#include <string>
#include <vector>

namespace saasr::io {

void write_matrix(const std::string& path, const Mat& m);
Mat read_matrix(const std::string& path);

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);
std::vector<std::string> read_lines(const std::string& path);

uint64_t file_hash(const std::string& path);

// Renders a matrix as a binary PPM (P6) heatmap, min..max mapped through a
// dark-to-warm colormap; each cell becomes an upscale x upscale pixel block.
void write_heatmap_ppm(const std::string& path, const Mat& m, int upscale = 8);

}  // namespace saasr::io
