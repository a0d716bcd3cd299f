// Copyright 2026 the saasr authors
// Licensed under the Apache License, Version 2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace saasr {

using Real = double;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Error categories map to CLI exit codes (config=2, checkpoint=3, data=4).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// splitmix64, used to derive independent substreams from (seed, index).
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t substream_seed(uint64_t seed, uint64_t index) {
    return mix64(seed ^ mix64(index + 1));
}

// Deterministic RNG. Draws are produced from raw mt19937_64 bits so that
// streams are identical across platforms and standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t bits() { return engine_(); }

    // uniform in [0,1)
    Real uniform() { return static_cast<Real>(engine_() >> 11) * 0x1.0p-53; }

    Real uniform(Real lo, Real hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [lo, hi] inclusive
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(static_cast<uint64_t>(hi - lo + 1) * uniform());
    }

    // Box-Muller; one value per call, cache the second.
    Real normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        Real u1 = uniform();
        Real u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const Real r = std::sqrt(-2.0 * std::log(u1));
        const Real theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    Mat normal_matrix(int rows, int cols, Real std_dev = 1.0) {
        Mat m(rows, cols);
        for (int j = 0; j < cols; ++j)
            for (int i = 0; i < rows; ++i) m(i, j) = normal() * std_dev;
        return m;
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    Real spare_ = 0.0;
};

// FNV-1a over bytes; stable content hash for manifests and configs.
inline uint64_t fnv1a(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a(const std::string& s, uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a(s.data(), s.size(), h);
}

std::string hex64(uint64_t v);

}  // namespace saasr
