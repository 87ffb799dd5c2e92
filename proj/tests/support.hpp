#pragma once

// Shared helpers for the unit tests: seeded random inputs and a central
// finite-difference checker.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "comfed/matrix.hpp"

namespace testutil {

inline comfed::Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> dist(0.0, scale);
    comfed::Matrix m(rows, cols);
    for (double& v : m.values()) v = dist(rng);
    return m;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> dist(0.0, scale);
    std::vector<double> v(n);
    for (double& x : v) x = dist(rng);
    return v;
}

inline std::size_t uniform_index(std::size_t lo, std::size_t hi, std::mt19937_64& rng) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Relative error with an absolute floor so near-zero entries do not blow up.
inline double relative_error(double analytic, double numeric, double floor = 1e-7) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Perturbs every entry of `values` in place and returns the norm-wise relative
// error ||analytic - numeric|| / max(||analytic||, ||numeric||) against central
// differences of `loss`.
inline double max_fd_error(std::span<double> values, std::span<const double> analytic,
                           const std::function<double()>& loss, double eps = 1e-5) {
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + eps;
        const double up = loss();
        values[i] = saved - eps;
        const double down = loss();
        values[i] = saved;
        const double numeric = (up - down) / (2 * eps);
        diff += (analytic[i] - numeric) * (analytic[i] - numeric);
        na += analytic[i] * analytic[i];
        nn += numeric * numeric;
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
}

// Keeps pre-activations away from the ReLU kink so finite differences do not
// straddle it.
inline bool near_kink(const comfed::Matrix& pre, double margin) {
    return std::any_of(pre.values().begin(), pre.values().end(), [&](double v) { return std::abs(v) < margin; });
}

}  // namespace testutil
