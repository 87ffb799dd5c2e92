#pragma once

// Data-parallel inner loops used by numcore, latent and consensus.
//
// Every kernel has a scalar reference implementation. SIMD variants (AVX2+FMA
// on x86-64, NEON on aarch64) are compiled separately and picked once at
// startup from the CPU's feature flags. The choice can be pinned with the
// COMFED_KERNELS environment variable ("scalar", "avx2", "neon") or with
// kernels::select(). SIMD reductions sum in a different order than the scalar
// loop, so results agree to rounding, not bitwise; within one backend every
// kernel is deterministic.

#include <cstddef>
#include <span>
#include <string_view>

namespace comfed::kernels {

enum class Backend { scalar, avx2, neon };

struct KernelTable {
    Backend backend;
    // sum_i a[i] * b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // sum_i (a[i] - b[i])^2
    double (*squared_distance)(const double* a, const double* b, std::size_t n);
    // out[i] = max(in[i], 0)
    void (*relu)(const double* in, double* out, std::size_t n);
    // grad_in[i] = pre[i] > 0 ? grad_out[i] : 0   (subgradient 0 at the kink)
    void (*relu_backward)(const double* pre, const double* grad_out, double* grad_in,
                          std::size_t n);
};

const KernelTable& scalar_table() noexcept;

// nullptr when the variant was not compiled in or the CPU lacks the feature.
const KernelTable* avx2_table() noexcept;
const KernelTable* neon_table() noexcept;

const KernelTable& active() noexcept;

// Throws ConfigError if the backend is unavailable on this machine.
void select(Backend backend);

std::string_view backend_name(Backend backend) noexcept;

inline double dot(std::span<const double> a, std::span<const double> b) {
    return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    active().axpy(alpha, x.data(), y.data(), x.size());
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    return active().squared_distance(a.data(), b.data(), a.size());
}

}  // namespace comfed::kernels
