#include <atomic>
#include <cstdlib>
#include <string>

#include "comfed/error.hpp"
#include "comfed/kernels.hpp"

namespace comfed::kernels {

#if defined(COMFED_HAVE_AVX2)
const KernelTable* avx2_table_compiled() noexcept;
#endif
#if defined(COMFED_HAVE_NEON)
const KernelTable* neon_table_compiled() noexcept;
#endif

const KernelTable* avx2_table() noexcept {
#if defined(COMFED_HAVE_AVX2)
    static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return supported ? avx2_table_compiled() : nullptr;
#else
    return nullptr;
#endif
}

const KernelTable* neon_table() noexcept {
#if defined(COMFED_HAVE_NEON)
    // NEON is mandatory on aarch64.
    return neon_table_compiled();
#else
    return nullptr;
#endif
}

namespace {

const KernelTable* table_for(Backend backend) noexcept {
    switch (backend) {
        case Backend::scalar: return &scalar_table();
        case Backend::avx2: return avx2_table();
        case Backend::neon: return neon_table();
    }
    return nullptr;
}

const KernelTable* detect() noexcept {
    if (const char* forced = std::getenv("COMFED_KERNELS")) {
        const std::string name(forced);
        for (Backend b : {Backend::scalar, Backend::avx2, Backend::neon}) {
            if (name == backend_name(b)) {
                if (const KernelTable* table = table_for(b)) return table;
            }
        }
    }
    if (const KernelTable* table = avx2_table()) return table;
    if (const KernelTable* table = neon_table()) return table;
    return &scalar_table();
}

std::atomic<const KernelTable*>& current() noexcept {
    static std::atomic<const KernelTable*> table{detect()};
    return table;
}

}  // namespace

const KernelTable& active() noexcept { return *current().load(std::memory_order_acquire); }

void select(Backend backend) {
    const KernelTable* table = table_for(backend);
    if (table == nullptr) {
        throw ConfigError("kernel backend '" + std::string(backend_name(backend)) +
                          "' is not available on this machine");
    }
    current().store(table, std::memory_order_release);
}

std::string_view backend_name(Backend backend) noexcept {
    switch (backend) {
        case Backend::scalar: return "scalar";
        case Backend::avx2: return "avx2";
        case Backend::neon: return "neon";
    }
    return "unknown";
}

}  // namespace comfed::kernels
