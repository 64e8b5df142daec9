// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <cstring>

#include "oed/kernels.hpp"

namespace oed::kernels {

#if defined(OED_HAVE_AVX2)
const KernelTable* avx2_table_impl();
#endif

namespace {

bool cpu_has_avx2() {
#if defined(OED_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Isa initial_isa() {
    if (const char* env = std::getenv("OED_KERNELS"); env && std::strcmp(env, "scalar") == 0)
        return Isa::Scalar;
    return avx2_table() ? Isa::Avx2 : Isa::Scalar;
}

std::atomic<Isa>& current() {
    static std::atomic<Isa> isa{initial_isa()};
    return isa;
}

}  // namespace

const KernelTable* avx2_table() {
#if defined(OED_HAVE_AVX2)
    static const bool ok = cpu_has_avx2();
    return ok ? avx2_table_impl() : nullptr;
#else
    return nullptr;
#endif
}

const KernelTable& active() {
    return current().load(std::memory_order_relaxed) == Isa::Avx2 ? *avx2_table() : scalar_table();
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

std::string_view isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

Isa select(Isa isa) {
    if (isa == Isa::Avx2 && !avx2_table()) return active_isa();
    return current().exchange(isa);
}

}  // namespace oed::kernels
