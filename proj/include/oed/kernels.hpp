// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Data-parallel inner loops behind the tensor core. Every kernel has a
// scalar reference implementation and, on x86-64, an AVX2+FMA variant
// chosen once at startup from CPUID. Setting OED_KERNELS=scalar in the
// environment pins the reference path.

#include <cstddef>
#include <string_view>

namespace oed::kernels {

enum class Isa { Scalar, Avx2 };

struct KernelTable {
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y += alpha * x
    void (*axpy)(double* y, double alpha, const double* x, std::size_t n);
    // sum_i (a_i - b_i)^2
    double (*sq_diff_sum)(const double* a, const double* b, std::size_t n);
    // C[m x n] += A[m x k] * B[k x n], row-major with leading dims k and n.
    void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                    const double* b, double* c);
    // C[m x n] += A[m x k] * B[n x k]^T
    void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                    const double* b, double* c);
    // C[m x n] += A[k x m]^T * B[k x n]
    void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                    const double* b, double* c);
};

const KernelTable& scalar_table();
/// nullptr when the build or the CPU lacks AVX2+FMA.
const KernelTable* avx2_table();

/// Table in use for this process.
const KernelTable& active();
Isa active_isa();
std::string_view isa_name(Isa isa);

/// Forces a table; used by equivalence tests and benchmarks. Returns the
/// previous selection. Selecting Avx2 when unavailable is a no-op.
Isa select(Isa isa);

inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
inline void axpy(double* y, double alpha, const double* x, std::size_t n) {
    active().axpy(y, alpha, x, n);
}
inline double sq_diff_sum(const double* a, const double* b, std::size_t n) {
    return active().sq_diff_sum(a, b, n);
}
inline void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                    double* c) {
    active().gemm_nn(m, n, k, a, b, c);
}
inline void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                    double* c) {
    active().gemm_nt(m, n, k, a, b, c);
}
inline void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                    double* c) {
    active().gemm_tn(m, n, k, a, b, c);
}

}  // namespace oed::kernels
