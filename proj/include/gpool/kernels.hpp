#pragma once

// Dense product kernels. Each kernel has a serial reference and an OpenMP
// version; both evaluate every output entry with the same inner-loop order,
// so their results are bit-identical regardless of thread count.

#include <cstddef>

#include "gpool/numerics.hpp"

namespace gpool::kernels {

Matrix matmul_serial(const Matrix& a, const Matrix& b);
Matrix matmul_omp(const Matrix& a, const Matrix& b);

Matrix matmul_tn_serial(const Matrix& a, const Matrix& b);
Matrix matmul_tn_omp(const Matrix& a, const Matrix& b);

Matrix matmul_nt_serial(const Matrix& a, const Matrix& b);
Matrix matmul_nt_omp(const Matrix& a, const Matrix& b);

// Multiply-add count above which matmul() and friends use the OpenMP path.
inline constexpr std::size_t kParallelThreshold = 1u << 15;

// Number of OpenMP threads available (1 when built without OpenMP).
int max_threads() noexcept;

}  // namespace gpool::kernels
