#include "gpool/kernels.hpp"

#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gpool::kernels {
namespace {

void check_inner(std::size_t lhs, std::size_t rhs, const char* op) {
  if (lhs != rhs) {
    throw DimensionError(std::string(op) + ": inner dimensions " + std::to_string(lhs) +
                         " and " + std::to_string(rhs) + " differ");
  }
}

// out row i = a row i · b, accumulated over k in ascending order.
inline void matmul_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
  const std::size_t inner = a.cols();
  const std::size_t n = b.cols();
  double* o = out.row(i).data();
  for (std::size_t k = 0; k < inner; ++k) {
    const double aik = a(i, k);
    const double* bk = b.row(k).data();
    for (std::size_t j = 0; j < n; ++j) o[j] += aik * bk[j];
  }
}

// out row i = (aᵀ) row i · b, i.e. column i of a.
inline void matmul_tn_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
  const std::size_t inner = a.rows();
  const std::size_t n = b.cols();
  double* o = out.row(i).data();
  for (std::size_t k = 0; k < inner; ++k) {
    const double aki = a(k, i);
    const double* bk = b.row(k).data();
    for (std::size_t j = 0; j < n; ++j) o[j] += aki * bk[j];
  }
}

inline void matmul_nt_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
  const std::size_t inner = a.cols();
  const double* ai = a.row(i).data();
  for (std::size_t j = 0; j < b.rows(); ++j) {
    const double* bj = b.row(j).data();
    double acc = 0.0;
    for (std::size_t k = 0; k < inner; ++k) acc += ai[k] * bj[k];
    out(i, j) = acc;
  }
}

}  // namespace

Matrix matmul_serial(const Matrix& a, const Matrix& b) {
  check_inner(a.cols(), b.rows(), "matmul");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) matmul_row(a, b, out, i);
  return out;
}

Matrix matmul_omp(const Matrix& a, const Matrix& b) {
  check_inner(a.cols(), b.rows(), "matmul");
  Matrix out(a.rows(), b.cols());
  const auto rows = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) matmul_row(a, b, out, static_cast<std::size_t>(i));
  return out;
}

Matrix matmul_tn_serial(const Matrix& a, const Matrix& b) {
  check_inner(a.rows(), b.rows(), "matmul_tn");
  Matrix out(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i) matmul_tn_row(a, b, out, i);
  return out;
}

Matrix matmul_tn_omp(const Matrix& a, const Matrix& b) {
  check_inner(a.rows(), b.rows(), "matmul_tn");
  Matrix out(a.cols(), b.cols());
  const auto rows = static_cast<std::ptrdiff_t>(a.cols());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) matmul_tn_row(a, b, out, static_cast<std::size_t>(i));
  return out;
}

Matrix matmul_nt_serial(const Matrix& a, const Matrix& b) {
  check_inner(a.cols(), b.cols(), "matmul_nt");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) matmul_nt_row(a, b, out, i);
  return out;
}

Matrix matmul_nt_omp(const Matrix& a, const Matrix& b) {
  check_inner(a.cols(), b.cols(), "matmul_nt");
  Matrix out(a.rows(), b.rows());
  const auto rows = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) matmul_nt_row(a, b, out, static_cast<std::size_t>(i));
  return out;
}

int max_threads() noexcept {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace gpool::kernels
