#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "gpool/errors.hpp"

namespace gpool {

/// Dense row-major matrix of doubles.
///
/// The validating constructors reject NaN/Inf. Element access is unchecked
/// so kernels can write through it freely.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);
  Matrix(std::size_t rows, std::size_t cols, double fill);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::span<const double> values);
  static Matrix column_vector(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const noexcept { return {data_.data() + i * cols_, cols_}; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool all_finite() const noexcept;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s) noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

/// SplitMix64 (Steele, Lea, Flood 2014). The state advances by the golden
/// gamma 0x9E3779B97F4A7C15 and each output is the 64-bit finalizer of the
/// new state, so the stream is reproducible bit-for-bit in any language.
class DeterministicRng {
 public:
  explicit DeterministicRng(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next_u64() noexcept;
  // Top 53 bits scaled into [0, 1).
  double uniform01() noexcept;
  double uniform(double lo, double hi) noexcept;
  // floor(uniform01() * n); n must be > 0.
  std::size_t below(std::size_t n) noexcept;
  // Box-Muller using two uniform01 draws (first draw mapped to (0, 1]).
  double normal() noexcept;

  std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

// Derives an independent stream seed from a base seed and a tag.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) noexcept;

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double bound, DeterministicRng& rng);

// Dense products; dispatch to the OpenMP kernels above a size threshold.
Matrix matmul(const Matrix& a, const Matrix& b);     // A B
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // Aᵀ B
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // A Bᵀ
Matrix transpose(const Matrix& a);
Matrix hadamard(const Matrix& a, const Matrix& b);
// Adds a 1×cols bias row to every row.
Matrix add_row(Matrix a, const Matrix& bias);
Matrix column_sums(const Matrix& a);  // 1×cols
Matrix column_means(const Matrix& a); // 1×cols
double frobenius_norm(const Matrix& a);
double frobenius_dot(const Matrix& a, const Matrix& b);
double trace(const Matrix& a);
double sum(const Matrix& a);

void require_same_shape(const Matrix& a, const Matrix& b, const char* what);

/// Row-wise softmax with per-row max subtraction.
Matrix row_softmax(const Matrix& m);
/// Gradient of a loss w.r.t. the softmax logits, given the softmax output
/// and the gradient w.r.t. that output.
Matrix row_softmax_backward(const Matrix& softmax_out, const Matrix& grad_out);

enum class Activation { tanh, relu, sigmoid };

Matrix activation(const Matrix& m, Activation kind);
// grad w.r.t. the pre-activation, given the activation output.
Matrix activation_backward(const Matrix& out, const Matrix& grad_out, Activation kind);

using ScalarFunction = std::function<double(const Matrix&)>;

/// Central differences: entry (i,j) = (f(x + h e_ij) - f(x - h e_ij)) / 2h.
/// Throws NumericalError when any evaluation is non-finite.
Matrix central_difference_gradient(const ScalarFunction& f, const Matrix& x, double h = 1e-5);

/// ‖a − b‖_F / max(‖a‖_F, ‖b‖_F, 1e-12).
double relative_error(const Matrix& a, const Matrix& b);

}  // namespace gpool
