#include "gpool/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "gpool/kernels.hpp"

namespace gpool {
namespace {

void require_finite(const std::vector<double>& data) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw NumericalError("matrix entry " + std::to_string(i) + " is not finite");
    }
  }
}

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

bool use_parallel(std::size_t m, std::size_t k, std::size_t n) {
  return m > 1 && m * k * n >= kernels::kParallelThreshold;
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  require_finite(data_);
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("matrix data length " + std::to_string(data_.size()) + " != " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
  require_finite(data_);
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
  require_finite(data_);
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::column_vector(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_same_shape(*this, other, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) noexcept {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }
Matrix operator*(double s, Matrix a) { return a *= s; }

std::uint64_t DeterministicRng::next_u64() noexcept {
  state_ += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double DeterministicRng::uniform01() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double DeterministicRng::uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform01(); }

std::size_t DeterministicRng::below(std::size_t n) noexcept {
  auto i = static_cast<std::size_t>(uniform01() * static_cast<double>(n));
  return std::min(i, n - 1);
}

double DeterministicRng::normal() noexcept {
  const double u1 = 1.0 - uniform01();
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) noexcept {
  DeterministicRng rng(seed ^ (tag * 0xD1B54A32D192ED03ULL));
  return rng.next_u64();
}

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double bound, DeterministicRng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(-bound, bound);
  return m;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(what) + ": shape " + shape(a) + " vs " + shape(b));
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  return use_parallel(a.rows(), a.cols(), b.cols()) ? kernels::matmul_omp(a, b)
                                                    : kernels::matmul_serial(a, b);
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  return use_parallel(a.cols(), a.rows(), b.cols()) ? kernels::matmul_tn_omp(a, b)
                                                    : kernels::matmul_tn_serial(a, b);
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  return use_parallel(a.rows(), a.cols(), b.rows()) ? kernels::matmul_nt_omp(a, b)
                                                    : kernels::matmul_nt_serial(a, b);
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.data()[i];
  return out;
}

Matrix add_row(Matrix a, const Matrix& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw DimensionError("add_row: bias " + shape(bias) + " for matrix " + shape(a));
  }
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) a(i, j) += bias(0, j);
  return a;
}

Matrix column_sums(const Matrix& a) {
  Matrix s(1, a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) s(0, j) += a(i, j);
  return s;
}

Matrix column_means(const Matrix& a) {
  if (a.rows() == 0) throw DimensionError("column_means of empty matrix");
  return column_sums(a) * (1.0 / static_cast<double>(a.rows()));
}

double frobenius_norm(const Matrix& a) { return std::sqrt(frobenius_dot(a, a)); }

double frobenius_dot(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "frobenius_dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.data()[i] * b.data()[i];
  return acc;
}

double trace(const Matrix& a) {
  double t = 0.0;
  for (std::size_t i = 0; i < std::min(a.rows(), a.cols()); ++i) t += a(i, i);
  return t;
}

double sum(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return s;
}

Matrix row_softmax(const Matrix& m) {
  if (m.empty()) throw DimensionError("row_softmax of empty matrix");
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto in = m.row(i);
    auto o = out.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      z += o[j];
    }
    for (double& v : o) v /= z;
  }
  return out;
}

Matrix row_softmax_backward(const Matrix& s, const Matrix& g) {
  require_same_shape(s, g, "row_softmax_backward");
  Matrix out(s.rows(), s.cols());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < s.cols(); ++j) dot += s(i, j) * g(i, j);
    for (std::size_t j = 0; j < s.cols(); ++j) out(i, j) = s(i, j) * (g(i, j) - dot);
  }
  return out;
}

Matrix activation(const Matrix& m, Activation kind) {
  Matrix out = m;
  for (double& v : out.data()) {
    switch (kind) {
      case Activation::tanh: v = std::tanh(v); break;
      case Activation::relu: v = v > 0.0 ? v : 0.0; break;
      case Activation::sigmoid: v = 1.0 / (1.0 + std::exp(-v)); break;
    }
  }
  return out;
}

Matrix activation_backward(const Matrix& out, const Matrix& g, Activation kind) {
  require_same_shape(out, g, "activation_backward");
  Matrix d(out.rows(), out.cols());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double y = out.data()[i];
    double dy = 0.0;
    switch (kind) {
      case Activation::tanh: dy = 1.0 - y * y; break;
      case Activation::relu: dy = y > 0.0 ? 1.0 : 0.0; break;
      case Activation::sigmoid: dy = y * (1.0 - y); break;
    }
    d.data()[i] = dy * g.data()[i];
  }
  return d;
}

Matrix central_difference_gradient(const ScalarFunction& f, const Matrix& x, double h) {
  if (!(h > 0.0)) throw InvalidArgument("finite-difference step must be positive");
  Matrix grad(x.rows(), x.cols());
  Matrix probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + h;
    const double fp = f(probe);
    probe.data()[i] = orig - h;
    const double fm = f(probe);
    probe.data()[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericalError("non-finite function value at entry " + std::to_string(i));
    }
    grad.data()[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

double relative_error(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "relative_error");
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    diff += d * d;
  }
  const double denom = std::max({frobenius_norm(a), frobenius_norm(b), 1e-12});
  return std::sqrt(diff) / denom;
}

}  // namespace gpool
