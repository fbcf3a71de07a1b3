#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cascade/error.hpp"

namespace cascade {

/// Dense 1-D real array, 64-bit precision. Zero-length vectors are
/// unconstructible.
class Vector {
 public:
  explicit Vector(int n);
  Vector(std::initializer_list<double> values);
  static Vector from(std::span<const double> values);

  int size() const { return static_cast<int>(data_.size()); }
  double& operator[](int i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](int i) const { return data_[static_cast<std::size_t>(i)]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }

  void fill(double v);
  bool all_finite() const;

  bool operator==(const Vector&) const = default;

 private:
  std::vector<double> data_;
};

/// Dense row-major 2-D real array, 64-bit precision. rows, cols >= 1.
class Matrix {
 public:
  Matrix(int rows, int cols);  // zero-initialized
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(int r, int c) {
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }
  double operator()(int r, int c) const {
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }

  double* row(int r) { return data_.data() + static_cast<std::size_t>(r) * cols_; }
  const double* row(int r) const {
    return data_.data() + static_cast<std::size_t>(r) * cols_;
  }
  Vector row_vector(int r) const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }

  void fill(double v);
  bool all_finite() const;
  static Matrix identity(int n);

  bool operator==(const Matrix&) const = default;

 private:
  int rows_;
  int cols_;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Kernels. The unqualified entry points dispatch between the serial reference
// implementation and the OpenMP one based on problem size; both paths produce
// bit-identical results because every output element is reduced by the same
// noinline inner kernel in the same order.
// ---------------------------------------------------------------------------

namespace serial {
Matrix matmul(const Matrix& a, const Matrix& b);
void matvec(const Matrix& w, const Vector& x, Vector& out);         // out = Wx
void matvec_acc(const Matrix& w, const Vector& x, Vector& out);     // out += Wx
void matvec_t_acc(const Matrix& w, const Vector& y, Vector& out);   // out += W^T y
void add_outer(const Vector& u, const Vector& v, Matrix& a);        // A += u v^T
}  // namespace serial

namespace par {
Matrix matmul(const Matrix& a, const Matrix& b);
void matvec(const Matrix& w, const Vector& x, Vector& out);
void matvec_acc(const Matrix& w, const Vector& x, Vector& out);
void matvec_t_acc(const Matrix& w, const Vector& y, Vector& out);
void add_outer(const Vector& u, const Vector& v, Matrix& a);
}  // namespace par

Matrix matmul(const Matrix& a, const Matrix& b);
void matvec(const Matrix& w, const Vector& x, Vector& out);
void matvec_acc(const Matrix& w, const Vector& x, Vector& out);
void matvec_t_acc(const Matrix& w, const Vector& y, Vector& out);
void add_outer(const Vector& u, const Vector& v, Matrix& a);

/// Gradients of C = A B given dC.
std::pair<Matrix, Matrix> matmul_backward(const Matrix& a, const Matrix& b,
                                          const Matrix& grad_c);

double dot(const Vector& a, const Vector& b);

/// Max-subtracted softmax. Entries positive, sum 1 within 1e-12.
Vector softmax(const Vector& v);

/// Gradient of x given y = softmax(x) and dy: dx = y .* (dy - <dy, y>).
Vector softmax_backward(const Vector& y, const Vector& grad_y);

/// a's entries first, then b's.
Vector concat(const Vector& a, const Vector& b);

// ---------------------------------------------------------------------------
// Finite-difference gradient checking.
// ---------------------------------------------------------------------------

struct GradCheckReport {
  double max_relative_error = 0.0;
  int worst_parameter_index = -1;
  bool passed = false;
};

/// Central-difference check of analytic_grad against f around point.
/// Relative error per coordinate uses denominator max(|analytic|, |numeric|,
/// 1e-8). Throws NumericError if f evaluates non-finite.
GradCheckReport finite_difference_gradcheck(
    const std::function<double(const Vector&)>& f, const Vector& analytic_grad,
    const Vector& point, double epsilon, double tolerance);

namespace detail {
std::string shape_string(const Matrix& m);
}

}  // namespace cascade
