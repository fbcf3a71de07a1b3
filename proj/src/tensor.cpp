#include "cascade/tensor.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace cascade {

namespace {

// Work threshold (multiply-adds) below which the dispatchers stay serial.
constexpr std::int64_t kParallelGrainMacs = 1 << 16;

bool parallel_worthwhile(std::int64_t macs) {
  return macs >= kParallelGrainMacs && omp_get_max_threads() > 1 &&
         !omp_in_parallel();
}

// Fixed-order reduction with four independent accumulator streams. noinline
// so the serial and OpenMP callers run the exact same code and stay
// bit-identical.
__attribute__((noinline)) double dot_kernel(const double* __restrict__ w,
                                            const double* __restrict__ x,
                                            int n) {
  double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
  int k = 0;
  for (; k + 4 <= n; k += 4) {
    a0 += w[k] * x[k];
    a1 += w[k + 1] * x[k + 1];
    a2 += w[k + 2] * x[k + 2];
    a3 += w[k + 3] * x[k + 3];
  }
  for (; k < n; ++k) a0 += w[k] * x[k];
  return (a0 + a1) + (a2 + a3);
}

__attribute__((noinline)) void axpy_kernel(double a, const double* __restrict__ x,
                                           double* __restrict__ y, int n) {
  for (int k = 0; k < n; ++k) y[k] += a * x[k];
}

void check_matvec_shapes(const Matrix& w, const Vector& x, const Vector& out,
                         const char* who) {
  if (w.cols() != x.size() || w.rows() != out.size()) {
    throw DimensionError(std::string(who) + ": incompatible shapes " +
                         detail::shape_string(w) + " x " +
                         std::to_string(x.size()) + " -> " +
                         std::to_string(out.size()));
  }
}

}  // namespace

Vector::Vector(int n) {
  if (n <= 0) throw ArgumentError("Vector: length must be positive");
  data_.assign(static_cast<std::size_t>(n), 0.0);
}

Vector::Vector(std::initializer_list<double> values) {
  if (values.size() == 0) throw ArgumentError("Vector: length must be positive");
  data_.assign(values.begin(), values.end());
}

Vector Vector::from(std::span<const double> values) {
  if (values.empty()) throw ArgumentError("Vector: length must be positive");
  Vector v(static_cast<int>(values.size()));
  std::copy(values.begin(), values.end(), v.data_.begin());
  return v;
}

void Vector::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Vector::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double d) { return std::isfinite(d); });
}

Matrix::Matrix(int rows, int cols) : rows_(rows), cols_(cols) {
  if (rows <= 0 || cols <= 0) {
    throw ArgumentError("Matrix: rows and cols must be positive");
  }
  data_.assign(static_cast<std::size_t>(rows) * cols, 0.0);
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const int r = static_cast<int>(rows.size());
  if (r == 0) throw ArgumentError("Matrix: rows must be positive");
  const int c = static_cast<int>(rows.begin()->size());
  Matrix m(r, c);
  int i = 0;
  for (const auto& row : rows) {
    if (static_cast<int>(row.size()) != c) {
      throw ArgumentError("Matrix: ragged initializer");
    }
    std::copy(row.begin(), row.end(), m.row(i));
    ++i;
  }
  return m;
}

Vector Matrix::row_vector(int r) const {
  return Vector::from(std::span<const double>(row(r), static_cast<std::size_t>(cols_)));
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double d) { return std::isfinite(d); });
}

Matrix Matrix::identity(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::string detail::shape_string(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

// --------------------------------------------------------------------------
// matmul
// --------------------------------------------------------------------------

namespace {

void check_matmul_shapes(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: shape mismatch " + detail::shape_string(a) +
                         " x " + detail::shape_string(b));
  }
}

void matmul_row_range(const Matrix& a, const Matrix& b, Matrix& c, int r0,
                      int r1) {
  // i-k-j order: streams b rows, no per-element reduction ambiguity.
  const int n = a.cols();
  const int m = b.cols();
  for (int i = r0; i < r1; ++i) {
    double* ci = c.row(i);
    for (int k = 0; k < n; ++k) {
      axpy_kernel(a(i, k), b.row(k), ci, m);
    }
  }
}

}  // namespace

Matrix serial::matmul(const Matrix& a, const Matrix& b) {
  check_matmul_shapes(a, b);
  Matrix c(a.rows(), b.cols());
  matmul_row_range(a, b, c, 0, a.rows());
  return c;
}

Matrix par::matmul(const Matrix& a, const Matrix& b) {
  check_matmul_shapes(a, b);
  Matrix c(a.rows(), b.cols());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.rows(); ++i) {
    matmul_row_range(a, b, c, i, i + 1);
  }
  return c;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  const std::int64_t macs = static_cast<std::int64_t>(a.rows()) * a.cols() * b.cols();
  return parallel_worthwhile(macs) ? par::matmul(a, b) : serial::matmul(a, b);
}

std::pair<Matrix, Matrix> matmul_backward(const Matrix& a, const Matrix& b,
                                          const Matrix& grad_c) {
  check_matmul_shapes(a, b);
  if (grad_c.rows() != a.rows() || grad_c.cols() != b.cols()) {
    throw DimensionError("matmul_backward: grad shape " +
                         detail::shape_string(grad_c) + " does not match " +
                         std::to_string(a.rows()) + "x" + std::to_string(b.cols()));
  }
  // dA = dC B^T, dB = A^T dC
  Matrix da(a.rows(), a.cols());
  for (int i = 0; i < a.rows(); ++i) {
    for (int k = 0; k < a.cols(); ++k) {
      da(i, k) = dot_kernel(grad_c.row(i), b.row(k), b.cols());
    }
  }
  Matrix db(b.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    for (int k = 0; k < a.cols(); ++k) {
      axpy_kernel(a(i, k), grad_c.row(i), db.row(k), grad_c.cols());
    }
  }
  return {std::move(da), std::move(db)};
}

// --------------------------------------------------------------------------
// matvec family
// --------------------------------------------------------------------------

void serial::matvec(const Matrix& w, const Vector& x, Vector& out) {
  check_matvec_shapes(w, x, out, "matvec");
  for (int r = 0; r < w.rows(); ++r) {
    out[r] = dot_kernel(w.row(r), x.data(), w.cols());
  }
}

void par::matvec(const Matrix& w, const Vector& x, Vector& out) {
  check_matvec_shapes(w, x, out, "matvec");
#pragma omp parallel for schedule(static)
  for (int r = 0; r < w.rows(); ++r) {
    out[r] = dot_kernel(w.row(r), x.data(), w.cols());
  }
}

void matvec(const Matrix& w, const Vector& x, Vector& out) {
  const std::int64_t macs = static_cast<std::int64_t>(w.rows()) * w.cols();
  if (parallel_worthwhile(macs)) {
    par::matvec(w, x, out);
  } else {
    serial::matvec(w, x, out);
  }
}

void serial::matvec_acc(const Matrix& w, const Vector& x, Vector& out) {
  check_matvec_shapes(w, x, out, "matvec_acc");
  for (int r = 0; r < w.rows(); ++r) {
    out[r] += dot_kernel(w.row(r), x.data(), w.cols());
  }
}

void par::matvec_acc(const Matrix& w, const Vector& x, Vector& out) {
  check_matvec_shapes(w, x, out, "matvec_acc");
#pragma omp parallel for schedule(static)
  for (int r = 0; r < w.rows(); ++r) {
    out[r] += dot_kernel(w.row(r), x.data(), w.cols());
  }
}

void matvec_acc(const Matrix& w, const Vector& x, Vector& out) {
  const std::int64_t macs = static_cast<std::int64_t>(w.rows()) * w.cols();
  if (parallel_worthwhile(macs)) {
    par::matvec_acc(w, x, out);
  } else {
    serial::matvec_acc(w, x, out);
  }
}

namespace {

// out[j0:j1) += sum_r w(r, j) y[r]; rows ascending so every output element
// sees the same addition order in the serial and parallel paths.
void matvec_t_range(const Matrix& w, const Vector& y, Vector& out, int j0,
                    int j1) {
  for (int r = 0; r < w.rows(); ++r) {
    const double a = y[r];
    const double* wr = w.row(r);
    double* o = out.data();
    for (int j = j0; j < j1; ++j) o[j] += a * wr[j];
  }
}

void check_matvec_t_shapes(const Matrix& w, const Vector& y, const Vector& out) {
  if (w.rows() != y.size() || w.cols() != out.size()) {
    throw DimensionError("matvec_t_acc: incompatible shapes " +
                         detail::shape_string(w) + "^T x " +
                         std::to_string(y.size()) + " -> " +
                         std::to_string(out.size()));
  }
}

}  // namespace

void serial::matvec_t_acc(const Matrix& w, const Vector& y, Vector& out) {
  check_matvec_t_shapes(w, y, out);
  matvec_t_range(w, y, out, 0, w.cols());
}

void par::matvec_t_acc(const Matrix& w, const Vector& y, Vector& out) {
  check_matvec_t_shapes(w, y, out);
  const int nthreads = omp_get_max_threads();
  const int cols = w.cols();
  const int chunk = std::max(64, (cols + nthreads - 1) / nthreads);
#pragma omp parallel for schedule(static, 1)
  for (int j0 = 0; j0 < cols; j0 += chunk) {
    matvec_t_range(w, y, out, j0, std::min(cols, j0 + chunk));
  }
}

void matvec_t_acc(const Matrix& w, const Vector& y, Vector& out) {
  const std::int64_t macs = static_cast<std::int64_t>(w.rows()) * w.cols();
  if (parallel_worthwhile(macs) && w.cols() >= 128) {
    par::matvec_t_acc(w, y, out);
  } else {
    serial::matvec_t_acc(w, y, out);
  }
}

void serial::add_outer(const Vector& u, const Vector& v, Matrix& a) {
  if (a.rows() != u.size() || a.cols() != v.size()) {
    throw DimensionError("add_outer: incompatible shapes");
  }
  for (int r = 0; r < a.rows(); ++r) {
    axpy_kernel(u[r], v.data(), a.row(r), a.cols());
  }
}

void par::add_outer(const Vector& u, const Vector& v, Matrix& a) {
  if (a.rows() != u.size() || a.cols() != v.size()) {
    throw DimensionError("add_outer: incompatible shapes");
  }
#pragma omp parallel for schedule(static)
  for (int r = 0; r < a.rows(); ++r) {
    axpy_kernel(u[r], v.data(), a.row(r), a.cols());
  }
}

void add_outer(const Vector& u, const Vector& v, Matrix& a) {
  const std::int64_t macs = static_cast<std::int64_t>(u.size()) * v.size();
  if (parallel_worthwhile(macs)) {
    par::add_outer(u, v, a);
  } else {
    serial::add_outer(u, v, a);
  }
}

double dot(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) {
    throw DimensionError("dot: lengths differ, " + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()));
  }
  return dot_kernel(a.data(), b.data(), a.size());
}

// --------------------------------------------------------------------------
// softmax / concat
// --------------------------------------------------------------------------

Vector softmax(const Vector& v) {
  if (!v.all_finite()) throw ArgumentError("softmax: non-finite input");
  double m = v[0];
  for (int i = 1; i < v.size(); ++i) m = std::max(m, v[i]);
  Vector out(v.size());
  double sum = 0.0;
  for (int i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - m);
    sum += out[i];
  }
  for (int i = 0; i < v.size(); ++i) out[i] /= sum;
  return out;
}

Vector softmax_backward(const Vector& y, const Vector& grad_y) {
  if (y.size() != grad_y.size()) {
    throw DimensionError("softmax_backward: lengths differ");
  }
  double inner = 0.0;
  for (int i = 0; i < y.size(); ++i) inner += grad_y[i] * y[i];
  Vector dx(y.size());
  for (int i = 0; i < y.size(); ++i) dx[i] = y[i] * (grad_y[i] - inner);
  return dx;
}

Vector concat(const Vector& a, const Vector& b) {
  Vector out(a.size() + b.size());
  std::copy(a.data(), a.data() + a.size(), out.data());
  std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
  return out;
}

// --------------------------------------------------------------------------
// gradcheck
// --------------------------------------------------------------------------

GradCheckReport finite_difference_gradcheck(
    const std::function<double(const Vector&)>& f, const Vector& analytic_grad,
    const Vector& point, double epsilon, double tolerance) {
  if (epsilon <= 0.0) throw ArgumentError("gradcheck: epsilon must be positive");
  if (analytic_grad.size() != point.size()) {
    throw DimensionError("gradcheck: grad/point lengths differ");
  }
  GradCheckReport report;
  Vector x = point;
  for (int i = 0; i < point.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + epsilon;
    const double f_plus = f(x);
    x[i] = saved - epsilon;
    const double f_minus = f(x);
    x[i] = saved;
    if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
      throw NumericError("gradcheck: non-finite function value at coordinate " +
                         std::to_string(i));
    }
    const double numeric = (f_plus - f_minus) / (2.0 * epsilon);
    const double analytic = analytic_grad[i];
    const double denom =
        std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic - numeric) / denom;
    if (rel > report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_parameter_index = i;
    }
  }
  report.passed = report.max_relative_error <= tolerance;
  return report;
}

}  // namespace cascade
