#include "vrepair/kernels.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace vrepair::kernels {

namespace {

// Below this many multiply-adds the fork/join costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

void prepare(Matrix& c, std::size_t rows, std::size_t cols, bool accumulate) {
  if (accumulate) {
    if (c.rows() != rows || c.cols() != cols) throw std::invalid_argument("accumulate target has wrong shape");
  } else if (c.rows() != rows || c.cols() != cols) {
    c = Matrix(rows, cols);
  } else {
    c.set_zero();
  }
}

// False (row untouched) when every entry is -inf.
bool softmax_row(double* row, std::size_t n) {
  constexpr double kNone = -std::numeric_limits<double>::infinity();
  double mx = kNone;
  bool masked = true;
  for (std::size_t j = 0; j < n; ++j) {
    mx = std::max(mx, row[j]);
    masked = masked && row[j] == kNone;
  }
  // NaN rows fall through and stay NaN
  if (masked) return false;
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    row[j] = std::exp(row[j] - mx);
    sum += row[j];
  }
  const double inv = 1.0 / sum;
  for (std::size_t j = 0; j < n; ++j) row[j] *= inv;
  return true;
}

}  // namespace

void matmul(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  prepare(c, m, n, accumulate);
  const double* A = a.data();
  const double* B = b.data();
  double* C = c.data();
#pragma omp parallel for schedule(static) if (m * n * k >= kParallelWork)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    double* crow = C + i * n;
    const double* arow = A + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  if (a.rows() != b.rows()) throw std::invalid_argument("matmul_tn: row counts differ");
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  prepare(c, m, n, accumulate);
  const double* A = a.data();
  const double* B = b.data();
  double* C = c.data();
#pragma omp parallel for schedule(static) if (m * n * k >= kParallelWork)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    double* crow = C + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[p * m + i];
      if (av == 0.0) continue;
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: column counts differ");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  prepare(c, m, n, accumulate);
  const double* A = a.data();
  const double* B = b.data();
  double* C = c.data();
#pragma omp parallel for schedule(static) if (m * n * k >= kParallelWork)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    const double* arow = A + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = B + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      C[i * n + j] += s;
    }
  }
}

void softmax_rows(Matrix& m) {
  const std::size_t n = m.cols();
  bool ok = true;
#pragma omp parallel for schedule(static) if (m.size() >= kParallelWork) reduction(&& : ok)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(m.rows()); ++r) ok = softmax_row(m.data() + r * n, n) && ok;
  if (!ok) throw std::domain_error("softmax over a fully masked row");
}

namespace reference {

void matmul(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  prepare(c, a.rows(), b.cols(), accumulate);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(p, j);
      c(i, j) += s;
    }
  }
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  if (a.rows() != b.rows()) throw std::invalid_argument("matmul_tn: row counts differ");
  prepare(c, a.cols(), b.cols(), accumulate);
  for (std::size_t i = 0; i < a.cols(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.rows(); ++p) s += a(p, i) * b(p, j);
      c(i, j) += s;
    }
  }
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: column counts differ");
  prepare(c, a.rows(), b.rows(), accumulate);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(j, p);
      c(i, j) += s;
    }
  }
}

void softmax_rows(Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    constexpr double kNone = -std::numeric_limits<double>::infinity();
    double mx = kNone;
    bool masked = true;
    for (double v : m.row(r)) {
      mx = std::max(mx, v);
      masked = masked && v == kNone;
    }
    if (masked) throw std::domain_error("softmax over a fully masked row");
    double sum = 0.0;
    for (double v : m.row(r)) sum += std::exp(v - mx);
    for (double& v : m.row(r)) v = std::exp(v - mx) / sum;
  }
}

}  // namespace reference
}  // namespace vrepair::kernels
