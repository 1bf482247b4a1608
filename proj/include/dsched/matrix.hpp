#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace dsched {

/// Dense row-major matrix of doubles. Small sizes only; everything in this
/// project fits in a few KB per matrix.
class Matrix {
 public:
  Matrix() : rows_(0), cols_(0) {}
  Matrix(int rows, int cols)
      : rows_(rows), cols_(cols),
        d_(static_cast<size_t>(rows) * static_cast<size_t>(cols), 0.0) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  double& operator()(int r, int c) {
    return d_[static_cast<size_t>(r) * cols_ + c];
  }
  double operator()(int r, int c) const {
    return d_[static_cast<size_t>(r) * cols_ + c];
  }

  std::span<double> row(int r) {
    return {d_.data() + static_cast<size_t>(r) * cols_,
            static_cast<size_t>(cols_)};
  }
  std::span<const double> row(int r) const {
    return {d_.data() + static_cast<size_t>(r) * cols_,
            static_cast<size_t>(cols_)};
  }

  std::vector<double>& data() { return d_; }
  const std::vector<double>& data() const { return d_; }

  bool same_shape(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  bool all_finite() const {
    for (double v : d_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(double v) {
    for (double& x : d_) x = v;
  }

  bool operator==(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && d_ == o.d_;
  }

 private:
  int rows_, cols_;
  std::vector<double> d_;
};

// C = A * B
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul shape");
  Matrix c(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int k = 0; k < a.cols(); ++k) {
      double av = a(i, k);
      if (av == 0.0) continue;
      for (int j = 0; j < b.cols(); ++j) c(i, j) += av * b(k, j);
    }
  return c;
}

// C = A * B^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt shape");
  Matrix c(a.rows(), b.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (int k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
      c(i, j) = s;
    }
  return c;
}

// C = A^T * B
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("matmul_tn shape");
  Matrix c(a.cols(), b.cols());
  for (int k = 0; k < a.rows(); ++k)
    for (int i = 0; i < a.cols(); ++i) {
      double av = a(k, i);
      if (av == 0.0) continue;
      for (int j = 0; j < b.cols(); ++j) c(i, j) += av * b(k, j);
    }
  return c;
}

inline void add_inplace(Matrix& a, const Matrix& b, double scale = 1.0) {
  if (!a.same_shape(b)) throw std::invalid_argument("add shape");
  for (size_t i = 0; i < a.data().size(); ++i)
    a.data()[i] += scale * b.data()[i];
}

// y = M * x for a row-vector span x
inline std::vector<double> matvec(const Matrix& m,
                                  std::span<const double> x) {
  if (m.cols() != static_cast<int>(x.size()))
    throw std::invalid_argument("matvec shape");
  std::vector<double> y(static_cast<size_t>(m.rows()), 0.0);
  for (int i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (int k = 0; k < m.cols(); ++k) s += m(i, k) * x[static_cast<size_t>(k)];
    y[static_cast<size_t>(i)] = s;
  }
  return y;
}

}  // namespace dsched
