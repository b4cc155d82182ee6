#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lrlab/dual.hpp"

namespace lrlab {

// Dense row-major matrix. T is double for the training path, float for the
// sharpness path, or Dual<...> inside second-order differentiation.
template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), v_(rows * cols, T(0)) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> values)
      : rows_(rows), cols_(cols), v_(std::move(values)) {
    if (v_.size() != rows_ * cols_)
      throw std::invalid_argument("Matrix: values length != rows*cols");
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return v_.size(); }
  bool empty() const { return v_.empty(); }

  T& operator()(std::size_t i, std::size_t j) { return v_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return v_[i * cols_ + j]; }

  T* data() { return v_.data(); }
  const T* data() const { return v_.data(); }
  T* row(std::size_t i) { return v_.data() + i * cols_; }
  const T* row(std::size_t i) const { return v_.data() + i * cols_; }

  std::vector<T>& values() { return v_; }
  const std::vector<T>& values() const { return v_; }

  void fill(T x) { std::fill(v_.begin(), v_.end(), x); }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  std::string shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  bool all_finite() const {
    for (const T& x : v_)
      if (!finite(x)) return false;
    return true;
  }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<T> v_;
};

using DenseMatrix = Matrix<double>;
using DenseVector = std::vector<double>;

// ---------------------------------------------------------------------------
// GEMM kernels. Loop orders chosen so the inner loop runs over contiguous
// memory; Dual matrices are split into value/derivative planes so the real
// kernels stay vectorizable.

namespace detail {

template <typename S>
void gemm_nn_real(const S* a, const S* b, S* c,
                  std::size_t p, std::size_t q, std::size_t r) {
  for (std::size_t i = 0; i < p; ++i) {
    S* ci = c + i * r;
    for (std::size_t k = 0; k < q; ++k) {
      const S aik = a[i * q + k];
      if (aik == S(0)) continue;
      const S* bk = b + k * r;
      for (std::size_t j = 0; j < r; ++j) ci[j] += aik * bk[j];
    }
  }
}

template <typename S>
void gemm_nt_real(const S* a, const S* b, S* c,
                  std::size_t p, std::size_t q, std::size_t r) {
  // c(p x r) += a(p x q) * b(r x q)^T
  for (std::size_t i = 0; i < p; ++i) {
    const S* ai = a + i * q;
    for (std::size_t j = 0; j < r; ++j) {
      const S* bj = b + j * q;
      S acc(0);
      for (std::size_t k = 0; k < q; ++k) acc += ai[k] * bj[k];
      c[i * r + j] += acc;
    }
  }
}

template <typename S>
void gemm_tn_real(const S* a, const S* b, S* c,
                  std::size_t p, std::size_t q, std::size_t r) {
  // c(p x r) += a(q x p)^T * b(q x r)
  for (std::size_t k = 0; k < q; ++k) {
    const S* bk = b + k * r;
    for (std::size_t i = 0; i < p; ++i) {
      const S aki = a[k * p + i];
      if (aki == S(0)) continue;
      S* ci = c + i * r;
      for (std::size_t j = 0; j < r; ++j) ci[j] += aki * bk[j];
    }
  }
}

template <typename S>
void split_dual(const Matrix<Dual<S>>& m, std::vector<S>& val, std::vector<S>& dot) {
  const std::size_t n = m.size();
  val.resize(n);
  dot.resize(n);
  const Dual<S>* p = m.data();
  for (std::size_t i = 0; i < n; ++i) {
    val[i] = p[i].val;
    dot[i] = p[i].dot;
  }
}

}  // namespace detail

// C += A*B variants for all three scalar kinds. Shapes are validated by the
// callers (the autodiff tape); these are the raw kernels.
template <typename S>
void gemm_nn_acc(const Matrix<S>& a, const Matrix<S>& b, Matrix<S>& c) {
  if constexpr (is_dual_v<S>) {
    using R = real_of_t<S>;
    std::vector<R> av, ad, bv, bd, cv(c.size(), R(0)), cd(c.size(), R(0));
    detail::split_dual(a, av, ad);
    detail::split_dual(b, bv, bd);
    const std::size_t p = a.rows(), q = a.cols(), r = b.cols();
    detail::gemm_nn_real(av.data(), bv.data(), cv.data(), p, q, r);
    detail::gemm_nn_real(av.data(), bd.data(), cd.data(), p, q, r);
    detail::gemm_nn_real(ad.data(), bv.data(), cd.data(), p, q, r);
    S* out = c.data();
    for (std::size_t i = 0; i < c.size(); ++i) {
      out[i].val += cv[i];
      out[i].dot += cd[i];
    }
  } else {
    detail::gemm_nn_real(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
  }
}

template <typename S>
void gemm_nt_acc(const Matrix<S>& a, const Matrix<S>& b, Matrix<S>& c) {
  if constexpr (is_dual_v<S>) {
    using R = real_of_t<S>;
    std::vector<R> av, ad, bv, bd, cv(c.size(), R(0)), cd(c.size(), R(0));
    detail::split_dual(a, av, ad);
    detail::split_dual(b, bv, bd);
    const std::size_t p = a.rows(), q = a.cols(), r = b.rows();
    detail::gemm_nt_real(av.data(), bv.data(), cv.data(), p, q, r);
    detail::gemm_nt_real(av.data(), bd.data(), cd.data(), p, q, r);
    detail::gemm_nt_real(ad.data(), bv.data(), cd.data(), p, q, r);
    S* out = c.data();
    for (std::size_t i = 0; i < c.size(); ++i) {
      out[i].val += cv[i];
      out[i].dot += cd[i];
    }
  } else {
    detail::gemm_nt_real(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.rows());
  }
}

template <typename S>
void gemm_tn_acc(const Matrix<S>& a, const Matrix<S>& b, Matrix<S>& c) {
  if constexpr (is_dual_v<S>) {
    using R = real_of_t<S>;
    std::vector<R> av, ad, bv, bd, cv(c.size(), R(0)), cd(c.size(), R(0));
    detail::split_dual(a, av, ad);
    detail::split_dual(b, bv, bd);
    const std::size_t p = a.cols(), q = a.rows(), r = b.cols();
    detail::gemm_tn_real(av.data(), bv.data(), cv.data(), p, q, r);
    detail::gemm_tn_real(av.data(), bd.data(), cd.data(), p, q, r);
    detail::gemm_tn_real(ad.data(), bv.data(), cd.data(), p, q, r);
    S* out = c.data();
    for (std::size_t i = 0; i < c.size(); ++i) {
      out[i].val += cv[i];
      out[i].dot += cd[i];
    }
  } else {
    detail::gemm_tn_real(a.data(), b.data(), c.data(), a.cols(), a.rows(), b.cols());
  }
}

template <typename S>
Matrix<S> matmul_nn(const Matrix<S>& a, const Matrix<S>& b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul_nn: inner dims " + a.shape_str() + " vs " + b.shape_str());
  Matrix<S> c(a.rows(), b.cols());
  gemm_nn_acc(a, b, c);
  return c;
}

template <typename S>
Matrix<S> matmul_nt(const Matrix<S>& a, const Matrix<S>& b) {
  if (a.cols() != b.cols())
    throw std::invalid_argument("matmul_nt: inner dims " + a.shape_str() + " vs " + b.shape_str());
  Matrix<S> c(a.rows(), b.rows());
  gemm_nt_acc(a, b, c);
  return c;
}

template <typename S>
Matrix<S> transpose(const Matrix<S>& a) {
  Matrix<S> t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

// Euclidean norm of each column; sums are accumulated in the matrix's own
// scalar type (double for the 64-bit path).
template <typename S>
std::vector<S> column_norms(const Matrix<S>& w) {
  std::vector<S> out(w.cols(), S(0));
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const S* r = w.row(i);
    for (std::size_t j = 0; j < w.cols(); ++j) out[j] += r[j] * r[j];
  }
  for (S& x : out) x = sqrt(x);
  return out;
}

template <typename S>
double frobenius_norm(const Matrix<S>& w) {
  double acc = 0;
  for (const S& x : w.values()) {
    double v = static_cast<double>(value_part(x));
    acc += v * v;
  }
  return std::sqrt(acc);
}

template <typename To, typename From>
Matrix<To> matrix_cast(const Matrix<From>& m) {
  Matrix<To> out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i)
    out.data()[i] = static_cast<To>(m.data()[i]);
  return out;
}

}  // namespace lrlab
