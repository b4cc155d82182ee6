#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "lrlab/matrix.hpp"

namespace lrlab {

// Thin SVD: W (m x n) = U (m x k) * diag(S) * Vt (k x n), k = min(m, n),
// singular values non-negative and non-increasing.
struct SvdFactorization {
  DenseMatrix u;
  DenseVector s;
  DenseMatrix vt;

  DenseMatrix reconstruct() const {
    const std::size_t m = u.rows(), k = s.size(), n = vt.cols();
    DenseMatrix w(m, n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0;
        for (std::size_t t = 0; t < k; ++t) acc += u(i, t) * s[t] * vt(t, j);
        w(i, j) = acc;
      }
    return w;
  }
};

namespace detail {

// One-sided Jacobi on the columns of a (m x n, m >= n). Returns sorted
// factors. Simple and accurate at the matrix sizes used here.
inline void jacobi_svd_tall(DenseMatrix a, DenseMatrix& u, DenseVector& s,
                            DenseMatrix& v) {
  const std::size_t m = a.rows(), n = a.cols();
  constexpr int kMaxSweeps = 60;
  constexpr double kTol = 1e-12;  // relative off-diagonal tolerance

  v = DenseMatrix::identity(n);

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double app = 0, aqq = 0, apq = 0;
        for (std::size_t i = 0; i < m; ++i) {
          const double x = a(i, p), y = a(i, q);
          app += x * x;
          aqq += y * y;
          apq += x * y;
        }
        if (std::abs(apq) <= kTol * std::sqrt(app * aqq) || apq == 0.0) continue;
        rotated = true;
        const double zeta = (aqq - app) / (2.0 * apq);
        const double t = (zeta >= 0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double cs = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = cs * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double x = a(i, p), y = a(i, q);
          a(i, p) = cs * x - sn * y;
          a(i, q) = sn * x + cs * y;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double x = v(i, p), y = v(i, q);
          v(i, p) = cs * x - sn * y;
          v(i, q) = sn * x + cs * y;
        }
      }
    }
    if (!rotated) break;
    if (sweep == kMaxSweeps - 1)
      throw std::runtime_error("svd: no convergence after 60 sweeps on " +
                               std::to_string(m) + "x" + std::to_string(n));
  }

  // Column norms are the singular values; sort descending (stable on ties).
  std::vector<double> norms(n);
  for (std::size_t j = 0; j < n; ++j) {
    double acc = 0;
    for (std::size_t i = 0; i < m; ++i) acc += a(i, j) * a(i, j);
    norms[j] = std::sqrt(acc);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

  u = DenseMatrix(m, n);
  s.assign(n, 0.0);
  DenseMatrix vs(n, n);
  for (std::size_t jj = 0; jj < n; ++jj) {
    const std::size_t j = order[jj];
    s[jj] = norms[j];
    for (std::size_t i = 0; i < n; ++i) vs(i, jj) = v(i, j);
    if (norms[j] > 0) {
      for (std::size_t i = 0; i < m; ++i) u(i, jj) = a(i, j) / norms[j];
    }
  }
  v = std::move(vs);

  // Zero singular values leave u columns undefined; complete them to an
  // orthonormal set from the standard basis. Zero columns sort last, so
  // columns 0..jj-1 are always populated when column jj is filled.
  for (std::size_t jj = 0; jj < n; ++jj) {
    if (s[jj] > 0) continue;
    for (std::size_t cand = 0; cand < m; ++cand) {
      std::vector<double> e(m, 0.0);
      e[cand] = 1.0;
      for (std::size_t c = 0; c < jj; ++c) {
        double d = 0;
        for (std::size_t i = 0; i < m; ++i) d += e[i] * u(i, c);
        for (std::size_t i = 0; i < m; ++i) e[i] -= d * u(i, c);
      }
      double nrm = 0;
      for (double x : e) nrm += x * x;
      nrm = std::sqrt(nrm);
      if (nrm > 1e-6) {
        for (std::size_t i = 0; i < m; ++i) u(i, jj) = e[i] / nrm;
        break;
      }
    }
  }
}

}  // namespace detail

// Deterministic thin SVD by one-sided Jacobi. Sign convention: the first
// entry of each left singular vector with magnitude > 1e-12 is made
// non-negative (the right vector flips with it), so repeated runs and
// downstream initializations are bit-reproducible.
inline SvdFactorization svd(const DenseMatrix& w) {
  const std::size_t m = w.rows(), n = w.cols();
  if (m == 0 || n == 0) throw std::invalid_argument("svd: empty matrix");
  if (!w.all_finite())
    throw std::invalid_argument("svd: non-finite input " + w.shape_str());

  SvdFactorization f;
  if (m >= n) {
    DenseMatrix v;
    detail::jacobi_svd_tall(w, f.u, f.s, v);
    f.vt = transpose(v);
  } else {
    // W^T = U' S V'^T  =>  W = V' S U'^T
    DenseMatrix u2, v2;
    DenseVector s2;
    detail::jacobi_svd_tall(transpose(w), u2, s2, v2);
    f.u = std::move(v2);
    f.s = std::move(s2);
    f.vt = transpose(u2);
  }

  const std::size_t k = f.s.size();
  for (std::size_t j = 0; j < k; ++j) {
    double lead = 0;
    for (std::size_t i = 0; i < f.u.rows(); ++i) {
      if (std::abs(f.u(i, j)) > 1e-12) {
        lead = f.u(i, j);
        break;
      }
    }
    if (lead < 0) {
      for (std::size_t i = 0; i < f.u.rows(); ++i) f.u(i, j) = -f.u(i, j);
      for (std::size_t i = 0; i < f.vt.cols(); ++i) f.vt(j, i) = -f.vt(j, i);
    }
  }
  return f;
}

}  // namespace lrlab
