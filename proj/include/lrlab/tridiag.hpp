#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace lrlab {

// Largest eigenvalue of the symmetric tridiagonal matrix with diagonal
// `alphas` and off-diagonal `betas`, by bisection on the Sturm negcount.
// Robust for the small matrices produced by Lanczos; no factorization.
inline double symtridiag_eigmax(const std::vector<double>& alphas,
                                const std::vector<double>& betas) {
  const std::size_t n = alphas.size();
  if (n == 0) throw std::invalid_argument("symtridiag_eigmax: empty diagonal");
  if (betas.size() + 1 != n)
    throw std::invalid_argument("symtridiag_eigmax: need n-1 off-diagonals");
  if (n == 1) return alphas[0];

  // negcount(x): number of eigenvalues strictly below x (LDL^T recurrence).
  auto negcount = [&](double x) {
    int count = 0;
    double d = alphas[0] - x;
    if (d < 0) ++count;
    const double tiny = std::numeric_limits<double>::min();
    for (std::size_t i = 1; i < n; ++i) {
      if (d == 0.0) d = -tiny;
      d = (alphas[i] - x) - betas[i - 1] * betas[i - 1] / d;
      if (d < 0) ++count;
    }
    return count;
  };

  // Gershgorin bounds.
  double lo = alphas[0], hi = alphas[0];
  for (std::size_t i = 0; i < n; ++i) {
    double r = 0;
    if (i > 0) r += std::abs(betas[i - 1]);
    if (i + 1 < n) r += std::abs(betas[i]);
    lo = std::min(lo, alphas[i] - r);
    hi = std::max(hi, alphas[i] + r);
  }
  if (lo == hi) return lo;

  const double scale = std::max({1.0, std::abs(lo), std::abs(hi)});
  const int total = static_cast<int>(n);
  for (int it = 0; it < 200 && hi - lo > 1e-12 * scale; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (negcount(mid) >= total)
      hi = mid;  // all eigenvalues below mid
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace lrlab
