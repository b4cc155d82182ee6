#include <doctest.h>

#include "lrlab/random.hpp"
#include "lrlab/tridiag.hpp"
#include "support/oracles.hpp"

using namespace lrlab;

TEST_CASE("symtridiag_eigmax on fixed cases") {
  CHECK(symtridiag_eigmax({5}, {}) == 5.0);
  CHECK(symtridiag_eigmax({0, 0}, {1}) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("symtridiag_eigmax matches the dense eigensolver oracle") {
  RandomStream rs(31);
  for (int trial = 0; trial < 6; ++trial) {
    const std::size_t n = 20;
    std::vector<double> alphas(n), betas(n - 1);
    for (auto& a : alphas) a = rs.normal(0, 2);
    for (auto& b : betas) b = rs.normal(0, 2);
    DenseMatrix dense(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      dense(i, i) = alphas[i];
      if (i + 1 < n) {
        dense(i, i + 1) = betas[i];
        dense(i + 1, i) = betas[i];
      }
    }
    const double expect = test::dense_symmetric_eigmax(dense);
    CHECK(std::abs(symtridiag_eigmax(alphas, betas) - expect) <= 1e-10);
  }
}
