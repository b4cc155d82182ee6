#include <doctest.h>

#include "lrlab/matrix.hpp"
#include "lrlab/random.hpp"

using namespace lrlab;

namespace {

// Plain triple loop, no blocking or accumulation tricks.
DenseMatrix naive_mm(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      c(i, j) = acc;
    }
  return c;
}

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace

TEST_CASE("gemm variants agree with the naive product") {
  RandomStream rs(11);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t p = 1 + rs.uniform_int(17);
    const std::size_t q = 1 + rs.uniform_int(17);
    const std::size_t r = 1 + rs.uniform_int(17);
    DenseMatrix a = rs.gaussian_matrix(p, q);
    DenseMatrix b = rs.gaussian_matrix(q, r);
    CHECK(max_abs_diff(matmul_nn(a, b), naive_mm(a, b)) < 1e-12);
    CHECK(max_abs_diff(matmul_nt(a, transpose(b)), naive_mm(a, b)) < 1e-12);
    DenseMatrix c(p, r);
    gemm_tn_acc(transpose(a), b, c);
    CHECK(max_abs_diff(c, naive_mm(a, b)) < 1e-12);
  }
}

TEST_CASE("dual gemm carries exact tangents") {
  RandomStream rs(5);
  using D = Dual<double>;
  const std::size_t n = 6;
  DenseMatrix a = rs.gaussian_matrix(n, n), da = rs.gaussian_matrix(n, n);
  DenseMatrix b = rs.gaussian_matrix(n, n), db = rs.gaussian_matrix(n, n);
  Matrix<D> ad(n, n), bd(n, n);
  for (std::size_t i = 0; i < n * n; ++i) {
    ad.data()[i] = D(a.data()[i], da.data()[i]);
    bd.data()[i] = D(b.data()[i], db.data()[i]);
  }
  Matrix<D> cd(n, n);
  gemm_nn_acc(ad, bd, cd);
  // tangent of A*B is dA*B + A*dB
  DenseMatrix expect = naive_mm(da, b);
  DenseMatrix t2 = naive_mm(a, db);
  for (std::size_t i = 0; i < n * n; ++i) expect.data()[i] += t2.data()[i];
  for (std::size_t i = 0; i < n * n; ++i) {
    CHECK(cd.data()[i].val == doctest::Approx(naive_mm(a, b).data()[i]).epsilon(1e-12));
    CHECK(cd.data()[i].dot == doctest::Approx(expect.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("column_norms basics") {
  CHECK(column_norms(DenseMatrix::identity(3)) == std::vector<double>{1, 1, 1});

  DenseMatrix w(2, 2);
  w(0, 0) = 3;
  w(1, 0) = 4;
  auto n = column_norms(w);
  CHECK(n[0] == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(n[1] == 0.0);
}

TEST_CASE("column_norms matches elementwise oracle") {
  RandomStream rs(99);
  DenseMatrix w = rs.gaussian_matrix(8, 8);
  auto n = column_norms(w);
  for (std::size_t j = 0; j < 8; ++j) {
    double acc = 0;
    for (std::size_t i = 0; i < 8; ++i) acc += w(i, j) * w(i, j);
    CHECK(std::abs(n[j] - std::sqrt(acc)) <= 1e-12);
  }
}

TEST_CASE("random stream is deterministic and portable") {
  RandomStream a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
  RandomStream c(42), d(43);
  bool differ = false;
  for (int i = 0; i < 10; ++i) differ = differ || (c.bits() != d.bits());
  CHECK(differ);
}
