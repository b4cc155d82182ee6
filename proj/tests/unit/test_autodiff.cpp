#include <doctest.h>

#include "lrlab/autodiff.hpp"
#include "lrlab/random.hpp"
#include "support/oracles.hpp"

using namespace lrlab;

namespace {

// 0.5 * ||theta||^2 over all blocks.
struct HalfSquaredNorm {
  template <typename T>
  ad::Var operator()(ad::Tape<T>& t, const std::vector<ad::Var>& leaves) const {
    ad::Var total;
    for (ad::Var v : leaves) {
      ad::Var q = t.scale(t.dot_sum(v, v), 0.5);
      total = total.valid() ? t.add(total, q) : q;
    }
    return total;
  }
};

// 0.5 * theta^T A theta for a fixed symmetric A; theta is a single 1 x n block.
struct QuadraticForm {
  DenseMatrix a;
  template <typename T>
  ad::Var operator()(ad::Tape<T>& t, const std::vector<ad::Var>& leaves) const {
    ad::Var theta = leaves[0];
    ad::Var ath = t.matmul_nt(theta, t.constant(matrix_cast<T>(a)));
    return t.scale(t.dot_sum(ath, theta), 0.5);
  }
};

// A smooth nonlinear scalar built from the tape's transcendental ops:
// sum(silu(theta * W^T)) with a fixed random W, plus a rmsnorm-through term.
struct NonlinearLoss {
  DenseMatrix w;
  DenseMatrix gain;
  template <typename T>
  ad::Var operator()(ad::Tape<T>& t, const std::vector<ad::Var>& leaves) const {
    ad::Var x = leaves[0];
    ad::Var h = t.silu(t.matmul_nt(x, t.constant(matrix_cast<T>(w))));
    ad::Var n = t.rmsnorm(h, t.constant(matrix_cast<T>(gain)));
    return t.dot_sum(n, h);
  }
};

}  // namespace

TEST_CASE("grad of 0.5||theta||^2 is theta") {
  ParamVector theta;
  DenseMatrix m(1, 2);
  m(0, 0) = 1;
  m(0, 1) = -2;
  theta.add_block("t", m);
  ParamVector g = grad(HalfSquaredNorm{}, theta);
  CHECK(g.values()[0] == 1.0);
  CHECK(g.values()[1] == -2.0);
}

TEST_CASE("grad of a constant loss is zero") {
  ParamVector theta;
  theta.add_block("t", 1, 3);
  auto constant_loss = [](auto& t, const std::vector<ad::Var>& leaves) {
    using T = typename std::decay_t<decltype(t)>::Mat;
    (void)leaves;
    // depends on the leaf with zero coefficient so backward has a path
    return t.scale(t.dot_sum(leaves[0], leaves[0]), 0.0);
  };
  ParamVector g = grad(constant_loss, theta);
  for (double x : g.values()) CHECK(x == 0.0);
}

TEST_CASE("hvp of a quadratic is A*v") {
  DenseMatrix a(2, 2);
  a(0, 0) = 2;
  a(0, 1) = 1;
  a(1, 0) = 1;
  a(1, 1) = 3;
  ParamVector theta;
  DenseMatrix t0(1, 2);
  t0(0, 0) = 0.3;
  t0(0, 1) = -0.7;
  theta.add_block("t", t0);

  ParamVector v = theta.zeros_like();
  v.values()[0] = 1.0;
  ParamVector hv = hvp(QuadraticForm{a}, theta, v);
  CHECK(hv.values()[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(hv.values()[1] == doctest::Approx(1.0).epsilon(1e-12));

  ParamVector z = theta.zeros_like();
  ParamVector hz = hvp(QuadraticForm{a}, theta, z);
  CHECK(hz.values()[0] == 0.0);
  CHECK(hz.values()[1] == 0.0);
}

TEST_CASE("hvp is linear and symmetric as a bilinear form") {
  RandomStream rs(17);
  NonlinearLoss loss{rs.gaussian_matrix(5, 4), rs.uniform_matrix(1, 5, 0.5, 1.5)};
  ParamVector theta;
  theta.add_block("x", rs.gaussian_matrix(2, 4));

  auto rand_dir = [&] {
    ParamVector v = theta.zeros_like();
    for (double& x : v.values()) x = rs.normal();
    return v;
  };
  ParamVector v = rand_dir(), w = rand_dir();

  ParamVector hv = hvp(loss, theta, v);
  ParamVector hw = hvp(loss, theta, w);

  // linearity: H(a v + b w) = a Hv + b Hw
  const double a = 0.37, b = -1.21;
  ParamVector mix = theta.zeros_like();
  for (std::size_t i = 0; i < mix.size(); ++i)
    mix.values()[i] = a * v.values()[i] + b * w.values()[i];
  ParamVector hmix = hvp(loss, theta, mix);
  for (std::size_t i = 0; i < mix.size(); ++i)
    CHECK(hmix.values()[i] ==
          doctest::Approx(a * hv.values()[i] + b * hw.values()[i]).epsilon(1e-8));

  // symmetry: v^T H w == w^T H v
  double vhw = 0, whv = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    vhw += v.values()[i] * hw.values()[i];
    whv += w.values()[i] * hv.values()[i];
  }
  CHECK(vhw == doctest::Approx(whv).epsilon(1e-8));
}

TEST_CASE("grad matches central finite differences on a nonlinear loss") {
  RandomStream rs(23);
  NonlinearLoss loss{rs.gaussian_matrix(6, 5), rs.uniform_matrix(1, 6, 0.5, 1.5)};
  ParamVector theta;
  theta.add_block("x", rs.gaussian_matrix(3, 5));

  ParamVector g = grad(loss, theta);

  auto eval = [&](const std::vector<double>& flat) {
    ParamVector p = theta;
    p.values() = flat;
    ad::Tape<double> tape;
    std::vector<ad::Var> leaves;
    for (std::size_t bi = 0; bi < p.block_count(); ++bi)
      leaves.push_back(tape.leaf(p.block_matrix(bi), false));
    return tape.value(loss(tape, leaves))(0, 0);
  };
  auto fd = test::fd_gradient(eval, theta.values());
  for (std::size_t i = 0; i < fd.size(); ++i) {
    const double denom = std::max({std::abs(fd[i]), std::abs(g.values()[i]), 1e-6});
    CHECK(std::abs(fd[i] - g.values()[i]) / denom <= 1e-4);
  }
}

TEST_CASE("grad reports the offending block on non-finite loss") {
  ParamVector theta;
  DenseMatrix m(1, 1);
  m(0, 0) = -1.0;
  theta.add_block("x", m);
  auto bad = [](auto& t, const std::vector<ad::Var>& leaves) {
    // log of a negative number -> NaN
    return t.sum(t.silu(t.scale(t.dot_sum(leaves[0], leaves[0]), 1e308)));
  };
  // 1e308 * 1 overflows silu's exp path to inf
  CHECK_THROWS(grad(bad, theta));
}
