#include <doctest.h>

#include "lrlab/adapters.hpp"
#include "lrlab/random.hpp"

using namespace lrlab;

namespace {

DenseMatrix diag3() {
  DenseMatrix w(3, 3);
  w(0, 0) = 3;
  w(1, 1) = 2;
  w(2, 2) = 1;
  return w;
}

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

AdapterConfig cfg_for(AdapterVariant v, int r, std::uint64_t seed = 11) {
  AdapterConfig c;
  c.variant = v;
  c.rank = r;
  c.alpha = r;  // gamma 1
  c.seed = seed;
  return c;
}

constexpr AdapterVariant kAll[] = {AdapterVariant::LoRA, AdapterVariant::PiSSA,
                                   AdapterVariant::MiLoRA, AdapterVariant::InitAB,
                                   AdapterVariant::DoRA};

}  // namespace

TEST_CASE("PiSSA on a diagonal matrix takes the top component") {
  auto st = init_adapter(diag3(), cfg_for(AdapterVariant::PiSSA, 1));
  const double r3 = std::sqrt(3.0);
  CHECK(st.b(0, 0) == doctest::Approx(r3).epsilon(1e-12));
  CHECK(st.b(1, 0) == doctest::Approx(0).epsilon(1e-12));
  CHECK(st.a(0, 0) == doctest::Approx(r3).epsilon(1e-12));
  CHECK(st.reference(0, 0) == doctest::Approx(0).epsilon(1e-12));
  CHECK(st.reference(1, 1) == doctest::Approx(2).epsilon(1e-12));
  CHECK(st.reference(2, 2) == doctest::Approx(1).epsilon(1e-12));
}

TEST_CASE("MiLoRA on a diagonal matrix takes the bottom component") {
  auto st = init_adapter(diag3(), cfg_for(AdapterVariant::MiLoRA, 1));
  DenseMatrix ba = matmul_nn(st.b, st.a);
  CHECK(ba(2, 2) == doctest::Approx(1).epsilon(1e-12));
  CHECK(ba(0, 0) == doctest::Approx(0).epsilon(1e-12));
  CHECK(st.reference(0, 0) == doctest::Approx(3).epsilon(1e-12));
  CHECK(st.reference(2, 2) == doctest::Approx(0).epsilon(1e-12));
}

TEST_CASE("PiSSA at full rank leaves a zero residual") {
  RandomStream rs(2);
  DenseMatrix w = rs.gaussian_matrix(6, 4);
  auto st = init_adapter(w, cfg_for(AdapterVariant::PiSSA, 4));
  for (double x : st.reference.values()) CHECK(std::abs(x) <= 1e-10);
  CHECK(max_abs_diff(matmul_nn(st.b, st.a), w) <= 1e-10);
}

TEST_CASE("exact at init: merge equals W_pre for all variants and ranks") {
  RandomStream rs(7);
  const std::size_t shapes[][2] = {{8, 8}, {12, 6}, {5, 9}};
  for (auto& sh : shapes) {
    DenseMatrix w = rs.gaussian_matrix(sh[0], sh[1]);
    const int kmax = static_cast<int>(std::min(sh[0], sh[1]));
    for (AdapterVariant v : kAll) {
      for (int r : {1, 2, kmax}) {
        auto st = init_adapter(w, cfg_for(v, r, 100 + r));
        CHECK(max_abs_diff(merge_adapter(st), w) <= 1e-10);
      }
    }
  }
}

TEST_CASE("initialization invariants per variant") {
  RandomStream rs(21);
  DenseMatrix w = rs.gaussian_matrix(10, 7);

  auto lora = init_adapter(w, cfg_for(AdapterVariant::LoRA, 3));
  for (double x : lora.b.values()) CHECK(x == 0.0);
  const double bound = 1.0 / std::sqrt(7.0);
  for (double x : lora.a.values()) {
    CHECK(x <= bound);
    CHECK(x >= -bound);
  }
  CHECK(lora.magnitude.empty());

  auto dora = init_adapter(w, cfg_for(AdapterVariant::DoRA, 3));
  for (double x : dora.b.values()) CHECK(x == 0.0);
  auto norms = column_norms(w);
  REQUIRE(dora.magnitude.cols() == 7);
  for (std::size_t j = 0; j < 7; ++j) CHECK(dora.magnitude(0, j) == norms[j]);

  // residual variants reconstruct W_pre exactly at init
  for (AdapterVariant v :
       {AdapterVariant::PiSSA, AdapterVariant::MiLoRA, AdapterVariant::InitAB}) {
    auto st = init_adapter(w, cfg_for(v, 3));
    DenseMatrix sum = matmul_nn(st.b, st.a);
    for (std::size_t i = 0; i < sum.size(); ++i)
      sum.data()[i] += st.reference.data()[i];
    CHECK(max_abs_diff(sum, w) <= 1e-10);
  }
}

TEST_CASE("spectral split sizes and balance") {
  RandomStream rs(3);
  DenseMatrix w = rs.gaussian_matrix(9, 9);
  auto f = svd(w);
  const int r = 3;

  auto pissa = init_adapter(w, cfg_for(AdapterVariant::PiSSA, r));
  auto milora = init_adapter(w, cfg_for(AdapterVariant::MiLoRA, r));

  double top = 0, bottom = 0;
  for (int i = 0; i < r; ++i) top += f.s[i] * f.s[i];
  for (std::size_t i = f.s.size() - r; i < f.s.size(); ++i) bottom += f.s[i] * f.s[i];

  auto fro2 = [](const DenseMatrix& m) {
    double acc = 0;
    for (double x : m.values()) acc += x * x;
    return acc;
  };
  CHECK(fro2(matmul_nn(pissa.b, pissa.a)) == doctest::Approx(top).epsilon(1e-9));
  CHECK(fro2(matmul_nn(milora.b, milora.a)) == doctest::Approx(bottom).epsilon(1e-9));
  CHECK(fro2(matmul_nn(pissa.b, pissa.a)) >= fro2(matmul_nn(milora.b, milora.a)));

  // balanced factors: column i of B and row i of A both have norm sqrt(sigma)
  for (int i = 0; i < r; ++i) {
    double bn = 0, an = 0;
    for (std::size_t k = 0; k < 9; ++k) {
      bn += pissa.b(k, i) * pissa.b(k, i);
      an += pissa.a(i, k) * pissa.a(i, k);
    }
    CHECK(std::sqrt(bn) == doctest::Approx(std::sqrt(f.s[i])).epsilon(1e-9));
    CHECK(std::sqrt(an) == doctest::Approx(std::sqrt(f.s[i])).epsilon(1e-9));
  }
}

TEST_CASE("adapter_forward matches merge-then-multiply") {
  RandomStream rs(17);
  DenseMatrix w = rs.gaussian_matrix(8, 6);
  for (AdapterVariant v : kAll) {
    auto st = init_adapter(w, cfg_for(v, 2, 31));
    // perturb factors to a mid-training state
    for (double& x : st.b.values()) x += rs.normal(0, 0.3);
    for (double& x : st.a.values()) x += rs.normal(0, 0.3);
    if (!st.magnitude.empty())
      for (double& x : st.magnitude.values()) x += rs.normal(0, 0.1);

    DenseMatrix weff = merge_adapter(st);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> x = rs.gaussian_vector(6);
      auto h = adapter_forward(st, x);
      for (std::size_t i = 0; i < 8; ++i) {
        double expect = 0;
        for (std::size_t j = 0; j < 6; ++j) expect += weff(i, j) * x[j];
        CHECK(std::abs(h[i] - expect) <= 1e-9);
      }
    }
  }
}

TEST_CASE("zero B annihilates the update regardless of A") {
  RandomStream rs(5);
  DenseMatrix w = rs.gaussian_matrix(5, 5);
  auto st = init_adapter(w, cfg_for(AdapterVariant::LoRA, 2));
  for (double& x : st.a.values()) x = rs.normal(0, 10);
  st.b.fill(0.0);
  std::vector<double> x = rs.gaussian_vector(5);
  auto h = adapter_forward(st, x);
  for (std::size_t i = 0; i < 5; ++i) {
    double expect = 0;
    for (std::size_t j = 0; j < 5; ++j) expect += w(i, j) * x[j];
    CHECK(h[i] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("gamma scales the update when alpha != rank") {
  RandomStream rs(6);
  DenseMatrix w = rs.gaussian_matrix(4, 4);
  AdapterConfig c = cfg_for(AdapterVariant::LoRA, 2);
  c.alpha = 6;  // gamma = 3
  auto st = init_adapter(w, c);
  CHECK(st.gamma == doctest::Approx(3.0));
  for (double& x : st.b.values()) x = rs.normal();
  DenseMatrix merged = merge_adapter(st);
  DenseMatrix ba = matmul_nn(st.b, st.a);
  for (std::size_t i = 0; i < merged.size(); ++i)
    CHECK(merged.data()[i] ==
          doctest::Approx(w.data()[i] + 3.0 * ba.data()[i]).epsilon(1e-12));
}

TEST_CASE("trainable parameter counts") {
  DenseMatrix w(10, 6);
  auto lora = init_adapter(w, cfg_for(AdapterVariant::LoRA, 4));
  CHECK(lora.trainable_params() == 4 * (10 + 6));
  // DoRA needs a nonzero matrix for the magnitude; reuse a random one
  RandomStream rs(1);
  DenseMatrix w2 = rs.gaussian_matrix(10, 6);
  auto dora = init_adapter(w2, cfg_for(AdapterVariant::DoRA, 4));
  CHECK(dora.trainable_params() == 4 * (10 + 6) + 6);
}

TEST_CASE("rank bounds and DoRA zero-column failures") {
  DenseMatrix w(4, 3);
  CHECK_THROWS_AS(init_adapter(w, cfg_for(AdapterVariant::LoRA, 4)), std::invalid_argument);
  CHECK_THROWS_AS(init_adapter(w, cfg_for(AdapterVariant::LoRA, 0)), std::invalid_argument);

  RandomStream rs(9);
  DenseMatrix wz = rs.gaussian_matrix(4, 3);
  for (std::size_t i = 0; i < 4; ++i) wz(i, 1) = 0.0;  // zero column
  auto st = init_adapter(wz, cfg_for(AdapterVariant::DoRA, 2));
  CHECK_THROWS_AS(merge_adapter(st), std::runtime_error);
}
