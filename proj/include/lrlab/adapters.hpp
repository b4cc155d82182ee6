#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lrlab/matrix.hpp"
#include "lrlab/random.hpp"
#include "lrlab/svd.hpp"

namespace lrlab {

enum class AdapterVariant { LoRA, PiSSA, MiLoRA, InitAB, DoRA };

inline const char* variant_name(AdapterVariant v) {
  switch (v) {
    case AdapterVariant::LoRA: return "LoRA";
    case AdapterVariant::PiSSA: return "PiSSA";
    case AdapterVariant::MiLoRA: return "MiLoRA";
    case AdapterVariant::InitAB: return "InitAB";
    case AdapterVariant::DoRA: return "DoRA";
  }
  return "?";
}

inline AdapterVariant variant_from_name(const std::string& name) {
  if (name == "LoRA") return AdapterVariant::LoRA;
  if (name == "PiSSA") return AdapterVariant::PiSSA;
  if (name == "MiLoRA") return AdapterVariant::MiLoRA;
  if (name == "InitAB") return AdapterVariant::InitAB;
  if (name == "DoRA") return AdapterVariant::DoRA;
  throw std::invalid_argument("unknown adapter variant: " + name);
}

struct AdapterConfig {
  AdapterVariant variant = AdapterVariant::LoRA;
  int rank = 8;
  double alpha = 8;  // scaling gamma = alpha / rank; alpha = rank keeps gamma 1
  std::uint64_t seed = 0;

  double gamma() const { return alpha / double(rank); }
};

// One adapted layer. For LoRA/DoRA `reference` is the frozen pretrained
// weight itself; for the residual-based initializations it is W_pre - B0*A0.
template <typename S>
struct AdapterState {
  AdapterVariant variant = AdapterVariant::LoRA;
  Matrix<S> reference;  // m x n
  Matrix<S> b;          // m x r
  Matrix<S> a;          // r x n
  Matrix<S> magnitude;  // 1 x n, DoRA only (empty otherwise)
  double gamma = 1.0;

  std::size_t out_dim() const { return reference.rows(); }
  std::size_t in_dim() const { return reference.cols(); }
  int rank() const { return static_cast<int>(b.cols()); }
  std::size_t trainable_params() const {
    return b.size() + a.size() + magnitude.size();
  }
};

namespace detail {

inline void check_adapter_config(const DenseMatrix& w, const AdapterConfig& cfg) {
  const std::size_t k = std::min(w.rows(), w.cols());
  if (cfg.rank < 1 || static_cast<std::size_t>(cfg.rank) > k)
    throw std::invalid_argument("init_adapter: rank " + std::to_string(cfg.rank) +
                                " out of range for " + w.shape_str());
  if (cfg.alpha <= 0) throw std::invalid_argument("init_adapter: alpha <= 0");
}

}  // namespace detail

// Initialization of the five variants. Factors implicated in residual splits
// use the symmetric sqrt(sigma) convention, so reference + B0*A0 == W_pre.
inline AdapterState<double> init_adapter(const DenseMatrix& w_pre,
                                         const AdapterConfig& cfg) {
  detail::check_adapter_config(w_pre, cfg);
  const std::size_t m = w_pre.rows(), n = w_pre.cols();
  const std::size_t r = static_cast<std::size_t>(cfg.rank);
  RandomStream rs(cfg.seed);

  AdapterState<double> st;
  st.variant = cfg.variant;
  st.gamma = cfg.gamma();

  switch (cfg.variant) {
    case AdapterVariant::LoRA:
    case AdapterVariant::DoRA: {
      st.reference = w_pre;
      st.b = DenseMatrix(m, r);
      const double bound = 1.0 / std::sqrt(double(n));  // Kaiming uniform, fan_in = n
      st.a = rs.uniform_matrix(r, n, -bound, bound);
      if (cfg.variant == AdapterVariant::DoRA) {
        auto norms = column_norms(w_pre);
        st.magnitude = DenseMatrix(1, n);
        for (std::size_t j = 0; j < n; ++j) st.magnitude(0, j) = norms[j];
      }
      break;
    }
    case AdapterVariant::PiSSA:
    case AdapterVariant::MiLoRA: {
      const SvdFactorization f = svd(w_pre);
      const std::size_t k = f.s.size();
      const std::size_t first = cfg.variant == AdapterVariant::PiSSA ? 0 : k - r;
      st.b = DenseMatrix(m, r);
      st.a = DenseMatrix(r, n);
      for (std::size_t c = 0; c < r; ++c) {
        const std::size_t idx = first + c;
        const double root = std::sqrt(f.s[idx]);
        for (std::size_t i = 0; i < m; ++i) st.b(i, c) = root * f.u(i, idx);
        for (std::size_t j = 0; j < n; ++j) st.a(c, j) = root * f.vt(idx, j);
      }
      DenseMatrix ba = matmul_nn(st.b, st.a);
      st.reference = w_pre;
      for (std::size_t i = 0; i < ba.size(); ++i)
        st.reference.data()[i] -= ba.data()[i];
      break;
    }
    case AdapterVariant::InitAB: {
      st.b = rs.gaussian_matrix(m, r, 1.0 / std::sqrt(double(r)));
      st.a = rs.gaussian_matrix(r, n, 1.0 / std::sqrt(double(n)));
      DenseMatrix ba = matmul_nn(st.b, st.a);
      st.reference = w_pre;
      for (std::size_t i = 0; i < ba.size(); ++i)
        st.reference.data()[i] -= ba.data()[i];
      break;
    }
  }
  return st;
}

// Effective dense weight: W_eff x == adapter_forward(x) for all x.
template <typename S>
Matrix<S> merge_adapter(const AdapterState<S>& st) {
  Matrix<S> ba = matmul_nn(st.b, st.a);
  if (st.variant == AdapterVariant::DoRA) {
    Matrix<S> wsum = st.reference;  // reference is W_pre here
    for (std::size_t i = 0; i < wsum.size(); ++i) wsum.data()[i] += ba.data()[i];
    auto norms = column_norms(wsum);
    for (std::size_t j = 0; j < wsum.cols(); ++j)
      if (!(value_part(norms[j]) > 0))
        throw std::runtime_error("merge_adapter: zero column norm in DoRA direction, column " +
                                 std::to_string(j));
    Matrix<S> w(wsum.rows(), wsum.cols());
    for (std::size_t i = 0; i < wsum.rows(); ++i)
      for (std::size_t j = 0; j < wsum.cols(); ++j)
        w(i, j) = S(real_of_t<S>(st.gamma)) * (st.magnitude(0, j) / norms[j]) * wsum(i, j);
    return w;
  }
  Matrix<S> w = st.reference;
  for (std::size_t i = 0; i < w.size(); ++i)
    w.data()[i] += S(real_of_t<S>(st.gamma)) * ba.data()[i];
  return w;
}

// Variant-specific forward for a single input vector (length n).
template <typename S>
std::vector<S> adapter_forward(const AdapterState<S>& st, const std::vector<S>& x) {
  if (x.size() != st.in_dim())
    throw std::invalid_argument("adapter_forward: x length " + std::to_string(x.size()) +
                                " != " + std::to_string(st.in_dim()));
  const std::size_t m = st.out_dim(), n = st.in_dim();
  const std::size_t r = static_cast<std::size_t>(st.rank());
  std::vector<S> h(m, S(0));
  if (st.variant == AdapterVariant::DoRA) {
    Matrix<S> weff = merge_adapter(st);
    for (std::size_t i = 0; i < m; ++i) {
      S acc(0);
      for (std::size_t j = 0; j < n; ++j) acc += weff(i, j) * x[j];
      h[i] = acc;
    }
    return h;
  }
  std::vector<S> ax(r, S(0));
  for (std::size_t c = 0; c < r; ++c) {
    S acc(0);
    for (std::size_t j = 0; j < n; ++j) acc += st.a(c, j) * x[j];
    ax[c] = acc;
  }
  const S g = S(real_of_t<S>(st.gamma));
  for (std::size_t i = 0; i < m; ++i) {
    S acc(0);
    for (std::size_t j = 0; j < n; ++j) acc += st.reference(i, j) * x[j];
    for (std::size_t c = 0; c < r; ++c) acc += g * st.b(i, c) * ax[c];
    h[i] = acc;
  }
  return h;
}

template <typename To, typename From>
AdapterState<To> adapter_cast(const AdapterState<From>& st) {
  AdapterState<To> out;
  out.variant = st.variant;
  out.reference = matrix_cast<To>(st.reference);
  out.b = matrix_cast<To>(st.b);
  out.a = matrix_cast<To>(st.a);
  out.magnitude = matrix_cast<To>(st.magnitude);
  out.gamma = st.gamma;
  return out;
}

}  // namespace lrlab
