#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "lrlab/param_vector.hpp"
#include "lrlab/tape.hpp"

namespace lrlab {

// A loss builder is a callable f(tape, leaves) -> Var usable with any tape
// scalar type; `leaves` holds one Var per ParamVector block, in block order.
// grad() runs it at double; hvp() at Dual<double> (exact second order).

namespace detail {

template <typename T>
void make_leaves(ad::Tape<T>& tape, std::vector<ad::Var>& leaves,
                 const ParamVector& theta, const ParamVector* tangent) {
  leaves.clear();
  for (std::size_t b = 0; b < theta.block_count(); ++b) {
    const auto& blk = theta.block(b);
    Matrix<T> m(blk.rows, blk.cols);
    for (std::size_t j = 0; j < blk.length(); ++j) {
      if constexpr (is_dual_v<T>) {
        using R = real_of_t<T>;
        m.data()[j] = T(R(theta.data()[blk.offset + j]),
                        tangent ? R(tangent->data()[blk.offset + j]) : R(0));
      } else {
        m.data()[j] = T(theta.data()[blk.offset + j]);
      }
    }
    leaves.push_back(tape.leaf(std::move(m), true));
  }
}

}  // namespace detail

// Reverse-mode gradient with the same block structure as theta.
template <typename Builder>
ParamVector grad(Builder&& loss, const ParamVector& theta) {
  ad::Tape<double> tape;
  std::vector<ad::Var> leaves;
  detail::make_leaves<double>(tape, leaves, theta, nullptr);
  ad::Var l = loss(tape, leaves);
  if (!std::isfinite(tape.value(l)(0, 0)))
    throw std::runtime_error("grad: non-finite loss value");
  tape.backward(l);
  ParamVector g = theta.zeros_like();
  for (std::size_t b = 0; b < theta.block_count(); ++b) {
    const auto& blk = theta.block(b);
    const auto& gm = tape.grad(leaves[b]);
    for (std::size_t j = 0; j < blk.length(); ++j) {
      const double x = gm.data()[j];
      if (!std::isfinite(x))
        throw std::runtime_error("grad: non-finite gradient in block " + blk.id);
      g.values()[blk.offset + j] = x;
    }
  }
  return g;
}

// Exact Hessian-vector product by forward-over-reverse: the tape runs on dual
// numbers whose derivative parts are seeded with v; the derivative part of
// the resulting gradient is H(theta) * v.
template <typename Builder>
ParamVector hvp(Builder&& loss, const ParamVector& theta, const ParamVector& v) {
  if (!theta.same_structure(v))
    throw std::invalid_argument("hvp: v structure differs from theta");
  using D = Dual<double>;
  ad::Tape<D> tape;
  std::vector<ad::Var> leaves;
  detail::make_leaves<D>(tape, leaves, theta, &v);
  ad::Var l = loss(tape, leaves);
  if (!std::isfinite(tape.value(l)(0, 0).val))
    throw std::runtime_error("hvp: non-finite loss value");
  tape.backward(l);
  ParamVector out = theta.zeros_like();
  for (std::size_t b = 0; b < theta.block_count(); ++b) {
    const auto& blk = theta.block(b);
    const auto& gm = tape.grad(leaves[b]);
    for (std::size_t j = 0; j < blk.length(); ++j) {
      const D x = gm.data()[j];
      if (!std::isfinite(x.val) || !std::isfinite(x.dot))
        throw std::runtime_error("hvp: non-finite result in block " + blk.id);
      out.values()[blk.offset + j] = x.dot;
    }
  }
  return out;
}

}  // namespace lrlab
