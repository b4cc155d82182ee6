#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "lrlab/matrix.hpp"

namespace lrlab::ad {

struct Var {
  int i = -1;
  bool valid() const { return i >= 0; }
};

enum class Reduction { token_mean, token_sum };

// Reverse-mode tape over matrix-granularity operations. Instantiating the
// scalar type with Dual<...> and seeding the leaves' derivative parts turns
// the reverse sweep into a forward-over-reverse pass: the derivative part of
// each leaf gradient is then the Hessian-vector product.
template <typename T>
class Tape {
 public:
  using Mat = Matrix<T>;
  using Real = real_of_t<T>;

  struct Node {
    Mat value;
    Mat grad;  // allocated by backward()
    bool needs_grad = false;
    std::function<void(Tape&, int)> back;  // nullptr on leaves
  };

  Var leaf(Mat v, bool needs_grad = false) {
    nodes_.push_back(Node{std::move(v), Mat(), needs_grad, nullptr});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }
  Var constant(Mat v) { return leaf(std::move(v), false); }

  const Mat& value(Var x) const { return nodes_[x.i].value; }
  const Mat& grad(Var x) const { return nodes_[x.i].grad; }
  bool needs_grad(Var x) const { return nodes_[x.i].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  // ---- operations -------------------------------------------------------

  // y = x * w^T : the layer map h = W x applied to rows of x.
  Var matmul_nt(Var x, Var w) {
    const Mat &xv = value(x), &wv = value(w);
    if (xv.cols() != wv.cols())
      throw std::invalid_argument("matmul_nt: " + xv.shape_str() + " vs " + wv.shape_str());
    Mat y(xv.rows(), wv.rows());
    gemm_nt_acc(xv, wv, y);
    return make(std::move(y), {x, w}, [x, w](Tape& t, int self) {
      const Mat& g = t.nodes_[self].grad;
      if (t.needs_grad(x)) gemm_nn_acc(g, t.value(w), t.nodes_[x.i].grad);
      if (t.needs_grad(w)) gemm_tn_acc(g, t.value(x), t.nodes_[w.i].grad);
    });
  }

  Var matmul_nn(Var a, Var b) {
    const Mat &av = value(a), &bv = value(b);
    if (av.cols() != bv.rows())
      throw std::invalid_argument("matmul_nn: " + av.shape_str() + " vs " + bv.shape_str());
    Mat y(av.rows(), bv.cols());
    gemm_nn_acc(av, bv, y);
    return make(std::move(y), {a, b}, [a, b](Tape& t, int self) {
      const Mat& g = t.nodes_[self].grad;
      if (t.needs_grad(a)) gemm_nt_acc(g, t.value(b), t.nodes_[a.i].grad);
      if (t.needs_grad(b)) gemm_tn_acc(t.value(a), g, t.nodes_[b.i].grad);
    });
  }

  Var add(Var a, Var b) {
    Mat y = value(a);
    check_same(y, value(b), "add");
    for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] += value(b).data()[i];
    return make(std::move(y), {a, b}, [a, b](Tape& t, int self) {
      const Mat& g = t.nodes_[self].grad;
      t.accumulate(a, g);
      t.accumulate(b, g);
    });
  }

  Var sub(Var a, Var b) {
    Mat y = value(a);
    check_same(y, value(b), "sub");
    for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] -= value(b).data()[i];
    return make(std::move(y), {a, b}, [a, b](Tape& t, int self) {
      const Mat& g = t.nodes_[self].grad;
      t.accumulate(a, g);
      if (t.needs_grad(b)) {
        Mat& gb = t.nodes_[b.i].grad;
        for (std::size_t i = 0; i < g.size(); ++i) gb.data()[i] -= g.data()[i];
      }
    });
  }

  Var hadamard(Var a, Var b) {
    Mat y = value(a);
    check_same(y, value(b), "hadamard");
    for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] *= value(b).data()[i];
    return make(std::move(y), {a, b}, [a, b](Tape& t, int self) {
      const Mat& g = t.nodes_[self].grad;
      if (t.needs_grad(a)) {
        Mat& ga = t.nodes_[a.i].grad;
        const Mat& bv = t.value(b);
        for (std::size_t i = 0; i < g.size(); ++i)
          ga.data()[i] += g.data()[i] * bv.data()[i];
      }
      if (t.needs_grad(b)) {
        Mat& gb = t.nodes_[b.i].grad;
        const Mat& av = t.value(a);
        for (std::size_t i = 0; i < g.size(); ++i)
          gb.data()[i] += g.data()[i] * av.data()[i];
      }
    });
  }

  // Elementwise division, same shapes (used by the magnitude/direction ratio).
  Var divide(Var a, Var b) {
    Mat y = value(a);
    check_same(y, value(b), "divide");
    for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] /= value(b).data()[i];
    return make(std::move(y), {a, b}, [a, b](Tape& t, int self) {
      const Mat& g = t.nodes_[self].grad;
      const Mat& yv = t.nodes_[self].value;
      const Mat& bv = t.value(b);
      if (t.needs_grad(a)) {
        Mat& ga = t.nodes_[a.i].grad;
        for (std::size_t i = 0; i < g.size(); ++i)
          ga.data()[i] += g.data()[i] / bv.data()[i];
      }
      if (t.needs_grad(b)) {
        Mat& gb = t.nodes_[b.i].grad;
        for (std::size_t i = 0; i < g.size(); ++i)
          gb.data()[i] -= g.data()[i] * yv.data()[i] / bv.data()[i];
      }
    });
  }

  Var scale(Var a, double c) {
    Mat y = value(a);
    const T cc = T(Real(c));
    for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] *= cc;
    return make(std::move(y), {a}, [a, cc](Tape& t, int self) {
      if (!t.needs_grad(a)) return;
      const Mat& g = t.nodes_[self].grad;
      Mat& ga = t.nodes_[a.i].grad;
      for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i] * cc;
    });
  }

  Var silu(Var a) {
    Mat y = value(a);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const T x = y.data()[i];
      y.data()[i] = x / (T(Real(1)) + exp(-x));
    }
    return make(std::move(y), {a}, [a](Tape& t, int self) {
      if (!t.needs_grad(a)) return;
      const Mat& g = t.nodes_[self].grad;
      const Mat& xv = t.value(a);
      Mat& ga = t.nodes_[a.i].grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T x = xv.data()[i];
        const T s = T(Real(1)) / (T(Real(1)) + exp(-x));
        ga.data()[i] += g.data()[i] * s * (T(Real(1)) + x * (T(Real(1)) - s));
      }
    });
  }

  // Row-wise RMS normalization with a learned gain (1 x d).
  Var rmsnorm(Var x, Var gain, double eps = 1e-6) {
    const Mat& xv = value(x);
    const Mat& gv = value(gain);
    const std::size_t d = xv.cols();
    if (gv.rows() != 1 || gv.cols() != d)
      throw std::invalid_argument("rmsnorm: gain shape " + gv.shape_str());
    Mat y(xv.rows(), d);
    for (std::size_t r = 0; r < xv.rows(); ++r) {
      T ms(Real(0));
      const T* xr = xv.row(r);
      for (std::size_t j = 0; j < d; ++j) ms += xr[j] * xr[j];
      ms = ms * T(Real(1.0 / double(d)));
      const T inv = T(Real(1)) / sqrt(ms + T(Real(eps)));
      T* yr = y.row(r);
      for (std::size_t j = 0; j < d; ++j) yr[j] = xr[j] * inv * gv.data()[j];
    }
    return make(std::move(y), {x, gain}, [x, gain, eps](Tape& t, int self) {
      const Mat& g = t.nodes_[self].grad;
      const Mat& xv = t.value(x);
      const Mat& gv = t.value(gain);
      const std::size_t d = xv.cols();
      for (std::size_t r = 0; r < xv.rows(); ++r) {
        const T* xr = xv.row(r);
        const T* gr = g.row(r);
        T ms(Real(0));
        for (std::size_t j = 0; j < d; ++j) ms += xr[j] * xr[j];
        ms = ms * T(Real(1.0 / double(d)));
        const T inv = T(Real(1)) / sqrt(ms + T(Real(eps)));
        if (t.needs_grad(x)) {
          // dX = inv*(g.*gain) - inv^3 * x * mean((g.*gain).*x)
          T s(Real(0));
          for (std::size_t j = 0; j < d; ++j) s += gr[j] * gv.data()[j] * xr[j];
          s = s * T(Real(1.0 / double(d)));
          const T inv3 = inv * inv * inv;
          T* gx = t.nodes_[x.i].grad.row(r);
          for (std::size_t j = 0; j < d; ++j)
            gx[j] += inv * gr[j] * gv.data()[j] - inv3 * xr[j] * s;
        }
        if (t.needs_grad(gain)) {
          T* gg = t.nodes_[gain.i].grad.data();
          for (std::size_t j = 0; j < d; ++j) gg[j] += gr[j] * xr[j] * inv;
        }
      }
    });
  }

  // Gather rows of `table` by index; the embedding/position lookup.
  Var rows_gather(Var table, std::vector<int> ids) {
    const Mat& tv = value(table);
    Mat y(ids.size(), tv.cols());
    for (std::size_t r = 0; r < ids.size(); ++r) {
      const int id = ids[r];
      if (id < 0 || static_cast<std::size_t>(id) >= tv.rows())
        throw std::out_of_range("rows_gather: id " + std::to_string(id));
      for (std::size_t j = 0; j < tv.cols(); ++j) y(r, j) = tv(id, j);
    }
    return make(std::move(y), {table},
                [table, ids = std::move(ids)](Tape& t, int self) {
                  if (!t.needs_grad(table)) return;
                  const Mat& g = t.nodes_[self].grad;
                  Mat& gt = t.nodes_[table.i].grad;
                  for (std::size_t r = 0; r < ids.size(); ++r)
                    for (std::size_t j = 0; j < g.cols(); ++j)
                      gt(ids[r], j) += g(r, j);
                });
  }

  // Causal multi-head attention over (batch*seqlen) x d activations.
  Var causal_attention(Var q, Var k, Var v, std::size_t batch, std::size_t seqlen,
                       std::size_t heads) {
    const Mat& qv = value(q);
    const std::size_t d = qv.cols();
    if (d % heads != 0) throw std::invalid_argument("attention: d % heads != 0");
    const std::size_t dh = d / heads;
    const Real rscale = Real(1.0 / std::sqrt(double(dh)));
    const T tscale = T(rscale);

    // Per (batch, head) softmax matrices, kept for the backward pass.
    auto probs = std::make_shared<std::vector<Mat>>();
    probs->reserve(batch * heads);
    Mat y(qv.rows(), d);
    const Mat& kv = value(k);
    const Mat& vv = value(v);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t h = 0; h < heads; ++h) {
        Mat p(seqlen, seqlen);
        for (std::size_t i = 0; i < seqlen; ++i) {
          const T* qr = qv.row(b * seqlen + i) + h * dh;
          // scores for j <= i
          T mx(Real(0));
          bool first = true;
          std::vector<T> srow(i + 1);
          for (std::size_t j = 0; j <= i; ++j) {
            const T* kr = kv.row(b * seqlen + j) + h * dh;
            T acc(Real(0));
            for (std::size_t c = 0; c < dh; ++c) acc += qr[c] * kr[c];
            acc = acc * tscale;
            srow[j] = acc;
            if (first || value_part(acc) > value_part(mx)) mx = acc;
            first = false;
          }
          T denom(Real(0));
          for (std::size_t j = 0; j <= i; ++j) {
            srow[j] = exp(srow[j] - mx);
            denom += srow[j];
          }
          T* pr = p.row(i);
          for (std::size_t j = 0; j <= i; ++j) pr[j] = srow[j] / denom;
          // output row
          T* yr = y.row(b * seqlen + i) + h * dh;
          for (std::size_t c = 0; c < dh; ++c) yr[c] = T(Real(0));
          for (std::size_t j = 0; j <= i; ++j) {
            const T* vr = vv.row(b * seqlen + j) + h * dh;
            const T pij = pr[j];
            for (std::size_t c = 0; c < dh; ++c) yr[c] += pij * vr[c];
          }
        }
        probs->push_back(std::move(p));
      }
    }
    return make(std::move(y), {q, k, v},
                [q, k, v, batch, seqlen, heads, dh, tscale, probs](Tape& t, int self) {
                  const Mat& g = t.nodes_[self].grad;
                  const Mat& qv = t.value(q);
                  const Mat& kv = t.value(k);
                  const Mat& vv = t.value(v);
                  const bool nq = t.needs_grad(q), nk = t.needs_grad(k), nv = t.needs_grad(v);
                  for (std::size_t b = 0; b < batch; ++b) {
                    for (std::size_t h = 0; h < heads; ++h) {
                      const Mat& p = (*probs)[b * heads + h];
                      for (std::size_t i = 0; i < seqlen; ++i) {
                        const T* gr = g.row(b * seqlen + i) + h * dh;
                        const T* pr = p.row(i);
                        // dP[i,j] = g_i . v_j ; dS via softmax jacobian
                        std::vector<T> dp(i + 1);
                        T dot(Real(0));
                        for (std::size_t j = 0; j <= i; ++j) {
                          const T* vr = vv.row(b * seqlen + j) + h * dh;
                          T acc(Real(0));
                          for (std::size_t c = 0; c < dh; ++c) acc += gr[c] * vr[c];
                          dp[j] = acc;
                          dot += acc * pr[j];
                        }
                        const T* qr = qv.row(b * seqlen + i) + h * dh;
                        for (std::size_t j = 0; j <= i; ++j) {
                          const T ds = pr[j] * (dp[j] - dot) * tscale;
                          const T* kr = kv.row(b * seqlen + j) + h * dh;
                          if (nq) {
                            T* gq = t.nodes_[q.i].grad.row(b * seqlen + i) + h * dh;
                            for (std::size_t c = 0; c < dh; ++c) gq[c] += ds * kr[c];
                          }
                          if (nk) {
                            T* gk = t.nodes_[k.i].grad.row(b * seqlen + j) + h * dh;
                            for (std::size_t c = 0; c < dh; ++c) gk[c] += ds * qr[c];
                          }
                          if (nv) {
                            T* gv2 = t.nodes_[v.i].grad.row(b * seqlen + j) + h * dh;
                            const T pij = pr[j];
                            for (std::size_t c = 0; c < dh; ++c) gv2[c] += pij * gr[c];
                          }
                        }
                      }
                    }
                  }
                });
  }

  // Masked next-token cross entropy. logits row (b*seqlen + t) scores the
  // token at position t+1; positions with mask true (and t >= 1) contribute.
  // Returns a 1x1 scalar node; *count_out (optional) receives the number of
  // supervised tokens.
  Var masked_ce(Var logits, const std::vector<int>& ids,
                const std::vector<std::uint8_t>& mask, std::size_t batch,
                std::size_t seqlen, Reduction red, std::size_t* count_out = nullptr) {
    const Mat& lv = value(logits);
    const std::size_t vocab = lv.cols();
    auto items = std::make_shared<std::vector<std::pair<std::size_t, int>>>();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t t = 1; t < seqlen; ++t)
        if (mask[b * seqlen + t])
          items->push_back({b * seqlen + t - 1, ids[b * seqlen + t]});
    const std::size_t count = items->size();
    if (count_out) *count_out = count;
    if (count == 0 && red == Reduction::token_mean)
      throw std::invalid_argument("masked_ce: no supervised tokens for token_mean");

    T total(Real(0));
    for (auto& [row, target] : *items) {
      const T* lr = lv.row(row);
      T mx = lr[0];
      for (std::size_t j = 1; j < vocab; ++j)
        if (value_part(lr[j]) > value_part(mx)) mx = lr[j];
      T denom(Real(0));
      for (std::size_t j = 0; j < vocab; ++j) denom += exp(lr[j] - mx);
      total += (mx + log(denom)) - lr[target];
    }
    const double inv_count = count ? 1.0 / double(count) : 0.0;
    if (red == Reduction::token_mean) total = total * T(Real(inv_count));

    Mat y(1, 1);
    y(0, 0) = total;
    const double w = (red == Reduction::token_mean) ? inv_count : 1.0;
    return make(std::move(y), {logits}, [logits, items, w](Tape& t, int self) {
      if (!t.needs_grad(logits)) return;
      const T g = t.nodes_[self].grad(0, 0) * T(Real(w));
      const Mat& lv = t.value(logits);
      Mat& gl = t.nodes_[logits.i].grad;
      const std::size_t vocab = lv.cols();
      std::vector<T> prob(vocab);
      for (auto& [row, target] : *items) {
        const T* lr = lv.row(row);
        T mx = lr[0];
        for (std::size_t j = 1; j < vocab; ++j)
          if (value_part(lr[j]) > value_part(mx)) mx = lr[j];
        T denom(Real(0));
        for (std::size_t j = 0; j < vocab; ++j) {
          prob[j] = exp(lr[j] - mx);
          denom += prob[j];
        }
        T* gr = gl.row(row);
        for (std::size_t j = 0; j < vocab; ++j) gr[j] += g * (prob[j] / denom);
        gr[target] -= g;
      }
    });
  }

  // Column Euclidean norms as a 1 x n node (the DoRA denominator).
  Var colnorms(Var w) {
    const Mat& wv = value(w);
    Mat y(1, wv.cols());
    for (std::size_t j = 0; j < wv.cols(); ++j) {
      T acc(Real(0));
      for (std::size_t i = 0; i < wv.rows(); ++i) acc += wv(i, j) * wv(i, j);
      if (value_part(acc) == Real(0))
        throw std::runtime_error("colnorms: zero column " + std::to_string(j));
      y(0, j) = sqrt(acc);
    }
    return make(std::move(y), {w}, [w](Tape& t, int self) {
      if (!t.needs_grad(w)) return;
      const Mat& g = t.nodes_[self].grad;
      const Mat& yv = t.nodes_[self].value;
      const Mat& wv = t.value(w);
      Mat& gw = t.nodes_[w.i].grad;
      for (std::size_t i = 0; i < wv.rows(); ++i)
        for (std::size_t j = 0; j < wv.cols(); ++j)
          gw(i, j) += g(0, j) * wv(i, j) / yv(0, j);
    });
  }

  // Scale column j of w by s(0, j).
  Var colscale(Var w, Var s) {
    const Mat& wv = value(w);
    const Mat& sv = value(s);
    if (sv.rows() != 1 || sv.cols() != wv.cols())
      throw std::invalid_argument("colscale: scale shape " + sv.shape_str());
    Mat y = wv;
    for (std::size_t i = 0; i < y.rows(); ++i)
      for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) *= sv(0, j);
    return make(std::move(y), {w, s}, [w, s](Tape& t, int self) {
      const Mat& g = t.nodes_[self].grad;
      const Mat& wv = t.value(w);
      const Mat& sv = t.value(s);
      if (t.needs_grad(w)) {
        Mat& gw = t.nodes_[w.i].grad;
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) gw(i, j) += g(i, j) * sv(0, j);
      }
      if (t.needs_grad(s)) {
        Mat& gs = t.nodes_[s.i].grad;
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) gs(0, j) += g(i, j) * wv(i, j);
      }
    });
  }

  // sum(a .* b), a 1x1 node. Building block for quadratic test losses.
  Var dot_sum(Var a, Var b) {
    const Mat& av = value(a);
    check_same(av, value(b), "dot_sum");
    T acc(Real(0));
    for (std::size_t i = 0; i < av.size(); ++i)
      acc += av.data()[i] * value(b).data()[i];
    Mat y(1, 1);
    y(0, 0) = acc;
    return make(std::move(y), {a, b}, [a, b](Tape& t, int self) {
      const T g = t.nodes_[self].grad(0, 0);
      if (t.needs_grad(a)) {
        Mat& ga = t.nodes_[a.i].grad;
        const Mat& bv = t.value(b);
        for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] += g * bv.data()[i];
      }
      if (t.needs_grad(b)) {
        Mat& gb = t.nodes_[b.i].grad;
        const Mat& av2 = t.value(a);
        for (std::size_t i = 0; i < gb.size(); ++i) gb.data()[i] += g * av2.data()[i];
      }
    });
  }

  Var sum(Var a) {
    const Mat& av = value(a);
    T acc(Real(0));
    for (std::size_t i = 0; i < av.size(); ++i) acc += av.data()[i];
    Mat y(1, 1);
    y(0, 0) = acc;
    return make(std::move(y), {a}, [a](Tape& t, int self) {
      if (!t.needs_grad(a)) return;
      const T g = t.nodes_[self].grad(0, 0);
      Mat& ga = t.nodes_[a.i].grad;
      for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] += g;
    });
  }

  // ---- reverse sweep -----------------------------------------------------

  void backward(Var loss) {
    const Mat& lv = value(loss);
    if (lv.rows() != 1 || lv.cols() != 1)
      throw std::invalid_argument("backward: loss must be 1x1");
    for (Node& n : nodes_)
      if (n.needs_grad) {
        n.grad = Mat(n.value.rows(), n.value.cols());
      }
    if (!nodes_[loss.i].needs_grad)
      throw std::invalid_argument("backward: loss does not depend on any leaf");
    nodes_[loss.i].grad(0, 0) = T(Real(1));
    for (int i = loss.i; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.needs_grad && n.back) n.back(*this, i);
    }
  }

 private:
  friend struct TapeAccess;
  std::vector<Node> nodes_;

  static void check_same(const Mat& a, const Mat& b, const char* op) {
    if (!a.same_shape(b))
      throw std::invalid_argument(std::string(op) + ": shape " + a.shape_str() +
                                  " vs " + b.shape_str());
  }

  void accumulate(Var x, const Mat& g) {
    if (!needs_grad(x)) return;
    Mat& gx = nodes_[x.i].grad;
    for (std::size_t i = 0; i < g.size(); ++i) gx.data()[i] += g.data()[i];
  }

  Var make(Mat value, std::initializer_list<Var> inputs,
           std::function<void(Tape&, int)> back) {
    bool ng = false;
    for (Var v : inputs) ng = ng || nodes_[v.i].needs_grad;
    nodes_.push_back(Node{std::move(value), Mat(), ng, ng ? std::move(back) : nullptr});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }
};

}  // namespace lrlab::ad
