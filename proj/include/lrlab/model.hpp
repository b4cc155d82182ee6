#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lrlab/adapters.hpp"
#include "lrlab/matrix.hpp"
#include "lrlab/optimizer.hpp"
#include "lrlab/param_vector.hpp"
#include "lrlab/random.hpp"
#include "lrlab/tape.hpp"
#include "lrlab/tasks.hpp"

namespace lrlab {

enum MatrixType : int { MT_Q = 0, MT_K, MT_V, MT_O, MT_Gate, MT_Up, MT_Down };
constexpr int kNumMatrixTypes = 7;

inline const char* matrix_type_name(int mt) {
  static const char* names[kNumMatrixTypes] = {"Q", "K", "V", "O", "Gate", "Up", "Down"};
  if (mt < 0 || mt >= kNumMatrixTypes) throw std::invalid_argument("bad matrix type");
  return names[mt];
}

inline int matrix_type_from_name(const std::string& s) {
  for (int i = 0; i < kNumMatrixTypes; ++i)
    if (s == matrix_type_name(i)) return i;
  throw std::invalid_argument("unknown matrix type: " + s);
}

struct ModelConfig {
  std::size_t num_layers = 4;
  std::size_t d_model = 64;
  std::size_t num_heads = 4;
  std::size_t d_ff = 128;
  std::size_t vocab_size = 32;
  std::size_t max_seq_len = 48;
  std::array<bool, kNumMatrixTypes> placement = {true, true, true, true, true, true, true};

  void validate() const {
    if (num_layers < 1 || d_model < 1 || num_heads < 1 || d_ff < 1 || vocab_size < 2 ||
        max_seq_len < 2)
      throw std::invalid_argument("ModelConfig: zero-sized dimension");
    if (d_model % num_heads != 0)
      throw std::invalid_argument("ModelConfig: d_model not divisible by num_heads");
    bool any = false;
    for (bool p : placement) any = any || p;
    if (!any) throw std::invalid_argument("ModelConfig: empty adapter placement");
  }

  // Weight shape of each projection under the h = W x convention.
  std::pair<std::size_t, std::size_t> proj_shape(int mt) const {
    switch (mt) {
      case MT_Gate:
      case MT_Up: return {d_ff, d_model};
      case MT_Down: return {d_model, d_ff};
      default: return {d_model, d_model};
    }
  }
};

// Pre-norm decoder: learned absolute positions, RMS norms, causal MHA, gated
// (silu) MLP, no biases. Immutable after construction.
template <typename S>
struct BaseModel {
  ModelConfig config;
  Matrix<S> embed;       // vocab x d
  Matrix<S> pos;         // max_seq_len x d
  Matrix<S> head;        // vocab x d
  Matrix<S> final_norm;  // 1 x d
  struct Layer {
    Matrix<S> attn_norm, mlp_norm;            // 1 x d
    std::array<Matrix<S>, kNumMatrixTypes> proj;
  };
  std::vector<Layer> layers;
};

template <typename To, typename From>
BaseModel<To> model_cast(const BaseModel<From>& m) {
  BaseModel<To> out;
  out.config = m.config;
  out.embed = matrix_cast<To>(m.embed);
  out.pos = matrix_cast<To>(m.pos);
  out.head = matrix_cast<To>(m.head);
  out.final_norm = matrix_cast<To>(m.final_norm);
  out.layers.reserve(m.layers.size());
  for (const auto& l : m.layers) {
    typename BaseModel<To>::Layer nl;
    nl.attn_norm = matrix_cast<To>(l.attn_norm);
    nl.mlp_norm = matrix_cast<To>(l.mlp_norm);
    for (int t = 0; t < kNumMatrixTypes; ++t) nl.proj[t] = matrix_cast<To>(l.proj[t]);
    out.layers.push_back(std::move(nl));
  }
  return out;
}

// FNV-1a over all weight bytes in a fixed traversal order; the frozen-base
// invariant and run provenance both key on this.
template <typename S>
std::uint64_t base_model_hash(const BaseModel<S>& m) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto eat = [&h](const Matrix<S>& w) {
    h = fnv1a64(w.data(), w.size() * sizeof(S), h);
  };
  eat(m.embed);
  eat(m.pos);
  eat(m.head);
  eat(m.final_norm);
  for (const auto& l : m.layers) {
    eat(l.attn_norm);
    eat(l.mlp_norm);
    for (const auto& p : l.proj) eat(p);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Adapter set: one state per placed (layer, matrix type).

template <typename S>
struct AdapterSet {
  AdapterConfig config;
  // states[layer][type], empty optional where not placed
  std::vector<std::array<std::optional<AdapterState<S>>, kNumMatrixTypes>> states;

  static std::string block_id(std::size_t layer, int mt) {
    return "L" + std::to_string(layer) + "." + matrix_type_name(mt);
  }

  template <typename Fn>
  void for_each(Fn&& fn) {
    for (std::size_t l = 0; l < states.size(); ++l)
      for (int t = 0; t < kNumMatrixTypes; ++t)
        if (states[l][t]) fn(l, t, *states[l][t]);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (std::size_t l = 0; l < states.size(); ++l)
      for (int t = 0; t < kNumMatrixTypes; ++t)
        if (states[l][t]) fn(l, t, *states[l][t]);
  }
};

inline AdapterSet<double> init_adapter_set(const BaseModel<double>& model,
                                           const AdapterConfig& cfg) {
  AdapterSet<double> set;
  set.config = cfg;
  set.states.resize(model.config.num_layers);
  for (std::size_t l = 0; l < model.config.num_layers; ++l) {
    for (int t = 0; t < kNumMatrixTypes; ++t) {
      if (!model.config.placement[t]) continue;
      AdapterConfig c = cfg;
      c.seed = derive_seed(cfg.seed, hash_str(AdapterSet<double>::block_id(l, t)));
      set.states[l][t] = init_adapter(model.layers[l].proj[t], c);
    }
  }
  return set;
}

template <typename To, typename From>
AdapterSet<To> adapter_set_cast(const AdapterSet<From>& s) {
  AdapterSet<To> out;
  out.config = s.config;
  out.states.resize(s.states.size());
  s.for_each([&](std::size_t l, int t, const AdapterState<From>& st) {
    out.states[l][t] = adapter_cast<To>(st);
  });
  return out;
}

// Trainable adapter parameters as a flat block vector: L{l}.{T}.B / .A / .mag.
template <typename S>
ParamVector adapter_param_vector(const AdapterSet<S>& set) {
  ParamVector pv;
  set.for_each([&](std::size_t l, int t, const AdapterState<S>& st) {
    const std::string base = AdapterSet<S>::block_id(l, t);
    pv.add_block(base + ".B", matrix_cast<double>(st.b));
    pv.add_block(base + ".A", matrix_cast<double>(st.a));
    if (!st.magnitude.empty()) pv.add_block(base + ".mag", matrix_cast<double>(st.magnitude));
  });
  return pv;
}

template <typename S>
void set_adapter_params(AdapterSet<S>& set, const ParamVector& pv) {
  set.for_each([&](std::size_t l, int t, AdapterState<S>& st) {
    const std::string base = AdapterSet<S>::block_id(l, t);
    st.b = matrix_cast<S>(pv.block_matrix(pv.block_index(base + ".B")));
    st.a = matrix_cast<S>(pv.block_matrix(pv.block_index(base + ".A")));
    if (!st.magnitude.empty())
      st.magnitude = matrix_cast<S>(pv.block_matrix(pv.block_index(base + ".mag")));
  });
}

// ---------------------------------------------------------------------------
// Tape graph construction.

struct GraphOptions {
  bool base_requires_grad = false;
  bool adapters_require_grad = false;
  int only_layer = -1;  // when >= 0, restrict adapter grads to this block
  int only_type = -1;
  bool with_input_bias = false;  // adds a zero, grad-enabled input offset
  std::size_t start_layer = 0;   // layers below this get no graph nodes
};

// Tangent seed for one adapter block (Dual tapes only).
template <typename S>
struct BlockTangent {
  std::size_t layer = 0;
  int type = 0;
  Matrix<S> db, da;
};

template <typename TT>
struct ModelGraph {
  const ModelConfig* cfg = nullptr;
  ad::Var embed, pos, head, final_norm, input_bias;
  struct L {
    ad::Var attn_norm, mlp_norm;
    std::array<ad::Var, kNumMatrixTypes> w{};
    std::array<bool, kNumMatrixTypes> has_adapter{};
    std::array<AdapterVariant, kNumMatrixTypes> variant{};
    std::array<ad::Var, kNumMatrixTypes> a_ref{}, a_b{}, a_a{}, a_mag{};
    std::array<double, kNumMatrixTypes> gamma{};
  };
  std::vector<L> layers;
  // grad-enabled leaves in ParamVector block order (adapter or base params)
  std::vector<std::pair<std::string, ad::Var>> grad_leaves;
};

namespace detail {

template <typename TT, typename S>
Matrix<TT> promote(const Matrix<S>& v, const Matrix<S>* dot = nullptr) {
  if constexpr (std::is_same_v<TT, S>) {
    (void)dot;
    return v;
  } else if constexpr (is_dual_v<TT>) {
    static_assert(std::is_same_v<real_of_t<TT>, S>);
    Matrix<TT> out(v.rows(), v.cols());
    for (std::size_t i = 0; i < v.size(); ++i)
      out.data()[i] = TT(v.data()[i], dot ? dot->data()[i] : S(0));
    return out;
  } else {
    return matrix_cast<TT>(v);
  }
}

}  // namespace detail

template <typename TT, typename S>
ModelGraph<TT> make_model_graph(ad::Tape<TT>& tape, const BaseModel<S>& model,
                                std::type_identity_t<const AdapterSet<S>*> adapters,
                                const GraphOptions& opt = {},
                                std::type_identity_t<const BlockTangent<S>*> tangent =
                                    nullptr) {
  ModelGraph<TT> g;
  g.cfg = &model.config;
  const bool bg = opt.base_requires_grad;

  auto base_leaf = [&](const std::string& id, const Matrix<S>& w) {
    ad::Var v = tape.leaf(detail::promote<TT>(w), bg);
    if (bg) g.grad_leaves.push_back({id, v});
    return v;
  };
  g.embed = base_leaf("embed", model.embed);
  g.pos = base_leaf("pos", model.pos);
  g.head = base_leaf("head", model.head);
  g.final_norm = base_leaf("final_norm", model.final_norm);

  g.layers.resize(model.config.num_layers);
  for (std::size_t l = 0; l < model.config.num_layers; ++l) {
    if (l < opt.start_layer) continue;  // fed by a precomputed activation
    auto& gl = g.layers[l];
    const std::string lp = "L" + std::to_string(l) + ".";
    gl.attn_norm = base_leaf(lp + "attn_norm", model.layers[l].attn_norm);
    for (int t = 0; t < kNumMatrixTypes; ++t) {
      const bool adapted = adapters && l < adapters->states.size() &&
                           adapters->states[l][t].has_value();
      if (!adapted) {
        gl.w[t] = base_leaf(lp + matrix_type_name(t), model.layers[l].proj[t]);
        continue;
      }
      const AdapterState<S>& st = *adapters->states[l][t];
      gl.has_adapter[t] = true;
      gl.variant[t] = st.variant;
      gl.gamma[t] = st.gamma;
      gl.a_ref[t] = tape.constant(detail::promote<TT>(st.reference));
      const bool target = opt.adapters_require_grad &&
                          (opt.only_layer < 0 ||
                           (static_cast<std::size_t>(opt.only_layer) == l &&
                            opt.only_type == t));
      const bool seeded = tangent && tangent->layer == l && tangent->type == t;
      gl.a_b[t] = tape.leaf(
          detail::promote<TT>(st.b, seeded ? &tangent->db : nullptr), target);
      gl.a_a[t] = tape.leaf(
          detail::promote<TT>(st.a, seeded ? &tangent->da : nullptr), target);
      const std::string bid = lp + matrix_type_name(t);
      if (target) {
        g.grad_leaves.push_back({bid + ".B", gl.a_b[t]});
        g.grad_leaves.push_back({bid + ".A", gl.a_a[t]});
      }
      if (st.variant == AdapterVariant::DoRA) {
        gl.a_mag[t] = tape.leaf(detail::promote<TT>(st.magnitude), target);
        if (target) g.grad_leaves.push_back({bid + ".mag", gl.a_mag[t]});
      }
    }
    gl.mlp_norm = base_leaf(lp + "mlp_norm", model.layers[l].mlp_norm);
  }
  return g;
}

// Projection with optional adapter, applied to rows of x.
template <typename TT>
ad::Var graph_projection(ad::Tape<TT>& t, const ModelGraph<TT>& g, std::size_t layer,
                         int mt, ad::Var x) {
  const auto& gl = g.layers[layer];
  if (!gl.has_adapter[mt]) return t.matmul_nt(x, gl.w[mt]);
  if (gl.variant[mt] == AdapterVariant::DoRA) {
    ad::Var wsum = t.add(gl.a_ref[mt], t.matmul_nn(gl.a_b[mt], gl.a_a[mt]));
    ad::Var ratio = t.divide(gl.a_mag[mt], t.colnorms(wsum));
    ad::Var weff = t.colscale(wsum, ratio);
    return t.scale(t.matmul_nt(x, weff), gl.gamma[mt]);
  }
  ad::Var low = t.matmul_nt(t.matmul_nt(x, gl.a_a[mt]), gl.a_b[mt]);
  return t.add(t.matmul_nt(x, gl.a_ref[mt]), t.scale(low, gl.gamma[mt]));
}

// One pre-norm transformer block: attention then gated MLP, both residual.
template <typename TT>
ad::Var graph_layer_block(ad::Tape<TT>& t, const ModelGraph<TT>& g, std::size_t l,
                          const Batch& batch, ad::Var x) {
  ad::Var h = t.rmsnorm(x, g.layers[l].attn_norm);
  ad::Var q = graph_projection(t, g, l, MT_Q, h);
  ad::Var k = graph_projection(t, g, l, MT_K, h);
  ad::Var v = graph_projection(t, g, l, MT_V, h);
  ad::Var attn =
      t.causal_attention(q, k, v, batch.batch, batch.seqlen, g.cfg->num_heads);
  x = t.add(x, graph_projection(t, g, l, MT_O, attn));
  ad::Var h2 = t.rmsnorm(x, g.layers[l].mlp_norm);
  ad::Var gate = t.silu(graph_projection(t, g, l, MT_Gate, h2));
  ad::Var up = graph_projection(t, g, l, MT_Up, h2);
  return t.add(x, graph_projection(t, g, l, MT_Down, t.hadamard(gate, up)));
}

// Forward from the input of `start_layer` given activations x; runs the
// remaining blocks, the final norm, and the head.
template <typename TT>
ad::Var graph_forward_from(ad::Tape<TT>& t, const ModelGraph<TT>& g, const Batch& batch,
                           std::size_t start_layer, ad::Var x) {
  for (std::size_t l = start_layer; l < g.cfg->num_layers; ++l)
    x = graph_layer_block(t, g, l, batch, x);
  return t.matmul_nt(t.rmsnorm(x, g.final_norm), g.head);
}

template <typename TT>
ad::Var graph_embed(ad::Tape<TT>& t, ModelGraph<TT>& g, const Batch& batch) {
  const ModelConfig& cfg = *g.cfg;
  if (batch.seqlen > cfg.max_seq_len)
    throw std::invalid_argument("forward: sequence length " + std::to_string(batch.seqlen) +
                                " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  std::vector<int> posids(batch.batch * batch.seqlen);
  for (std::size_t b = 0; b < batch.batch; ++b)
    for (std::size_t i = 0; i < batch.seqlen; ++i)
      posids[b * batch.seqlen + i] = static_cast<int>(i);
  ad::Var x = t.add(t.rows_gather(g.embed, batch.ids), t.rows_gather(g.pos, posids));
  if (g.input_bias.valid()) x = t.add(x, g.input_bias);
  return x;
}

template <typename TT>
ad::Var graph_forward(ad::Tape<TT>& t, ModelGraph<TT>& g, const Batch& batch,
                      const GraphOptions& opt = {}) {
  if (opt.with_input_bias) {
    g.input_bias = t.leaf(Matrix<TT>(batch.batch * batch.seqlen, g.cfg->d_model), true);
    g.grad_leaves.push_back({"input_bias", g.input_bias});
  }
  return graph_forward_from(t, g, batch, 0, graph_embed(t, g, batch));
}

// Activation values entering each layer (num_layers entries). Lower-layer
// activations do not depend on any one block's adapter parameters, so these
// can be cached and re-fed via graph_forward_from when differentiating a
// single block.
template <typename S>
std::vector<Matrix<S>> forward_layer_inputs(const BaseModel<S>& model,
                                            const AdapterSet<S>* adapters,
                                            const Batch& batch) {
  ad::Tape<S> tape;
  ModelGraph<S> g = make_model_graph(tape, model, adapters);
  ad::Var x = graph_embed(tape, g, batch);
  std::vector<Matrix<S>> inputs;
  inputs.reserve(model.config.num_layers);
  for (std::size_t l = 0; l < model.config.num_layers; ++l) {
    inputs.push_back(tape.value(x));
    x = graph_layer_block(tape, g, l, batch, x);
  }
  return inputs;
}

// Gradients of the grad-enabled leaves, in a fresh ParamVector.
template <typename TT>
ParamVector collect_grads(const ad::Tape<TT>& tape, const ModelGraph<TT>& g) {
  ParamVector pv;
  for (const auto& [id, var] : g.grad_leaves) {
    const auto& gm = tape.grad(var);
    DenseMatrix m(gm.rows(), gm.cols());
    for (std::size_t i = 0; i < gm.size(); ++i)
      m.data()[i] = static_cast<double>(value_part(gm.data()[i]));
    pv.add_block(id, m);
  }
  return pv;
}

// ---------------------------------------------------------------------------
// Public operations.

template <typename S>
Matrix<S> forward_logits(const BaseModel<S>& model, const AdapterSet<S>* adapters,
                         const Batch& batch) {
  ad::Tape<S> tape;
  ModelGraph<S> g = make_model_graph(tape, model, adapters);
  ad::Var logits = graph_forward(tape, g, batch);
  const Matrix<S>& out = tape.value(logits);
  if (!out.all_finite()) throw std::runtime_error("forward_logits: non-finite logits");
  return out;
}

struct CeLoss {
  double value = 0;
  std::size_t supervised_tokens = 0;
};

// Next-token cross entropy over mask-true positions. token_mean is exactly
// token_sum divided by the supervised-token count.
template <typename S>
CeLoss masked_ce_loss(const Matrix<S>& logits, const Batch& batch, ad::Reduction red) {
  const std::size_t vocab = logits.cols();
  double total = 0;
  std::size_t count = 0;
  for (std::size_t b = 0; b < batch.batch; ++b) {
    for (std::size_t t = 1; t < batch.seqlen; ++t) {
      if (!batch.mask_at(b, t)) continue;
      const S* row = logits.row(b * batch.seqlen + t - 1);
      double mx = static_cast<double>(value_part(row[0]));
      for (std::size_t j = 1; j < vocab; ++j)
        mx = std::max(mx, static_cast<double>(value_part(row[j])));
      double denom = 0;
      for (std::size_t j = 0; j < vocab; ++j)
        denom += std::exp(static_cast<double>(value_part(row[j])) - mx);
      const double target = static_cast<double>(value_part(row[batch.id_at(b, t)]));
      total += (mx + std::log(denom)) - target;
      ++count;
    }
  }
  if (red == ad::Reduction::token_mean) {
    if (count == 0)
      throw std::invalid_argument("masked_ce_loss: no supervised tokens for token_mean");
    return {total / double(count), count};
  }
  return {total, count};
}

// Greedy decoding: argmax at temperature zero, ties resolved to the lowest id.
template <typename S>
std::vector<int> greedy_decode(const BaseModel<S>& model, const AdapterSet<S>* adapters,
                               const std::vector<int>& prompt, std::size_t gen_len) {
  std::vector<int> tokens = prompt;
  for (std::size_t step = 0; step < gen_len; ++step) {
    Batch b;
    b.batch = 1;
    b.seqlen = tokens.size();
    b.ids = tokens;
    b.mask.assign(tokens.size(), 0);
    Matrix<S> logits = forward_logits(model, adapters, b);
    const S* row = logits.row(tokens.size() - 1);
    int best = 0;
    for (std::size_t j = 1; j < logits.cols(); ++j)
      if (static_cast<double>(value_part(row[j])) >
          static_cast<double>(value_part(row[best])))
        best = static_cast<int>(j);
    tokens.push_back(best);
  }
  return std::vector<int>(tokens.begin() + prompt.size(), tokens.end());
}

template <typename S>
double exact_match_accuracy(const BaseModel<S>& model, const AdapterSet<S>* adapters,
                            const Corpus& corpus) {
  if (corpus.examples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const Example& e : corpus.examples) {
    if (greedy_decode(model, adapters, e.prompt, e.response.size()) == e.response) ++hits;
  }
  return double(hits) / double(corpus.examples.size());
}

// ---------------------------------------------------------------------------
// Base model construction: synthesized spectra, then a brief fixed pretraining
// run so the loss landscape at adapter initialization is non-degenerate.

struct PretrainRecipe {
  std::size_t steps = 200;
  std::size_t batch_size = 16;
  double lr = 3e-3;
  std::size_t pack_len = 22;
  TaskKind task = TaskKind::sequence_copy;
};

inline ParamVector base_param_vector(const BaseModel<double>& m) {
  ParamVector pv;
  pv.add_block("embed", m.embed);
  pv.add_block("pos", m.pos);
  pv.add_block("head", m.head);
  pv.add_block("final_norm", m.final_norm);
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const std::string lp = "L" + std::to_string(l) + ".";
    pv.add_block(lp + "attn_norm", m.layers[l].attn_norm);
    for (int t = 0; t < kNumMatrixTypes; ++t)
      pv.add_block(lp + matrix_type_name(t), m.layers[l].proj[t]);
    pv.add_block(lp + "mlp_norm", m.layers[l].mlp_norm);
  }
  return pv;
}

inline void set_base_params(BaseModel<double>& m, const ParamVector& pv) {
  m.embed = pv.block_matrix(pv.block_index("embed"));
  m.pos = pv.block_matrix(pv.block_index("pos"));
  m.head = pv.block_matrix(pv.block_index("head"));
  m.final_norm = pv.block_matrix(pv.block_index("final_norm"));
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const std::string lp = "L" + std::to_string(l) + ".";
    m.layers[l].attn_norm = pv.block_matrix(pv.block_index(lp + "attn_norm"));
    m.layers[l].mlp_norm = pv.block_matrix(pv.block_index(lp + "mlp_norm"));
    for (int t = 0; t < kNumMatrixTypes; ++t)
      m.layers[l].proj[t] = pv.block_matrix(pv.block_index(lp + matrix_type_name(t)));
  }
}

// Projections with singular spectrum sigma_i = i^(-spectrum_exponent) and
// Haar-random orthogonal factors; embeddings and head are plain Gaussian.
inline BaseModel<double> synthesize_base_weights(const ModelConfig& config,
                                                 std::uint64_t seed,
                                                 double spectrum_exponent) {
  config.validate();
  if (!(spectrum_exponent > 0))
    throw std::invalid_argument("synthesize_base_weights: spectrum_exponent <= 0");
  BaseModel<double> m;
  m.config = config;
  RandomStream rs(derive_seed(seed, hash_str("base-weights")));
  const double emb_std = 1.0 / std::sqrt(double(config.d_model));
  m.embed = rs.gaussian_matrix(config.vocab_size, config.d_model, emb_std);
  m.pos = rs.gaussian_matrix(config.max_seq_len, config.d_model, 0.02);
  m.head = rs.gaussian_matrix(config.vocab_size, config.d_model, emb_std);
  m.final_norm = DenseMatrix(1, config.d_model);
  m.final_norm.fill(1.0);

  m.layers.resize(config.num_layers);
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    auto& layer = m.layers[l];
    layer.attn_norm = DenseMatrix(1, config.d_model);
    layer.attn_norm.fill(1.0);
    layer.mlp_norm = DenseMatrix(1, config.d_model);
    layer.mlp_norm.fill(1.0);
    for (int t = 0; t < kNumMatrixTypes; ++t) {
      auto [rows, cols] = config.proj_shape(t);
      // Orthogonal factors from the SVD of a Gaussian draw.
      SvdFactorization f = svd(rs.gaussian_matrix(rows, cols));
      const std::size_t k = f.s.size();
      DenseMatrix w(rows, cols);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) {
          double acc = 0;
          for (std::size_t c = 0; c < k; ++c) {
            const double sigma = std::pow(double(c + 1), -spectrum_exponent);
            acc += f.u(i, c) * sigma * f.vt(c, j);
          }
          w(i, j) = acc;
        }
      layer.proj[t] = std::move(w);
    }
  }
  return m;
}

inline BaseModel<double> build_base_model(const ModelConfig& config, std::uint64_t seed,
                                          double spectrum_exponent,
                                          const PretrainRecipe& recipe = {}) {
  BaseModel<double> model = synthesize_base_weights(config, seed, spectrum_exponent);
  if (recipe.steps == 0) return model;

  Corpus corpus = generate_synthetic_task(recipe.task, recipe.steps * recipe.batch_size,
                                          derive_seed(seed, hash_str("pretrain-data")));
  BatchPlan plan = build_batches(corpus, recipe.batch_size,
                                 std::min(recipe.pack_len, config.max_seq_len),
                                 derive_seed(seed, hash_str("pretrain-shuffle")));

  ParamVector params = base_param_vector(model);
  OptimizerConfig ocfg;
  OptimizerState ostate;
  ostate.reset(params.size());
  for (std::size_t step = 0; step < recipe.steps && step < plan.batches.size(); ++step) {
    const Batch& batch = plan.batches[step];
    ad::Tape<double> tape;
    GraphOptions opt;
    opt.base_requires_grad = true;
    ModelGraph<double> g = make_model_graph(tape, model, nullptr, opt);
    ad::Var logits = graph_forward(tape, g, batch, opt);
    ad::Var loss = tape.masked_ce(logits, batch.ids, batch.mask, batch.batch,
                                  batch.seqlen, ad::Reduction::token_mean);
    tape.backward(loss);
    ParamVector grads = collect_grads(tape, g);
    optimizer_step(params, grads, ostate, recipe.lr, ocfg);
    set_base_params(model, params);
  }
  return model;
}

}  // namespace lrlab
