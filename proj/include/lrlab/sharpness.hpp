#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lrlab/model.hpp"
#include "lrlab/threads.hpp"
#include "lrlab/tridiag.hpp"

namespace lrlab {

// ---------------------------------------------------------------------------
// Lanczos estimation of the largest (algebraic) eigenvalue of a symmetric
// operator given only matrix-vector products.

struct LanczosConfig {
  std::size_t max_iters = 100;
  double tolerance = 5e-3;        // absolute |lambda_k - lambda_{k-1}| test
  bool reorthogonalize = true;    // full re-orthogonalization per iteration
  double breakdown_threshold = 1e-8;  // relative to max(1, |alpha_1|)
  std::uint64_t init_vector_seed = 0;

  void validate() const {
    if (max_iters < 1) throw std::invalid_argument("LanczosConfig: max_iters < 1");
    if (!(tolerance > 0)) throw std::invalid_argument("LanczosConfig: tolerance <= 0");
  }
};

struct LanczosResult {
  double lambda = 0;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> ritz_history;  // lambda_max(T_k) per iteration
  bool ritz_monotone = true;         // Cauchy interlacing check
  double basis_max_offdiag = 0;      // max |q_i . q_j|, i != j (if stored)
};

using LinearOperator = std::function<std::vector<double>(const std::vector<double>&)>;

inline LanczosResult lanczos_lambda_max(const LinearOperator& apply, std::size_t dim,
                                        const LanczosConfig& cfg) {
  cfg.validate();
  if (dim < 1) throw std::invalid_argument("lanczos_lambda_max: dim < 1");

  RandomStream rs(cfg.init_vector_seed);
  std::vector<double> q = rs.gaussian_vector(dim);
  {
    double n2 = 0;
    for (double x : q) n2 += x * x;
    const double inv = 1.0 / std::sqrt(n2);
    for (double& x : q) x *= inv;
  }
  std::vector<double> q_prev(dim, 0.0);
  std::vector<std::vector<double>> basis;
  if (cfg.reorthogonalize) basis.push_back(q);

  std::vector<double> alphas, betas;
  double beta_prev = 0;
  double lambda_prev = -std::numeric_limits<double>::infinity();

  LanczosResult res;
  const std::size_t iters = std::min(cfg.max_iters, dim);
  for (std::size_t k = 1; k <= iters; ++k) {
    std::vector<double> v = apply(q);
    if (v.size() != dim) throw std::runtime_error("lanczos: operator changed dimension");
    for (double x : v)
      if (!std::isfinite(x)) throw std::runtime_error("lanczos: non-finite operator output");

    double alpha = 0;
    for (std::size_t i = 0; i < dim; ++i) alpha += q[i] * v[i];
    for (std::size_t i = 0; i < dim; ++i) v[i] -= beta_prev * q_prev[i] + alpha * q[i];
    if (cfg.reorthogonalize) {
      for (const auto& b : basis) {
        double d = 0;
        for (std::size_t i = 0; i < dim; ++i) d += b[i] * v[i];
        for (std::size_t i = 0; i < dim; ++i) v[i] -= d * b[i];
      }
    }
    double beta = 0;
    for (double x : v) beta += x * x;
    beta = std::sqrt(beta);

    alphas.push_back(alpha);
    res.iterations = k;
    const double lambda_curr = symtridiag_eigmax(alphas, betas);
    res.ritz_history.push_back(lambda_curr);
    if (k > 1 && lambda_curr < lambda_prev - 1e-9 * std::max(1.0, std::abs(lambda_prev)))
      res.ritz_monotone = false;
    res.lambda = lambda_curr;

    if (std::abs(lambda_curr - lambda_prev) < cfg.tolerance) {
      res.converged = true;
      break;
    }
    lambda_prev = lambda_curr;
    if (beta < cfg.breakdown_threshold * std::max(1.0, std::abs(alphas[0]))) {
      res.converged = true;  // the Krylov subspace is invariant
      break;
    }
    if (k == dim) {
      res.converged = true;  // full space spanned
      break;
    }
    betas.push_back(beta);
    q_prev = q;
    for (std::size_t i = 0; i < dim; ++i) q[i] = v[i] / beta;
    if (cfg.reorthogonalize) basis.push_back(q);
  }

  if (cfg.reorthogonalize) {
    for (std::size_t i = 0; i < basis.size(); ++i)
      for (std::size_t j = i + 1; j < basis.size(); ++j) {
        double d = 0;
        for (std::size_t c = 0; c < dim; ++c) d += basis[i][c] * basis[j][c];
        res.basis_max_offdiag = std::max(res.basis_max_offdiag, std::abs(d));
      }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Dataset-level Hessian-vector products for one adapter block.

struct HvpDatasetConfig {
  std::size_t sample_count = 500;  // N
  std::size_t batch_size = 5;      // B
  bool float32 = true;             // storage precision of model and adapters
  std::size_t pack_len = 12;
  std::uint64_t subset_seed = 0;
  double loss_scale = 1.0;  // multiplies the loss; exposed for covariance checks

  void validate() const {
    if (sample_count < 1 || batch_size < 1 || sample_count < batch_size)
      throw std::invalid_argument("HvpDatasetConfig: need N >= B >= 1");
  }
};

struct BlockRef {
  std::size_t layer = 0;
  int type = MT_Q;

  std::string id() const {
    return "L" + std::to_string(layer) + "." + matrix_type_name(type);
  }
};

// Fixed evaluation state: the sampled subset, its batches, and cached
// activations entering every layer (valid for any single-block perturbation
// at or above that layer).
template <typename S>
struct SharpnessWorkspace {
  BaseModel<S> model;
  AdapterSet<S> adapters;
  std::vector<Batch> batches;
  std::size_t total_supervised = 0;
  double loss_scale = 1.0;
  std::vector<std::vector<Matrix<S>>> layer_inputs;  // [batch][layer]

  const AdapterState<S>& block_state(const BlockRef& block) const {
    const auto& slot = adapters.states.at(block.layer)[block.type];
    if (!slot) throw std::invalid_argument("no adapter at block " + block.id());
    return *slot;
  }
  std::size_t block_dim(const BlockRef& block) const {
    const auto& st = block_state(block);
    return st.b.size() + st.a.size();
  }
};

template <typename S>
SharpnessWorkspace<S> make_sharpness_workspace(const BaseModel<double>& model,
                                               const AdapterSet<double>& adapters,
                                               const Corpus& corpus,
                                               const HvpDatasetConfig& cfg) {
  cfg.validate();
  SharpnessWorkspace<S> ws;
  ws.model = model_cast<S>(model);
  ws.adapters = adapter_set_cast<S>(adapters);
  ws.loss_scale = cfg.loss_scale;

  // Sampled subset of N examples, deterministic in the seed.
  Corpus subset;
  subset.split = corpus.split;
  if (cfg.sample_count >= corpus.size()) {
    subset = corpus;
  } else {
    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    RandomStream rs(derive_seed(cfg.subset_seed, hash_str("hvp-subset")));
    rs.shuffle(order.begin(), order.end());
    for (std::size_t i = 0; i < cfg.sample_count; ++i)
      subset.examples.push_back(corpus.examples[order[i]]);
  }
  BatchPlan plan = build_batches(subset, cfg.batch_size, cfg.pack_len,
                                 derive_seed(cfg.subset_seed, hash_str("hvp-batches")));
  ws.batches = std::move(plan.batches);
  ws.total_supervised = plan.supervised_tokens;
  if (ws.total_supervised == 0)
    throw std::runtime_error("sharpness: zero supervised tokens in the sampled subset");

  ws.layer_inputs.reserve(ws.batches.size());
  for (const Batch& b : ws.batches)
    ws.layer_inputs.push_back(forward_layer_inputs(ws.model, &ws.adapters, b));
  return ws;
}

namespace detail {

template <typename S>
void split_block_vector(const SharpnessWorkspace<S>& ws, const BlockRef& block,
                        const std::vector<double>& v, Matrix<S>& vb, Matrix<S>& va) {
  const auto& st = ws.block_state(block);
  if (v.size() != st.b.size() + st.a.size())
    throw std::invalid_argument("block vector length mismatch for " + block.id());
  vb = Matrix<S>(st.b.rows(), st.b.cols());
  va = Matrix<S>(st.a.rows(), st.a.cols());
  for (std::size_t i = 0; i < vb.size(); ++i) vb.data()[i] = S(v[i]);
  for (std::size_t i = 0; i < va.size(); ++i) va.data()[i] = S(v[vb.size() + i]);
}

}  // namespace detail

// H^l v over the workspace dataset: per batch the Hessian-vector product of
// the summed supervised cross entropy, restricted to {B, A} of one block;
// accumulated in 64-bit and divided by the total supervised-token count.
template <typename S>
std::vector<double> dataset_hvp(const SharpnessWorkspace<S>& ws, const BlockRef& block,
                                const std::vector<double>& v) {
  using D = Dual<S>;
  Matrix<S> vb, va;
  detail::split_block_vector(ws, block, v, vb, va);
  const std::size_t dim = v.size();

  std::vector<double> acc(dim, 0.0);
  for (std::size_t bi = 0; bi < ws.batches.size(); ++bi) {
    const Batch& batch = ws.batches[bi];
    ad::Tape<D> tape;
    GraphOptions opt;
    opt.adapters_require_grad = true;
    opt.only_layer = static_cast<int>(block.layer);
    opt.only_type = block.type;
    opt.start_layer = block.layer;
    BlockTangent<S> tangent{block.layer, block.type, vb, va};
    ModelGraph<D> g = make_model_graph<D, S>(tape, ws.model, &ws.adapters, opt, &tangent);
    ad::Var x0 = tape.constant(detail::promote<D>(ws.layer_inputs[bi][block.layer]));
    ad::Var logits = graph_forward_from(tape, g, batch, block.layer, x0);
    ad::Var loss = tape.masked_ce(logits, batch.ids, batch.mask, batch.batch,
                                  batch.seqlen, ad::Reduction::token_sum);
    if (ws.loss_scale != 1.0) loss = tape.scale(loss, ws.loss_scale);
    tape.backward(loss);

    const auto& gb = tape.grad(g.layers[block.layer].a_b[block.type]);
    const auto& ga = tape.grad(g.layers[block.layer].a_a[block.type]);
    for (std::size_t i = 0; i < gb.size(); ++i)
      acc[i] += static_cast<double>(gb.data()[i].dot);
    for (std::size_t i = 0; i < ga.size(); ++i)
      acc[gb.size() + i] += static_cast<double>(ga.data()[i].dot);
  }
  const double inv = 1.0 / double(ws.total_supervised);
  for (double& x : acc) {
    x *= inv;
    if (!std::isfinite(x))
      throw std::runtime_error("dataset_hvp: non-finite result on block " + block.id());
  }
  return acc;
}

// Dataset gradient of the same per-token loss at overridden block values;
// the finite-difference substrate for the dense oracle.
template <typename S>
std::vector<double> dataset_block_grad(const SharpnessWorkspace<S>& ws,
                                       const BlockRef& block,
                                       const std::vector<double>& theta) {
  Matrix<S> tb, ta;
  detail::split_block_vector(ws, block, theta, tb, ta);
  // Override the block's parameters; cached lower-layer inputs stay valid.
  AdapterSet<S> adapters = ws.adapters;
  adapters.states[block.layer][block.type]->b = tb;
  adapters.states[block.layer][block.type]->a = ta;

  std::vector<double> acc(theta.size(), 0.0);
  for (std::size_t bi = 0; bi < ws.batches.size(); ++bi) {
    const Batch& batch = ws.batches[bi];
    ad::Tape<S> tape;
    GraphOptions opt;
    opt.adapters_require_grad = true;
    opt.only_layer = static_cast<int>(block.layer);
    opt.only_type = block.type;
    opt.start_layer = block.layer;
    ModelGraph<S> g = make_model_graph<S, S>(tape, ws.model, &adapters, opt);
    ad::Var x0 = tape.constant(ws.layer_inputs[bi][block.layer]);
    ad::Var logits = graph_forward_from(tape, g, batch, block.layer, x0);
    ad::Var loss = tape.masked_ce(logits, batch.ids, batch.mask, batch.batch,
                                  batch.seqlen, ad::Reduction::token_sum);
    if (ws.loss_scale != 1.0) loss = tape.scale(loss, ws.loss_scale);
    tape.backward(loss);
    const auto& gb = tape.grad(g.layers[block.layer].a_b[block.type]);
    const auto& ga = tape.grad(g.layers[block.layer].a_a[block.type]);
    for (std::size_t i = 0; i < gb.size(); ++i)
      acc[i] += static_cast<double>(gb.data()[i]);
    for (std::size_t i = 0; i < ga.size(); ++i)
      acc[gb.size() + i] += static_cast<double>(ga.data()[i]);
  }
  const double inv = 1.0 / double(ws.total_supervised);
  for (double& x : acc) x *= inv;
  return acc;
}

template <typename S>
std::vector<double> block_init_values(const SharpnessWorkspace<S>& ws,
                                      const BlockRef& block) {
  const auto& st = ws.block_state(block);
  std::vector<double> theta(st.b.size() + st.a.size());
  for (std::size_t i = 0; i < st.b.size(); ++i)
    theta[i] = static_cast<double>(st.b.data()[i]);
  for (std::size_t i = 0; i < st.a.size(); ++i)
    theta[st.b.size() + i] = static_cast<double>(st.a.data()[i]);
  return theta;
}

// ---------------------------------------------------------------------------
// Dense Hessian oracle: central finite differences of a gradient function,
// symmetrized. Verification-only path, independent of the dual-number HVP.

struct HessianOracleResult {
  DenseMatrix hessian;     // symmetrized
  double asymmetry = 0;    // ||H - H^T||_F / ||H||_F before symmetrization
};

inline HessianOracleResult dense_hessian_oracle(
    const std::function<std::vector<double>(const std::vector<double>&)>& grad_fn,
    std::vector<double> theta) {
  const std::size_t n = theta.size();
  if (n > 2000) throw std::invalid_argument("dense_hessian_oracle: block too large");
  DenseMatrix h(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const double step = 1e-4 * (1.0 + std::abs(theta[i]));
    const double x0 = theta[i];
    theta[i] = x0 + step;
    std::vector<double> gp = grad_fn(theta);
    theta[i] = x0 - step;
    std::vector<double> gm = grad_fn(theta);
    theta[i] = x0;
    for (std::size_t j = 0; j < n; ++j) h(j, i) = (gp[j] - gm[j]) / (2.0 * step);
  }
  double num = 0, den = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double d = h(i, j) - h(j, i);
      num += d * d;
      den += h(i, j) * h(i, j);
    }
  HessianOracleResult out;
  out.asymmetry = den > 0 ? std::sqrt(num / den) : 0.0;
  out.hessian = DenseMatrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out.hessian(i, j) = 0.5 * (h(i, j) + h(j, i));
  return out;
}

// ---------------------------------------------------------------------------
// Block-wise sharpness report.

struct SharpnessEntry {
  std::size_t layer = 0;
  int type = MT_Q;
  std::size_t dim = 0;
  double lambda_max = 0;
  std::size_t iterations = 0;
  bool converged = false;
  bool failed = false;
  std::string fail_reason;
};

struct SharpnessReport {
  std::string method;
  HvpDatasetConfig hvp_config;
  LanczosConfig lanczos_config;
  std::vector<SharpnessEntry> entries;
};

namespace detail {

template <typename S>
SharpnessReport block_sharpness_report_impl(const BaseModel<double>& model,
                                            const AdapterConfig& adapter_cfg,
                                            const Corpus& corpus,
                                            const HvpDatasetConfig& hvp_cfg,
                                            const LanczosConfig& lanczos_cfg,
                                            std::size_t workers) {
  AdapterSet<double> adapters = init_adapter_set(model, adapter_cfg);
  SharpnessWorkspace<S> ws =
      make_sharpness_workspace<S>(model, adapters, corpus, hvp_cfg);

  std::vector<BlockRef> blocks;
  for (std::size_t l = 0; l < model.config.num_layers; ++l)
    for (int t = 0; t < kNumMatrixTypes; ++t)
      if (model.config.placement[t]) blocks.push_back(BlockRef{l, t});

  SharpnessReport report;
  report.method = variant_name(adapter_cfg.variant);
  report.hvp_config = hvp_cfg;
  report.lanczos_config = lanczos_cfg;
  report.entries.resize(blocks.size());

  parallel_for_index(blocks.size(), workers, [&](std::size_t i) {
    const BlockRef& block = blocks[i];
    SharpnessEntry& e = report.entries[i];
    e.layer = block.layer;
    e.type = block.type;
    try {
      e.dim = ws.block_dim(block);
      LanczosConfig lc = lanczos_cfg;
      lc.init_vector_seed =
          derive_seed(lanczos_cfg.init_vector_seed, hash_str(block.id()));
      LinearOperator op = [&ws, block](const std::vector<double>& v) {
        return dataset_hvp(ws, block, v);
      };
      LanczosResult r = lanczos_lambda_max(op, e.dim, lc);
      e.lambda_max = r.lambda;
      e.iterations = r.iterations;
      e.converged = r.converged;
    } catch (const std::exception& ex) {
      e.failed = true;
      e.fail_reason = ex.what();
    }
  });
  return report;
}

}  // namespace detail

// One Lanczos run per placed {B, A} block at the initialization point.
// DoRA is not analyzed here (its initial Hessian matches LoRA's and its
// architectural path is out of scope for this report).
inline SharpnessReport block_sharpness_report(const BaseModel<double>& model,
                                              const AdapterConfig& adapter_cfg,
                                              const Corpus& corpus,
                                              const HvpDatasetConfig& hvp_cfg,
                                              const LanczosConfig& lanczos_cfg,
                                              std::size_t workers = 1) {
  if (adapter_cfg.variant == AdapterVariant::DoRA)
    throw std::invalid_argument("block_sharpness_report: DoRA analysis not supported");
  return hvp_cfg.float32
             ? detail::block_sharpness_report_impl<float>(model, adapter_cfg, corpus,
                                                          hvp_cfg, lanczos_cfg, workers)
             : detail::block_sharpness_report_impl<double>(model, adapter_cfg, corpus,
                                                           hvp_cfg, lanczos_cfg, workers);
}

// ---------------------------------------------------------------------------
// Ratio distributions relative to a baseline (Fig.-style comparison).

struct RatioEntry {
  std::size_t layer = 0;
  int type = MT_Q;
  double lambda = 0;
  double baseline_lambda = 0;
  double ratio = 0;
};

struct RatioReport {
  std::string method;
  std::string baseline_method;
  std::vector<RatioEntry> entries;
  std::map<std::string, std::vector<double>> ratios_per_type;
  std::map<std::string, double> median_per_type;
  std::size_t excluded = 0;  // baseline lambda <= 0 or failed blocks
};

inline double median_of(std::vector<double> xs) {
  if (xs.empty()) throw std::invalid_argument("median of empty set");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

inline RatioReport sharpness_ratios(const SharpnessReport& report,
                                    const SharpnessReport& baseline) {
  std::map<std::pair<std::size_t, int>, const SharpnessEntry*> base_index;
  for (const auto& e : baseline.entries) base_index[{e.layer, e.type}] = &e;

  RatioReport out;
  out.method = report.method;
  out.baseline_method = baseline.method;
  for (const auto& e : report.entries) {
    auto it = base_index.find({e.layer, e.type});
    if (it == base_index.end())
      throw std::invalid_argument("sharpness_ratios: block sets differ at " +
                                  std::to_string(e.layer) + "." +
                                  matrix_type_name(e.type));
    const SharpnessEntry* b = it->second;
    if (e.failed || b->failed || !(b->lambda_max > 0)) {
      ++out.excluded;
      continue;
    }
    RatioEntry r;
    r.layer = e.layer;
    r.type = e.type;
    r.lambda = e.lambda_max;
    r.baseline_lambda = b->lambda_max;
    r.ratio = e.lambda_max / b->lambda_max;
    out.entries.push_back(r);
    out.ratios_per_type[matrix_type_name(e.type)].push_back(r.ratio);
  }
  for (const auto& [type, ratios] : out.ratios_per_type)
    out.median_per_type[type] = median_of(ratios);
  return out;
}

// ---------------------------------------------------------------------------
// Quadratic stability probe: gradient descent on 0.5*lambda*theta^2 from
// theta = 1. The contraction factor is |1 - eta*lambda|; the classification
// boundary sits exactly at eta = 2/lambda.

struct StabilityProbeResult {
  bool converged = false;
  std::vector<double> iterate_norms;
};

inline StabilityProbeResult quadratic_stability_probe(double lambda_max, double eta,
                                                      std::size_t steps = 50) {
  if (!(lambda_max > 0))
    throw std::invalid_argument("quadratic_stability_probe: lambda_max <= 0");
  StabilityProbeResult res;
  double theta = 1.0;
  res.iterate_norms.push_back(std::abs(theta));
  for (std::size_t s = 0; s < steps; ++s) {
    theta -= eta * lambda_max * theta;
    res.iterate_norms.push_back(std::abs(theta));
  }
  res.converged = std::abs(theta) < 1.0;  // strict: the boundary case diverges
  return res;
}

// ---------------------------------------------------------------------------
// Subset-size stability study for one block.

struct SampleSizePoint {
  std::size_t n = 0;
  std::vector<double> estimates;
  double mean = 0;
  double stddev = 0;
  double rel_error_vs_reference = 0;
};

struct SampleSizeStudy {
  BlockRef block;
  std::vector<SampleSizePoint> points;
  double reference = 0;  // mean estimate at the largest N
};

inline SampleSizeStudy sample_size_study(const BaseModel<double>& model,
                                         const AdapterConfig& adapter_cfg,
                                         const Corpus& corpus, const BlockRef& block,
                                         const std::vector<std::size_t>& ns,
                                         std::size_t trials,
                                         const HvpDatasetConfig& hvp_cfg,
                                         const LanczosConfig& lanczos_cfg) {
  if (ns.empty() || trials < 1)
    throw std::invalid_argument("sample_size_study: empty study");
  for (std::size_t i = 1; i < ns.size(); ++i)
    if (ns[i] <= ns[i - 1])
      throw std::invalid_argument("sample_size_study: Ns must be ascending");

  AdapterSet<double> adapters = init_adapter_set(model, adapter_cfg);
  SampleSizeStudy study;
  study.block = block;
  for (std::size_t n : ns) {
    SampleSizePoint point;
    point.n = n;
    for (std::size_t t = 0; t < trials; ++t) {
      HvpDatasetConfig hc = hvp_cfg;
      hc.sample_count = n;
      hc.subset_seed = derive_seed(hvp_cfg.subset_seed, 1000 + t);
      SharpnessWorkspace<float> ws =
          make_sharpness_workspace<float>(model, adapters, corpus, hc);
      LanczosConfig lc = lanczos_cfg;
      lc.init_vector_seed = derive_seed(lanczos_cfg.init_vector_seed, 2000 + t);
      LinearOperator op = [&ws, &block](const std::vector<double>& v) {
        return dataset_hvp(ws, block, v);
      };
      point.estimates.push_back(lanczos_lambda_max(op, ws.block_dim(block), lc).lambda);
    }
    double sum = 0;
    for (double x : point.estimates) sum += x;
    point.mean = sum / double(point.estimates.size());
    if (point.estimates.size() > 1) {
      double ss = 0;
      for (double x : point.estimates) ss += (x - point.mean) * (x - point.mean);
      point.stddev = std::sqrt(ss / double(point.estimates.size() - 1));
    }
    study.points.push_back(point);
  }
  study.reference = study.points.back().mean;
  for (auto& p : study.points)
    p.rel_error_vs_reference =
        std::abs(p.mean - study.reference) / std::max(1e-12, std::abs(study.reference));
  return study;
}

}  // namespace lrlab
