#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "lrlab/model.hpp"
#include "lrlab/optimizer.hpp"

namespace lrlab {

struct TrainConfig {
  std::size_t epochs = 1;
  double learning_rate = 1e-3;
  std::size_t batch_size = 16;
  double warmup_ratio = 0.03;
  OptimizerConfig optimizer;        // AdamW 0.9/0.999/1e-8, weight decay 0
  std::optional<double> grad_clip;  // off unless set
  std::size_t pack_len = 12;        // packing length for batches
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate >= 0)) throw std::invalid_argument("TrainConfig: learning_rate < 0");
    if (warmup_ratio < 0 || warmup_ratio >= 1)
      throw std::invalid_argument("TrainConfig: warmup_ratio out of [0,1)");
    if (batch_size < 1 || epochs < 1) throw std::invalid_argument("TrainConfig: zero size");
  }
};

struct TrialMetrics {
  std::vector<double> step_losses;
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  double eval_accuracy = 0.0;
  bool diverged = false;
  std::int64_t diverged_at_step = -1;
  double wall_clock_seconds = 0.0;
  bool failed = false;      // infrastructure failure, distinct from divergence
  std::string fail_reason;
};

struct TrainResult {
  TrialMetrics metrics;
  AdapterSet<double> adapters;
};

// One deterministic fine-tuning trial: base weights frozen, only adapter
// parameters update, cosine schedule with warmup, greedy-decode exact match
// on the eval split at the end. Divergence is recorded, not thrown.
inline TrainResult train_run(const BaseModel<double>& model, const AdapterConfig& adapter_cfg,
                             const Corpus& train_corpus, const Corpus& eval_corpus,
                             const TrainConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();

  TrainResult out{TrialMetrics{}, init_adapter_set(model, adapter_cfg)};
  AdapterSet<double>& adapters = out.adapters;
  TrialMetrics& metrics = out.metrics;

  ParamVector params = adapter_param_vector(adapters);
  OptimizerState ostate;
  ostate.reset(params.size());

  // Fixed step count: identical batch layout every epoch, reshuffled per epoch.
  std::vector<Batch> batches;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    BatchPlan plan = build_batches(train_corpus, cfg.batch_size, cfg.pack_len,
                                   derive_seed(cfg.seed, hash_str("epoch") + e));
    for (auto& b : plan.batches) batches.push_back(std::move(b));
  }
  const std::int64_t total_steps = static_cast<std::int64_t>(batches.size());

  for (std::int64_t step = 0; step < total_steps; ++step) {
    const Batch& batch = batches[static_cast<std::size_t>(step)];
    ad::Tape<double> tape;
    GraphOptions opt;
    opt.adapters_require_grad = true;
    ModelGraph<double> g = make_model_graph(tape, model, &adapters, opt);
    ad::Var logits = graph_forward(tape, g, batch);
    ad::Var loss = tape.masked_ce(logits, batch.ids, batch.mask, batch.batch,
                                  batch.seqlen, ad::Reduction::token_mean);
    const double loss_value = tape.value(loss)(0, 0);
    metrics.step_losses.push_back(loss_value);
    if (!std::isfinite(loss_value)) {
      metrics.diverged = true;
      metrics.diverged_at_step = step;
      break;
    }
    tape.backward(loss);
    ParamVector grads = collect_grads(tape, g);
    bool finite = true;
    for (double x : grads.values()) finite = finite && std::isfinite(x);
    if (!finite) {
      metrics.diverged = true;
      metrics.diverged_at_step = step;
      break;
    }
    if (cfg.grad_clip) {
      double norm2 = 0;
      for (double x : grads.values()) norm2 += x * x;
      const double norm = std::sqrt(norm2);
      if (norm > *cfg.grad_clip) {
        const double s = *cfg.grad_clip / norm;
        for (double& x : grads.values()) x *= s;
      }
    }
    const double lr = lr_schedule(step, total_steps, cfg.learning_rate, cfg.warmup_ratio);
    optimizer_step(params, grads, ostate, lr, cfg.optimizer);
    set_adapter_params(adapters, params);
  }

  if (!metrics.step_losses.empty()) metrics.final_loss = metrics.step_losses.back();
  metrics.eval_accuracy =
      metrics.diverged ? 0.0 : exact_match_accuracy(model, &adapters, eval_corpus);
  metrics.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace lrlab
