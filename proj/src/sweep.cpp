#include "lrlab/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lrlab/threads.hpp"
#include "lrlab/version.hpp"

namespace lrlab {

void SweepGrid::validate() const {
  if (methods.empty() || learning_rates.empty() || batch_sizes.empty() || ranks.empty() ||
      seeds.empty())
    throw std::invalid_argument("SweepGrid: empty axis");
  for (std::size_t i = 1; i < learning_rates.size(); ++i)
    if (!(learning_rates[i] > learning_rates[i - 1]))
      throw std::invalid_argument("SweepGrid: learning rates not strictly increasing");
}

std::vector<double> make_lr_grid(int min_exp, int max_exp) {
  if (min_exp > max_exp) throw std::invalid_argument("make_lr_grid: min_exp > max_exp");
  static const double kMantissas[4] = {1.1247, 2.0000, 3.5566, 6.3246};
  std::vector<double> out;
  for (int e = min_exp; e <= max_exp; ++e)
    for (double m : kMantissas) out.push_back(m * std::pow(10.0, e));
  return out;
}

SweepResult run_sweep(const SweepGrid& grid, const BaseModel<double>& model,
                      const TaskData& task, const SweepRunOptions& options) {
  grid.validate();
  if (options.workers < 1) throw std::invalid_argument("run_sweep: workers < 1");

  std::vector<CellKey> keys;
  keys.reserve(grid.cell_count());
  for (AdapterVariant m : grid.methods)
    for (double lr : grid.learning_rates)
      for (std::size_t b : grid.batch_sizes)
        for (int r : grid.ranks)
          for (std::uint64_t s : grid.seeds)
            keys.push_back(CellKey{variant_name(m), lr, b, r, s});

  std::vector<TrialMetrics> slots(keys.size());
  parallel_for_index(keys.size(), options.workers, [&](std::size_t i) {
    const CellKey& key = keys[i];
    try {
      AdapterConfig acfg;
      acfg.variant = variant_from_name(key.method);
      acfg.rank = key.rank;
      acfg.alpha = key.rank;  // alpha = r convention
      acfg.seed = derive_seed(key.seed, hash_str(key.method));

      TrainConfig tcfg;
      tcfg.epochs = options.epochs;
      tcfg.learning_rate = key.lr;
      tcfg.batch_size = key.batch;
      tcfg.warmup_ratio = options.warmup_ratio;
      tcfg.pack_len = options.pack_len;
      tcfg.seed = key.seed;

      slots[i] = train_run(model, acfg, task.train, task.eval, tcfg).metrics;
    } catch (const std::exception& e) {
      TrialMetrics failed;
      failed.failed = true;
      failed.fail_reason = e.what();
      slots[i] = failed;
    }
  });

  SweepResult result;
  result.provenance.grid = grid;
  result.provenance.code_version = kToolVersion;
  result.provenance.base_model_hash = base_model_hash(model);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    // wall clock is machine noise, not part of the deterministic artifact
    slots[i].wall_clock_seconds = 0.0;
    result.cells.emplace(keys[i], std::move(slots[i]));
  }
  return result;
}

namespace {

struct AggKey {
  std::string method;
  double lr;
  std::size_t batch;
  int rank;
  auto tie() const { return std::tie(method, lr, batch, rank); }
  bool operator<(const AggKey& o) const { return tie() < o.tie(); }
};

bool better_cell(const AggregateCell& a, const AggregateCell& b) {
  // higher accuracy wins; ties prefer lower lr, then smaller batch/rank
  if (a.mean_accuracy != b.mean_accuracy) return a.mean_accuracy > b.mean_accuracy;
  return std::tie(a.lr, a.batch, a.rank) < std::tie(b.lr, b.batch, b.rank);
}

}  // namespace

SweepSummary summarize_sweep(const SweepResult& result) {
  if (result.cells.empty()) throw std::invalid_argument("summarize_sweep: empty result");

  std::map<AggKey, std::vector<const TrialMetrics*>> groups;
  for (const auto& [key, metrics] : result.cells)
    groups[AggKey{key.method, key.lr, key.batch, key.rank}].push_back(&metrics);

  SweepSummary summary;
  for (const auto& [key, trials] : groups) {
    AggregateCell cell;
    cell.method = key.method;
    cell.lr = key.lr;
    cell.batch = key.batch;
    cell.rank = key.rank;
    cell.n_seeds = trials.size();
    double sum = 0;
    for (const TrialMetrics* t : trials) {
      sum += t->eval_accuracy;
      if (t->diverged || t->failed) ++cell.n_diverged;
    }
    cell.mean_accuracy = sum / double(trials.size());
    if (trials.size() > 1) {
      double ss = 0;
      for (const TrialMetrics* t : trials) {
        const double d = t->eval_accuracy - cell.mean_accuracy;
        ss += d * d;
      }
      cell.std_accuracy = std::sqrt(ss / double(trials.size() - 1));
    }
    summary.aggregates.push_back(cell);
  }

  // best per method
  std::map<std::string, AggregateCell> best;
  for (const AggregateCell& c : summary.aggregates) {
    auto it = best.find(c.method);
    if (it == best.end() || better_cell(c, it->second)) best[c.method] = c;
  }
  double global_max = 0, worst_best = std::numeric_limits<double>::infinity();
  for (const auto& [method, cell] : best) {
    summary.best_per_method.push_back(MethodBest{method, cell});
    global_max = std::max(global_max, cell.mean_accuracy);
    worst_best = std::min(worst_best, cell.mean_accuracy);
  }
  summary.global_max_accuracy = global_max;
  summary.parity_gap = best.empty() ? 0.0 : global_max - worst_best;

  for (const AggregateCell& c : summary.aggregates)
    if (c.mean_accuracy >= 0.9 * global_max) summary.near_optimal.push_back(c);

  // optimal lr per (method, batch) and the log-log scaling slope
  std::map<std::string, std::map<std::size_t, AggregateCell>> per_batch;
  for (const AggregateCell& c : summary.aggregates) {
    auto& slot = per_batch[c.method];
    auto it = slot.find(c.batch);
    if (it == slot.end() || better_cell(c, it->second)) slot[c.batch] = c;
  }
  for (const auto& [method, batches] : per_batch) {
    BatchScaling sc;
    sc.method = method;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& [batch, cell] : batches) {
      sc.optimal_lr_per_batch.push_back({batch, cell.lr});
      const double x = std::log(double(batch)), y = std::log(cell.lr);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double n = double(batches.size());
    const double denom = n * sxx - sx * sx;
    sc.log_slope = denom != 0.0 ? (n * sxy - sx * sy) / denom : 0.0;
    summary.batch_scaling.push_back(sc);
  }
  return summary;
}

}  // namespace lrlab
