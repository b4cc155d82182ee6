#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "lrlab/model.hpp"
#include "lrlab/trainer.hpp"

namespace lrlab {

struct SweepGrid {
  std::vector<AdapterVariant> methods;
  std::vector<double> learning_rates;  // strictly increasing
  std::vector<std::size_t> batch_sizes;
  std::vector<int> ranks;
  std::vector<std::uint64_t> seeds;

  void validate() const;
  std::size_t cell_count() const {
    return methods.size() * learning_rates.size() * batch_sizes.size() * ranks.size() *
           seeds.size();
  }
};

// Mantissas {1.1247, 2.0000, 3.5566, 6.3246} per decade, ascending; four
// points per order of magnitude on a log-uniform ladder.
std::vector<double> make_lr_grid(int min_exp, int max_exp);

struct CellKey {
  std::string method;
  double lr = 0;
  std::size_t batch = 0;
  int rank = 0;
  std::uint64_t seed = 0;

  auto tie() const { return std::tie(method, lr, batch, rank, seed); }
  bool operator<(const CellKey& o) const { return tie() < o.tie(); }
  bool operator==(const CellKey& o) const { return tie() == o.tie(); }
};

struct SweepProvenance {
  SweepGrid grid;
  std::string code_version;
  std::uint64_t base_model_hash = 0;
};

struct SweepResult {
  std::map<CellKey, TrialMetrics> cells;
  SweepProvenance provenance;
};

struct TaskData {
  Corpus train;
  Corpus eval;
};

struct SweepRunOptions {
  std::size_t workers = 1;
  std::size_t epochs = 1;
  double warmup_ratio = 0.03;
  std::size_t pack_len = 12;
};

// Executes every cell on a worker pool. Cells are independent and write to
// preassigned slots, so the result does not depend on worker count or
// scheduling order. Individual trial failures are recorded in the cell.
SweepResult run_sweep(const SweepGrid& grid, const BaseModel<double>& model,
                      const TaskData& task, const SweepRunOptions& options);

// Per-configuration aggregate over seeds.
struct AggregateCell {
  std::string method;
  double lr = 0;
  std::size_t batch = 0;
  int rank = 0;
  double mean_accuracy = 0;
  double std_accuracy = 0;
  std::size_t n_seeds = 0;
  std::size_t n_diverged = 0;
};

struct MethodBest {
  std::string method;
  AggregateCell best;
};

struct BatchScaling {
  std::string method;
  std::vector<std::pair<std::size_t, double>> optimal_lr_per_batch;
  double log_slope = 0;  // d log(lr*) / d log(batch)
};

struct SweepSummary {
  std::vector<AggregateCell> aggregates;      // sorted by key
  std::vector<MethodBest> best_per_method;    // sorted by method name
  std::vector<AggregateCell> near_optimal;    // >= 90% of the global max
  double global_max_accuracy = 0;
  double parity_gap = 0;  // max over methods of best minus min over methods
  std::vector<BatchScaling> batch_scaling;
};

// Pure function of the result; ties broken by lowest lr, then smallest batch,
// then smallest rank, making the choice total and deterministic.
SweepSummary summarize_sweep(const SweepResult& result);

}  // namespace lrlab
