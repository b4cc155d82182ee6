#pragma once

#include <string>

#include <json.hpp>

#include "lrlab/sharpness.hpp"
#include "lrlab/sweep.hpp"

namespace lrlab {

// All emitters are byte-deterministic: stable key ordering, floats at six
// significant digits in CSV/SVG, shortest-round-trip doubles in JSON.

std::string format_sig6(double x);

// --- sweep artifacts -------------------------------------------------------

// Per-trial rows: method,lr,batch,rank,seed,accuracy,final_loss,diverged
std::string sweep_csv(const SweepResult& result);

nlohmann::ordered_json sweep_result_to_json(const SweepResult& result);
SweepResult sweep_result_from_json(const nlohmann::json& j);

nlohmann::ordered_json summary_to_json(const SweepSummary& summary);

// Table-style heatmap for one (method, rank): batch rows x learning-rate
// columns, shaded by mean accuracy.
std::string sweep_heatmap_svg(const SweepSummary& summary, const std::string& method,
                              int rank);

// Summary-level heatmap: one row per method, one column per learning rate
// (best over batches at each point).
std::string summary_heatmap_svg(const SweepSummary& summary);

enum class ReportFormat { csv, json, svg };
ReportFormat report_format_from_name(const std::string& name);

// Renders a sweep summary in the requested format (csv = near-optimal table,
// json = full summary, svg = method x learning-rate heatmap).
std::string emit_report(const SweepSummary& summary, ReportFormat format);

// --- sharpness artifacts ---------------------------------------------------

nlohmann::ordered_json sharpness_report_to_json(const SharpnessReport& report);
SharpnessReport sharpness_report_from_json(const nlohmann::json& j);

// block_id,matrix_type,layer,lambda,ratio
std::string ratios_csv(const RatioReport& ratios);

// Box summary of ratio distributions per matrix type.
std::string ratios_svg(const RatioReport& ratios);

nlohmann::ordered_json trial_metrics_to_json(const TrialMetrics& metrics);

}  // namespace lrlab
