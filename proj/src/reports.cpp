#include "lrlab/reports.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

namespace lrlab {

std::string format_sig6(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return buf;
}

// --- sweep artifacts -------------------------------------------------------

std::string sweep_csv(const SweepResult& result) {
  std::ostringstream out;
  out << "method,lr,batch,rank,seed,accuracy,final_loss,diverged\n";
  for (const auto& [key, m] : result.cells) {
    out << key.method << ',' << format_sig6(key.lr) << ',' << key.batch << ','
        << key.rank << ',' << key.seed << ',' << format_sig6(m.eval_accuracy) << ','
        << format_sig6(m.final_loss) << ',' << (m.diverged || m.failed ? 1 : 0) << '\n';
  }
  return out.str();
}

namespace {

nlohmann::ordered_json grid_to_json(const SweepGrid& grid) {
  nlohmann::ordered_json j;
  std::vector<std::string> methods;
  for (AdapterVariant v : grid.methods) methods.push_back(variant_name(v));
  j["methods"] = methods;
  j["learning_rates"] = grid.learning_rates;
  j["batch_sizes"] = grid.batch_sizes;
  j["ranks"] = grid.ranks;
  j["seeds"] = grid.seeds;
  return j;
}

SweepGrid grid_from_json(const nlohmann::json& j) {
  SweepGrid grid;
  for (const auto& name : j.at("methods"))
    grid.methods.push_back(variant_from_name(name.get<std::string>()));
  grid.learning_rates = j.at("learning_rates").get<std::vector<double>>();
  grid.batch_sizes = j.at("batch_sizes").get<std::vector<std::size_t>>();
  grid.ranks = j.at("ranks").get<std::vector<int>>();
  grid.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  return grid;
}

std::string hash_hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::ordered_json cell_to_json(const CellKey& key, const TrialMetrics& m) {
  nlohmann::ordered_json j;
  j["method"] = key.method;
  j["lr"] = key.lr;
  j["batch"] = key.batch;
  j["rank"] = key.rank;
  j["seed"] = key.seed;
  j["accuracy"] = m.eval_accuracy;
  j["final_loss"] = std::isfinite(m.final_loss)
                        ? nlohmann::ordered_json(m.final_loss)
                        : nlohmann::ordered_json(nullptr);
  j["steps"] = m.step_losses.size();
  j["diverged"] = m.diverged;
  if (m.diverged) j["diverged_at_step"] = m.diverged_at_step;
  j["failed"] = m.failed;
  if (m.failed) j["fail_reason"] = m.fail_reason;
  return j;
}

}  // namespace

nlohmann::ordered_json sweep_result_to_json(const SweepResult& result) {
  nlohmann::ordered_json j;
  j["provenance"]["code_version"] = result.provenance.code_version;
  j["provenance"]["base_model_hash"] = hash_hex(result.provenance.base_model_hash);
  j["provenance"]["grid"] = grid_to_json(result.provenance.grid);
  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  for (const auto& [key, m] : result.cells) cells.push_back(cell_to_json(key, m));
  j["cells"] = cells;
  return j;
}

SweepResult sweep_result_from_json(const nlohmann::json& j) {
  SweepResult result;
  result.provenance.code_version = j.at("provenance").at("code_version");
  result.provenance.base_model_hash =
      std::stoull(j.at("provenance").at("base_model_hash").get<std::string>(), nullptr, 16);
  result.provenance.grid = grid_from_json(j.at("provenance").at("grid"));
  for (const auto& c : j.at("cells")) {
    CellKey key;
    key.method = c.at("method");
    key.lr = c.at("lr");
    key.batch = c.at("batch");
    key.rank = c.at("rank");
    key.seed = c.at("seed");
    TrialMetrics m;
    m.eval_accuracy = c.at("accuracy");
    m.final_loss = c.at("final_loss").is_null()
                       ? std::numeric_limits<double>::quiet_NaN()
                       : c.at("final_loss").get<double>();
    m.diverged = c.at("diverged");
    if (c.contains("diverged_at_step")) m.diverged_at_step = c.at("diverged_at_step");
    m.failed = c.at("failed");
    if (c.contains("fail_reason")) m.fail_reason = c.at("fail_reason");
    result.cells.emplace(key, std::move(m));
  }
  return result;
}

namespace {

nlohmann::ordered_json aggregate_to_json(const AggregateCell& c) {
  nlohmann::ordered_json j;
  j["method"] = c.method;
  j["lr"] = c.lr;
  j["batch"] = c.batch;
  j["rank"] = c.rank;
  j["mean_accuracy"] = c.mean_accuracy;
  j["std_accuracy"] = c.std_accuracy;
  j["n_seeds"] = c.n_seeds;
  j["n_diverged"] = c.n_diverged;
  return j;
}

}  // namespace

nlohmann::ordered_json summary_to_json(const SweepSummary& summary) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json aggs = nlohmann::ordered_json::array();
  for (const auto& c : summary.aggregates) aggs.push_back(aggregate_to_json(c));
  j["aggregates"] = aggs;
  nlohmann::ordered_json best = nlohmann::ordered_json::array();
  for (const auto& b : summary.best_per_method) {
    nlohmann::ordered_json e;
    e["method"] = b.method;
    e["best"] = aggregate_to_json(b.best);
    best.push_back(e);
  }
  j["best_per_method"] = best;
  nlohmann::ordered_json near = nlohmann::ordered_json::array();
  for (const auto& c : summary.near_optimal) near.push_back(aggregate_to_json(c));
  j["near_optimal"] = near;
  j["global_max_accuracy"] = summary.global_max_accuracy;
  j["parity_gap"] = summary.parity_gap;
  nlohmann::ordered_json scaling = nlohmann::ordered_json::array();
  for (const auto& s : summary.batch_scaling) {
    nlohmann::ordered_json e;
    e["method"] = s.method;
    nlohmann::ordered_json pts = nlohmann::ordered_json::array();
    for (const auto& [batch, lr] : s.optimal_lr_per_batch) {
      nlohmann::ordered_json p;
      p["batch"] = batch;
      p["optimal_lr"] = lr;
      pts.push_back(p);
    }
    e["optimal_lr_per_batch"] = pts;
    e["log_slope"] = s.log_slope;
    scaling.push_back(e);
  }
  j["batch_scaling"] = scaling;
  return j;
}

// --- SVG helpers -----------------------------------------------------------

namespace {

// Blue-to-orange ramp over [0, 1]; NaN-safe.
std::string heat_color(double t) {
  if (!std::isfinite(t)) t = 0;
  t = std::clamp(t, 0.0, 1.0);
  const int r = static_cast<int>(40 + t * (255 - 40));
  const int g = static_cast<int>(60 + t * (140 - 60));
  const int b = static_cast<int>(120 + t * (40 - 120));
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

struct HeatGrid {
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  std::vector<std::vector<double>> values;  // [row][col], NaN for missing
  std::string title;
};

std::string render_heatmap(const HeatGrid& grid) {
  const int cell_w = 64, cell_h = 28, left = 110, top = 48;
  const int w = left + cell_w * static_cast<int>(grid.col_labels.size()) + 12;
  const int h = top + cell_h * static_cast<int>(grid.row_labels.size()) + 12;
  double vmax = 0;
  for (const auto& row : grid.values)
    for (double v : row)
      if (std::isfinite(v)) vmax = std::max(vmax, v);
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
    << "\" font-family=\"monospace\" font-size=\"11\">\n";
  s << "<text x=\"8\" y=\"16\">" << grid.title << "</text>\n";
  for (std::size_t c = 0; c < grid.col_labels.size(); ++c)
    s << "<text x=\"" << left + int(c) * cell_w + 4 << "\" y=\"" << top - 6 << "\">"
      << grid.col_labels[c] << "</text>\n";
  for (std::size_t r = 0; r < grid.row_labels.size(); ++r) {
    s << "<text x=\"8\" y=\"" << top + int(r) * cell_h + 18 << "\">" << grid.row_labels[r]
      << "</text>\n";
    for (std::size_t c = 0; c < grid.values[r].size(); ++c) {
      const double v = grid.values[r][c];
      const double t = vmax > 0 && std::isfinite(v) ? v / vmax : 0.0;
      s << "<rect class=\"cell\" x=\"" << left + int(c) * cell_w << "\" y=\""
        << top + int(r) * cell_h << "\" width=\"" << cell_w - 2 << "\" height=\""
        << cell_h - 2 << "\" fill=\"" << heat_color(t) << "\"/>\n";
      s << "<text x=\"" << left + int(c) * cell_w + 4 << "\" y=\""
        << top + int(r) * cell_h + 18 << "\" fill=\"#ffffff\">"
        << (std::isfinite(v) ? format_sig6(v) : "-") << "</text>\n";
    }
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace

std::string sweep_heatmap_svg(const SweepSummary& summary, const std::string& method,
                              int rank) {
  std::set<double> lrs;
  std::set<std::size_t> batches;
  for (const auto& c : summary.aggregates) {
    if (c.method != method || c.rank != rank) continue;
    lrs.insert(c.lr);
    batches.insert(c.batch);
  }
  HeatGrid grid;
  grid.title = method + " rank " + std::to_string(rank) +
               " mean accuracy (batch x learning rate)";
  for (double lr : lrs) grid.col_labels.push_back(format_sig6(lr));
  for (std::size_t b : batches) grid.row_labels.push_back("B=" + std::to_string(b));
  grid.values.assign(batches.size(),
                     std::vector<double>(lrs.size(), std::nan("")));
  for (const auto& c : summary.aggregates) {
    if (c.method != method || c.rank != rank) continue;
    const std::size_t row =
        std::distance(batches.begin(), batches.find(c.batch));
    const std::size_t col = std::distance(lrs.begin(), lrs.find(c.lr));
    grid.values[row][col] = c.mean_accuracy;
  }
  return render_heatmap(grid);
}

std::string summary_heatmap_svg(const SweepSummary& summary) {
  std::set<std::string> methods;
  std::set<double> lrs;
  for (const auto& c : summary.aggregates) {
    methods.insert(c.method);
    lrs.insert(c.lr);
  }
  HeatGrid grid;
  grid.title = "best mean accuracy per method and learning rate";
  for (double lr : lrs) grid.col_labels.push_back(format_sig6(lr));
  for (const auto& m : methods) grid.row_labels.push_back(m);
  grid.values.assign(methods.size(), std::vector<double>(lrs.size(), std::nan("")));
  for (const auto& c : summary.aggregates) {
    const std::size_t row = std::distance(methods.begin(), methods.find(c.method));
    const std::size_t col = std::distance(lrs.begin(), lrs.find(c.lr));
    double& slot = grid.values[row][col];
    if (!std::isfinite(slot) || c.mean_accuracy > slot) slot = c.mean_accuracy;
  }
  return render_heatmap(grid);
}

ReportFormat report_format_from_name(const std::string& name) {
  if (name == "csv") return ReportFormat::csv;
  if (name == "json") return ReportFormat::json;
  if (name == "svg") return ReportFormat::svg;
  throw std::invalid_argument("unsupported report format: " + name);
}

std::string emit_report(const SweepSummary& summary, ReportFormat format) {
  switch (format) {
    case ReportFormat::json:
      return summary_to_json(summary).dump(2) + "\n";
    case ReportFormat::csv: {
      std::ostringstream out;
      out << "section,method,lr,batch,rank,mean_accuracy,std_accuracy\n";
      for (const auto& b : summary.best_per_method)
        out << "best," << b.method << ',' << format_sig6(b.best.lr) << ',' << b.best.batch
            << ',' << b.best.rank << ',' << format_sig6(b.best.mean_accuracy) << ','
            << format_sig6(b.best.std_accuracy) << '\n';
      for (const auto& c : summary.near_optimal)
        out << "near_optimal," << c.method << ',' << format_sig6(c.lr) << ',' << c.batch
            << ',' << c.rank << ',' << format_sig6(c.mean_accuracy) << ','
            << format_sig6(c.std_accuracy) << '\n';
      return out.str();
    }
    case ReportFormat::svg:
      return summary_heatmap_svg(summary);
  }
  throw std::invalid_argument("unsupported report format");
}

// --- sharpness artifacts ---------------------------------------------------

nlohmann::ordered_json sharpness_report_to_json(const SharpnessReport& report) {
  nlohmann::ordered_json j;
  j["method"] = report.method;
  j["hvp_config"]["sample_count"] = report.hvp_config.sample_count;
  j["hvp_config"]["batch_size"] = report.hvp_config.batch_size;
  j["hvp_config"]["float32"] = report.hvp_config.float32;
  j["hvp_config"]["pack_len"] = report.hvp_config.pack_len;
  j["hvp_config"]["subset_seed"] = report.hvp_config.subset_seed;
  j["lanczos_config"]["max_iters"] = report.lanczos_config.max_iters;
  j["lanczos_config"]["tolerance"] = report.lanczos_config.tolerance;
  j["lanczos_config"]["reorthogonalize"] = report.lanczos_config.reorthogonalize;
  j["lanczos_config"]["breakdown_threshold"] = report.lanczos_config.breakdown_threshold;
  j["lanczos_config"]["init_vector_seed"] = report.lanczos_config.init_vector_seed;
  nlohmann::ordered_json entries = nlohmann::ordered_json::array();
  for (const auto& e : report.entries) {
    nlohmann::ordered_json je;
    je["block_id"] = "L" + std::to_string(e.layer) + "." + matrix_type_name(e.type);
    je["layer"] = e.layer;
    je["matrix_type"] = matrix_type_name(e.type);
    je["dim"] = e.dim;
    je["lambda_max"] = e.lambda_max;
    je["iterations"] = e.iterations;
    je["converged"] = e.converged;
    je["failed"] = e.failed;
    if (e.failed) je["fail_reason"] = e.fail_reason;
    entries.push_back(je);
  }
  j["entries"] = entries;
  return j;
}

SharpnessReport sharpness_report_from_json(const nlohmann::json& j) {
  SharpnessReport r;
  r.method = j.at("method");
  r.hvp_config.sample_count = j.at("hvp_config").at("sample_count");
  r.hvp_config.batch_size = j.at("hvp_config").at("batch_size");
  r.hvp_config.float32 = j.at("hvp_config").at("float32");
  r.hvp_config.pack_len = j.at("hvp_config").at("pack_len");
  r.hvp_config.subset_seed = j.at("hvp_config").at("subset_seed");
  r.lanczos_config.max_iters = j.at("lanczos_config").at("max_iters");
  r.lanczos_config.tolerance = j.at("lanczos_config").at("tolerance");
  r.lanczos_config.reorthogonalize = j.at("lanczos_config").at("reorthogonalize");
  r.lanczos_config.breakdown_threshold = j.at("lanczos_config").at("breakdown_threshold");
  r.lanczos_config.init_vector_seed = j.at("lanczos_config").at("init_vector_seed");
  for (const auto& je : j.at("entries")) {
    SharpnessEntry e;
    e.layer = je.at("layer");
    e.type = matrix_type_from_name(je.at("matrix_type").get<std::string>());
    e.dim = je.at("dim");
    e.lambda_max = je.at("lambda_max");
    e.iterations = je.at("iterations");
    e.converged = je.at("converged");
    e.failed = je.at("failed");
    if (je.contains("fail_reason")) e.fail_reason = je.at("fail_reason");
    r.entries.push_back(e);
  }
  return r;
}

std::string ratios_csv(const RatioReport& ratios) {
  std::ostringstream out;
  out << "block_id,matrix_type,layer,lambda,ratio\n";
  for (const auto& e : ratios.entries) {
    out << "L" << e.layer << '.' << matrix_type_name(e.type) << ','
        << matrix_type_name(e.type) << ',' << e.layer << ',' << format_sig6(e.lambda)
        << ',' << format_sig6(e.ratio) << '\n';
  }
  return out.str();
}

std::string ratios_svg(const RatioReport& ratios) {
  // one box (min, q1, median, q3, max) per matrix type, log-free layout
  const int box_w = 90, plot_h = 200, top = 40, left = 60;
  const std::size_t n = ratios.ratios_per_type.size();
  const int w = left + box_w * static_cast<int>(n) + 20;
  const int h = top + plot_h + 50;

  double vmax = 1.0;
  for (const auto& [type, rs] : ratios.ratios_per_type)
    for (double r : rs) vmax = std::max(vmax, r);

  auto ypos = [&](double v) { return top + plot_h - (v / vmax) * plot_h; };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
    << "\" font-family=\"monospace\" font-size=\"11\">\n";
  s << "<text x=\"8\" y=\"16\">" << ratios.method << " / " << ratios.baseline_method
    << " top-eigenvalue ratios</text>\n";
  // reference line at ratio 1
  s << "<line x1=\"" << left - 10 << "\" y1=\"" << ypos(1.0) << "\" x2=\"" << w - 10
    << "\" y2=\"" << ypos(1.0) << "\" stroke=\"#999999\" stroke-dasharray=\"4 3\"/>\n";
  s << "<text x=\"8\" y=\"" << ypos(1.0) + 4 << "\">1.0</text>\n";

  std::size_t i = 0;
  for (const auto& [type, rs_in] : ratios.ratios_per_type) {
    std::vector<double> rs = rs_in;
    std::sort(rs.begin(), rs.end());
    const double lo = rs.front(), hi = rs.back();
    const double med = median_of(rs);
    auto quart = [&](double q) {
      const double pos = q * double(rs.size() - 1);
      const std::size_t k = static_cast<std::size_t>(pos);
      const double frac = pos - double(k);
      return k + 1 < rs.size() ? rs[k] * (1 - frac) + rs[k + 1] * frac : rs[k];
    };
    const double q1 = quart(0.25), q3 = quart(0.75);
    const int cx = left + static_cast<int>(i) * box_w + box_w / 2;
    s << "<line x1=\"" << cx << "\" y1=\"" << ypos(lo) << "\" x2=\"" << cx << "\" y2=\""
      << ypos(hi) << "\" stroke=\"#333333\"/>\n";
    s << "<rect class=\"box\" x=\"" << cx - 18 << "\" y=\"" << ypos(q3)
      << "\" width=\"36\" height=\"" << std::max(1.0, ypos(q1) - ypos(q3))
      << "\" fill=\"#7799cc\" stroke=\"#333333\"/>\n";
    s << "<line x1=\"" << cx - 18 << "\" y1=\"" << ypos(med) << "\" x2=\"" << cx + 18
      << "\" y2=\"" << ypos(med) << "\" stroke=\"#bb3333\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << cx - 18 << "\" y=\"" << top + plot_h + 18 << "\">" << type
      << "</text>\n";
    s << "<text x=\"" << cx - 24 << "\" y=\"" << top + plot_h + 34 << "\">med "
      << format_sig6(med) << "</text>\n";
    ++i;
  }
  s << "</svg>\n";
  return s.str();
}

nlohmann::ordered_json trial_metrics_to_json(const TrialMetrics& m) {
  nlohmann::ordered_json j;
  j["step_losses"] = m.step_losses;
  j["final_loss"] = std::isfinite(m.final_loss) ? nlohmann::ordered_json(m.final_loss)
                                                : nlohmann::ordered_json(nullptr);
  j["eval_accuracy"] = m.eval_accuracy;
  j["diverged"] = m.diverged;
  j["diverged_at_step"] = m.diverged_at_step;
  j["wall_clock_seconds"] = m.wall_clock_seconds;
  j["failed"] = m.failed;
  if (m.failed) j["fail_reason"] = m.fail_reason;
  return j;
}

}  // namespace lrlab
