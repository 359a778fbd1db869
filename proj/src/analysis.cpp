#include "mtscale/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "mtscale/errors.hpp"

namespace mtscale {

namespace fs = std::filesystem;

RmsReport rms_report(const Rollout& rollout, const Matrix& seq) {
  const LossResult loss = sequence_loss(rollout, seq);
  RmsReport r;
  for (double s : loss.per_step_sq_errors) r.total_sq_error += s;
  r.elements = (seq.rows() - 1) * seq.cols();
  r.per_element_rms = std::sqrt(r.total_sq_error / static_cast<double>(r.elements));
  return r;
}

RmsReport rms_report(const SequenceSet& data, const Network& net, double alpha) {
  RmsReport total;
  for (const auto& s : data.sequences) {
    const RmsReport r = rms_report(run_sequence(net, s.data, alpha), s.data);
    total.total_sq_error += r.total_sq_error;
    total.elements += r.elements;
  }
  require(total.elements > 0, "rms_report: empty data set");
  total.per_element_rms = std::sqrt(total.total_sq_error / static_cast<double>(total.elements));
  return total;
}

namespace {

LayerPca layer_pca(const Matrix& activity) {
  LayerPca out;
  if (activity.cols() < 2) {
    // A single unit has no second direction; pad with zeros.
    Matrix padded(activity.rows(), 2);
    for (std::size_t r = 0; r < activity.rows(); ++r) padded(r, 0) = activity(r, 0);
    return layer_pca(padded);
  }
  const Pca2d p = pca_2d(activity);
  out.projected = p.projected;
  out.explained_variance = p.explained_variance;
  out.degenerate = p.degenerate;
  out.variance_fraction = Vector(2, 0.0);
  if (!p.degenerate) {
    for (std::size_t k = 0; k < 2; ++k)
      out.variance_fraction[k] = std::clamp(p.explained_variance[k] / p.total_variance, 0.0, 1.0);
  }
  return out;
}

LayerRange range_of(const Matrix& m) {
  if (m.empty()) return {};
  const auto [lo, hi] = std::minmax_element(m.flat().begin(), m.flat().end());
  return {*lo, *hi, *hi - *lo};
}

}  // namespace

ContextPca context_pca(const Rollout& rollout) {
  require(rollout.steps() >= 2, "context_pca: rollout needs at least 2 steps");
  return {layer_pca(rollout.cf_activity), layer_pca(rollout.cs_activity)};
}

ActivityRange activity_range(const Rollout& rollout) {
  return {range_of(rollout.cf_activity), range_of(rollout.cs_activity)};
}

ArmSummary summarize_arm(CellKind kind, const TrainingLog& log, const SequenceSet& data,
                         const Network& trained, double alpha) {
  ArmSummary arm;
  arm.cell = std::string(to_string(kind));
  const RmsReport rms = rms_report(data, trained, alpha);
  arm.final_rms = rms.per_element_rms;
  arm.final_sq_error = rms.total_sq_error;
  arm.initial_error = log.initial_error;
  arm.mean_ms = log.mean_ms();
  arm.median_ms = log.median_ms();
  arm.epochs = log.epochs.size();
  arm.total_steps = log.total_steps;
  arm.curve = log.curve();
  if (arm.curve.size() >= 2) {
    std::vector<double> diffs;
    for (std::size_t i = 1; i < arm.curve.size(); ++i) diffs.push_back(arm.curve[i] - arm.curve[i - 1]);
    double mean = 0.0;
    for (double d : diffs) mean += d;
    mean /= static_cast<double>(diffs.size());
    for (double d : diffs) arm.curve_step_variance += (d - mean) * (d - mean);
    arm.curve_step_variance /= static_cast<double>(diffs.size());
  }
  arm.activity = activity_range(run_sequence(trained, data.sequences.front().data, alpha));
  return arm;
}

ComparisonReport make_comparison(ArmSummary mtrnn, ArmSummary mtgru, bool serial,
                                 nlohmann::json config) {
  ComparisonReport r{std::move(mtrnn), std::move(mtgru), 0.0, 0.0, serial, std::move(config)};
  r.time_ratio = r.mtrnn.mean_ms > 0.0 ? r.mtgru.mean_ms / r.mtrnn.mean_ms : 0.0;
  r.error_ratio = r.mtrnn.final_rms > 0.0 ? r.mtgru.final_rms / r.mtrnn.final_rms : 0.0;
  return r;
}

nlohmann::json to_json_value(const ArmSummary& a) {
  auto range = [](const LayerRange& l) { return nlohmann::json{{"min", l.min}, {"max", l.max}, {"span", l.span}}; };
  return {{"cell", a.cell},
          {"final_per_element_rms", a.final_rms},
          {"final_total_sq_error", a.final_sq_error},
          {"initial_error", a.initial_error},
          {"mean_ms_per_gd", a.mean_ms},
          {"median_ms_per_gd", a.median_ms},
          {"epochs", a.epochs},
          {"total_gd_steps", a.total_steps},
          {"curve", a.curve},
          {"curve_step_variance", a.curve_step_variance},
          {"activity_range", {{"cf", range(a.activity.cf)}, {"cs", range(a.activity.cs)}}}};
}

nlohmann::json to_json_value(const ComparisonReport& r) {
  return {{"mtrnn", to_json_value(r.mtrnn)},
          {"mtgru", to_json_value(r.mtgru)},
          {"time_ratio_mtgru_over_mtrnn", r.time_ratio},
          {"error_ratio_mtgru_over_mtrnn", r.error_ratio},
          {"serial", r.serial},
          {"notes",
           {{"rms", "final_per_element_rms = sqrt(sum of squared residuals / ((T-1)*D)) pooled over all "
                    "sequences; final_total_sq_error is the plain sum of squared residuals"},
            {"curve", "per-epoch sum over sequences of the last iteration's loss 0.5*sum residual^2"},
            {"alpha", "alpha weights the fed-back prediction unless alpha_on_prediction is false"},
            {"timing", r.serial ? "arms trained one after the other"
                                : "arms trained concurrently; timings are only comparable on idle cores"}}},
          {"config", r.config}};
}

// ---------------------------------------------------------------------------

PlotKind parse_plot_kind(std::string_view name) {
  if (name == "training_curve") return PlotKind::TrainingCurve;
  if (name == "prediction_overlay") return PlotKind::PredictionOverlay;
  if (name == "context_activity") return PlotKind::ContextActivity;
  if (name == "context_pca") return PlotKind::ContextPca;
  throw ContractError("unknown plot kind '" + std::string(name) +
                      "'; valid kinds: training_curve, prediction_overlay, context_activity, context_pca");
}

std::string_view to_string(PlotKind kind) {
  switch (kind) {
    case PlotKind::TrainingCurve: return "training_curve";
    case PlotKind::PredictionOverlay: return "prediction_overlay";
    case PlotKind::ContextActivity: return "context_activity";
    case PlotKind::ContextPca: return "context_pca";
  }
  return "?";
}

void export_training_curve(const TrainingLog& log, const fs::path& path) {
  Matrix m(log.epochs.size(), 3);
  const double elems = static_cast<double>(std::max<std::size_t>(log.target_elements, 1));
  for (std::size_t i = 0; i < log.epochs.size(); ++i) {
    const double total = log.epochs[i].total_error();
    m(i, 0) = static_cast<double>(log.epochs[i].epoch);
    m(i, 1) = total;
    m(i, 2) = std::sqrt(2.0 * total / elems);
  }
  write_csv(path, {"epoch", "total_error", "per_element_rms"}, m);
}

void export_prediction_overlay(const Rollout& rollout, const Matrix& seq, const fs::path& path) {
  require(rollout.steps() == seq.rows() && rollout.predictions.cols() == seq.cols(),
          "export_prediction_overlay: rollout and sequence shapes differ");
  const std::size_t dims = seq.cols();
  std::vector<std::string> header{"t"};
  for (std::size_t d = 0; d < dims; ++d) header.push_back("real_d" + std::to_string(d));
  for (std::size_t d = 0; d < dims; ++d) header.push_back("pred_d" + std::to_string(d));
  Matrix m(seq.rows() - 1, 1 + 2 * dims);
  for (std::size_t t = 1; t < seq.rows(); ++t) {
    m(t - 1, 0) = static_cast<double>(t);
    for (std::size_t d = 0; d < dims; ++d) {
      m(t - 1, 1 + d) = seq(t, d);
      m(t - 1, 1 + dims + d) = rollout.predictions(t - 1, d);
    }
  }
  write_csv(path, header, m);
}

namespace {

void write_indexed(const fs::path& path, const std::string& prefix, const Matrix& values) {
  std::vector<std::string> header{"t"};
  for (std::size_t c = 0; c < values.cols(); ++c) header.push_back(prefix + std::to_string(c));
  Matrix m(values.rows(), values.cols() + 1);
  for (std::size_t r = 0; r < values.rows(); ++r) {
    m(r, 0) = static_cast<double>(r);
    for (std::size_t c = 0; c < values.cols(); ++c) m(r, c + 1) = values(r, c);
  }
  write_csv(path, header, m);
}

}  // namespace

std::vector<fs::path> export_context_activity(const Rollout& rollout, const fs::path& dir,
                                              const std::string& stem) {
  const fs::path cf = dir / (stem + "_cf.csv");
  const fs::path cs = dir / (stem + "_cs.csv");
  write_indexed(cf, "u", rollout.cf_activity);
  write_indexed(cs, "u", rollout.cs_activity);
  return {cf, cs};
}

std::vector<fs::path> export_context_pca(const Rollout& rollout, const fs::path& dir,
                                         const std::string& stem) {
  const ContextPca pca = context_pca(rollout);
  const fs::path cf = dir / (stem + "_cf_pca.csv");
  const fs::path cs = dir / (stem + "_cs_pca.csv");
  std::vector<std::string> header{"t", "pc1", "pc2"};
  auto write = [&](const fs::path& p, const LayerPca& l) {
    Matrix m(l.projected.rows(), 3);
    for (std::size_t r = 0; r < m.rows(); ++r) {
      m(r, 0) = static_cast<double>(r);
      m(r, 1) = l.projected(r, 0);
      m(r, 2) = l.projected(r, 1);
    }
    write_csv(p, header, m);
  };
  write(cf, pca.cf);
  write(cs, pca.cs);
  return {cf, cs};
}

void write_training_log(const TrainingLog& log, const fs::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f << "epoch,seq_id,iterations,final_error,mean_iter_ms\n";
  for (const auto& e : log.epochs)
    for (const auto& s : e.sequences)
      f << e.epoch << ',' << s.seq_id << ',' << s.iterations << ',' << format_double(s.final_error) << ','
        << format_double(s.mean_iter_ms) << '\n';
  if (!f) throw IoError("failed writing " + path.string());
}

}  // namespace mtscale
