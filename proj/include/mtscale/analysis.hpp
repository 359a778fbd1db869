#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mtscale/data.hpp"
#include "mtscale/network.hpp"
#include "mtscale/training.hpp"

namespace mtscale {

struct RmsReport {
  double per_element_rms = 0.0;  // sqrt(total_sq_error / ((T-1)·D))
  double total_sq_error = 0.0;   // Σ residual², no ½
  std::size_t elements = 0;
};

RmsReport rms_report(const Rollout& rollout, const Matrix& seq);
// Pooled over every sequence of the set.
RmsReport rms_report(const SequenceSet& data, const Network& net, double alpha);

struct LayerPca {
  Matrix projected;            // T×2
  Vector explained_variance;   // 2
  Vector variance_fraction;    // explained / total, each in [0,1]
  bool degenerate = false;     // constant activity
};

struct ContextPca {
  LayerPca cf;
  LayerPca cs;
};

ContextPca context_pca(const Rollout& rollout);

struct LayerRange {
  double min = 0.0;
  double max = 0.0;
  double span = 0.0;
};

struct ActivityRange {
  LayerRange cf;
  LayerRange cs;
};

ActivityRange activity_range(const Rollout& rollout);

struct ArmSummary {
  std::string cell;
  double final_rms = 0.0;
  double final_sq_error = 0.0;
  double initial_error = 0.0;
  double mean_ms = 0.0;
  double median_ms = 0.0;
  std::size_t epochs = 0;
  std::size_t total_steps = 0;
  std::vector<double> curve;
  // Variance of epoch-to-epoch changes of the curve; lower is steadier.
  double curve_step_variance = 0.0;
  ActivityRange activity;
};

ArmSummary summarize_arm(CellKind kind, const TrainingLog& log, const SequenceSet& data,
                         const Network& trained, double alpha);

struct ComparisonReport {
  ArmSummary mtrnn;
  ArmSummary mtgru;
  double time_ratio = 0.0;   // mean_ms(MTGRU) / mean_ms(MTRNN)
  double error_ratio = 0.0;  // final_rms(MTGRU) / final_rms(MTRNN)
  bool serial = true;
  nlohmann::json config = nlohmann::json::object();
};

ComparisonReport make_comparison(ArmSummary mtrnn, ArmSummary mtgru, bool serial,
                                 nlohmann::json config);
nlohmann::json to_json_value(const ArmSummary& arm);
nlohmann::json to_json_value(const ComparisonReport& report);

enum class PlotKind { TrainingCurve, PredictionOverlay, ContextActivity, ContextPca };

PlotKind parse_plot_kind(std::string_view name);
std::string_view to_string(PlotKind kind);

// epoch,total_error,per_element_rms
void export_training_curve(const TrainingLog& log, const std::filesystem::path& path);
// t,real_d0..,pred_d0.. for t = 1..T-1; pred at t was made at step t-1
void export_prediction_overlay(const Rollout& rollout, const Matrix& seq,
                               const std::filesystem::path& path);
// <stem>_cf.csv and <stem>_cs.csv: t,u0,u1,...
std::vector<std::filesystem::path> export_context_activity(const Rollout& rollout,
                                                           const std::filesystem::path& dir,
                                                           const std::string& stem);
// <stem>_cf_pca.csv and <stem>_cs_pca.csv: t,pc1,pc2
std::vector<std::filesystem::path> export_context_pca(const Rollout& rollout,
                                                      const std::filesystem::path& dir,
                                                      const std::string& stem);

// Per-(epoch, sequence) log: epoch,seq_id,iterations,final_error,mean_iter_ms
void write_training_log(const TrainingLog& log, const std::filesystem::path& path);

}  // namespace mtscale
