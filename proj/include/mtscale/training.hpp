#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mtscale/data.hpp"
#include "mtscale/errors.hpp"
#include "mtscale/network.hpp"

namespace mtscale {

struct TrainConfig {
  double eta = 1e-4;
  double threshold = 1e-3;
  std::size_t max_iteration = 2000;
  std::size_t epochs = 30;
  double alpha = 0.9;
  // Rescale the full gradient to this norm when it is larger; 0 disables.
  double clip_norm = 0.0;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void validate(const TrainConfig& cfg);

struct LossResult {
  double loss = 0.0;             // ½ Σ_t Σ_d (o_t,d - seq_t+1,d)²
  Vector per_step_sq_errors;     // Σ_d residual² for each of the T-1 targets
};

LossResult sequence_loss(const Rollout& rollout, const Matrix& seq);

// dL/do_t for every rollout step; the final row is zero (no target).
Matrix loss_output_gradients(const Rollout& rollout, const Matrix& seq);

// Rollout plus full BPTT at the given mixing ratio.
struct LossAndGradients {
  double loss = 0.0;
  NetworkGradients gradients;
};

LossAndGradients loss_and_gradients(const Network& net, const Matrix& seq, double alpha);

// One rollout, BPTT and w ← w - η ∂L/∂w. Returns the rollout's loss (before
// the update). Throws NumericError naming the first non-finite tensor; the
// weights are left untouched in that case.
double sgd_iteration(Network& net, const Matrix& seq, const TrainConfig& cfg);

struct SequenceRecord {
  std::string seq_id;
  std::size_t iterations = 0;
  double first_error = 0.0;
  double final_error = 0.0;
  double mean_iter_ms = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::vector<SequenceRecord> sequences;

  double total_error() const;
};

struct TrainingLog {
  double initial_error = 0.0;  // Σ over sequences of the untrained loss
  std::size_t target_elements = 0;  // Σ (T-1)·D, for per-element RMS
  std::vector<EpochRecord> epochs;
  std::vector<double> iteration_ms;
  std::size_t total_steps = 0;

  std::vector<double> curve() const;  // total_error() per epoch
  double mean_ms() const;
  double median_ms() const;
};

class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, TrainingLog partial)
      : NumericError(what), partial_log(std::move(partial)) {}
  TrainingLog partial_log;
};

// Stop test for one sequence: keep iterating while error > threshold and
// fewer than max_iteration iterations have run.
bool keep_iterating(double error, std::size_t iterations, const TrainConfig& cfg);

// One pass over the set in manifest order. Timing samples are appended to
// `timings` when it is non-null.
EpochRecord train_epoch(const SequenceSet& data, Network& net, const TrainConfig& cfg,
                        std::size_t epoch_index = 1, std::vector<double>* timings = nullptr);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Throws TrainingAborted (carrying the partial log) on a numeric failure.
TrainingLog train(const SequenceSet& data, Network& net, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

// Σ_seq loss at the given alpha, no updates.
double evaluate_loss(const SequenceSet& data, const Network& net, double alpha);

struct GradCheckEntry {
  std::string block;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  std::size_t argmax_row = 0;
  std::size_t argmax_col = 0;
  double analytic_at_max = 0.0;
  double numeric_at_max = 0.0;
  std::size_t checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double epsilon = 0.0;
  double alpha = 0.0;

  double worst_rel_error() const;
  const GradCheckEntry& worst() const;
};

struct GradCheckOptions {
  double epsilon = 1e-5;
  // Coordinates per block; blocks with fewer entries are checked exhaustively.
  std::size_t samples = 100;
  double alpha = 0.0;
  std::uint64_t seed = 12345;
  // Applied to the analytic gradients before comparison (negative controls).
  std::function<void(NetworkGradients&)> tamper;
};

// |a - b| / max(|a|, |b|, 1e-8)
double relative_error(double a, double b);

GradCheckReport grad_check(const Network& net, const Matrix& seq, const GradCheckOptions& opts);

}  // namespace mtscale
