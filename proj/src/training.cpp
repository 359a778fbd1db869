#include "mtscale/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace mtscale {

void validate(const TrainConfig& cfg) {
  require(cfg.eta >= 0.0 && std::isfinite(cfg.eta), "TrainConfig.eta must be finite and >= 0");
  require(cfg.threshold > 0.0, "TrainConfig.threshold must be > 0");
  require(cfg.max_iteration >= 1, "TrainConfig.max_iteration must be >= 1");
  require(cfg.epochs >= 1, "TrainConfig.epochs must be >= 1");
  require(cfg.alpha >= 0.0 && cfg.alpha <= 1.0, "TrainConfig.alpha must lie in [0,1]");
  require(cfg.clip_norm >= 0.0, "TrainConfig.clip_norm must be >= 0");
}

namespace {

void check_rollout_matches(const Rollout& rollout, const Matrix& seq) {
  require(rollout.steps() == seq.rows() && rollout.predictions.cols() == seq.cols(),
          "rollout of shape " + rollout.predictions.shape_string() +
              " was not produced from a sequence of shape " + seq.shape_string());
}

}  // namespace

LossResult sequence_loss(const Rollout& rollout, const Matrix& seq) {
  check_rollout_matches(rollout, seq);
  const std::size_t targets = seq.rows() - 1;
  LossResult out{0.0, Vector(targets, 0.0)};
  for (std::size_t t = 0; t < targets; ++t) {
    double s = 0.0;
    for (std::size_t d = 0; d < seq.cols(); ++d) {
      const double r = rollout.predictions(t, d) - seq(t + 1, d);
      s += r * r;
    }
    out.per_step_sq_errors[t] = s;
    out.loss += s;
  }
  out.loss *= 0.5;
  return out;
}

Matrix loss_output_gradients(const Rollout& rollout, const Matrix& seq) {
  check_rollout_matches(rollout, seq);
  Matrix g(seq.rows(), seq.cols());
  for (std::size_t t = 0; t + 1 < seq.rows(); ++t)
    for (std::size_t d = 0; d < seq.cols(); ++d) g(t, d) = rollout.predictions(t, d) - seq(t + 1, d);
  return g;
}

LossAndGradients loss_and_gradients(const Network& net, const Matrix& seq, double alpha) {
  const Rollout rollout = run_sequence(net, seq, alpha);
  LossAndGradients out;
  out.loss = sequence_loss(rollout, seq).loss;
  out.gradients = backward(net, rollout, loss_output_gradients(rollout, seq));
  return out;
}

double sgd_iteration(Network& net, const Matrix& seq, const TrainConfig& cfg) {
  LossAndGradients lg = loss_and_gradients(net, seq, cfg.alpha);
  if (!std::isfinite(lg.loss)) throw NumericError("non-finite loss (" + std::to_string(lg.loss) + ")");
  auto blocks = parameter_blocks(net);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (!lg.gradients.blocks[i].all_finite())
      throw NumericError("non-finite gradient in block " + blocks[i].name);
  }
  if (cfg.clip_norm > 0.0) {
    const double norm = std::sqrt(lg.gradients.squared_norm());
    if (norm > cfg.clip_norm) lg.gradients.scale(cfg.clip_norm / norm);
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    auto w = blocks[i].matrix->flat();
    auto g = lg.gradients.blocks[i].flat();
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= cfg.eta * g[k];
  }
  return lg.loss;
}

double EpochRecord::total_error() const {
  double s = 0.0;
  for (const auto& r : sequences) s += r.final_error;
  return s;
}

std::vector<double> TrainingLog::curve() const {
  std::vector<double> c;
  for (const auto& e : epochs) c.push_back(e.total_error());
  return c;
}

double TrainingLog::mean_ms() const {
  if (iteration_ms.empty()) return 0.0;
  return std::accumulate(iteration_ms.begin(), iteration_ms.end(), 0.0) /
         static_cast<double>(iteration_ms.size());
}

double TrainingLog::median_ms() const {
  if (iteration_ms.empty()) return 0.0;
  std::vector<double> v = iteration_ms;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  if (v.size() % 2 == 1) return v[mid];
  const double upper = v[mid];
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

bool keep_iterating(double error, std::size_t iterations, const TrainConfig& cfg) {
  return error > cfg.threshold && iterations < cfg.max_iteration;
}

EpochRecord train_epoch(const SequenceSet& data, Network& net, const TrainConfig& cfg,
                        std::size_t epoch_index, std::vector<double>* timings) {
  validate(cfg);
  require(!data.sequences.empty(), "train_epoch: data set is empty");
  EpochRecord record;
  record.epoch = epoch_index;
  for (const auto& seq : data.sequences) {
    SequenceRecord rec;
    rec.seq_id = seq.id;
    double error = std::numeric_limits<double>::infinity();
    double total_ms = 0.0;
    while (keep_iterating(error, rec.iterations, cfg)) {
      const auto start = std::chrono::steady_clock::now();
      try {
        error = sgd_iteration(net, seq.data, cfg);
      } catch (const NumericError& e) {
        throw NumericError("sequence '" + seq.id + "', iteration " + std::to_string(rec.iterations + 1) +
                           ": " + e.what());
      }
      const double ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      total_ms += ms;
      if (timings) timings->push_back(ms);
      if (rec.iterations == 0) rec.first_error = error;
      ++rec.iterations;
    }
    rec.final_error = error;
    rec.mean_iter_ms = total_ms / static_cast<double>(rec.iterations);
    record.sequences.push_back(std::move(rec));
  }
  return record;
}

double evaluate_loss(const SequenceSet& data, const Network& net, double alpha) {
  double total = 0.0;
  for (const auto& seq : data.sequences) total += sequence_loss(run_sequence(net, seq.data, alpha), seq.data).loss;
  return total;
}

TrainingLog train(const SequenceSet& data, Network& net, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  validate(cfg);
  validate(data);
  require(data.dims == net.config.n_io, "train: data has " + std::to_string(data.dims) +
                                            " dims, network IO size is " +
                                            std::to_string(net.config.n_io));
  TrainingLog log;
  log.initial_error = evaluate_loss(data, net, cfg.alpha);
  for (const auto& s : data.sequences) log.target_elements += (s.data.rows() - 1) * s.data.cols();
  for (std::size_t e = 1; e <= cfg.epochs; ++e) {
    try {
      EpochRecord rec = train_epoch(data, net, cfg, e, &log.iteration_ms);
      for (const auto& s : rec.sequences) log.total_steps += s.iterations;
      log.epochs.push_back(std::move(rec));
    } catch (const NumericError& err) {
      throw TrainingAborted("epoch " + std::to_string(e) + ", " + err.what(), std::move(log));
    }
    if (on_epoch) on_epoch(log.epochs.back());
  }
  return log;
}

// ---------------------------------------------------------------------------

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

double GradCheckReport::worst_rel_error() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.max_rel_error);
  return w;
}

const GradCheckEntry& GradCheckReport::worst() const {
  require(!entries.empty(), "GradCheckReport is empty");
  return *std::max_element(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return a.max_rel_error < b.max_rel_error;
  });
}

namespace {

// Independent extended-precision forward pass used only for the finite
// differences. In double, forward-pass rounding divided by 2ε swamps the
// smaller gradient entries; long double pushes that floor down ~2000x.
using Real = long double;

struct RefMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<Real> v;
};

struct RefNet {
  NetworkConfig config;
  std::vector<RefMatrix> blocks;
  std::vector<Real> cf_tau, cs_tau;
};

RefNet make_ref(const Network& net) {
  RefNet r;
  r.config = net.config;
  for (const auto& b : parameter_blocks(net)) {
    RefMatrix m{b.matrix->rows(), b.matrix->cols(), {}};
    for (double x : b.matrix->flat()) m.v.push_back(x);
    r.blocks.push_back(std::move(m));
  }
  auto taus = [](const Cell& cell) {
    if (const auto* rnn = std::get_if<MtrnnCell>(&cell))
      return std::vector<Real>(rnn->tau.begin(), rnn->tau.end());
    return std::vector<Real>(1, std::get<MtgruCell>(cell).tau);
  };
  r.cf_tau = taus(net.cf);
  r.cs_tau = taus(net.cs);
  return r;
}

std::vector<Real> ref_mul(const RefMatrix& m, const std::vector<Real>& x) {
  std::vector<Real> out(m.rows, 0.0L);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) out[i] += m.v[i * m.cols + j] * x[j];
  return out;
}

// Updates the state in place and returns the layer output.
std::vector<Real> ref_layer(const RefMatrix* w, bool gru, const std::vector<Real>& tau,
                            const std::vector<Real>& x, std::vector<Real>& s) {
  const std::size_t n = s.size();
  if (!gru) {
    const std::vector<Real> drive = ref_mul(w[0], x);
    std::vector<Real> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = (1.0L - 1.0L / tau[i]) * s[i] + drive[i] / tau[i];
      y[i] = std::tanh(s[i]);
    }
    return y;
  }
  const Real k = 1.0L / tau[0];
  std::vector<Real> ar = ref_mul(w[0], x), az = ref_mul(w[1], x), au = ref_mul(w[2], x);
  const std::vector<Real> hr = ref_mul(w[3], s), hz = ref_mul(w[4], s);
  std::vector<Real> rh(n);
  for (std::size_t i = 0; i < n; ++i) {
    ar[i] = 1.0L / (1.0L + std::exp(-(ar[i] + hr[i])));
    az[i] = 1.0L / (1.0L + std::exp(-(az[i] + hz[i])));
    rh[i] = ar[i] * s[i];
  }
  const std::vector<Real> hu = ref_mul(w[5], rh);
  for (std::size_t i = 0; i < n; ++i) {
    const Real u = std::tanh(au[i] + hu[i]);
    s[i] = ((1.0L - az[i]) * s[i] + az[i] * u) * k + (1.0L - k) * s[i];
  }
  return s;
}

Real ref_loss(const RefNet& net, const Matrix& seq, double alpha) {
  const auto& c = net.config;
  const bool gru = c.cell_kind == CellKind::Mtgru;
  const std::size_t per_cell = gru ? 6 : 1;
  const RefMatrix* cf_w = &net.blocks[0];
  const RefMatrix* cs_w = &net.blocks[per_cell];
  const RefMatrix& readout = net.blocks[2 * per_cell];
  const Real a = c.alpha_on_prediction ? alpha : 1.0 - alpha;

  std::vector<Real> cf_s(c.n_cf, 0.0L), cs_s(c.n_cs, 0.0L);
  std::vector<Real> y_cf(c.n_cf, 0.0L), y_cs(c.n_cs, 0.0L), o(c.n_io, 0.0L);
  Real loss = 0.0L;
  for (std::size_t t = 0; t + 1 < seq.rows(); ++t) {
    std::vector<Real> in;
    for (std::size_t d = 0; d < c.n_io; ++d) {
      const Real i_t = t == 0 ? Real(seq(0, d)) : a * o[d] + (1.0L - a) * seq(t, d);
      in.push_back(std::tanh(i_t));
    }
    in.insert(in.end(), y_cs.begin(), y_cs.end());
    if (!gru) in.insert(in.end(), y_cf.begin(), y_cf.end());
    y_cf = ref_layer(cf_w, gru, net.cf_tau, in, cf_s);

    std::vector<Real> cs_in = y_cf;
    if (!gru) cs_in.insert(cs_in.end(), y_cs.begin(), y_cs.end());
    y_cs = ref_layer(cs_w, gru, net.cs_tau, cs_in, cs_s);

    o = ref_mul(readout, y_cf);
    for (std::size_t d = 0; d < c.n_io; ++d) {
      if (!c.linear_readout) o[d] = std::tanh(o[d]);
      const Real r = o[d] - seq(t + 1, d);
      loss += 0.5L * r * r;
    }
  }
  return loss;
}

}  // namespace

GradCheckReport grad_check(const Network& net, const Matrix& seq, const GradCheckOptions& opts) {
  require(opts.epsilon > 0.0 && std::isfinite(opts.epsilon),
          "grad_check: epsilon must be positive, got " + std::to_string(opts.epsilon));
  require(seq.rows() >= 3, "grad_check: sequence needs at least 3 rows");
  require(opts.samples >= 1, "grad_check: samples must be >= 1");

  LossAndGradients analytic = loss_and_gradients(net, seq, opts.alpha);
  if (opts.tamper) opts.tamper(analytic.gradients);

  RefNet probe = make_ref(net);
  const auto blocks = parameter_blocks(net);
  Rng rng(opts.seed);
  GradCheckReport report;
  report.epsilon = opts.epsilon;
  report.alpha = opts.alpha;

  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const Matrix& w = *blocks[b].matrix;
    const std::size_t n = w.size();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), 0);
    if (n > opts.samples) {
      for (std::size_t i = 0; i < opts.samples; ++i)
        std::swap(coords[i], coords[i + rng.below(n - i)]);
      coords.resize(opts.samples);
    }

    GradCheckEntry entry;
    entry.block = blocks[b].name;
    for (std::size_t idx : coords) {
      Real& x = probe.blocks[b].v[idx];
      const Real saved = x;
      const Real eps = opts.epsilon;
      x = saved + eps;
      const Real up = ref_loss(probe, seq, opts.alpha);
      x = saved - eps;
      const Real down = ref_loss(probe, seq, opts.alpha);
      x = saved;
      const double numeric = static_cast<double>((up - down) / (2.0L * eps));
      const double a = analytic.gradients.blocks[b].flat()[idx];
      const double abs_err = std::abs(a - numeric);
      const double rel_err = relative_error(a, numeric);
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
      if (rel_err > entry.max_rel_error || entry.checked == 0) {
        entry.max_rel_error = rel_err;
        entry.argmax_row = idx / w.cols();
        entry.argmax_col = idx % w.cols();
        entry.analytic_at_max = a;
        entry.numeric_at_max = numeric;
      }
      ++entry.checked;
    }
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace mtscale
