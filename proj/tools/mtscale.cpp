// mtscale: data generation, training, MTRNN/MTGRU comparison, gradient
// checking and analysis exports.
//
// Exit codes: 0 ok, 2 usage or configuration error, 3 numeric abort,
// 4 gradient check failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mtscale/analysis.hpp"
#include "mtscale/data.hpp"
#include "mtscale/errors.hpp"
#include "mtscale/experiment.hpp"
#include "mtscale/network.hpp"
#include "mtscale/training.hpp"

namespace fs = std::filesystem;
using namespace mtscale;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitGradCheck = 4;

struct RunArgs {
  std::string config;
  std::string preset;
  std::string cell;
  std::string data;
  std::string out;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> max_iteration;
  std::optional<std::uint64_t> seed;
  bool serial = false;
};

void add_run_options(CLI::App* cmd, RunArgs& a) {
  cmd->add_option("--config", a.config, "JSON experiment config");
  cmd->add_option("--preset", a.preset, "start from a built-in preset")
      ->check(CLI::IsMember({"case1", "case2"}));
  cmd->add_option("--data", a.data, "sequence set directory (overrides config)");
  cmd->add_option("--out", a.out, "run directory (overrides config)");
  cmd->add_option("--epochs", a.epochs, "override epochs");
  cmd->add_option("--max-iteration", a.max_iteration, "override per-sequence iteration cap");
  cmd->add_option("--seed", a.seed, "override network seed");
}

ExperimentConfig resolve_config(const RunArgs& a) {
  require(a.config.empty() || a.preset.empty(), "give either --config or --preset, not both");
  require(!a.config.empty() || !a.preset.empty(), "one of --config or --preset is required");
  ExperimentConfig cfg;
  if (!a.config.empty()) {
    cfg = load_experiment_config(a.config);
  } else {
    cfg = a.preset == "case1" ? preset_case1() : preset_case2();
  }
  if (!a.cell.empty()) cfg.network.cell_kind = parse_cell_kind(a.cell);
  if (!a.data.empty()) cfg.data = a.data;
  if (!a.out.empty()) cfg.out = a.out;
  if (a.epochs) cfg.training.epochs = *a.epochs;
  if (a.max_iteration) cfg.training.max_iteration = *a.max_iteration;
  if (a.seed) cfg.network.seed = *a.seed;
  if (auto env = apply_seed_env(cfg)) std::cerr << "MTSCALE_SEED overrides seed: " << *env << '\n';
  require(!cfg.data.empty(), "no data directory: set \"data\" in the config or pass --data");
  require(!cfg.out.empty(), "no output directory: set \"out\" in the config or pass --out");
  validate(cfg);
  return cfg;
}

void progress(const std::string& line) { std::cerr << line << '\n'; }

void print_arm(const ArmSummary& a) {
  std::printf("%-6s  rms %.6g  sq_error %.6g  ms/step mean %.4g median %.4g  steps %zu\n",
              a.cell.c_str(), a.final_rms, a.final_sq_error, a.mean_ms, a.median_ms,
              a.total_steps);
}

// ---------------------------------------------------------------------------

struct GenArgs {
  bool case1 = false;
  bool multimodal = false;
  std::string out;
  MultimodalSpec spec;
};

int cmd_gen_data(const GenArgs& a) {
  require(a.case1 != a.multimodal, "choose exactly one of --case1 or --multimodal");
  const SequenceSet set = a.case1 ? gen_case1() : gen_multimodal(a.spec);
  save_set(set, a.out);
  std::printf("wrote %zu sequences (D=%zu) to %s\n", set.size(), set.dims, a.out.c_str());
  return kExitOk;
}

int cmd_train(const RunArgs& a) {
  const ExperimentConfig cfg = resolve_config(a);
  const SequenceSet data = load_set(cfg.data);
  const TrainRun run = run_training(cfg, data, cfg.out, progress);
  print_arm(summarize_arm(cfg.network.cell_kind, run.log, data, run.net, cfg.training.alpha));
  return kExitOk;
}

int cmd_compare(const RunArgs& a) {
  const ExperimentConfig cfg = resolve_config(a);
  const SequenceSet data = load_set(cfg.data);
  const ComparisonReport r = run_comparison(cfg, data, cfg.out, a.serial, progress);
  print_arm(r.mtrnn);
  print_arm(r.mtgru);
  std::printf("time ratio mtgru/mtrnn %.4g  error ratio %.4g  (%s)\n", r.time_ratio,
              r.error_ratio, r.serial ? "serial" : "concurrent");
  return kExitOk;
}

struct GradArgs {
  std::string cell = "both";
  double eps = 1e-5;
  std::size_t samples = 100;
  double tolerance = 1e-5;
  bool inject_fault = false;
};

// Small fixed instance: n_io=2, n_cf=10, n_cs=3 on the first 20 steps of X2,
// teacher forced, plus a mixed-input pass on 5 steps.
int cmd_grad_check(const GradArgs& a) {
  require(a.eps > 0.0, "--eps must be > 0");
  std::vector<CellKind> kinds;
  if (a.cell == "both") kinds = {CellKind::Mtrnn, CellKind::Mtgru};
  else kinds = {parse_cell_kind(a.cell)};

  const Matrix& x2 = gen_case1().at("X2").data;
  auto head = [&](std::size_t t) {
    Matrix m(t, x2.cols());
    for (std::size_t r = 0; r < t; ++r) m.set_row(r, x2.row(r));
    return m;
  };
  const Matrix long_seq = head(20);
  const Matrix short_seq = head(5);

  bool ok = true;
  for (CellKind kind : kinds) {
    NetworkConfig nc;
    nc.n_io = 2;
    nc.n_cf = 10;
    nc.n_cs = 3;
    nc.tau_f = 2.0;
    nc.tau_s = 5.0;
    nc.cell_kind = kind;
    nc.seed = 2024;
    const Network net = build_network(nc);
    for (double alpha : {0.0, 0.9}) {
      GradCheckOptions opts;
      opts.epsilon = a.eps;
      opts.samples = a.samples;
      opts.alpha = alpha;
      if (a.inject_fault) {
        opts.tamper = [](NetworkGradients& g) {
          for (double& v : g.blocks.front().flat()) v += 1e-3;
        };
      }
      const GradCheckReport rep = grad_check(net, alpha == 0.0 ? long_seq : short_seq, opts);
      std::printf("%s alpha=%g\n", std::string(to_string(kind)).c_str(), alpha);
      for (const auto& e : rep.entries)
        std::printf("  %-10s checked %4zu  max_abs %.3e  max_rel %.3e\n", e.block.c_str(),
                    e.checked, e.max_abs_error, e.max_rel_error);
      if (rep.worst_rel_error() >= a.tolerance) {
        const auto& w = rep.worst();
        std::printf("  FAIL %s[%zu,%zu]: analytic %.10g numeric %.10g rel %.3e\n",
                    w.block.c_str(), w.argmax_row, w.argmax_col, w.analytic_at_max,
                    w.numeric_at_max, w.max_rel_error);
        ok = false;
      }
    }
  }
  std::printf("%s\n", ok ? "grad-check passed" : "grad-check FAILED");
  return ok ? kExitOk : kExitGradCheck;
}

struct AnalyzeArgs {
  std::string checkpoint;
  std::string data;
  std::string kind;
  std::string out;
  std::string seq;
  std::optional<double> alpha;
};

int cmd_analyze(const AnalyzeArgs& a) {
  const PlotKind kind = parse_plot_kind(a.kind);
  const Network net = load_checkpoint(a.checkpoint);
  const SequenceSet data = load_set(a.data);
  require(data.dims == net.config.n_io,
          "checkpoint expects " + std::to_string(net.config.n_io) + " dims, data has " +
              std::to_string(data.dims));
  const NamedSequence& s = a.seq.empty() ? data.sequences.front() : data.at(a.seq);
  const double alpha = a.alpha.value_or(net.config.alpha);
  const Rollout r = run_sequence(net, s.data, alpha);
  const fs::path out(a.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create directory " + out.string() + ": " + ec.message());

  std::vector<fs::path> written;
  switch (kind) {
    case PlotKind::PredictionOverlay:
      written.push_back(out / (s.id + "_prediction_overlay.csv"));
      export_prediction_overlay(r, s.data, written.back());
      break;
    case PlotKind::ContextActivity:
      written = export_context_activity(r, out, s.id + "_activity");
      break;
    case PlotKind::ContextPca: {
      written = export_context_pca(r, out, s.id + "_activity");
      const ContextPca pca = context_pca(r);
      if (pca.cf.degenerate) std::printf("note: cf activity is constant, PCA is all zeros\n");
      if (pca.cs.degenerate) std::printf("note: cs activity is constant, PCA is all zeros\n");
      break;
    }
    case PlotKind::TrainingCurve: {
      const fs::path run_curve = fs::path(a.checkpoint).parent_path() / "curve.csv";
      if (fs::exists(run_curve)) {
        written.push_back(out / "training_curve.csv");
        fs::copy_file(run_curve, written.back(), fs::copy_options::overwrite_existing);
        break;
      }
      // No run log next to the checkpoint: report the pooled error of the loaded weights.
      const RmsReport rep = rms_report(data, net, alpha);
      TrainingLog log;
      log.target_elements = rep.elements;
      EpochRecord e;
      e.epoch = 1;
      for (const auto& seq : data.sequences) {
        SequenceRecord rec;
        rec.seq_id = seq.id;
        rec.final_error = sequence_loss(run_sequence(net, seq.data, alpha), seq.data).loss;
        e.sequences.push_back(rec);
      }
      log.epochs.push_back(e);
      written.push_back(out / "training_curve.csv");
      export_training_curve(log, written.back());
      break;
    }
  }
  for (const auto& p : written) std::printf("wrote %s\n", p.string().c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-timescale recurrent network toolkit"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "write a sequence set");
  gen_cmd->add_flag("--case1", gen.case1, "the two 2-D analytic sequences");
  gen_cmd->add_flag("--multimodal", gen.multimodal, "synthetic 43-D command/motor set");
  gen_cmd->add_option("--seqs", gen.spec.n_sequences, "number of multimodal sequences");
  gen_cmd->add_option("--seed", gen.spec.seed, "multimodal sampling seed");
  gen_cmd->add_option("--seq-len", gen.spec.seq_len, "timesteps per sequence");
  gen_cmd->add_option("--motor-dims", gen.spec.motor_dims, "motor dimensions after the command");
  gen_cmd->add_option("--noise", gen.spec.noise_std, "Gaussian noise std");
  gen_cmd->add_option("--locations", gen.spec.n_locations, "number of locations");
  gen_cmd->add_flag("--full-sweep", gen.spec.full_sweep, "every action x object pair once");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();

  RunArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train one arm");
  add_run_options(train_cmd, train_args);
  train_cmd->add_option("--cell", train_args.cell, "mtrnn or mtgru")
      ->check(CLI::IsMember({"mtrnn", "mtgru"}));

  RunArgs cmp_args;
  auto* cmp_cmd = app.add_subcommand("compare", "train both arms and write a comparison report");
  add_run_options(cmp_cmd, cmp_args);
  cmp_cmd->add_flag("--serial", cmp_args.serial, "run the arms one after the other");

  GradArgs grad;
  auto* grad_cmd = app.add_subcommand("grad-check", "compare BPTT with central differences");
  grad_cmd->add_option("--cell", grad.cell, "mtrnn, mtgru or both")
      ->check(CLI::IsMember({"mtrnn", "mtgru", "both"}));
  grad_cmd->add_option("--eps", grad.eps, "finite-difference step");
  grad_cmd->add_option("--samples", grad.samples, "coordinates per parameter block");
  grad_cmd->add_option("--tolerance", grad.tolerance, "max relative error allowed");
  grad_cmd->add_flag("--inject-fault", grad.inject_fault)->group("");

  AnalyzeArgs an;
  auto* an_cmd = app.add_subcommand("analyze", "export plot data from a checkpoint");
  an_cmd->add_option("--checkpoint", an.checkpoint, "checkpoint.bin")->required();
  an_cmd->add_option("--data", an.data, "sequence set directory")->required();
  an_cmd->add_option("--kind", an.kind,
                     "training_curve, prediction_overlay, context_activity or context_pca")
      ->required();
  an_cmd->add_option("--out", an.out, "output directory")->required();
  an_cmd->add_option("--seq", an.seq, "sequence id (default: first)");
  an_cmd->add_option("--alpha", an.alpha, "mixing ratio (default: from checkpoint)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen);
    if (*train_cmd) return cmd_train(train_args);
    if (*cmp_cmd) return cmd_compare(cmp_args);
    if (*grad_cmd) return cmd_grad_check(grad);
    if (*an_cmd) return cmd_analyze(an);
  } catch (const NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
