// Acceptance runner: prints one PASS/FAIL line per criterion.
//
//   mtscale_acceptance [--work DIR] [--case2-iterations N] [criterion...]
//
// With no criterion arguments all eight run. Exit status is 0 only when every
// selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mtscale/analysis.hpp"
#include "mtscale/data.hpp"
#include "mtscale/experiment.hpp"
#include "mtscale/network.hpp"
#include "mtscale/training.hpp"
#include "oracles.hpp"

using namespace mtscale;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

struct Options {
  fs::path work = "acceptance_runs";
  std::size_t case2_iterations = 20;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

Matrix head_rows(const Matrix& m, std::size_t n) {
  Matrix out(n, m.cols());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m(r, c);
  return out;
}

NetworkConfig small_config(CellKind kind) {
  NetworkConfig c;
  c.n_io = 2;
  c.n_cf = 10;
  c.n_cs = 3;
  c.tau_f = 2.0;
  c.tau_s = 5.0;
  c.cell_kind = kind;
  c.seed = 2024;
  return c;
}

void criterion_1(Outcome& out, const Options&) {
  const Matrix seq = head_rows(gen_case1().at("X2").data, 20);
  double worst = 0.0;
  std::size_t fewest = std::numeric_limits<std::size_t>::max();
  for (CellKind kind : {CellKind::Mtrnn, CellKind::Mtgru}) {
    const Network net = build_network(small_config(kind));
    for (double alpha : {0.0, 0.9}) {
      GradCheckOptions opts;
      opts.epsilon = 1e-5;
      opts.samples = 100;
      opts.alpha = alpha;
      const GradCheckReport rep = grad_check(net, seq, opts);
      const auto blocks = parameter_blocks(net);
      for (std::size_t b = 0; b < rep.entries.size(); ++b) {
        const GradCheckEntry& e = rep.entries[b];
        const std::size_t size = blocks[b].matrix->size();
        out.require(e.checked >= std::min<std::size_t>(100, size),
                    std::string(to_string(kind)) + " " + e.block + " under-sampled");
        fewest = std::min(fewest, e.checked);
        if (e.max_rel_error >= 1e-5)
          out.require(false, std::string(to_string(kind)) + " " + e.block + " alpha " +
                                 std::to_string(alpha));
        worst = std::max(worst, e.max_rel_error);
      }
    }
  }
  out.detail << "worst relative error " << worst
             << " (< 1e-5), 100 coordinates per block, blocks under 100 entries checked in full"
             << " (smallest " << fewest << ")";
}

void criterion_2(Outcome& out, const Options&) {
  Rng rng(99);
  MtgruCell cell = make_mtgru_cell(7, 4, 1.0, rng);
  oracle::Gru<double> ref{oracle::lift<double>(cell.w_xr), oracle::lift<double>(cell.w_xz),
                          oracle::lift<double>(cell.w_xu), oracle::lift<double>(cell.w_hr),
                          oracle::lift<double>(cell.w_hz), oracle::lift<double>(cell.w_hu)};
  std::size_t bitwise = 0, trials = 200;
  for (std::size_t k = 0; k < trials; ++k) {
    const Matrix x = uniform_init(rng, 1, 4, 2.0);
    const Matrix h = uniform_init(rng, 1, 7, 1.0);
    MtgruState s{Vector(h.flat().begin(), h.flat().end())};
    const MtgruStep step = mtgru_step(cell, x.flat(), s);
    const auto expect = oracle::gru_step<double>(
        ref, std::vector<double>(x.flat().begin(), x.flat().end()), s.h);
    if (step.state.h == expect) ++bitwise;
  }
  out.require(bitwise == trials, "tau=1 bitwise equality");

  cell.tau = std::numeric_limits<double>::infinity();
  std::size_t frozen = 0;
  for (std::size_t k = 0; k < trials; ++k) {
    const Matrix x = uniform_init(rng, 1, 4, 2.0);
    const Matrix h = uniform_init(rng, 1, 7, 1.0);
    MtgruState s{Vector(h.flat().begin(), h.flat().end())};
    if (mtgru_step(cell, x.flat(), s).state.h == s.h) ++frozen;
  }
  out.require(frozen == trials, "frozen mode");

  MtrnnCell rnn = make_mtrnn_cell(5, 3, 1.0, rng);
  for (double& w : rnn.weights.flat()) w = 0.0;
  rnn.tau = {1.0, 1.5, 2.0, 7.0, 20.0};
  MtrnnState s{{0.9, -0.4, 0.7, -1.3, 2.0}};
  const Vector u0 = s.u;
  const Vector x{0.3, -0.2, 0.5};
  double decay_err = 0.0;
  for (int t = 1; t <= 50; ++t) {
    s = mtrnn_step(rnn, x, s).state;
    for (std::size_t i = 0; i < 5; ++i)
      decay_err = std::max(decay_err,
                           std::abs(s.u[i] - std::pow(1.0 - 1.0 / rnn.tau[i], t) * u0[i]));
  }
  out.require(decay_err <= 1e-12, "zero-weight decay");
  out.detail << bitwise << "/" << trials << " tau=1 steps bitwise equal, " << frozen << "/"
             << trials << " frozen steps exact, decay error " << decay_err;
}

void criterion_3(Outcome& out, const Options&) {
  const SequenceSet set = gen_case1();
  const Matrix& x1 = set.at("X1").data;
  const Matrix& x2 = set.at("X2").data;
  double err = 0.0;
  for (std::size_t k : {0, 25, 50, 75, 99}) {
    const double t = (static_cast<double>(k) - 50.0) / 50.0 * std::numbers::pi;
    const double a = std::sin(2 * t), b = std::sin(t);
    const double c = std::sin(2 * t) * std::cos(3 * t);
    const double d = t == 0.0 ? 1.0 : std::sin(3 * t) / (2 * t) * (std::sin(t) / t) - 0.5;
    err = std::max({err, std::abs(x1(k, 0) - a), std::abs(x1(k, 1) - b), std::abs(x2(k, 0) - c),
                    std::abs(x2(k, 1) - d)});
  }
  out.require(err <= 1e-12, "closed form");
  out.require(x2(50, 0) == 0.0 && std::abs(x2(50, 1) - 1.0) <= 1e-12, "X2 limit at t=0");
  const Vector cmd = encode_command("lift", "ball");
  out.require(cmd.size() == 2 && std::abs(cmd[0] - 0.8) <= 1e-12 &&
                  std::abs(cmd[1] - 0.2) <= 1e-12,
              "encode_command");
  out.detail << "max deviation " << err << ", X2(t=0) = (" << x2(50, 0) << ", " << x2(50, 1)
             << "), lift ball = [" << cmd[0] << ", " << cmd[1] << "]";
}

bool run_comparison_criterion(Outcome& out, const ExperimentConfig& cfg, const SequenceSet& data,
                              const fs::path& dir, ComparisonReport& report) {
  fs::remove_all(dir);
  const auto start = Clock::now();
  try {
    report = run_comparison(cfg, data, dir, true,
                            [](const std::string& line) { std::cerr << line << '\n'; });
  } catch (const std::exception& e) {
    out.require(false, std::string("compare aborted: ") + e.what());
    return false;
  }
  out.detail << "runtime " << seconds_since(start) << " s, ";
  return true;
}

void criterion_4(Outcome& out, const Options& opt) {
  ExperimentConfig cfg = load_experiment_config(fs::path(MTSCALE_SOURCE_DIR) / "presets/case1.json");
  ComparisonReport rep;
  if (!run_comparison_criterion(out, cfg, gen_case1(), opt.work / "case1", rep)) return;
  for (const ArmSummary* arm : {&rep.mtrnn, &rep.mtgru}) {
    const double end = arm->curve.back();
    out.detail << arm->cell << " curve " << arm->initial_error << " -> " << end << " ("
               << 100.0 * end / arm->initial_error << "%), ";
    out.require(arm->curve.size() == 30, arm->cell + " epochs");
    out.require(end < 0.2 * arm->initial_error, arm->cell + " below 20%");
  }
  std::size_t first_lead = 0;
  for (std::size_t e = 0; e < std::min<std::size_t>(10, rep.mtrnn.curve.size()); ++e)
    if (rep.mtrnn.curve[e] < rep.mtgru.curve[e]) {
      first_lead = e + 1;
      break;
    }
  out.require(first_lead != 0, "mtrnn below mtgru by epoch 10");
  out.require(rep.time_ratio >= 1.2 && rep.time_ratio <= 3.5, "time ratio");
  out.detail << "mtrnn first below mtgru at epoch " << first_lead << ", time ratio "
             << rep.time_ratio << " (" << rep.mtgru.mean_ms << " / " << rep.mtrnn.mean_ms
             << " ms)";
}

void criterion_5(Outcome& out, const Options& opt) {
  ExperimentConfig cfg = load_experiment_config(fs::path(MTSCALE_SOURCE_DIR) / "presets/case2.json");
  cfg.training.epochs = 10;
  cfg.training.max_iteration = opt.case2_iterations;
  MultimodalSpec spec;
  spec.n_sequences = 20;
  const SequenceSet data = gen_multimodal(spec);
  const fs::path dir = opt.work / "case2";
  ComparisonReport rep;
  if (!run_comparison_criterion(out, cfg, data, dir, rep)) return;

  std::vector<std::string> missing;
  for (const char* name :
       {"config.json", "report.json", "mtrnn/config.json", "mtrnn/log.csv", "mtrnn/curve.csv",
        "mtrnn/checkpoint.bin", "mtgru/config.json", "mtgru/log.csv", "mtgru/curve.csv",
        "mtgru/checkpoint.bin"})
    if (!fs::exists(dir / name)) missing.push_back(name);
  for (const char* arm : {"mtrnn", "mtgru"})
    for (const char* suffix : {"_training_curve.csv", "_prediction_overlay.csv",
                               "_activity_cf.csv", "_activity_cs.csv", "_activity_cf_pca.csv",
                               "_activity_cs_pca.csv"})
      if (!fs::exists(dir / (std::string(arm) + suffix))) missing.push_back(std::string(arm) + suffix);
  for (const auto& m : missing) out.require(false, "missing " + m);
  out.require(rep.time_ratio >= 1.3 && rep.time_ratio <= 3.5, "time ratio");
  out.detail << "max_iteration " << opt.case2_iterations << ", artifacts "
             << (missing.empty() ? "complete" : "incomplete") << ", time ratio "
             << rep.time_ratio << " (" << rep.mtgru.mean_ms << " / " << rep.mtrnn.mean_ms
             << " ms), epoch-change variance mtrnn " << rep.mtrnn.curve_step_variance
             << " mtgru " << rep.mtgru.curve_step_variance << " (reported only)";
}

void perturb_cs(Network& net, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& b : parameter_blocks(net))
    if (b.name.rfind("cs.", 0) == 0) *b.matrix = uniform_init(rng, b.matrix->rows(), b.matrix->cols(), 1.0);
}

void criterion_6(Outcome& out, const Options&) {
  const Matrix seq = gen_case1().at("X1").data;
  std::size_t checked = 0;
  for (CellKind kind : {CellKind::Mtrnn, CellKind::Mtgru}) {
    NetworkConfig cfg = preset_case1().network;
    cfg.cell_kind = kind;
    const Network base = build_network(cfg);
    const Rollout r0 = run_sequence(base, seq, 0.9);
    for (std::uint64_t s = 1; s <= 3; ++s) {
      Network changed = base;
      perturb_cs(changed, s);
      const Rollout r1 = run_sequence(changed, seq, 0.9);
      out.require(std::equal(r0.predictions.row(0).begin(), r0.predictions.row(0).end(),
                             r1.predictions.row(0).begin()),
                  std::string(to_string(kind)) + " o_1 depends on Cs");
      out.require(!(r0.predictions == r1.predictions),
                  std::string(to_string(kind)) + " later outputs ignore Cs");
      ++checked;
    }

    Network cut = base;
    zero_cs_feedback(cut);
    const Rollout c0 = run_sequence(cut, seq, 0.9);
    for (std::uint64_t s = 1; s <= 3; ++s) {
      Network changed = cut;
      perturb_cs(changed, s + 10);
      out.require(run_sequence(changed, seq, 0.9).predictions == c0.predictions,
                  std::string(to_string(kind)) + " zeroed feedback leaks");
    }
  }

  double worst_excess = -std::numeric_limits<double>::infinity();
  for (double scale : {1.0, 6.0}) {
    NetworkConfig cfg = preset_case1().network;
    cfg.cell_kind = CellKind::Mtgru;
    Network net = build_network(cfg);
    for (auto& b : parameter_blocks(net))
      for (double& w : b.matrix->flat()) w *= scale;
    const Rollout r = run_sequence(net, seq, 0.9);
    const double bound = 2.0 / cfg.tau_s + 1e-12;
    double prev_max = 0.0;
    for (std::size_t t = 0; t < r.steps(); ++t)
      for (std::size_t i = 0; i < cfg.n_cs; ++i) {
        const double prev = t == 0 ? 0.0 : r.cs_activity(t - 1, i);
        const double delta = std::abs(r.cs_activity(t, i) - prev);
        prev_max = std::max(prev_max, delta);
        worst_excess = std::max(worst_excess, delta - bound);
      }
    out.require(prev_max <= bound, "slow-layer change bound at weight scale " + std::to_string(scale));
  }
  out.detail << checked << " perturbations leave o_1 unchanged, zeroed feedback isolates outputs, "
             << "max |dh| - 2/tau_s = " << worst_excess;
}

void criterion_7(Outcome& out, const Options&) {
  Matrix line(6, 2);
  for (std::size_t r = 0; r < 6; ++r) {
    line(r, 0) = static_cast<double>(r) - 1.5;
    line(r, 1) = 2.0 * line(r, 0);
  }
  const Pca2d p1 = pca_2d(line);
  const double frac = p1.explained_variance[0] / p1.total_variance;
  out.require(frac >= 0.999, "rank-1 fraction");

  const double a = std::sqrt(6.0), b = std::sqrt(1.5);
  Matrix diag(4, 2);
  diag(0, 0) = a;
  diag(1, 0) = -a;
  diag(2, 1) = b;
  diag(3, 1) = -b;
  const Pca2d p2 = pca_2d(diag);
  const double diag_err =
      std::max(std::abs(p2.explained_variance[0] - 4.0), std::abs(p2.explained_variance[1] - 1.0));
  out.require(diag_err <= 1e-9, "diag(4,1) variances");

  NetworkConfig cfg = preset_case2().network;
  MultimodalSpec spec;
  spec.n_sequences = 2;
  const SequenceSet data = gen_multimodal(spec);
  bool shapes = true;
  double frac_sum = 0.0;
  for (CellKind kind : {CellKind::Mtrnn, CellKind::Mtgru}) {
    cfg.cell_kind = kind;
    const Network net = build_network(cfg);
    const Matrix& seq = data.sequences.front().data;
    const ContextPca pca = context_pca(run_sequence(net, seq, 0.9));
    for (const LayerPca* l : {&pca.cf, &pca.cs}) {
      shapes = shapes && l->projected.rows() == seq.rows() && l->projected.cols() == 2;
      const double sum = l->variance_fraction[0] + l->variance_fraction[1];
      out.require(sum <= 1.0 + 1e-12 && l->variance_fraction[0] >= 0.0 &&
                      l->variance_fraction[1] >= 0.0,
                  "variance fractions");
      frac_sum = std::max(frac_sum, sum);
    }
  }
  out.require(shapes, "context_pca shapes");
  out.detail << "rank-1 fraction " << frac << ", diag(4,1) error " << diag_err
             << ", Case-2 context_pca T x 2 for both layers and cells, largest fraction sum "
             << frac_sum;
}

void criterion_8(Outcome& out, const Options& opt) {
  const fs::path dir = opt.work / "serialization";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const Matrix seq = gen_case1().at("X2").data;
  for (CellKind kind : {CellKind::Mtrnn, CellKind::Mtgru}) {
    NetworkConfig cfg = preset_case1().network;
    cfg.cell_kind = kind;
    cfg.seed = 77;
    const Network net = build_network(cfg);
    const fs::path path = dir / (std::string(to_string(kind)) + ".bin");
    save_checkpoint(net, path);
    const Network back = load_checkpoint(path, cfg);
    out.require(back.config == net.config, "config round trip");
    const auto a = parameter_blocks(net), b = parameter_blocks(back);
    for (std::size_t i = 0; i < a.size(); ++i)
      out.require(*a[i].matrix == *b[i].matrix, "block " + a[i].name);
    out.require(checkpoint_bytes(back) == checkpoint_bytes(net), "checkpoint bytes");
    for (double alpha : {0.0, 0.9}) {
      const Rollout r0 = run_sequence(net, seq, alpha), r1 = run_sequence(back, seq, alpha);
      out.require(r0.predictions == r1.predictions && r0.cf_activity == r1.cf_activity &&
                      r0.cs_activity == r1.cs_activity,
                  "forward outputs across save/load");
    }
  }

  std::size_t sets = 0;
  MultimodalSpec spec;
  spec.n_sequences = 4;
  for (const SequenceSet& set : {gen_case1(), gen_multimodal(spec)}) {
    const fs::path sdir = dir / ("set" + std::to_string(sets++));
    save_set(set, sdir);
    const SequenceSet back = load_set(sdir);
    out.require(back.size() == set.size() && back.dims == set.dims && back.seed == set.seed &&
                    back.generator == set.generator && back.params == set.params &&
                    back.synthetic == set.synthetic,
                "set metadata");
    for (std::size_t i = 0; i < std::min(set.size(), back.size()); ++i)
      out.require(back.sequences[i].id == set.sequences[i].id &&
                      back.sequences[i].data == set.sequences[i].data,
                  "sequence " + set.sequences[i].id);
  }
  out.detail << "checkpoints for both cells and " << sets << " sequence sets round-trip exactly";
}

struct Criterion {
  int id;
  double budget_s;  // 0: no runtime assertion
  std::function<void(Outcome&, const Options&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--work" && i + 1 < argc) {
      opt.work = argv[++i];
    } else if (arg == "--case2-iterations" && i + 1 < argc) {
      opt.case2_iterations = std::stoul(argv[++i]);
    } else if (!arg.empty() && std::all_of(arg.begin(), arg.end(), ::isdigit)) {
      selected.insert(std::stoi(arg));
    } else {
      std::cerr << "usage: " << argv[0]
                << " [--work DIR] [--case2-iterations N] [criterion...]\n";
      return 2;
    }
  }

  const std::vector<Criterion> all{{1, 30.0, criterion_1}, {2, 1.0, criterion_2},
                                   {3, 1.0, criterion_3},  {4, 0.0, criterion_4},
                                   {5, 0.0, criterion_5},  {6, 5.0, criterion_6},
                                   {7, 5.0, criterion_7},  {8, 5.0, criterion_8}};
  fs::create_directories(opt.work);
  bool ok = true;
  for (const Criterion& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome out;
    const auto start = Clock::now();
    try {
      c.run(out, opt);
    } catch (const std::exception& e) {
      out.require(false, std::string("exception: ") + e.what());
    }
    const double elapsed = seconds_since(start);
    if (c.budget_s > 0.0) {
      out.require(elapsed < c.budget_s, "runtime budget " + std::to_string(c.budget_s) + " s");
      out.detail << "; " << elapsed << " s";
    }
    ok = ok && out.pass;
    std::cout << "criterion " << c.id << ": " << (out.pass ? "PASS" : "FAIL") << " "
              << out.detail.str() << std::endl;
  }
  return ok ? 0 : 1;
}
