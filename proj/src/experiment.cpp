#include "mtscale/experiment.hpp"

#include <cstdlib>
#include <exception>
#include <fstream>
#include <thread>

#include "mtscale/errors.hpp"
#include "mtscale/json_io.hpp"

namespace mtscale {

namespace fs = std::filesystem;

ExperimentConfig preset_case1() {
  ExperimentConfig c;
  c.name = "case1";
  c.network.n_io = 2;
  c.network.n_cf = 100;
  c.network.n_cs = 5;
  c.network.tau_f = 1.0;
  c.network.tau_s = 20.0;
  c.network.alpha = 0.9;
  c.training.eta = 1e-4;
  c.training.threshold = 1e-3;
  c.training.max_iteration = 2000;
  c.training.epochs = 30;
  c.training.alpha = 0.9;
  return c;
}

ExperimentConfig preset_case2() {
  ExperimentConfig c;
  c.name = "case2";
  c.network.n_io = 43;
  c.network.n_cf = 450;
  c.network.n_cs = 8;
  c.network.tau_f = 1.0;
  c.network.tau_s = 20.0;
  c.network.alpha = 0.9;
  c.training.eta = 1e-4;
  c.training.threshold = 1e-3;
  c.training.max_iteration = 5000;
  c.training.epochs = 30;
  c.training.alpha = 0.9;
  return c;
}

nlohmann::json to_json_value(const ExperimentConfig& cfg) {
  nlohmann::json j = to_json_value(cfg.network);
  j["name"] = cfg.name;
  j["eta"] = cfg.training.eta;
  j["threshold"] = cfg.training.threshold;
  j["max_iteration"] = cfg.training.max_iteration;
  j["epochs"] = cfg.training.epochs;
  j["clip_norm"] = cfg.training.clip_norm;
  j["alpha"] = cfg.training.alpha;
  j["data"] = cfg.data;
  j["out"] = cfg.out;
  return j;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  require(j.is_object(), "experiment config must be a JSON object");
  ExperimentConfig cfg;
  nlohmann::json network = nlohmann::json::object();
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "name") cfg.name = value.get<std::string>();
      else if (key == "eta") cfg.training.eta = value.get<double>();
      else if (key == "threshold") cfg.training.threshold = value.get<double>();
      else if (key == "max_iteration") cfg.training.max_iteration = value.get<std::size_t>();
      else if (key == "epochs") cfg.training.epochs = value.get<std::size_t>();
      else if (key == "clip_norm") cfg.training.clip_norm = value.get<double>();
      else if (key == "data") cfg.data = value.get<std::string>();
      else if (key == "out") cfg.out = value.get<std::string>();
      else if (key == "alpha") {
        cfg.training.alpha = value.get<double>();
        network[key] = value;
      } else {
        network[key] = value;
      }
    } catch (const nlohmann::json::exception& e) {
      throw ContractError("config key '" + key + "': " + e.what());
    }
  }
  try {
    cfg.network = network_config_from_json(network);
  } catch (const ContractError& e) {
    std::string msg = e.what();
    const std::string prefix = "unknown network config key";
    if (msg.rfind(prefix, 0) == 0) msg = "unknown config key" + msg.substr(prefix.size());
    throw ContractError(msg);
  }
  validate(cfg);
  return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(path.string() + ": " + e.what());
  }
  return experiment_config_from_json(j);
}

void validate(const ExperimentConfig& cfg) {
  validate(cfg.network);
  validate(cfg.training);
}

std::optional<std::uint64_t> apply_seed_env(ExperimentConfig& cfg) {
  const char* env = std::getenv("MTSCALE_SEED");
  if (!env || !*env) return std::nullopt;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  require(end && *end == '\0', std::string("MTSCALE_SEED is not an unsigned integer: ") + env);
  cfg.network.seed = v;
  return v;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f << j.dump(2) << '\n';
  if (!f) throw IoError("failed writing " + path.string());
}

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

}  // namespace

TrainRun run_training(const ExperimentConfig& cfg, const SequenceSet& data, const fs::path& out_dir,
                      const ProgressFn& progress) {
  validate(cfg);
  validate(data);
  require(data.dims == cfg.network.n_io, "config n_io=" + std::to_string(cfg.network.n_io) +
                                             " but data has " + std::to_string(data.dims) + " dims");
  ensure_dir(out_dir);
  write_json(out_dir / "config.json", to_json_value(cfg));

  TrainRun run{build_network(cfg.network), {}};
  const std::string arm(to_string(cfg.network.cell_kind));
  auto on_epoch = [&](const EpochRecord& e) {
    if (progress)
      progress(arm + " epoch " + std::to_string(e.epoch) + "/" + std::to_string(cfg.training.epochs) +
               " error " + format_double(e.total_error()));
  };
  try {
    run.log = train(data, run.net, cfg.training, on_epoch);
  } catch (const TrainingAborted& e) {
    write_training_log(e.partial_log, out_dir / "log.csv");
    export_training_curve(e.partial_log, out_dir / "curve.csv");
    throw;
  }
  write_training_log(run.log, out_dir / "log.csv");
  export_training_curve(run.log, out_dir / "curve.csv");
  save_checkpoint(run.net, out_dir / "checkpoint.bin");
  return run;
}

ComparisonReport run_comparison(const ExperimentConfig& cfg, const SequenceSet& data,
                                const fs::path& out_dir, bool serial, const ProgressFn& progress) {
  validate(cfg);
  ensure_dir(out_dir);
  ExperimentConfig rnn_cfg = cfg;
  rnn_cfg.network.cell_kind = CellKind::Mtrnn;
  ExperimentConfig gru_cfg = cfg;
  gru_cfg.network.cell_kind = CellKind::Mtgru;

  nlohmann::json shared = to_json_value(cfg);
  shared.erase("cell");
  write_json(out_dir / "config.json", shared);

  std::optional<TrainRun> rnn_run, gru_run;
  if (serial) {
    rnn_run = run_training(rnn_cfg, data, out_dir / "mtrnn", progress);
    gru_run = run_training(gru_cfg, data, out_dir / "mtgru", progress);
  } else {
    std::exception_ptr gru_error;
    std::thread worker([&] {
      try {
        gru_run = run_training(gru_cfg, data, out_dir / "mtgru", progress);
      } catch (...) {
        gru_error = std::current_exception();
      }
    });
    try {
      rnn_run = run_training(rnn_cfg, data, out_dir / "mtrnn", progress);
    } catch (...) {
      worker.join();
      throw;
    }
    worker.join();
    if (gru_error) std::rethrow_exception(gru_error);
  }

  const double alpha = cfg.training.alpha;
  ComparisonReport report =
      make_comparison(summarize_arm(CellKind::Mtrnn, rnn_run->log, data, rnn_run->net, alpha),
                      summarize_arm(CellKind::Mtgru, gru_run->log, data, gru_run->net, alpha), serial,
                      shared);
  write_json(out_dir / "report.json", to_json_value(report));

  const Matrix& first = data.sequences.front().data;
  for (const TrainRun* run : {&*rnn_run, &*gru_run}) {
    const std::string arm(to_string(run->net.config.cell_kind));
    const Rollout r = run_sequence(run->net, first, alpha);
    export_training_curve(run->log, out_dir / (arm + "_training_curve.csv"));
    export_prediction_overlay(r, first, out_dir / (arm + "_prediction_overlay.csv"));
    export_context_activity(r, out_dir, arm + "_activity");
    export_context_pca(r, out_dir, arm + "_activity");
  }
  return report;
}

}  // namespace mtscale
