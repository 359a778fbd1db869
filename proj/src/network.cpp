#include "mtscale/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "mtscale/errors.hpp"
#include "mtscale/json_io.hpp"

namespace mtscale {

std::string_view to_string(CellKind kind) {
  return kind == CellKind::Mtrnn ? "mtrnn" : "mtgru";
}

CellKind parse_cell_kind(std::string_view name) {
  if (name == "mtrnn" || name == "MTRNN") return CellKind::Mtrnn;
  if (name == "mtgru" || name == "MTGRU") return CellKind::Mtgru;
  throw ContractError("unknown cell kind '" + std::string(name) + "' (expected mtrnn or mtgru)");
}

void validate(const NetworkConfig& c) {
  require(c.n_io >= 1, "NetworkConfig.n_io must be >= 1");
  require(c.n_cf >= 1, "NetworkConfig.n_cf must be >= 1");
  require(c.n_cs >= 1, "NetworkConfig.n_cs must be >= 1");
  require(std::isfinite(c.tau_f) && c.tau_f >= 1.0,
          "NetworkConfig.tau_f must be finite and >= 1, got " + std::to_string(c.tau_f));
  require(std::isfinite(c.tau_s) && c.tau_s >= 1.0,
          "NetworkConfig.tau_s must be finite and >= 1, got " + std::to_string(c.tau_s));
  require(c.alpha >= 0.0 && c.alpha <= 1.0,
          "NetworkConfig.alpha must lie in [0,1], got " + std::to_string(c.alpha));
}

std::size_t Network::cf_input_size() const {
  const std::size_t base = config.n_io + config.n_cs;
  return config.cell_kind == CellKind::Mtrnn ? base + config.n_cf : base;
}

std::size_t Network::cs_input_size() const {
  return config.cell_kind == CellKind::Mtrnn ? config.n_cf + config.n_cs : config.n_cf;
}

namespace {

Cell make_cell(CellKind kind, std::size_t units, std::size_t inputs, double tau, Rng& rng) {
  if (kind == CellKind::Mtrnn) return make_mtrnn_cell(units, inputs, tau, rng);
  return make_mtgru_cell(units, inputs, tau, rng);
}

void append(Vector& dst, std::span<const double> src) { dst.insert(dst.end(), src.begin(), src.end()); }

// One cell step; fills the state/output/gates slots of the trace.
void cell_forward(const Cell& cell, const Vector& input, const Vector& state_before,
                  Vector& state_after, Vector& y, MtgruTrace& gates) {
  if (const auto* rnn = std::get_if<MtrnnCell>(&cell)) {
    MtrnnStep s = mtrnn_step(*rnn, input, MtrnnState{state_before});
    state_after = std::move(s.state.u);
    y = std::move(s.y);
  } else {
    MtgruStep s = mtgru_step(std::get<MtgruCell>(cell), input, MtgruState{state_before});
    state_after = std::move(s.state.h);
    y = state_after;
    gates = std::move(s.trace);
  }
}

std::vector<ParamBlock> cell_blocks(Cell& cell, const std::string& prefix) {
  if (auto* rnn = std::get_if<MtrnnCell>(&cell)) return {{prefix + ".W", &rnn->weights}};
  auto& g = std::get<MtgruCell>(cell);
  return {{prefix + ".W_xr", &g.w_xr}, {prefix + ".W_xz", &g.w_xz}, {prefix + ".W_xu", &g.w_xu},
          {prefix + ".W_hr", &g.w_hr}, {prefix + ".W_hz", &g.w_hz}, {prefix + ".W_hu", &g.w_hu}};
}

}  // namespace

Network build_network(const NetworkConfig& config) {
  validate(config);
  Rng rng(config.seed);
  Network net{config, MtrnnCell{}, MtrnnCell{}, Matrix{}};
  net.cf = make_cell(config.cell_kind, config.n_cf, net.cf_input_size(), config.tau_f, rng);
  net.cs = make_cell(config.cell_kind, config.n_cs, net.cs_input_size(), config.tau_s, rng);
  net.readout = uniform_init(rng, config.n_io, config.n_cf, 1.0 / std::sqrt(double(config.n_cf)));
  return net;
}

NetworkState initial_state(const Network& net) {
  const auto& c = net.config;
  return {Vector(c.n_cf, 0.0), Vector(c.n_cs, 0.0), Vector(c.n_cf, 0.0), Vector(c.n_cs, 0.0),
          Vector(c.n_io, 0.0)};
}

std::vector<ParamBlock> parameter_blocks(Network& net) {
  auto blocks = cell_blocks(net.cf, "cf");
  auto cs = cell_blocks(net.cs, "cs");
  blocks.insert(blocks.end(), cs.begin(), cs.end());
  blocks.push_back({"readout", &net.readout});
  return blocks;
}

std::vector<ConstParamBlock> parameter_blocks(const Network& net) {
  std::vector<ConstParamBlock> out;
  for (const auto& b : parameter_blocks(const_cast<Network&>(net))) out.push_back({b.name, b.matrix});
  return out;
}

double NetworkGradients::squared_norm() const {
  double s = 0.0;
  for (const auto& m : blocks)
    for (double x : m.flat()) s += x * x;
  return s;
}

void NetworkGradients::scale(double factor) {
  for (auto& m : blocks)
    for (double& x : m.flat()) x *= factor;
}

NetworkGradients zero_gradients(const Network& net) {
  NetworkGradients g;
  for (const auto& b : parameter_blocks(net)) g.blocks.emplace_back(b.matrix->rows(), b.matrix->cols());
  return g;
}

StepResult forward_step(const Network& net, std::span<const double> input,
                        const NetworkState& state) {
  const auto& c = net.config;
  require(input.size() == c.n_io, "forward_step: input has length " + std::to_string(input.size()) +
                                      ", network expects " + std::to_string(c.n_io));
  require(state.cf_state.size() == c.n_cf && state.cs_state.size() == c.n_cs &&
              state.y_cf_prev.size() == c.n_cf && state.y_cs_prev.size() == c.n_cs,
          "forward_step: state does not match network sizes");
  const bool rnn = c.cell_kind == CellKind::Mtrnn;

  StepResult out;
  StepTrace& tr = out.trace;
  tr.input.assign(input.begin(), input.end());
  tr.x_cf.resize(c.n_io);
  for (std::size_t i = 0; i < c.n_io; ++i) tr.x_cf[i] = std::tanh(input[i]);

  tr.cf_input.reserve(net.cf_input_size());
  append(tr.cf_input, tr.x_cf);
  append(tr.cf_input, state.y_cs_prev);
  if (rnn) append(tr.cf_input, state.y_cf_prev);
  tr.cf_state_before = state.cf_state;
  cell_forward(net.cf, tr.cf_input, tr.cf_state_before, out.state.cf_state, tr.y_cf, tr.cf_gates);

  tr.cs_input.reserve(net.cs_input_size());
  append(tr.cs_input, tr.y_cf);
  if (rnn) append(tr.cs_input, state.y_cs_prev);
  tr.cs_state_before = state.cs_state;
  cell_forward(net.cs, tr.cs_input, tr.cs_state_before, out.state.cs_state, tr.y_cs, tr.cs_gates);

  tr.output = matvec(net.readout, tr.y_cf);
  if (!c.linear_readout)
    for (double& o : tr.output) o = std::tanh(o);

  out.output = tr.output;
  out.state.y_cf_prev = tr.y_cf;
  out.state.y_cs_prev = tr.y_cs;
  out.state.last_output = tr.output;
  return out;
}

namespace {

double prediction_weight(const NetworkConfig& c, double alpha) {
  return c.alpha_on_prediction ? alpha : 1.0 - alpha;
}

Rollout rollout_from(const Network& net, const Matrix& real, std::size_t steps, double alpha,
                     bool real_rows_available) {
  const auto& c = net.config;
  const double a = prediction_weight(c, alpha);
  Rollout r{Matrix(steps, c.n_io), Matrix(steps, c.n_cf), Matrix(steps, c.n_cs), {}, alpha};
  r.traces.reserve(steps);
  NetworkState state = initial_state(net);
  Vector input(real.row(0).begin(), real.row(0).end());
  for (std::size_t t = 0; t < steps; ++t) {
    if (t > 0) {
      const auto& prev = r.traces.back().output;
      for (std::size_t d = 0; d < c.n_io; ++d) {
        input[d] = real_rows_available ? a * prev[d] + (1.0 - a) * real(t, d) : prev[d];
      }
    }
    StepResult s = forward_step(net, input, state);
    r.predictions.set_row(t, s.output);
    r.cf_activity.set_row(t, s.trace.y_cf);
    r.cs_activity.set_row(t, s.trace.y_cs);
    r.traces.push_back(std::move(s.trace));
    state = std::move(s.state);
  }
  return r;
}

}  // namespace

Rollout run_sequence(const Network& net, const Matrix& seq, double alpha) {
  require(seq.rows() >= 2, "run_sequence: sequence needs at least 2 rows, got " +
                               std::to_string(seq.rows()));
  require(seq.cols() == net.config.n_io, "run_sequence: sequence has " + std::to_string(seq.cols()) +
                                             " columns, network IO size is " +
                                             std::to_string(net.config.n_io));
  require(alpha >= 0.0 && alpha <= 1.0, "run_sequence: alpha must lie in [0,1]");
  return rollout_from(net, seq, seq.rows(), alpha, true);
}

Matrix generate_closed_loop(const Network& net, std::span<const double> initial_input,
                            std::size_t steps) {
  require(steps >= 1, "generate_closed_loop: steps must be >= 1");
  require(initial_input.size() == net.config.n_io,
          "generate_closed_loop: initial input has length " + std::to_string(initial_input.size()));
  Matrix seed(1, net.config.n_io);
  seed.set_row(0, initial_input);
  Rollout r = rollout_from(net, seed, steps, 1.0, false);
  return std::move(r.predictions);
}

NetworkGradients backward(const Network& net, const Rollout& rollout, const Matrix& output_grads) {
  const auto& c = net.config;
  const std::size_t steps = rollout.steps();
  require(output_grads.rows() == steps && output_grads.cols() == c.n_io,
          "backward: output gradient shape " + output_grads.shape_string() + " for a rollout of " +
              std::to_string(steps) + " steps and IO size " + std::to_string(c.n_io));
  require(rollout.traces.size() == steps, "backward: rollout carries no traces");
  const bool rnn = c.cell_kind == CellKind::Mtrnn;
  const double a = prediction_weight(c, rollout.alpha);

  // Per-step adjoint signals and the inputs they pair with. Weight gradients
  // are formed once at the end as sums of row outer products.
  struct LayerRows {
    Matrix x, h, rh, a0, a1, a2;
  };
  auto layer_rows = [&](std::size_t n, std::size_t m) {
    LayerRows l{Matrix(steps, m), Matrix(), Matrix(), Matrix(steps, n), Matrix(), Matrix()};
    if (!rnn) {
      l.h = Matrix(steps, n);
      l.rh = Matrix(steps, n);
      l.a1 = Matrix(steps, n);
      l.a2 = Matrix(steps, n);
    }
    return l;
  };
  LayerRows cf_rows = layer_rows(c.n_cf, net.cf_input_size());
  LayerRows cs_rows = layer_rows(c.n_cs, net.cs_input_size());
  Matrix pre_rows(steps, c.n_io), ycf_rows(steps, c.n_cf);

  // Gradients carried from step t+1 back into step t.
  Vector g_cf_state(c.n_cf, 0.0), g_cs_state(c.n_cs, 0.0);
  Vector g_ycf_next(c.n_cf, 0.0), g_ycs_next(c.n_cs, 0.0);
  Vector g_input_next(c.n_io, 0.0);

  Vector g_o(c.n_io), g_pre(c.n_io), g_ycf(c.n_cf), g_ycs_prev(c.n_cs), grad_h_cs(c.n_cs),
      grad_h_cf(c.n_cf);
  MtrnnAdjoint rnn_adj;
  MtgruAdjoint gru_adj;

  auto keep_gru = [](LayerRows& l, std::size_t t, std::span<const double> x,
                     std::span<const double> h, const MtgruAdjoint& adj) {
    l.x.set_row(t, x);
    l.h.set_row(t, h);
    l.rh.set_row(t, adj.rh);
    l.a0.set_row(t, adj.da_r);
    l.a1.set_row(t, adj.da_z);
    l.a2.set_row(t, adj.da_u);
  };

  for (std::size_t t = steps; t-- > 0;) {
    const StepTrace& tr = rollout.traces[t];
    for (std::size_t d = 0; d < c.n_io; ++d) {
      g_o[d] = output_grads(t, d) + (t + 1 < steps ? a * g_input_next[d] : 0.0);
      const double o = tr.output[d];
      g_pre[d] = c.linear_readout ? g_o[d] : g_o[d] * (1.0 - o * o);
    }
    pre_rows.set_row(t, g_pre);
    ycf_rows.set_row(t, tr.y_cf);
    g_ycf = g_ycf_next;
    matvec_transposed_add(net.readout, g_pre, g_ycf);

    // Slow layer.
    std::fill(g_ycs_prev.begin(), g_ycs_prev.end(), 0.0);
    if (rnn) {
      mtrnn_adjoint(std::get<MtrnnCell>(net.cs), tr.y_cs, g_cs_state, g_ycs_next, rnn_adj);
      cs_rows.x.set_row(t, tr.cs_input);
      cs_rows.a0.set_row(t, rnn_adj.drive);
      for (std::size_t i = 0; i < c.n_cf; ++i) g_ycf[i] += rnn_adj.d_input[i];
      for (std::size_t i = 0; i < c.n_cs; ++i) g_ycs_prev[i] = rnn_adj.d_input[c.n_cf + i];
      g_cs_state = rnn_adj.d_state;
    } else {
      for (std::size_t i = 0; i < c.n_cs; ++i) grad_h_cs[i] = g_cs_state[i] + g_ycs_next[i];
      mtgru_adjoint(std::get<MtgruCell>(net.cs), tr.cs_state_before, tr.cs_gates, grad_h_cs,
                    gru_adj);
      keep_gru(cs_rows, t, tr.cs_input, tr.cs_state_before, gru_adj);
      for (std::size_t i = 0; i < c.n_cf; ++i) g_ycf[i] += gru_adj.d_input[i];
      g_cs_state = gru_adj.d_state;
    }

    // Fast layer.
    const Vector* d_in = nullptr;
    if (rnn) {
      mtrnn_adjoint(std::get<MtrnnCell>(net.cf), tr.y_cf, g_cf_state, g_ycf, rnn_adj);
      cf_rows.x.set_row(t, tr.cf_input);
      cf_rows.a0.set_row(t, rnn_adj.drive);
      d_in = &rnn_adj.d_input;
      g_cf_state = rnn_adj.d_state;
      for (std::size_t i = 0; i < c.n_cf; ++i) g_ycf_next[i] = rnn_adj.d_input[c.n_io + c.n_cs + i];
    } else {
      for (std::size_t i = 0; i < c.n_cf; ++i) grad_h_cf[i] = g_cf_state[i] + g_ycf[i];
      mtgru_adjoint(std::get<MtgruCell>(net.cf), tr.cf_state_before, tr.cf_gates, grad_h_cf,
                    gru_adj);
      keep_gru(cf_rows, t, tr.cf_input, tr.cf_state_before, gru_adj);
      d_in = &gru_adj.d_input;
      g_cf_state = gru_adj.d_state;
    }
    for (std::size_t i = 0; i < c.n_cs; ++i) g_ycs_prev[i] += (*d_in)[c.n_io + i];
    g_ycs_next = g_ycs_prev;
    for (std::size_t d = 0; d < c.n_io; ++d) {
      const double x = tr.x_cf[d];
      g_input_next[d] = (*d_in)[d] * (1.0 - x * x);
    }
  }

  NetworkGradients out;
  for (const LayerRows* l : {&cf_rows, &cs_rows}) {
    const std::size_t n = l->a0.cols();
    const std::size_t m = l->x.cols();
    if (rnn) {
      Matrix dw(n, m);
      outer_add_rows(dw, l->a0, l->x);
      out.blocks.push_back(std::move(dw));
      continue;
    }
    for (const Matrix* sig : {&l->a0, &l->a1, &l->a2}) {
      Matrix dw(n, m);
      outer_add_rows(dw, *sig, l->x);
      out.blocks.push_back(std::move(dw));
    }
    for (const auto& [sig, in] : {std::pair{&l->a0, &l->h}, std::pair{&l->a1, &l->h},
                                  std::pair{&l->a2, &l->rh}}) {
      Matrix dw(n, n);
      outer_add_rows(dw, *sig, *in);
      out.blocks.push_back(std::move(dw));
    }
  }
  Matrix d_readout(c.n_io, c.n_cf);
  outer_add_rows(d_readout, pre_rows, ycf_rows);
  out.blocks.push_back(std::move(d_readout));
  return out;
}

void zero_cs_feedback(Network& net) {
  const std::size_t first = net.config.n_io;
  const std::size_t last = first + net.config.n_cs;
  auto zero_cols = [&](Matrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r)
      for (std::size_t col = first; col < last; ++col) m(r, col) = 0.0;
  };
  if (auto* rnn = std::get_if<MtrnnCell>(&net.cf)) {
    zero_cols(rnn->weights);
  } else {
    auto& g = std::get<MtgruCell>(net.cf);
    zero_cols(g.w_xr);
    zero_cols(g.w_xz);
    zero_cols(g.w_xu);
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr std::string_view kCheckpointMagic = "MTSCKPT\n";
constexpr int kCheckpointVersion = 1;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(std::string_view in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

}  // namespace

std::string checkpoint_bytes(const Network& net) {
  nlohmann::json header;
  header["format"] = "mtscale-checkpoint";
  header["version"] = kCheckpointVersion;
  header["config"] = to_json_value(net.config);
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : parameter_blocks(net))
    blocks.push_back({{"name", b.name}, {"rows", b.matrix->rows()}, {"cols", b.matrix->cols()}});
  header["blocks"] = blocks;
  auto taus = [](const Cell& cell) -> nlohmann::json {
    if (const auto* rnn = std::get_if<MtrnnCell>(&cell)) return rnn->tau;
    return std::get<MtgruCell>(cell).tau;
  };
  header["cf_tau"] = taus(net.cf);
  header["cs_tau"] = taus(net.cs);

  const std::string text = header.dump();
  std::string out(kCheckpointMagic);
  put_u64(out, text.size());
  out += text;
  for (const auto& b : parameter_blocks(net))
    for (double x : b.matrix->flat()) put_u64(out, std::bit_cast<std::uint64_t>(x));
  return out;
}

Network network_from_checkpoint_bytes(std::string_view bytes) {
  if (bytes.size() < kCheckpointMagic.size() + 8 || bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic)
    throw IoError("checkpoint: missing magic header");
  const std::size_t header_len = get_u64(bytes, kCheckpointMagic.size());
  const std::size_t header_pos = kCheckpointMagic.size() + 8;
  if (header_len > bytes.size() - header_pos) throw IoError("checkpoint: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(header_pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: malformed header: ") + e.what());
  }
  if (header.value("format", "") != "mtscale-checkpoint")
    throw IoError("checkpoint: unexpected format tag");
  if (header.value("version", 0) != kCheckpointVersion)
    throw IoError("checkpoint: unsupported version " + header.value("version", nlohmann::json()).dump());

  Network net = build_network(network_config_from_json(header.at("config")));
  auto blocks = parameter_blocks(net);
  const auto& stored = header.at("blocks");
  if (stored.size() != blocks.size())
    throw IoError("checkpoint: " + std::to_string(stored.size()) + " weight blocks stored, config implies " +
                  std::to_string(blocks.size()));
  std::size_t pos = header_pos + header_len;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& s = stored[i];
    Matrix& m = *blocks[i].matrix;
    if (s.at("name") != blocks[i].name || s.at("rows") != m.rows() || s.at("cols") != m.cols())
      throw IoError("checkpoint: block " + s.dump() + " does not match " + blocks[i].name + " " +
                    m.shape_string());
    if (bytes.size() - pos < 8 * m.size()) throw IoError("checkpoint: truncated weight data");
    for (double& x : m.flat()) {
      x = std::bit_cast<double>(get_u64(bytes, pos));
      pos += 8;
    }
  }
  if (pos != bytes.size()) throw IoError("checkpoint: trailing bytes after weight data");

  if (auto* rnn = std::get_if<MtrnnCell>(&net.cf)) {
    rnn->tau = header.at("cf_tau").get<Vector>();
    std::get<MtrnnCell>(net.cs).tau = header.at("cs_tau").get<Vector>();
    validate(*rnn);
    validate(std::get<MtrnnCell>(net.cs));
  } else {
    std::get<MtgruCell>(net.cf).tau = header.at("cf_tau").get<double>();
    std::get<MtgruCell>(net.cs).tau = header.at("cs_tau").get<double>();
    validate(std::get<MtgruCell>(net.cf));
    validate(std::get<MtgruCell>(net.cs));
  }
  return net;
}

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path.string());
  const std::string bytes = checkpoint_bytes(net);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing checkpoint: " + path.string());
}

Network load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  try {
    return network_from_checkpoint_bytes(ss.str());
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

Network load_checkpoint(const std::filesystem::path& path, const NetworkConfig& expected) {
  Network net = load_checkpoint(path);
  const auto& got = net.config;
  std::string conflicts;
  auto cmp = [&](const char* field, std::size_t have, std::size_t want) {
    if (have != want)
      conflicts += std::string(conflicts.empty() ? "" : ", ") + field + " " + std::to_string(have) +
                   " (checkpoint) vs " + std::to_string(want) + " (requested)";
  };
  cmp("n_io", got.n_io, expected.n_io);
  cmp("n_cf", got.n_cf, expected.n_cf);
  cmp("n_cs", got.n_cs, expected.n_cs);
  if (got.cell_kind != expected.cell_kind)
    conflicts += std::string(conflicts.empty() ? "" : ", ") + "cell_kind " +
                 std::string(to_string(got.cell_kind)) + " vs " + std::string(to_string(expected.cell_kind));
  if (!conflicts.empty()) throw IoError(path.string() + ": shape conflict: " + conflicts);
  return net;
}

}  // namespace mtscale
