#pragma once

// Three-layer hierarchy: an input-output layer, a fast context layer (Cf) and a
// slow context layer (Cs). Per step:
//
//   x_cf = tanh(i_t)
//   y_cf = Cf(x_cf ++ y_cs[t-1] [++ y_cf[t-1] for MTRNN])
//   y_cs = Cs(y_cf [++ y_cs[t-1] for MTRNN])
//   o_t  = tanh(W_out y_cf)
//
// Cs only ever talks to Cf. Its output reaches Cf one step later, so o_1 never
// depends on Cs. The MTRNN layers see their own previous activations as extra
// inputs; the MTGRU layers get that recurrence from W_h*.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mtscale/cells.hpp"
#include "mtscale/numerics.hpp"

namespace mtscale {

enum class CellKind { Mtrnn, Mtgru };

std::string_view to_string(CellKind kind);
CellKind parse_cell_kind(std::string_view name);

struct NetworkConfig {
  std::size_t n_io = 2;
  std::size_t n_cf = 100;
  std::size_t n_cs = 5;
  double tau_f = 1.0;
  double tau_s = 20.0;
  CellKind cell_kind = CellKind::Mtrnn;
  // Weight on the fed-back prediction when mixing inputs.
  double alpha = 0.9;
  std::uint64_t seed = 1;
  // false: alpha weights the real sample instead of the prediction.
  bool alpha_on_prediction = true;
  // o_t = W_out y_cf without the tanh.
  bool linear_readout = false;

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

void validate(const NetworkConfig& config);

using Cell = std::variant<MtrnnCell, MtgruCell>;

struct Network {
  NetworkConfig config;
  Cell cf;
  Cell cs;
  Matrix readout;  // n_io × n_cf

  std::size_t cf_input_size() const;
  std::size_t cs_input_size() const;
};

struct NetworkState {
  Vector cf_state;  // u (MTRNN) or h (MTGRU)
  Vector cs_state;
  Vector y_cf_prev;
  Vector y_cs_prev;
  Vector last_output;
};

struct StepTrace {
  Vector input;  // i_t after mixing
  Vector x_cf;
  Vector cf_input;
  Vector cf_state_before;
  Vector y_cf;
  MtgruTrace cf_gates;
  Vector cs_input;
  Vector cs_state_before;
  Vector y_cs;
  MtgruTrace cs_gates;
  Vector output;
};

struct StepResult {
  Vector output;
  NetworkState state;
  StepTrace trace;
};

struct Rollout {
  Matrix predictions;  // T × n_io; row t predicts sequence row t+1
  Matrix cf_activity;  // T × n_cf
  Matrix cs_activity;  // T × n_cs
  std::vector<StepTrace> traces;
  double alpha = 0.0;

  std::size_t steps() const { return predictions.rows(); }
};

// Mutable view of one weight matrix.
struct ParamBlock {
  std::string name;
  Matrix* matrix;
};

struct ConstParamBlock {
  std::string name;
  const Matrix* matrix;
};

// Order: Cf matrices, Cs matrices, readout.
std::vector<ParamBlock> parameter_blocks(Network& net);
std::vector<ConstParamBlock> parameter_blocks(const Network& net);

struct NetworkGradients {
  std::vector<Matrix> blocks;  // aligned with parameter_blocks()

  double squared_norm() const;
  void scale(double factor);
};

NetworkGradients zero_gradients(const Network& net);

Network build_network(const NetworkConfig& config);
NetworkState initial_state(const Network& net);

StepResult forward_step(const Network& net, std::span<const double> input,
                        const NetworkState& state);

// Mixed input: i_1 = seq[0], i_t = a o_{t-1} + (1 - a) seq[t-1] with a the
// prediction weight derived from alpha and the config's direction.
Rollout run_sequence(const Network& net, const Matrix& seq, double alpha);

Matrix generate_closed_loop(const Network& net, std::span<const double> initial_input,
                            std::size_t steps);

// Full BPTT. output_grads holds dL/do_t for every step (T × n_io). The
// feedback path through the mixed inputs is included when the rollout mixed
// predictions back in.
NetworkGradients backward(const Network& net, const Rollout& rollout, const Matrix& output_grads);

// Columns of the Cf input weights that read y_cs[t-1].
void zero_cs_feedback(Network& net);

// Checkpoint: "MTSCKPT\n", u64 little-endian header length, a JSON header with
// format version, config and block shapes, then every parameter block as
// little-endian IEEE-754 doubles in parameter_blocks() order.
std::string checkpoint_bytes(const Network& net);
Network network_from_checkpoint_bytes(std::string_view bytes);
void save_checkpoint(const Network& net, const std::filesystem::path& path);
Network load_checkpoint(const std::filesystem::path& path);
// Rejects a checkpoint whose sizes disagree with `expected`.
Network load_checkpoint(const std::filesystem::path& path, const NetworkConfig& expected);

}  // namespace mtscale
