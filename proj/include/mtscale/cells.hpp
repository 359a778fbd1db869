#pragma once

// Leaky-integrator (MTRNN) and time-scaled gated (MTGRU) recurrent cells with
// exact single-step adjoints. Neither cell carries bias terms.

#include <cmath>
#include <cstddef>
#include <span>

#include "mtscale/numerics.hpp"

namespace mtscale {

// ----------------------------------------------------------------------------
// MTRNN
//
//   u' = (1 - 1/tau) ⊙ u + (1/tau) ⊙ (W x)
//   y  = tanh(u')
// ----------------------------------------------------------------------------

struct MtrnnCell {
  Matrix weights;  // n_units × n_inputs
  Vector tau;      // per unit, each >= 1

  std::size_t n_units() const { return weights.rows(); }
  std::size_t n_inputs() const { return weights.cols(); }
};

struct MtrnnState {
  Vector u;
};

struct MtrnnStep {
  MtrnnState state;
  Vector y;
};

struct MtrnnGradients {
  Matrix d_weights;
  Vector d_input;
  Vector d_state;
};

MtrnnCell make_mtrnn_cell(std::size_t n_units, std::size_t n_inputs, double tau, Rng& rng);
MtrnnState mtrnn_zero_state(const MtrnnCell& cell);
void validate(const MtrnnCell& cell);

MtrnnStep mtrnn_step(const MtrnnCell& cell, std::span<const double> x, const MtrnnState& state);

// Adjoint of one step. grad_u is dL/du' arriving through the next step's decay
// term; grad_y is dL/dy. Both paths are combined.
MtrnnGradients mtrnn_backward(const MtrnnCell& cell, std::span<const double> x,
                              const MtrnnState& state_before, std::span<const double> grad_u,
                              std::span<const double> grad_y);

// Same adjoint without re-running the forward step: y is the step's output.
// d_weights is accumulated into `acc`; d_input and d_state are overwritten.
void mtrnn_backward_into(const MtrnnCell& cell, std::span<const double> x,
                         std::span<const double> y, std::span<const double> grad_u,
                         std::span<const double> grad_y, MtrnnGradients& acc);

MtrnnGradients mtrnn_zero_gradients(const MtrnnCell& cell);

// The backward step split at the weights: `drive` is dL/d(W x), so the weight
// gradient of the step is drive ⊗ x. Lets a caller batch the outer products
// of a whole sequence.
struct MtrnnAdjoint {
  Vector drive;
  Vector d_input;
  Vector d_state;
};

void mtrnn_adjoint(const MtrnnCell& cell, std::span<const double> y, std::span<const double> grad_u,
                   std::span<const double> grad_y, MtrnnAdjoint& out);

// ----------------------------------------------------------------------------
// MTGRU
//
//   r  = σ(W_xr x + W_hr h)
//   z  = σ(W_xz x + W_hz h)
//   u  = tanh(W_xu x + W_hu (r ⊙ h))
//   h' = ((1 - z) ⊙ h + z ⊙ u) / tau + (1 - 1/tau) h
//
// tau = +inf is accepted as a diagnostic mode where 1/tau == 0 and the state
// is frozen.
// ----------------------------------------------------------------------------

struct MtgruCell {
  Matrix w_xr, w_xz, w_xu;  // n_units × n_inputs
  Matrix w_hr, w_hz, w_hu;  // n_units × n_units
  double tau = 1.0;

  std::size_t n_units() const { return w_xr.rows(); }
  std::size_t n_inputs() const { return w_xr.cols(); }
  double inv_tau() const { return 1.0 / tau; }
};

struct MtgruState {
  Vector h;
};

// Gate values kept from the forward step for an exact backward step.
struct MtgruTrace {
  Vector r, z, u;
};

struct MtgruStep {
  MtgruState state;
  MtgruTrace trace;
};

struct MtgruGradients {
  Matrix d_w_xr, d_w_xz, d_w_xu;
  Matrix d_w_hr, d_w_hz, d_w_hu;
  Vector d_input;
  Vector d_state;
};

MtgruCell make_mtgru_cell(std::size_t n_units, std::size_t n_inputs, double tau, Rng& rng);
MtgruState mtgru_zero_state(const MtgruCell& cell);
void validate(const MtgruCell& cell);

MtgruStep mtgru_step(const MtgruCell& cell, std::span<const double> x, const MtgruState& state);

MtgruGradients mtgru_backward(const MtgruCell& cell, std::span<const double> x,
                              const MtgruState& state_before, const MtgruTrace& trace,
                              std::span<const double> grad_h);

// Weight gradients are accumulated into `acc`; d_input and d_state are overwritten.
void mtgru_backward_into(const MtgruCell& cell, std::span<const double> x,
                         std::span<const double> h_before, const MtgruTrace& trace,
                         std::span<const double> grad_h, MtgruGradients& acc);

MtgruGradients mtgru_zero_gradients(const MtgruCell& cell);

// Pre-activation gradients of the three gates. The step's weight gradients
// are da_r ⊗ x, da_z ⊗ x, da_u ⊗ x, da_r ⊗ h, da_z ⊗ h and da_u ⊗ (r ⊙ h).
struct MtgruAdjoint {
  Vector da_r, da_z, da_u;
  Vector rh;
  Vector d_input;
  Vector d_state;
};

void mtgru_adjoint(const MtgruCell& cell, std::span<const double> h_before,
                   const MtgruTrace& trace, std::span<const double> grad_h, MtgruAdjoint& out);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace mtscale
