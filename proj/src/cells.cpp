#include "mtscale/cells.hpp"

#include <algorithm>
#include <string>

#include "mtscale/errors.hpp"

namespace mtscale {

namespace {

void check_len(const char* op, const char* what, std::size_t got, std::size_t want) {
  if (got != want) {
    throw ContractError(std::string(op) + ": " + what + " has length " + std::to_string(got) +
                        ", expected " + std::to_string(want));
  }
}

double init_range(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

}  // namespace

// ---------------------------------------------------------------------------
// MTRNN

MtrnnCell make_mtrnn_cell(std::size_t n_units, std::size_t n_inputs, double tau, Rng& rng) {
  require(n_units >= 1 && n_inputs >= 1, "make_mtrnn_cell: sizes must be >= 1");
  require(tau >= 1.0, "make_mtrnn_cell: tau must be >= 1, got " + std::to_string(tau));
  MtrnnCell cell{uniform_init(rng, n_units, n_inputs, init_range(n_inputs)), Vector(n_units, tau)};
  return cell;
}

MtrnnState mtrnn_zero_state(const MtrnnCell& cell) { return {Vector(cell.n_units(), 0.0)}; }

void validate(const MtrnnCell& cell) {
  require(cell.tau.size() == cell.n_units(),
          "MtrnnCell: tau has length " + std::to_string(cell.tau.size()) + " for " +
              std::to_string(cell.n_units()) + " units");
  for (double t : cell.tau) require(t >= 1.0, "MtrnnCell: every tau must be >= 1");
  require(cell.weights.all_finite(), "MtrnnCell: weights contain non-finite values");
}

MtrnnStep mtrnn_step(const MtrnnCell& cell, std::span<const double> x, const MtrnnState& state) {
  check_len("mtrnn_step", "x", x.size(), cell.n_inputs());
  check_len("mtrnn_step", "state.u", state.u.size(), cell.n_units());
  MtrnnStep out{{matvec(cell.weights, x)}, Vector(cell.n_units())};
  for (std::size_t i = 0; i < cell.n_units(); ++i) {
    const double k = 1.0 / cell.tau[i];
    out.state.u[i] = (1.0 - k) * state.u[i] + k * out.state.u[i];
    out.y[i] = std::tanh(out.state.u[i]);
  }
  return out;
}

MtrnnGradients mtrnn_zero_gradients(const MtrnnCell& cell) {
  return {Matrix(cell.n_units(), cell.n_inputs()), Vector(cell.n_inputs(), 0.0),
          Vector(cell.n_units(), 0.0)};
}

void mtrnn_adjoint(const MtrnnCell& cell, std::span<const double> y, std::span<const double> grad_u,
                   std::span<const double> grad_y, MtrnnAdjoint& out) {
  const std::size_t n = cell.n_units();
  check_len("mtrnn_backward", "y", y.size(), n);
  check_len("mtrnn_backward", "grad_u", grad_u.size(), n);
  check_len("mtrnn_backward", "grad_y", grad_y.size(), n);

  // g = total dL/du'; the synaptic drive W x enters scaled by 1/tau.
  out.drive.resize(n);
  out.d_state.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad_u[i] + grad_y[i] * (1.0 - y[i] * y[i]);
    const double k = 1.0 / cell.tau[i];
    out.drive[i] = g * k;
    out.d_state[i] = g * (1.0 - k);
  }
  out.d_input.assign(cell.n_inputs(), 0.0);
  matvec_transposed_add(cell.weights, out.drive, out.d_input);
}

void mtrnn_backward_into(const MtrnnCell& cell, std::span<const double> x,
                         std::span<const double> y, std::span<const double> grad_u,
                         std::span<const double> grad_y, MtrnnGradients& acc) {
  check_len("mtrnn_backward", "x", x.size(), cell.n_inputs());
  require(acc.d_weights.rows() == cell.n_units() && acc.d_weights.cols() == cell.n_inputs(),
          "mtrnn_backward: gradient accumulator shape " + acc.d_weights.shape_string() +
              " does not match cell " + cell.weights.shape_string());
  MtrnnAdjoint adj;
  mtrnn_adjoint(cell, y, grad_u, grad_y, adj);
  outer_add(acc.d_weights, adj.drive, x);
  acc.d_input = std::move(adj.d_input);
  acc.d_state = std::move(adj.d_state);
}

MtrnnGradients mtrnn_backward(const MtrnnCell& cell, std::span<const double> x,
                              const MtrnnState& state_before, std::span<const double> grad_u,
                              std::span<const double> grad_y) {
  const MtrnnStep fwd = mtrnn_step(cell, x, state_before);
  MtrnnGradients g = mtrnn_zero_gradients(cell);
  mtrnn_backward_into(cell, x, fwd.y, grad_u, grad_y, g);
  return g;
}

// ---------------------------------------------------------------------------
// MTGRU

MtgruCell make_mtgru_cell(std::size_t n_units, std::size_t n_inputs, double tau, Rng& rng) {
  require(n_units >= 1 && n_inputs >= 1, "make_mtgru_cell: sizes must be >= 1");
  require(tau >= 1.0, "make_mtgru_cell: tau must be >= 1, got " + std::to_string(tau));
  const double rx = init_range(n_inputs);
  const double rh = init_range(n_units);
  MtgruCell cell;
  cell.w_xr = uniform_init(rng, n_units, n_inputs, rx);
  cell.w_xz = uniform_init(rng, n_units, n_inputs, rx);
  cell.w_xu = uniform_init(rng, n_units, n_inputs, rx);
  cell.w_hr = uniform_init(rng, n_units, n_units, rh);
  cell.w_hz = uniform_init(rng, n_units, n_units, rh);
  cell.w_hu = uniform_init(rng, n_units, n_units, rh);
  cell.tau = tau;
  return cell;
}

MtgruState mtgru_zero_state(const MtgruCell& cell) { return {Vector(cell.n_units(), 0.0)}; }

void validate(const MtgruCell& cell) {
  const std::size_t n = cell.n_units();
  const std::size_t m = cell.n_inputs();
  for (const Matrix* w : {&cell.w_xr, &cell.w_xz, &cell.w_xu}) {
    require(w->rows() == n && w->cols() == m,
            "MtgruCell: input weight shape " + w->shape_string() + " inconsistent");
    require(w->all_finite(), "MtgruCell: weights contain non-finite values");
  }
  for (const Matrix* w : {&cell.w_hr, &cell.w_hz, &cell.w_hu}) {
    require(w->rows() == n && w->cols() == n,
            "MtgruCell: recurrent weight shape " + w->shape_string() + " inconsistent");
    require(w->all_finite(), "MtgruCell: weights contain non-finite values");
  }
  require(cell.tau >= 1.0, "MtgruCell: tau must be >= 1");
}

MtgruStep mtgru_step(const MtgruCell& cell, std::span<const double> x, const MtgruState& state) {
  const std::size_t n = cell.n_units();
  check_len("mtgru_step", "x", x.size(), cell.n_inputs());
  check_len("mtgru_step", "state.h", state.h.size(), n);
  const Vector& h = state.h;

  MtgruStep out;
  MtgruTrace& tr = out.trace;
  tr.r = matvec(cell.w_xr, x);
  matvec_add(cell.w_hr, h, tr.r);
  tr.z = matvec(cell.w_xz, x);
  matvec_add(cell.w_hz, h, tr.z);
  Vector rh(n);
  for (std::size_t i = 0; i < n; ++i) {
    tr.r[i] = sigmoid(tr.r[i]);
    tr.z[i] = sigmoid(tr.z[i]);
    rh[i] = tr.r[i] * h[i];
  }
  tr.u = matvec(cell.w_xu, x);
  matvec_add(cell.w_hu, rh, tr.u);

  const double k = cell.inv_tau();
  out.state.h.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    tr.u[i] = std::tanh(tr.u[i]);
    const double mix = (1.0 - tr.z[i]) * h[i] + tr.z[i] * tr.u[i];
    out.state.h[i] = mix * k + (1.0 - k) * h[i];
  }
  return out;
}

MtgruGradients mtgru_zero_gradients(const MtgruCell& cell) {
  const std::size_t n = cell.n_units();
  const std::size_t m = cell.n_inputs();
  return {Matrix(n, m), Matrix(n, m), Matrix(n, m), Matrix(n, n), Matrix(n, n), Matrix(n, n),
          Vector(m, 0.0), Vector(n, 0.0)};
}

namespace {

void check_trace(const MtgruTrace& tr, std::size_t n) {
  if (tr.r.size() != n || tr.z.size() != n || tr.u.size() != n) {
    throw ContractError("mtgru_backward: gate trace of size (" + std::to_string(tr.r.size()) +
                        ", " + std::to_string(tr.z.size()) + ", " + std::to_string(tr.u.size()) +
                        ") does not belong to a cell with " + std::to_string(n) + " units");
  }
}

}  // namespace

void mtgru_adjoint(const MtgruCell& cell, std::span<const double> h, const MtgruTrace& tr,
                   std::span<const double> grad_h, MtgruAdjoint& out) {
  const std::size_t n = cell.n_units();
  check_len("mtgru_backward", "state.h", h.size(), n);
  check_len("mtgru_backward", "grad_h", grad_h.size(), n);
  check_trace(tr, n);

  const double k = cell.inv_tau();
  out.da_r.resize(n);
  out.da_z.resize(n);
  out.da_u.resize(n);
  out.rh.resize(n);
  out.d_state.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad_h[i];
    const double z = tr.z[i];
    const double u = tr.u[i];
    out.d_state[i] = g * (k * (1.0 - z) + (1.0 - k));
    const double gk = g * k;
    out.da_z[i] = gk * (u - h[i]) * z * (1.0 - z);
    out.da_u[i] = gk * z * (1.0 - u * u);
    out.rh[i] = tr.r[i] * h[i];
  }

  // Candidate path: W_hu acts on r ⊙ h.
  Vector d_rh(n, 0.0);
  matvec_transposed_add(cell.w_hu, out.da_u, d_rh);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = tr.r[i];
    out.da_r[i] = d_rh[i] * h[i] * r * (1.0 - r);
    out.d_state[i] += d_rh[i] * r;
  }

  out.d_input.assign(cell.n_inputs(), 0.0);
  matvec_transposed_add(cell.w_xr, out.da_r, out.d_input);
  matvec_transposed_add(cell.w_xz, out.da_z, out.d_input);
  matvec_transposed_add(cell.w_xu, out.da_u, out.d_input);
  matvec_transposed_add(cell.w_hr, out.da_r, out.d_state);
  matvec_transposed_add(cell.w_hz, out.da_z, out.d_state);
}

void mtgru_backward_into(const MtgruCell& cell, std::span<const double> x,
                         std::span<const double> h, const MtgruTrace& tr,
                         std::span<const double> grad_h, MtgruGradients& acc) {
  const std::size_t n = cell.n_units();
  const std::size_t m = cell.n_inputs();
  check_len("mtgru_backward", "x", x.size(), m);
  require(acc.d_w_xr.rows() == n && acc.d_w_xr.cols() == m && acc.d_w_hr.rows() == n &&
              acc.d_w_hr.cols() == n,
          "mtgru_backward: gradient accumulator does not match cell shape");
  MtgruAdjoint adj;
  mtgru_adjoint(cell, h, tr, grad_h, adj);
  outer_add(acc.d_w_xr, adj.da_r, x);
  outer_add(acc.d_w_xz, adj.da_z, x);
  outer_add(acc.d_w_xu, adj.da_u, x);
  outer_add(acc.d_w_hr, adj.da_r, h);
  outer_add(acc.d_w_hz, adj.da_z, h);
  outer_add(acc.d_w_hu, adj.da_u, adj.rh);
  acc.d_input = std::move(adj.d_input);
  acc.d_state = std::move(adj.d_state);
}

MtgruGradients mtgru_backward(const MtgruCell& cell, std::span<const double> x,
                              const MtgruState& state_before, const MtgruTrace& trace,
                              std::span<const double> grad_h) {
  MtgruGradients g = mtgru_zero_gradients(cell);
  mtgru_backward_into(cell, x, state_before.h, trace, grad_h, g);
  return g;
}

}  // namespace mtscale
