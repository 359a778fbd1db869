#pragma once

// Reference implementations written directly from the cell update rules,
// sharing no code with the library beyond the Matrix container. They are
// templated on the scalar so finite differences can run in long double.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "mtscale/numerics.hpp"

namespace oracle {

using mtscale::Matrix;

template <class S>
struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<S> v;
  S operator()(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

template <class S>
Mat<S> lift(const Matrix& m) {
  Mat<S> out{m.rows(), m.cols(), {}};
  for (double x : m.flat()) out.v.push_back(x);
  return out;
}

template <class S>
std::vector<S> lift(std::span<const double> x) {
  return std::vector<S>(x.begin(), x.end());
}

template <class S>
std::vector<S> mul(const Mat<S>& m, const std::vector<S>& x) {
  std::vector<S> out(m.rows, S(0));
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) out[i] += m(i, j) * x[j];
  return out;
}

// Double products reuse the library's summation order so that degenerate
// cases can be compared bit for bit.
template <>
inline std::vector<double> mul(const Mat<double>& m, const std::vector<double>& x) {
  return mtscale::matvec(Matrix(m.rows, m.cols, m.v), x);
}

template <class S>
S logistic(S a) {
  return S(1) / (S(1) + std::exp(-a));
}

// Leaky integrator: returns (u', tanh(u')).
template <class S>
std::pair<std::vector<S>, std::vector<S>> mtrnn_step(const Mat<S>& w, const std::vector<S>& tau,
                                                     const std::vector<S>& x,
                                                     const std::vector<S>& u) {
  const std::vector<S> drive = mul(w, x);
  std::vector<S> un(u.size()), y(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    un[i] = (S(1) - S(1) / tau[i]) * u[i] + drive[i] / tau[i];
    y[i] = std::tanh(un[i]);
  }
  return {un, y};
}

template <class S>
struct Gru {
  Mat<S> wxr, wxz, wxu, whr, whz, whu;
  Mat<S>& operator[](std::size_t k) { return *std::array{&wxr, &wxz, &wxu, &whr, &whz, &whu}[k]; }
};

// Textbook GRU followed by the 1/tau blend with the previous state; k = 1/tau.
// With k = 1 this is the plain GRU update (1 - z) h + z u.
template <class S>
std::vector<S> gru_step(const Gru<S>& g, const std::vector<S>& x, const std::vector<S>& h,
                        S k = S(1)) {
  const std::size_t n = h.size();
  std::vector<S> r(n), z(n), rh(n), out(n);
  const auto xr = mul(g.wxr, x), hr = mul(g.whr, h);
  const auto xz = mul(g.wxz, x), hz = mul(g.whz, h);
  for (std::size_t i = 0; i < n; ++i) {
    r[i] = logistic(xr[i] + hr[i]);
    z[i] = logistic(xz[i] + hz[i]);
    rh[i] = r[i] * h[i];
  }
  const auto xu = mul(g.wxu, x), hu = mul(g.whu, rh);
  for (std::size_t i = 0; i < n; ++i) {
    const S u = std::tanh(xu[i] + hu[i]);
    out[i] = (S(1) - z[i]) * h[i] + z[i] * u;
    if (k != S(1)) out[i] = out[i] * k + (S(1) - k) * h[i];
  }
  return out;
}

// Two stacked plain GRUs with delayed top-down feedback and a tanh readout,
// teacher forced: the lower layer reads (tanh(x_t), top_{t-1}), the upper
// reads the lower layer's new state.
inline Matrix gru_stack(const Gru<double>& low, const Gru<double>& high, const Matrix& readout,
                        const Matrix& inputs) {
  std::vector<double> h_low(low.whr.rows, 0.0), h_high(high.whr.rows, 0.0);
  const Mat<double> ro = lift<double>(readout);
  Matrix out(inputs.rows(), readout.rows());
  for (std::size_t t = 0; t < inputs.rows(); ++t) {
    std::vector<double> x;
    for (double v : inputs.row(t)) x.push_back(std::tanh(v));
    x.insert(x.end(), h_high.begin(), h_high.end());
    h_low = gru_step(low, x, h_low);
    h_high = gru_step(high, h_low, h_high);
    const auto o = mul(ro, h_low);
    for (std::size_t d = 0; d < o.size(); ++d) out(t, d) = std::tanh(o[d]);
  }
  return out;
}

using Real = long double;

// Central difference of f with respect to *slot.
inline double central_difference(const std::function<Real()>& f, Real* slot, double eps) {
  const Real saved = *slot;
  *slot = saved + Real(eps);
  const Real up = f();
  *slot = saved - Real(eps);
  const Real down = f();
  *slot = saved;
  return static_cast<double>((up - down) / (Real(2) * Real(eps)));
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

template <class S>
S dot(const std::vector<S>& a, const std::vector<S>& b) {
  S s(0);
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace oracle
