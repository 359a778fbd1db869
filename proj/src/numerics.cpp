#include "mtscale/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mtscale/errors.hpp"

namespace mtscale {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows_ * cols_,
          "Matrix: data length " + std::to_string(data_.size()) + " does not match shape " +
              shape_string());
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Matrix::set_row(std::size_t r, std::span<const double> values) {
  require(r < rows_ && values.size() == cols_,
          "Matrix::set_row: row of length " + std::to_string(values.size()) + " into " +
              shape_string());
  std::copy(values.begin(), values.end(), data_.begin() + static_cast<std::ptrdiff_t>(r * cols_));
}

Vector Matrix::column(std::size_t c) const {
  Vector out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

bool Matrix::all_finite() const { return mtscale::all_finite(data_); }

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

namespace {

void check_matvec(const char* op, const Matrix& m, std::size_t v_len, std::size_t out_len,
                  bool transposed) {
  const std::size_t need_in = transposed ? m.rows() : m.cols();
  const std::size_t need_out = transposed ? m.cols() : m.rows();
  if (v_len != need_in || out_len != need_out) {
    throw ContractError(std::string(op) + ": matrix " + m.shape_string() + " with vector of length " +
                        std::to_string(v_len) + " into output of length " +
                        std::to_string(out_len));
  }
}

}  // namespace

Vector matvec(const Matrix& m, std::span<const double> v) {
  Vector out(m.rows(), 0.0);
  matvec_add(m, v, out);
  return out;
}

void matvec_add(const Matrix& m, std::span<const double> v, std::span<double> out) {
  check_matvec("matvec", m, v.size(), out.size(), false);
  const std::size_t cols = m.cols();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double* row = m.row(i).data();
    // Four fixed partial sums: vectorizable, and the summation order does not
    // depend on the compiler.
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    std::size_t j = 0;
    for (; j + 4 <= cols; j += 4) {
      a0 += row[j] * v[j];
      a1 += row[j + 1] * v[j + 1];
      a2 += row[j + 2] * v[j + 2];
      a3 += row[j + 3] * v[j + 3];
    }
    for (; j < cols; ++j) a0 += row[j] * v[j];
    out[i] += (a0 + a1) + (a2 + a3);
  }
}

void matvec_transposed_add(const Matrix& m, std::span<const double> v, std::span<double> out) {
  check_matvec("matvec_transposed", m, v.size(), out.size(), true);
  const std::size_t cols = m.cols();
  double* o = out.data();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double g = v[i];
    if (g == 0.0) continue;
    const double* row = m.row(i).data();
    for (std::size_t j = 0; j < cols; ++j) o[j] += g * row[j];
  }
}

void outer_add(Matrix& m, std::span<const double> a, std::span<const double> b, double scale) {
  if (a.size() != m.rows() || b.size() != m.cols()) {
    throw ContractError("outer_add: vectors of length " + std::to_string(a.size()) + " and " +
                        std::to_string(b.size()) + " into matrix " + m.shape_string());
  }
  const std::size_t cols = m.cols();
  const double* bp = b.data();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double g = scale * a[i];
    if (g == 0.0) continue;
    double* row = m.row(i).data();
    for (std::size_t j = 0; j < cols; ++j) row[j] += g * bp[j];
  }
}

void outer_add_rows(Matrix& m, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != m.rows() || b.cols() != m.cols()) {
    throw ContractError("outer_add_rows: " + a.shape_string() + " and " + b.shape_string() +
                        " into matrix " + m.shape_string());
  }
  const std::size_t cols = m.cols();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double* row = m.row(i).data();
    for (std::size_t t = 0; t < a.rows(); ++t) {
      const double g = a(t, i);
      if (g == 0.0) continue;
      const double* bp = b.row(t).data();
      for (std::size_t j = 0; j < cols; ++j) row[j] += g * bp[j];
    }
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(),
          "matmul: shapes " + a.shape_string() + " and " + b.shape_string() + " do not chain");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* o = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double s = a(i, k);
      const double* br = b.row(k).data();
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += s * br[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t x = seed;
  for (auto& w : s_) w = splitmix64(x);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) {
  // 53-bit integer in [0, 2^53] mapped onto the closed interval.
  const double u = static_cast<double>(next_u64() >> 11) / static_cast<double>((1ULL << 53) - 1);
  return lo + (hi - lo) * u;
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
  require(n > 0, "Rng::below: n must be positive");
  // Rejection sampling keeps the result unbiased.
  const std::uint64_t limit = ~0ULL - (~0ULL % n);
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % n;
}

Matrix uniform_init(Rng& rng, std::size_t rows, std::size_t cols, double half_range) {
  require(half_range > 0.0 && std::isfinite(half_range),
          "uniform_init: half_range must be positive and finite, got " + std::to_string(half_range));
  Matrix m(rows, cols);
  for (double& x : m.flat()) x = rng.uniform(-half_range, half_range);
  return m;
}

// ---------------------------------------------------------------------------

SymmetricEigen symmetric_eigen(const Matrix& input, double tol, int max_sweeps) {
  require(input.rows() == input.cols(),
          "symmetric_eigen: matrix must be square, got " + input.shape_string());
  const std::size_t n = input.rows();
  Matrix a = input;
  // Rows of vt are eigenvectors; keeps the rotation updates contiguous.
  Matrix vt = Matrix::identity(n);

  double frob = 0.0;
  for (double x : a.flat()) frob += x * x;
  frob = std::sqrt(frob);
  const double skip_below = tol * frob;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= skip_below || apq == 0.0) continue;
        rotated = true;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::hypot(theta, 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (std::size_t k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          const double akp = a(k, p);
          const double akq = a(k, q);
          const double np = c * akp - s * akq;
          const double nq = s * akp + c * akq;
          a(k, p) = a(p, k) = np;
          a(k, q) = a(q, k) = nq;
        }
        a(p, p) -= t * apq;
        a(q, q) += t * apq;
        a(p, q) = a(q, p) = 0.0;

        double* vp = vt.row(p).data();
        double* vq = vt.row(q).data();
        for (std::size_t k = 0; k < n; ++k) {
          const double x = vp[k];
          const double y = vq[k];
          vp[k] = c * x - s * y;
          vq[k] = s * x + c * y;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  SymmetricEigen out{Vector(n), Matrix(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = vt(order[k], r);
  }
  return out;
}

Pca2d pca_2d(const Matrix& data) {
  const std::size_t t_len = data.rows();
  const std::size_t dims = data.cols();
  require(t_len >= 2 && dims >= 2,
          "pca_2d: need at least 2 rows and 2 columns, got " + data.shape_string());
  require(data.all_finite(), "pca_2d: data contains non-finite values");

  bool constant = true;
  Matrix centered = data;
  for (std::size_t c = 0; c < dims; ++c) {
    for (std::size_t r = 1; r < t_len && constant; ++r) constant = data(r, c) == data(0, c);
    double mean = 0.0;
    for (std::size_t r = 0; r < t_len; ++r) mean += data(r, c);
    mean /= static_cast<double>(t_len);
    for (std::size_t r = 0; r < t_len; ++r) centered(r, c) -= mean;
  }

  Matrix cov(dims, dims);
  for (std::size_t r = 0; r < t_len; ++r) outer_add(cov, centered.row(r), centered.row(r));
  const double denom = static_cast<double>(t_len - 1);
  for (double& x : cov.flat()) x /= denom;

  Pca2d out;
  out.projected = Matrix(t_len, 2);
  out.explained_variance = Vector(2, 0.0);
  out.components = Matrix(dims, 2);
  for (std::size_t i = 0; i < dims; ++i) out.total_variance += cov(i, i);

  if (constant || !(out.total_variance > 0.0)) {
    out.degenerate = true;
    out.components(0, 0) = 1.0;
    out.components(1, 1) = 1.0;
    return out;
  }

  const SymmetricEigen eig = symmetric_eigen(cov);
  for (std::size_t k = 0; k < 2; ++k) {
    // Round-off can leave a null eigenvalue slightly negative.
    out.explained_variance[k] = std::max(eig.values[k], 0.0);
    std::size_t arg = 0;
    for (std::size_t r = 1; r < dims; ++r)
      if (std::abs(eig.vectors(r, k)) > std::abs(eig.vectors(arg, k))) arg = r;
    const double sign = eig.vectors(arg, k) < 0.0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < dims; ++r) out.components(r, k) = sign * eig.vectors(r, k);
  }
  out.projected = matmul(centered, out.components);
  return out;
}

}  // namespace mtscale
