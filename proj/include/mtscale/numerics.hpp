#pragma once

// Dense row-major linear algebra, the project-wide random number generator,
// and a two-component PCA. Everything is 64-bit floating point.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mtscale {

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  void fill(double v);
  void set_row(std::size_t r, std::span<const double> values);
  Vector column(std::size_t c) const;

  std::string shape_string() const;
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// m · v
Vector matvec(const Matrix& m, std::span<const double> v);
// out += m · v
void matvec_add(const Matrix& m, std::span<const double> v, std::span<double> out);
// out += mᵀ · v
void matvec_transposed_add(const Matrix& m, std::span<const double> v, std::span<double> out);
// m += scale · a bᵀ
void outer_add(Matrix& m, std::span<const double> a, std::span<const double> b, double scale = 1.0);
// m += aᵀ b, i.e. the sum of outer products of matching rows of a and b.
void outer_add_rows(Matrix& m, const Matrix& a, const Matrix& b);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

bool all_finite(std::span<const double> v);

/// xoshiro256** seeded through splitmix64.
///
/// The four 64-bit state words are filled by successive splitmix64 outputs of
/// the seed. Doubles take the top 53 bits of a draw. Normal variates use the
/// Box-Muller transform with no cached second value. Every operation is pure
/// integer or IEEE arithmetic, so a seed produces the same stream everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // [0, 1)
  double uniform();
  // [lo, hi]
  double uniform(double lo, double hi);
  double normal();
  // [0, n)
  std::uint64_t below(std::uint64_t n);

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
};

// Entries i.i.d. uniform in [-half_range, +half_range].
Matrix uniform_init(Rng& rng, std::size_t rows, std::size_t cols, double half_range);

struct SymmetricEigen {
  Vector values;   // descending
  Matrix vectors;  // column k pairs with values[k]
};

// Cyclic Jacobi rotations. The input must be square and symmetric.
SymmetricEigen symmetric_eigen(const Matrix& a, double tol = 1e-14, int max_sweeps = 100);

struct Pca2d {
  Matrix projected;            // T×2
  Vector explained_variance;   // 2 leading covariance eigenvalues
  Matrix components;           // D×2, orthonormal columns
  double total_variance = 0.0; // trace of the covariance
  bool degenerate = false;     // zero total variance
};

// Sample covariance (divisor T-1) of the column-centered data. Each component
// is sign-normalized so its largest-magnitude entry is positive.
Pca2d pca_2d(const Matrix& data);

}  // namespace mtscale
