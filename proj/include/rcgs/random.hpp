#pragma once

#include "rcgs/linalg.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace rcgs {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// 64-bit FNV-1a. Used for substream labels and for content checksums.
inline constexpr std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Seedable generator whose output is identical on every platform:
/// std::mt19937_64 has a fully specified sequence, and the real-valued
/// conversions below avoid the implementation-defined std distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  /// Independent substream keyed by a label and an index, e.g.
  /// Rng::substream(seed, "reservoir.A", trial).
  static Rng substream(std::uint64_t seed, std::string_view label, std::uint64_t index = 0) {
    return Rng(splitmix64(seed ^ fnv1a64(label)) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double lo = -1.0, double hi = 1.0) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = uniform(lo, hi);
    return m;
  }

  Vector uniform_vector(Eigen::Index n, double lo = -1.0, double hi = 1.0) {
    return uniform_matrix(n, 1, lo, hi);
  }

  /// Standard normal by Box-Muller on uniform01().
  double normal() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  /// Point drawn uniformly from the origin-centred ball of the given radius.
  Vector in_ball(Eigen::Index n, double radius) {
    Vector v(n);
    do {
      for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    } while (v.squaredNorm() == 0.0);
    const double r = radius * std::pow(uniform01(), 1.0 / static_cast<double>(n));
    return r * v.normalized();
  }

  /// Proper rotation from the QR factor of a uniform matrix, with column
  /// signs normalised so diag(R) > 0 and det = +1.
  Matrix rotation(Eigen::Index n) {
    const Matrix m = uniform_matrix(n, n);
    Eigen::HouseholderQR<Matrix> qr(m);
    Matrix q = qr.householderQ();
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < n; ++j)
      if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    if (q.determinant() < 0.0) q.col(0) = -q.col(0);
    return q;
  }

  /// Symmetric positive definite matrix B^T B + shift I with B uniform.
  Matrix spd(Eigen::Index n, double shift = 0.1) {
    const Matrix b = uniform_matrix(n, n);
    return b.transpose() * b + shift * Matrix::Identity(n, n);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace rcgs
