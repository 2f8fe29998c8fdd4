#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <complex>
#include <limits>
#include <vector>

namespace rcgs {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

/// Eigenvalues of a real square matrix, sorted by (real, imag).
inline ComplexVector sorted_eigenvalues(const Matrix& a) {
  if (a.size() == 0) return {};
  Eigen::EigenSolver<Matrix> solver(a, /*computeEigenvectors=*/false);
  ComplexVector values = solver.eigenvalues();
  std::sort(values.data(), values.data() + values.size(), [](const Complex& x, const Complex& y) {
    if (x.real() != y.real()) return x.real() < y.real();
    return x.imag() < y.imag();
  });
  return values;
}

inline double spectral_radius(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> solver(a, false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

/// Largest distance between matched eigenvalues of two spectra. Matching is
/// greedy nearest-neighbour over the (real, imag)-sorted lists, which is
/// robust to ordering flips between nearly equal real parts.
inline double spectrum_distance(const ComplexVector& lhs, const ComplexVector& rhs) {
  if (lhs.size() != rhs.size()) return std::numeric_limits<double>::infinity();
  std::vector<bool> used(static_cast<std::size_t>(rhs.size()), false);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < lhs.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index best_j = -1;
    for (Eigen::Index j = 0; j < rhs.size(); ++j) {
      if (used[static_cast<std::size_t>(j)]) continue;
      const double d = std::abs(lhs[i] - rhs[j]);
      if (d < best) {
        best = d;
        best_j = j;
      }
    }
    used[static_cast<std::size_t>(best_j)] = true;
    worst = std::max(worst, best);
  }
  return worst;
}

inline double eigenvalue_drift(const Matrix& a, const Matrix& b) {
  return spectrum_distance(sorted_eigenvalues(a), sorted_eigenvalues(b));
}

template <typename Derived>
Eigen::VectorXd singular_values(const Eigen::MatrixBase<Derived>& m) {
  Eigen::JacobiSVD<typename Derived::PlainObject> svd(m);
  return svd.singularValues();
}

/// Smallest singular value (the q-th for a tall N×q matrix).
template <typename Derived>
double min_singular_value(const Eigen::MatrixBase<Derived>& m) {
  if (m.size() == 0) return 0.0;
  return singular_values(m).minCoeff();
}

inline double condition_number(const Matrix& m) {
  const Vector s = singular_values(m);
  if (s.size() == 0) return 1.0;
  const double smin = s.minCoeff();
  if (smin == 0.0) return std::numeric_limits<double>::infinity();
  return s.maxCoeff() / smin;
}

inline Matrix block_diagonal(const Matrix& top, const Matrix& bottom) {
  Matrix out = Matrix::Zero(top.rows() + bottom.rows(), top.cols() + bottom.cols());
  out.topLeftCorner(top.rows(), top.cols()) = top;
  out.bottomRightCorner(bottom.rows(), bottom.cols()) = bottom;
  return out;
}

}  // namespace rcgs
