#pragma once

// Invertible source maps phi on R^q and scalar observations omega.

#include "rcgs/errors.hpp"
#include "rcgs/linalg.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace rcgs {

/// phi(m) = M m with M invertible.
class LinearSource {
 public:
  static constexpr double kDeterminantTolerance = 1e-12;

  explicit LinearSource(Matrix m) : m_(std::move(m)) {
    if (m_.rows() == 0 || m_.rows() != m_.cols())
      fail(ErrorKind::ConfigError, "linear source matrix must be square and nonempty");
    if (!all_finite(m_)) fail(ErrorKind::ConfigError, "linear source matrix has non-finite entries");
    Eigen::FullPivLU<Matrix> lu(m_);
    if (std::abs(lu.determinant()) <= kDeterminantTolerance || !lu.isInvertible())
      fail(ErrorKind::SingularMap, "linear source matrix is not invertible");
    m_inv_ = lu.inverse();
  }

  static LinearSource scalar(double s) { return LinearSource(Matrix::Constant(1, 1, s)); }

  static LinearSource rotation(double theta) {
    Matrix r(2, 2);
    r << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    return LinearSource(r);
  }

  static LinearSource diagonal(const Vector& d) { return LinearSource(Matrix(d.asDiagonal())); }

  /// Saddle diag(s, 1/s).
  static LinearSource hyperbolic(double s) { return diagonal(Vector{{s, 1.0 / s}}); }

  Eigen::Index dimension() const { return m_.rows(); }
  const Matrix& matrix() const { return m_; }
  const Matrix& inverse_matrix() const { return m_inv_; }

 private:
  Matrix m_;
  Matrix m_inv_;
};

/// General diffeomorphism given by closures for phi, phi^{-1} and T phi^{-1}.
class NonlinearSource {
 public:
  using Map = std::function<Vector(const Vector&)>;
  using JacobianMap = std::function<Matrix(const Vector&)>;

  NonlinearSource(std::string name, Eigen::Index q, Map forward, Map inverse, JacobianMap inverse_jacobian)
      : name_(std::move(name)),
        q_(q),
        forward_(std::move(forward)),
        inverse_(std::move(inverse)),
        inverse_jacobian_(std::move(inverse_jacobian)) {
    if (q_ <= 0) fail(ErrorKind::ConfigError, "source dimension must be positive");
  }

  /// x' = 1 + y - a x^2, y' = b x. Invertible iff b != 0.
  static NonlinearSource henon(double a = 1.4, double b = 0.3) {
    if (b == 0.0) fail(ErrorKind::SingularMap, "Henon map is not invertible for b = 0");
    return NonlinearSource(
        "henon", 2,
        [a, b](const Vector& m) { return Vector{{1.0 + m[1] - a * m[0] * m[0], b * m[0]}}; },
        [a, b](const Vector& m) {
          const double x = m[1] / b;
          return Vector{{x, m[0] - 1.0 + a * x * x}};
        },
        [a, b](const Vector& m) {
          Matrix j(2, 2);
          j << 0.0, 1.0 / b, 1.0, 2.0 * a * m[1] / (b * b);
          return j;
        });
  }

  const std::string& name() const { return name_; }
  Eigen::Index dimension() const { return q_; }
  Vector forward(const Vector& m) const { return forward_(m); }
  Vector inverse(const Vector& m) const { return inverse_(m); }
  Matrix inverse_jacobian(const Vector& m) const { return inverse_jacobian_(m); }

 private:
  std::string name_;
  Eigen::Index q_;
  Map forward_;
  Map inverse_;
  JacobianMap inverse_jacobian_;
};

using SourceSystem = std::variant<LinearSource, NonlinearSource>;

inline Eigen::Index dimension(const SourceSystem& source) {
  return std::visit([](const auto& s) { return s.dimension(); }, source);
}

namespace detail {
inline void check_point(Eigen::Index q, const Vector& m) {
  if (m.size() != q) fail(ErrorKind::ConfigError, "point dimension does not match source dimension");
  if (!all_finite(m)) fail(ErrorKind::NonFiniteState, "source point is not finite");
}
inline Vector checked_result(Vector out) {
  if (!all_finite(out)) fail(ErrorKind::NonFiniteState, "source map produced a non-finite point");
  return out;
}
}  // namespace detail

inline Vector step_forward(const LinearSource& s, const Vector& m) {
  detail::check_point(s.dimension(), m);
  return detail::checked_result(s.matrix() * m);
}
inline Vector step_forward(const NonlinearSource& s, const Vector& m) {
  detail::check_point(s.dimension(), m);
  return detail::checked_result(s.forward(m));
}
inline Vector step_forward(const SourceSystem& s, const Vector& m) {
  return std::visit([&](const auto& src) { return step_forward(src, m); }, s);
}

inline Vector step_inverse(const LinearSource& s, const Vector& m) {
  detail::check_point(s.dimension(), m);
  return detail::checked_result(s.inverse_matrix() * m);
}
inline Vector step_inverse(const NonlinearSource& s, const Vector& m) {
  detail::check_point(s.dimension(), m);
  return detail::checked_result(s.inverse(m));
}
inline Vector step_inverse(const SourceSystem& s, const Vector& m) {
  return std::visit([&](const auto& src) { return step_inverse(src, m); }, s);
}

/// T_m phi^{-1}; constant M^{-1} for a linear source.
inline Matrix inverse_jacobian(const LinearSource& s, const Vector& m) {
  detail::check_point(s.dimension(), m);
  return s.inverse_matrix();
}
inline Matrix inverse_jacobian(const NonlinearSource& s, const Vector& m) {
  detail::check_point(s.dimension(), m);
  Matrix j = s.inverse_jacobian(m);
  if (!all_finite(j)) fail(ErrorKind::SingularMap, "inverse Jacobian is not finite");
  return j;
}
inline Matrix inverse_jacobian(const SourceSystem& s, const Vector& m) {
  return std::visit([&](const auto& src) { return inverse_jacobian(src, m); }, s);
}

/// Eigenpairs (lambda_j, v_j) of M^{-1}.
struct InverseEigenpairs {
  ComplexVector values;   // lambda_j
  ComplexMatrix vectors;  // column j is v_j, unit 2-norm
  double min_gap = 0.0;   // min_{i<j} |lambda_i - lambda_j|
  double tolerance = 0.0;
  bool distinct = false;
};

/// Eigenpairs of M^{-1}, ordered by descending modulus then (real, imag).
/// Each eigenvector is scaled to unit norm with its first nonzero component
/// real and positive. Throws NonDistinctEigenvalues when the minimum pairwise
/// gap is not above `relative_tol * max|lambda|`.
inline InverseEigenpairs eigenpairs_inverse(const LinearSource& source, double relative_tol = 1e-8) {
  const Matrix& minv = source.inverse_matrix();
  Eigen::EigenSolver<Matrix> solver(minv, true);
  if (solver.info() != Eigen::Success) fail(ErrorKind::SingularEigenbasis, "eigen decomposition failed");
  const ComplexVector raw_values = solver.eigenvalues();
  const ComplexMatrix raw_vectors = solver.eigenvectors();
  const Eigen::Index q = raw_values.size();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(q));
  for (Eigen::Index i = 0; i < q; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    const Complex x = raw_values[a], y = raw_values[b];
    if (std::abs(x) != std::abs(y)) return std::abs(x) > std::abs(y);
    if (x.real() != y.real()) return x.real() > y.real();
    return x.imag() > y.imag();
  });

  InverseEigenpairs out;
  out.values.resize(q);
  out.vectors.resize(q, q);
  for (Eigen::Index k = 0; k < q; ++k) {
    const Eigen::Index src = order[static_cast<std::size_t>(k)];
    out.values[k] = raw_values[src];
    ComplexVector v = raw_vectors.col(src);
    v.normalize();
    const double floor = 1e-12;
    for (Eigen::Index i = 0; i < q; ++i) {
      if (std::abs(v[i]) > floor) {
        v *= std::conj(v[i]) / std::abs(v[i]);
        v[i] = Complex(v[i].real(), 0.0);
        break;
      }
    }
    out.vectors.col(k) = v;
  }

  const double scale = q > 0 ? out.values.cwiseAbs().maxCoeff() : 0.0;
  out.tolerance = relative_tol * scale;
  out.min_gap = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < q; ++i)
    for (Eigen::Index j = i + 1; j < q; ++j)
      out.min_gap = std::min(out.min_gap, std::abs(out.values[i] - out.values[j]));
  out.distinct = out.min_gap > out.tolerance;
  if (!out.distinct)
    fail(ErrorKind::NonDistinctEigenvalues,
         "eigenvalues of the inverse source map are not distinct (min gap " + std::to_string(out.min_gap) + ")");
  return out;
}

/// {phi^{burn_in + k}(m0)}, k = 0..n-1.
template <typename Source>
std::vector<Vector> sample_trajectory(const Source& source, const Vector& m0, std::size_t burn_in, std::size_t n) {
  if (n == 0) fail(ErrorKind::ConfigError, "trajectory length must be at least 1");
  Vector m = m0;
  for (std::size_t k = 0; k < burn_in; ++k) m = step_forward(source, m);
  std::vector<Vector> out;
  out.reserve(n);
  out.push_back(m);
  for (std::size_t k = 1; k < n; ++k) {
    m = step_forward(source, m);
    out.push_back(m);
  }
  return out;
}

/// Scalar observation omega with gradient D omega. Linear observations keep
/// their coefficient row c so closed-form routines can use omega(m) = c m.
class Observation {
 public:
  using Value = std::function<double(const Vector&)>;
  using Gradient = std::function<RowVector(const Vector&)>;

  Observation(Value value, Gradient gradient) : value_(std::move(value)), gradient_(std::move(gradient)) {}

  static Observation linear(RowVector c) {
    Observation obs([c](const Vector& m) { return c.dot(m.transpose()); },
                    [c](const Vector&) { return c; });
    obs.coefficients_ = std::move(c);
    return obs;
  }

  static Observation coordinate(Eigen::Index q, Eigen::Index index) {
    if (index < 0 || index >= q) fail(ErrorKind::ConfigError, "observed coordinate out of range");
    RowVector c = RowVector::Zero(q);
    c[index] = 1.0;
    return linear(std::move(c));
  }

  double operator()(const Vector& m) const { return value_(m); }
  double value(const Vector& m) const { return value_(m); }
  RowVector gradient(const Vector& m) const { return gradient_(m); }
  const std::optional<RowVector>& linear_coefficients() const { return coefficients_; }

 private:
  Value value_;
  Gradient gradient_;
  std::optional<RowVector> coefficients_;
};

}  // namespace rcgs
