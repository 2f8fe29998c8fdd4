#pragma once

// Closed-form generalized synchronization of a linear reservoir driven by a
// linear source through a linear observation omega(m) = c m.
//
// With x_{k+1} = A x_k + C c m_k and m_{k+1} = M m_k, the state that has just
// consumed omega(m) is
//
//   f(m) = sum_{k>=0} A^k C c M^{-k} m = J m,
//
// and J is the unique solution of the Stein equation J = C c + A J M^{-1}
// whenever rho(A) rho(M^{-1}) < 1.

#include "rcgs/errors.hpp"
#include "rcgs/linalg.hpp"
#include "rcgs/reservoir.hpp"
#include "rcgs/sources.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace rcgs {

struct LinearGsProblem {
  LinearReservoir reservoir;
  LinearSource source;
  RowVector c;

  LinearGsProblem(LinearReservoir r, LinearSource s, RowVector coefficients)
      : reservoir(std::move(r)), source(std::move(s)), c(std::move(coefficients)) {
    if (c.size() != source.dimension())
      fail(ErrorKind::ConfigError, "observation coefficients do not match source dimension");
  }

  LinearGsProblem(LinearReservoir r, LinearSource s, const Observation& obs)
      : LinearGsProblem(std::move(r), std::move(s), linear_row(obs)) {}

  Eigen::Index n() const { return reservoir.dimension(); }
  Eigen::Index q() const { return source.dimension(); }

 private:
  static RowVector linear_row(const Observation& obs) {
    if (!obs.linear_coefficients()) fail(ErrorKind::ConfigError, "closed-form GS needs a linear observation");
    return *obs.linear_coefficients();
  }
};

struct GateReport {
  double rho_a = 0.0;
  double rho_source_inverse = 0.0;
  double product = 0.0;
  double margin = 0.0;  // 1 - product
  bool passed = false;
};

/// Joint spectral gate rho(A) * rho(M^{-1}) < 1. This is the condition under
/// which every (I - lambda_j A) is invertible and the driven series converges.
inline GateReport check_convergence(const LinearGsProblem& problem) {
  GateReport g;
  g.rho_a = spectral_radius(problem.reservoir.A);
  g.rho_source_inverse = spectral_radius(problem.source.inverse_matrix());
  g.product = g.rho_a * g.rho_source_inverse;
  g.margin = 1.0 - g.product;
  g.passed = g.product < 1.0;
  return g;
}

/// f(m) = J m + offset. The offset is (I - A)^{-1} b and vanishes unless the
/// reservoir carries a constant term.
struct GsLinearMap {
  Matrix J;
  Vector offset;
  double residual = 0.0;   // |J - A J M^{-1} - C c|_F
  double condition = 1.0;  // condition number of the lifted Stein system

  Vector operator()(const Vector& m) const { return J * m + offset; }
};

inline constexpr double kMaxSteinCondition = 1e12;

/// Solves J - A J M^{-1} = C c through the Kronecker lift
/// (I - M^{-T} (x) A) vec(J) = vec(C c).
inline GsLinearMap gs_matrix(const LinearGsProblem& problem, double max_condition = kMaxSteinCondition) {
  const GateReport gate = check_convergence(problem);
  if (!gate.passed)
    fail(ErrorKind::DivergentSeries,
         "rho(A) * rho(M^-1) = " + std::to_string(gate.product) + " is not below 1");

  const Matrix& a = problem.reservoir.A;
  const Matrix& minv = problem.source.inverse_matrix();
  const Eigen::Index n = problem.n(), q = problem.q();
  const Matrix rhs_matrix = problem.reservoir.C * problem.c;

  Matrix lifted = Matrix::Identity(n * q, n * q);
  for (Eigen::Index i = 0; i < q; ++i)
    for (Eigen::Index j = 0; j < q; ++j) lifted.block(j * n, i * n, n, n) -= minv(i, j) * a;

  GsLinearMap out;
  out.condition = condition_number(lifted);
  if (!(out.condition <= max_condition))
    fail(ErrorKind::IllConditioned, "Stein system condition number " + std::to_string(out.condition));

  const Eigen::Map<const Vector> rhs(rhs_matrix.data(), n * q);
  Eigen::PartialPivLU<Matrix> lu(lifted);
  Vector vec_j = lu.solve(rhs);
  vec_j += lu.solve(rhs - lifted * vec_j);  // one refinement step
  out.J = Eigen::Map<const Matrix>(vec_j.data(), n, q);
  out.residual = (out.J - a * out.J * minv - rhs_matrix).norm();

  out.offset = Vector::Zero(n);
  if (problem.reservoir.has_offset()) {
    if (!(gate.rho_a < 1.0)) fail(ErrorKind::DivergentSeries, "constant reservoir term needs rho(A) < 1");
    out.offset = (Matrix::Identity(n, n) - a).partialPivLu().solve(problem.reservoir.b);
  }
  return out;
}

inline Vector gs_value(const GsLinearMap& map, const Vector& m) { return map(m); }
inline Vector gs_value(const LinearGsProblem& problem, const Vector& m) { return gs_matrix(problem)(m); }

/// P with column j equal to (c v_j) (I - lambda_j A)^{-1} C.
struct PMatrix {
  ComplexMatrix P;
  Vector singular_values;     // descending
  Vector observability;       // |c v_j|
  double rank_margin = 0.0;   // sigma_min / sigma_max
  double rank_tolerance = 0.0;
  bool observable = false;
  bool full_rank = false;
};

inline constexpr double kDefaultRankTolerance = 1e-10;
inline constexpr double kDefaultObservabilityTolerance = 1e-12;

/// Builds P and its rank report without throwing on hypothesis failures.
inline PMatrix compute_P(const LinearGsProblem& problem, const InverseEigenpairs& eig,
                         double rank_tol = kDefaultRankTolerance,
                         double observability_tol = kDefaultObservabilityTolerance) {
  const Eigen::Index n = problem.n(), q = problem.q();
  const ComplexMatrix a = problem.reservoir.A.cast<Complex>();
  const ComplexVector c_col = problem.reservoir.C.cast<Complex>();
  const ComplexMatrix identity = ComplexMatrix::Identity(n, n);

  PMatrix out;
  out.P.resize(n, q);
  out.observability.resize(q);
  out.rank_tolerance = rank_tol;
  const double c_scale = std::max(problem.c.norm(), 1e-300);
  out.observable = true;
  for (Eigen::Index j = 0; j < q; ++j) {
    const Complex weight = (problem.c.cast<Complex>() * eig.vectors.col(j))(0, 0);
    out.observability[j] = std::abs(weight);
    if (out.observability[j] <= observability_tol * c_scale) out.observable = false;
    const ComplexMatrix shifted = identity - eig.values[j] * a;
    out.P.col(j) = weight * shifted.fullPivLu().solve(c_col);
  }
  Eigen::JacobiSVD<ComplexMatrix> svd(out.P);
  out.singular_values = svd.singularValues();
  const double smax = out.singular_values.size() ? out.singular_values.maxCoeff() : 0.0;
  const double smin = (q <= n && out.singular_values.size()) ? out.singular_values.minCoeff() : 0.0;
  out.rank_margin = smax > 0.0 ? smin / smax : 0.0;
  out.full_rank = q <= n && out.rank_margin > rank_tol;
  return out;
}

/// compute_P that enforces the construction's hypotheses: the gate, distinct
/// eigenvalues, c v_j != 0 for every j, and linearly independent columns.
inline PMatrix build_P(const LinearGsProblem& problem, const InverseEigenpairs& eig,
                       double rank_tol = kDefaultRankTolerance,
                       double observability_tol = kDefaultObservabilityTolerance) {
  if (!eig.distinct) fail(ErrorKind::NonDistinctEigenvalues, "eigenvalues are not distinct");
  const GateReport gate = check_convergence(problem);
  if (!gate.passed) fail(ErrorKind::DivergentSeries, "convergence gate failed");
  PMatrix p = compute_P(problem, eig, rank_tol, observability_tol);
  if (!p.observable) fail(ErrorKind::ObservabilityFailure, "observation annihilates an eigenvector (c v_j = 0)");
  if (!p.full_rank)
    fail(ErrorKind::RankDeficientP, "P does not have full column rank (margin " + std::to_string(p.rank_margin) + ")");
  return p;
}

}  // namespace rcgs
