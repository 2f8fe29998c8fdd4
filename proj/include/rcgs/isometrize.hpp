#pragma once

// Isometric conjugation of a linear reservoir.
//
// Given the closed-form GS f(m) = J m and a metric G = L L^T on the source
// space, the columns w_i of W = L^{-T} are G-orthonormal and J W = P Q, where
// P has columns (c v_j)(I - lambda_j A)^{-1} C and Q = V^{-1} W changes from
// the eigenbasis to W. Conjugating the reservoir by H = (P Q R)^{-1} (or by
// (S Rbar)^{-1} with a completion S when N > q) gives a reservoir whose GS
// H J satisfies (H J)^T (H J) = G, while keeping the spectrum of A.

#include "rcgs/errors.hpp"
#include "rcgs/linalg.hpp"
#include "rcgs/linear_gs.hpp"
#include "rcgs/reservoir.hpp"
#include "rcgs/sources.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace rcgs {

/// Constant symmetric positive definite metric on R^q.
class MetricTensor {
 public:
  static constexpr double kSymmetryTolerance = 1e-12;

  explicit MetricTensor(Matrix g) : g_(std::move(g)) {
    if (g_.rows() == 0 || g_.rows() != g_.cols()) fail(ErrorKind::ConfigError, "metric must be square");
    if (!all_finite(g_)) fail(ErrorKind::ConfigError, "metric has non-finite entries");
    if ((g_ - g_.transpose()).norm() > kSymmetryTolerance * std::max(1.0, g_.norm()))
      fail(ErrorKind::NotPositiveDefinite, "metric is not symmetric");
    llt_.compute(g_);
    if (llt_.info() != Eigen::Success) fail(ErrorKind::NotPositiveDefinite, "metric is not positive definite");
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(g_, Eigen::EigenvaluesOnly);
    min_eigenvalue_ = eig.eigenvalues().minCoeff();
    if (!(min_eigenvalue_ > 0.0)) fail(ErrorKind::NotPositiveDefinite, "metric is not positive definite");
  }

  static MetricTensor euclidean(Eigen::Index q) { return MetricTensor(Matrix::Identity(q, q)); }

  const Matrix& matrix() const { return g_; }
  Eigen::Index dimension() const { return g_.rows(); }
  double min_eigenvalue() const { return min_eigenvalue_; }
  Matrix cholesky_factor() const { return llt_.matrixL(); }
  double inner(const Vector& u, const Vector& v) const { return u.dot(g_ * v); }

 private:
  Matrix g_;
  Eigen::LLT<Matrix> llt_;
  double min_eigenvalue_ = 0.0;
};

/// Proper rotation: R^T R = I and det R = +1, both within 1e-10.
class Rotation {
 public:
  static constexpr double kTolerance = 1e-10;

  explicit Rotation(Matrix r) : r_(std::move(r)) {
    if (r_.rows() != r_.cols()) fail(ErrorKind::NotRotation, "rotation must be square");
    if (r_.rows() == 0) return;
    const Eigen::Index n = r_.rows();
    if (!all_finite(r_) || (r_.transpose() * r_ - Matrix::Identity(n, n)).norm() > kTolerance)
      fail(ErrorKind::NotRotation, "matrix is not orthogonal");
    if (std::abs(r_.determinant() - 1.0) > kTolerance) fail(ErrorKind::NotRotation, "determinant is not +1");
  }

  static Rotation identity(Eigen::Index n) { return Rotation(Matrix::Identity(n, n)); }

  const Matrix& matrix() const { return r_; }
  Eigen::Index dimension() const { return r_.rows(); }

 private:
  Matrix r_;
};

/// W = L^{-T} from G = L L^T; W^T G W = I.
inline Matrix orthonormal_basis(const MetricTensor& g) {
  const Matrix l = g.cholesky_factor();
  const Eigen::Index q = g.dimension();
  return l.transpose().triangularView<Eigen::Upper>().solve(Matrix::Identity(q, q));
}

/// Q = V^{-1} W, so that w_i = sum_j v_j Q_{ji}.
inline ComplexMatrix compute_Q(const ComplexMatrix& eigenvectors, const Matrix& w) {
  if (eigenvectors.rows() != eigenvectors.cols() || eigenvectors.rows() != w.rows())
    fail(ErrorKind::ConfigError, "eigenbasis and orthonormal basis shapes differ");
  Eigen::JacobiSVD<ComplexMatrix> svd(eigenvectors);
  const Vector s = svd.singularValues();
  if (s.size() == 0 || !(s.minCoeff() > 1e-12 * s.maxCoeff()))
    fail(ErrorKind::SingularEigenbasis, "eigenvector matrix is singular");
  return eigenvectors.fullPivLu().solve(w.cast<Complex>());
}

/// P Q computed as J W. Real even when the eigenpairs are complex.
inline Matrix product_PQ(const GsLinearMap& j, const Matrix& w) { return j.J * w; }

/// Invertible S whose first q columns are PQ and whose remaining columns are
/// an orthonormal basis of range(PQ)^perp, built by Gram-Schmidt over the
/// standard basis with largest-residual pivoting.
struct Completion {
  Matrix S;
  std::vector<Eigen::Index> pivots;  // standard basis indices used, in order
};

inline Completion orthonormal_completion(const Matrix& pq) {
  const Eigen::Index n = pq.rows(), q = pq.cols();
  Completion out;
  out.S = Matrix::Zero(n, n);
  out.S.leftCols(q) = pq;
  if (q >= n) return out;

  Eigen::HouseholderQR<Matrix> qr(pq);
  Matrix basis = Matrix(qr.householderQ()).leftCols(q);  // orthonormal basis of range(PQ)
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  for (Eigen::Index col = q; col < n; ++col) {
    Eigen::Index best = -1;
    double best_norm = -1.0;
    Vector best_residual;
    for (Eigen::Index e = 0; e < n; ++e) {
      if (used[static_cast<std::size_t>(e)]) continue;
      Vector r = Vector::Unit(n, e);
      // Two passes of classical Gram-Schmidt for stability.
      for (int pass = 0; pass < 2; ++pass) r -= basis * (basis.transpose() * r);
      const double norm = r.norm();
      if (norm > best_norm) {
        best_norm = norm;
        best = e;
        best_residual = std::move(r);
      }
    }
    used[static_cast<std::size_t>(best)] = true;
    out.pivots.push_back(best);
    const Vector unit = best_residual / best_norm;
    out.S.col(col) = unit;
    basis.conservativeResize(Eigen::NoChange, basis.cols() + 1);
    basis.col(basis.cols() - 1) = unit;
  }
  return out;
}

/// |J*^T J* - G|_F.
inline double verify_isometry(const Matrix& j_star, const Matrix& g) {
  if (j_star.cols() != g.rows() || g.rows() != g.cols()) fail(ErrorKind::ConfigError, "shape mismatch");
  return (j_star.transpose() * j_star - g).norm();
}
inline double verify_isometry(const Matrix& j_star, const MetricTensor& g) { return verify_isometry(j_star, g.matrix()); }

struct IsometrizationDiagnostics {
  double isometry_defect = 0.0;   // |(HJ)^T (HJ) - G|_F
  double eigenvalue_drift = 0.0;  // matched distance between spec(A) and spec(A*)
  double rank_margin = 0.0;       // sigma_min(P) / sigma_max(P)
  double pq_consistency = 0.0;    // |J W - P Q|_F
  double stein_residual = 0.0;
  double basis_identity = 0.0;    // |J* W - [R^{-1}; 0]|_F
  double conjugator_condition = 0.0;
};

struct IsometrizationResult {
  Matrix H;
  Matrix A_star;
  Vector C_star;
  ComplexMatrix P;
  ComplexMatrix Q;
  Matrix PQ;
  std::optional<Matrix> S;
  std::vector<Eigen::Index> completion_pivots;
  Matrix R;
  std::optional<Matrix> R_perp;
  Matrix W;
  Matrix J;
  Matrix J_star;
  InverseEigenpairs eigenpairs;
  GateReport gate;
  IsometrizationDiagnostics diagnostics;

  LinearReservoir reservoir() const { return LinearReservoir(A_star, C_star); }
};

struct IsometrizeOptions {
  double eigen_tolerance = 1e-8;
  double rank_tolerance = kDefaultRankTolerance;
  double observability_tolerance = kDefaultObservabilityTolerance;
};

namespace detail {

struct PipelineStart {
  GateReport gate;
  InverseEigenpairs eig;
  PMatrix p;
  GsLinearMap j;
  Matrix w;
  ComplexMatrix q;
  Matrix pq;
};

inline PipelineStart pipeline_start(const LinearGsProblem& problem, const MetricTensor& g,
                                    const IsometrizeOptions& opt) {
  if (g.dimension() != problem.q()) fail(ErrorKind::ConfigError, "metric dimension does not match source");
  if (problem.reservoir.has_offset()) fail(ErrorKind::ConfigError, "isometrization needs a reservoir without offset");
  PipelineStart s;
  s.gate = check_convergence(problem);
  if (!s.gate.passed)
    fail(ErrorKind::DivergentSeries, "rho(A) * rho(M^-1) = " + std::to_string(s.gate.product) + " is not below 1");
  s.eig = eigenpairs_inverse(problem.source, opt.eigen_tolerance);
  s.p = build_P(problem, s.eig, opt.rank_tolerance, opt.observability_tolerance);
  s.j = gs_matrix(problem);
  s.w = orthonormal_basis(g);
  s.q = compute_Q(s.eig.vectors, s.w);
  s.pq = product_PQ(s.j, s.w);
  return s;
}

inline IsometrizationResult finish(const LinearGsProblem& problem, const MetricTensor& g, PipelineStart&& s,
                                   const Matrix& frame, const Matrix& r_full) {
  IsometrizationResult out;
  const double cond = condition_number(frame);
  if (!(cond < 1e14)) fail(ErrorKind::SingularConjugation, "conjugating frame is singular");
  out.H = frame.partialPivLu().inverse();
  const LinearReservoir conjugated = conjugate_affine(problem.reservoir, out.H);
  out.A_star = conjugated.A;
  out.C_star = conjugated.C;
  out.P = std::move(s.p.P);
  out.Q = std::move(s.q);
  out.PQ = std::move(s.pq);
  out.W = std::move(s.w);
  out.J = s.j.J;
  out.J_star = out.H * out.J;
  out.eigenpairs = std::move(s.eig);
  out.gate = s.gate;

  const Eigen::Index n = problem.n(), q = problem.q();
  Matrix expected = Matrix::Zero(n, q);
  expected.topRows(q) = r_full.topLeftCorner(q, q).transpose();

  auto& d = out.diagnostics;
  d.isometry_defect = verify_isometry(out.J_star, g);
  d.eigenvalue_drift = eigenvalue_drift(problem.reservoir.A, out.A_star);
  d.rank_margin = s.p.rank_margin;
  d.pq_consistency = (out.PQ.cast<Complex>() - out.P * out.Q).norm();
  d.stein_residual = s.j.residual;
  d.basis_identity = (out.J_star * out.W - expected).norm();
  d.conjugator_condition = cond;
  return out;
}

}  // namespace detail

/// N = q: H = (P Q R)^{-1}.
inline IsometrizationResult isometrize_square(const LinearGsProblem& problem, const MetricTensor& g,
                                              const Rotation& r, const IsometrizeOptions& opt = {}) {
  if (problem.n() != problem.q()) fail(ErrorKind::ConfigError, "square isometrization needs N = q");
  if (r.dimension() != problem.q()) fail(ErrorKind::NotRotation, "rotation must be q x q");
  detail::PipelineStart s = detail::pipeline_start(problem, g, opt);
  const Matrix frame = s.pq * r.matrix();
  IsometrizationResult out = detail::finish(problem, g, std::move(s), frame, r.matrix());
  out.R = r.matrix();
  return out;
}

/// N > q: H = (S Rbar)^{-1} with S = [P Q | orthonormal completion] and
/// Rbar = blockdiag(R, R_perp).
inline IsometrizationResult isometrize_rect(const LinearGsProblem& problem, const MetricTensor& g, const Rotation& r,
                                            const Rotation& r_perp, const IsometrizeOptions& opt = {}) {
  const Eigen::Index n = problem.n(), q = problem.q();
  if (n < q)
    fail(ErrorKind::RankDeficientP, "reservoir dimension N = " + std::to_string(n) + " is below q");
  if (n == q) fail(ErrorKind::ConfigError, "rectangular isometrization needs N > q");
  if (r.dimension() != q) fail(ErrorKind::NotRotation, "rotation must be q x q");
  if (r_perp.dimension() != n - q) fail(ErrorKind::NotRotation, "complementary rotation must be (N-q) x (N-q)");
  detail::PipelineStart s = detail::pipeline_start(problem, g, opt);
  Completion completion = orthonormal_completion(s.pq);
  const Matrix r_bar = block_diagonal(r.matrix(), r_perp.matrix());
  const Matrix frame = completion.S * r_bar;
  IsometrizationResult out = detail::finish(problem, g, std::move(s), frame, r_bar);
  out.S = std::move(completion.S);
  out.completion_pivots = std::move(completion.pivots);
  out.R = r.matrix();
  out.R_perp = r_perp.matrix();
  return out;
}

/// Dispatches on N = q versus N > q. R_perp defaults to the identity.
inline IsometrizationResult isometrize(const LinearGsProblem& problem, const MetricTensor& g, const Rotation& r,
                                       const std::optional<Rotation>& r_perp = std::nullopt,
                                       const IsometrizeOptions& opt = {}) {
  const Eigen::Index n = problem.n(), q = problem.q();
  if (n == q) return isometrize_square(problem, g, r, opt);
  return isometrize_rect(problem, g, r, r_perp ? *r_perp : Rotation::identity(std::max<Eigen::Index>(n - q, 0)), opt);
}

}  // namespace rcgs
