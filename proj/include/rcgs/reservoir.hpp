#pragma once

// Reservoir maps F and the driven skew product (m, x) -> (phi(m), F(x, omega(m))).

#include "rcgs/errors.hpp"
#include "rcgs/linalg.hpp"
#include "rcgs/random.hpp"
#include "rcgs/sources.hpp"

#include <algorithm>
#include <cstddef>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

namespace rcgs {

/// F(x, z) = A x + C z + b. The offset b is zero for the linear reservoirs
/// of the closed-form theory; it only becomes nonzero after conjugating by an
/// affine map with a translation.
struct LinearReservoir {
  Matrix A;
  Vector C;
  Vector b;

  LinearReservoir(Matrix a, Vector c) : LinearReservoir(std::move(a), std::move(c), Vector()) {}
  LinearReservoir(Matrix a, Vector c, Vector offset) : A(std::move(a)), C(std::move(c)), b(std::move(offset)) {
    if (b.size() == 0) b = Vector::Zero(C.size());
    if (A.rows() == 0 || A.rows() != A.cols() || C.size() != A.rows() || b.size() != A.rows())
      fail(ErrorKind::ConfigError, "reservoir needs square A with matching C (and offset)");
    if (!all_finite(A) || !all_finite(C) || !all_finite(b))
      fail(ErrorKind::ConfigError, "reservoir has non-finite entries");
  }

  Eigen::Index dimension() const { return A.rows(); }
  bool has_offset() const { return !b.isZero(0.0); }
  double spectral_radius() const { return rcgs::spectral_radius(A); }
  Vector operator()(const Vector& x, double z) const { return A * x + C * z + b; }
};

/// Echo-state reservoir x' = tanh(A x + C z + b).
struct EsnReservoir {
  Matrix A;
  Vector C;
  Vector b;

  EsnReservoir(Matrix a, Vector c, Vector bias) : A(std::move(a)), C(std::move(c)), b(std::move(bias)) {
    if (A.rows() == 0 || A.rows() != A.cols() || C.size() != A.rows() || b.size() != A.rows())
      fail(ErrorKind::ConfigError, "ESN needs square A with matching C and b");
    if (!all_finite(A) || !all_finite(C) || !all_finite(b))
      fail(ErrorKind::ConfigError, "ESN has non-finite entries");
  }

  Eigen::Index dimension() const { return A.rows(); }
  double spectral_radius() const { return rcgs::spectral_radius(A); }
  /// rho(A) < 1 is the usual echo-state heuristic; it is not a proof of contraction.
  bool contraction_heuristic() const { return spectral_radius() < 1.0; }
  Vector operator()(const Vector& x, double z) const { return (A * x + C * z + b).array().tanh().matrix(); }
};

using Reservoir = std::variant<LinearReservoir, EsnReservoir>;

inline Eigen::Index dimension(const LinearReservoir& r) { return r.dimension(); }
inline Eigen::Index dimension(const EsnReservoir& r) { return r.dimension(); }
inline Eigen::Index dimension(const Reservoir& r) {
  return std::visit([](const auto& res) { return res.dimension(); }, r);
}

inline Vector apply(const LinearReservoir& r, const Vector& x, double z) { return r(x, z); }
inline Vector apply(const EsnReservoir& r, const Vector& x, double z) { return r(x, z); }
inline Vector apply(const Reservoir& r, const Vector& x, double z) {
  return std::visit([&](const auto& res) { return res(x, z); }, r);
}

/// Rescales A so that rho(A) equals `target`.
inline Matrix rescale_to_spectral_radius(const Matrix& a, double target) {
  const double rho = spectral_radius(a);
  if (!(rho > 0.0)) fail(ErrorKind::ConfigError, "cannot rescale a matrix with zero spectral radius");
  return a * (target / rho);
}

/// Linear reservoir with A, C i.i.d. uniform on [-1, 1] and A rescaled to
/// spectral radius `rho`. Draws A first, then C, from the given stream.
inline LinearReservoir random_linear_reservoir(Eigen::Index n, double rho, Rng& rng) {
  Matrix a = rng.uniform_matrix(n, n);
  Vector c = rng.uniform_vector(n);
  return LinearReservoir(rescale_to_spectral_radius(a, rho), std::move(c));
}

inline EsnReservoir random_esn_reservoir(Eigen::Index n, double rho, Rng& rng, double input_scale = 1.0,
                                         double bias_scale = 0.0) {
  Matrix a = rng.uniform_matrix(n, n);
  Vector c = input_scale * rng.uniform_vector(n);
  Vector b = bias_scale * rng.uniform_vector(n);
  return EsnReservoir(rescale_to_spectral_radius(a, rho), std::move(c), std::move(b));
}

/// Shift-register delay reservoir: ones on the subdiagonal of A, C = e_1.
inline LinearReservoir takens_reservoir(Eigen::Index n) {
  if (n < 1) fail(ErrorKind::ConfigError, "delay reservoir needs N >= 1");
  Matrix a = Matrix::Zero(n, n);
  for (Eigen::Index i = 1; i < n; ++i) a(i, i - 1) = 1.0;
  Vector c = Vector::Zero(n);
  c[0] = 1.0;
  return LinearReservoir(std::move(a), std::move(c));
}

/// Conjugation by h(x) = H x + t: F*(x, z) = h(F(h^{-1}(x), z)), i.e.
/// A* = H A H^{-1}, C* = H C, b* = H b + t - A* t.
inline LinearReservoir conjugate_affine(const LinearReservoir& r, const Matrix& h, const Vector& t) {
  const Eigen::Index n = r.dimension();
  if (h.rows() != n || h.cols() != n || t.size() != n)
    fail(ErrorKind::ConfigError, "conjugator shape does not match reservoir");
  Eigen::PartialPivLU<Matrix> lu(h);
  const double cond = condition_number(h);
  if (!(cond < 1e14)) fail(ErrorKind::SingularConjugation, "conjugating matrix is not invertible");
  const Matrix h_inv = lu.inverse();
  Matrix a_star = h * r.A * h_inv;
  Vector b_star = h * r.b + t - a_star * t;
  return LinearReservoir(std::move(a_star), h * r.C, std::move(b_star));
}

inline LinearReservoir conjugate_affine(const LinearReservoir& r, const Matrix& h) {
  return conjugate_affine(r, h, Vector::Zero(r.dimension()));
}

/// Orbit of the driven reservoir. states[k + 1] = F(states[k], inputs[k]) and,
/// when co-recorded with a source, inputs[k] = omega(source_points[k]).
struct DrivenTrajectory {
  std::vector<Vector> states;
  std::vector<double> inputs;
  std::vector<Vector> source_points;
};

namespace detail {
template <typename R>
Vector checked_step(const R& r, const Vector& x, double z) {
  Vector next = apply(r, x, z);
  if (!all_finite(next)) fail(ErrorKind::NonFiniteState, "reservoir state overflowed");
  return next;
}
}  // namespace detail

template <typename R>
DrivenTrajectory drive(const R& reservoir, const Vector& x0, const std::vector<double>& inputs) {
  if (inputs.empty()) fail(ErrorKind::ConfigError, "drive needs at least one input");
  if (x0.size() != dimension(reservoir))
    fail(ErrorKind::ConfigError, "initial state dimension does not match reservoir");
  DrivenTrajectory out;
  out.inputs = inputs;
  out.states.reserve(inputs.size() + 1);
  out.states.push_back(x0);
  for (double z : inputs) out.states.push_back(detail::checked_step(reservoir, out.states.back(), z));
  return out;
}

/// Drives the coupled system for `steps` steps from (m0, x0).
template <typename R, typename Source>
DrivenTrajectory drive_coupled(const R& reservoir, const Source& source, const Observation& obs, const Vector& m0,
                               const Vector& x0, std::size_t steps) {
  DrivenTrajectory out;
  out.states.reserve(steps + 1);
  out.inputs.reserve(steps);
  out.source_points.reserve(steps);
  out.states.push_back(x0);
  Vector m = m0;
  for (std::size_t k = 0; k < steps; ++k) {
    const double z = obs(m);
    out.source_points.push_back(m);
    out.inputs.push_back(z);
    out.states.push_back(detail::checked_step(reservoir, out.states.back(), z));
    if (k + 1 < steps) m = step_forward(source, m);
  }
  return out;
}

/// Finite sample of a GS graph: images[i] = f(points[i]).
struct SampledGS {
  std::vector<Vector> points;
  std::vector<Vector> images;
  std::optional<std::vector<Matrix>> jacobians;
};

struct SynchronizationReport {
  std::vector<double> gaps;  // gaps[k] = |x_k^(1) - x_k^(2)|, k = 0..washout+n
  double tolerance = 0.0;
  std::vector<double> scales;  // scales[k] = |x_k^(1)|
  double state_scale = 0.0;    // max |x_k| along the first run
  double final_gap = 0.0;
  bool converged = false;
};

struct GsEstimate {
  SampledGS gs;
  SynchronizationReport report;
  DrivenTrajectory trajectory;  // first of the two runs
};

/// Runs the coupled system from two reservoir initial conditions under the
/// same drive. The state after consuming omega(m_k) is the GS sample at m_k,
/// so samples are (m_k, x_{k+1}) for k >= washout. Does not throw on failure
/// to synchronise; see estimate_gs.
template <typename R, typename Source>
GsEstimate synchronize(const R& reservoir, const Source& source, const Observation& obs, const Vector& m0,
                       std::size_t washout, std::size_t n, const Vector& x0_first, const Vector& x0_second,
                       double tolerance = 1e-9) {
  if (washout < 1) fail(ErrorKind::ConfigError, "washout must be at least 1");
  if (n < 1) fail(ErrorKind::ConfigError, "need at least one GS sample");
  if (x0_first.size() != x0_second.size()) fail(ErrorKind::ConfigError, "initial states differ in size");
  if (x0_first == x0_second) fail(ErrorKind::ConfigError, "the two initial states must be distinct");

  const std::size_t steps = washout + n;
  GsEstimate out;
  out.trajectory = drive_coupled(reservoir, source, obs, m0, x0_first, steps);
  const std::vector<double>& inputs = out.trajectory.inputs;

  auto& gaps = out.report.gaps;
  gaps.reserve(steps + 1);
  Vector other = x0_second;
  gaps.push_back((out.trajectory.states[0] - other).norm());
  for (std::size_t k = 0; k < steps; ++k) {
    other = detail::checked_step(reservoir, other, inputs[k]);
    gaps.push_back((out.trajectory.states[k + 1] - other).norm());
  }
  out.report.scales.reserve(steps + 1);
  for (const Vector& x : out.trajectory.states) {
    out.report.scales.push_back(x.norm());
    out.report.state_scale = std::max(out.report.state_scale, x.norm());
  }
  out.report.tolerance = tolerance;
  out.report.final_gap = gaps.back();
  out.report.converged = out.report.final_gap < tolerance;

  out.gs.points.reserve(n);
  out.gs.images.reserve(n);
  for (std::size_t k = washout; k < steps; ++k) {
    out.gs.points.push_back(out.trajectory.source_points[k]);
    out.gs.images.push_back(out.trajectory.states[k + 1]);
  }
  return out;
}

/// synchronize() that throws NoSynchronization when the final gap between
/// the two runs is not below `tolerance`.
template <typename R, typename Source>
GsEstimate estimate_gs(const R& reservoir, const Source& source, const Observation& obs, const Vector& m0,
                       std::size_t washout, std::size_t n, const Vector& x0_first, const Vector& x0_second,
                       double tolerance = 1e-9) {
  GsEstimate est = synchronize(reservoir, source, obs, m0, washout, n, x0_first, x0_second, tolerance);
  if (!est.report.converged)
    fail(ErrorKind::NoSynchronization,
         "trajectories did not synchronise (final gap " + std::to_string(est.report.final_gap) + ")");
  return est;
}

}  // namespace rcgs
