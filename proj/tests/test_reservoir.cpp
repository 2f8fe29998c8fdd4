#include "oracles.hpp"
#include "rcgs/linear_gs.hpp"
#include "rcgs/random.hpp"
#include "rcgs/reservoir.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace rcgs;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an rcgs::Error";
  return ErrorKind::ConfigError;
}

}  // namespace

TEST(Drive, TakensShiftRegister) {
  const auto tr = drive(takens_reservoir(3), Vector::Zero(3), {0.5, -1.25, 2.0});
  ASSERT_EQ(tr.states.size(), 4u);
  EXPECT_EQ(tr.states.back(), (Vector{{2.0, -1.25, 0.5}}));
}

TEST(Drive, MemorylessReservoir) {
  const Vector c{{1.0, -2.0, 0.5}};
  const LinearReservoir r(Matrix::Zero(3, 3), c);
  const auto tr = drive(r, Vector{{9.0, 9.0, 9.0}}, {3.0});
  EXPECT_EQ(tr.states.back(), Vector(3.0 * c));
}

TEST(Drive, GeometricPartialSums) {
  const LinearReservoir r(Matrix::Constant(1, 1, 1.0 / 3.0), Vector::Ones(1));
  const auto tr = drive(r, Vector::Zero(1), std::vector<double>(3, 1.0));
  // x_k = sum_{j<k} 3^{-j}
  double partial = 0.0;
  for (int k = 0; k <= 3; ++k) {
    EXPECT_NEAR(tr.states[static_cast<std::size_t>(k)][0], partial, 1e-15);
    partial += std::pow(1.0 / 3.0, k);
  }
  EXPECT_NEAR(tr.states[3][0], 13.0 / 9.0, 1e-15);
}

TEST(Drive, Errors) {
  EXPECT_EQ(kind_of([] { drive(takens_reservoir(2), Vector::Zero(2), {}); }), ErrorKind::ConfigError);
  const LinearReservoir big(Matrix::Constant(1, 1, 1e200), Vector::Ones(1));
  EXPECT_EQ(kind_of([&] { drive(big, Vector::Ones(1), {1e200, 1.0, 1.0}); }), ErrorKind::NonFiniteState);
}

TEST(TakensReservoir, Shapes) {
  const auto r2 = takens_reservoir(2);
  EXPECT_EQ(r2.A, (Matrix{{0.0, 0.0}, {1.0, 0.0}}));
  EXPECT_EQ(r2.C, (Vector{{1.0, 0.0}}));
  const auto r1 = takens_reservoir(1);
  EXPECT_EQ(r1.A, Matrix::Zero(1, 1));
  EXPECT_EQ(r1.C, Vector::Ones(1));
  EXPECT_EQ(kind_of([] { takens_reservoir(0); }), ErrorKind::ConfigError);
}

TEST(TakensReservoir, ReproducesDelayVector) {
  const auto source = LinearSource::rotation(0.9);
  const Observation obs = Observation::linear(RowVector{{1.0, 0.4}});
  const Vector m{{0.3, -0.8}};
  const auto orbit = sample_trajectory(source, m, 0, 4);
  std::vector<double> inputs;
  for (const Vector& p : orbit) inputs.push_back(obs(p));
  const auto tr = drive(takens_reservoir(4), Vector::Zero(4), inputs);
  // (omega phi^3 m, omega phi^2 m, omega phi m, omega m)
  const Vector expected{{obs(orbit[3]), obs(orbit[2]), obs(orbit[1]), obs(orbit[0])}};
  EXPECT_EQ(tr.states.back(), expected);
}

TEST(TakensReservoir, ShiftRegisterExactnessProperty) {
  Rng rng(41);
  for (Eigen::Index n = 1; n <= 8; ++n) {
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<double> inputs(static_cast<std::size_t>(n + 5 + trial));
      for (double& z : inputs) z = rng.uniform(-1e3, 1e3);
      const auto tr = drive(takens_reservoir(n), rng.uniform_vector(n), inputs);
      for (std::size_t k = static_cast<std::size_t>(n); k <= inputs.size(); ++k) {
        for (Eigen::Index i = 0; i < n; ++i) EXPECT_EQ(tr.states[k][i], inputs[k - 1 - static_cast<std::size_t>(i)]);
      }
    }
  }
}

TEST(EstimateGs, TakensGapVanishesAfterN) {
  const auto est = estimate_gs(takens_reservoir(3), LinearSource::rotation(1.0), Observation::coordinate(2, 0),
                               Vector{{1.0, 0.0}}, 5, 20, Vector{{1.0, 2.0, 3.0}}, Vector{{-1.0, 0.5, 0.0}});
  for (std::size_t k = 3; k < est.report.gaps.size(); ++k) EXPECT_EQ(est.report.gaps[k], 0.0);
  EXPECT_GT(est.report.gaps[2], 0.0);
  EXPECT_TRUE(est.report.converged);
  EXPECT_EQ(est.gs.points.size(), 20u);
}

TEST(EstimateGs, LinearGapDecaysAtSpectralRadius) {
  Rng rng(5);
  const LinearReservoir r = random_linear_reservoir(5, 0.5, rng);
  const Vector x0a = rng.in_ball(5, 1.0), x0b = rng.in_ball(5, 1.0);
  const auto est = synchronize(r, LinearSource::rotation(1.0), Observation::coordinate(2, 0), Vector{{1.0, 0.0}}, 60,
                               1, x0a, x0b);
  // delta_k = A^k delta_0 exactly in exact arithmetic.
  Matrix power = Matrix::Identity(5, 5);
  const double gap0 = (x0a - x0b).norm();
  for (std::size_t k = 0; k < 40; ++k) {
    const double bound = power.jacobiSvd().singularValues()(0) * gap0;
    EXPECT_LE(est.report.gaps[k], bound * (1 + 1e-9) + 1e-14) << "k = " << k;
    power = power * r.A;
  }
  const double ratio = std::pow(est.report.gaps[40] / est.report.gaps[20], 1.0 / 20.0);
  EXPECT_LE(ratio, 0.55);
}

TEST(EstimateGs, EsnOnHenonSynchronises) {
  Rng rng = Rng::substream(2024, "reservoir");
  const EsnReservoir esn = random_esn_reservoir(50, 0.9, rng);
  EXPECT_NEAR(esn.spectral_radius(), 0.9, 1e-10);
  EXPECT_TRUE(esn.contraction_heuristic());
  const auto henon = NonlinearSource::henon();
  const Vector m0 = sample_trajectory(henon, Vector::Zero(2), 1000, 1)[0];
  Rng x0(7);
  const auto est = estimate_gs(esn, henon, Observation::coordinate(2, 0), m0, 1000, 10, x0.in_ball(50, 1.0),
                               x0.in_ball(50, 1.0), 1e-6);
  EXPECT_LT(est.report.gaps[1000], 1e-6);
}

TEST(EstimateGs, Errors) {
  const LinearReservoir unstable(Matrix::Constant(1, 1, 1.5), Vector::Ones(1));
  const auto src = LinearSource::scalar(0.5);
  const auto obs = Observation::coordinate(1, 0);
  EXPECT_EQ(kind_of([&] { estimate_gs(unstable, src, obs, Vector::Ones(1), 50, 5, Vector::Ones(1), Vector::Zero(1)); }),
            ErrorKind::NoSynchronization);
  EXPECT_EQ(kind_of([&] { estimate_gs(unstable, src, obs, Vector::Ones(1), 0, 5, Vector::Ones(1), Vector::Zero(1)); }),
            ErrorKind::ConfigError);
  EXPECT_EQ(kind_of([&] { estimate_gs(unstable, src, obs, Vector::Ones(1), 5, 5, Vector::Ones(1), Vector::Ones(1)); }),
            ErrorKind::ConfigError);
  const LinearReservoir huge(Matrix::Constant(1, 1, 1e100), Vector::Ones(1));
  EXPECT_EQ(kind_of([&] { estimate_gs(huge, src, obs, Vector::Ones(1), 50, 5, Vector::Ones(1), Vector::Zero(1)); }),
            ErrorKind::NonFiniteState);
}

TEST(EstimateGs, MatchesClosedFormGs) {
  Rng rng(12);
  const LinearReservoir r = random_linear_reservoir(5, 0.5, rng);
  const auto src = LinearSource::rotation(1.0);
  const auto obs = Observation::linear(RowVector{{1.0, 0.0}});
  const GsLinearMap map = gs_matrix(LinearGsProblem(r, src, obs));
  const auto est = estimate_gs(r, src, obs, Vector{{1.0, 0.0}}, 200, 50, rng.in_ball(5, 1.0), rng.in_ball(5, 1.0));
  for (std::size_t i = 0; i < est.gs.points.size(); ++i)
    EXPECT_LE((est.gs.images[i] - map(est.gs.points[i])).norm(), 1e-8);
}

TEST(ConjugateAffine, Identity) {
  Rng rng(1);
  const LinearReservoir r = random_linear_reservoir(4, 0.7, rng);
  const LinearReservoir same = conjugate_affine(r, Matrix::Identity(4, 4));
  EXPECT_LE((same.A - r.A).norm(), 0.0);
  EXPECT_LE((same.C - r.C).norm(), 0.0);
}

TEST(ConjugateAffine, PermutationSwap) {
  const LinearReservoir r(Matrix(Vector{{0.5, 0.2}}.asDiagonal()), Vector{{1.0, -3.0}});
  const Matrix swap{{0.0, 1.0}, {1.0, 0.0}};
  const LinearReservoir s = conjugate_affine(r, swap);
  EXPECT_EQ(s.A, Matrix(Vector{{0.2, 0.5}}.asDiagonal()));
  EXPECT_EQ(s.C, (Vector{{-3.0, 1.0}}));
}

TEST(ConjugateAffine, PreservesSpectrum) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const LinearReservoir r = random_linear_reservoir(6, 0.8, rng);
    Matrix h = rng.uniform_matrix(6, 6) + 3.0 * Matrix::Identity(6, 6);
    ASSERT_LT(condition_number(h), 1e6);
    const LinearReservoir s = conjugate_affine(r, h);
    EXPECT_LE(oracle::sorted_spectrum_gap(r.A, s.A), 1e-10) << "seed " << seed;
    EXPECT_LE(eigenvalue_drift(r.A, s.A), 1e-10);
  }
}

TEST(ConjugateAffine, GroupAction) {
  Rng rng(77);
  const LinearReservoir r = random_linear_reservoir(4, 0.6, rng);
  const Matrix h1 = rng.uniform_matrix(4, 4) + 2.0 * Matrix::Identity(4, 4);
  const Matrix h2 = rng.uniform_matrix(4, 4) + 2.0 * Matrix::Identity(4, 4);
  const LinearReservoir twice = conjugate_affine(conjugate_affine(r, h1), h2);
  const LinearReservoir once = conjugate_affine(r, h2 * h1);
  EXPECT_LE((twice.A - once.A).norm(), 1e-12);
  EXPECT_LE((twice.C - once.C).norm(), 1e-12);
}

TEST(ConjugateAffine, TranslationConjugatesTheMap) {
  Rng rng(8);
  const LinearReservoir r = random_linear_reservoir(3, 0.6, rng);
  const Matrix h = rng.uniform_matrix(3, 3) + 2.0 * Matrix::Identity(3, 3);
  const Vector t = rng.uniform_vector(3);
  const LinearReservoir s = conjugate_affine(r, h, t);
  for (int i = 0; i < 10; ++i) {
    const Vector x = rng.uniform_vector(3);
    const double z = rng.uniform(-1.0, 1.0);
    const Vector pre = h.partialPivLu().solve(x - t);
    const Vector expected = h * r(pre, z) + t;
    EXPECT_LE((s(x, z) - expected).norm(), 1e-12);
  }
  // The conjugated GS is h o f.
  const auto src = LinearSource::rotation(0.5);
  const auto obs = Observation::coordinate(2, 0);
  const GsLinearMap f = gs_matrix(LinearGsProblem(r, src, obs));
  const GsLinearMap g = gs_matrix(LinearGsProblem(s, src, obs));
  const Vector m{{0.2, -0.9}};
  EXPECT_LE((g(m) - (h * f(m) + t)).norm(), 1e-10);
}

TEST(ConjugateAffine, SingularConjugator) {
  const LinearReservoir r = takens_reservoir(2);
  EXPECT_EQ(kind_of([&] { conjugate_affine(r, Matrix::Zero(2, 2)); }), ErrorKind::SingularConjugation);
}

TEST(SpectralRadius, Examples) {
  EXPECT_NEAR(spectral_radius(Matrix(Vector{{0.5, -0.7}}.asDiagonal())), 0.7, 1e-15);
  EXPECT_EQ(spectral_radius(takens_reservoir(5).A), 0.0);
  Rng rng(4);
  const Matrix scaled = rescale_to_spectral_radius(rng.uniform_matrix(7, 7), 0.9);
  EXPECT_NEAR(spectral_radius(scaled), 0.9, 1e-12);
}
