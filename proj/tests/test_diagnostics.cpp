#include "oracles.hpp"
#include "rcgs/diagnostics.hpp"
#include "rcgs/isometrize.hpp"
#include "rcgs/random.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace rcgs;

namespace {

constexpr double kPi = std::numbers::pi;

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an rcgs::Error";
  return ErrorKind::ConfigError;
}

std::vector<Vector> circle(std::size_t n, bool closed) {
  std::vector<Vector> pts;
  const std::size_t count = closed ? n + 1 : n;
  for (std::size_t i = 0; i < count; ++i) {
    const double t = 2.0 * kPi * static_cast<double>(i) / static_cast<double>(n);
    pts.push_back(Vector{{std::cos(t), std::sin(t)}});
  }
  return pts;
}

SampledGS apply_map(const std::vector<Vector>& pts, const std::function<Vector(const Vector&)>& f) {
  SampledGS gs;
  gs.points = pts;
  for (const Vector& p : pts) gs.images.push_back(f(p));
  return gs;
}

IsometrizationResult isometrized(std::uint64_t seed, Eigen::Index n, const Matrix& g) {
  Rng rng(seed);
  const LinearGsProblem p(random_linear_reservoir(n, 0.5, rng), LinearSource::rotation(1.0), RowVector{{1.0, 0.0}});
  return isometrize(p, MetricTensor(g), Rotation(rng.rotation(2)));
}

}  // namespace

TEST(DimensionGate, Examples) {
  EXPECT_EQ(dimension_gate(5, 2), DimensionGate::EmbeddingFeasible);
  EXPECT_EQ(dimension_gate(4, 2), DimensionGate::InsufficientDimension);
  EXPECT_EQ(dimension_gate(3, 1), DimensionGate::EmbeddingFeasible);
  EXPECT_EQ(kind_of([] { dimension_gate(0, 1); }), ErrorKind::ConfigError);
}

TEST(DimensionGate, BruteForceInequality) {
  for (long q = 1; q <= 10; ++q)
    for (long n = 1; n <= 30; ++n) {
      const bool feasible = n > 2 * q;
      EXPECT_EQ(dimension_gate(n, q) == DimensionGate::EmbeddingFeasible, feasible) << n << " " << q;
      const auto r = dimension_gate_report(n, q);
      EXPECT_EQ(r.whitney, feasible);
      EXPECT_EQ(r.nash, feasible);
    }
}

TEST(Injectivity, IdentityAndConstant) {
  Rng rng(1);
  std::vector<Vector> pts;
  for (int i = 0; i < 50; ++i) pts.push_back(rng.uniform_vector(3));
  const auto id = injectivity_check(apply_map(pts, [](const Vector& m) { return m; }), 1e-6);
  EXPECT_NEAR(id.min_ratio, 1.0, 1e-15);
  EXPECT_TRUE(id.passed);
  EXPECT_EQ(id.pairs_checked, 50u * 49u / 2u);

  const auto constant = injectivity_check(apply_map(pts, [](const Vector&) { return Vector::Zero(4); }), 1e-6);
  EXPECT_EQ(constant.min_ratio, 0.0);
  EXPECT_FALSE(constant.passed);
}

TEST(Injectivity, IsometrizedCircleAboveChordFactor) {
  const auto res = isometrized(3, 5, Matrix::Identity(2, 2));
  const auto gs = apply_map(circle(200, false), [&](const Vector& m) { return Vector(res.J_star * m); });
  const auto rep = injectivity_check(gs, 1e-6);
  EXPECT_GE(rep.min_ratio, 2.0 / kPi * (1.0 - 1e-9));
  EXPECT_NEAR(rep.min_ratio, 1.0, 1e-9);
}

TEST(Injectivity, LinearRatioMatchesSvd) {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix j = rng.uniform_matrix(5, 2);
    const auto svd = j.jacobiSvd(Eigen::ComputeThinV);
    std::vector<Vector> pts;
    for (int i = 0; i < 40; ++i) pts.push_back(rng.uniform_vector(2));
    const auto rep = injectivity_check(apply_map(pts, [&](const Vector& m) { return Vector(j * m); }), 1e-6);
    // ratio for direction d is |Sigma V^T d| / |d|
    double expected = 1e300;
    for (std::size_t a = 0; a < pts.size(); ++a)
      for (std::size_t b = a + 1; b < pts.size(); ++b) {
        const Vector d = pts[a] - pts[b];
        const Vector coords = svd.singularValues().asDiagonal() * (svd.matrixV().transpose() * d);
        expected = std::min(expected, coords.norm() / d.norm());
      }
    EXPECT_NEAR(rep.min_ratio, expected, 1e-9);
    EXPECT_GE(rep.min_ratio, svd.singularValues()(1) - 1e-9);
  }
}

TEST(Injectivity, SeparationFloorAndErrors) {
  std::vector<Vector> pts{Vector{{0.0}}, Vector{{1.0}}, Vector{{1.0 + 1e-9}}};
  const auto gs = apply_map(pts, [](const Vector& m) { return Vector{{std::round(m[0])}}; });
  const auto rep = injectivity_check(gs, 1e-6, 1e-6);
  EXPECT_EQ(rep.pairs_checked, 2u);
  EXPECT_TRUE(rep.passed);
  EXPECT_EQ(kind_of([] { injectivity_check(SampledGS{{Vector::Zero(1)}, {Vector::Zero(1)}, {}}, 1e-6); }),
            ErrorKind::InsufficientSamples);
}

TEST(PairwiseHistogram, CountsEveryCheckedPair) {
  Rng rng(5);
  std::vector<Vector> pts;
  for (int i = 0; i < 30; ++i) pts.push_back(rng.uniform_vector(2));
  const Matrix j = rng.uniform_matrix(3, 2);
  const auto gs = apply_map(pts, [&](const Vector& m) { return Vector(j * m); });
  const auto inj = injectivity_check(gs, 1e-6);
  const auto hist = pairwise_ratio_histogram(gs, 12, inj.separation_floor);
  ASSERT_EQ(hist.size(), 12u);
  std::size_t total = 0;
  for (const auto& bin : hist) total += bin.count;
  EXPECT_EQ(total, inj.pairs_checked);
  EXPECT_NEAR(hist.front().lo, std::log10(inj.min_ratio), 1e-12);
}

TEST(Immersion, Examples) {
  Rng rng(6);
  const Matrix orth = rng.rotation(4).leftCols(2);
  const auto ok = immersion_check({orth}, 1e-8);
  EXPECT_NEAR(ok.min_singular_value, 1.0, 1e-14);
  EXPECT_TRUE(ok.rank_ok);

  const LinearGsProblem memoryless(LinearReservoir(Matrix::Zero(4, 4), rng.uniform_vector(4)),
                                   LinearSource::rotation(0.5), RowVector{{1.0, 0.3}});
  const auto bad = immersion_check({gs_matrix(memoryless).J}, 1e-8);
  EXPECT_LE(bad.min_singular_value, 1e-14);
  EXPECT_FALSE(bad.rank_ok);
  EXPECT_EQ(kind_of([] { immersion_check({}, 1e-8); }), ErrorKind::InsufficientSamples);
}

TEST(Immersion, TakensOnRotationAcrossSamples) {
  const auto src = LinearSource::rotation(0.7);
  const RowVector c{{1.0, 0.5}};
  const Matrix minv = src.inverse_matrix();
  // f(m) = (c m, c M^{-1} m, c M^{-2} m), differentiated numerically per sample.
  const auto f = [&](const Vector& m) {
    return Vector{{c.dot(m.transpose()), c.dot((minv * m).transpose()), c.dot((minv * minv * m).transpose())}};
  };
  std::vector<Matrix> jacobians;
  for (const Vector& m : sample_trajectory(src, Vector{{1.0, 0.0}}, 0, 1000))
    jacobians.push_back(oracle::central_difference(f, m));
  const auto rep = immersion_check(jacobians, 1e-8);
  EXPECT_TRUE(rep.rank_ok);
  EXPECT_GT(rep.min_singular_value, 0.1);
  const LinearGsProblem p(takens_reservoir(3), src, c);
  EXPECT_LE((gs_matrix(p).J - jacobians.front()).norm(), 1e-8);
}

TEST(Immersion, IsometrizedLowerBound) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 40);
    const Matrix g = rng.spd(2, 0.2);
    const auto res = isometrized(seed, 5, g);
    ASSERT_LE(res.diagnostics.isometry_defect, 1e-10);
    const double lmin = MetricTensor(g).min_eigenvalue();
    EXPECT_GE(immersion_check({res.J_star}, 1e-8).min_singular_value, std::sqrt(lmin) - 1e-8);
  }
}

TEST(EstimateJacobians, ExactOnLinearMaps) {
  Rng rng(8);
  const Matrix j = rng.uniform_matrix(4, 2);
  std::vector<Vector> pts;
  for (int i = 0; i < 100; ++i) pts.push_back(rng.uniform_vector(2));
  const auto est = estimate_jacobians(apply_map(pts, [&](const Vector& m) { return Vector(j * m); }));
  ASSERT_EQ(est.size(), pts.size());
  for (const auto& lj : est) EXPECT_LE((lj.D - j).norm(), 1e-10);
}

TEST(EstimateJacobians, SmoothNonlinearMap) {
  Rng rng(9);
  const auto f = [](const Vector& m) { return Vector{{std::sin(m[0]), m[0] * m[1], std::cos(m[1])}}; };
  std::vector<Vector> pts;
  for (int i = 0; i < 3000; ++i) pts.push_back(rng.uniform_vector(2));
  const auto est = estimate_jacobians(apply_map(pts, f), 8);
  double worst = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    worst = std::max(worst, (est[i].D - oracle::central_difference(f, pts[i])).norm());
  EXPECT_LE(worst, 0.1);
  EXPECT_EQ(kind_of([&] { estimate_jacobians(apply_map({pts[0], pts[1]}, f)); }), ErrorKind::InsufficientSamples);
}

TEST(SyncCurve, TakensGapCollapses) {
  const auto est = synchronize(takens_reservoir(3), LinearSource::rotation(1.0), Observation::coordinate(2, 0),
                               Vector{{1.0, 0.0}}, 10, 5, Vector{{1.0, 1.0, 1.0}}, Vector::Zero(3));
  const SyncCurve curve = sync_error_curve(est.report);
  ASSERT_EQ(curve.points.size(), est.report.gaps.size());
  for (const auto& [k, gap] : curve.points)
    if (k >= 3) EXPECT_EQ(gap, 0.0);
  EXPECT_EQ(curve.rate, 0.0);
  EXPECT_FALSE(curve.diverging);
}

TEST(SyncCurve, FittedRateMatchesSpectralRadius) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const LinearReservoir r = random_linear_reservoir(6, 0.5, rng);
    const auto est = synchronize(r, LinearSource::rotation(1.0), Observation::coordinate(2, 0), Vector{{1.0, 0.0}},
                                 150, 50, rng.in_ball(6, 1.0), rng.in_ball(6, 1.0));
    const SyncCurve curve = sync_error_curve(est.report);
    EXPECT_GE(curve.rate, 0.45) << "seed " << seed;
    EXPECT_LE(curve.rate, 0.55) << "seed " << seed;
    EXPECT_FALSE(curve.diverging);
  }
}

TEST(SyncCurve, DivergingReservoirFlagged) {
  const LinearReservoir r(Matrix(Vector{{1.5, 0.2}}.asDiagonal()), Vector{{1.0, 1.0}});
  const auto est = synchronize(r, LinearSource::rotation(1.0), Observation::coordinate(2, 0), Vector{{1.0, 0.0}}, 50,
                               50, Vector{{1.0, 0.0}}, Vector{{0.0, 1.0}});
  EXPECT_FALSE(est.report.converged);
  const SyncCurve curve = sync_error_curve(est.report);
  EXPECT_GT(curve.rate, 1.0);
  EXPECT_NEAR(curve.rate, 1.5, 1e-6);
  EXPECT_TRUE(curve.diverging);
}

TEST(ArcLength, Examples) {
  const MetricTensor g = MetricTensor::euclidean(2);
  const auto pts = circle(100, true);
  EXPECT_EQ(arc_length_compare(pts, [](const Vector& m) { return m; }, g), 0.0);
  EXPECT_NEAR(arc_length_compare(pts, [](const Vector& m) { return Vector(2.0 * m); }, g), 1.0, 1e-14);
  EXPECT_EQ(kind_of([&] { arc_length_compare({pts[0], pts[1]}, [](const Vector& m) { return m; }, g); }),
            ErrorKind::InsufficientSamples);
}

TEST(ArcLength, IsometrizedCircle) {
  Rng rng(12);
  const Matrix gm = rng.spd(2, 0.5);
  const auto res = isometrized(12, 5, gm);
  GsLinearMap map;
  map.J = res.J_star;
  map.offset = Vector::Zero(5);
  EXPECT_LE(arc_length_compare(circle(10000, true), map, MetricTensor(gm)), 1e-6);
}

TEST(AngleCompare, Examples) {
  const MetricTensor g = MetricTensor::euclidean(2);
  Rng rng(13);
  const Matrix orth = rng.rotation(3).leftCols(2);
  EXPECT_LE(angle_compare(Vector{{1.0, 0.0}}, Vector{{0.0, 1.0}}, orth, g), 1e-15);

  const Matrix j = Matrix(Vector{{1.0, 3.0}}.asDiagonal());
  const Vector u{{1.0, 1.0}}, y{{1.0, -1.0}};
  // angle((1,3), (1,-3)) = acos(-8/10) against a right angle.
  const double expected = std::acos(-0.8) - kPi / 2.0;
  EXPECT_GT(expected, 0.9);
  EXPECT_NEAR(angle_compare(u, y, j, g), expected, 1e-14);
  EXPECT_NEAR(angle_compare(u, y, j, g),
              std::abs(oracle::angle(u, y, Matrix::Identity(2, 2)) -
                       oracle::angle(j * u, j * y, Matrix::Identity(2, 2))),
              1e-14);

  EXPECT_EQ(kind_of([&] { angle_compare(Vector::Zero(2), y, j, g); }), ErrorKind::DegenerateTangent);
  const Matrix kill{{1.0, 0.0}, {0.0, 0.0}};
  EXPECT_EQ(kind_of([&] { angle_compare(Vector{{0.0, 1.0}}, y, kill, g); }), ErrorKind::DegenerateTangent);
}

TEST(AngleCompare, IsometrizedPairs) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed + 60);
    const Matrix gm = rng.spd(2, 0.3);
    const auto res = isometrized(seed, 5, gm);
    const MetricTensor g(gm);
    for (int i = 0; i < 100; ++i) {
      const Vector u = rng.uniform_vector(2), y = rng.uniform_vector(2);
      EXPECT_LE(angle_compare(u, y, res.J_star, g), 1e-8);
      EXPECT_NEAR(oracle::angle(u, y, gm), oracle::angle(res.J_star * u, res.J_star * y, Matrix::Identity(5, 5)),
                  1e-8);
    }
  }
}

TEST(EmbeddingReport, IsometrizedLinearGs) {
  Rng rng(70);
  const Matrix gm = rng.spd(2, 0.5);
  const auto res = isometrized(70, 5, gm);
  SampledGS gs = apply_map(circle(300, false), [&](const Vector& m) { return Vector(res.J_star * m); });
  gs.jacobians = std::vector<Matrix>(gs.points.size(), res.J_star);
  EmbeddingOptions opt;
  opt.metric = gm;
  const EmbeddingReport rep = embedding_report(gs, opt);
  EXPECT_TRUE(rep.injective);
  EXPECT_TRUE(rep.rank_ok);
  EXPECT_EQ(rep.dimension_gate, DimensionGate::EmbeddingFeasible);
  ASSERT_TRUE(rep.isometry_defect_max.has_value());
  EXPECT_LE(*rep.isometry_defect_max, 1e-10);
  EXPECT_FALSE(rep.jacobians_estimated);
  // rank_ok iff sigma_min above the configured tolerance
  opt.rank_tolerance = rep.min_singular_value * 2.0;
  EXPECT_FALSE(embedding_report(gs, opt).rank_ok);
}
