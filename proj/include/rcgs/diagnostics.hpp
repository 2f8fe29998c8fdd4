#pragma once

// Numerical surrogates for the embedding and isometry properties of a GS.

#include "rcgs/errors.hpp"
#include "rcgs/isometrize.hpp"
#include "rcgs/linalg.hpp"
#include "rcgs/reservoir.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

namespace rcgs {

enum class DimensionGate { InsufficientDimension, EmbeddingFeasible };

inline constexpr std::string_view to_string(DimensionGate g) {
  return g == DimensionGate::EmbeddingFeasible ? "EmbeddingFeasible" : "InsufficientDimension";
}

/// Whitney's strict bound N > 2q and Nash's N >= 2q + 1 coincide on integers.
inline DimensionGate dimension_gate(long n, long q) {
  if (n < 1 || q < 1) fail(ErrorKind::ConfigError, "dimensions must be positive");
  return n >= 2 * q + 1 ? DimensionGate::EmbeddingFeasible : DimensionGate::InsufficientDimension;
}

struct DimensionGateReport {
  DimensionGate gate;
  bool whitney;  // N > 2q
  bool nash;     // N >= 2q + 1
};

inline DimensionGateReport dimension_gate_report(long n, long q) {
  return {dimension_gate(n, q), n > 2 * q, n >= 2 * q + 1};
}

struct InjectivityReport {
  double min_ratio = std::numeric_limits<double>::infinity();
  std::pair<std::size_t, std::size_t> worst_pair{0, 0};
  double separation_floor = 0.0;
  std::size_t pairs_checked = 0;
  bool passed = false;
};

/// min |f(m_i) - f(m_j)| / |m_i - m_j| over sample pairs with
/// |m_i - m_j| >= floor_fraction * diam(samples).
inline InjectivityReport injectivity_check(const SampledGS& gs, double ratio_tol, double floor_fraction = 1e-6) {
  const std::size_t n = gs.points.size();
  if (n < 2 || gs.images.size() != n) fail(ErrorKind::InsufficientSamples, "injectivity check needs >= 2 samples");
  double diam = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) diam = std::max(diam, (gs.points[i] - gs.points[j]).squaredNorm());
  diam = std::sqrt(diam);

  InjectivityReport out;
  out.separation_floor = floor_fraction * diam;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dm = (gs.points[i] - gs.points[j]).norm();
      if (dm < out.separation_floor || dm == 0.0) continue;
      ++out.pairs_checked;
      const double ratio = (gs.images[i] - gs.images[j]).norm() / dm;
      if (ratio < out.min_ratio) {
        out.min_ratio = ratio;
        out.worst_pair = {i, j};
      }
    }
  }
  if (out.pairs_checked == 0) fail(ErrorKind::InsufficientSamples, "no sample pairs above the separation floor");
  out.passed = out.min_ratio > ratio_tol;
  return out;
}

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};

/// Histogram of log10 pairwise ratios |f(m_i) - f(m_j)| / |m_i - m_j| over
/// pairs above the separation floor. Bins span the observed range.
inline std::vector<HistogramBin> pairwise_ratio_histogram(const SampledGS& gs, std::size_t bins,
                                                          double separation_floor) {
  if (bins == 0) fail(ErrorKind::ConfigError, "histogram needs at least one bin");
  std::vector<double> logs;
  const std::size_t n = gs.points.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dm = (gs.points[i] - gs.points[j]).norm();
      if (dm < separation_floor || dm == 0.0) continue;
      const double ratio = (gs.images[i] - gs.images[j]).norm() / dm;
      logs.push_back(ratio > 0.0 ? std::log10(ratio) : -300.0);
    }
  std::vector<HistogramBin> out;
  if (logs.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(logs.begin(), logs.end());
  const double lo = *lo_it, width = std::max(*hi_it - lo, 1e-12) / static_cast<double>(bins);
  out.resize(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].lo = lo + width * static_cast<double>(b);
    out[b].hi = lo + width * static_cast<double>(b + 1);
  }
  for (double x : logs) {
    auto b = static_cast<std::size_t>((x - lo) / width);
    out[std::min(b, bins - 1)].count++;
  }
  return out;
}

struct LocalJacobian {
  Matrix D;                // N x q
  double condition = 1.0;  // of the weighted normal matrix
};

/// Local weighted least-squares Jacobians of a sampled GS. For each sample
/// the k nearest neighbours (in source space) enter with Gaussian weights
/// whose bandwidth is the distance to the k-th neighbour.
inline std::vector<LocalJacobian> estimate_jacobians(const SampledGS& gs, std::size_t k = 0) {
  const std::size_t n = gs.points.size();
  if (n == 0) fail(ErrorKind::InsufficientSamples, "no samples");
  const Eigen::Index q = gs.points.front().size();
  const Eigen::Index dim = gs.images.front().size();
  if (k == 0) k = static_cast<std::size_t>(2 * q + 2);
  if (n <= k) fail(ErrorKind::InsufficientSamples, "fewer samples than neighbours requested");

  std::vector<LocalJacobian> out;
  out.reserve(n);
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) dist[j] = {(gs.points[j] - gs.points[i]).norm(), j};
    dist[i].first = std::numeric_limits<double>::infinity();
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    const double bandwidth = std::max(dist[k - 1].first, std::numeric_limits<double>::min());

    Matrix dm(static_cast<Eigen::Index>(k), q), df(static_cast<Eigen::Index>(k), dim);
    Vector w(static_cast<Eigen::Index>(k));
    for (std::size_t t = 0; t < k; ++t) {
      const std::size_t j = dist[t].second;
      const double s = dist[t].first / bandwidth;
      w[static_cast<Eigen::Index>(t)] = std::exp(-s * s);
      dm.row(static_cast<Eigen::Index>(t)) = (gs.points[j] - gs.points[i]).transpose();
      df.row(static_cast<Eigen::Index>(t)) = (gs.images[j] - gs.images[i]).transpose();
    }
    const Matrix normal = dm.transpose() * w.asDiagonal() * dm;
    const Matrix cross = dm.transpose() * w.asDiagonal() * df;  // q x dim
    LocalJacobian lj;
    lj.condition = condition_number(normal);
    lj.D = normal.completeOrthogonalDecomposition().solve(cross).transpose();
    out.push_back(std::move(lj));
  }
  return out;
}

struct ImmersionReport {
  double min_singular_value = std::numeric_limits<double>::infinity();
  std::size_t worst_index = 0;
  bool rank_ok = false;
};

/// min over samples of sigma_q(D_m f); rank_ok iff it is above tol.
inline ImmersionReport immersion_check(const std::vector<Matrix>& jacobians, double tol) {
  if (jacobians.empty()) fail(ErrorKind::InsufficientSamples, "immersion check needs at least one Jacobian");
  ImmersionReport out;
  for (std::size_t i = 0; i < jacobians.size(); ++i) {
    const Matrix& j = jacobians[i];
    const double s = j.cols() > j.rows() ? 0.0 : min_singular_value(j);
    if (s < out.min_singular_value) {
      out.min_singular_value = s;
      out.worst_index = i;
    }
  }
  out.rank_ok = out.min_singular_value > tol;
  return out;
}

struct SyncCurve {
  std::vector<std::pair<std::size_t, double>> points;  // (k, gap_k)
  double rate = 0.0;            // exp(slope) of the log-gap fit; 0 when the gap collapses to exactly 0
  double noise_floor = 0.0;     // round-off floor 64 eps max(1, |x_k|) where the fit stopped
  std::size_t fit_begin = 0;    // fit window [fit_begin, fit_end)
  std::size_t fit_end = 0;
  bool diverging = false;
};

/// Per-step gap sequence with an exponential rate fitted by least squares
/// on log(gap) over the tail half of the informative part of the curve. The
/// informative part ends where the gap first reaches the round-off floor
/// 64 eps max(1, |x_k|); a gap that reaches exactly 0 gives rate 0.
inline SyncCurve sync_error_curve(const SynchronizationReport& report) {
  SyncCurve out;
  const std::size_t n = report.gaps.size();
  out.points.reserve(n);
  for (std::size_t k = 0; k < n; ++k) out.points.emplace_back(k, report.gaps[k]);
  const double eps64 = 64.0 * std::numeric_limits<double>::epsilon();
  const auto floor_at = [&](std::size_t k) {
    const double scale = k < report.scales.size() ? report.scales[k] : report.state_scale;
    return eps64 * std::max(1.0, scale);
  };

  std::size_t end = n;
  out.noise_floor = n ? floor_at(n - 1) : eps64;
  for (std::size_t k = 0; k < n; ++k) {
    if (report.gaps[k] == 0.0) {
      out.fit_begin = out.fit_end = k;
      out.rate = 0.0;
      return out;
    }
    if (report.gaps[k] <= floor_at(k)) {
      end = k;
      out.noise_floor = floor_at(k);
      break;
    }
  }
  out.fit_begin = end / 2;
  out.fit_end = end;

  double sk = 0, sy = 0, skk = 0, sky = 0;
  std::size_t used = 0;
  for (std::size_t k = out.fit_begin; k < out.fit_end; ++k) {
    const double g = report.gaps[k];
    if (!(g > 0.0) || !std::isfinite(g)) continue;
    const double x = static_cast<double>(k), y = std::log(g);
    sk += x;
    sy += y;
    skk += x * x;
    sky += x * y;
    ++used;
  }
  if (used >= 2) {
    const double m = static_cast<double>(used);
    const double denom = m * skk - sk * sk;
    out.rate = denom != 0.0 ? std::exp((m * sky - sk * sy) / denom) : 1.0;
  } else {
    out.rate = 0.0;  // gap fell to the floor immediately
  }
  out.diverging = out.rate > 1.0;
  return out;
}

/// |L_img - L_src| / L_src for the polygon through `points`, with source
/// length measured in the metric G and image length in the Euclidean norm.
template <typename Map>
double arc_length_compare(const std::vector<Vector>& points, const Map& f, const MetricTensor& g) {
  if (points.size() < 3) fail(ErrorKind::InsufficientSamples, "arc length needs at least 3 points");
  double source_length = 0.0, image_length = 0.0;
  Vector prev_image = f(points.front());
  for (std::size_t i = 1; i < points.size(); ++i) {
    const Vector dm = points[i] - points[i - 1];
    source_length += std::sqrt(std::max(0.0, g.inner(dm, dm)));
    Vector image = f(points[i]);
    image_length += (image - prev_image).norm();
    prev_image = std::move(image);
  }
  if (!(source_length > 0.0)) fail(ErrorKind::InsufficientSamples, "curve has zero length");
  return std::abs(image_length - source_length) / source_length;
}

inline double arc_length_compare(const std::vector<Vector>& points, const GsLinearMap& f, const MetricTensor& g) {
  return arc_length_compare(points, [&f](const Vector& m) { return f(m); }, g);
}

namespace detail {
/// Angle between unit vectors via 2 atan2(|a - b|, |a + b|); accurate near 0 and pi.
inline double stable_angle(double diff_norm, double sum_norm) { return 2.0 * std::atan2(diff_norm, sum_norm); }
}  // namespace detail

/// |angle_G(u, y) - angle(J u, J y)| in radians.
inline double angle_compare(const Vector& u, const Vector& y, const Matrix& j, const MetricTensor& g,
                            double tol = 1e-14) {
  const double nu = std::sqrt(g.inner(u, u)), ny = std::sqrt(g.inner(y, y));
  if (!(nu > 0.0) || !(ny > 0.0)) fail(ErrorKind::DegenerateTangent, "tangent vectors must be nonzero");
  const Vector ju = j * u, jy = j * y;
  const double nju = ju.norm(), njy = jy.norm();
  if (!(nju > tol) || !(njy > tol)) fail(ErrorKind::DegenerateTangent, "image tangent vanishes");

  const Vector a = u / nu, b = y / ny;
  const Vector d = a - b, s = a + b;
  const double source_angle = detail::stable_angle(std::sqrt(std::max(0.0, g.inner(d, d))),
                                                   std::sqrt(std::max(0.0, g.inner(s, s))));
  const Vector ia = ju / nju, ib = jy / njy;
  const double image_angle = detail::stable_angle((ia - ib).norm(), (ia + ib).norm());
  return std::abs(source_angle - image_angle);
}

struct EmbeddingOptions {
  double ratio_tolerance = 1e-6;
  double rank_tolerance = 1e-8;
  double floor_fraction = 1e-6;
  std::size_t neighbours = 0;  // 0 -> 2q + 2
  std::optional<Matrix> metric;
};

struct EmbeddingReport {
  double min_image_gap = 0.0;  // min injectivity ratio
  std::pair<std::size_t, std::size_t> worst_pair{0, 0};
  bool injective = false;
  double min_singular_value = 0.0;
  bool rank_ok = false;
  std::optional<double> isometry_defect_max;
  DimensionGate dimension_gate = DimensionGate::InsufficientDimension;
  bool jacobians_estimated = false;
  double max_jacobian_condition = 1.0;
};

/// Uses gs.jacobians when present and local least-squares estimates otherwise.
inline EmbeddingReport embedding_report(const SampledGS& gs, const EmbeddingOptions& opt = {}) {
  if (gs.points.empty()) fail(ErrorKind::InsufficientSamples, "empty GS sample");
  EmbeddingReport out;
  const Eigen::Index q = gs.points.front().size();
  const Eigen::Index n = gs.images.front().size();
  out.dimension_gate = dimension_gate(n, q);

  const InjectivityReport inj = injectivity_check(gs, opt.ratio_tolerance, opt.floor_fraction);
  out.min_image_gap = inj.min_ratio;
  out.worst_pair = inj.worst_pair;
  out.injective = inj.passed;

  std::vector<Matrix> jacobians;
  if (gs.jacobians) {
    jacobians = *gs.jacobians;
  } else {
    out.jacobians_estimated = true;
    for (LocalJacobian& lj : estimate_jacobians(gs, opt.neighbours)) {
      out.max_jacobian_condition = std::max(out.max_jacobian_condition, lj.condition);
      jacobians.push_back(std::move(lj.D));
    }
  }
  const ImmersionReport imm = immersion_check(jacobians, opt.rank_tolerance);
  out.min_singular_value = imm.min_singular_value;
  out.rank_ok = imm.rank_ok;

  if (opt.metric) {
    double worst = 0.0;
    for (const Matrix& j : jacobians) worst = std::max(worst, verify_isometry(j, *opt.metric));
    out.isometry_defect_max = worst;
  }
  return out;
}

}  // namespace rcgs
