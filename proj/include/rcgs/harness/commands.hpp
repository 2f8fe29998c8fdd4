#pragma once

// simulate / isometrize / sweep / verify. Each command writes its outputs
// under the configured directory and returns the sealed RunRecord together
// with the process exit code. Records contain no wall-clock data, so equal
// configurations give byte-identical record.json files; timings go to a
// separate timings.json.

#include "rcgs/diagnostics.hpp"
#include "rcgs/errors.hpp"
#include "rcgs/harness/config.hpp"
#include "rcgs/harness/serialize.hpp"
#include "rcgs/isometrize.hpp"
#include "rcgs/linear_gs.hpp"
#include "rcgs/reservoir.hpp"
#include "rcgs/sources.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <future>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace rcgs::harness {

inline constexpr const char* kSoftwareVersion = "0.1.0";

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> tolerance;
  std::optional<std::filesystem::path> output_dir;
};

struct Outcome {
  json record;
  int exit_code = 0;
  std::string summary;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline json new_record(const char* command, const ExperimentConfig& cfg) {
  const json effective = cfg.effective();
  return {{"schema_version", kSchemaVersion},
          {"software_version", kSoftwareVersion},
          {"command", command},
          {"config", effective},
          {"config_hash", io::content_hash(effective)}};
}

inline void write_timings(const std::filesystem::path& dir, double seconds) {
  io::write_json(dir / "timings.json", json{{"wall_seconds", seconds}});
}

inline json samples_to_json(const std::vector<Vector>& xs) {
  json out = json::array();
  for (const Vector& x : xs) out.push_back(io::vector_to_json(x));
  return out;
}

inline std::vector<Vector> samples_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) fail(ErrorKind::SchemaError, where + ": expected an array");
  std::vector<Vector> out;
  out.reserve(j.size());
  for (const json& x : j) out.push_back(io::vector_from_json(x, ErrorKind::SchemaError, where));
  return out;
}

inline json gate_to_json(const GateReport& g) {
  return {{"rho_A", g.rho_a},
          {"rho_source_inverse", g.rho_source_inverse},
          {"product", g.product},
          {"margin", g.margin},
          {"passed", g.passed}};
}

inline json embedding_to_json(const EmbeddingReport& r) {
  json j = {{"min_image_gap", r.min_image_gap},
            {"worst_pair", {r.worst_pair.first, r.worst_pair.second}},
            {"injective", r.injective},
            {"min_singular_value", r.min_singular_value},
            {"rank_ok", r.rank_ok},
            {"dimension_gate", std::string(to_string(r.dimension_gate))},
            {"jacobians_estimated", r.jacobians_estimated},
            {"max_jacobian_condition", r.max_jacobian_condition}};
  j["isometry_defect_max"] = r.isometry_defect_max ? json(*r.isometry_defect_max) : json(nullptr);
  return j;
}

inline Vector default_m0(const SourceSystem& source) {
  const Eigen::Index q = dimension(source);
  if (std::holds_alternative<LinearSource>(source)) return Vector::Unit(q, 0);
  return Vector::Zero(q);
}

inline Vector start_point(const ExperimentConfig& cfg, const SourceSystem& source) {
  Vector m = cfg.run.m0 ? *cfg.run.m0 : default_m0(source);
  if (m.size() != dimension(source)) fail(ErrorKind::ConfigError, "run.m0: wrong dimension");
  for (std::size_t k = 0; k < cfg.run.burn_in; ++k) m = step_forward(source, m);
  return m;
}

inline const LinearSource& require_linear_source(const SourceSystem& s) {
  if (!std::holds_alternative<LinearSource>(s)) fail(ErrorKind::ConfigError, "this command needs a linear source");
  return std::get<LinearSource>(s);
}

inline const LinearReservoir& require_linear_reservoir(const Reservoir& r) {
  if (!std::holds_alternative<LinearReservoir>(r)) fail(ErrorKind::ConfigError, "this command needs a linear reservoir");
  return std::get<LinearReservoir>(r);
}

struct Tolerances {
  double isometry;
  double conjugation = 1e-10;
  double eigenvalue_drift = 1e-10;
  double stein_residual = 1e-10;
  double gs_consistency = 1e-9;
};

inline json tolerances_to_json(const Tolerances& t) {
  return {{"isometry", t.isometry},
          {"conjugation", t.conjugation},
          {"eigenvalue_drift", t.eigenvalue_drift},
          {"stein_residual", t.stein_residual},
          {"gs_consistency", t.gs_consistency}};
}

inline json isometrization_to_json(const IsometrizationResult& r) {
  json j = {{"H", io::matrix_to_json(r.H)},
            {"A_star", io::matrix_to_json(r.A_star)},
            {"C_star", io::vector_to_json(r.C_star)},
            {"P", io::complex_matrix_to_json(r.P)},
            {"Q", io::complex_matrix_to_json(r.Q)},
            {"PQ", io::matrix_to_json(r.PQ)},
            {"R", io::matrix_to_json(r.R)},
            {"W", io::matrix_to_json(r.W)},
            {"J", io::matrix_to_json(r.J)},
            {"J_star", io::matrix_to_json(r.J_star)},
            {"eigenvalues", io::complex_vector_to_json(r.eigenpairs.values)},
            {"eigenvalue_min_gap", r.eigenpairs.min_gap},
            {"gate", gate_to_json(r.gate)}};
  j["S"] = r.S ? io::matrix_to_json(*r.S) : json(nullptr);
  j["R_perp"] = r.R_perp ? io::matrix_to_json(*r.R_perp) : json(nullptr);
  const auto& d = r.diagnostics;
  j["diagnostics"] = {{"isometry_defect", d.isometry_defect},     {"eigenvalue_drift", d.eigenvalue_drift},
                      {"rank_margin", d.rank_margin},             {"pq_consistency", d.pq_consistency},
                      {"stein_residual", d.stein_residual},       {"basis_identity", d.basis_identity},
                      {"conjugator_condition", d.conjugator_condition}};
  json pivots = json::array();
  for (Eigen::Index p : r.completion_pivots) pivots.push_back(p);
  j["decisions"] = {{"pq_route", "J W"},
                    {"orthonormal_basis", "W = L^-T from Cholesky G = L L^T"},
                    {"completion", r.S ? "Gram-Schmidt of standard basis against range(PQ), largest residual first"
                                       : "none (N = q)"},
                    {"completion_pivots", std::move(pivots)},
                    {"block_rotation", r.S ? "blockdiag(R, R_perp)" : "R"}};
  return j;
}

inline std::string trim_number(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", x);
  return buf;
}

}  // namespace detail

inline void apply_overrides(ExperimentConfig& cfg, const Overrides& o, const char* command) {
  if (o.seed) {
    cfg.seed = *o.seed;
    if (cfg.sweep && std::string(command) == "sweep") cfg.sweep->seed_begin = *o.seed;
  }
  if (o.tolerance) {
    if (!(*o.tolerance > 0.0)) fail(ErrorKind::ConfigError, "--tol must be positive");
    if (std::string(command) == "simulate")
      cfg.run.sync_tolerance = *o.tolerance;
    else
      cfg.run.isometry_tolerance = *o.tolerance;
  }
  if (o.output_dir) cfg.output_dir = *o.output_dir;
  if (cfg.sweep) {
    cfg.raw["sweep"]["seeds"]["begin"] = cfg.sweep->seed_begin;
  }
}

/// Drives the coupled system from two initial states, writes trajectory,
/// sync-curve, GS-sample and histogram CSVs plus record.json. Exit code 6 when
/// the two runs fail to synchronise.
inline Outcome cmd_simulate(const ExperimentConfig& cfg) {
  using namespace detail;
  const auto t0 = Clock::now();
  const SourceSystem source = build_source(cfg.source);
  const Eigen::Index q = dimension(source);
  const Observation obs = build_observation(cfg.observation, q);
  const Reservoir reservoir = build_reservoir(cfg.reservoir, cfg.seed);
  const Eigen::Index n = dimension(reservoir);
  const Vector m0 = start_point(cfg, source);

  Rng x0_rng = Rng::substream(cfg.seed.value_or(0), "x0");
  const Vector x0a = x0_rng.in_ball(n, cfg.run.x0_radius);
  const Vector x0b = x0_rng.in_ball(n, cfg.run.x0_radius);

  GsEstimate est = std::visit(
      [&](const auto& res) {
        return std::visit(
            [&](const auto& src) {
              return synchronize(res, src, obs, m0, cfg.run.washout, cfg.run.samples, x0a, x0b,
                                 cfg.run.sync_tolerance);
            },
            source);
      },
      reservoir);
  const SyncCurve curve = sync_error_curve(est.report);

  json record = new_record("simulate", cfg);
  record["dimensions"] = {{"N", n}, {"q", q}};
  record["synchronization"] = {{"tolerance", est.report.tolerance},
                               {"final_gap", est.report.final_gap},
                               {"converged", est.report.converged},
                               {"rate", curve.rate},
                               {"diverging", curve.diverging},
                               {"gaps", est.report.gaps}};
  record["sampled_gs"] = {{"points", samples_to_json(est.gs.points)}, {"images", samples_to_json(est.gs.images)}};

  // Exact Jacobians when the closed form applies.
  std::optional<GateReport> gate;
  if (std::holds_alternative<LinearReservoir>(reservoir) && std::holds_alternative<LinearSource>(source) &&
      obs.linear_coefficients()) {
    const LinearGsProblem problem(std::get<LinearReservoir>(reservoir), std::get<LinearSource>(source), obs);
    gate = check_convergence(problem);
    record["gate"] = gate_to_json(*gate);
    if (gate->passed) {
      const GsLinearMap map = gs_matrix(problem);
      est.gs.jacobians = std::vector<Matrix>(est.gs.points.size(), map.J);
      double worst = 0.0;
      for (std::size_t i = 0; i < est.gs.points.size(); ++i)
        worst = std::max(worst, (est.gs.images[i] - map(est.gs.points[i])).norm());
      record["closed_form_max_deviation"] = worst;
    }
  }

  const std::filesystem::path dir = cfg.output_dir;
  {
    std::vector<std::string> header{"k"};
    for (Eigen::Index i = 0; i < q; ++i) header.push_back("m" + std::to_string(i));
    header.push_back("z");
    for (Eigen::Index i = 0; i < n; ++i) header.push_back("x" + std::to_string(i));
    io::CsvWriter csv(header);
    const DrivenTrajectory& tr = est.trajectory;
    for (std::size_t k = 0; k < tr.inputs.size(); ++k) {
      std::vector<std::string> row{std::to_string(k)};
      for (Eigen::Index i = 0; i < q; ++i) row.push_back(io::number(tr.source_points[k][i]));
      row.push_back(io::number(tr.inputs[k]));
      for (Eigen::Index i = 0; i < n; ++i) row.push_back(io::number(tr.states[k + 1][i]));
      csv.row(row);
    }
    csv.save(dir / "trajectory.csv");
  }
  {
    io::CsvWriter csv({"k", "gap"});
    for (const auto& [k, gap] : curve.points) csv.row({std::to_string(k), io::number(gap)});
    csv.save(dir / "sync_curve.csv");
  }

  Outcome outcome;
  if (est.report.converged) {
    EmbeddingOptions opt;
    opt.ratio_tolerance = cfg.run.injectivity_floor;
    opt.rank_tolerance = cfg.run.immersion_tolerance;
    opt.floor_fraction = cfg.run.separation_fraction;
    opt.neighbours = cfg.run.neighbours;
    if (!cfg.metric.is_string()) opt.metric = build_metric(cfg.metric, q, cfg.seed).matrix();
    if (est.gs.points.size() >= 2) {
      const EmbeddingReport report = embedding_report(est.gs, opt);
      record["embedding_report"] = embedding_to_json(report);
      record["embedding_options"] = {{"ratio_tolerance", opt.ratio_tolerance},
                                     {"separation_fraction", opt.floor_fraction}};
      io::CsvWriter hist({"log10_ratio_lo", "log10_ratio_hi", "count"});
      const InjectivityReport inj = injectivity_check(est.gs, opt.ratio_tolerance, opt.floor_fraction);
      for (const HistogramBin& b : pairwise_ratio_histogram(est.gs, 40, inj.separation_floor))
        hist.row({io::number(b.lo), io::number(b.hi), std::to_string(b.count)});
      hist.save(dir / "pairwise_ratio_histogram.csv");
    }
    {
      std::vector<std::string> header{"i"};
      for (Eigen::Index i = 0; i < q; ++i) header.push_back("m" + std::to_string(i));
      for (Eigen::Index i = 0; i < n; ++i) header.push_back("f" + std::to_string(i));
      io::CsvWriter csv(header);
      for (std::size_t s = 0; s < est.gs.points.size(); ++s) {
        std::vector<std::string> row{std::to_string(s)};
        for (Eigen::Index i = 0; i < q; ++i) row.push_back(io::number(est.gs.points[s][i]));
        for (Eigen::Index i = 0; i < n; ++i) row.push_back(io::number(est.gs.images[s][i]));
        csv.row(row);
      }
      csv.save(dir / "gs_samples.csv");
    }
    outcome.exit_code = 0;
    outcome.summary = "converged: final gap " + trim_number(est.report.final_gap);
  } else {
    outcome.exit_code = exit_code(ErrorKind::NoSynchronization);
    outcome.summary = "NoSynchronization: final gap " + trim_number(est.report.final_gap) + " (rate " +
                      trim_number(curve.rate) + ")";
    record["error"] = {{"kind", "NoSynchronization"}, {"exit_code", outcome.exit_code}};
  }
  record["passed"] = est.report.converged;
  io::seal(record);
  io::write_json(dir / "record.json", record);
  write_timings(dir, seconds_since(t0));
  outcome.record = std::move(record);
  return outcome;
}

/// Runs gate -> J -> PQ -> H -> (A*, C*) -> verification and writes
/// record.json. Exit 0 iff the isometry defect is within tolerance.
inline Outcome cmd_isometrize(const ExperimentConfig& cfg) {
  using namespace detail;
  const auto t0 = Clock::now();
  const SourceSystem source_sys = build_source(cfg.source);
  const LinearSource& source = require_linear_source(source_sys);
  const Eigen::Index q = source.dimension();
  const Observation obs = build_observation(cfg.observation, q);
  const Reservoir reservoir_sys = build_reservoir(cfg.reservoir, cfg.seed);
  const LinearReservoir& reservoir = require_linear_reservoir(reservoir_sys);
  const Eigen::Index n = reservoir.dimension();
  const MetricTensor g = build_metric(cfg.metric, q, cfg.seed);
  const Rotation r = build_rotation(cfg.rotation, q, "rotation");
  const Rotation r_perp = build_rotation(cfg.rotation_perp, std::max<Eigen::Index>(n - q, 0), "rotation_perp");

  const LinearGsProblem problem(reservoir, source, obs);
  IsometrizeOptions opt;
  opt.eigen_tolerance = cfg.run.eigen_tolerance;
  opt.rank_tolerance = cfg.run.rank_tolerance;
  const IsometrizationResult result = isometrize(problem, g, r, r_perp, opt);

  Tolerances tol{cfg.run.isometry_tolerance};
  json record = new_record("isometrize", cfg);
  record["problem"] = {{"A", io::matrix_to_json(reservoir.A)},
                       {"C", io::vector_to_json(reservoir.C)},
                       {"M", io::matrix_to_json(source.matrix())},
                       {"c", io::vector_to_json(problem.c.transpose())},
                       {"G", io::matrix_to_json(g.matrix())},
                       {"N", n},
                       {"q", q}};
  record["tolerances"] = tolerances_to_json(tol);
  record["result"] = isometrization_to_json(result);
  const bool passed = result.diagnostics.isometry_defect <= tol.isometry;
  record["passed"] = passed;
  io::seal(record);
  const std::filesystem::path dir = cfg.output_dir;
  io::write_json(dir / "record.json", record);
  write_timings(dir, seconds_since(t0));

  Outcome outcome;
  outcome.exit_code = passed ? 0 : exit_code(ErrorKind::VerificationFailure);
  outcome.summary = std::string(passed ? "isometric" : "NOT isometric") + ": defect " +
                    trim_number(result.diagnostics.isometry_defect) + ", eigenvalue drift " +
                    trim_number(result.diagnostics.eigenvalue_drift);
  outcome.record = std::move(record);
  return outcome;
}

struct TrialResult {
  std::uint64_t seed = 0;
  bool gate_passed = false;
  double gate_product = 0.0;
  bool observable = false;
  bool rank_full = false;
  double rank_margin = 0.0;
  bool isometry_passed = false;
  std::optional<double> isometry_defect;
  std::optional<double> eigenvalue_drift;
  std::optional<double> immersion_sigma;
  bool immersion_ok = false;
  std::optional<double> injectivity_ratio;
  bool injective = false;
  std::optional<std::string> error;
};

inline json trial_to_json(const TrialResult& t) {
  auto opt = [](const std::optional<double>& x) { return x ? json(*x) : json(nullptr); };
  return {{"seed", t.seed},
          {"gate_passed", t.gate_passed},
          {"gate_product", t.gate_product},
          {"observable", t.observable},
          {"rank_full", t.rank_full},
          {"rank_margin", t.rank_margin},
          {"isometry_passed", t.isometry_passed},
          {"isometry_defect", opt(t.isometry_defect)},
          {"eigenvalue_drift", opt(t.eigenvalue_drift)},
          {"immersion_sigma", opt(t.immersion_sigma)},
          {"immersion_ok", t.immersion_ok},
          {"injectivity_ratio", opt(t.injectivity_ratio)},
          {"injective", t.injective},
          {"error", t.error ? json(*t.error) : json(nullptr)}};
}

struct CellCounts {
  std::size_t trials = 0, gate_pass = 0, rank_full = 0, isometry_pass = 0, immersion_ok = 0, injective_ok = 0;
};

inline CellCounts count_trials(const json& trials) {
  CellCounts c;
  for (const json& t : trials) {
    ++c.trials;
    c.gate_pass += t.at("gate_passed").get<bool>();
    c.rank_full += t.at("rank_full").get<bool>();
    c.isometry_pass += t.at("isometry_passed").get<bool>();
    c.immersion_ok += t.at("immersion_ok").get<bool>();
    c.injective_ok += t.at("injective").get<bool>();
  }
  return c;
}

inline json counts_to_json(const CellCounts& c) {
  return {{"trials", c.trials},           {"gate_pass", c.gate_pass},       {"rank_full", c.rank_full},
          {"isometry_pass", c.isometry_pass}, {"immersion_ok", c.immersion_ok}, {"injective_ok", c.injective_ok}};
}

/// One random linear reservoir of size n and spectral radius rho, drawn from
/// the trial seed, run through gate, rank, isometrization and embedding checks.
inline TrialResult run_trial(const ExperimentConfig& cfg, const LinearSource& source, const Observation& obs,
                             const std::vector<Vector>& orbit, long n, double rho, std::uint64_t seed) {
  TrialResult t;
  t.seed = seed;
  try {
    const Reservoir res = build_reservoir(cfg.reservoir, seed, 0, n, rho);
    const LinearGsProblem problem(std::get<LinearReservoir>(res), source, obs);
    const GateReport gate = check_convergence(problem);
    t.gate_passed = gate.passed;
    t.gate_product = gate.product;
    if (!gate.passed) return t;

    const InverseEigenpairs eig = eigenpairs_inverse(source, cfg.run.eigen_tolerance);
    const PMatrix p = compute_P(problem, eig, cfg.run.rank_tolerance);
    t.observable = p.observable;
    t.rank_full = p.full_rank && p.observable;
    t.rank_margin = p.rank_margin;

    const GsLinearMap map = gs_matrix(problem);
    t.immersion_sigma = map.J.cols() > map.J.rows() ? 0.0 : min_singular_value(map.J);
    t.immersion_ok = *t.immersion_sigma > cfg.run.immersion_tolerance;
    if (orbit.size() >= 2) {
      SampledGS gs;
      gs.points = orbit;
      for (const Vector& m : orbit) gs.images.push_back(map(m));
      const InjectivityReport inj = injectivity_check(gs, cfg.run.injectivity_floor, cfg.run.separation_fraction);
      t.injectivity_ratio = inj.min_ratio;
      t.injective = inj.passed;
    }

    if (t.rank_full) {
      const Eigen::Index q = source.dimension();
      const MetricTensor g = build_metric(cfg.metric, q, seed);
      const Rotation r = build_rotation(cfg.rotation, q, "rotation");
      const Rotation r_perp = build_rotation(cfg.rotation_perp, std::max<Eigen::Index>(n - q, 0), "rotation_perp");
      IsometrizeOptions opt;
      opt.eigen_tolerance = cfg.run.eigen_tolerance;
      opt.rank_tolerance = cfg.run.rank_tolerance;
      const IsometrizationResult result = isometrize(problem, g, r, r_perp, opt);
      t.isometry_defect = result.diagnostics.isometry_defect;
      t.eigenvalue_drift = result.diagnostics.eigenvalue_drift;
      t.isometry_passed = *t.isometry_defect <= cfg.run.isometry_tolerance;
    }
  } catch (const Error& e) {
    t.error = std::string(to_string(e.kind()));
  }
  return t;
}

/// Grid over reservoir sizes x spectral radii, `seeds.count` trials per cell.
/// Cells run concurrently; results are assembled in grid order.
inline Outcome cmd_sweep(const ExperimentConfig& cfg) {
  using namespace detail;
  const auto t0 = Clock::now();
  if (!cfg.sweep) fail(ErrorKind::ConfigError, "sweep: missing 'sweep' section");
  SweepParams sp = *cfg.sweep;
  if (sp.reservoir_sizes.empty() && cfg.reservoir.contains("N") && detail::is_count(cfg.reservoir["N"]))
    sp.reservoir_sizes.push_back(cfg.reservoir["N"].get<long>());
  if (sp.spectral_radii.empty() && cfg.reservoir.contains("spectral_radius") &&
      cfg.reservoir["spectral_radius"].is_number())
    sp.spectral_radii.push_back(cfg.reservoir["spectral_radius"].get<double>());
  if (sp.seed_count == 0 || sp.reservoir_sizes.empty() || sp.spectral_radii.empty())
    fail(ErrorKind::ConfigError, "sweep: empty grid");
  if (::rcgs::harness::detail::kind_of(cfg.reservoir, "reservoir") != "linear" || cfg.reservoir.contains("A"))
    fail(ErrorKind::ConfigError, "sweep: reservoir must be a random linear reservoir");

  const SourceSystem source_sys = build_source(cfg.source);
  const LinearSource& source = require_linear_source(source_sys);
  const Eigen::Index q = source.dimension();
  const Observation obs = build_observation(cfg.observation, q);
  const std::vector<Vector> orbit = sample_trajectory(source, start_point(cfg, source_sys), 0, cfg.run.samples);

  struct Cell {
    long n;
    double rho;
  };
  std::vector<Cell> cells;
  for (long n : sp.reservoir_sizes)
    for (double rho : sp.spectral_radii) cells.push_back({n, rho});

  const std::filesystem::path dir = cfg.output_dir;
  std::vector<std::future<json>> futures;
  futures.reserve(cells.size());
  for (std::size_t index = 0; index < cells.size(); ++index) {
    futures.push_back(std::async(std::launch::async, [&, index] {
      const Cell cell = cells[index];
      json trials = json::array();
      for (std::size_t i = 0; i < sp.seed_count; ++i)
        trials.push_back(trial_to_json(run_trial(cfg, source, obs, orbit, cell.n, cell.rho, sp.seed_begin + i)));
      const DimensionGateReport dg = dimension_gate_report(cell.n, q);
      json cj = {{"index", index},
                 {"N", cell.n},
                 {"q", q},
                 {"spectral_radius", cell.rho},
                 {"dimension_gate", std::string(to_string(dg.gate))},
                 {"whitney_bound", dg.whitney},
                 {"nash_bound", dg.nash},
                 {"counts", counts_to_json(count_trials(trials))},
                 {"trials", std::move(trials)}};
      char name[32];
      std::snprintf(name, sizeof name, "cell_%03zu.json", index);
      json sealed = cj;
      sealed["schema_version"] = kSchemaVersion;
      io::seal(sealed);
      io::write_json(dir / "cells" / name, sealed);
      return cj;
    }));
  }

  json cell_records = json::array();
  io::CsvWriter csv({"N", "q", "spectral_radius", "trials", "gate_pass", "rank_full", "isometry_pass", "immersion_ok",
                     "injective_ok", "full_rank_fraction", "dimension_gate"});
  for (auto& f : futures) {
    json cj = f.get();
    const json& c = cj["counts"];
    const double trials = c["trials"].get<double>();
    csv.row({std::to_string(cj["N"].get<long>()), std::to_string(q), io::number(cj["spectral_radius"].get<double>()),
             std::to_string(c["trials"].get<std::size_t>()), std::to_string(c["gate_pass"].get<std::size_t>()),
             std::to_string(c["rank_full"].get<std::size_t>()), std::to_string(c["isometry_pass"].get<std::size_t>()),
             std::to_string(c["immersion_ok"].get<std::size_t>()), std::to_string(c["injective_ok"].get<std::size_t>()),
             io::number(c["rank_full"].get<double>() / trials), cj["dimension_gate"].get<std::string>()});
    cell_records.push_back(std::move(cj));
  }
  csv.save(dir / "summary.csv");

  json record = new_record("sweep", cfg);
  record["cells"] = std::move(cell_records);
  record["passed"] = true;
  io::seal(record);
  io::write_json(dir / "record.json", record);
  write_timings(dir, seconds_since(t0));

  Outcome outcome;
  outcome.summary = csv.str();
  outcome.record = std::move(record);
  return outcome;
}

namespace detail {

struct CheckList {
  json items = json::array();
  bool all_passed = true;

  void add(const std::string& name, double value, double tolerance) {
    const bool ok = value <= tolerance;
    all_passed = all_passed && ok;
    items.push_back({{"name", name}, {"value", value}, {"tolerance", tolerance}, {"passed", ok}});
  }
  void add_flag(const std::string& name, bool ok) {
    all_passed = all_passed && ok;
    items.push_back({{"name", name}, {"passed", ok}});
  }
};

inline const json& field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) fail(ErrorKind::SchemaError, where + ": missing '" + key + "'");
  return j[key];
}

inline double number_field(const json& j, const char* key, const std::string& where) {
  const json& x = field(j, key, where);
  if (!x.is_number()) fail(ErrorKind::SchemaError, where + "." + key + ": expected a number");
  return x.get<double>();
}

inline void verify_isometrize(const json& rec, std::optional<double> tol_override, CheckList& checks) {
  const json& pj = field(rec, "problem", "record");
  const json& rj = field(rec, "result", "record");
  const json& tj = field(rec, "tolerances", "record");
  const auto mat = [](const json& j, const char* key, const std::string& where) {
    return io::matrix_from_json(field(j, key, where), ErrorKind::SchemaError, where + "." + key);
  };
  const auto vec = [](const json& j, const char* key, const std::string& where) {
    return io::vector_from_json(field(j, key, where), ErrorKind::SchemaError, where + "." + key);
  };
  const Matrix a = mat(pj, "A", "problem"), m = mat(pj, "M", "problem"), g = mat(pj, "G", "problem");
  const Vector c_res = vec(pj, "C", "problem"), c_obs = vec(pj, "c", "problem");
  const Matrix h = mat(rj, "H", "result"), a_star = mat(rj, "A_star", "result");
  const Vector c_star = vec(rj, "C_star", "result");
  const Eigen::Index n = a.rows();
  if (a.cols() != n || c_res.size() != n || h.rows() != n || h.cols() != n || a_star.rows() != n ||
      a_star.cols() != n || c_star.size() != n || m.rows() != c_obs.size() || g.rows() != m.rows())
    fail(ErrorKind::SchemaError, "record: inconsistent matrix shapes");

  const double iso_tol = tol_override ? *tol_override : number_field(tj, "isometry", "tolerances");
  const double conj_tol = number_field(tj, "conjugation", "tolerances");
  const double drift_tol = number_field(tj, "eigenvalue_drift", "tolerances");
  const double stein_tol = number_field(tj, "stein_residual", "tolerances");
  const double gs_tol = number_field(tj, "gs_consistency", "tolerances");

  const LinearGsProblem problem(LinearReservoir(a, c_res), LinearSource(m), RowVector(c_obs.transpose()));
  const GsLinearMap map = gs_matrix(problem);
  const Matrix j_star = h * map.J;
  checks.add("isometry_defect", verify_isometry(j_star, g), iso_tol);
  checks.add("stein_residual", map.residual, stein_tol);

  const Matrix h_inv = h.partialPivLu().inverse();
  checks.add("conjugation_A", (a_star - h * a * h_inv).norm() / std::max(1.0, a_star.norm()), conj_tol);
  checks.add("conjugation_C", (c_star - h * c_res).norm() / std::max(1.0, c_star.norm()), conj_tol);
  checks.add("eigenvalue_drift", eigenvalue_drift(a, a_star), drift_tol);

  const LinearGsProblem conjugated(LinearReservoir(a_star, c_star), LinearSource(m), RowVector(c_obs.transpose()));
  checks.add("gs_consistency", (gs_matrix(conjugated).J - j_star).norm(), gs_tol);
}

inline void verify_simulate(const json& rec, CheckList& checks) {
  const json& sj = field(rec, "synchronization", "record");
  const json& gaps = field(sj, "gaps", "synchronization");
  if (!gaps.is_array() || gaps.empty()) fail(ErrorKind::SchemaError, "synchronization.gaps: expected a nonempty array");
  const double tol = number_field(sj, "tolerance", "synchronization");
  const double final_gap = gaps.back().get<double>();
  checks.add_flag("final_gap_matches", final_gap == number_field(sj, "final_gap", "synchronization"));
  checks.add_flag("converged_flag_matches", (final_gap < tol) == field(sj, "converged", "synchronization").get<bool>());
  checks.add_flag("converged", final_gap < tol);

  if (rec.contains("embedding_report")) {
    const json& gj = field(rec, "sampled_gs", "record");
    SampledGS gs;
    gs.points = samples_from_json(field(gj, "points", "sampled_gs"), "sampled_gs.points");
    gs.images = samples_from_json(field(gj, "images", "sampled_gs"), "sampled_gs.images");
    const json& oj = field(rec, "embedding_options", "record");
    const InjectivityReport inj = injectivity_check(gs, number_field(oj, "ratio_tolerance", "embedding_options"),
                                                    number_field(oj, "separation_fraction", "embedding_options"));
    const double stored = number_field(rec["embedding_report"], "min_image_gap", "embedding_report");
    checks.add("injectivity_ratio_reproduced", std::abs(inj.min_ratio - stored) / std::max(1.0, std::abs(stored)),
               1e-12);
    checks.add_flag("injective",
                    field(rec["embedding_report"], "injective", "embedding_report").get<bool>() == inj.passed);
  }
}

inline void verify_sweep(const json& rec, CheckList& checks) {
  const json& cells = field(rec, "cells", "record");
  if (!cells.is_array() || cells.empty()) fail(ErrorKind::SchemaError, "record.cells: expected a nonempty array");
  for (const json& cell : cells) {
    const CellCounts recount = count_trials(field(cell, "trials", "cell"));
    checks.add_flag("cell_" + std::to_string(field(cell, "index", "cell").get<long>()) + "_counts",
                    counts_to_json(recount) == field(cell, "counts", "cell"));
  }
}

}  // namespace detail

/// Re-checks a stored record without the original configuration. Exit 0 iff
/// the checksum matches and every recomputed quantity is within tolerance.
inline Outcome cmd_verify(const std::filesystem::path& path, std::optional<double> tol_override = std::nullopt) {
  using namespace detail;
  const json rec = io::parse_json(io::read_file(path, ErrorKind::SchemaError), ErrorKind::SchemaError, path.string());
  if (!rec.is_object()) fail(ErrorKind::SchemaError, "record must be a JSON object");
  const json& version = field(rec, "schema_version", "record");
  if (version != kSchemaVersion) fail(ErrorKind::SchemaError, "unsupported schema_version");
  const json& checksum = field(rec, "checksum", "record");
  const json& command = field(rec, "command", "record");
  if (!checksum.is_string() || !command.is_string()) fail(ErrorKind::SchemaError, "record: malformed header");

  const bool checksum_ok = io::record_checksum(rec) == checksum.get<std::string>();
  CheckList checks;
  const std::string cmd = command.get<std::string>();
  if (cmd == "isometrize")
    verify_isometrize(rec, tol_override, checks);
  else if (cmd == "simulate")
    verify_simulate(rec, checks);
  else if (cmd == "sweep")
    verify_sweep(rec, checks);
  else
    fail(ErrorKind::SchemaError, "record: unknown command '" + cmd + "'");

  Outcome outcome;
  outcome.record = {{"file", path.string()},
                    {"command", cmd},
                    {"checksum_ok", checksum_ok},
                    {"checks", checks.items},
                    {"passed", checksum_ok && checks.all_passed}};
  if (!checksum_ok)
    outcome.exit_code = exit_code(ErrorKind::ChecksumMismatch);
  else if (!checks.all_passed)
    outcome.exit_code = exit_code(ErrorKind::VerificationFailure);
  outcome.summary = outcome.record.dump(2);
  return outcome;
}

}  // namespace rcgs::harness
