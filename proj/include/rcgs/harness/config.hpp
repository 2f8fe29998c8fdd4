#pragma once

// Experiment configuration. One JSON document per run; schema_version 1.
// Unknown keys are rejected at every level.

#include "rcgs/errors.hpp"
#include "rcgs/harness/serialize.hpp"
#include "rcgs/isometrize.hpp"
#include "rcgs/random.hpp"
#include "rcgs/reservoir.hpp"
#include "rcgs/sources.hpp"

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rcgs::harness {

using io::json;

inline constexpr int kSchemaVersion = 1;

struct RunParams {
  std::size_t washout = 200;
  std::size_t samples = 1000;
  std::size_t burn_in = 0;
  std::optional<Vector> m0;
  double x0_radius = 1.0;
  double sync_tolerance = 1e-9;
  double isometry_tolerance = 1e-10;
  double eigen_tolerance = 1e-8;
  double rank_tolerance = 1e-10;
  double immersion_tolerance = 1e-8;
  double injectivity_floor = 1e-6;
  double separation_fraction = 1e-6;
  std::size_t neighbours = 0;
};

struct SweepParams {
  std::uint64_t seed_begin = 0;
  std::size_t seed_count = 0;
  std::vector<long> reservoir_sizes;
  std::vector<double> spectral_radii;
};

struct ExperimentConfig {
  json raw;  // as given, after validation
  std::optional<std::uint64_t> seed;
  json source;
  json observation;
  json reservoir;
  json metric = "euclidean";
  json rotation = "identity";
  json rotation_perp = "identity";
  RunParams run;
  std::optional<SweepParams> sweep;
  std::filesystem::path output_dir = "out";

  /// Canonical JSON including command-line overrides; hashed into records.
  json effective() const {
    json j = raw;
    if (seed) j["seed"] = *seed;
    j["run"]["sync_tolerance"] = run.sync_tolerance;
    j["run"]["isometry_tolerance"] = run.isometry_tolerance;
    j.erase("output");
    return j;
  }
};

namespace detail {

[[noreturn]] inline void config_error(const std::string& what) { fail(ErrorKind::ConfigError, what); }

inline void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) config_error(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (std::string_view a : allowed) ok = ok || key == a;
    if (!ok) config_error(where + ": unknown key '" + key + "'");
  }
}

inline double number(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_number()) config_error(where + "." + key + ": expected a number");
  return j[key].get<double>();
}

inline double number_or(const json& j, const char* key, double fallback, const std::string& where) {
  return j.contains(key) ? number(j, key, where) : fallback;
}

inline bool is_count(const json& j) {
  return j.is_number_unsigned() || (j.is_number_integer() && j.get<long long>() >= 0);
}

inline std::size_t count(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !is_count(j[key])) config_error(where + "." + key + ": expected a non-negative integer");
  return j[key].get<std::size_t>();
}

inline std::size_t count_or(const json& j, const char* key, std::size_t fallback, const std::string& where) {
  return j.contains(key) ? count(j, key, where) : fallback;
}

inline std::string kind_of(const json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) config_error(where + ": missing 'kind'");
  return j["kind"].get<std::string>();
}

inline double positive(double x, const std::string& what) {
  if (!(x > 0.0)) config_error(what + " must be positive");
  return x;
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
  using namespace detail;
  check_keys(j, {"schema_version", "seed", "source", "observation", "reservoir", "metric", "rotation", "rotation_perp",
                 "run", "sweep", "output"},
             "config");
  if (!j.contains("schema_version") || j["schema_version"] != kSchemaVersion)
    config_error("config: schema_version must be " + std::to_string(kSchemaVersion));
  ExperimentConfig cfg;
  cfg.raw = j;
  if (j.contains("seed")) {
    if (!is_count(j["seed"])) config_error("config.seed: expected an unsigned integer");
    cfg.seed = j["seed"].get<std::uint64_t>();
  }
  if (!j.contains("source")) config_error("config: missing 'source'");
  if (!j.contains("observation")) config_error("config: missing 'observation'");
  if (!j.contains("reservoir")) config_error("config: missing 'reservoir'");
  cfg.source = j["source"];
  cfg.observation = j["observation"];
  cfg.reservoir = j["reservoir"];
  if (j.contains("metric")) cfg.metric = j["metric"];
  if (j.contains("rotation")) cfg.rotation = j["rotation"];
  if (j.contains("rotation_perp")) cfg.rotation_perp = j["rotation_perp"];

  if (j.contains("run")) {
    const json& r = j["run"];
    check_keys(r, {"washout", "samples", "burn_in", "m0", "x0_radius", "sync_tolerance", "isometry_tolerance",
                   "eigen_tolerance", "rank_tolerance", "immersion_tolerance", "injectivity_floor",
                   "separation_fraction", "neighbours"},
               "run");
    RunParams& p = cfg.run;
    p.washout = count_or(r, "washout", p.washout, "run");
    p.samples = count_or(r, "samples", p.samples, "run");
    p.burn_in = count_or(r, "burn_in", p.burn_in, "run");
    if (r.contains("m0")) p.m0 = io::vector_from_json(r["m0"], ErrorKind::ConfigError, "run.m0");
    p.x0_radius = positive(number_or(r, "x0_radius", p.x0_radius, "run"), "run.x0_radius");
    p.sync_tolerance = positive(number_or(r, "sync_tolerance", p.sync_tolerance, "run"), "run.sync_tolerance");
    p.isometry_tolerance =
        positive(number_or(r, "isometry_tolerance", p.isometry_tolerance, "run"), "run.isometry_tolerance");
    p.eigen_tolerance = positive(number_or(r, "eigen_tolerance", p.eigen_tolerance, "run"), "run.eigen_tolerance");
    p.rank_tolerance = positive(number_or(r, "rank_tolerance", p.rank_tolerance, "run"), "run.rank_tolerance");
    p.immersion_tolerance =
        positive(number_or(r, "immersion_tolerance", p.immersion_tolerance, "run"), "run.immersion_tolerance");
    p.injectivity_floor =
        positive(number_or(r, "injectivity_floor", p.injectivity_floor, "run"), "run.injectivity_floor");
    p.separation_fraction =
        positive(number_or(r, "separation_fraction", p.separation_fraction, "run"), "run.separation_fraction");
    p.neighbours = count_or(r, "neighbours", p.neighbours, "run");
    if (p.washout < 1) config_error("run.washout must be at least 1");
    if (p.samples < 1) config_error("run.samples must be at least 1");
  }

  if (j.contains("sweep")) {
    const json& s = j["sweep"];
    check_keys(s, {"seeds", "N", "spectral_radius"}, "sweep");
    SweepParams sp;
    if (!s.contains("seeds")) config_error("sweep: missing 'seeds'");
    check_keys(s["seeds"], {"begin", "count"}, "sweep.seeds");
    sp.seed_begin = count_or(s["seeds"], "begin", 0, "sweep.seeds");
    sp.seed_count = count(s["seeds"], "count", "sweep.seeds");
    auto list = [&](const char* key) {
      if (!s.contains(key)) return json::array();
      if (!s[key].is_array()) config_error(std::string("sweep.") + key + ": expected an array");
      return s[key];
    };
    for (const json& n : list("N")) {
      if (!is_count(n) || n.get<long>() < 1) config_error("sweep.N: expected positive integers");
      sp.reservoir_sizes.push_back(n.get<long>());
    }
    for (const json& rho : list("spectral_radius")) {
      if (!rho.is_number() || !(rho.get<double>() > 0.0)) config_error("sweep.spectral_radius: expected positive numbers");
      sp.spectral_radii.push_back(rho.get<double>());
    }
    cfg.sweep = sp;
  }

  if (j.contains("output")) {
    check_keys(j["output"], {"dir"}, "output");
    if (j["output"].contains("dir")) {
      if (!j["output"]["dir"].is_string()) config_error("output.dir: expected a string");
      cfg.output_dir = j["output"]["dir"].get<std::string>();
    }
  }

  // Validate the component specs eagerly so errors surface before any work.
  const auto kind = kind_of(cfg.reservoir, "reservoir");
  const bool random_reservoir = (kind == "linear" && !cfg.reservoir.contains("A")) || kind == "esn";
  const bool random_metric = cfg.metric.is_object() && cfg.metric.value("kind", "") == "random_spd";
  if ((random_reservoir || random_metric) && !cfg.seed && !cfg.sweep)
    config_error("config: 'seed' is required when a random reservoir or metric is used");
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  const std::string text = io::read_file(path, ErrorKind::ConfigError);
  return parse_config(io::parse_json(text, ErrorKind::ConfigError, path.string()));
}

inline SourceSystem build_source(const json& j) {
  using namespace detail;
  const std::string kind = kind_of(j, "source");
  if (kind == "rotation") {
    check_keys(j, {"kind", "theta"}, "source");
    return LinearSource::rotation(number(j, "theta", "source"));
  }
  if (kind == "scalar") {
    check_keys(j, {"kind", "value"}, "source");
    return LinearSource::scalar(number(j, "value", "source"));
  }
  if (kind == "hyperbolic") {
    check_keys(j, {"kind", "value"}, "source");
    return LinearSource::hyperbolic(number(j, "value", "source"));
  }
  if (kind == "diagonal") {
    check_keys(j, {"kind", "values"}, "source");
    if (!j.contains("values")) config_error("source.values missing");
    return LinearSource::diagonal(io::vector_from_json(j["values"], ErrorKind::ConfigError, "source.values"));
  }
  if (kind == "matrix") {
    check_keys(j, {"kind", "matrix"}, "source");
    if (!j.contains("matrix")) config_error("source.matrix missing");
    return LinearSource(io::matrix_from_json(j["matrix"], ErrorKind::ConfigError, "source.matrix"));
  }
  if (kind == "henon") {
    check_keys(j, {"kind", "a", "b"}, "source");
    return NonlinearSource::henon(number_or(j, "a", 1.4, "source"), number_or(j, "b", 0.3, "source"));
  }
  config_error("source.kind: unknown kind '" + kind + "'");
}

inline Observation build_observation(const json& j, Eigen::Index q) {
  using namespace detail;
  const std::string kind = kind_of(j, "observation");
  if (kind == "linear") {
    check_keys(j, {"kind", "coefficients"}, "observation");
    if (!j.contains("coefficients")) config_error("observation.coefficients missing");
    const Vector c = io::vector_from_json(j["coefficients"], ErrorKind::ConfigError, "observation.coefficients");
    if (c.size() != q) config_error("observation.coefficients: length must equal the source dimension");
    return Observation::linear(c.transpose());
  }
  if (kind == "coordinate") {
    check_keys(j, {"kind", "index"}, "observation");
    return Observation::coordinate(q, static_cast<Eigen::Index>(count(j, "index", "observation")));
  }
  config_error("observation.kind: unknown kind '" + kind + "'");
}

/// Reservoir from its config entry. Random draws come from the substream
/// ("reservoir", trial) of `seed`; `size_override`/`rho_override` are used by sweeps.
inline Reservoir build_reservoir(const json& j, std::optional<std::uint64_t> seed, std::uint64_t trial = 0,
                                 std::optional<long> size_override = std::nullopt,
                                 std::optional<double> rho_override = std::nullopt) {
  using namespace detail;
  const std::string kind = kind_of(j, "reservoir");
  auto size = [&]() -> long {
    if (size_override) return *size_override;
    const std::size_t n = count(j, "N", "reservoir");
    if (n < 1) config_error("reservoir.N must be at least 1");
    return static_cast<long>(n);
  };
  auto rng = [&]() {
    if (!seed) config_error("reservoir: random reservoir needs a seed");
    return Rng::substream(*seed, "reservoir", trial);
  };
  if (kind == "takens") {
    check_keys(j, {"kind", "N"}, "reservoir");
    return takens_reservoir(size());
  }
  if (kind == "linear") {
    check_keys(j, {"kind", "N", "spectral_radius", "A", "C"}, "reservoir");
    if (j.contains("A") || j.contains("C")) {
      if (!j.contains("A") || !j.contains("C")) config_error("reservoir: explicit A needs explicit C");
      return LinearReservoir(io::matrix_from_json(j["A"], ErrorKind::ConfigError, "reservoir.A"),
                             io::vector_from_json(j["C"], ErrorKind::ConfigError, "reservoir.C"));
    }
    const double rho = rho_override ? *rho_override : positive(number(j, "spectral_radius", "reservoir"), "reservoir.spectral_radius");
    Rng r = rng();
    return random_linear_reservoir(size(), rho, r);
  }
  if (kind == "esn") {
    check_keys(j, {"kind", "N", "spectral_radius", "input_scale", "bias_scale"}, "reservoir");
    const double rho = rho_override ? *rho_override : positive(number(j, "spectral_radius", "reservoir"), "reservoir.spectral_radius");
    Rng r = rng();
    return random_esn_reservoir(size(), rho, r, number_or(j, "input_scale", 1.0, "reservoir"),
                                number_or(j, "bias_scale", 0.0, "reservoir"));
  }
  config_error("reservoir.kind: unknown kind '" + kind + "'");
}

inline MetricTensor build_metric(const json& j, Eigen::Index q, std::optional<std::uint64_t> seed,
                                 std::uint64_t trial = 0) {
  using namespace detail;
  if (j.is_string()) {
    if (j.get<std::string>() == "euclidean") return MetricTensor::euclidean(q);
    config_error("metric: unknown metric '" + j.get<std::string>() + "'");
  }
  const std::string kind = kind_of(j, "metric");
  if (kind == "matrix") {
    check_keys(j, {"kind", "matrix"}, "metric");
    if (!j.contains("matrix")) config_error("metric.matrix missing");
    Matrix g = io::matrix_from_json(j["matrix"], ErrorKind::ConfigError, "metric.matrix");
    if (g.rows() != q) config_error("metric: dimension must equal the source dimension");
    return MetricTensor(std::move(g));
  }
  if (kind == "random_spd") {
    check_keys(j, {"kind", "shift"}, "metric");
    if (!seed) config_error("metric: random_spd needs a seed");
    Rng r = Rng::substream(*seed, "metric", trial);
    return MetricTensor(r.spd(q, positive(number_or(j, "shift", 0.1, "metric"), "metric.shift")));
  }
  config_error("metric.kind: unknown kind '" + kind + "'");
}

/// "identity", "random:SEED", or {"matrix": {...}}.
inline Rotation build_rotation(const json& j, Eigen::Index n, const std::string& where) {
  using namespace detail;
  if (n == 0) return Rotation::identity(0);
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "identity") return Rotation::identity(n);
    if (s.rfind("random:", 0) == 0) {
      std::uint64_t seed = 0;
      try {
        std::size_t used = 0;
        seed = std::stoull(s.substr(7), &used);
        if (used != s.size() - 7) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        config_error(where + ": malformed random rotation seed");
      }
      Rng r = Rng::substream(seed, where);
      return Rotation(r.rotation(n));
    }
    config_error(where + ": unknown rotation '" + s + "'");
  }
  check_keys(j, {"matrix"}, where);
  if (!j.contains("matrix")) config_error(where + ".matrix missing");
  Matrix r = io::matrix_from_json(j["matrix"], ErrorKind::ConfigError, where + ".matrix");
  if (r.rows() != n || r.cols() != n) fail(ErrorKind::NotRotation, where + ": rotation has the wrong size");
  return Rotation(std::move(r));
}

}  // namespace rcgs::harness
