#pragma once

#include "rcgs/errors.hpp"
#include "rcgs/linalg.hpp"
#include "rcgs/random.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace rcgs::io {

using json = nlohmann::json;

// Matrices are written row-major with explicit shape fields. nlohmann/json
// prints doubles in a round-trip-exact form.

inline json matrix_to_json(const Matrix& m) {
  json data = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline json complex_matrix_to_json(const ComplexMatrix& m) {
  json re = json::array(), im = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      re.push_back(m(i, j).real());
      im.push_back(m(i, j).imag());
    }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"re", std::move(re)}, {"im", std::move(im)}};
}

inline json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline json complex_vector_to_json(const ComplexVector& v) {
  json re = json::array(), im = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    re.push_back(v[i].real());
    im.push_back(v[i].imag());
  }
  return {{"re", std::move(re)}, {"im", std::move(im)}};
}

inline Vector vector_from_json(const json& j, ErrorKind kind, const std::string& where) {
  if (!j.is_array() || j.empty()) fail(kind, where + ": expected a nonempty array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) fail(kind, where + ": expected numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

inline Matrix matrix_from_json(const json& j, ErrorKind kind, const std::string& where) {
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data"))
    fail(kind, where + ": matrix needs rows, cols and data");
  for (const auto& [key, _] : j.items())
    if (key != "rows" && key != "cols" && key != "data") fail(kind, where + ": unknown matrix key '" + key + "'");
  if (!j["rows"].is_number_integer() || !j["cols"].is_number_integer())
    fail(kind, where + ": rows and cols must be integers");
  const auto rows = j["rows"].get<long>(), cols = j["cols"].get<long>();
  const json& data = j["data"];
  if (rows < 0 || cols < 0 || !data.is_array() || data.size() != static_cast<std::size_t>(rows * cols))
    fail(kind, where + ": data length does not match shape");
  Matrix m(rows, cols);
  for (long i = 0; i < rows; ++i)
    for (long c = 0; c < cols; ++c) {
      const json& x = data[static_cast<std::size_t>(i * cols + c)];
      if (!x.is_number()) fail(kind, where + ": expected numbers");
      m(i, c) = x.get<double>();
    }
  return m;
}

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Deterministic text form used for hashing: compact dump with sorted keys.
inline std::string canonical(const json& j) { return j.dump(); }

inline std::string content_hash(const json& j) { return hex64(fnv1a64(canonical(j))); }

/// Checksum of a record, computed with its "checksum" field removed.
inline std::string record_checksum(json record) {
  record.erase("checksum");
  return content_hash(record);
}

inline void seal(json& record) { record["checksum"] = record_checksum(record); }

/// Write to a sibling temporary file and rename over the destination.
inline void write_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::ConfigError, "cannot write " + tmp.string());
    out << contents;
    if (!out) fail(ErrorKind::ConfigError, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void write_json(const std::filesystem::path& path, const json& j) { write_atomic(path, j.dump(2) + "\n"); }

inline std::string read_file(const std::filesystem::path& path, ErrorKind kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(kind, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json parse_json(const std::string& text, ErrorKind kind, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(kind, where + ": " + e.what());
  }
}

/// Shortest round-trip decimal for CSV cells (same formatter as the JSON output).
inline std::string number(double x) { return json(x).dump(); }

class CsvWriter {
 public:
  explicit CsvWriter(const std::vector<std::string>& header) { row(header); }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) text_ += ',';
      text_ += cells[i];
    }
    text_ += '\n';
  }

  const std::string& str() const { return text_; }
  void save(const std::filesystem::path& path) const { write_atomic(path, text_); }

 private:
  std::string text_;
};

}  // namespace rcgs::io
