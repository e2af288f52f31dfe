#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "lindyn/dynamics.hpp"
#include "lindyn/mdp.hpp"
#include "lindyn/spectral.hpp"
#include "lindyn/verifier.hpp"

namespace lindyn {

using Json = nlohmann::json;

// Doubles are written in nlohmann's shortest round-trip form, so every
// finite value reads back bit for bit. Non-finite values become null.

namespace detail {

inline Json number(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline double read_number(const Json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!j.is_number()) fail(Errc::parse_error, "expected a number");
  return j.get<double>();
}

inline Json row_major(const Matrix& m) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) a.push_back(number(m(i, j)));
  return a;
}

inline Json array_of(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
  return a;
}

inline const Json& field(const Json& j, const char* key) {
  if (!j.is_object()) fail(Errc::parse_error, "expected a JSON object");
  auto it = j.find(key);
  if (it == j.end()) fail(Errc::parse_error, std::string("missing key '") + key + "'");
  return *it;
}

inline Eigen::Index read_size(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_number_integer() || v.get<long long>() < 0) fail(Errc::parse_error, std::string("'") + key + "' must be a nonnegative integer");
  return static_cast<Eigen::Index>(v.get<long long>());
}

inline Matrix read_matrix(const Json& j, const char* key, Eigen::Index rows, Eigen::Index cols) {
  const Json& a = field(j, key);
  if (!a.is_array() || static_cast<Eigen::Index>(a.size()) != rows * cols)
    fail(Errc::parse_error, std::string("'") + key + "' must be an array of " + std::to_string(rows * cols) + " numbers");
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = read_number(a[static_cast<std::size_t>(i * cols + c)]);
  return m;
}

inline Vector read_vector(const Json& j, const char* key, Eigen::Index size) {
  return read_matrix(j, key, size, 1).col(0);
}

}  // namespace detail

inline Json to_json(const MarkovProcess& p) {
  return Json{{"n", p.n()}, {"gamma", p.gamma()}, {"P", detail::row_major(p.P())}, {"r", detail::array_of(p.r())}};
}

/// Parses and validates (validate_process) a serialized process.
inline MarkovProcess process_from_json(const Json& j) {
  const Eigen::Index n = detail::read_size(j, "n");
  if (n < 1) fail(Errc::invalid_argument, "state count must be at least 1");
  if (n > kMaxStates) fail(Errc::too_large, "state count exceeds 4096");
  return validate_process(detail::read_matrix(j, "P", n, n), detail::read_vector(j, "r", n),
                          detail::read_number(detail::field(j, "gamma")));
}

inline Json to_json(const ObservationMap& o) {
  return Json{{"n", o.n()}, {"O", detail::row_major(o.O())}, {"condition_number", detail::number(o.condition_number())}};
}

inline ObservationMap observation_from_json(const Json& j) {
  const Eigen::Index n = detail::read_size(j, "n");
  return ObservationMap::from_matrix(detail::read_matrix(j, "O", n, n));
}

inline Json to_json(const Representation& r) {
  Json j{{"n", r.n()},
         {"k", r.k()},
         {"Phi", detail::row_major(r.Phi)},
         {"F", detail::row_major(r.F)},
         {"Psi", detail::row_major(r.Psi)},
         {"Vhat", detail::array_of(r.Vhat)}};
  if (r.rhat) j["rhat"] = detail::array_of(*r.rhat);
  return j;
}

/// Empty F, Psi or Vhat arrays load as empty matrices.
inline Representation representation_from_json(const Json& j) {
  const Eigen::Index n = detail::read_size(j, "n");
  const Eigen::Index k = detail::read_size(j, "k");
  auto sized = [&](const char* key, Eigen::Index rows, Eigen::Index cols) {
    return detail::field(j, key).empty() ? Matrix(0, 0) : detail::read_matrix(j, key, rows, cols);
  };
  Representation r;
  r.Phi = detail::read_matrix(j, "Phi", n, k);
  r.F = sized("F", k, k);
  r.Psi = sized("Psi", k, n);
  r.Vhat = detail::field(j, "Vhat").empty() ? Vector(0) : detail::read_vector(j, "Vhat", k);
  if (j.contains("rhat")) r.rhat = detail::read_vector(j, "rhat", k);
  return r;
}

inline Json to_json(const SpectralSummary& s) {
  Json ev = Json::array();
  for (Eigen::Index i = 0; i < s.eigenvalues.size(); ++i)
    ev.push_back(Json::array({detail::number(s.eigenvalues(i).real()), detail::number(s.eigenvalues(i).imag())}));
  return Json{{"n", s.n()},
              {"eigenvalues", ev},
              {"eigenvectors", detail::row_major(s.eigenvectors)},
              {"singular_values", detail::array_of(s.singular_values)},
              {"left_singular", detail::row_major(s.left_singular)},
              {"right_singular", detail::row_major(s.right_singular)},
              {"is_real_diagonalizable", s.is_real_diagonalizable}};
}

inline SpectralSummary spectral_from_json(const Json& j) {
  const Eigen::Index n = detail::read_size(j, "n");
  SpectralSummary s;
  const Json& ev = detail::field(j, "eigenvalues");
  if (!ev.is_array() || static_cast<Eigen::Index>(ev.size()) != n) fail(Errc::parse_error, "'eigenvalues' must hold n pairs");
  s.eigenvalues = ComplexVector(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Json& pair = ev[static_cast<std::size_t>(i)];
    if (!pair.is_array() || pair.size() != 2) fail(Errc::parse_error, "eigenvalue entries must be [re, im]");
    s.eigenvalues(i) = {detail::read_number(pair[0]), detail::read_number(pair[1])};
  }
  s.eigenvectors = detail::read_matrix(j, "eigenvectors", n, n);
  s.singular_values = detail::read_vector(j, "singular_values", n);
  s.left_singular = detail::read_matrix(j, "left_singular", n, n);
  s.right_singular = detail::read_matrix(j, "right_singular", n, n);
  const Json& flag = detail::field(j, "is_real_diagonalizable");
  if (!flag.is_boolean()) fail(Errc::parse_error, "'is_real_diagonalizable' must be a boolean");
  s.is_real_diagonalizable = flag.get<bool>();
  return s;
}

/// runtime_ms is deliberately left out so that reports of identical runs
/// are byte-identical.
inline Json to_json(const CheckReport& r) {
  Json measured = Json::object();
  for (const auto& [key, value] : r.measured) measured[key] = detail::number(value);
  return Json{{"check_id", r.check_id},
              {"hypothesis_params", r.hypothesis_params},
              {"measured", measured},
              {"threshold", detail::number(r.threshold)},
              {"passed", r.passed()},
              {"status", to_string(r.status)},
              {"note", r.note}};
}

inline CheckReport report_from_json(const Json& j) {
  CheckReport r;
  r.check_id = detail::field(j, "check_id").get<std::string>();
  r.hypothesis_params = detail::field(j, "hypothesis_params").get<std::map<std::string, std::string>>();
  for (const auto& [key, value] : detail::field(j, "measured").items()) r.measured[key] = detail::read_number(value);
  r.threshold = detail::read_number(detail::field(j, "threshold"));
  const std::string status = detail::field(j, "status").get<std::string>();
  if (status == "passed") r.status = CheckStatus::passed;
  else if (status == "failed") r.status = CheckStatus::failed;
  else if (status == "not_applicable") r.status = CheckStatus::not_applicable;
  else fail(Errc::parse_error, "unknown status '" + status + "'");
  r.note = detail::field(j, "note").get<std::string>();
  return r;
}

inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string trajectory_csv(const Trajectory& t) {
  std::string out = "step,loss,grad_norm,dist_top_eig,dist_top_sv,value_error,collapse_min_sv\n";
  for (const auto& r : t.records) {
    out += std::to_string(r.step);
    for (double x : {r.loss, r.grad_norm, r.dist_top_eig, r.dist_top_sv, r.value_error, r.collapse_min_sv})
      out += "," + format_double(x);
    out += "\n";
  }
  return out;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io_error, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io_error, "cannot write " + path.string());
  out << text;
  if (!out) fail(Errc::io_error, "write failed for " + path.string());
}

inline Json parse_json(const std::string& text, const std::string& origin = "input") {
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    fail(Errc::parse_error, origin + ": " + e.what());
  }
}

inline Json read_json_file(const std::filesystem::path& path) { return parse_json(read_text_file(path), path.string()); }

inline void write_json_file(const std::filesystem::path& path, const Json& j) { write_text_file(path, j.dump(2) + "\n"); }

}  // namespace lindyn
