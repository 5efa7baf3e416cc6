#pragma once

// System-description documents (UTF-8 JSON).
//
//   {
//     "plant":      { "A": [A_1, ..., A_N], "B1", "B2", "C1", "D1", "C2", "D2", "theta" },
//     "controller": { "modes": [{ "A", "B", "C", "D", "E" }, ...], "theta" },
//     "rates":      Pi,
//     "physical":   { "R", "Lambda": { "re", "im" }, "theta" }
//   }
//
// Every top-level key is optional, but a plant needs rates. Matrices are
// row-major nested arrays; "theta" is { "kind": "canonical" | "degenerate",
// "n": n, "degenerate_dim": n' }. Unknown keys are rejected.

#include "qhinf/qmodel.hpp"

#include <json.hpp>

#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

namespace qhinf::io {

using Json = nlohmann::ordered_json;

/// Malformed or inconsistent input document.
class DocumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void only_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw DocumentError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (ok.count(k) == 0) throw DocumentError(where + ": unknown key '" + k + "'");
}

inline const Json& need(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw DocumentError(where + ": missing key '" + key + "'");
  return j.at(key);
}

}  // namespace detail

inline Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k) == 0.0 ? 0.0 : m(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const Json& j, const std::string& where) {
  if (!j.is_array()) throw DocumentError(where + ": matrix must be an array of rows");
  const auto rows = Eigen::Index(j.size());
  Eigen::Index cols = -1;
  for (const auto& row : j) {
    if (!row.is_array()) throw DocumentError(where + ": matrix rows must be arrays");
    if (cols < 0) cols = Eigen::Index(row.size());
    if (Eigen::Index(row.size()) != cols) throw DocumentError(where + ": ragged matrix");
  }
  Matrix m(rows, std::max<Eigen::Index>(cols, 0));
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index k = 0; k < m.cols(); ++k) {
      const auto& v = j[std::size_t(i)][std::size_t(k)];
      if (!v.is_number()) throw DocumentError(where + ": matrix entries must be numbers");
      m(i, k) = v.get<double>();
    }
  return m;
}

inline Json complex_to_json(const ComplexMatrix& m) {
  Json j = Json::object();
  j["re"] = matrix_to_json(m.re);
  j["im"] = matrix_to_json(m.im);
  return j;
}

inline ComplexMatrix complex_from_json(const Json& j, const std::string& where) {
  detail::only_keys(j, {"re", "im"}, where);
  ComplexMatrix m{matrix_from_json(detail::need(j, "re", where), where + ".re"),
                  matrix_from_json(detail::need(j, "im", where), where + ".im")};
  if (m.re.rows() != m.im.rows() || m.re.cols() != m.im.cols())
    throw DocumentError(where + ": re and im parts differ in shape");
  return m;
}

inline Json theta_to_json(const CommutationMatrix& t) {
  Json j = Json::object();
  j["kind"] = t.is_canonical() ? "canonical" : "degenerate";
  j["n"] = t.n();
  if (!t.is_canonical()) j["degenerate_dim"] = t.degenerate_dim();
  return j;
}

inline CommutationMatrix theta_from_json(const Json& j, const std::string& where) {
  detail::only_keys(j, {"kind", "n", "degenerate_dim"}, where);
  const auto& kind = detail::need(j, "kind", where);
  const auto& n = detail::need(j, "n", where);
  if (!kind.is_string() || !n.is_number_integer()) throw DocumentError(where + ": bad commutation matrix");
  try {
    if (kind.get<std::string>() == "canonical") {
      if (j.contains("degenerate_dim")) throw DocumentError(where + ": degenerate_dim given for canonical kind");
      return make_commutation_matrix(n.get<int>(), CommutationKind::canonical);
    }
    if (kind.get<std::string>() == "degenerate") {
      const auto& d = detail::need(j, "degenerate_dim", where);
      if (!d.is_number_integer()) throw DocumentError(where + ": degenerate_dim must be an integer");
      return make_commutation_matrix(n.get<int>(), CommutationKind::degenerate, d.get<int>());
    }
  } catch (const DocumentError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw DocumentError(where + ": " + e.what());
  }
  throw DocumentError(where + ": kind must be 'canonical' or 'degenerate'");
}

inline Json plant_to_json(const JumpPlant& p) {
  Json j = Json::object();
  Json modes = Json::array();
  for (const auto& a : p.a_modes()) modes.push_back(matrix_to_json(a));
  j["A"] = std::move(modes);
  j["B1"] = matrix_to_json(p.b1());
  j["B2"] = matrix_to_json(p.b2());
  j["C1"] = matrix_to_json(p.c1());
  j["D1"] = matrix_to_json(p.d1());
  j["C2"] = matrix_to_json(p.c2());
  j["D2"] = matrix_to_json(p.d2());
  j["theta"] = theta_to_json(p.theta());
  return j;
}

inline Json controller_to_json(const Controller& c) {
  Json j = Json::object();
  Json modes = Json::array();
  for (const auto& m : c.mode_list()) {
    Json mj = Json::object();
    mj["A"] = matrix_to_json(m.A);
    mj["B"] = matrix_to_json(m.B);
    mj["C"] = matrix_to_json(m.C);
    mj["D"] = matrix_to_json(m.D);
    mj["E"] = matrix_to_json(m.E);
    modes.push_back(std::move(mj));
  }
  j["modes"] = std::move(modes);
  j["theta"] = theta_to_json(c.theta());
  return j;
}

inline Controller controller_from_json(const Json& j, const std::string& where = "controller") {
  detail::only_keys(j, {"modes", "theta"}, where);
  const auto& modes = detail::need(j, "modes", where);
  if (!modes.is_array() || modes.empty()) throw DocumentError(where + ".modes: expected a nonempty array");
  std::vector<ControllerMode> out;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const std::string w = where + ".modes[" + std::to_string(i) + "]";
    detail::only_keys(modes[i], {"A", "B", "C", "D", "E"}, w);
    ControllerMode m;
    m.A = matrix_from_json(detail::need(modes[i], "A", w), w + ".A");
    m.B = matrix_from_json(detail::need(modes[i], "B", w), w + ".B");
    m.C = matrix_from_json(detail::need(modes[i], "C", w), w + ".C");
    if (modes[i].contains("D")) m.D = matrix_from_json(modes[i]["D"], w + ".D");
    if (modes[i].contains("E")) m.E = matrix_from_json(modes[i]["E"], w + ".E");
    // An empty row list is a 0-column block of the right height.
    if (m.D.size() == 0) m.D.resize(m.C.rows(), 0);
    if (m.E.size() == 0) m.E.resize(m.A.rows(), 0);
    out.push_back(std::move(m));
  }
  try {
    return Controller(std::move(out), theta_from_json(detail::need(j, "theta", where), where + ".theta"));
  } catch (const DocumentError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw DocumentError(where + ": " + e.what());
  }
}

struct SystemDocument {
  std::optional<JumpPlant> plant;
  std::optional<Controller> controller;
  std::optional<TransitionRateMatrix> rates;
  std::optional<PhysicalParams> physical;
  std::optional<CommutationMatrix> physical_theta;
};

inline Json to_json(const SystemDocument& d) {
  Json j = Json::object();
  if (d.plant) j["plant"] = plant_to_json(*d.plant);
  if (d.controller) j["controller"] = controller_to_json(*d.controller);
  if (d.rates)
    j["rates"] = matrix_to_json(d.rates->matrix());
  else if (d.plant)
    j["rates"] = matrix_to_json(d.plant->rates().matrix());
  if (d.physical) {
    Json p = Json::object();
    p["R"] = matrix_to_json(d.physical->R);
    p["Lambda"] = complex_to_json(d.physical->Lambda);
    p["theta"] = theta_to_json(d.physical_theta ? *d.physical_theta : canonical_theta(int(d.physical->R.rows())));
    j["physical"] = std::move(p);
  }
  return j;
}

inline SystemDocument from_json(const Json& j) {
  detail::only_keys(j, {"plant", "controller", "rates", "physical"}, "document");
  SystemDocument d;
  try {
    if (j.contains("rates")) d.rates = TransitionRateMatrix(matrix_from_json(j["rates"], "rates"));
  } catch (const DocumentError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw DocumentError(std::string("rates: ") + e.what());
  }
  if (j.contains("plant")) {
    const auto& p = j["plant"];
    const std::string w = "plant";
    detail::only_keys(p, {"A", "B1", "B2", "C1", "D1", "C2", "D2", "theta"}, w);
    if (!d.rates) throw DocumentError("plant given without 'rates'");
    const auto& am = detail::need(p, "A", w);
    if (!am.is_array() || am.empty()) throw DocumentError("plant.A: expected a nonempty array of matrices");
    std::vector<Matrix> a;
    for (std::size_t i = 0; i < am.size(); ++i) a.push_back(matrix_from_json(am[i], "plant.A[" + std::to_string(i) + "]"));
    auto get = [&](const char* k) { return matrix_from_json(detail::need(p, k, w), w + "." + k); };
    try {
      d.plant.emplace(std::move(a), get("B1"), get("B2"), get("C1"), get("D1"), get("C2"), get("D2"),
                      theta_from_json(detail::need(p, "theta", w), "plant.theta"), *d.rates);
    } catch (const DocumentError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw DocumentError(std::string("plant: ") + e.what());
    }
  }
  if (j.contains("controller")) d.controller = controller_from_json(j["controller"]);
  if (j.contains("physical")) {
    const auto& p = j["physical"];
    detail::only_keys(p, {"R", "Lambda", "theta"}, "physical");
    PhysicalParams pp{matrix_from_json(detail::need(p, "R", "physical"), "physical.R"),
                      complex_from_json(detail::need(p, "Lambda", "physical"), "physical.Lambda")};
    d.physical_theta = p.contains("theta") ? theta_from_json(p["theta"], "physical.theta")
                                           : canonical_theta(int(pp.R.rows()));
    d.physical = std::move(pp);
  }
  return d;
}

/// Canonical text form: two-space indentation and a trailing newline.
inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

inline Json parse_text(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw DocumentError(source + ": " + e.what());
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DocumentError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline SystemDocument load_document(const std::string& path) { return from_json(parse_text(read_file(path), path)); }

}  // namespace qhinf::io
