#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dckit/certify.hpp"
#include "dckit/consensus.hpp"
#include "dckit/dca.hpp"
#include "dckit/dcc.hpp"
#include "dckit/decomp.hpp"
#include "dckit/errors.hpp"
#include "dckit/funcs.hpp"
#include "dckit/sets.hpp"

namespace dckit::io {

using json = nlohmann::json;

/// A problem file: the objective, and optionally one dc constraint.
struct Problem {
  DcProgram program;
  std::optional<DcConstraint> constraint;

  ConstrainedDcProgram constrained() const {
    if (!constraint) throw InvalidParams("problem has no dc constraint");
    return ConstrainedDcProgram{program, *constraint};
  }
};

namespace detail {

[[noreturn]] inline void fail(const std::string& path, const std::string& what) {
  throw SchemaError(path + ": " + what);
}

inline const json& field(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) fail(path + "." + key, "missing");
  return *it;
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

inline double bound(const json& j, const std::string& path, double if_null) {
  if (j.is_null()) return if_null;
  return number(j, path);
}

inline Vector vector(const json& j, const std::string& path, Index expect = -1) {
  if (!j.is_array()) fail(path, "expected an array of numbers");
  if (expect >= 0 && static_cast<Index>(j.size()) != expect) {
    fail(path, "expected length " + std::to_string(expect) + ", got " + std::to_string(j.size()));
  }
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Index>(i)] = number(j[i], path + "[" + std::to_string(i) + "]");
  return v;
}

inline Matrix matrix(const json& j, const std::string& path, Index cols) {
  if (!j.is_array()) fail(path, "expected an array of rows");
  Matrix M(static_cast<Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    M.row(static_cast<Index>(r)) = vector(j[r], path + "[" + std::to_string(r) + "]", cols).transpose();
  }
  return M;
}

inline json to_json(const Vector& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline json to_json(const Matrix& M) {
  json a = json::array();
  for (Index r = 0; r < M.rows(); ++r) a.push_back(to_json(Vector(M.row(r).transpose())));
  return a;
}

inline json bound_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace detail

// ---- atoms and functions ----

inline json to_json(const Term& t) {
  json j = std::visit(
      [](const auto& a) -> json {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, Affine>) {
          return {{"type", "affine"}, {"a", detail::to_json(a.a)}, {"b", a.b}};
        } else if constexpr (std::is_same_v<T, Quadratic>) {
          return {{"type", "quadratic"}, {"Q", detail::to_json(a.Q)}, {"c", detail::to_json(a.c)}, {"d", a.d}};
        } else if constexpr (std::is_same_v<T, NegLogAffine>) {
          return {{"type", "neglog"}, {"a", detail::to_json(a.a)}, {"b", a.b}};
        } else {
          return {{"type", "power"}, {"a", detail::to_json(a.a)}, {"b", a.b}, {"p", a.p}};
        }
      },
      t.atom);
  if (t.weight != 1.0) j["weight"] = t.weight;
  return j;
}

inline json to_json(const SmoothConvexFunction& f) {
  json a = json::array();
  for (const Term& t : f.terms()) a.push_back(to_json(t));
  return a;
}

inline json to_json(const ConvexFunction& f) {
  if (!f.has_max_part()) return to_json(f.smooth());
  json pieces = json::array();
  for (const auto& p : f.max_part()->pieces()) pieces.push_back(to_json(p));
  return {{"smooth", to_json(f.smooth())}, {"max", pieces}};
}

inline Atom atom_from_json(const json& j, Index n, const std::string& path) {
  const json& type = detail::field(j, "type", path);
  if (!type.is_string()) detail::fail(path + ".type", "expected a string");
  const std::string t = type.get<std::string>();
  try {
    if (t == "affine") {
      return make_affine(detail::vector(detail::field(j, "a", path), path + ".a", n),
                         detail::number(detail::field(j, "b", path), path + ".b"));
    }
    if (t == "quadratic") {
      return make_quadratic(detail::matrix(detail::field(j, "Q", path), path + ".Q", n),
                            detail::vector(detail::field(j, "c", path), path + ".c", n),
                            detail::number(detail::field(j, "d", path), path + ".d"));
    }
    if (t == "neglog") {
      return make_neg_log(detail::vector(detail::field(j, "a", path), path + ".a", n),
                          detail::number(detail::field(j, "b", path), path + ".b"));
    }
    if (t == "power") {
      const json& p = detail::field(j, "p", path);
      if (!p.is_number_integer()) detail::fail(path + ".p", "expected an integer");
      return make_even_power(detail::vector(detail::field(j, "a", path), path + ".a", n),
                             detail::number(detail::field(j, "b", path), path + ".b"), p.get<int>());
    }
  } catch (const InvalidParams& e) {
    detail::fail(path, e.what());
  }
  detail::fail(path + ".type", "unknown atom type '" + t + "'");
}

/// A single atom object or an array of atoms (their sum).
inline SmoothConvexFunction smooth_from_json(const json& j, Index n, const std::string& path) {
  SmoothConvexFunction f(n);
  if (!(j.is_array() || (j.is_object() && j.contains("type")))) {
    detail::fail(path, "expected an atom or an array of atoms");
  }
  const json arr = j.is_object() ? json::array({j}) : j;
  for (std::size_t k = 0; k < arr.size(); ++k) {
    const std::string p = j.is_object() ? path : path + "[" + std::to_string(k) + "]";
    double w = 1.0;
    if (arr[k].is_object() && arr[k].contains("weight")) w = detail::number(arr[k]["weight"], p + ".weight");
    if (!(w >= 0.0) || !std::isfinite(w)) detail::fail(p + ".weight", "must be finite and nonnegative");
    f.add_term(w, atom_from_json(arr[k], n, p));
  }
  return f;
}

/// Smooth form, or {"smooth": f, "max": [f, ...]}.
inline ConvexFunction convex_from_json(const json& j, Index n, const std::string& path) {
  if (j.is_object() && !j.contains("type")) {
    SmoothConvexFunction s = j.contains("smooth") ? smooth_from_json(j["smooth"], n, path + ".smooth")
                                                  : SmoothConvexFunction::zero(n);
    if (!j.contains("max")) return ConvexFunction(std::move(s));
    const json& m = j["max"];
    if (!m.is_array() || m.empty()) detail::fail(path + ".max", "expected a nonempty array of functions");
    std::vector<SmoothConvexFunction> pieces;
    for (std::size_t k = 0; k < m.size(); ++k) {
      pieces.push_back(smooth_from_json(m[k], n, path + ".max[" + std::to_string(k) + "]"));
    }
    return ConvexFunction(std::move(s), PiecewiseMaxConvex(std::move(pieces)));
  }
  return ConvexFunction(smooth_from_json(j, n, path));
}

inline std::vector<SmoothConvexFunction> pieces_from_json(const json& j, Index n, const std::string& path) {
  if (!j.is_array() || j.empty()) detail::fail(path, "expected a nonempty array of pieces");
  std::vector<SmoothConvexFunction> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(smooth_from_json(j[k], n, path + "[" + std::to_string(k) + "]"));
  return out;
}

inline json pieces_to_json(const std::vector<SmoothConvexFunction>& pieces) {
  json a = json::array();
  for (const auto& p : pieces) a.push_back(to_json(p));
  return a;
}

// ---- polyhedron ----

inline json to_json(const Polyhedron& X) {
  json lo = json::array();
  json hi = json::array();
  for (Index i = 0; i < X.dim(); ++i) {
    lo.push_back(detail::bound_json(X.lower()[i]));
    hi.push_back(detail::bound_json(X.upper()[i]));
  }
  json j{{"lower", lo}, {"upper", hi}};
  if (X.A().rows() > 0) {
    j["A"] = detail::to_json(X.A());
    j["b"] = detail::to_json(X.b());
  }
  return j;
}

inline Polyhedron polyhedron_from_json(const json& j, Index n, const std::string& path) {
  if (j.is_null()) return Polyhedron::whole_space(n);
  if (!j.is_object()) detail::fail(path, "expected an object");
  Vector lo = Vector::Constant(n, -kInf);
  Vector hi = Vector::Constant(n, kInf);
  for (const char* key : {"lower", "upper"}) {
    if (!j.contains(key)) continue;
    const json& b = j[key];
    const std::string p = path + "." + key;
    if (!b.is_array() || static_cast<Index>(b.size()) != n) detail::fail(p, "expected " + std::to_string(n) + " entries");
    const bool lower = std::string(key) == "lower";
    for (Index i = 0; i < n; ++i) {
      (lower ? lo : hi)[i] = detail::bound(b[i], p + "[" + std::to_string(i) + "]", lower ? -kInf : kInf);
    }
  }
  Matrix A(0, n);
  Vector b(0);
  if (j.contains("A") || j.contains("b")) {
    A = detail::matrix(detail::field(j, "A", path), path + ".A", n);
    b = detail::vector(detail::field(j, "b", path), path + ".b", A.rows());
  }
  try {
    return Polyhedron(lo, hi, A, b);
  } catch (const Error& e) {
    detail::fail(path, e.what());
  }
}

// ---- problems ----

inline json to_json(const DcProgram& P, const std::optional<DcConstraint>& c = std::nullopt) {
  json groups = json::array();
  for (const auto& g : P.groups) groups.push_back(pieces_to_json(g));
  json j{{"dim", P.dim()}, {"phi", to_json(P.phi)}, {"groups", groups}, {"X", to_json(P.X)}};
  if (c) j["constraint"] = {{"phi", to_json(c->phi_c)}, {"pieces", pieces_to_json(c->pieces)}};
  return j;
}

inline json to_json(const ConstrainedDcProgram& C) { return to_json(C.base, C.constraint); }

inline Problem problem_from_json(const json& j) {
  const std::string root = "$";
  const json& d = detail::field(j, "dim", root);
  if (!d.is_number_integer() || d.get<long long>() < 1) detail::fail("$.dim", "expected a positive integer");
  const Index n = d.get<Index>();
  Problem pr;
  pr.program.X = polyhedron_from_json(j.contains("X") ? j["X"] : json(nullptr), n, "$.X");
  pr.program.phi = j.contains("phi") ? convex_from_json(j["phi"], n, "$.phi") : ConvexFunction(SmoothConvexFunction::zero(n));
  const json& groups = detail::field(j, "groups", root);
  if (!groups.is_array() || groups.empty()) detail::fail("$.groups", "expected a nonempty array of piece groups");
  for (std::size_t g = 0; g < groups.size(); ++g) {
    pr.program.groups.push_back(pieces_from_json(groups[g], n, "$.groups[" + std::to_string(g) + "]"));
  }
  if (j.contains("constraint") && !j["constraint"].is_null()) {
    const json& c = j["constraint"];
    pr.constraint = DcConstraint{convex_from_json(detail::field(c, "phi", "$.constraint"), n, "$.constraint.phi"),
                                 pieces_from_json(detail::field(c, "pieces", "$.constraint"), n, "$.constraint.pieces")};
  }
  try {
    pr.program.validate();
    if (pr.constraint) pr.constraint->validate(n);
  } catch (const InvalidParams& e) {
    detail::fail(root, e.what());
  }
  return pr;
}

// ---- bivariate models ----

inline json to_json(const BivariateModel& m) {
  json agents = json::array();
  for (const auto& a : m.agents) {
    json lam = json::array();
    for (const auto& l : a.Lambda) lam.push_back(detail::to_json(l));
    json terms = json::array();
    for (const auto& t : a.terms) {
      terms.push_back({{"tag", to_string(t.tag)}, {"F", to_json(t.F)}, {"negated", t.negated}, {"h", t.h}});
    }
    agents.push_back({{"Lambda", lam}, {"terms", terms}});
  }
  return {{"dim", m.dim()}, {"X", to_json(m.X)}, {"agents", agents}};
}

/// Each term stores a convex F; a "cve" term means f = -F and defaults to negated = true.
inline BivariateModel model_from_json(const json& j) {
  const json& d = detail::field(j, "dim", "$");
  if (!d.is_number_integer() || d.get<long long>() < 1) detail::fail("$.dim", "expected a positive integer");
  const Index n = d.get<Index>();
  BivariateModel m;
  m.X = polyhedron_from_json(j.contains("X") ? j["X"] : json(nullptr), n, "$.X");
  const json& agents = detail::field(j, "agents", "$");
  if (!agents.is_array() || agents.empty()) detail::fail("$.agents", "expected a nonempty array");
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const std::string p = "$.agents[" + std::to_string(i) + "]";
    BivariateAgent a;
    const json& lam = detail::field(agents[i], "Lambda", p);
    if (!lam.is_array() || lam.empty()) detail::fail(p + ".Lambda", "expected a nonempty finite list of points");
    for (std::size_t l = 0; l < lam.size(); ++l) {
      a.Lambda.push_back(detail::vector(lam[l], p + ".Lambda[" + std::to_string(l) + "]"));
    }
    const json& terms = detail::field(agents[i], "terms", p);
    if (!terms.is_array() || terms.empty()) detail::fail(p + ".terms", "expected a nonempty array");
    for (std::size_t k = 0; k < terms.size(); ++k) {
      const std::string tp = p + ".terms[" + std::to_string(k) + "]";
      const json& tag = detail::field(terms[k], "tag", tp);
      if (tag != "cvx" && tag != "cve") detail::fail(tp + ".tag", "expected \"cvx\" or \"cve\"");
      BivariateTerm t;
      t.tag = tag == "cvx" ? Curvature::Convex : Curvature::Concave;
      t.F = smooth_from_json(detail::field(terms[k], "F", tp), n, tp + ".F");
      t.negated = t.tag == Curvature::Concave;
      if (terms[k].contains("negated")) {
        if (!terms[k]["negated"].is_boolean()) detail::fail(tp + ".negated", "expected a boolean");
        t.negated = terms[k]["negated"].get<bool>();
      }
      const Vector h = detail::vector(detail::field(terms[k], "h", tp), tp + ".h", static_cast<Index>(lam.size()));
      t.h.assign(h.data(), h.data() + h.size());
      a.terms.push_back(std::move(t));
    }
    m.agents.push_back(std::move(a));
  }
  return m;
}

// ---- reports ----

inline json to_json(const Certificate& c) {
  json j{{"kind", to_string(c.kind)}, {"verdict", to_string(c.verdict)}, {"residual", c.residual},
         {"cq_verified", c.cq_verified}};
  if (c.witness.size() > 0) j["witness"] = detail::to_json(c.witness);
  if (!c.note.empty()) j["note"] = c.note;
  return j;
}

inline json to_json(const SolveReport& r) {
  json j{{"method", r.method},
         {"x", detail::to_json(r.x)},
         {"zeta", r.zeta},
         {"termination", to_string(r.termination)},
         {"iterations", r.iterations},
         {"start_projected", r.start_projected},
         {"fallbacks", r.fallbacks}};
  if (!std::isnan(r.constraint_residual)) j["constraint_residual"] = r.constraint_residual;
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

inline json to_json(const DcDecomposition& d) {
  json sets = json::array();
  for (const auto& s : d.index_sets) {
    sets.push_back({{"minus_cvx", s.minus_cvx}, {"plus_cvx", s.plus_cvx}, {"plus_cve", s.plus_cve},
                    {"minus_cve", s.minus_cve}});
  }
  json counts = json::array();
  for (const auto& g : d.v_max) counts.push_back(g.size());
  return {{"rho_max", d.weights.rho_max},
          {"rho_min", d.weights.rho_min},
          {"index_sets", sets},
          {"pieces_per_agent", counts},
          {"piece_count", d.piece_count()},
          {"u_terms", d.neg_u.terms().size()},
          {"v_smooth_terms", d.v_smooth.terms().size()}};
}

// ---- files ----

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::ios_base::failure("cannot write " + path);
  out << text;
  if (!out) throw std::ios_base::failure("write failed for " + path);
}

}  // namespace dckit::io
