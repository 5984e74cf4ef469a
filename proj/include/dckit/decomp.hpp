#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "dckit/dca.hpp"
#include "dckit/errors.hpp"
#include "dckit/funcs.hpp"
#include "dckit/sets.hpp"

namespace dckit {

namespace detail {

inline bool is_affine(const SmoothConvexFunction& f) {
  return std::all_of(f.terms().begin(), f.terms().end(), [](const Term& t) {
    if (std::holds_alternative<Affine>(t.atom)) return true;
    if (const auto* q = std::get_if<Quadratic>(&t.atom)) return q->Q.size() == 0 || q->Q.isZero(0.0);
    return false;
  });
}

}  // namespace detail

enum class Curvature { Convex, Concave };

inline const char* to_string(Curvature c) { return c == Curvature::Convex ? "cvx" : "cve"; }

/// f_{i,j} = F for a cvx term and f_{i,j} = -F for a cve term, F convex.
/// `negated` records how F was stored and must agree with the tag unless F is affine.
struct BivariateTerm {
  Curvature tag = Curvature::Convex;
  SmoothConvexFunction F;
  bool negated = false;
  std::vector<double> h;  // h_{i,j}(lambda) for each lambda in Lambda_i

  double f_value(const Vector& x) const { return tag == Curvature::Convex ? F.value(x) : -F.value(x); }
};

struct BivariateAgent {
  std::vector<Vector> Lambda;
  std::vector<BivariateTerm> terms;
};

struct BivariateModel {
  std::vector<BivariateAgent> agents;
  Polyhedron X;

  Index dim() const { return X.dim(); }

  void validate() const {
    if (agents.empty()) throw InvalidParams("a bivariate model needs at least one agent");
    for (std::size_t i = 0; i < agents.size(); ++i) {
      const BivariateAgent& a = agents[i];
      const std::string who = "agent " + std::to_string(i);
      if (a.Lambda.empty()) throw InvalidParams(who + ": Lambda must be a nonempty finite list");
      for (const Vector& l : a.Lambda) {
        if (l.size() != a.Lambda.front().size()) throw InvalidParams(who + ": Lambda points differ in dimension");
      }
      if (a.terms.empty()) throw InvalidParams(who + ": no terms");
      for (std::size_t j = 0; j < a.terms.size(); ++j) {
        const BivariateTerm& t = a.terms[j];
        const std::string term = who + " term " + std::to_string(j);
        if (t.F.dim() != dim()) throw InvalidParams(term + ": dimension does not match X");
        if (t.h.size() != a.Lambda.size()) throw InvalidParams(term + ": need one h value per Lambda point");
        for (double v : t.h) {
          if (!std::isfinite(v)) throw InvalidParams(term + ": h values must be finite");
        }
        const bool expect_negated = t.tag == Curvature::Concave;
        if (t.negated != expect_negated && !detail::is_affine(t.F)) {
          throw CurvatureMismatch(term + ": tagged " + to_string(t.tag) + " but stored " +
                                  (t.negated ? "negated" : "as is") + " with curvature");
        }
      }
    }
  }
};

struct ExtremalWeights {
  std::vector<std::vector<double>> rho_max;  // [i][j]
  std::vector<std::vector<double>> rho_min;
};

inline ExtremalWeights extremal_weights(const BivariateModel& m) {
  ExtremalWeights w;
  for (const auto& a : m.agents) {
    std::vector<double> hi;
    std::vector<double> lo;
    for (const auto& t : a.terms) {
      if (t.h.empty()) throw InvalidParams("term without h values");
      const auto [mn, mx] = std::minmax_element(t.h.begin(), t.h.end());
      hi.push_back(*mx);
      lo.push_back(*mn);
    }
    w.rho_max.push_back(std::move(hi));
    w.rho_min.push_back(std::move(lo));
  }
  return w;
}

inline double theta_bruteforce(const BivariateModel& m, const Vector& x) {
  double total = 0.0;
  for (const auto& a : m.agents) {
    std::vector<double> f(a.terms.size());
    for (std::size_t j = 0; j < a.terms.size(); ++j) f[j] = a.terms[j].f_value(x);
    double best = -kInf;
    for (std::size_t l = 0; l < a.Lambda.size(); ++l) {
      double s = 0.0;
      for (std::size_t j = 0; j < a.terms.size(); ++j) s += a.terms[j].h[l] * f[j];
      best = std::max(best, s);
    }
    total += best;
  }
  return total;
}

struct IndexSets {
  std::vector<int> minus_cvx;  // cvx, rho_min <= 0: rho_min f goes to u
  std::vector<int> plus_cvx;   // cvx, rho_min > 0: rho_min f goes to v
  std::vector<int> plus_cve;   // cve, rho_max >= 0: rho_max f goes to u
  std::vector<int> minus_cve;  // cve, rho_max < 0: rho_max f goes to v
};

/// theta = u + v with u = -neg_u (concave, smooth) and
/// v = v_smooth + sum_i max_lambda g_pieces[i][lambda] (convex).
struct DcDecomposition {
  SmoothConvexFunction neg_u;
  SmoothConvexFunction v_smooth;
  std::vector<PiecewiseMaxConvex> v_max;
  std::vector<IndexSets> index_sets;
  ExtremalWeights weights;

  double u(const Vector& x) const { return -neg_u.value(x); }
  double v(const Vector& x) const {
    double s = v_smooth.value(x);
    for (const auto& g : v_max) s += g.value(x);
    return s;
  }
  double theta(const Vector& x) const { return u(x) + v(x); }
  std::size_t piece_count() const {
    std::size_t n = 0;
    for (const auto& g : v_max) n += g.size();
    return n;
  }
};

struct DecompositionResult {
  DcDecomposition decomposition;
  DcProgram program;  // minimizes -theta over X
};

inline DecompositionResult build_dc(const BivariateModel& m) {
  m.validate();
  const Index n = m.dim();
  DcDecomposition d;
  d.weights = extremal_weights(m);
  d.neg_u = SmoothConvexFunction::zero(n);
  d.v_smooth = SmoothConvexFunction::zero(n);

  for (std::size_t i = 0; i < m.agents.size(); ++i) {
    const BivariateAgent& a = m.agents[i];
    const auto& rmax = d.weights.rho_max[i];
    const auto& rmin = d.weights.rho_min[i];
    IndexSets sets;
    for (std::size_t j = 0; j < a.terms.size(); ++j) {
      const BivariateTerm& t = a.terms[j];
      const int jj = static_cast<int>(j);
      if (t.tag == Curvature::Convex) {
        if (rmin[j] <= 0.0) {
          sets.minus_cvx.push_back(jj);
          d.neg_u += t.F.scaled(-rmin[j]);
        } else {
          sets.plus_cvx.push_back(jj);
          d.v_smooth += t.F.scaled(rmin[j]);
        }
      } else {
        if (rmax[j] >= 0.0) {
          sets.plus_cve.push_back(jj);
          d.neg_u += t.F.scaled(rmax[j]);
        } else {
          sets.minus_cve.push_back(jj);
          d.v_smooth += t.F.scaled(-rmax[j]);
        }
      }
    }

    // maximand for lambda: sum_cvx (h - rho_min) F + sum_cve (rho_max - h) F
    std::vector<SmoothConvexFunction> pieces;
    pieces.reserve(a.Lambda.size());
    for (std::size_t l = 0; l < a.Lambda.size(); ++l) {
      SmoothConvexFunction g = SmoothConvexFunction::zero(n);
      for (std::size_t j = 0; j < a.terms.size(); ++j) {
        const BivariateTerm& t = a.terms[j];
        const double w = t.tag == Curvature::Convex ? t.h[l] - rmin[j] : rmax[j] - t.h[l];
        g += t.F.scaled(std::max(0.0, w));
      }
      pieces.push_back(std::move(g));
    }
    d.v_max.emplace_back(std::move(pieces));
    d.index_sets.push_back(std::move(sets));
  }

  // -theta = neg_u - v: phi = neg_u, varphi = v_smooth + sum_i g_i
  DcProgram P;
  P.phi = ConvexFunction(d.neg_u);
  P.X = m.X;
  for (std::size_t i = 0; i < d.v_max.size(); ++i) {
    std::vector<SmoothConvexFunction> group = d.v_max[i].pieces();
    if (i == 0) {
      for (auto& g : group) g += d.v_smooth;
    }
    P.groups.push_back(std::move(group));
  }
  P.validate();
  return DecompositionResult{std::move(d), std::move(P)};
}

}  // namespace dckit
