#pragma once

// dc-constrained dc programs: minimize zeta(x) over {x in X : phi_c(x) - max_j psi_{c,j}(x) <= 0}.
// Constraint merging, the pointwise Slater check, B-stationarity certificates,
// the feasible-start method over the convex inner sets Y^j and the penalty scheme.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "dckit/certify.hpp"
#include "dckit/dca.hpp"
#include "dckit/errors.hpp"
#include "dckit/funcs.hpp"
#include "dckit/parallel.hpp"
#include "dckit/sets.hpp"
#include "dckit/subsolver.hpp"

namespace dckit {

/// phi_c(x) - max_j pieces_j(x) <= 0
struct DcConstraint {
  ConvexFunction phi_c;
  std::vector<SmoothConvexFunction> pieces;

  Index dim() const { return phi_c.dim(); }
  PiecewiseMaxConvex varphi() const { return PiecewiseMaxConvex(pieces); }

  void validate(Index n) const {
    if (pieces.empty()) throw InvalidParams("a dc constraint needs at least one concave piece");
    if (phi_c.dim() != n) throw InvalidParams("constraint dimension does not match X");
    for (const auto& p : pieces) {
      if (p.dim() != n) throw InvalidParams("constraint piece dimension does not match X");
    }
  }

  bool in_domain(const Vector& x) const {
    if (!phi_c.in_domain(x)) return false;
    for (const auto& p : pieces) {
      if (!p.in_domain(x)) return false;
    }
    return true;
  }

  double varphi_value(const Vector& x) const {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& p : pieces) m = std::max(m, p.value(x));
    return m;
  }

  /// zeta_c(x) = phi_c(x) - varphi_c(x)
  double value(const Vector& x) const { return phi_c.value(x) - varphi_value(x); }

  double scale(const Vector& x) const { return 1.0 + std::abs(phi_c.value(x)) + std::abs(varphi_value(x)); }

  /// Default feasibility tolerance 1e-8 (1 + |phi_c| + |varphi_c|).
  double feas_tol(const Vector& x) const { return 1e-8 * scale(x); }
};

struct ConstrainedDcProgram {
  DcProgram base;
  DcConstraint constraint;

  Index dim() const { return base.dim(); }

  void validate() const {
    base.validate();
    constraint.validate(base.dim());
  }

  bool in_domain(const Vector& x) const { return base.in_domain(x) && constraint.in_domain(x); }

  /// x in X and zeta_c(x) <= feasibility tolerance.
  bool feasible(const Vector& x, double x_tol = 1e-9) const {
    if (!base.X.contains(x, x_tol).inside || !constraint.in_domain(x)) return false;
    return constraint.value(x) <= constraint.feas_tol(x);
  }
};

/// One constraint phi_j(x) - varphi_j(x) <= 0 before merging.
struct ConstraintPart {
  ConvexFunction phi;
  PiecewiseMaxConvex varphi;
};

/// max_j [phi_j - varphi_j] <= 0 written as one dc constraint:
/// phi_c = max_j (phi_j + sum_{l != j} varphi_l), varphi_c = sum_l varphi_l.
/// Sums of maxima are expanded into tuple sums.
inline DcConstraint merge_constraints(const std::vector<ConstraintPart>& parts, std::size_t cap = kTupleCap) {
  if (parts.empty()) throw InvalidParams("merge_constraints needs at least one constraint");
  const Index n = parts.front().phi.dim();
  for (const auto& p : parts) {
    if (p.phi.dim() != n || p.varphi.dim() != n) throw InvalidParams("constraint dimensions differ");
  }
  if (parts.size() == 1) return DcConstraint{parts.front().phi, parts.front().varphi.pieces()};

  std::vector<SmoothConvexFunction> phi_pieces;
  for (std::size_t j = 0; j < parts.size(); ++j) {
    std::vector<std::vector<SmoothConvexFunction>> groups{parts[j].phi.as_max_pieces()};
    for (std::size_t l = 0; l < parts.size(); ++l) {
      if (l != j) groups.push_back(parts[l].varphi.pieces());
    }
    for (auto& p : tuple_sums(groups, cap)) phi_pieces.push_back(std::move(p));
  }
  std::vector<std::vector<SmoothConvexFunction>> all;
  for (const auto& p : parts) all.push_back(p.varphi.pieces());
  DcConstraint out;
  out.phi_c = phi_pieces.size() == 1 ? ConvexFunction(phi_pieces.front())
                                     : ConvexFunction(SmoothConvexFunction::zero(n), PiecewiseMaxConvex(phi_pieces));
  out.pieces = tuple_sums(all, cap);
  return out;
}

/// The constraint function as an objective over X (for stationarity of the violation).
inline DcProgram constraint_program(const ConstrainedDcProgram& C) {
  return DcProgram{C.constraint.phi_c, {C.constraint.pieces}, C.base.X};
}

namespace detail {

/// Y^j(c) = {x : phi_c(x) <= psi_{c,j}(c) + grad psi_{c,j}(c)'(x - c)}, one smooth
/// constraint per max piece of phi_c.
inline std::vector<SmoothConstraint> linearized_constraint(const DcConstraint& dc, const Vector& center, int j) {
  const SmoothConvexFunction& p = dc.pieces.at(static_cast<std::size_t>(j));
  const Vector g = p.gradient(center);
  const double b = p.value(center) - g.dot(center);
  std::vector<SmoothConstraint> out;
  for (auto& piece : dc.phi_c.as_max_pieces()) out.push_back(SmoothConstraint{std::move(piece), g, b});
  return out;
}

}  // namespace detail

struct SlaterResult {
  bool holds = false;
  Vector witness;
  double value = 0.0;  // linearized constraint at the witness
  double delta = 0.0;
};

/// Pointwise Slater check at a boundary point for active constraint piece j: is there
/// x in X with phi_c(x) < psi_{c,j}(xbar) + grad psi_{c,j}(xbar)'(x - xbar)?
/// Minimizes the linearized constraint plus a unit prox term around xbar.
inline SlaterResult slater_check(const ConstrainedDcProgram& C, const Vector& xbar, int j,
                                 double delta = std::numeric_limits<double>::quiet_NaN(),
                                 double tol_active = kTolActive, double sub_tol = 1e-10) {
  C.validate();
  detail::require_feasible(C.base.X, xbar, 1e-9);
  const DcConstraint& dc = C.constraint;
  const double zc = dc.value(xbar);
  const double band = std::max(tol_active, 1e-8 * dc.scale(xbar));
  if (zc < -band) throw NotOnBoundary("constraint is strictly satisfied at the point");
  if (zc > band) throw NotFeasible("point violates the dc constraint");
  const std::vector<int> act = dc.varphi().active_indices(xbar, tol_active);
  if (std::find(act.begin(), act.end(), j) == act.end()) {
    throw InvalidParams("piece " + std::to_string(j) + " is not active at the point");
  }
  const SmoothConvexFunction& p = dc.pieces[static_cast<std::size_t>(j)];
  const Vector g = p.gradient(xbar);
  const SubproblemSpec spec = linearized_spec(dc.phi_c, C.base.X, xbar, g, 1.0);
  const SubproblemResult r = solve(spec, sub_tol);
  if (r.status != SubproblemStatus::Solved) throw NonConvergence("Slater subproblem failed");
  SlaterResult out;
  out.witness = r.x_opt;
  out.value = dc.phi_c.value(r.x_opt) - p.value(xbar) - g.dot(r.x_opt - xbar);
  out.delta = std::isnan(delta) ? 1e-8 * dc.scale(xbar) : delta;
  out.holds = out.value < -out.delta;
  return out;
}

/// B-stationarity via the convex inner sets: xbar solves every (i, j) subproblem
/// over Y^j(xbar). The verdict is flagged when the pointwise Slater CQ fails.
inline Certificate check_B_stationary(const ConstrainedDcProgram& C, const Vector& xbar, double tol,
                                      const CertifyOptions& opt = {}) {
  C.validate();
  const DcProgram F = flatten_groups(C.base);
  detail::require_feasible(F.X, xbar, tol);
  const DcConstraint& dc = C.constraint;
  const double zc = dc.value(xbar);
  if (zc > std::max(tol, dc.feas_tol(xbar))) throw NotFeasible("point violates the dc constraint");
  if (zc < -opt.tol_active) {
    Certificate c = check_d_stationary(F, xbar, tol, opt);
    c.kind = CertKind::B;
    c.note = "constraint inactive; d-stationarity on X";
    return c;
  }
  const PiecewiseMaxConvex vp = F.varphi();
  const std::vector<int> act_i = detail::certificate_active(vp, xbar, tol, opt);
  const std::vector<int> act_j = dc.varphi().active_indices(xbar, std::max(opt.tol_active, tol));
  const int Lc = static_cast<int>(dc.pieces.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<bool> cq(static_cast<std::size_t>(Lc), true);
  for (int j : act_j) {
    cq[static_cast<std::size_t>(j)] = slater_check(C, xbar, j, nan, std::max(opt.tol_active, tol), opt.sub_tol).holds;
  }
  std::vector<std::pair<int, int>> pairs;
  for (int i : act_i) {
    for (int j : act_j) pairs.emplace_back(i, j);
  }
  const auto results = parallel_map<SubproblemResult>(
      pairs.size(),
      [&](std::size_t k) {
        SubproblemSpec spec = linearized_spec(F.phi, F.X, xbar,
                                              vp.piece(static_cast<std::size_t>(pairs[k].first)).gradient(xbar), 1.0);
        spec.constraints = detail::linearized_constraint(dc, xbar, pairs[k].second);
        return solve(spec, opt.sub_tol);
      },
      opt.threads);

  Certificate cert;
  cert.kind = CertKind::B;
  double best = -kInf;
  int empty = 0;
  int inexact = 0;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& r = results[k];
    cert.pieces.push_back(pairs[k].first * Lc + pairs[k].second);
    if (r.status == SubproblemStatus::Infeasible) {
      ++empty;
      cert.solutions.push_back(xbar);
      cert.displacements.push_back(0.0);
      continue;
    }
    if (r.status != SubproblemStatus::Solved) {
      // without the CQ the inner set may be degenerate and only approximately solvable
      if (cq[static_cast<std::size_t>(pairs[k].second)] || r.x_opt.size() != xbar.size()) {
        throw NonConvergence("B-stationarity subproblem failed");
      }
      ++inexact;
    }
    const double step = (r.x_opt - xbar).norm();
    cert.solutions.push_back(r.x_opt);
    cert.displacements.push_back(step);
    cert.residual = std::max(cert.residual, step);
    const Vector g = vp.piece(static_cast<std::size_t>(pairs[k].first)).gradient(xbar);
    const double dec = F.phi.value(xbar) - (F.phi.value(r.x_opt) - g.dot(r.x_opt - xbar) +
                                            0.5 * (r.x_opt - xbar).squaredNorm());
    if (step > tol && dec > best) {
      best = dec;
      cert.witness = r.x_opt;
      cert.witness_decrease = dec;
    }
  }
  cert.verdict = cert.residual <= tol ? Verdict::Pass : Verdict::Fail;
  if (cert.passed()) cert.witness = xbar;
  for (int j : act_j) {
    if (!cq[static_cast<std::size_t>(j)]) cert.cq_verified = false;
  }
  if (!cert.cq_verified) cert.note = "CQ-unverified: pointwise Slater fails for an active constraint piece";
  if (empty > 0) {
    if (!cert.note.empty()) cert.note += "; ";
    cert.note += std::to_string(empty) + " inner set(s) numerically empty";
  }
  if (inexact > 0) {
    if (!cert.note.empty()) cert.note += "; ";
    cert.note += std::to_string(inexact) + " inner subproblem(s) solved inexactly";
  }
  return cert;
}

/// Feasible-start method: per iteration one subproblem per (i, j) in
/// M_eps(x) x M_c,eps(x) over Y^j(x); empty or failed subproblems fall back to x.
inline SolveReport algorithm_two(const ConstrainedDcProgram& C, const Vector& x0, const SolveOptions& opt = {}) {
  opt.validate();
  C.validate();
  const DcProgram F = flatten_groups(C.base);
  const PiecewiseMaxConvex vp = F.varphi();
  const DcConstraint& dc = C.constraint;
  const PiecewiseMaxConvex vc = dc.varphi();
  if (x0.size() != F.dim()) throw InvalidParams("start point has the wrong dimension");
  if (!F.X.contains(x0, 1e-9).inside || !C.in_domain(x0) || !F.in_domain(x0)) {
    throw InfeasibleStart("start point is not in X or outside the domain");
  }
  if (dc.value(x0) > dc.feas_tol(x0)) {
    throw InfeasibleStart("start point violates the dc constraint by " + std::to_string(dc.value(x0)));
  }
  detail::Stopwatch clock(opt.timing);
  SolveReport rep;
  rep.method = "algorithm2";
  Vector x = x0;
  rep.trace.push_back(detail::initial_row(F, x));
  double zeta = rep.trace.back().zeta;
  double worst_violation = dc.value(x) - dc.feas_tol(x);
  detail::StallCounter stall;

  struct PairCandidate {
    Vector x;
    double zeta = 0.0;
    double merit = 0.0;
    double step = 0.0;
    double kkt = 0.0;
    bool fallback = false;
  };

  for (int it = 1; it <= opt.max_iter; ++it) {
    const std::vector<int> act_i = vp.active_indices(x, opt.epsilon);
    const std::vector<int> act_j = vc.active_indices(x, opt.epsilon);
    std::vector<std::pair<int, int>> pairs;
    for (int i : act_i) {
      for (int j : act_j) pairs.emplace_back(i, j);
    }
    const auto cands = parallel_map<PairCandidate>(
        pairs.size(),
        [&](std::size_t k) {
          SubproblemSpec spec = linearized_spec(
              F.phi, F.X, x, vp.piece(static_cast<std::size_t>(pairs[k].first)).gradient(x), opt.prox_weight);
          spec.constraints = detail::linearized_constraint(dc, x, pairs[k].second);
          const SubproblemResult r = solve(spec, opt.sub_tol);
          PairCandidate c;
          if (r.status != SubproblemStatus::Solved) {
            c.x = x;
            c.zeta = zeta;
            c.merit = zeta;
            c.fallback = true;
            return c;
          }
          c.x = r.x_opt;
          c.zeta = F.zeta(r.x_opt);
          c.step = (r.x_opt - x).norm();
          c.merit = detail::merit(c.zeta, r.x_opt, x, opt.prox_weight);
          c.kkt = r.kkt_residual;
          return c;
        },
        opt.threads);
    std::size_t best = 0;
    for (std::size_t k = 0; k < cands.size(); ++k) {
      if (cands[k].fallback) ++rep.fallbacks;
      if (k > 0 && cands[k].merit < cands[best].merit && !detail::ties(cands[k].merit, cands[best].merit)) best = k;
    }
    const PairCandidate& c = cands[best];
    const bool stalled = stall.update(zeta, c.zeta, c.step, opt.tol_step);
    x = c.x;
    zeta = c.zeta;
    worst_violation = std::max(worst_violation, dc.value(x) - dc.feas_tol(x));
    TraceRow row;
    row.iter = it;
    row.x = x;
    row.zeta = zeta;
    row.chosen = {pairs[best].first, pairs[best].second};
    row.step = c.step;
    row.kkt = c.kkt;
    row.active_count = static_cast<int>(pairs.size());
    row.wall_ms = clock.ms();
    rep.trace.push_back(std::move(row));
    rep.iterations = it;
    if (c.step <= opt.tol_step) {
      rep.termination = Termination::StepBelowTol;
      break;
    }
    if (stalled) {
      rep.termination = Termination::Stalled;
      break;
    }
  }
  rep.x = x;
  rep.zeta = zeta;
  rep.constraint_residual = std::max(0.0, dc.value(x));
  if (worst_violation > 0.0) {
    rep.note = "feasibility invariant violated by " + format_double(worst_violation);
  }
  return rep;
}

/// Penalized program phi + rho max(phi_c, varphi_c) - max_{i,j}(psi_i + rho psi_{c,j}); its
/// objective equals zeta + rho max(0, zeta_c).
inline DcProgram penalized_program(const ConstrainedDcProgram& C, double rho, std::size_t cap = kTupleCap) {
  if (!(rho > 0.0)) throw InvalidParams("penalty parameter must be positive");
  C.validate();
  const DcProgram F = flatten_groups(C.base, cap);
  const DcConstraint& dc = C.constraint;
  std::vector<SmoothConvexFunction> pen;
  for (const auto& p : dc.phi_c.as_max_pieces()) pen.push_back(p.scaled(rho));
  for (const auto& p : dc.pieces) pen.push_back(p.scaled(rho));
  const ConvexFunction penalty(SmoothConvexFunction::zero(F.dim()), PiecewiseMaxConvex(std::move(pen)));
  const auto& base = F.groups.front();
  if (base.size() > cap / dc.pieces.size()) throw TupleExplosion("penalized piece pairs exceed the cap");
  std::vector<SmoothConvexFunction> pairs;
  pairs.reserve(base.size() * dc.pieces.size());
  for (const auto& psi : base) {
    for (const auto& pc : dc.pieces) pairs.push_back(psi + pc.scaled(rho));
  }
  return DcProgram{add(F.phi, penalty, cap), {std::move(pairs)}, F.X};
}

enum class PenaltyClass { InfeasibleStationary, InteriorDStationary, BoundaryBStationary, Unclassified };

inline const char* to_string(PenaltyClass c) {
  switch (c) {
    case PenaltyClass::InfeasibleStationary: return "a-infeasible-stationary";
    case PenaltyClass::InteriorDStationary: return "b-interior-d-stationary";
    case PenaltyClass::BoundaryBStationary: return "c-boundary-B-stationary";
    case PenaltyClass::Unclassified: return "unclassified";
  }
  return "?";
}

struct PenaltyOptions {
  double rho0 = 1.0;
  double gamma = 10.0;
  double rho_max = 1e8;
  double feas_tol = std::numeric_limits<double>::quiet_NaN();  // default: 1e-8 (1 + |phi_c| + |varphi_c|)
  double outer_tol = 1e-6;

  void validate() const {
    if (!(rho0 > 0.0)) throw InvalidParams("rho0 must be positive");
    if (!(gamma > 1.0)) throw InvalidParams("gamma must exceed 1");
    if (!(rho_max >= rho0)) throw InvalidParams("rho_max must be at least rho0");
    if (!(outer_tol > 0.0)) throw InvalidParams("outer tolerance must be positive");
  }
};

struct PenaltyReport {
  SolveReport report;
  PenaltyClass classification = PenaltyClass::Unclassified;
  double rho = 0.0;
  int outer_iterations = 0;
  bool rho_exhausted = false;
};

/// Runs the proximal method on the penalized program for rho0, rho0 gamma, ...
/// warm-starting each phase, and classifies the limit.
inline PenaltyReport penalty_solve(const ConstrainedDcProgram& C, const Vector& x0, const PenaltyOptions& popt = {},
                                   const SolveOptions& opt = {}) {
  popt.validate();
  opt.validate();
  C.validate();
  const DcConstraint& dc = C.constraint;
  PenaltyReport out;
  SolveReport& rep = out.report;
  rep.method = "penalty";
  bool projected = false;
  Vector x = detail::feasible_start(C.base, x0, projected);
  rep.start_projected = projected;
  Vector prev = x;
  int iter = 0;
  bool converged = false;
  auto feas = [&](const Vector& p) { return std::isnan(popt.feas_tol) ? dc.feas_tol(p) : popt.feas_tol; };
  for (double rho = popt.rho0;; rho *= popt.gamma) {
    const DcProgram P = penalized_program(C, rho);
    const SolveReport inner = algorithm_one(P, x, opt);
    for (std::size_t k = rep.trace.empty() ? 0 : 1; k < inner.trace.size(); ++k) {
      TraceRow row = inner.trace[k];
      row.iter = iter++;
      row.theta = row.zeta;
      row.zeta = C.base.zeta(row.x);
      row.rho = rho;
      rep.trace.push_back(std::move(row));
    }
    rep.fallbacks += inner.fallbacks;
    x = inner.x;
    out.rho = rho;
    ++out.outer_iterations;
    const double step = (x - prev).norm();
    prev = x;
    if (dc.value(x) <= feas(x) && step <= popt.outer_tol) {
      converged = true;
      break;
    }
    if (rho * popt.gamma > popt.rho_max * (1.0 + 1e-12)) {
      out.rho_exhausted = true;
      break;
    }
  }
  rep.iterations = iter > 0 ? iter - 1 : 0;
  rep.x = x;
  rep.zeta = C.base.zeta(x);
  rep.termination = converged ? Termination::StepBelowTol : Termination::MaxIter;
  const double zc = dc.value(x);
  rep.constraint_residual = std::max(0.0, zc);
  if (zc > feas(x)) {
    out.classification = PenaltyClass::InfeasibleStationary;
  } else if (zc < -std::max(kTolActive, feas(x))) {
    out.classification = PenaltyClass::InteriorDStationary;
  } else if (dc.varphi().active_indices(x, opt.tol_active).size() == 1) {
    out.classification = PenaltyClass::BoundaryBStationary;
  } else {
    out.classification = PenaltyClass::Unclassified;
  }
  if (out.rho_exhausted) rep.note = "rho_max reached before the outer test was met";
  return out;
}

}  // namespace dckit
