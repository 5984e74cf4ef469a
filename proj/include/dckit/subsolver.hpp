#pragma once

// Strongly convex subproblems
//   minimize  smooth(x) + linear'x + (w/2)||x - c||^2 + s * max_k p_k(x)
//   subject to x in X,  g_j(x) <= a_j'x + b_j.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "dckit/apg.hpp"
#include "dckit/errors.hpp"
#include "dckit/funcs.hpp"
#include "dckit/sets.hpp"

namespace dckit {

/// g(x) <= a'x + b
struct SmoothConstraint {
  SmoothConvexFunction g;
  Vector a;
  double b = 0.0;

  double excess(const Vector& x) const { return g.value(x) - a.dot(x) - b; }
  Vector excess_gradient(const Vector& x) const { return g.gradient(x) - a; }
};

struct SubproblemSpec {
  SmoothConvexFunction smooth;
  Vector linear;  // empty means zero
  Vector prox_center;
  double prox_weight = 1.0;
  std::optional<PiecewiseMaxConvex> max_part;
  double max_scale = 1.0;
  std::vector<SmoothConstraint> constraints;
  Polyhedron X;
};

enum class SubproblemStatus { Solved, Infeasible, NonConvergence };

inline const char* to_string(SubproblemStatus s) {
  switch (s) {
    case SubproblemStatus::Solved: return "Solved";
    case SubproblemStatus::Infeasible: return "Infeasible";
    case SubproblemStatus::NonConvergence: return "NonConvergence";
  }
  return "?";
}

struct SubproblemResult {
  Vector x_opt;
  double value = 0.0;
  double kkt_residual = std::numeric_limits<double>::infinity();
  std::vector<double> multipliers;  // max-part weights first, then one per constraint
  SubproblemStatus status = SubproblemStatus::NonConvergence;
  int iterations = 0;
};

struct FeasibilityResult {
  bool feasible = true;
  double residual = 0.0;
  Vector witness;
};

namespace detail {

/// Objective seen by the gradient method: the smooth part of the subproblem
/// plus optional augmented-Lagrangian terms for the max part and constraints,
/// plus an optional fixed Lagrangian weight on the first constraint.
class SubObjective {
 public:
  SubObjective(const SubproblemSpec& spec, const SmoothConvexFunction& smooth)
      : spec_(spec), smooth_(smooth) {}

  // max-part augmented Lagrangian (epigraph variable eliminated)
  const std::vector<SmoothConvexFunction>* pieces = nullptr;
  double s = 0.0;
  Vector lam;
  double mu = 1.0;

  // constraint augmented Lagrangian
  bool use_constraint_al = false;
  Vector nu;
  double muc = 1.0;

  // fixed Lagrangian weight on constraint 0
  double dual = 0.0;

  bool in_domain(const Vector& x) const {
    if (!smooth_.in_domain(x)) return false;
    if (pieces) {
      for (const auto& p : *pieces) {
        if (!p.in_domain(x)) return false;
      }
    }
    if (use_constraint_al || dual != 0.0) {
      for (const auto& c : spec_.constraints) {
        if (!c.g.in_domain(x)) return false;
      }
    }
    return true;
  }

  double base_value(const Vector& x) const {
    double v = smooth_.value(x) + 0.5 * spec_.prox_weight * (x - spec_.prox_center).squaredNorm();
    if (spec_.linear.size() > 0) v += spec_.linear.dot(x);
    return v;
  }

  double value(const Vector& x) const {
    double v = base_value(x);
    if (pieces) {
      const Vector p = piece_values(x);
      const Split sp = split(p);
      for (std::size_t k = 0; k < static_cast<std::size_t>(p.size()); ++k) {
        const double lk = lam[static_cast<Index>(k)];
        if (sp.active[k]) {
          const double d = p[static_cast<Index>(k)] - sp.t;
          v += lk * p[static_cast<Index>(k)] + 0.5 * mu * d * d;
        } else {
          v += lk * (sp.t - lk / (2.0 * mu));
        }
      }
    }
    if (use_constraint_al) {
      for (std::size_t j = 0; j < spec_.constraints.size(); ++j) {
        const double c = spec_.constraints[j].excess(x);
        const double nj = nu[static_cast<Index>(j)];
        if (nj + muc * c > 0.0) {
          v += nj * c + 0.5 * muc * c * c;
        } else {
          v -= nj * nj / (2.0 * muc);
        }
      }
    }
    if (dual != 0.0) v += dual * spec_.constraints.front().excess(x);
    return v;
  }

  Vector gradient(const Vector& x) const {
    Vector g = smooth_.gradient(x);
    g.noalias() += spec_.prox_weight * (x - spec_.prox_center);
    if (spec_.linear.size() > 0) g += spec_.linear;
    if (pieces) {
      const Vector p = piece_values(x);
      const Split sp = split(p);
      for (std::size_t k = 0; k < static_cast<std::size_t>(p.size()); ++k) {
        if (!sp.active[k]) continue;
        const double r = lam[static_cast<Index>(k)] + mu * (p[static_cast<Index>(k)] - sp.t);
        if (r > 0.0) g.noalias() += r * (*pieces)[k].gradient(x);
      }
    }
    if (use_constraint_al) {
      for (std::size_t j = 0; j < spec_.constraints.size(); ++j) {
        const double r = nu[static_cast<Index>(j)] + muc * spec_.constraints[j].excess(x);
        if (r > 0.0) g.noalias() += r * spec_.constraints[j].excess_gradient(x);
      }
    }
    if (dual != 0.0) g.noalias() += dual * spec_.constraints.front().excess_gradient(x);
    return g;
  }

  Vector piece_values(const Vector& x) const {
    Vector p(static_cast<Index>(pieces->size()));
    for (std::size_t k = 0; k < pieces->size(); ++k) p[static_cast<Index>(k)] = (*pieces)[k].value(x);
    return p;
  }

  struct Split {
    double t = 0.0;
    std::vector<bool> active;
  };

  /// Solves sum_k max(0, lam_k + mu (p_k - t)) = s for t.
  Split split(const Vector& p) const {
    const std::size_t K = static_cast<std::size_t>(p.size());
    std::vector<std::size_t> order(K);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> a(K);
    for (std::size_t k = 0; k < K; ++k) a[k] = lam[static_cast<Index>(k)] / mu + p[static_cast<Index>(k)];
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a[i] > a[j]; });
    Split out;
    out.active.assign(K, false);
    std::vector<double> lam_after(K + 1, 0.0);  // sum of lam over order[m..K)
    for (std::size_t m = K; m-- > 0;) lam_after[m] = lam_after[m + 1] + lam[static_cast<Index>(order[m])];
    double sum_p = 0.0;
    for (std::size_t m = 1; m <= K; ++m) {
      sum_p += p[static_cast<Index>(order[m - 1])];
      const double t = sum_p / static_cast<double>(m) - lam_after[m] / (mu * static_cast<double>(m));
      if (m == K || t >= a[order[m]]) {
        out.t = t;
        for (std::size_t i = 0; i < m; ++i) out.active[order[i]] = true;
        return out;
      }
    }
    return out;
  }

 private:
  const SubproblemSpec& spec_;
  const SmoothConvexFunction& smooth_;
};

inline double true_value(const SubproblemSpec& spec, const Vector& x) {
  double v = spec.smooth.value(x) + 0.5 * spec.prox_weight * (x - spec.prox_center).squaredNorm();
  if (spec.linear.size() > 0) v += spec.linear.dot(x);
  if (spec.max_part && spec.max_scale != 0.0) v += spec.max_scale * spec.max_part->value(x);
  return v;
}

inline double excess_tol(const SmoothConstraint& c, const Vector& x) {
  const double eps = std::numeric_limits<double>::epsilon();
  return 4.0 * eps * (1.0 + std::abs(c.g.value(x)) + std::abs(c.a.dot(x) + c.b));
}

}  // namespace detail

inline SubproblemResult solve(const SubproblemSpec& spec, double tol = 1e-10);

/// Decides whether X intersected with the constraints is nonempty by
/// minimizing K * max(0, excess_1, ..., excess_J) + 1/2 ||x - center||^2 over X.
inline FeasibilityResult feasibility_probe(const Polyhedron& X, const std::vector<SmoothConstraint>& constraints,
                                           double tol = 1e-10, const Vector* center = nullptr) {
  FeasibilityResult out;
  Vector c = X.project(center ? *center : X.interior_guess());
  auto violation = [&](const Vector& x, double& scale) {
    double viol = 0.0;
    scale = 1.0;
    for (const auto& con : constraints) {
      const double g = con.g.value(x);
      const double aff = con.a.dot(x) + con.b;
      viol = std::max(viol, g - aff);
      scale = std::max(scale, 1.0 + std::abs(g) + std::abs(aff));
    }
    return viol;
  };
  out.witness = c;
  if (constraints.empty()) return out;
  for (const auto& con : constraints) {
    if (!con.g.in_domain(c)) throw DomainViolation("feasibility probe center is outside a constraint domain");
  }
  double scale = 1.0;
  double viol = violation(c, scale);
  if (viol <= 1e-8 * scale) {
    out.residual = std::max(0.0, viol);
    return out;
  }

  SubproblemSpec probe;
  const Index n = X.dim();
  probe.smooth = SmoothConvexFunction::zero(n);
  probe.prox_center = c;
  probe.prox_weight = 1.0;
  probe.X = X;
  std::vector<SmoothConvexFunction> pieces;
  pieces.push_back(SmoothConvexFunction::zero(n));
  for (const auto& con : constraints) pieces.push_back(con.g.plus_affine(-con.a, -con.b));
  probe.max_part = PiecewiseMaxConvex(std::move(pieces));
  probe.max_scale = 1e6;
  const SubproblemResult r = solve(probe, tol);
  if (r.status == SubproblemStatus::NonConvergence && !std::isfinite(r.kkt_residual)) {
    throw NonConvergence("feasibility probe did not converge");
  }
  out.witness = r.x_opt;
  viol = violation(r.x_opt, scale);
  out.residual = std::max(0.0, viol);
  out.feasible = viol <= 1e-8 * scale;
  return out;
}

namespace detail {

inline SubproblemResult finish(const SubproblemSpec& spec, const Vector& x, double kkt, SubproblemStatus st,
                               std::vector<double> mult, int iters) {
  SubproblemResult r;
  r.x_opt = x;
  r.value = true_value(spec, x);
  r.kkt_residual = kkt;
  r.status = st;
  r.multipliers = std::move(mult);
  r.iterations = iters;
  return r;
}

inline double max_grad_sq(const std::vector<SmoothConvexFunction>& fs, const Vector& x) {
  double m = 0.0;
  for (const auto& f : fs) m = std::max(m, f.gradient(x).squaredNorm());
  return m;
}

}  // namespace detail

inline SubproblemResult solve(const SubproblemSpec& spec, double tol) {
  const Index n = spec.X.dim();
  if (!(tol > 0.0)) throw InvalidParams("subproblem tolerance must be positive");
  if (!(spec.prox_weight > 0.0)) throw InvalidParams("prox weight must be positive");
  if (spec.prox_center.size() != n || spec.smooth.dim() != n) throw InvalidParams("subproblem dimension mismatch");
  if (spec.linear.size() != 0 && spec.linear.size() != n) throw InvalidParams("linear term dimension mismatch");
  if (spec.max_part && spec.max_scale < 0.0) throw InvalidParams("max-part scale must be nonnegative");
  for (const auto& c : spec.constraints) {
    if (c.g.dim() != n || c.a.size() != n) throw InvalidParams("constraint dimension mismatch");
  }

  // fold a single-piece (or zero-scaled) max part into the smooth part
  SmoothConvexFunction smooth = spec.smooth;
  const std::vector<SmoothConvexFunction>* pieces = nullptr;
  if (spec.max_part && spec.max_scale > 0.0) {
    if (spec.max_part->size() == 1) {
      smooth += spec.max_part->piece(0).scaled(spec.max_scale);
    } else {
      pieces = &spec.max_part->pieces();
    }
  }

  const auto project = [&spec](const Vector& z) { return spec.X.project(z); };
  const Vector x0 = spec.X.project(spec.prox_center);

  detail::SubObjective obj(spec, smooth);
  ApgOptions ao;
  ao.tol = tol;
  ao.L0 = smooth.quadratic_curvature() + spec.prox_weight;
  if (!smooth.in_domain(x0) || (spec.max_part && !spec.max_part->in_domain(x0))) {
    throw DomainViolation("projected prox center lies outside the objective domain");
  }

  // unconstrained in g, smooth
  if (!pieces && spec.constraints.empty()) {
    const ApgResult r = apg_minimize(obj, project, x0, ao);
    return detail::finish(spec, r.x, r.residual,
                          r.converged ? SubproblemStatus::Solved : SubproblemStatus::NonConvergence, {}, r.iterations);
  }

  int iters = 0;

  // one constraint, smooth objective: bisection on the multiplier
  if (!pieces && spec.constraints.size() == 1) {
    const SmoothConstraint& con = spec.constraints.front();
    ApgResult r0 = apg_minimize(obj, project, x0, ao);
    iters += r0.iterations;
    if (!r0.converged) {
      return detail::finish(spec, r0.x, r0.residual, SubproblemStatus::NonConvergence, {0.0}, iters);
    }
    if (!con.g.in_domain(r0.x)) throw DomainViolation("constraint evaluated outside its domain");
    if (con.excess(r0.x) <= detail::excess_tol(con, r0.x)) {
      return detail::finish(spec, r0.x, r0.residual, SubproblemStatus::Solved, {0.0}, iters);
    }
    const double cap = 1e10 * (1.0 + obj.gradient(x0).lpNorm<Eigen::Infinity>());
    auto solve_at = [&](double lambda, const Vector& start) {
      obj.dual = lambda;
      Vector s = start;
      if (!obj.in_domain(s)) s = x0;
      ApgResult r = apg_minimize(obj, project, s, ao);
      iters += r.iterations;
      return r;
    };
    double lo = 0.0;
    double hi = 1.0;
    ApgResult rhi = solve_at(hi, r0.x);
    bool bracketed = false;
    while (rhi.converged && hi <= cap) {
      if (con.excess(rhi.x) <= 0.0) {
        bracketed = true;
        break;
      }
      lo = hi;
      hi *= 2.0;
      rhi = solve_at(hi, rhi.x);
    }
    if (bracketed) {
      Vector warm = rhi.x;
      for (int k = 0; k < 60 && hi - lo > 1e-15 * hi; ++k) {
        const double mid = 0.5 * (lo + hi);
        ApgResult rm = solve_at(mid, warm);
        if (!rm.converged) break;
        warm = rm.x;
        if (con.excess(rm.x) <= 0.0) {
          hi = mid;
          rhi = std::move(rm);
        } else {
          lo = mid;
        }
      }
      const double comp = std::abs(hi * con.excess(rhi.x));
      const double kkt = std::max(rhi.residual, comp);
      const bool ok = rhi.converged && comp <= tol * (1.0 + hi) + detail::excess_tol(con, rhi.x) * hi;
      obj.dual = 0.0;
      return detail::finish(spec, rhi.x, kkt, ok ? SubproblemStatus::Solved : SubproblemStatus::NonConvergence,
                            {hi}, iters);
    }
    obj.dual = 0.0;
    const FeasibilityResult fr = feasibility_probe(spec.X, spec.constraints, tol, &x0);
    if (!fr.feasible) return detail::finish(spec, fr.witness, kInf, SubproblemStatus::Infeasible, {hi}, iters);
    // feasible but no finite multiplier found: fall through to the augmented Lagrangian
  }

  // general case: augmented Lagrangian over max part and constraints
  obj.dual = 0.0;
  Vector x = x0;
  double mu0 = 1.0;
  if (pieces) {
    obj.pieces = pieces;
    obj.s = spec.max_scale;
    const std::vector<int> act = spec.max_part->active_indices(x0);
    obj.lam = Vector::Zero(static_cast<Index>(pieces->size()));
    for (int k : act) obj.lam[k] = spec.max_scale / static_cast<double>(act.size());
    double curv = 0.0;
    for (const auto& pc : *pieces) curv = std::max(curv, pc.quadratic_curvature());
    mu0 = (spec.prox_weight + spec.max_scale * curv) / std::max(detail::max_grad_sq(*pieces, x0), 1e-6);
    obj.mu = mu0;
  }
  double muc0 = 1.0;
  if (!spec.constraints.empty()) {
    obj.use_constraint_al = true;
    obj.nu = Vector::Zero(static_cast<Index>(spec.constraints.size()));
    double gmax = 0.0;
    for (const auto& c : spec.constraints) gmax = std::max(gmax, c.excess_gradient(x0).squaredNorm());
    muc0 = spec.prox_weight / std::max(gmax, 1e-6);
    obj.muc = muc0;
  }

  double v_prev_max = kInf;
  double v_prev_con = kInf;
  ApgResult r;
  for (int outer = 0; outer < 400; ++outer) {
    r = apg_minimize(obj, project, x, ao);
    iters += r.iterations;
    x = r.x;
    double v_max = 0.0;
    if (pieces) {
      const Vector p = obj.piece_values(x);
      const auto sp = obj.split(p);
      Vector lam_new = Vector::Zero(p.size());
      for (Index k = 0; k < p.size(); ++k) {
        if (sp.active[static_cast<std::size_t>(k)]) lam_new[k] = std::max(0.0, obj.lam[k] + obj.mu * (p[k] - sp.t));
      }
      const double total = lam_new.sum();
      if (total > 0.0) lam_new *= spec.max_scale / total;
      for (Index k = 0; k < p.size(); ++k) {
        v_max = std::max(v_max, std::abs(std::min(sp.t - p[k], lam_new[k] / obj.mu)));
      }
      obj.lam = lam_new;
    }
    double v_con = 0.0;
    if (obj.use_constraint_al) {
      for (std::size_t j = 0; j < spec.constraints.size(); ++j) {
        const double c = spec.constraints[j].excess(x);
        const double nn = std::max(0.0, obj.nu[static_cast<Index>(j)] + obj.muc * c);
        obj.nu[static_cast<Index>(j)] = nn;
        v_con = std::max(v_con, std::abs(std::min(-c, nn / obj.muc)));
      }
    }
    if (r.converged && v_max <= tol && v_con <= tol) {
      std::vector<double> mult;
      if (pieces) mult.assign(obj.lam.data(), obj.lam.data() + obj.lam.size());
      if (obj.use_constraint_al) mult.insert(mult.end(), obj.nu.data(), obj.nu.data() + obj.nu.size());
      return detail::finish(spec, x, std::max({r.residual, v_max, v_con}), SubproblemStatus::Solved, mult, iters);
    }
    if (pieces && v_max > 0.25 * v_prev_max) obj.mu *= 10.0;
    if (obj.use_constraint_al && v_con > 0.25 * v_prev_con) obj.muc *= 10.0;
    v_prev_max = v_max;
    v_prev_con = v_con;
    if ((pieces && obj.mu > 1e8 * mu0) || (obj.use_constraint_al && obj.muc > 1e8 * muc0)) break;
  }

  if (!spec.constraints.empty()) {
    const FeasibilityResult fr = feasibility_probe(spec.X, spec.constraints, tol, &x0);
    if (!fr.feasible) return detail::finish(spec, fr.witness, kInf, SubproblemStatus::Infeasible, {}, iters);
  }
  std::vector<double> mult;
  if (pieces) mult.assign(obj.lam.data(), obj.lam.data() + obj.lam.size());
  if (obj.use_constraint_al) mult.insert(mult.end(), obj.nu.data(), obj.nu.data() + obj.nu.size());
  return detail::finish(spec, x, r.residual, SubproblemStatus::NonConvergence, mult, iters);
}

}  // namespace dckit
