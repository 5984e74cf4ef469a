#pragma once

// dc programs  zeta(x) = phi(x) - sum_i max_k psi_{i,k}(x)  over a polyhedron,
// the proximal multi-subproblem method, its randomized variant, and the
// classical regularized DCA baseline.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "dckit/errors.hpp"
#include "dckit/funcs.hpp"
#include "dckit/parallel.hpp"
#include "dckit/sets.hpp"
#include "dckit/subsolver.hpp"

namespace dckit {

inline constexpr std::size_t kTupleCap = 4096;

struct DcProgram {
  ConvexFunction phi;
  std::vector<std::vector<SmoothConvexFunction>> groups;
  Polyhedron X;

  Index dim() const { return X.dim(); }

  void validate() const {
    if (groups.empty()) throw InvalidParams("a dc program needs at least one concave-part group");
    if (phi.dim() != dim()) throw InvalidParams("phi dimension does not match X");
    for (const auto& g : groups) {
      if (g.empty()) throw InvalidParams("every concave-part group needs at least one piece");
      for (const auto& p : g) {
        if (p.dim() != dim()) throw InvalidParams("piece dimension does not match X");
      }
    }
  }

  bool in_domain(const Vector& x) const {
    if (!phi.in_domain(x)) return false;
    for (const auto& g : groups) {
      for (const auto& p : g) {
        if (!p.in_domain(x)) return false;
      }
    }
    return true;
  }

  double concave_value(const Vector& x) const {
    double v = 0.0;
    for (const auto& g : groups) {
      double m = -std::numeric_limits<double>::infinity();
      for (const auto& p : g) m = std::max(m, p.value(x));
      v += m;
    }
    return v;
  }

  double zeta(const Vector& x) const { return phi.value(x) - concave_value(x); }

  /// The single group as a max function (requires one group).
  PiecewiseMaxConvex varphi() const {
    if (groups.size() != 1) throw UnsupportedStructure("program has several groups; flatten it first");
    return PiecewiseMaxConvex(groups.front());
  }

  std::size_t tuple_count() const {
    std::size_t c = 1;
    for (const auto& g : groups) {
      if (c > std::numeric_limits<std::size_t>::max() / g.size()) return std::numeric_limits<std::size_t>::max();
      c *= g.size();
    }
    return c;
  }
};

/// Replaces the groups by the single group of all tuple sums (first group
/// varies slowest).
inline DcProgram flatten_groups(const DcProgram& P, std::size_t cap = kTupleCap) {
  P.validate();
  if (P.groups.size() == 1) return P;
  DcProgram out{P.phi, {tuple_sums(P.groups, cap)}, P.X};
  return out;
}

/// Mixed-radix decoding of a flattened index into per-group indices.
inline std::vector<int> decode_tuple(const DcProgram& grouped, std::size_t flat) {
  std::vector<int> idx(grouped.groups.size());
  for (std::size_t g = grouped.groups.size(); g-- > 0;) {
    idx[g] = static_cast<int>(flat % grouped.groups[g].size());
    flat /= grouped.groups[g].size();
  }
  return idx;
}

struct SolveOptions {
  double epsilon = 1e-3;
  double tol_step = 1e-8;
  int max_iter = 500;
  double tol_active = kTolActive;
  double sub_tol = 1e-10;
  double prox_weight = 1.0;
  std::uint64_t seed = 0;
  int threads = 0;       // 0: DCKIT_THREADS or hardware
  bool timing = false;   // record wall-clock times in the trace

  void validate() const {
    if (!(epsilon > 0.0)) throw InvalidParams("epsilon must be strictly positive");
    if (!(tol_step > 0.0)) throw InvalidParams("tol_step must be positive");
    if (max_iter < 1) throw InvalidParams("max_iter must be at least 1");
    if (!(tol_active >= 0.0)) throw InvalidParams("tol_active must be nonnegative");
    if (!(sub_tol > 0.0)) throw InvalidParams("subproblem tolerance must be positive");
    if (!(prox_weight > 0.0)) throw InvalidParams("prox weight must be positive");
  }
};

enum class Termination { StepBelowTol, MaxIter, Stalled };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::StepBelowTol: return "StepBelowTol";
    case Termination::MaxIter: return "MaxIter";
    case Termination::Stalled: return "Stalled";
  }
  return "?";
}

struct TraceRow {
  int iter = 0;
  Vector x;
  double zeta = 0.0;
  std::vector<int> chosen;  // piece index, (i, j) pair, or per-agent indices
  double step = 0.0;
  double kkt = 0.0;
  int active_count = 0;     // size of the candidate set examined
  double wall_ms = 0.0;
  double rho = std::numeric_limits<double>::quiet_NaN();
  double consensus_residual = std::numeric_limits<double>::quiet_NaN();
  double theta = std::numeric_limits<double>::quiet_NaN();  // penalized objective (penalty, consensus)
  bool accepted = true;
};

struct SolveReport {
  std::string method;
  Vector x;
  double zeta = 0.0;
  Termination termination = Termination::MaxIter;
  int iterations = 0;
  bool start_projected = false;
  int fallbacks = 0;  // subproblems replaced by the current iterate
  double constraint_residual = std::numeric_limits<double>::quiet_NaN();
  std::string note;
  std::vector<TraceRow> trace;
};

namespace detail {

class Stopwatch {
 public:
  explicit Stopwatch(bool on) : on_(on), t0_(std::chrono::steady_clock::now()) {}
  double ms() const {
    if (!on_) return 0.0;
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  bool on_;
  std::chrono::steady_clock::time_point t0_;
};

inline Vector feasible_start(const DcProgram& P, const Vector& x0, bool& projected) {
  if (x0.size() != P.dim()) throw InvalidParams("start point has the wrong dimension");
  const Membership m = P.X.contains(x0, 1e-12);
  projected = !m.inside;
  Vector x = m.inside ? x0 : P.X.project(x0);
  if (!P.in_domain(x)) throw DomainViolation("start point lies outside the objective domain");
  return x;
}

inline double merit(double zeta_new, const Vector& xn, const Vector& x, double w) {
  return zeta_new + 0.5 * w * (xn - x).squaredNorm();
}

inline bool ties(double a, double b) { return std::abs(a - b) <= 1e-12 * (1.0 + std::abs(a) + std::abs(b)); }

inline TraceRow initial_row(const DcProgram& P, const Vector& x) {
  TraceRow r;
  r.iter = 0;
  r.x = x;
  r.zeta = P.zeta(x);
  return r;
}

}  // namespace detail

/// Subproblem: phi(x) - grad' (x - c) + (w/2)||x - c||^2 over X (constant terms dropped).
inline SubproblemSpec linearized_spec(const ConvexFunction& phi, const Polyhedron& X, const Vector& center,
                                      const Vector& grad, double prox_weight) {
  SubproblemSpec s;
  s.smooth = phi.smooth();
  s.linear = -grad;
  s.prox_center = center;
  s.prox_weight = prox_weight;
  s.max_part = phi.max_part();
  s.max_scale = 1.0;
  s.X = X;
  return s;
}

struct Candidate {
  int index = -1;
  Vector x;
  double zeta = 0.0;
  double merit = 0.0;
  double step = 0.0;
  double kkt = 0.0;
};

/// Solves the linearized subproblem for each listed piece of the single group.
inline std::vector<Candidate> solve_candidates(const DcProgram& P, const Vector& x, const std::vector<int>& idx,
                                               const SolveOptions& opt, int iteration) {
  const auto& pieces = P.groups.front();
  return parallel_map<Candidate>(
      idx.size(),
      [&](std::size_t k) {
        const int i = idx[k];
        const SubproblemSpec spec = linearized_spec(P.phi, P.X, x, pieces[i].gradient(x), opt.prox_weight);
        const SubproblemResult r = solve(spec, opt.sub_tol);
        if (r.status != SubproblemStatus::Solved) {
          throw NonConvergence("subproblem for piece " + std::to_string(i) + " ended with status " +
                                   to_string(r.status) + " at iteration " + std::to_string(iteration),
                               iteration);
        }
        Candidate c;
        c.index = i;
        c.x = r.x_opt;
        c.zeta = P.zeta(r.x_opt);
        c.step = (r.x_opt - x).norm();
        c.merit = detail::merit(c.zeta, r.x_opt, x, opt.prox_weight);
        c.kkt = r.kkt_residual;
        return c;
      },
      opt.threads);
}

/// Lowest merit, ties to the earliest candidate.
inline const Candidate& best_candidate(const std::vector<Candidate>& cs) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < cs.size(); ++k) {
    if (cs[k].merit < cs[best].merit && !detail::ties(cs[k].merit, cs[best].merit)) best = k;
  }
  return cs[best];
}

namespace detail {

/// Tracks the stalled condition: improvement at rounding level while the step stays above tolerance.
class StallCounter {
 public:
  bool update(double zeta_old, double zeta_new, double step, double tol_step) {
    const double eps = std::numeric_limits<double>::epsilon();
    if (step > tol_step && zeta_old - zeta_new <= 4.0 * eps * (1.0 + std::abs(zeta_old))) {
      ++count_;
    } else {
      count_ = 0;
    }
    return count_ >= 10;
  }

 private:
  int count_ = 0;
};

}  // namespace detail

/// Deterministic method: one subproblem per epsilon-active piece, best merit wins.
inline SolveReport algorithm_one(const DcProgram& program, const Vector& x0, const SolveOptions& opt = {}) {
  opt.validate();
  const DcProgram P = flatten_groups(program);
  const PiecewiseMaxConvex varphi = P.varphi();
  detail::Stopwatch clock(opt.timing);
  SolveReport rep;
  rep.method = "algorithm1";
  Vector x = detail::feasible_start(P, x0, rep.start_projected);
  rep.trace.push_back(detail::initial_row(P, x));
  double zeta = rep.trace.back().zeta;
  detail::StallCounter stall;
  for (int it = 1; it <= opt.max_iter; ++it) {
    const std::vector<int> act = varphi.active_indices(x, opt.epsilon);
    const auto cands = solve_candidates(P, x, act, opt, it);
    const Candidate& c = best_candidate(cands);
    const bool stalled = stall.update(zeta, c.zeta, c.step, opt.tol_step);
    x = c.x;
    zeta = c.zeta;
    TraceRow row;
    row.iter = it;
    row.x = x;
    row.zeta = zeta;
    row.chosen = {c.index};
    row.step = c.step;
    row.kkt = c.kkt;
    row.active_count = static_cast<int>(act.size());
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
  return rep;
}

/// Randomized method: one uniformly sampled epsilon-active piece per iteration.
/// Candidates that would raise zeta + prox are rejected (the iterate stays);
/// a small sampled step ends the run only if no other candidate improves.
inline SolveReport algorithm_one_randomized(const DcProgram& program, const Vector& x0, const SolveOptions& opt = {}) {
  opt.validate();
  const DcProgram P = flatten_groups(program);
  const PiecewiseMaxConvex varphi = P.varphi();
  detail::Stopwatch clock(opt.timing);
  std::mt19937_64 rng(opt.seed);
  SolveReport rep;
  rep.method = "algorithm1-random";
  Vector x = detail::feasible_start(P, x0, rep.start_projected);
  rep.trace.push_back(detail::initial_row(P, x));
  double zeta = rep.trace.back().zeta;
  detail::StallCounter stall;
  for (int it = 1; it <= opt.max_iter; ++it) {
    const std::vector<int> act = varphi.active_indices(x, opt.epsilon);
    std::uniform_int_distribution<std::size_t> pick(0, act.size() - 1);
    const int i = act[pick(rng)];
    const Candidate c = solve_candidates(P, x, {i}, opt, it).front();
    const double slack = 1e-12 * (1.0 + std::abs(zeta));
    const bool accept = c.merit <= zeta + slack;

    bool finished = false;
    if (accept && c.step <= opt.tol_step) {
      finished = true;
      std::vector<int> others;
      for (int j : act) {
        if (j != i) others.push_back(j);
      }
      for (const auto& o : solve_candidates(P, x, others, opt, it)) {
        if (o.step > opt.tol_step && o.merit <= zeta + slack) finished = false;
      }
    }
    const bool stalled = accept && stall.update(zeta, c.zeta, c.step, opt.tol_step);
    TraceRow row;
    row.iter = it;
    row.chosen = {i};
    row.kkt = c.kkt;
    row.active_count = static_cast<int>(act.size());
    row.accepted = accept;
    if (accept) {
      x = c.x;
      zeta = c.zeta;
      row.step = c.step;
    }
    row.x = x;
    row.zeta = zeta;
    row.wall_ms = clock.ms();
    rep.trace.push_back(std::move(row));
    rep.iterations = it;
    if (finished) {
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
  return rep;
}

enum class BaselineSelection { FirstActive, MaxGradientNorm };

/// Classical regularized DCA: one active piece's gradient per iteration.
inline SolveReport dca_baseline(const DcProgram& program, const Vector& x0, const SolveOptions& opt = {},
                                BaselineSelection sel = BaselineSelection::FirstActive) {
  opt.validate();
  const DcProgram P = flatten_groups(program);
  const PiecewiseMaxConvex varphi = P.varphi();
  detail::Stopwatch clock(opt.timing);
  SolveReport rep;
  rep.method = "dca-baseline";
  Vector x = detail::feasible_start(P, x0, rep.start_projected);
  rep.trace.push_back(detail::initial_row(P, x));
  double zeta = rep.trace.back().zeta;
  detail::StallCounter stall;
  for (int it = 1; it <= opt.max_iter; ++it) {
    const std::vector<int> act = varphi.active_indices(x, opt.tol_active);
    int i = act.front();
    if (sel == BaselineSelection::MaxGradientNorm) {
      double best = -1.0;
      for (int j : act) {
        const double g = varphi.piece(static_cast<std::size_t>(j)).gradient(x).norm();
        if (g > best) {
          best = g;
          i = j;
        }
      }
    }
    const Candidate c = solve_candidates(P, x, {i}, opt, it).front();
    const bool stalled = stall.update(zeta, c.zeta, c.step, opt.tol_step);
    x = c.x;
    zeta = c.zeta;
    TraceRow row;
    row.iter = it;
    row.x = x;
    row.zeta = zeta;
    row.chosen = {i};
    row.step = c.step;
    row.kkt = c.kkt;
    row.active_count = static_cast<int>(act.size());
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
  return rep;
}

/// Largest violation of zeta(x+) + (w/2)||x+ - x||^2 <= zeta(x) + 1e-9 (1 + |zeta(x)|)
/// over consecutive trace rows; <= 0 means the descent inequality holds everywhere.
inline double max_descent_violation(const SolveReport& rep, double prox_weight = 1.0) {
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < rep.trace.size(); ++k) {
    const auto& a = rep.trace[k - 1];
    const auto& b = rep.trace[k];
    const double lhs = b.zeta + 0.5 * prox_weight * (b.x - a.x).squaredNorm();
    worst = std::max(worst, lhs - a.zeta - 1e-9 * (1.0 + std::abs(a.zeta)));
  }
  return worst;
}

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// CSV with columns iter,zeta,step_norm,chosen_index,subproblem_kkt,wall_ms,active_count.
/// Traces that carry a penalty parameter (penalty, consensus) add rho,consensus_residual,theta.
/// Index tuples ((i, j) pairs, per-agent indices) are joined with ';'.
inline void write_trace_csv(std::ostream& os, const SolveReport& rep) {
  bool consensus = false;
  for (const auto& r : rep.trace) consensus = consensus || !std::isnan(r.rho);
  os << "iter,zeta,step_norm,chosen_index,subproblem_kkt,wall_ms,active_count";
  if (consensus) os << ",rho,consensus_residual,theta";
  os << '\n';
  for (const auto& r : rep.trace) {
    std::string chosen;
    for (std::size_t k = 0; k < r.chosen.size(); ++k) {
      if (k) chosen += ';';
      chosen += std::to_string(r.chosen[k]);
    }
    os << r.iter << ',' << format_double(r.zeta) << ',' << format_double(r.step) << ',' << chosen << ','
       << format_double(r.kkt) << ',' << format_double(r.wall_ms) << ',' << r.active_count;
    if (consensus) {
      os << ',' << format_double(r.rho) << ',' << format_double(r.consensus_residual) << ','
         << format_double(r.theta);
    }
    os << '\n';
  }
}

}  // namespace dckit
