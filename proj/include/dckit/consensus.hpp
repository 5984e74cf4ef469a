#pragma once

// Consensus-penalty method for sum-structured programs
//   zeta(x) = phi(x) - sum_i varphi_i(x),  varphi_i = max_k psi_{i,k}.
// Each group i gets its own copy z^i of x; the copies are tied to x by the
// penalty rho/2 sum_i ||z^i - x||^2 and rho grows geometrically.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "dckit/certify.hpp"
#include "dckit/dca.hpp"
#include "dckit/errors.hpp"
#include "dckit/parallel.hpp"
#include "dckit/subsolver.hpp"

namespace dckit {

struct ConsensusState {
  Vector x;
  std::vector<Vector> z;
  double rho = 1.0;
  double tau = 1.0;  // current prox weight
  int inner_iter = 0;
  int outer_iter = 0;

  double residual() const {
    double r = 0.0;
    for (const auto& zi : z) r = std::max(r, (zi - x).norm());
    return r;
  }
};

struct ConsensusOptions {
  double rho0 = 1.0;
  double gamma = 10.0;
  double rho_max = 1e6;
  double cons_tol = 1e-6;
  double stationarity_tol = 1e-7;  // inner phase stops once the scaled step falls below
  double inner_c = 0.0;            // max(stationarity_tol, inner_c / rho^inner_power)
  double inner_power = 1.0;
  int max_inner = 5000;            // per phase
  int max_backtrack = 60;
  bool joint_selection = false;    // score pieces against the new x instead of the current one
  bool momentum = true;            // inertial inner steps, restarted whenever theta would rise
  bool predict = true;             // extrapolate x in 1/rho at each phase start
  double cert_tol = 1e-6;

  void validate() const {
    if (!(rho0 > 0.0)) throw InvalidParams("rho0 must be positive");
    if (!(gamma > 1.0)) throw InvalidParams("gamma must exceed 1");
    if (!(rho_max >= rho0)) throw InvalidParams("rho_max must be at least rho0");
    if (!(cons_tol > 0.0)) throw InvalidParams("consensus tolerance must be positive");
    if (!(stationarity_tol > 0.0)) throw InvalidParams("stationarity tolerance must be positive");
    if (!(inner_c >= 0.0) || !(inner_power >= 0.0)) throw InvalidParams("inner tolerance parameters must be nonnegative");
    if (max_inner < 1 || max_backtrack < 0) throw InvalidParams("iteration caps must be positive");
    if (!(cert_tol > 0.0)) throw InvalidParams("certificate tolerance must be positive");
  }
};

struct ConsensusReport {
  SolveReport report;
  ConsensusState state;
  double consensus_residual = 0.0;
  std::vector<double> phase_residuals;  // residual at the end of each outer phase
  std::optional<Certificate> certificate;
  bool singleton_active = false;        // every M_i(x) is a singleton
  bool rho_exhausted = false;
};

namespace detail {

inline double group_max(const std::vector<SmoothConvexFunction>& g, const Vector& x) {
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& p : g) m = std::max(m, p.value(x));
  return m;
}

/// theta_rho(x, z) = phi(x) - sum_i varphi_i(z^i) + rho/2 sum_i ||z^i - x||^2
inline double consensus_theta(const DcProgram& P, const ConsensusState& s) {
  double t = P.phi.value(s.x);
  for (std::size_t i = 0; i < s.z.size(); ++i) {
    t += -group_max(P.groups[i], s.z[i]) + 0.5 * s.rho * (s.z[i] - s.x).squaredNorm();
  }
  return t;
}

inline double stacked_distance_sq(const ConsensusState& a, const ConsensusState& b) {
  double d = (a.x - b.x).squaredNorm();
  for (std::size_t i = 0; i < a.z.size(); ++i) d += (a.z[i] - b.z[i]).squaredNorm();
  return d;
}

struct AgentMove {
  Vector z;
  int k = -1;
  int candidates = 0;
};

/// Best linearized z-step of agent i: for each eps-active piece k the step is
/// Proj_X((rho x_ref + tau z + grad psi_k(z)) / (rho + tau)).
inline AgentMove agent_step(const DcProgram& P, std::size_t i, const Vector& zi, const Vector& x_ref, double rho,
                            double tau, double epsilon, const Vector& x_score) {
  const auto& g = P.groups[i];
  const PiecewiseMaxConvex vp(g);
  const std::vector<int> act = vp.active_indices(zi, epsilon);
  AgentMove best;
  double best_score = std::numeric_limits<double>::infinity();
  for (int k : act) {
    const Vector target = (rho * x_ref + tau * zi + g[static_cast<std::size_t>(k)].gradient(zi)) / (rho + tau);
    Vector c = P.X.project(target, 1e-12);
    if (!vp.in_domain(c)) continue;
    const double score =
        -vp.value(c) + 0.5 * rho * (c - x_score).squaredNorm() + 0.5 * tau * (c - zi).squaredNorm();
    if (best.k < 0 || (score < best_score && !ties(score, best_score))) {
      best.z = std::move(c);
      best.k = k;
      best_score = score;
    }
  }
  best.candidates = static_cast<int>(act.size());
  if (best.k < 0) {
    best.z = zi;
    best.k = act.empty() ? 0 : act.front();
  }
  return best;
}

/// x and every z^i moved by beta times their last displacement, projected onto X.
inline ConsensusState inertial_point(const DcProgram& P, const ConsensusState& s, const ConsensusState& prev,
                                     double beta) {
  ConsensusState y = s;
  y.x = P.X.project(s.x + beta * (s.x - prev.x), 1e-12);
  for (std::size_t i = 0; i < y.z.size(); ++i) y.z[i] = P.X.project(s.z[i] + beta * (s.z[i] - prev.z[i]), 1e-12);
  return y;
}

/// Step from the base point weighted by each block's prox metric (tau + I rho for
/// x, rho + tau for z^i): the gradient-mapping norm of theta_rho.
inline double scaled_step(const ConsensusState& base, const ConsensusState& next) {
  const double I = static_cast<double>(next.z.size());
  double v = std::pow((next.tau + I * next.rho) * (next.x - base.x).norm(), 2);
  for (std::size_t i = 0; i < next.z.size(); ++i) v += std::pow((next.tau + next.rho) * (next.z[i] - base.z[i]).norm(), 2);
  return std::sqrt(v);
}

inline bool state_in_domain(const DcProgram& P, const ConsensusState& s) {
  if (!P.phi.in_domain(s.x)) return false;
  for (std::size_t i = 0; i < s.z.size(); ++i) {
    if (!PiecewiseMaxConvex(P.groups[i]).in_domain(s.z[i])) return false;
  }
  return true;
}

}  // namespace detail

/// One Jacobi inner step at fixed rho: x minimizes phi plus the coupling with
/// prox weight tau; every z^i takes its best linearized projection step. tau is
/// doubled until theta decreases by at least half the squared displacement.
inline ConsensusState inner_step(const DcProgram& P, const ConsensusState& s, const SolveOptions& opt,
                                 const ConsensusOptions& copt, TraceRow* row = nullptr) {
  const std::size_t I = P.groups.size();
  if (s.z.size() != I) throw InvalidParams("consensus state needs one copy per group");
  const double theta0 = detail::consensus_theta(P, s);
  Vector zbar = Vector::Zero(P.dim());
  for (const auto& zi : s.z) zbar += zi;
  zbar /= static_cast<double>(I);
  const double Irho = static_cast<double>(I) * s.rho;

  // sqrt(I) rho removes the x/z offset mode in one step on quadratic models
  double tau = std::max(opt.prox_weight, std::sqrt(static_cast<double>(I)) * s.rho);
  ConsensusState next;
  for (int bt = 0;; ++bt) {
    // phi(y) + rho/2 sum ||z^i - y||^2 + tau/2 ||y - x||^2, written as a linearization around x
    const SubproblemSpec spec = linearized_spec(P.phi, P.X, s.x, Irho * (zbar - s.x), tau + Irho);
    std::vector<detail::AgentMove> moves;
    SubproblemResult rx;
    if (copt.joint_selection) {
      rx = solve(spec, opt.sub_tol);
      if (rx.status != SubproblemStatus::Solved) throw NonConvergence("consensus x-subproblem failed", s.inner_iter);
      moves = parallel_map<detail::AgentMove>(
          I, [&](std::size_t i) { return detail::agent_step(P, i, s.z[i], s.x, s.rho, tau, opt.epsilon, rx.x_opt); },
          opt.threads);
    } else {
      // task 0 is the x-subproblem, tasks 1..I the agents
      struct Task {
        SubproblemResult x;
        detail::AgentMove agent;
      };
      auto tasks = parallel_map<Task>(
          I + 1,
          [&](std::size_t t) {
            Task out;
            if (t == 0) {
              out.x = solve(spec, opt.sub_tol);
            } else {
              out.agent = detail::agent_step(P, t - 1, s.z[t - 1], s.x, s.rho, tau, opt.epsilon, s.x);
            }
            return out;
          },
          opt.threads);
      rx = std::move(tasks[0].x);
      if (rx.status != SubproblemStatus::Solved) throw NonConvergence("consensus x-subproblem failed", s.inner_iter);
      for (std::size_t i = 1; i <= I; ++i) moves.push_back(std::move(tasks[i].agent));
    }
    next = s;
    next.x = rx.x_opt;
    for (std::size_t i = 0; i < I; ++i) next.z[i] = moves[i].z;
    next.tau = tau;
    ++next.inner_iter;
    const double theta1 = detail::consensus_theta(P, next);
    const double dist = detail::stacked_distance_sq(next, s);
    const bool accepted = theta1 + 0.5 * dist <= theta0 + 1e-12 * (1.0 + std::abs(theta0));
    if (accepted || bt >= copt.max_backtrack) {
      if (row) {
        row->chosen.clear();
        row->active_count = 0;
        for (const auto& m : moves) {
          row->chosen.push_back(m.k);
          row->active_count += m.candidates;
        }
        row->kkt = rx.kkt_residual;
        row->step = std::sqrt(dist);
        row->theta = theta1;
        row->accepted = accepted;
      }
      if (!accepted) next = s;
      return next;
    }
    tau *= 2.0;
  }
}

inline ConsensusState initial_consensus_state(const DcProgram& P, const Vector& x, double rho) {
  ConsensusState s;
  s.x = x;
  s.z.assign(P.groups.size(), x);
  s.rho = rho;
  return s;
}

/// Outer loop over rho0, rho0 gamma, ... with warm starts. Stops once the
/// consensus residual is below cons_tol and an inner step falls below tol_step.
inline ConsensusReport consensus_solve(const DcProgram& P, const Vector& x0, const ConsensusOptions& copt = {},
                                       const SolveOptions& opt = {}) {
  copt.validate();
  opt.validate();
  P.validate();
  if (!P.X.bounded_box()) {
    throw InvalidParams("consensus method needs a bounded X (gradients of the pieces must stay bounded)");
  }
  detail::Stopwatch clock(opt.timing);
  ConsensusReport out;
  SolveReport& rep = out.report;
  rep.method = "consensus";
  const Vector x = detail::feasible_start(P, x0, rep.start_projected);
  ConsensusState s = initial_consensus_state(P, x, copt.rho0);
  {
    TraceRow r = detail::initial_row(P, x);
    r.rho = s.rho;
    r.consensus_residual = 0.0;
    r.theta = detail::consensus_theta(P, s);
    rep.trace.push_back(std::move(r));
  }
  int iter = 0;
  bool converged = false;
  int rejected = 0;
  Vector phase_x_prev;
  Vector phase_x_end;
  for (bool first = true;; first = false) {
    if (!first) {
      // equilibrium offsets z^i - x scale like 1/rho; shrinking them keeps x in place
      for (auto& zi : s.z) zi = s.x + (zi - s.x) / copt.gamma;
      if (copt.predict && phase_x_prev.size() == s.x.size()) {
        // x(rho) ~ x* + c / rho, so the next phase limit lies about (x_nu - x_nu-1) / gamma further
        const Vector shift = (s.x - phase_x_prev) / copt.gamma;
        ConsensusState moved = s;
        moved.x = P.X.project(s.x + shift, 1e-12);
        for (auto& zi : moved.z) zi = P.X.project(zi + shift, 1e-12);
        if (detail::state_in_domain(P, moved)) s = std::move(moved);
      }
      s.rho *= copt.gamma;
    }
    const double inner_tol = std::max(copt.stationarity_tol, copt.inner_c / std::pow(s.rho, copt.inner_power));
    double last_scaled = kInf;
    bool stalled = false;
    detail::StallCounter stall;
    ConsensusState prev = s;
    double t = 1.0;
    for (int k = 0; k < copt.max_inner; ++k) {
      TraceRow row;
      ConsensusState next;
      ConsensusState base;
      bool plain = true;
      if (copt.momentum && k > 0) {
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        base = detail::inertial_point(P, s, prev, (t - 1.0) / t_next);
        t = t_next;
        if (detail::state_in_domain(P, base)) {
          next = inner_step(P, base, opt, copt, &row);
          plain = !(row.accepted && row.theta <= detail::consensus_theta(P, s));
        }
      }
      if (plain) {
        t = 1.0;
        base = s;
        next = inner_step(P, s, opt, copt, &row);
      }
      const double theta_before = detail::consensus_theta(P, s);
      prev = s;
      s = std::move(next);
      row.step = std::sqrt(detail::stacked_distance_sq(s, prev));
      last_scaled = detail::scaled_step(base, s);
      // theta frozen at rounding level: the scaled step has hit its numerical floor
      stalled = stall.update(theta_before, row.theta, row.step, 0.0);
      row.iter = ++iter;
      row.x = s.x;
      row.zeta = P.zeta(s.x);
      row.rho = s.rho;
      row.consensus_residual = s.residual();
      row.wall_ms = clock.ms();
      if (!row.accepted) ++rejected;
      rep.trace.push_back(std::move(row));
      if (last_scaled <= inner_tol || stalled || !rep.trace.back().accepted) break;
    }
    ++s.outer_iter;
    out.phase_residuals.push_back(s.residual());
    phase_x_prev = phase_x_end;
    phase_x_end = s.x;
    if (s.residual() <= copt.cons_tol && (last_scaled <= inner_tol || stalled)) {
      converged = true;
      break;
    }
    if (s.rho * copt.gamma > copt.rho_max * (1.0 + 1e-12)) {
      out.rho_exhausted = true;
      break;
    }
  }
  rep.iterations = iter;
  rep.x = s.x;
  rep.zeta = P.zeta(s.x);
  rep.termination = converged ? Termination::StepBelowTol : Termination::MaxIter;
  out.state = s;
  out.consensus_residual = s.residual();
  bool singleton = true;
  for (const auto& g : P.groups) singleton = singleton && PiecewiseMaxConvex(g).active_indices(s.x, opt.tol_active).size() == 1;
  out.singleton_active = singleton;
  try {
    CertifyOptions co;
    co.tol_active = opt.tol_active;
    co.threads = opt.threads;
    out.certificate = check_d_stationary(P, s.x, copt.cert_tol, co);
  } catch (const TupleExplosion&) {
    rep.note = "certificate skipped: tuple count exceeds the cap";
  }
  auto append = [&](const std::string& m) { rep.note += (rep.note.empty() ? "" : "; ") + m; };
  if (out.rho_exhausted) append("rho_max reached with consensus residual " + format_double(out.consensus_residual));
  if (rejected > 0) append(std::to_string(rejected) + " inner step(s) rejected after backtracking");
  if (!singleton) append("some M_i(x) is not a singleton; the stationarity claim is downgraded");
  return out;
}

}  // namespace dckit
