#pragma once

// Stationarity certificates: d-stationarity, criticality and Clarke
// stationarity for programs with a single concave-part group.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "dckit/dca.hpp"
#include "dckit/errors.hpp"
#include "dckit/funcs.hpp"
#include "dckit/sets.hpp"
#include "dckit/subsolver.hpp"

namespace dckit {

enum class CertKind { D, Critical, Clarke, B };
enum class Verdict { Pass, Fail };

inline const char* to_string(CertKind k) {
  switch (k) {
    case CertKind::D: return "d";
    case CertKind::Critical: return "critical";
    case CertKind::Clarke: return "clarke";
    case CertKind::B: return "B";
  }
  return "?";
}
inline const char* to_string(Verdict v) { return v == Verdict::Pass ? "Pass" : "Fail"; }

struct Certificate {
  CertKind kind = CertKind::D;
  Verdict verdict = Verdict::Fail;
  double residual = 0.0;
  std::vector<int> pieces;          // examined indices (flattened), or (i, j) pairs flattened as i * L + j
  std::vector<Vector> solutions;    // per-piece subproblem solutions
  std::vector<double> displacements;
  Vector witness;                   // best improving point (Fail) or the certifying point
  double witness_decrease = 0.0;    // subproblem decrease achieved by the witness
  Vector weights;                   // convex weights found by the critical / Clarke searches
  bool cq_verified = true;
  std::string note;

  bool passed() const { return verdict == Verdict::Pass; }
};

struct CertifyOptions {
  double tol_active = kTolActive;
  double sub_tol = 1e-10;
  int threads = 0;
  int critical_steps = 500;
  int clarke_max_iter = 100000;
};

namespace detail {

inline void require_feasible(const Polyhedron& X, const Vector& x, double tol) {
  if (x.size() != X.dim()) throw InvalidParams("point has the wrong dimension");
  const Membership m = X.contains(x, std::max(tol, 1e-12));
  if (!m.inside) throw NotFeasible("point violates X by " + std::to_string(m.violation));
}

/// Pieces treated as active by a certificate at tolerance tol.
inline std::vector<int> certificate_active(const PiecewiseMaxConvex& vp, const Vector& x, double tol,
                                           const CertifyOptions& opt) {
  return vp.active_indices(x, std::max(opt.tol_active, tol));
}

/// Euclidean projection onto the probability simplex.
inline Vector project_simplex(const Vector& v) {
  const Index n = v.size();
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0;
  double theta = 0.0;
  for (Index k = 0; k < n; ++k) {
    css += u[static_cast<std::size_t>(k)];
    const double t = (css - 1.0) / static_cast<double>(k + 1);
    if (u[static_cast<std::size_t>(k)] - t > 0.0) theta = t;
  }
  return (v.array() - theta).max(0.0).matrix();
}

}  // namespace detail

/// xbar is d-stationary iff it solves every active piece's linearized
/// proximal subproblem; Pass iff all displacements are at most tol.
inline Certificate check_d_stationary(const DcProgram& program, const Vector& xbar, double tol,
                                      const CertifyOptions& opt = {}) {
  const DcProgram P = flatten_groups(program);
  detail::require_feasible(P.X, xbar, tol);
  const PiecewiseMaxConvex vp = P.varphi();
  Certificate cert;
  cert.kind = CertKind::D;
  cert.pieces = detail::certificate_active(vp, xbar, tol, opt);
  SolveOptions so;
  so.sub_tol = opt.sub_tol;
  so.threads = opt.threads;
  const auto cands = solve_candidates(P, xbar, cert.pieces, so, 0);
  const double phi_bar = P.phi.value(xbar);
  double best_decrease = -kInf;
  for (const auto& c : cands) {
    cert.solutions.push_back(c.x);
    cert.displacements.push_back(c.step);
    cert.residual = std::max(cert.residual, c.step);
    // subproblem decrease relative to xbar: phi(xbar) - [phi(x) - g'(x - xbar) + 1/2 |x - xbar|^2]
    const Vector g = vp.piece(static_cast<std::size_t>(c.index)).gradient(xbar);
    const double sub = P.phi.value(c.x) - g.dot(c.x - xbar) + 0.5 * (c.x - xbar).squaredNorm();
    const double dec = phi_bar - sub;
    if (c.step > tol && dec > best_decrease) {
      best_decrease = dec;
      cert.witness = c.x;
      cert.witness_decrease = dec;
    }
  }
  cert.verdict = cert.residual <= tol ? Verdict::Pass : Verdict::Fail;
  if (cert.passed()) cert.witness = xbar;
  return cert;
}

/// Criticality: some convex combination of active gradients makes xbar a
/// solution of the mixed linearized subproblem. Projected ascent on the
/// concave inner value over the simplex; a Pass is sound, a Fail may be an
/// incomplete search.
inline Certificate check_critical(const DcProgram& program, const Vector& xbar, double tol,
                                  const CertifyOptions& opt = {}) {
  const DcProgram P = flatten_groups(program);
  detail::require_feasible(P.X, xbar, tol);
  const PiecewiseMaxConvex vp = P.varphi();
  Certificate cert;
  cert.kind = CertKind::Critical;
  cert.pieces = detail::certificate_active(vp, xbar, tol, opt);
  const Index m = static_cast<Index>(cert.pieces.size());
  Matrix G(P.dim(), m);
  for (Index k = 0; k < m; ++k) G.col(k) = vp.piece(static_cast<std::size_t>(cert.pieces[k])).gradient(xbar);
  const double phi_bar = P.phi.value(xbar);

  auto inner = [&](const Vector& lam, Vector& xo) {
    const SubproblemSpec spec = linearized_spec(P.phi, P.X, xbar, G * lam, 1.0);
    const SubproblemResult r = solve(spec, opt.sub_tol);
    if (r.status != SubproblemStatus::Solved) throw NonConvergence("criticality inner subproblem failed");
    xo = r.x_opt;
    return P.phi.value(xo) - (G * lam).dot(xo - xbar) + 0.5 * (xo - xbar).squaredNorm() - phi_bar;
  };

  const double gnorm2 = m > 0 ? G.operatorNorm() * G.operatorNorm() : 0.0;
  const double step = gnorm2 > 0.0 ? 1.0 / gnorm2 : 1.0;
  Vector lam = Vector::Constant(m, 1.0 / static_cast<double>(m));
  Vector xo;
  double best = inner(lam, xo);
  Vector best_lam = lam;
  Vector best_x = xo;
  for (int s = 0; s < opt.critical_steps && best < -tol && gnorm2 > 0.0; ++s) {
    const Vector super = -G.transpose() * (xo - xbar);
    lam = detail::project_simplex(lam + step * super);
    const double v = inner(lam, xo);
    if (v > best) {
      best = v;
      best_lam = lam;
      best_x = xo;
    }
  }
  cert.weights = best_lam;
  cert.witness = best_x;
  cert.residual = -best;
  cert.verdict = best >= -tol ? Verdict::Pass : Verdict::Fail;
  if (!cert.passed()) cert.note = "simplex search exhausted; criticality not certified (search may be incomplete)";
  return cert;
}

/// Clarke stationarity for smooth phi: distance from 0 to
/// grad phi - conv{grad psi_i : i active} + N_X(xbar).
inline Certificate check_clarke(const DcProgram& program, const Vector& xbar, double tol,
                                const CertifyOptions& opt = {}) {
  if (program.phi.has_max_part()) throw UnsupportedStructure("Clarke check needs a smooth phi");
  const DcProgram P = flatten_groups(program);
  detail::require_feasible(P.X, xbar, tol);
  const PiecewiseMaxConvex vp = P.varphi();
  Certificate cert;
  cert.kind = CertKind::Clarke;
  cert.pieces = detail::certificate_active(vp, xbar, tol, opt);
  const Index m = static_cast<Index>(cert.pieces.size());
  Matrix G(P.dim(), m);
  for (Index k = 0; k < m; ++k) G.col(k) = vp.piece(static_cast<std::size_t>(cert.pieces[k])).gradient(xbar);
  const Vector b = P.phi.smooth().gradient(xbar);
  const Matrix N = P.X.normal_cone_generators(xbar, std::max(tol, 1e-9));
  const Index q = N.cols();

  // minimize 1/2 ||b - G lam + N mu||^2 over lam in simplex, mu >= 0
  Matrix B(P.dim(), m + q);
  B << -G, N;
  const double L = std::max(B.operatorNorm() * B.operatorNorm(), 1e-12);
  Vector z = Vector::Zero(m + q);
  z.head(m).setConstant(1.0 / static_cast<double>(m));
  auto proj = [&](const Vector& v) {
    Vector o(m + q);
    o.head(m) = detail::project_simplex(v.head(m));
    o.tail(q) = v.tail(q).cwiseMax(0.0);
    return o;
  };
  Vector y = z;
  Vector z_prev = z;
  double t = 1.0;
  double dist = (b + B * z).norm();
  double lower = 0.0;
  for (int it = 0; it < opt.clarke_max_iter; ++it) {
    const Vector r = b + B * z;
    dist = r.norm();
    if (dist <= tol) break;
    // dual bound along u = r / |r|
    const Vector u = r / dist;
    const Vector Nu = N.transpose() * u;
    if (q == 0 || Nu.minCoeff() >= 0.0) {
      lower = std::max(lower, u.dot(b) - (G.transpose() * u).maxCoeff());
      if (lower > tol) break;
    }
    const Vector grad = B.transpose() * (b + B * y);
    z_prev = z;
    z = proj(y - grad / L);
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = z + ((t - 1.0) / tn) * (z - z_prev);
    t = tn;
  }
  cert.weights = z.head(m);
  cert.residual = dist;
  cert.verdict = dist <= tol ? Verdict::Pass : Verdict::Fail;
  cert.witness = xbar;
  if (!cert.passed() && lower <= tol) cert.note = "iteration cap reached before the distance bound was decided";
  return cert;
}

}  // namespace dckit
