#pragma once

// Accelerated projected gradient (FISTA with backtracking and function-value
// restart) for smooth convex objectives over a closed convex set.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

#include "dckit/errors.hpp"
#include "dckit/funcs.hpp"

namespace dckit {

struct ApgOptions {
  double tol = 1e-10;       // target natural residual ||x - P(x - grad f(x))||
  int max_iter = 100000;
  double L0 = 1.0;          // initial Lipschitz estimate
  int max_doublings = 60;   // per iteration
};

struct ApgResult {
  Vector x;
  double value = 0.0;
  double residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  double L = 1.0;
};

/// Residual floor reflecting the rounding in x - P(x - g): one ulp of x moves
/// the gradient by up to L ulps.
inline double residual_floor(const Vector& x, const Vector& g, double L = 1.0) {
  const double eps = std::numeric_limits<double>::epsilon();
  return 8.0 * eps * (1.0 + (1.0 + L) * x.lpNorm<Eigen::Infinity>() + g.lpNorm<Eigen::Infinity>());
}

/// Obj provides in_domain(x), value(x), gradient(x); Proj maps into the set.
/// x0 must already be feasible and inside the domain.
template <class Obj, class Proj>
ApgResult apg_minimize(const Obj& f, const Proj& project, const Vector& x0, const ApgOptions& opt) {
  const double eps = std::numeric_limits<double>::epsilon();
  ApgResult res;
  res.L = std::max(opt.L0, 1e-12);
  if (!f.in_domain(x0)) throw DomainViolation("start point of the gradient method is outside the domain");

  Vector x = x0;
  double fx = f.value(x);
  Vector gx = f.gradient(x);

  auto natural_residual = [&](const Vector& p, const Vector& gp) { return (p - project(p - gp)).norm(); };

  {
    const double r = natural_residual(x, gx);
    if (r <= opt.tol + residual_floor(x, gx, res.L)) {
      res.x = x;
      res.value = fx;
      res.residual = r;
      res.converged = true;
      return res;
    }
  }

  Vector y = x;
  double fy = fx;
  Vector gy = gx;
  Vector x_prev = x;
  double t = 1.0;
  double L = res.L;
  const double L_floor = res.L;
  Vector xn(x.size());

  for (int it = 1; it <= opt.max_iter; ++it) {
    res.iterations = it;
    double fn = 0.0;
    int doublings = 0;
    for (;;) {
      xn = project(y - gy / L);
      if (f.in_domain(xn)) {
        fn = f.value(xn);
        const Vector d = xn - y;
        const double dd = d.squaredNorm();
        const double model = fy + gy.dot(d) + 0.5 * L * dd;
        const double noise = 10.0 * eps * (std::abs(fy) + std::abs(fn));
        if (fn <= model + noise) break;
        // values too close to resolve: fall back to a curvature test on gradients
        if (fn - model <= 100.0 * noise && (f.gradient(xn) - gy).dot(d) <= L * dd) break;
      }
      L *= 2.0;
      if (++doublings > opt.max_doublings) {
        res.x = x;
        res.value = fx;
        res.L = L;
        return res;  // not converged
      }
    }

    const double gm = L * (xn - y).norm();  // gradient-mapping norm at y

    if (fn > fx + 1000.0 * eps * (std::abs(fx) + std::abs(fn))) {
      // momentum overshot: restart from the current iterate
      if (t == 1.0 && (y - x).squaredNorm() == 0.0) {
        // plain projected step from x failed to descend; only rounding is left
        const double r = natural_residual(x, gx);
        res.x = x;
        res.value = fx;
        res.residual = r;
        res.converged = r <= opt.tol + residual_floor(x, gx, L);
        res.L = L;
        return res;
      }
      y = x;
      fy = fx;
      gy = gx;
      t = 1.0;
      L = std::max(L_floor, 0.5 * L);
      continue;
    }

    x_prev = x;
    x = xn;
    fx = fn;
    gx = f.gradient(x);

    if (gm <= 10.0 * opt.tol + residual_floor(x, gx, L) || it % 50 == 0) {
      const double r = natural_residual(x, gx);
      res.residual = r;
      if (r <= opt.tol + residual_floor(x, gx, L)) {
        res.x = x;
        res.value = fx;
        res.converged = true;
        res.L = L;
        return res;
      }
    }

    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = x + ((t - 1.0) / t_next) * (x - x_prev);
    t = t_next;
    y = project(y);
    if (!f.in_domain(y)) {
      y = x;
      t = 1.0;
    }
    if (y == x) {
      fy = fx;
      gy = gx;
    } else {
      fy = f.value(y);
      gy = f.gradient(y);
    }
  }
  res.x = x;
  res.value = fx;
  res.residual = natural_residual(x, gx);
  res.converged = res.residual <= opt.tol + residual_floor(x, gx, L);
  res.L = L;
  return res;
}

}  // namespace dckit
