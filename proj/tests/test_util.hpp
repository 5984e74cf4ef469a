#pragma once

#include <random>

#include "dckit/funcs.hpp"

namespace dckit::testing {

inline Vector random_vector(std::mt19937_64& rng, Index n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

inline Matrix random_psd(std::mt19937_64& rng, Index n, Index rank) {
  Matrix B(n, rank);
  std::normal_distribution<double> g(0.0, 1.0);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < rank; ++j) B(i, j) = g(rng);
  }
  return B * B.transpose();
}

inline Vector v1(double a) { return Vector::Constant(1, a); }

inline Vector v2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

inline Vector central_difference(const SmoothConvexFunction& f, const Vector& x, double h) {
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const double step = h * std::max(1.0, std::abs(x[i]));
    Vector xp = x;
    Vector xm = x;
    xp[i] += step;
    xm[i] -= step;
    g[i] = (f.value(xp) - f.value(xm)) / (2.0 * step);
  }
  return g;
}

/// One random atom: affine, PSD quadratic, neglog or quartic, cycling on kind.
inline SmoothConvexFunction random_atom_function(std::mt19937_64& rng, Index n, int kind) {
  switch (kind % 4) {
    case 0: return SmoothConvexFunction::affine(random_vector(rng, n), random_vector(rng, 1)[0]);
    case 1:
      return SmoothConvexFunction::quadratic(random_psd(rng, n, n), random_vector(rng, n),
                                             random_vector(rng, 1)[0]);
    case 2: return SmoothConvexFunction::neg_log(random_vector(rng, n, 0.0, 1.0), 5.0);
    default: return SmoothConvexFunction::even_power(random_vector(rng, n), 0.3, 4);
  }
}

}  // namespace dckit::testing

#include "dckit/subsolver.hpp"

namespace dckit::testing {

/// Random 1-D or 2-D subproblem on [-2, 2]^n, optionally with a two-piece max
/// part and one quadratic constraint that the box midpoint satisfies.
inline SubproblemSpec random_spec(std::mt19937_64& rng, Index n, bool with_max, bool with_constraint) {
  SubproblemSpec s;
  s.X = Polyhedron::box(n, -2.0, 2.0);
  s.smooth = SmoothConvexFunction::quadratic(random_psd(rng, n, 1), random_vector(rng, n), 0.0);
  s.smooth.add_term(0.5, make_neg_log(random_vector(rng, n, 0.0, 0.5), 3.0));
  s.linear = random_vector(rng, n, -2.0, 2.0);
  s.prox_center = random_vector(rng, n, -1.5, 1.5);
  s.prox_weight = 1.0;
  if (with_max) {
    s.max_part = PiecewiseMaxConvex({SmoothConvexFunction::affine(random_vector(rng, n, -3.0, 3.0), 0.0),
                                     SmoothConvexFunction::affine(random_vector(rng, n, -3.0, 3.0), 0.2)});
    s.max_scale = 1.0;
  }
  if (with_constraint) {
    SmoothConstraint c;
    c.g = SmoothConvexFunction::quadratic(Matrix::Identity(n, n), Vector::Zero(n), 0.0);
    c.a = random_vector(rng, n, -0.5, 0.5);
    c.b = 0.5;
    s.constraints.push_back(c);
  }
  return s;
}

inline double spec_objective(const SubproblemSpec& s, const Vector& x) { return detail::true_value(s, x); }

/// Grid argmin over the feasible grid points of [-2, 2]^n.
inline Vector grid_argmin(const SubproblemSpec& s, double h) {
  const Index n = s.X.dim();
  const int m = static_cast<int>(std::lround(4.0 / h));
  Vector best;
  double best_val = std::numeric_limits<double>::infinity();
  Vector x(n);
  auto visit = [&](const Vector& p) {
    for (const auto& c : s.constraints) {
      if (c.excess(p) > 0.0) return;
    }
    const double v = spec_objective(s, p);
    if (v < best_val) {
      best_val = v;
      best = p;
    }
  };
  if (n == 1) {
    for (int i = 0; i <= m; ++i) {
      x[0] = -2.0 + i * h;
      visit(x);
    }
  } else {
    for (int i = 0; i <= m; ++i) {
      for (int j = 0; j <= m; ++j) {
        x[0] = -2.0 + i * h;
        x[1] = -2.0 + j * h;
        visit(x);
      }
    }
  }
  return best;
}

}  // namespace dckit::testing
