#pragma once

// Convex building blocks: smooth atoms, nonnegative combinations of atoms,
// pointwise maxima of those, and the calculus (values, gradients, active
// sets, directional derivatives) the solvers need.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "dckit/errors.hpp"

namespace dckit {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Default tie band used for the numerical argmax set M(x).
inline constexpr double kTolActive = 1e-9;

/// x -> a'x + b
struct Affine {
  Vector a;
  double b = 0.0;
};

/// x -> 1/2 x'Qx + c'x + d with Q symmetric positive semidefinite.
struct Quadratic {
  Matrix Q;
  Vector c;
  double d = 0.0;
};

/// x -> -log(a'x + b) on {a'x + b > 0}.
struct NegLogAffine {
  Vector a;
  double b = 0.0;
};

/// x -> (a'x + b)^p for an even integer p >= 2.
struct EvenPower {
  Vector a;
  double b = 0.0;
  int p = 2;
};

using Atom = std::variant<Affine, Quadratic, NegLogAffine, EvenPower>;

inline Index atom_dim(const Atom& atom) {
  return std::visit(
      [](const auto& a) -> Index {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, Quadratic>) {
          return a.c.size();
        } else {
          return a.a.size();
        }
      },
      atom);
}

inline Atom make_affine(Vector a, double b) { return Affine{std::move(a), b}; }

/// Symmetrizes Q and rejects it if its smallest eigenvalue is below -1e-10.
inline Atom make_quadratic(const Matrix& Q, Vector c, double d) {
  if (Q.rows() != Q.cols() || Q.rows() != c.size()) {
    throw InvalidParams("quadratic atom: Q must be square and match c");
  }
  Matrix S = 0.5 * (Q + Q.transpose());
  if (S.size() > 0) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(S, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-10) {
      throw InvalidParams("quadratic atom: Q is not positive semidefinite (min eigenvalue " +
                          std::to_string(eig.eigenvalues().minCoeff()) + ")");
    }
  }
  return Quadratic{std::move(S), std::move(c), d};
}

inline Atom make_neg_log(Vector a, double b) { return NegLogAffine{std::move(a), b}; }

inline Atom make_even_power(Vector a, double b, int p) {
  if (p < 2 || p % 2 != 0) throw InvalidParams("power atom: exponent must be an even integer >= 2");
  return EvenPower{std::move(a), b, p};
}

namespace detail {

inline bool atom_in_domain(const Atom& atom, const Vector& x) {
  if (const auto* nl = std::get_if<NegLogAffine>(&atom)) return nl->a.dot(x) + nl->b > 0.0;
  return true;
}

inline double atom_value(const Atom& atom, const Vector& x) {
  return std::visit(
      [&x](const auto& a) -> double {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, Affine>) {
          return a.a.dot(x) + a.b;
        } else if constexpr (std::is_same_v<T, Quadratic>) {
          return 0.5 * x.dot(a.Q * x) + a.c.dot(x) + a.d;
        } else if constexpr (std::is_same_v<T, NegLogAffine>) {
          const double arg = a.a.dot(x) + a.b;
          if (!(arg > 0.0)) {
            throw DomainViolation("log argument " + std::to_string(arg) + " is not positive");
          }
          return -std::log(arg);
        } else {
          return std::pow(a.a.dot(x) + a.b, a.p);
        }
      },
      atom);
}

inline void atom_add_gradient(const Atom& atom, double weight, const Vector& x, Vector& g) {
  std::visit(
      [&](const auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, Affine>) {
          g.noalias() += weight * a.a;
        } else if constexpr (std::is_same_v<T, Quadratic>) {
          g.noalias() += weight * (a.Q * x + a.c);
        } else if constexpr (std::is_same_v<T, NegLogAffine>) {
          const double arg = a.a.dot(x) + a.b;
          if (!(arg > 0.0)) {
            throw DomainViolation("log argument " + std::to_string(arg) + " is not positive");
          }
          g.noalias() -= (weight / arg) * a.a;
        } else {
          const double u = a.a.dot(x) + a.b;
          g.noalias() += (weight * a.p * std::pow(u, a.p - 1)) * a.a;
        }
      },
      atom);
}

}  // namespace detail

/// A weighted atom; weights are nonnegative so the sum stays convex.
struct Term {
  double weight = 1.0;
  Atom atom;
};

/// Nonnegative combination of smooth convex atoms.
class SmoothConvexFunction {
 public:
  SmoothConvexFunction() = default;
  explicit SmoothConvexFunction(Index n) : n_(n) {}
  SmoothConvexFunction(Index n, std::vector<Term> terms) : n_(n), terms_(std::move(terms)) {
    for (const Term& t : terms_) check_term(t);
  }

  static SmoothConvexFunction zero(Index n) { return SmoothConvexFunction(n); }
  static SmoothConvexFunction constant(Index n, double c) {
    return SmoothConvexFunction(n, {Term{1.0, make_affine(Vector::Zero(n), c)}});
  }
  static SmoothConvexFunction affine(const Vector& a, double b) {
    return SmoothConvexFunction(a.size(), {Term{1.0, make_affine(a, b)}});
  }
  static SmoothConvexFunction quadratic(const Matrix& Q, const Vector& c, double d) {
    return SmoothConvexFunction(c.size(), {Term{1.0, make_quadratic(Q, c, d)}});
  }
  static SmoothConvexFunction neg_log(const Vector& a, double b) {
    return SmoothConvexFunction(a.size(), {Term{1.0, make_neg_log(a, b)}});
  }
  static SmoothConvexFunction even_power(const Vector& a, double b, int p) {
    return SmoothConvexFunction(a.size(), {Term{1.0, make_even_power(a, b, p)}});
  }

  Index dim() const { return n_; }
  const std::vector<Term>& terms() const { return terms_; }
  bool empty() const { return terms_.empty(); }

  void add_term(double weight, Atom atom) {
    Term t{weight, std::move(atom)};
    check_term(t);
    if (weight != 0.0) terms_.push_back(std::move(t));
  }

  bool in_domain(const Vector& x) const {
    for (const Term& t : terms_) {
      if (!detail::atom_in_domain(t.atom, x)) return false;
    }
    return true;
  }

  double value(const Vector& x) const {
    check_dim(x);
    double v = 0.0;
    for (const Term& t : terms_) v += t.weight * detail::atom_value(t.atom, x);
    return v;
  }

  Vector gradient(const Vector& x) const {
    check_dim(x);
    Vector g = Vector::Zero(n_);
    for (const Term& t : terms_) detail::atom_add_gradient(t.atom, t.weight, x, g);
    return g;
  }

  /// Upper bound on the Hessian norm contributed by quadratic atoms; log and
  /// power atoms have no global bound and are handled by backtracking.
  double quadratic_curvature() const {
    double L = 0.0;
    for (const Term& t : terms_) {
      if (const auto* q = std::get_if<Quadratic>(&t.atom)) {
        if (q->Q.size() > 0) {
          Eigen::SelfAdjointEigenSolver<Matrix> eig(q->Q, Eigen::EigenvaluesOnly);
          L += t.weight * std::max(0.0, eig.eigenvalues().maxCoeff());
        }
      }
    }
    return L;
  }

  SmoothConvexFunction& operator+=(const SmoothConvexFunction& other) {
    if (other.n_ != n_) throw InvalidParams("adding functions of different dimension");
    terms_.insert(terms_.end(), other.terms_.begin(), other.terms_.end());
    return *this;
  }

  /// Multiplies every weight by s >= 0.
  SmoothConvexFunction scaled(double s) const {
    if (s < 0.0) throw InvalidParams("negative scale on a convex function");
    SmoothConvexFunction out(n_);
    if (s == 0.0) return out;
    for (const Term& t : terms_) out.terms_.push_back(Term{t.weight * s, t.atom});
    return out;
  }

  /// Adds the affine function a'x + b (any sign).
  SmoothConvexFunction plus_affine(const Vector& a, double b) const {
    SmoothConvexFunction out = *this;
    out.add_term(1.0, make_affine(a, b));
    return out;
  }

 private:
  void check_term(const Term& t) const {
    if (!(t.weight >= 0.0) || !std::isfinite(t.weight)) {
      throw InvalidParams("term weights must be finite and nonnegative");
    }
    if (atom_dim(t.atom) != n_) throw InvalidParams("atom dimension does not match function");
  }
  void check_dim(const Vector& x) const {
    if (x.size() != n_) throw InvalidParams("point dimension does not match function");
  }

  Index n_ = 0;
  std::vector<Term> terms_;
};

inline SmoothConvexFunction operator+(SmoothConvexFunction lhs, const SmoothConvexFunction& rhs) {
  lhs += rhs;
  return lhs;
}

/// Indices i with values[i] >= max(values) - margin, in increasing order.
inline std::vector<int> indices_within(const Vector& values, double margin) {
  std::vector<int> out;
  if (values.size() == 0) return out;
  const double top = values.maxCoeff();
  for (Index i = 0; i < values.size(); ++i) {
    if (values[i] >= top - margin) out.push_back(static_cast<int>(i));
  }
  return out;
}

/// Pointwise maximum of finitely many smooth convex functions.
class PiecewiseMaxConvex {
 public:
  PiecewiseMaxConvex() = default;
  explicit PiecewiseMaxConvex(std::vector<SmoothConvexFunction> pieces) : pieces_(std::move(pieces)) {
    if (pieces_.empty()) throw InvalidParams("a max function needs at least one piece");
    for (const auto& p : pieces_) {
      if (p.dim() != pieces_.front().dim()) throw InvalidParams("pieces differ in dimension");
    }
  }

  Index dim() const { return pieces_.empty() ? 0 : pieces_.front().dim(); }
  std::size_t size() const { return pieces_.size(); }
  const std::vector<SmoothConvexFunction>& pieces() const { return pieces_; }
  const SmoothConvexFunction& piece(std::size_t i) const { return pieces_.at(i); }

  bool in_domain(const Vector& x) const {
    return std::all_of(pieces_.begin(), pieces_.end(), [&](const auto& p) { return p.in_domain(x); });
  }

  Vector piece_values(const Vector& x) const {
    Vector v(static_cast<Index>(pieces_.size()));
    for (std::size_t i = 0; i < pieces_.size(); ++i) v[static_cast<Index>(i)] = pieces_[i].value(x);
    return v;
  }

  double value(const Vector& x) const { return piece_values(x).maxCoeff(); }

  /// {i : psi_i(x) >= max - margin}. margin = kTolActive gives the numerical
  /// argmax set; margin = epsilon gives the epsilon-active set; never empty.
  std::vector<int> active_indices(const Vector& x, double margin = kTolActive) const {
    if (margin < 0.0) throw InvalidParams("active-set margin must be nonnegative");
    return indices_within(piece_values(x), margin);
  }

  /// max over the numerically active pieces of grad psi_i(x)'d.
  double directional_derivative(const Vector& x, const Vector& d, double tol_active = kTolActive) const {
    double best = -std::numeric_limits<double>::infinity();
    for (int i : active_indices(x, tol_active)) best = std::max(best, pieces_[i].gradient(x).dot(d));
    return best;
  }

 private:
  std::vector<SmoothConvexFunction> pieces_;
};

/// Convex function = smooth part + optional pointwise-max part (added).
class ConvexFunction {
 public:
  ConvexFunction() = default;
  explicit ConvexFunction(SmoothConvexFunction smooth) : smooth_(std::move(smooth)) {}
  ConvexFunction(SmoothConvexFunction smooth, PiecewiseMaxConvex max_part)
      : smooth_(std::move(smooth)), max_part_(std::move(max_part)) {
    if (max_part_->dim() != smooth_.dim()) throw InvalidParams("max part dimension mismatch");
  }

  Index dim() const { return smooth_.dim(); }
  const SmoothConvexFunction& smooth() const { return smooth_; }
  const std::optional<PiecewiseMaxConvex>& max_part() const { return max_part_; }
  bool has_max_part() const { return max_part_.has_value(); }

  bool in_domain(const Vector& x) const {
    return smooth_.in_domain(x) && (!max_part_ || max_part_->in_domain(x));
  }

  double value(const Vector& x) const {
    double v = smooth_.value(x);
    if (max_part_) v += max_part_->value(x);
    return v;
  }

  double directional_derivative(const Vector& x, const Vector& d, double tol_active = kTolActive) const {
    double v = smooth_.gradient(x).dot(d);
    if (max_part_) v += max_part_->directional_derivative(x, d, tol_active);
    return v;
  }

  /// The same function written as a single max of smooth pieces
  /// (smooth + q_k for each max piece, or just the smooth part).
  std::vector<SmoothConvexFunction> as_max_pieces() const {
    if (!max_part_) return {smooth_};
    std::vector<SmoothConvexFunction> out;
    out.reserve(max_part_->size());
    for (const auto& q : max_part_->pieces()) out.push_back(smooth_ + q);
    return out;
  }

  ConvexFunction scaled(double s) const {
    if (!max_part_) return ConvexFunction(smooth_.scaled(s));
    std::vector<SmoothConvexFunction> pieces;
    for (const auto& q : max_part_->pieces()) pieces.push_back(q.scaled(s));
    return ConvexFunction(smooth_.scaled(s), PiecewiseMaxConvex(std::move(pieces)));
  }

 private:
  SmoothConvexFunction smooth_;
  std::optional<PiecewiseMaxConvex> max_part_;
};

/// zeta'(x; d) for zeta = phi - varphi.
inline double directional_derivative(const ConvexFunction& phi, const PiecewiseMaxConvex& varphi,
                                     const Vector& x, const Vector& d,
                                     double tol_active = kTolActive) {
  return phi.directional_derivative(x, d, tol_active) - varphi.directional_derivative(x, d, tol_active);
}

/// Pieces of max_a f_a + max_b g_b as the tuple sums {f_a + g_b}, a slowest.
inline std::vector<SmoothConvexFunction> tuple_sums(const std::vector<std::vector<SmoothConvexFunction>>& groups,
                                                    std::size_t cap) {
  std::size_t count = 1;
  for (const auto& g : groups) {
    if (g.empty()) throw InvalidParams("empty piece group");
    if (count > cap / g.size()) {
      throw TupleExplosion("tuple enumeration exceeds cap of " + std::to_string(cap));
    }
    count *= g.size();
  }
  std::vector<SmoothConvexFunction> out{groups.front().begin(), groups.front().end()};
  for (std::size_t gi = 1; gi < groups.size(); ++gi) {
    std::vector<SmoothConvexFunction> next;
    next.reserve(out.size() * groups[gi].size());
    for (const auto& f : out) {
      for (const auto& g : groups[gi]) next.push_back(f + g);
    }
    out = std::move(next);
  }
  return out;
}

/// f + g for two convex functions; max parts are combined by tuple sums.
inline ConvexFunction add(const ConvexFunction& f, const ConvexFunction& g, std::size_t cap = 4096) {
  SmoothConvexFunction smooth = f.smooth() + g.smooth();
  if (!f.has_max_part() && !g.has_max_part()) return ConvexFunction(std::move(smooth));
  if (!g.has_max_part()) return ConvexFunction(std::move(smooth), *f.max_part());
  if (!f.has_max_part()) return ConvexFunction(std::move(smooth), *g.max_part());
  return ConvexFunction(std::move(smooth),
                        PiecewiseMaxConvex(tuple_sums({f.max_part()->pieces(), g.max_part()->pieces()}, cap)));
}

}  // namespace dckit
