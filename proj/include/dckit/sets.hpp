#pragma once

// Polyhedral feasible sets {lower <= x <= upper, Ax <= b}.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "dckit/errors.hpp"
#include "dckit/funcs.hpp"

namespace dckit {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Membership {
  bool inside = true;
  double violation = 0.0;  // largest raw violation, 0 when none
};

struct ActiveSet {
  std::vector<int> lower;  // coordinates sitting on their lower bound
  std::vector<int> upper;
  std::vector<int> rows;   // tight rows of Ax <= b
  bool empty() const { return lower.empty() && upper.empty() && rows.empty(); }
};

class Polyhedron {
 public:
  static constexpr int kMaxSweeps = 10000;
  static constexpr double kDefaultProjectTol = 1e-13;

  Polyhedron() = default;

  Polyhedron(Vector lower, Vector upper, Matrix A, Vector b)
      : lower_(std::move(lower)), upper_(std::move(upper)), A_(std::move(A)), b_(std::move(b)) {
    const Index n = lower_.size();
    if (upper_.size() != n) throw InvalidParams("polyhedron: bound vectors differ in length");
    if (A_.rows() != b_.size()) throw InvalidParams("polyhedron: A and b row counts differ");
    if (A_.rows() > 0 && A_.cols() != n) throw InvalidParams("polyhedron: A has the wrong column count");
    if (A_.rows() == 0) A_.resize(0, n);
    for (Index i = 0; i < n; ++i) {
      if (std::isnan(lower_[i]) || std::isnan(upper_[i]) || lower_[i] > upper_[i]) {
        throw InvalidParams("polyhedron: lower bound exceeds upper bound at coordinate " + std::to_string(i));
      }
    }
    row_norm_sq_ = A_.rowwise().squaredNorm();
    for (Index r = 0; r < A_.rows(); ++r) {
      if (!std::isfinite(b_[r])) throw InvalidParams("polyhedron: right-hand side must be finite");
      if (row_norm_sq_[r] == 0.0 && b_[r] < 0.0) throw InvalidParams("polyhedron: row 0 <= negative is empty");
    }
    validate_nonempty();
  }

  static Polyhedron box(const Vector& lower, const Vector& upper) {
    return Polyhedron(lower, upper, Matrix(0, lower.size()), Vector(0));
  }
  static Polyhedron box(Index n, double lo, double hi) {
    return box(Vector::Constant(n, lo), Vector::Constant(n, hi));
  }
  static Polyhedron whole_space(Index n) { return box(n, -kInf, kInf); }

  Index dim() const { return lower_.size(); }
  Index rows() const { return A_.rows(); }
  const Vector& lower() const { return lower_; }
  const Vector& upper() const { return upper_; }
  const Matrix& A() const { return A_; }
  const Vector& b() const { return b_; }

  bool bounded_box() const { return lower_.allFinite() && upper_.allFinite(); }

  /// Same set with extra rows appended.
  Polyhedron with_rows(const Matrix& A_extra, const Vector& b_extra) const {
    Matrix A(A_.rows() + A_extra.rows(), dim());
    A << A_, A_extra;
    Vector b(b_.size() + b_extra.size());
    b << b_, b_extra;
    return Polyhedron(lower_, upper_, std::move(A), std::move(b));
  }

  Vector clamp(const Vector& z) const { return z.cwiseMax(lower_).cwiseMin(upper_); }

  /// Euclidean projection. Exact clamp without rows, Dykstra otherwise.
  Vector project(const Vector& z, double tol = kDefaultProjectTol) const {
    if (z.size() != dim()) throw InvalidParams("projection point has the wrong dimension");
    if (!(tol > 0.0)) throw InvalidParams("projection tolerance must be positive");
    Vector x = clamp(z);
    const Index m = A_.rows();
    if (m == 0) return x;
    if ((A_ * x - b_).maxCoeff() <= 0.0) return x;  // clamp already feasible, so it is the projection

    const double bscale = 1.0 + b_.lpNorm<Eigen::Infinity>();
    x = z;
    Matrix P = Matrix::Zero(dim(), m + 1);  // Dykstra increments, last column for the box
    Vector y(dim());
    Vector prev(dim());
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
      prev = x;
      double inc_change = 0.0;
      for (Index r = 0; r < m; ++r) {
        y = x + P.col(r);
        x = y;
        if (row_norm_sq_[r] > 0.0) {
          const double excess = A_.row(r).dot(y) - b_[r];
          if (excess > 0.0) x.noalias() -= (excess / row_norm_sq_[r]) * A_.row(r).transpose();
        }
        const Vector inc = y - x;
        inc_change += (inc - P.col(r)).squaredNorm();
        P.col(r) = inc;
      }
      y = x + P.col(m);
      x = clamp(y);
      const Vector inc = y - x;
      inc_change += (inc - P.col(m)).squaredNorm();
      P.col(m) = inc;

      const double change = (x - prev).norm();
      if (change <= tol && std::sqrt(inc_change) <= tol) {
        const double viol = std::max(0.0, (A_ * x - b_).maxCoeff());
        if (viol <= tol * bscale) return x;
      }
    }
    throw NonConvergence("projection did not converge within " + std::to_string(kMaxSweeps) + " sweeps");
  }

  /// True iff every constraint is violated by at most tol * (1 + |bound|).
  Membership contains(const Vector& x, double tol = 1e-9) const {
    if (x.size() != dim()) throw InvalidParams("point has the wrong dimension");
    Membership out;
    auto visit = [&](double excess, double bound) {
      if (excess > 0.0) {
        out.violation = std::max(out.violation, excess);
        if (excess > tol * (1.0 + std::abs(bound))) out.inside = false;
      }
    };
    for (Index i = 0; i < dim(); ++i) {
      if (std::isnan(x[i])) return Membership{false, kInf};
      if (std::isfinite(lower_[i])) visit(lower_[i] - x[i], lower_[i]);
      if (std::isfinite(upper_[i])) visit(x[i] - upper_[i], upper_[i]);
    }
    for (Index r = 0; r < A_.rows(); ++r) visit(A_.row(r).dot(x) - b_[r], b_[r]);
    return out;
  }

  ActiveSet active_rows(const Vector& x, double tol = 1e-9) const {
    if (!contains(x, tol).inside) throw NotFeasible("point lies outside the polyhedron");
    ActiveSet s;
    for (Index i = 0; i < dim(); ++i) {
      if (std::isfinite(lower_[i]) && x[i] - lower_[i] <= tol * (1.0 + std::abs(lower_[i]))) {
        s.lower.push_back(static_cast<int>(i));
      }
      if (std::isfinite(upper_[i]) && upper_[i] - x[i] <= tol * (1.0 + std::abs(upper_[i]))) {
        s.upper.push_back(static_cast<int>(i));
      }
    }
    for (Index r = 0; r < A_.rows(); ++r) {
      if (b_[r] - A_.row(r).dot(x) <= tol * (1.0 + std::abs(b_[r]))) s.rows.push_back(static_cast<int>(r));
    }
    return s;
  }

  /// Columns generate the normal cone N_X(x) as a conic hull.
  Matrix normal_cone_generators(const Vector& x, double tol = 1e-9) const {
    const ActiveSet s = active_rows(x, tol);
    Matrix G = Matrix::Zero(dim(), static_cast<Index>(s.lower.size() + s.upper.size() + s.rows.size()));
    Index c = 0;
    for (int i : s.lower) G(i, c++) = -1.0;
    for (int i : s.upper) G(i, c++) = 1.0;
    for (int r : s.rows) G.col(c++) = A_.row(r).transpose();
    return G;
  }

  /// d in T_X(x) for polyhedral X.
  bool in_tangent_cone(const Vector& x, const Vector& d, double tol = 1e-9) const {
    const Matrix G = normal_cone_generators(x, tol);
    const double scale = 1.0 + d.norm();
    for (Index c = 0; c < G.cols(); ++c) {
      if (G.col(c).dot(d) > tol * scale) return false;
    }
    return true;
  }

  /// Some point of X (projection of the box midpoint).
  Vector interior_guess() const {
    Vector mid(dim());
    for (Index i = 0; i < dim(); ++i) {
      const bool lo = std::isfinite(lower_[i]);
      const bool hi = std::isfinite(upper_[i]);
      mid[i] = lo && hi ? 0.5 * (lower_[i] + upper_[i]) : lo ? lower_[i] : hi ? upper_[i] : 0.0;
    }
    return mid;
  }

 private:
  void validate_nonempty() const {
    if (A_.rows() == 0) return;
    Vector p;
    try {
      p = project(interior_guess(), 1e-12);
    } catch (const NonConvergence&) {
      throw InvalidParams("polyhedron appears to be empty (projection did not settle)");
    }
    if (!contains(p, 1e-7).inside) throw InvalidParams("polyhedron is empty");
  }

  Vector lower_;
  Vector upper_;
  Matrix A_;
  Vector b_;
  Vector row_norm_sq_;
};

}  // namespace dckit
