#pragma once

// Instance builders: the multi-jammer secrecy sum-rate program (optionally with
// per-user secrecy-rate floors), QPCC instances, seeded random programs, and the
// named gallery of small examples with their known stationarity verdicts.

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dckit/certify.hpp"
#include "dckit/dca.hpp"
#include "dckit/dcc.hpp"
#include "dckit/errors.hpp"
#include "dckit/funcs.hpp"
#include "dckit/sets.hpp"

namespace dckit {

// ---------------------------------------------------------------- secrecy rate

/// Gains follow the convention gain(transmitter, receiver); receiver 0 of the
/// eavesdropper tables is the eavesdropper itself.
struct SecrecyParams {
  int Q = 1;                  // users
  int N = 1;                  // subchannels
  int J = 0;                  // jammers
  std::vector<Matrix> H;      // per channel k: Q x Q, H[k](r, q) user r -> receiver q
  Matrix H0;                  // Q x N, user q -> eavesdropper on channel k
  std::vector<Matrix> Hj;     // per channel k: J x Q, jammer j -> receiver q
  Matrix Hj0;                 // J x N, jammer j -> eavesdropper
  Matrix sigma2;              // Q x N noise variances
  Vector p_max;               // Q
  Vector pj_max;              // J
  Vector qos;                 // empty, or Q secrecy-rate floors

  Index dim() const { return static_cast<Index>(Q) * N + static_cast<Index>(J) * N; }
  Index user_var(int q, int k) const { return static_cast<Index>(q) * N + k; }
  Index jammer_var(int j, int k) const { return static_cast<Index>(Q) * N + static_cast<Index>(j) * N + k; }

  void validate() const {
    if (Q < 1 || N < 1 || J < 0) throw InvalidParams("secrecy model needs Q >= 1, N >= 1, J >= 0");
    if (static_cast<int>(H.size()) != N || static_cast<int>(Hj.size()) != N) {
      throw InvalidParams("per-channel gain tables must have N entries");
    }
    for (int k = 0; k < N; ++k) {
      if (H[k].rows() != Q || H[k].cols() != Q) throw InvalidParams("H[k] must be Q x Q");
      if (Hj[k].rows() != J || Hj[k].cols() != Q) throw InvalidParams("Hj[k] must be J x Q");
      if ((H[k].array() < 0.0).any() || (Hj[k].array() < 0.0).any()) throw InvalidParams("gains must be nonnegative");
    }
    if (H0.rows() != Q || H0.cols() != N || Hj0.rows() != J || Hj0.cols() != N) {
      throw InvalidParams("eavesdropper gain tables have the wrong shape");
    }
    if ((H0.array() < 0.0).any() || (Hj0.array() < 0.0).any()) throw InvalidParams("gains must be nonnegative");
    if (sigma2.rows() != Q || sigma2.cols() != N || !(sigma2.array() > 0.0).all()) {
      throw InvalidParams("noise variances must be a positive Q x N table");
    }
    if (p_max.size() != Q || pj_max.size() != J || !(p_max.array() > 0.0).all() ||
        (J > 0 && !(pj_max.array() > 0.0).all())) {
      throw InvalidParams("power budgets must be positive");
    }
    if (qos.size() != 0 && (qos.size() != Q || (qos.array() < 0.0).any())) {
      throw InvalidParams("QoS floors must be Q nonnegative values");
    }
  }
};

/// Seeded instance: gains U[0,1], noise U[0.1,1], budgets U[1,2]. Draw order:
/// H by channel then (r, q), H0, Hj by channel then (j, q), Hj0, sigma2, p_max, pj_max.
inline SecrecyParams random_secrecy_params(int Q, int N, int J, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> gain(0.0, 1.0);
  std::uniform_real_distribution<double> noise(0.1, 1.0);
  std::uniform_real_distribution<double> budget(1.0, 2.0);
  SecrecyParams p;
  p.Q = Q;
  p.N = N;
  p.J = J;
  auto fill = [&](Matrix& m, Index r, Index c, auto& dist) {
    m.resize(r, c);
    for (Index i = 0; i < r; ++i) {
      for (Index j = 0; j < c; ++j) m(i, j) = dist(rng);
    }
  };
  p.H.resize(static_cast<std::size_t>(N));
  for (auto& m : p.H) fill(m, Q, Q, gain);
  fill(p.H0, Q, N, gain);
  p.Hj.resize(static_cast<std::size_t>(N));
  for (auto& m : p.Hj) fill(m, J, Q, gain);
  fill(p.Hj0, J, N, gain);
  fill(p.sigma2, Q, N, noise);
  p.p_max.resize(Q);
  for (Index q = 0; q < Q; ++q) p.p_max[q] = budget(rng);
  p.pj_max.resize(J);
  for (Index j = 0; j < J; ++j) p.pj_max[j] = budget(rng);
  return p;
}

namespace detail {

struct RateAffine {
  Vector a;
  double b = 0.0;
};

/// Interference-plus-noise at the legitimate receiver (S) and at the eavesdropper (T).
inline RateAffine receiver_noise(const SecrecyParams& p, int q, int k) {
  RateAffine s{Vector::Zero(p.dim()), p.sigma2(q, k)};
  for (int r = 0; r < p.Q; ++r) {
    if (r != q) s.a[p.user_var(r, k)] = p.H[static_cast<std::size_t>(k)](r, q);
  }
  for (int j = 0; j < p.J; ++j) s.a[p.jammer_var(j, k)] = p.Hj[static_cast<std::size_t>(k)](j, q);
  return s;
}

inline RateAffine eavesdropper_noise(const SecrecyParams& p, int q, int k) {
  RateAffine t{Vector::Zero(p.dim()), p.sigma2(q, k)};
  for (int r = 0; r < p.Q; ++r) {
    if (r != q) t.a[p.user_var(r, k)] = p.H0(r, k);
  }
  for (int j = 0; j < p.J; ++j) t.a[p.jammer_var(j, k)] = p.Hj0(j, k);
  return t;
}

/// g1 = -log(S + H_qq p_q) - log(T), g2 = -log(S) - log(T + H_q0 p_q); R_qqk - R_q0k = g2 - g1.
inline std::pair<SmoothConvexFunction, SmoothConvexFunction> secrecy_pieces(const SecrecyParams& p, int q, int k) {
  const RateAffine S = receiver_noise(p, q, k);
  const RateAffine T = eavesdropper_noise(p, q, k);
  Vector a1 = S.a;
  a1[p.user_var(q, k)] += p.H[static_cast<std::size_t>(k)](q, q);
  Vector a2 = T.a;
  a2[p.user_var(q, k)] += p.H0(q, k);
  SmoothConvexFunction g1 = SmoothConvexFunction::neg_log(a1, S.b) + SmoothConvexFunction::neg_log(T.a, T.b);
  SmoothConvexFunction g2 = SmoothConvexFunction::neg_log(S.a, S.b) + SmoothConvexFunction::neg_log(a2, T.b);
  return {std::move(g1), std::move(g2)};
}

inline Polyhedron secrecy_set(const SecrecyParams& p) {
  const Index n = p.dim();
  Vector lo = Vector::Zero(n);
  Vector hi(n);
  Matrix A = Matrix::Zero(p.Q + p.J, n);
  Vector b(p.Q + p.J);
  for (int q = 0; q < p.Q; ++q) {
    for (int k = 0; k < p.N; ++k) {
      hi[p.user_var(q, k)] = p.p_max[q];
      A(q, p.user_var(q, k)) = 1.0;
    }
    b[q] = p.p_max[q];
  }
  for (int j = 0; j < p.J; ++j) {
    for (int k = 0; k < p.N; ++k) {
      hi[p.jammer_var(j, k)] = p.pj_max[j];
      A(p.Q + j, p.jammer_var(j, k)) = 1.0;
    }
    b[p.Q + j] = p.pj_max[j];
  }
  return Polyhedron(lo, hi, A, b);
}

}  // namespace detail

/// Per (user, channel) secrecy rate [R_qqk - R_q0k]^+ from the rate formulas directly.
inline Matrix secrecy_rates_direct(const SecrecyParams& p, const Vector& x) {
  Matrix out(p.Q, p.N);
  for (int q = 0; q < p.Q; ++q) {
    for (int k = 0; k < p.N; ++k) {
      const auto S = detail::receiver_noise(p, q, k);
      const auto T = detail::eavesdropper_noise(p, q, k);
      const double pq = x[p.user_var(q, k)];
      const double r1 = std::log1p(p.H[static_cast<std::size_t>(k)](q, q) * pq / (S.a.dot(x) + S.b));
      const double r2 = std::log1p(p.H0(q, k) * pq / (T.a.dot(x) + T.b));
      out(q, k) = std::max(0.0, r1 - r2);
    }
  }
  return out;
}

/// Per-user secrecy rates sum_k [R_qqk - R_q0k]^+.
inline Vector user_secrecy_rates(const SecrecyParams& p, const Vector& x) {
  return secrecy_rates_direct(p, x).rowwise().sum();
}

struct SecrecyProgram {
  DcProgram program;                                // minimize minus the secrecy sum rate
  std::optional<ConstrainedDcProgram> constrained;  // with the merged QoS constraint
  Vector start;                                     // half of each budget spread evenly
};

/// zeta = sum g1 - sum max(g1, g2), one group per (q, k), variables p_q(k) then p^_j(k).
/// QoS floors s_q give s_q + sum_k g1_qk - sum_k max(g1_qk, g2_qk) <= 0, merged over q.
inline SecrecyProgram secrecy_rate_program(const SecrecyParams& p) {
  p.validate();
  const Index n = p.dim();
  SecrecyProgram out;
  SmoothConvexFunction phi = SmoothConvexFunction::zero(n);
  std::vector<std::vector<SmoothConvexFunction>> groups;
  std::vector<ConstraintPart> parts;
  for (int q = 0; q < p.Q; ++q) {
    SmoothConvexFunction user_phi = SmoothConvexFunction::constant(n, p.qos.size() ? p.qos[q] : 0.0);
    std::vector<std::vector<SmoothConvexFunction>> user_groups;
    for (int k = 0; k < p.N; ++k) {
      auto [g1, g2] = detail::secrecy_pieces(p, q, k);
      phi += g1;
      user_phi += g1;
      user_groups.push_back({g1, g2});
      groups.push_back({std::move(g1), std::move(g2)});
    }
    parts.push_back(ConstraintPart{ConvexFunction(user_phi), PiecewiseMaxConvex(tuple_sums(user_groups, kTupleCap))});
  }
  const Polyhedron X = detail::secrecy_set(p);
  out.program = DcProgram{ConvexFunction(std::move(phi)), std::move(groups), X};
  out.start = Vector::Zero(n);
  for (int q = 0; q < p.Q; ++q) {
    for (int k = 0; k < p.N; ++k) out.start[p.user_var(q, k)] = 0.5 * p.p_max[q] / p.N;
  }
  for (int j = 0; j < p.J; ++j) {
    for (int k = 0; k < p.N; ++k) out.start[p.jammer_var(j, k)] = 0.5 * p.pj_max[j] / p.N;
  }
  if (p.qos.size()) out.constrained = ConstrainedDcProgram{out.program, merge_constraints(parts)};
  return out;
}

// ---------------------------------------------------------------- QPCC

enum class ComplementarityEncoding { MinSplit, Bilinear };

/// minimize 1/2 z'Qz + c'z + d over z = (x, y) in Z subject to 0 <= y _|_ r + Nx + My >= 0.
struct QpccData {
  Matrix Q;
  Vector c;
  double d = 0.0;
  Polyhedron Z;
  Vector r;
  Matrix N;  // m x nx
  Matrix M;  // m x m
};

/// Linear parts (y >= 0, w = r + Nx + My >= 0) go into X. The complementarity
/// condition becomes one dc constraint: with MinSplit, sum_i (y_i + w_i) - sum_i max(y_i, w_i) <= 0
/// (that is sum_i min(y_i, w_i) <= 0); with Bilinear, 1/4||y + w||^2 - 1/4||y - w||^2 <= 0.
/// An indefinite Q is split as Q+ - Q- by eigendecomposition.
inline ConstrainedDcProgram qpcc_program(const QpccData& q,
                                         ComplementarityEncoding enc = ComplementarityEncoding::MinSplit) {
  const Index m = q.r.size();
  const Index nx = q.N.cols();
  const Index n = nx + m;
  if (q.N.rows() != m || q.M.rows() != m || q.M.cols() != m || q.Q.rows() != n || q.Q.cols() != n ||
      q.c.size() != n || q.Z.dim() != n || m == 0) {
    throw InvalidParams("QPCC data dimensions are inconsistent");
  }
  const Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (q.Q + q.Q.transpose()));
  Vector pos = es.eigenvalues();
  Vector neg = es.eigenvalues();
  for (Index i = 0; i < n; ++i) {
    const double l = es.eigenvalues()[i];
    pos[i] = l > 1e-10 ? l : 0.0;
    neg[i] = l < -1e-10 ? -l : 0.0;
  }
  const Matrix& V = es.eigenvectors();
  const Matrix Qp = V * pos.asDiagonal() * V.transpose();
  const Matrix Qm = V * neg.asDiagonal() * V.transpose();

  Matrix W(m, n);  // w = W z + r
  W << q.N, q.M;
  Matrix Ey = Matrix::Zero(m, n);
  Ey.rightCols(m).setIdentity();

  Vector lower = q.Z.lower();
  lower.tail(m) = lower.tail(m).cwiseMax(0.0);
  Matrix A(q.Z.rows() + m, n);
  Vector b(q.Z.rows() + m);
  A << q.Z.A(), -W;
  b << q.Z.b(), q.r;
  const Polyhedron X(lower, q.Z.upper(), A, b);

  ConstrainedDcProgram C;
  C.base.phi = ConvexFunction(SmoothConvexFunction::quadratic(Qp, q.c, q.d));
  C.base.groups = {{Qm.isZero(0.0) ? SmoothConvexFunction::zero(n)
                                   : SmoothConvexFunction::quadratic(Qm, Vector::Zero(n), 0.0)}};
  C.base.X = X;
  if (enc == ComplementarityEncoding::MinSplit) {
    const Vector a = (Ey + W).colwise().sum().transpose();
    C.constraint.phi_c = ConvexFunction(SmoothConvexFunction::affine(a, q.r.sum()));
    std::vector<std::vector<SmoothConvexFunction>> groups;
    for (Index i = 0; i < m; ++i) {
      groups.push_back({SmoothConvexFunction::affine(Ey.row(i).transpose(), 0.0),
                        SmoothConvexFunction::affine(W.row(i).transpose(), q.r[i])});
    }
    C.constraint.pieces = tuple_sums(groups, kTupleCap);
  } else {
    // 1/4 ||B z + s||^2 = 1/2 z'(1/2 B'B)z + (1/2 B's)'z + 1/4 ||s||^2
    auto quarter_sq = [&](const Matrix& B, const Vector& s) {
      return SmoothConvexFunction::quadratic(0.5 * B.transpose() * B, 0.5 * B.transpose() * s, 0.25 * s.squaredNorm());
    };
    C.constraint.phi_c = ConvexFunction(quarter_sq(Ey + W, q.r));
    C.constraint.pieces = {quarter_sq(Ey - W, -q.r)};
  }
  C.validate();
  return C;
}

/// minimize (x - 1)^2 + (y - 1)^2 over [0, 2]^2 subject to 0 <= y _|_ y - x >= 0.
inline QpccData qpcc_toy_data() {
  QpccData d;
  d.Q = 2.0 * Matrix::Identity(2, 2);
  d.c = Vector::Constant(2, -2.0);
  d.d = 2.0;
  d.Z = Polyhedron::box(2, 0.0, 2.0);
  d.r = Vector::Zero(1);
  d.N = Matrix::Constant(1, 1, -1.0);
  d.M = Matrix::Constant(1, 1, 1.0);
  return d;
}

// ---------------------------------------------------------------- random programs

/// phi = 1/2 x'(BB' + I)x + c'x, ell rank-one quadratic pieces, X = [-3, 3]^n.
inline DcProgram random_dc_program(std::uint64_t seed, Index n, int ell) {
  if (n < 1 || ell < 1) throw InvalidParams("random program needs n >= 1 and ell >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto gauss = [&](Index r, Index c) {
    Matrix m(r, c);
    for (Index i = 0; i < r; ++i) {
      for (Index j = 0; j < c; ++j) m(i, j) = g(rng);
    }
    return m;
  };
  auto unif = [&](Index r, double s) {
    Vector v(r);
    for (Index i = 0; i < r; ++i) v[i] = s * u(rng);
    return v;
  };
  const Matrix B = gauss(n, n) / std::sqrt(static_cast<double>(n));
  DcProgram P;
  P.X = Polyhedron::box(n, -3.0, 3.0);
  P.phi = ConvexFunction(SmoothConvexFunction::quadratic(B * B.transpose() + Matrix::Identity(n, n), unif(n, 1.0), 0.0));
  std::vector<SmoothConvexFunction> pieces;
  for (int k = 0; k < ell; ++k) {
    const Vector a = gauss(n, 1).col(0) / std::sqrt(static_cast<double>(n));
    pieces.push_back(SmoothConvexFunction::quadratic(0.5 * a * a.transpose(), unif(n, 2.0), u(rng)));
  }
  P.groups = {std::move(pieces)};
  return P;
}

/// random_dc_program plus 1/2||x||^2 - 4 - max_j (a_j'x + b_j) <= 0 with b_j >= 0, so x = 0 is feasible.
inline ConstrainedDcProgram random_constrained_program(std::uint64_t seed, Index n, int ell, int L) {
  if (L < 1) throw InvalidParams("random constraint needs L >= 1");
  ConstrainedDcProgram C;
  C.base = random_dc_program(seed, n, ell);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  C.constraint.phi_c = ConvexFunction(SmoothConvexFunction::quadratic(Matrix::Identity(n, n), Vector::Zero(n), -4.0));
  for (int j = 0; j < L; ++j) {
    Vector a(n);
    for (Index i = 0; i < n; ++i) a[i] = 2.0 * u(rng);
    C.constraint.pieces.push_back(SmoothConvexFunction::affine(a, 0.5 * (1.0 + u(rng))));
  }
  return C;
}

// ---------------------------------------------------------------- gallery

struct VerdictExpectation {
  Vector point;
  CertKind kind;
  Verdict verdict;
};

struct SlaterExpectation {
  Vector point;
  int piece;
  bool holds;
};

struct GalleryEntry {
  std::string name;
  std::string description;
  DcProgram program;
  std::optional<ConstrainedDcProgram> constrained;
  Vector start;
  std::vector<Vector> stationary_points;  // the known d- (or B-) stationary set
  std::vector<VerdictExpectation> verdicts;
  std::vector<SlaterExpectation> slater;
};

inline std::vector<std::string> gallery_names() {
  return {"example3", "abs-square", "neg-abs", "x-plus-abs", "quartic-constraint", "qpcc-toy"};
}

inline GalleryEntry toy_gallery(const std::string& name) {
  auto v1 = [](double a) { return Vector::Constant(1, a); };
  auto quad1 = [&](double q, double c, double d) {
    return SmoothConvexFunction::quadratic(Matrix::Constant(1, 1, q), v1(c), d);
  };
  auto aff1 = [&](double a, double b) { return SmoothConvexFunction::affine(v1(a), b); };
  GalleryEntry e;
  e.name = name;
  if (name == "example3") {
    e.description = "1/2 x^2 - max(-x, 0) on [-10, 10]";
    e.program = DcProgram{ConvexFunction(quad1(1.0, 0.0, 0.0)), {{aff1(-1.0, 0.0), aff1(0.0, 0.0)}},
                          Polyhedron::box(1, -10.0, 10.0)};
    e.start = v1(1.0);
    e.stationary_points = {v1(-1.0)};
    e.verdicts = {{v1(0.0), CertKind::D, Verdict::Fail},
                  {v1(0.0), CertKind::Critical, Verdict::Pass},
                  {v1(-1.0), CertKind::D, Verdict::Pass},
                  {v1(-1.0), CertKind::Critical, Verdict::Pass}};
  } else if (name == "abs-square") {
    e.description = "1 + x^2 - max(2x, -2x) on [-10, 10]";
    e.program = DcProgram{ConvexFunction(quad1(2.0, 0.0, 1.0)), {{aff1(2.0, 0.0), aff1(-2.0, 0.0)}},
                          Polyhedron::box(1, -10.0, 10.0)};
    e.start = v1(0.0);
    e.stationary_points = {v1(-1.0), v1(1.0)};
    e.verdicts = {{v1(0.0), CertKind::Clarke, Verdict::Pass}, {v1(0.0), CertKind::D, Verdict::Fail},
                  {v1(1.0), CertKind::D, Verdict::Pass},      {v1(-1.0), CertKind::D, Verdict::Pass},
                  {v1(0.5), CertKind::Clarke, Verdict::Fail}, {v1(1.0), CertKind::Clarke, Verdict::Pass}};
  } else if (name == "neg-abs") {
    e.description = "0 - max(x, -x) on [-1, 1]";
    e.program = DcProgram{ConvexFunction(SmoothConvexFunction::zero(1)), {{aff1(1.0, 0.0), aff1(-1.0, 0.0)}},
                          Polyhedron::box(1, -1.0, 1.0)};
    e.start = v1(0.0);
    e.stationary_points = {v1(-1.0), v1(1.0)};
    e.verdicts = {{v1(0.0), CertKind::Critical, Verdict::Pass},
                  {v1(0.0), CertKind::Clarke, Verdict::Pass},
                  {v1(0.0), CertKind::D, Verdict::Fail},
                  {v1(1.0), CertKind::D, Verdict::Pass}};
  } else if (name == "x-plus-abs") {
    e.description = "(x + max(x, -x)) - max(x, -x) on [-1, 1]";
    e.program = DcProgram{ConvexFunction(aff1(1.0, 0.0), PiecewiseMaxConvex({aff1(1.0, 0.0), aff1(-1.0, 0.0)})),
                          {{aff1(1.0, 0.0), aff1(-1.0, 0.0)}},
                          Polyhedron::box(1, -1.0, 1.0)};
    e.start = v1(0.0);
    e.stationary_points = {v1(-1.0)};
    e.verdicts = {{v1(0.0), CertKind::D, Verdict::Fail},
                  {v1(0.0), CertKind::Critical, Verdict::Pass},
                  {v1(-1.0), CertKind::D, Verdict::Pass}};
  } else if (name == "quartic-constraint") {
    e.description = "minimize 1/2 (x - 2)^2 subject to x^4 - x^2 <= 0 on the real line";
    ConstrainedDcProgram C;
    C.base = DcProgram{ConvexFunction(quad1(1.0, -2.0, 2.0)), {{SmoothConvexFunction::zero(1)}},
                       Polyhedron::whole_space(1)};
    C.constraint.phi_c = ConvexFunction(SmoothConvexFunction::even_power(v1(1.0), 0.0, 4));
    C.constraint.pieces = {quad1(2.0, 0.0, 0.0)};
    e.program = C.base;
    e.constrained = C;
    e.start = v1(0.0);
    e.stationary_points = {v1(1.0)};
    e.slater = {{v1(0.0), 0, false}, {v1(1.0), 0, true}, {v1(-1.0), 0, true}};
    e.verdicts = {{v1(1.0), CertKind::B, Verdict::Pass}};
  } else if (name == "qpcc-toy") {
    e.description = "minimize (x - 1)^2 + (y - 1)^2 on [0, 2]^2 subject to 0 <= y _|_ y - x >= 0";
    const ConstrainedDcProgram C = qpcc_program(qpcc_toy_data());
    e.program = C.base;
    e.constrained = C;
    e.start = Vector::Zero(2);
    e.stationary_points = {Vector::Ones(2)};
    e.verdicts = {{Vector::Ones(2), CertKind::B, Verdict::Pass}};
  } else {
    throw UnknownName("unknown gallery instance '" + name + "'");
  }
  return e;
}

}  // namespace dckit
