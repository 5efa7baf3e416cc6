#pragma once

// Bounded-real verification: matrix-inequality margin, algebraic and
// differential H-infinity Riccati equations, H-infinity norm, and the coupled
// mode inequalities certifying a jump closed loop.

#include "qhinf/lmi.hpp"
#include "qhinf/qmodel.hpp"
#include "qhinf/realizability.hpp"

#include <complex>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace qhinf {

inline constexpr double kImagAxisTol = 1e-8;

namespace detail {

/// g^2 I - D'D, checked positive definite.
inline Matrix riccati_weight(const Matrix& d, double g, Eigen::Index m) {
  if (!(g > 0.0)) throw std::invalid_argument("attenuation level g must be positive");
  Matrix r = g * g * Matrix::Identity(m, m);
  if (d.size() > 0) r -= d.transpose() * d;
  if (m > 0 && !(lmi::lambda_min(r) > 0.0))
    throw std::invalid_argument("g must exceed the largest singular value of D");
  return r;
}

inline void check_system(const Matrix& a, const Matrix& b, const Matrix& c, const Matrix& d) {
  const auto n = a.rows();
  if (a.cols() != n || b.rows() != n || c.cols() != n || d.rows() != c.rows() || d.cols() != b.cols())
    throw std::invalid_argument("state-space dimensions are inconsistent");
}

}  // namespace detail

/// lambda_max of A'P + PA + C'C + (C'D + PB)(g^2 I - D'D)^-1 (D'C + B'P).
inline double bounded_real_margin(const Matrix& a, const Matrix& b, const Matrix& c, const Matrix& d,
                                  const Matrix& p, double g) {
  detail::check_system(a, b, c, d);
  if (!linalg::is_symmetric(p, 1e-10) || p.rows() != a.rows()) throw std::invalid_argument("P must be symmetric n x n");
  const Matrix r = detail::riccati_weight(d, g, b.cols());
  const Matrix cross = c.transpose() * d + p * b;
  const Matrix m = a.transpose() * p + p * a + c.transpose() * c + cross * r.ldlt().solve(cross.transpose());
  return lmi::lambda_max(linalg::symmetrize(m));
}

/// Left side of the H-infinity Riccati equation at P.
inline Matrix riccati_residual(const Matrix& a, const Matrix& b, const Matrix& c, const Matrix& d, const Matrix& p,
                               double g) {
  const Matrix r = detail::riccati_weight(d, g, b.cols());
  const Matrix cross = c.transpose() * d + p * b;
  return linalg::symmetrize(a.transpose() * p + p * a + c.transpose() * c +
                            cross * r.ldlt().solve(cross.transpose()));
}

struct RiccatiSolution {
  Matrix P;
  Matrix closed_loop;  // A + B R^-1 (D'C + B'P)
  double spectral_abscissa = 0.0;
  double residual = 0.0;
  [[nodiscard]] bool stabilizing() const { return spectral_abscissa < 0.0; }
};

/// Stabilizing solution of A'P + PA + C'C + (C'D + PB) R^-1 (D'C + B'P) = 0,
/// R = g^2 I - D'D, from the stable invariant subspace of the Hamiltonian
///   H = [[Abar, G], [-Q, -Abar']],  Abar = A + B R^-1 D'C,  G = B R^-1 B',
///   Q = C'C + C'D R^-1 D'C,
/// followed by Newton refinement. Throws NumericalError when no stabilizing
/// solution exists (Hamiltonian eigenvalues on the imaginary axis).
inline RiccatiSolution solve_riccati(const Matrix& a, const Matrix& b, const Matrix& c, const Matrix& d, double g) {
  detail::check_system(a, b, c, d);
  const auto n = a.rows();
  const Matrix r = detail::riccati_weight(d, g, b.cols());
  const Eigen::LDLT<Matrix> r_fac(r);
  const Matrix r_inv = r_fac.solve(Matrix::Identity(r.rows(), r.cols()));
  const Matrix abar = a + b * r_inv * d.transpose() * c;
  const Matrix gm = linalg::symmetrize(b * r_inv * b.transpose());
  const Matrix q = linalg::symmetrize(c.transpose() * c + c.transpose() * d * r_inv * d.transpose() * c);

  RiccatiSolution sol;
  auto finish = [&](Matrix p) {
    sol.P = linalg::symmetrize(p);
    sol.closed_loop = abar + gm * sol.P;
    sol.spectral_abscissa = linalg::spectral_abscissa(sol.closed_loop);
    sol.residual = linalg::max_abs(riccati_residual(a, b, c, d, sol.P, g));
  };
  if (n == 0) {
    finish(Matrix::Zero(0, 0));
    return sol;
  }
  if (linalg::max_abs(q) == 0.0) {
    // Zero cost: P = 0 is the solution whenever A (= Abar here) is stable.
    if (!linalg::is_hurwitz(abar)) throw NumericalError("solve_riccati: A is not Hurwitz");
    finish(Matrix::Zero(n, n));
    return sol;
  }

  Matrix h(2 * n, 2 * n);
  h << abar, gm, -q, -abar.transpose();
  Eigen::EigenSolver<Matrix> es(h, true);
  if (es.info() != Eigen::Success) throw NumericalError("solve_riccati: Hamiltonian eigensolver failed");
  const double scale = 1.0 + linalg::max_abs(h);
  Eigen::MatrixXcd u(2 * n, n);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < 2 * n; ++i) {
    const double re = es.eigenvalues()(i).real();
    if (std::abs(re) <= kImagAxisTol * scale)
      throw NumericalError("solve_riccati: Hamiltonian has eigenvalues on the imaginary axis (g too small)");
    if (re < 0.0) {
      if (k == n) throw NumericalError("solve_riccati: unbalanced Hamiltonian spectrum");
      u.col(k++) = es.eigenvectors().col(i);
    }
  }
  if (k != n) throw NumericalError("solve_riccati: unbalanced Hamiltonian spectrum");
  const Eigen::MatrixXcd u1 = u.topRows(n);
  const Eigen::MatrixXcd u2 = u.bottomRows(n);
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(u1.transpose());
  if (!lu.isInvertible()) throw NumericalError("solve_riccati: stable subspace is not a graph");
  Matrix p = lu.solve(u2.transpose()).transpose().real();
  p = linalg::symmetrize(p);

  // Newton refinement: (Abar + G P)' dP + dP (Abar + G P) = -Res(P).
  for (int it = 0; it < 4; ++it) {
    const Matrix res = riccati_residual(a, b, c, d, p, g);
    if (linalg::max_abs(res) <= 1e-14 * (1.0 + linalg::max_abs(p))) break;
    const Matrix acl = abar + gm * p;
    if (!linalg::is_hurwitz(acl)) break;
    const Matrix dp = linalg::solve_lyapunov(acl.transpose(), res);
    const Matrix cand = linalg::symmetrize(p + dp);
    if (linalg::max_abs(riccati_residual(a, b, c, d, cand, g)) >= linalg::max_abs(res)) break;
    p = cand;
  }
  finish(p);
  if (!sol.stabilizing()) throw NumericalError("solve_riccati: solution is not stabilizing");
  if (lmi::lambda_min(sol.P) < -1e-9 * (1.0 + linalg::max_abs(sol.P)))
    throw NumericalError("solve_riccati: solution is not positive semidefinite");
  if (sol.residual > 1e-8 * (1.0 + linalg::max_abs(sol.P)))
    throw NumericalError("solve_riccati: residual too large (" + std::to_string(sol.residual) + ")");
  return sol;
}

inline bool riccati_solvable(const Matrix& a, const Matrix& b, const Matrix& c, const Matrix& d, double g) {
  detail::check_system(a, b, c, d);
  if (!(g > 0.0)) throw std::invalid_argument("attenuation level g must be positive");
  if (d.size() > 0 && !(g > Eigen::JacobiSVD<Matrix>(d).singularValues()(0))) return false;
  try {
    solve_riccati(a, b, c, d, g);
    return true;
  } catch (const NumericalError&) {
    return false;
  }
}

struct DifferentialRiccati {
  std::vector<double> t;  // ascending times in [0, T]
  std::vector<Matrix> P;  // P(t) at those times
};

/// Integrates -dP/dt = A'P + PA + C'C + (C'D + PB) R^-1 (D'C + B'P) backward
/// from P(T) = 0 with adaptive RK4 (step doubling, local tolerance `tol`).
inline DifferentialRiccati solve_riccati_differential(const Matrix& a, const Matrix& b, const Matrix& c,
                                                      const Matrix& d, double g, double horizon,
                                                      double tol = 1e-10) {
  detail::check_system(a, b, c, d);
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
  auto f = [&](const Matrix& p) { return riccati_residual(a, b, c, d, p, g); };
  auto rk4 = [&](const Matrix& p, double h) {
    const Matrix k1 = f(p);
    const Matrix k2 = f(p + 0.5 * h * k1);
    const Matrix k3 = f(p + 0.5 * h * k2);
    const Matrix k4 = f(p + h * k3);
    return Matrix(p + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
  };
  // Work in reversed time s = T - t, where dP/ds = Ric(P) and P(0) = 0.
  std::vector<double> s{0.0};
  std::vector<Matrix> ps{Matrix::Zero(a.rows(), a.rows())};
  double h = std::min(0.01, horizon / 10.0);
  double sc = 0.0;
  Matrix p = ps.back();
  const Matrix rinv = detail::riccati_weight(d, g, b.cols()).inverse();
  const Matrix cross = d.size() > 0 ? Matrix(d.transpose() * c) : Matrix::Zero(b.cols(), a.rows());
  while (sc < horizon) {
    // The linearised flow X -> Abar'X + X Abar must stay inside the RK4
    // stability interval, or the step grows past it near equilibrium.
    const Matrix abar = a + b * rinv * (cross + b.transpose() * p);
    const double rate = abar.norm();
    h = std::min(h, horizon - sc);
    if (rate > 0.0) h = std::min(h, 1.0 / rate);
    const Matrix full = rk4(p, h);
    const Matrix half = rk4(rk4(p, 0.5 * h), 0.5 * h);
    const double err = linalg::max_abs(half - full) / 15.0;
    if (!std::isfinite(err)) throw NumericalError("differential Riccati solution escaped to infinity");
    if (err <= tol * (1.0 + linalg::max_abs(half)) || h < 1e-12) {
      sc += h;
      p = half + (half - full) / 15.0;
      s.push_back(sc);
      ps.push_back(p);
      const double grow = err > 0.0 ? 0.9 * std::pow(tol * (1.0 + linalg::max_abs(half)) / err, 0.2) : 2.0;
      h *= std::clamp(grow, 0.2, 2.0);
    } else {
      h *= std::clamp(0.9 * std::pow(tol * (1.0 + linalg::max_abs(half)) / err, 0.2), 0.1, 0.5);
    }
  }
  DifferentialRiccati out;
  for (std::size_t i = s.size(); i-- > 0;) {
    out.t.push_back(horizon - s[i]);
    out.P.push_back(ps[i]);
  }
  return out;
}

/// Largest singular value of C (jwI - A)^-1 B + D.
inline double frequency_gain(const Matrix& a, const Matrix& b, const Matrix& c, const Matrix& d, double w) {
  using Cx = std::complex<double>;
  const auto n = a.rows();
  const Eigen::MatrixXcd m = Cx(0.0, w) * Eigen::MatrixXcd::Identity(n, n) - a.cast<Cx>();
  const Eigen::MatrixXcd tf = c.cast<Cx>() * m.partialPivLu().solve(b.cast<Cx>()) + d.cast<Cx>();
  if (tf.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(tf);
  return svd.singularValues()(0);
}

/// H-infinity norm by bisection on the existence of a stabilizing Riccati
/// solution; the relative bracket width on return is at most `tol`.
inline double hinf_norm(const Matrix& a, const Matrix& b, const Matrix& c, const Matrix& d, double tol = 1e-9) {
  detail::check_system(a, b, c, d);
  if (!linalg::is_hurwitz(a)) throw std::invalid_argument("hinf_norm: A is not Hurwitz");
  if (!(tol > 0.0)) throw std::invalid_argument("hinf_norm: tol must be positive");
  double lo = 0.0;
  if (d.size() > 0) {
    Eigen::JacobiSVD<Matrix> svd(d);
    lo = svd.singularValues()(0);
  }
  lo = std::max(lo, frequency_gain(a, b, c, d, 0.0));
  if (linalg::max_abs(b) == 0.0 || linalg::max_abs(c) == 0.0) return lo;
  double hi = std::max(2.0 * lo, 1e-12);
  while (!riccati_solvable(a, b, c, d, hi)) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e15) throw NumericalError("hinf_norm: no upper bound found");
  }
  while (hi - lo > tol * hi) {
    const double mid = 0.5 * (lo + hi);
    if (riccati_solvable(a, b, c, d, mid))
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

/// Independent H-infinity estimate: log-spaced sweep followed by golden-section
/// refinement around the best grid point.
inline double hinf_norm_sweep(const Matrix& a, const Matrix& b, const Matrix& c, const Matrix& d, int points = 1000) {
  detail::check_system(a, b, c, d);
  if (!linalg::is_hurwitz(a)) throw std::invalid_argument("hinf_norm_sweep: A is not Hurwitz");
  double lo_w = 1.0;
  double hi_w = 1.0;
  if (a.rows() > 0) {
    Eigen::EigenSolver<Matrix> es(a, false);
    const Vector mags = es.eigenvalues().cwiseAbs();
    lo_w = 1e-3 * mags.minCoeff();
    hi_w = 1e3 * mags.maxCoeff();
  }
  double best = frequency_gain(a, b, c, d, 0.0);
  double best_w = 0.0;
  if (d.size() > 0) {
    Eigen::JacobiSVD<Matrix> svd(d);
    best = std::max(best, svd.singularValues()(0));
  }
  std::vector<double> grid(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i)
    grid[std::size_t(i)] = lo_w * std::pow(hi_w / lo_w, double(i) / double(points - 1));
  int best_i = -1;
  for (int i = 0; i < points; ++i) {
    const double v = frequency_gain(a, b, c, d, grid[std::size_t(i)]);
    if (v > best) {
      best = v;
      best_w = grid[std::size_t(i)];
      best_i = i;
    }
  }
  if (best_i >= 0) {
    double l = best_i > 0 ? grid[std::size_t(best_i - 1)] : 0.0;
    double r = best_i + 1 < points ? grid[std::size_t(best_i + 1)] : 2.0 * best_w;
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = r - phi * (r - l);
    double x2 = l + phi * (r - l);
    double f1 = frequency_gain(a, b, c, d, x1);
    double f2 = frequency_gain(a, b, c, d, x2);
    for (int it = 0; it < 200 && r - l > 1e-14 * (1.0 + r); ++it) {
      if (f1 > f2) {
        r = x2;
        x2 = x1;
        f2 = f1;
        x1 = r - phi * (r - l);
        f1 = frequency_gain(a, b, c, d, x1);
      } else {
        l = x1;
        x1 = x2;
        f1 = f2;
        x2 = l + phi * (r - l);
        f2 = frequency_gain(a, b, c, d, x2);
      }
    }
    best = std::max({best, f1, f2});
  }
  return best;
}

/// Strict bounded-real LMI: find P > 0 with
///   [[A'P + PA + C'C, PB + C'D], [*, D'D - g^2 I]] < 0.
inline lmi::LmiSolution bounded_real_lmi(const Matrix& a, const Matrix& b, const Matrix& c, const Matrix& d, double g,
                                         const lmi::SolverOptions& opts = {}) {
  detail::check_system(a, b, c, d);
  if (!(g > 0.0)) throw std::invalid_argument("attenuation level g must be positive");
  const auto n = a.rows();
  const auto m = b.cols();
  const Matrix eye = Matrix::Identity(n, n);
  lmi::LmiProblem p;
  p.declare_symmetric("P", n);
  lmi::AffineMatrixExpr brl({n, m});
  brl.add_sym_term(0, "P", eye, a)
      .add_constant(0, 0, c.transpose() * c)
      .add_term(0, 1, "P", eye, b)
      .add_constant(0, 1, c.transpose() * d)
      .add_constant(1, 1, d.transpose() * d - g * g * Matrix::Identity(m, m));
  p.require_negative(std::move(brl), "bounded-real");
  lmi::AffineMatrixExpr pos({n});
  pos.add_term(0, 0, "P", eye, eye);
  p.require_positive(std::move(pos), "P positive");
  return lmi::solve_feasibility(p, opts);
}

// ---------------------------------------------------------------------------
// Coupled mode inequalities

enum class CouplingReading {
  row_index,  // sum_j pi_ij P_j
  literal,    // sum_j pi_ii P_j, as printed
};

enum class CertificateMethod { inequality, riccati, lmi };

struct BoundedRealCertificate {
  double g = 0.0;
  std::vector<Matrix> P_modes;
  double epsilon = 0.0;  // strictness margin
  double lambda = 0.0;   // noise throughput max_i Tr([B1 B2]' P_i [B1 B2])
  CertificateMethod method = CertificateMethod::lmi;
  lmi::Status status = lmi::Status::infeasible_at_tolerance;
  [[nodiscard]] bool feasible() const { return status == lmi::Status::feasible; }
};

/// Searches P_1..P_N > 0 with
///   A_i'P_i + P_iA_i + sum_j pi_ij P_j + g^-2 P_iB_iB_i'P_i + C_i'C_i < 0.
/// The inequality is divided by g^2 (P = g^2 Q) and solved in Schur form
///   [[A_i'Q_i + Q_iA_i + sum_j pi_ij Q_j + g^-2 C_i'C_i, Q_iB_i], [*, -I]] < 0,
/// so the strictness margin is measured against a unit disturbance weight
/// whatever the scale of g.
/// B and C may differ per mode; `noise` (optional, per mode) only enters the
/// lambda bookkeeping.
inline BoundedRealCertificate coupled_mode_check(const std::vector<Matrix>& a_modes, const std::vector<Matrix>& b_modes,
                                                 const std::vector<Matrix>& c_modes, const TransitionRateMatrix& rates,
                                                 double g, const lmi::SolverOptions& opts = {},
                                                 CouplingReading reading = CouplingReading::row_index,
                                                 const std::vector<Matrix>& noise = {}) {
  if (!(g > 0.0)) throw std::invalid_argument("attenuation level g must be positive");
  const int modes = rates.modes();
  if (int(a_modes.size()) != modes || int(b_modes.size()) != modes || int(c_modes.size()) != modes)
    throw std::invalid_argument("coupled_mode_check: mode counts differ");
  const auto n = a_modes.front().rows();
  const auto m = b_modes.front().cols();
  for (int i = 0; i < modes; ++i) {
    const auto s = std::size_t(i);
    if (a_modes[s].rows() != n || a_modes[s].cols() != n || b_modes[s].rows() != n || b_modes[s].cols() != m ||
        c_modes[s].cols() != n)
      throw std::invalid_argument("coupled_mode_check: dimension mismatch");
  }
  const Matrix& pi = rates.matrix();
  const Matrix eye = Matrix::Identity(n, n);

  lmi::LmiProblem p;
  for (int i = 0; i < modes; ++i) p.declare_symmetric(("P" + std::to_string(i)), n);
  for (int i = 0; i < modes; ++i) {
    const auto s = std::size_t(i);
    lmi::AffineMatrixExpr e({n, m});
    e.add_sym_term(0, ("P" + std::to_string(i)), eye, a_modes[s])
        .add_constant(0, 0, c_modes[s].transpose() * c_modes[s] / (g * g))
        .add_term(0, 1, ("P" + std::to_string(i)), eye, b_modes[s])
        .add_constant(1, 1, -Matrix::Identity(m, m));
    for (int j = 0; j < modes; ++j) {
      const double w = reading == CouplingReading::row_index ? pi(i, j) : pi(i, i);
      if (w != 0.0) e.add_term(0, 0, ("P" + std::to_string(j)), w * eye, eye);
    }
    p.require_negative(std::move(e), "coupled inequality mode " + std::to_string(i));
    lmi::AffineMatrixExpr pos({n});
    pos.add_term(0, 0, ("P" + std::to_string(i)), eye, eye);
    p.require_positive(std::move(pos), "P positive mode " + std::to_string(i));
  }
  const auto sol = lmi::solve_feasibility(p, opts);

  BoundedRealCertificate cert;
  cert.g = g;
  cert.status = sol.status;
  cert.epsilon = sol.margin;
  cert.method = CertificateMethod::lmi;
  for (int i = 0; i < modes; ++i) {
    cert.P_modes.push_back(g * g * sol[("P" + std::to_string(i))]);
    Matrix inputs = b_modes[std::size_t(i)];
    if (!noise.empty()) inputs = linalg::hstack({inputs, noise.at(std::size_t(i))});
    cert.lambda = std::max(cert.lambda, (inputs.transpose() * cert.P_modes.back() * inputs).trace());
  }
  return cert;
}

/// Shared B1, C1 across modes.
inline BoundedRealCertificate coupled_mode_check(const std::vector<Matrix>& a_modes, const TransitionRateMatrix& rates,
                                                 const Matrix& b1, const Matrix& c1, double g,
                                                 const lmi::SolverOptions& opts = {},
                                                 CouplingReading reading = CouplingReading::row_index) {
  return coupled_mode_check(a_modes, std::vector<Matrix>(a_modes.size(), b1), std::vector<Matrix>(a_modes.size(), c1),
                            rates, g, opts, reading);
}

struct ClosedLoopReport {
  double g = 0.0;
  std::vector<double> spectral_abscissa;
  std::vector<bool> hurwitz;
  BoundedRealCertificate certificate;
  std::optional<RealizabilityReport> realizability;  // present for augmented controllers
  bool pass = false;

  [[nodiscard]] bool all_hurwitz() const {
    for (bool h : hurwitz)
      if (!h) return false;
    return !hurwitz.empty();
  }
};

/// Assembles the closed loop, checks every mode matrix for stability and
/// searches a coupled bounded-real certificate at level g.
inline ClosedLoopReport verify_closed_loop(const JumpPlant& plant, const Controller& ctrl, double g,
                                           const lmi::SolverOptions& opts = {},
                                           CouplingReading reading = CouplingReading::row_index) {
  const auto cl = assemble_closed_loop(plant, ctrl);
  ClosedLoopReport r;
  r.g = g;
  std::vector<Matrix> a, b, c, noise;
  for (const auto& m : cl.modes) {
    const double sa = linalg::spectral_abscissa(m.A);
    r.spectral_abscissa.push_back(sa);
    r.hurwitz.push_back(sa < 0.0);
    a.push_back(m.A);
    b.push_back(m.B1);
    c.push_back(m.C);
    noise.push_back(m.B2);
  }
  if (ctrl.augmented()) r.realizability = controller_realizability(ctrl);
  r.certificate = coupled_mode_check(a, b, c, cl.rates, g, opts, reading, noise);
  r.pass = r.all_hurwitz() && r.certificate.feasible();
  return r;
}

}  // namespace qhinf
