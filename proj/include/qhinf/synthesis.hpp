#pragma once

// Mode-dependent H-infinity controller synthesis for jump plants: LMI
// construction, controller reconstruction and attenuation bisection.

#include "qhinf/lmi.hpp"
#include "qhinf/qmodel.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace qhinf {

inline constexpr double kConditionGuard = 1e10;

/// Variable names used in the synthesis problem ("X0", "Y2", ...).
inline std::string var_name(char prefix, int mode) { return std::string(1, prefix) + std::to_string(mode); }

/// Inverse of a symmetric matrix through its eigendecomposition. Throws when
/// the condition number exceeds `guard`.
inline Matrix symmetric_inverse(const Matrix& m, const char* what, double guard = kConditionGuard,
                                double* condition = nullptr) {
  const auto eig = lmi::symmetric_eigen(m);
  const Vector mag = eig.values.cwiseAbs();
  const double hi = mag.maxCoeff();
  const double lo = mag.minCoeff();
  const double cond = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (condition) *condition = cond;
  if (!(cond <= guard))
    throw NumericalError(std::string(what) + " is singular or ill-conditioned (condition number " +
                         std::to_string(cond) + ")");
  return eig.vectors * eig.values.cwiseInverse().asDiagonal() * eig.vectors.transpose();
}

/// The coupled LMIs for mode-dependent output feedback at attenuation g:
///
///   [ A_i'X_i + X_iA_i + L_iC2 + C2'L_i' + C1'C1 + sum_j pi_ij X_j   X_iB1 + L_iD2 ]
///   [ *                                                              -g^2 I        ]  < 0
///
///   [ Y_i  I  ]
///   [ I    X_i]  > 0
///
///   [ A_iY_i + Y_iA_i' + B2F_i + F_i'B2' + pi_ii Y_i + g^-2 B1B1'   (C1Y_i + D1F_i)'   R_i ]
///   [ *                                                             -I                 0   ]
///   [ *                                                             *                  S_i ]  < 0
///
/// with R_i = [sqrt(pi_ij) Y_i]_{j != i} and S_i = -diag(Y_j)_{j != i}.
inline lmi::LmiProblem build_hinf_lmis(const JumpPlant& plant, double g) {
  if (!(g > 0.0) || !std::isfinite(g)) throw std::invalid_argument("attenuation level g must be positive");
  const auto n = plant.n();
  const auto nw = plant.n_w();
  const auto nz = plant.n_z();
  const auto nu = plant.n_u();
  const auto ny = plant.n_y();
  const int modes = plant.modes();
  const Matrix& pi = plant.rates().matrix();
  const Matrix eye = Matrix::Identity(n, n);

  lmi::LmiProblem p;
  for (int i = 0; i < modes; ++i) {
    p.declare_symmetric(var_name('X', i), n);
    p.declare_symmetric(var_name('Y', i), n);
    p.declare_full(var_name('L', i), n, ny);
    p.declare_full(var_name('F', i), nu, n);
  }

  for (int i = 0; i < modes; ++i) {
    const Matrix& a = plant.a(i);
    const auto xi = var_name('X', i);
    const auto yi = var_name('Y', i);
    const auto li = var_name('L', i);
    const auto fi = var_name('F', i);

    lmi::AffineMatrixExpr x_lmi({n, nw});
    x_lmi.add_sym_term(0, xi, eye, a)
        .add_sym_term(0, li, eye, plant.c2())
        .add_constant(0, 0, plant.c1().transpose() * plant.c1())
        .add_term(0, 1, xi, eye, plant.b1())
        .add_term(0, 1, li, eye, plant.d2())
        .add_constant(1, 1, -g * g * Matrix::Identity(nw, nw));
    for (int j = 0; j < modes; ++j)
      if (pi(i, j) != 0.0) x_lmi.add_term(0, 0, var_name('X', j), pi(i, j) * eye, eye);
    p.require_negative(std::move(x_lmi), "X-inequality mode " + std::to_string(i));

    lmi::AffineMatrixExpr coupling({n, n});
    coupling.add_term(0, 0, yi, eye, eye).add_constant(0, 1, eye).add_term(1, 1, xi, eye, eye);
    p.require_positive(std::move(coupling), "coupling mode " + std::to_string(i));

    const Eigen::Index others = n * (modes - 1);
    std::vector<Eigen::Index> sizes{n, nz};
    if (others > 0) sizes.push_back(others);
    lmi::AffineMatrixExpr y_lmi(sizes);
    y_lmi.add_sym_term(0, yi, a, eye)
        .add_sym_term(0, fi, plant.b2(), eye)
        .add_constant(0, 0, plant.b1() * plant.b1().transpose() / (g * g))
        .add_term(1, 0, yi, plant.c1(), eye)
        .add_term(1, 0, fi, plant.d1(), eye)
        .add_constant(1, 1, -Matrix::Identity(nz, nz));
    if (pi(i, i) != 0.0) y_lmi.add_term(0, 0, yi, pi(i, i) * eye, eye);
    Eigen::Index slot = 0;
    for (int j = 0; j < modes; ++j) {
      if (j == i) continue;
      Matrix place = Matrix::Zero(n, others);
      place.middleCols(slot * n, n) = eye;
      if (pi(i, j) != 0.0) y_lmi.add_term(0, 2, yi, std::sqrt(pi(i, j)) * eye, place);
      y_lmi.add_term(2, 2, var_name('Y', j), -place.transpose(), place);
      ++slot;
    }
    p.require_negative(std::move(y_lmi), "Y-inequality mode " + std::to_string(i));
  }
  return p;
}

struct ModeCertificate {
  Matrix X;
  Matrix Y;
  Matrix L;
  Matrix F;
};

struct SynthesisResult {
  double g = 0.0;
  std::vector<ModeCertificate> certificate;
  std::optional<Controller> controller;  // present when the LMIs are feasible
  lmi::LmiSolution solution;
  std::vector<double> coupling_condition;  // condition number of Y_i^-1 - X_i

  [[nodiscard]] bool feasible() const { return solution.feasible() && controller.has_value(); }
};

/// Controller matrices from an LMI solution:
///   C_i = F_i Y_i^-1,  B_i = (Y_i^-1 - X_i)^-1 L_i,  A_i = (Y_i^-1 - X_i)^-1 M_i Y_i^-1.
inline Controller reconstruct_controller(const JumpPlant& plant, double g, const std::vector<ModeCertificate>& cert,
                                         std::vector<double>* coupling_condition = nullptr) {
  if (!(g > 0.0)) throw std::invalid_argument("attenuation level g must be positive");
  const int modes = plant.modes();
  if (int(cert.size()) != modes) throw std::invalid_argument("certificate mode count does not match plant");
  const Matrix& pi = plant.rates().matrix();

  std::vector<Matrix> y_inv;
  for (int i = 0; i < modes; ++i) y_inv.push_back(symmetric_inverse(cert[std::size_t(i)].Y, "Y_i"));

  std::vector<ControllerMode> out;
  if (coupling_condition) coupling_condition->clear();
  for (int i = 0; i < modes; ++i) {
    const auto& c = cert[std::size_t(i)];
    const Matrix& a = plant.a(i);
    double cond = 0.0;
    const Matrix u_inv = symmetric_inverse(y_inv[std::size_t(i)] - c.X, "Y_i^-1 - X_i", kConditionGuard, &cond);
    if (coupling_condition) coupling_condition->push_back(cond);

    Matrix m = -a.transpose() - c.X * a * c.Y - c.X * plant.b2() * c.F - c.L * plant.c2() * c.Y -
               plant.c1().transpose() * (plant.c1() * c.Y + plant.d1() * c.F) -
               (c.X * plant.b1() + c.L * plant.d2()) * plant.b1().transpose() / (g * g);
    for (int j = 0; j < modes; ++j)
      if (pi(i, j) != 0.0) m -= pi(i, j) * y_inv[std::size_t(j)] * c.Y;

    ControllerMode k;
    k.A = u_inv * m * y_inv[std::size_t(i)];
    k.B = u_inv * c.L;
    k.C = c.F * y_inv[std::size_t(i)];
    out.push_back(std::move(k));
  }
  return Controller(std::move(out), plant.theta());
}

inline SynthesisResult synthesize(const JumpPlant& plant, double g, const lmi::SolverOptions& opts = {}) {
  const auto problem = build_hinf_lmis(plant, g);
  SynthesisResult r;
  r.g = g;
  r.solution = lmi::solve_feasibility(problem, opts);
  if (!r.solution.feasible()) return r;
  for (int i = 0; i < plant.modes(); ++i)
    r.certificate.push_back({r.solution[var_name('X', i)], r.solution[var_name('Y', i)], r.solution[var_name('L', i)],
                             r.solution[var_name('F', i)]});
  r.controller = reconstruct_controller(plant, g, r.certificate, &r.coupling_condition);
  return r;
}

struct AttenuationSearch {
  double g_star = 0.0;
  double g_lower = 0.0;  // largest level found infeasible
  int solves = 0;
  SynthesisResult result;  // certificate at g_star
};

/// Bisection on LMI feasibility. The bracket is widened (up to four doublings
/// on each side) until g_hi is feasible and g_lo infeasible; the returned
/// g_star is the feasible end of the final bracket.
inline AttenuationSearch min_attenuation(const JumpPlant& plant, double g_lo, double g_hi, double tol_g,
                                         const lmi::SolverOptions& opts = {}) {
  if (!(g_lo > 0.0) || !(g_hi > g_lo)) throw std::invalid_argument("min_attenuation needs 0 < g_lo < g_hi");
  if (!(tol_g > 0.0)) throw std::invalid_argument("tol_g must be positive");
  AttenuationSearch s;
  auto feasible_at = [&](double g) {
    ++s.solves;
    return lmi::solve_feasibility(build_hinf_lmis(plant, g), opts).feasible();
  };
  int widen = 0;
  while (!feasible_at(g_hi)) {
    if (++widen > 4) throw std::runtime_error("LMIs infeasible even at widened g_hi = " + std::to_string(g_hi));
    g_lo = g_hi;
    g_hi *= 2.0;
  }
  widen = 0;
  while (feasible_at(g_lo)) {
    g_hi = g_lo;
    if (++widen > 4) break;
    g_lo *= 0.5;
  }
  while (g_hi - g_lo > tol_g) {
    const double mid = 0.5 * (g_lo + g_hi);
    if (feasible_at(mid))
      g_hi = mid;
    else
      g_lo = mid;
  }
  s.g_star = g_hi;
  s.g_lower = g_lo;
  s.result = synthesize(plant, g_hi, opts);
  ++s.solves;
  if (!s.result.feasible()) throw NumericalError("feasible end of the bisection bracket could not be re-certified");
  return s;
}

}  // namespace qhinf
