#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace qhinf;
using qhinf::testing::max_abs;
using qhinf::testing::random_hurwitz;
using qhinf::testing::random_matrix;

namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

lmi::LmiProblem lyapunov_problem(const Matrix& a) {
  const auto n = a.rows();
  const Matrix eye = Matrix::Identity(n, n);
  lmi::LmiProblem p;
  p.declare_symmetric("P", n);
  lmi::AffineMatrixExpr lyap({n});
  lyap.add_sym_term(0, "P", a.transpose(), eye);
  p.require_negative(lyap, "Lyapunov");
  lmi::AffineMatrixExpr pos({n});
  pos.add_term(0, 0, "P", eye, eye);
  p.require_positive(pos, "P > 0");
  return p;
}

/// A single-mode plant whose blocks are all multiples of the 2x2 identity.
JumpPlant diagonal_plant(double a, double b1, double b2, double c1, double d1, double c2, double d2,
                         const TransitionRateMatrix& rates = TransitionRateMatrix::single_mode()) {
  const Matrix eye = Matrix::Identity(2, 2);
  std::vector<Matrix> modes(std::size_t(rates.modes()), a * eye);
  return JumpPlant(modes, b1 * eye, b2 * eye, c1 * eye, d1 * eye, c2 * eye, d2 * eye, canonical_theta(2), rates);
}

struct RandomSystem {
  Matrix a, b, c, d;
};

RandomSystem random_stable_system(std::mt19937_64& rng, int trial) {
  const int n = 1 + trial % 4;
  const int m = 1 + (trial / 4) % 2;
  const int p = 1 + (trial / 8) % 2;
  RandomSystem s;
  s.a = random_hurwitz(rng, n, 0.2 + 0.1 * (trial % 3));
  s.b = random_matrix(rng, n, m);
  s.c = random_matrix(rng, p, n);
  s.d = trial % 3 == 0 ? Matrix(Matrix::Zero(p, m)) : Matrix(random_matrix(rng, p, m, 0.3));
  return s;
}

}  // namespace

// --- eigenvalues -------------------------------------------------------------

TEST(SymmetricEigen, Examples) {
  Matrix d = Matrix::Zero(3, 3);
  d.diagonal() << 3, 1, 2;
  EXPECT_LE(max_abs(lmi::symmetric_eigenvalues(d) - Vector::LinSpaced(3, 1, 3)), 1e-14);
  Matrix m(2, 2);
  m << 2, 1, 1, 2;
  const Vector ev = lmi::symmetric_eigenvalues(m);
  EXPECT_NEAR(ev(0), 1.0, 1e-14);
  EXPECT_NEAR(ev(1), 3.0, 1e-14);
  EXPECT_EQ(lmi::symmetric_eigenvalues(Matrix::Zero(3, 3)), Vector::Zero(3));
  Matrix bad(2, 2);
  bad << 1, 2, 0, 1;
  EXPECT_THROW(lmi::symmetric_eigenvalues(bad), std::invalid_argument);
}

TEST(SymmetricEigen, ReconstructsRandomMatrices) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 12;
    Matrix m = random_matrix(rng, n, n, 10.0);
    m = (0.5 * (m + m.transpose())).eval();
    const auto e = lmi::symmetric_eigen(m);
    for (int i = 1; i < n; ++i) EXPECT_LE(e.values(i - 1), e.values(i));
    EXPECT_LE(max_abs(m - e.vectors * e.values.asDiagonal() * e.vectors.transpose()), 1e-9 * (1 + max_abs(m)));
    EXPECT_LE(max_abs(e.vectors.transpose() * e.vectors - Matrix::Identity(n, n)), 1e-10);
  }
}

// --- LMI engine --------------------------------------------------------------

TEST(LmiSolver, ScalarNegativeVariable) {
  lmi::LmiProblem p;
  p.declare_symmetric("x", 1);
  lmi::AffineMatrixExpr e({1});
  e.add_term(0, 0, "x", scalar(1), scalar(1));
  p.require_negative(e);
  const auto sol = lmi::solve_feasibility(p);
  ASSERT_TRUE(sol.feasible());
  EXPECT_LE(sol["x"](0, 0), -sol.eps_strict);
}

TEST(LmiSolver, ScalarLyapunov) {
  const auto sol = lmi::solve_feasibility(lyapunov_problem(scalar(-1)));
  ASSERT_TRUE(sol.feasible());
  EXPECT_GT(sol["P"](0, 0), 0.0);
}

TEST(LmiSolver, RandomLyapunovFeasibleAndInfeasible) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 24; ++trial) {
    const int n = 1 + trial % 6;
    const Matrix a = random_hurwitz(rng, n, 0.1);
    const auto ok = lmi::solve_feasibility(lyapunov_problem(a));
    EXPECT_TRUE(ok.feasible()) << "stable trial " << trial << " margin " << ok.margin;

    // Same construction with one eigenvalue moved to +1.
    Matrix blocks = Matrix::Zero(n, n);
    if (n > 1) blocks.topLeftCorner(n - 1, n - 1) = random_hurwitz(rng, n - 1, 0.1);
    blocks(n - 1, n - 1) = 1.0;
    const Matrix q = random_matrix(rng, n, n).householderQr().householderQ();
    const Matrix unstable = q * blocks * q.transpose();
    const auto bad = lmi::solve_feasibility(lyapunov_problem(unstable));
    EXPECT_EQ(bad.status, lmi::Status::infeasible_at_tolerance) << "unstable trial " << trial;
  }
}

TEST(LmiSolver, ReportedMarginsMatchDirectEvaluation) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = lyapunov_problem(random_hurwitz(rng, 1 + trial % 5, 0.2));
    const auto sol = lmi::solve_feasibility(p);
    ASSERT_EQ(sol.constraint_margins.size(), p.constraints().size());
    for (std::size_t k = 0; k < p.constraints().size(); ++k) {
      const auto& c = p.constraints()[k];
      const Vector ev = lmi::symmetric_eigenvalues(c.expr.evaluate(sol.assignment));
      const double direct = c.sense == lmi::Sense::negative_definite ? -ev.maxCoeff() : ev.minCoeff();
      EXPECT_NEAR(direct, sol.constraint_margins[k], 1e-8);
    }
  }
}

TEST(LmiSolver, Deterministic) {
  std::mt19937_64 rng(13);
  const auto p = build_hinf_lmis(optics::reference::plant(), 0.5);
  const auto s1 = lmi::solve_feasibility(p);
  const auto s2 = lmi::solve_feasibility(p);
  EXPECT_EQ(s1.iterations, s2.iterations);
  for (const auto& [name, value] : s1.assignment) EXPECT_EQ(value, s2.assignment.at(name)) << name;
}

TEST(LmiSolver, RejectsUndeclaredVariablesAndBadShapes) {
  lmi::LmiProblem p;
  p.declare_symmetric("P", 2);
  lmi::AffineMatrixExpr e({2});
  e.add_term(0, 0, "Q", Matrix::Identity(2, 2), Matrix::Identity(2, 2));
  EXPECT_THROW(p.require_negative(e), std::invalid_argument);
  lmi::AffineMatrixExpr f({2});
  EXPECT_THROW(f.add_term(0, 0, "P", Matrix::Identity(3, 3), Matrix::Identity(2, 2)), std::invalid_argument);
  EXPECT_THROW(p.declare_symmetric("P", 2), std::invalid_argument);
  EXPECT_THROW(p.declare("R", 2, 3, true), std::invalid_argument);
}

TEST(LmiSolver, ReferenceSynthesisInstanceIsFeasible) {
  const auto search = min_attenuation(optics::reference::plant(), 1e-3, 1.0, 1e-4);
  const auto sol = lmi::solve_feasibility(build_hinf_lmis(optics::reference::plant(), search.g_star));
  EXPECT_TRUE(sol.feasible());
}

// --- synthesis ---------------------------------------------------------------

TEST(Synthesis, SingleModeReducesToStandardBlocks) {
  const auto plant = diagonal_plant(-1, 1, 1, 1, -1, 1, -1);
  const auto p = build_hinf_lmis(plant, 2.0);
  ASSERT_EQ(p.constraints().size(), 3u);
  EXPECT_EQ(p.constraints()[0].expr.dim(), 4);  // [n, n_w]
  EXPECT_EQ(p.constraints()[1].expr.dim(), 4);  // [[Y, I], [I, X]]
  EXPECT_EQ(p.constraints()[2].expr.dim(), 4);  // [n, n_z], no coupling blocks
}

TEST(Synthesis, ReferenceVariables) {
  const auto p = build_hinf_lmis(optics::reference::plant(), 1.0);
  for (char c : {'X', 'Y', 'L', 'F'})
    for (int i = 0; i < 3; ++i) {
      const auto& v = p.variable(var_name(c, i));
      EXPECT_EQ(v.rows, 2);
      EXPECT_EQ(v.cols, 2);
      EXPECT_EQ(v.symmetric, c == 'X' || c == 'Y');
    }
  EXPECT_EQ(p.variables().size(), 12u);
  EXPECT_EQ(p.constraints().size(), 9u);
  EXPECT_EQ(p.constraints()[2].expr.dim(), 2 + 2 + 4);  // two other modes
}

TEST(Synthesis, RejectsNonPositiveLevel) {
  EXPECT_THROW(build_hinf_lmis(optics::reference::plant(), 0.0), std::invalid_argument);
  EXPECT_THROW(synthesize(optics::reference::plant(), -1.0), std::invalid_argument);
}

TEST(Synthesis, ReconstructionMatchesScalarArithmetic) {
  Matrix pi(2, 2);
  pi << -0.3, 0.3, 0.5, -0.5;
  const double a = -0.7, b1 = 0.9, b2 = 0.4, c1 = 0.6, d1 = -1.0, c2 = 0.8, d2 = -1.0, g = 1.7;
  const auto plant = diagonal_plant(a, b1, b2, c1, d1, c2, d2, TransitionRateMatrix(pi));
  const double x[2] = {0.5, 0.3}, y[2] = {1.0, 2.0}, l[2] = {0.2, -0.4}, f[2] = {-0.1, 0.6};
  const Matrix eye = Matrix::Identity(2, 2);
  std::vector<ModeCertificate> cert;
  for (int i = 0; i < 2; ++i) cert.push_back({x[i] * eye, y[i] * eye, l[i] * eye, f[i] * eye});
  const Controller k = reconstruct_controller(plant, g, cert);
  for (int i = 0; i < 2; ++i) {
    double coupling = 0.0;
    for (int j = 0; j < 2; ++j) coupling += pi(i, j) * y[i] / y[j];
    const double m = -a - x[i] * a * y[i] - x[i] * b2 * f[i] - l[i] * c2 * y[i] - c1 * (c1 * y[i] + d1 * f[i]) -
                     (x[i] * b1 + l[i] * d2) * b1 / (g * g) - coupling;
    const double w = 1.0 / y[i] - x[i];
    EXPECT_NEAR(k.mode(i).C(0, 0), f[i] / y[i], 1e-12);
    EXPECT_NEAR(k.mode(i).B(0, 0), l[i] / w, 1e-12);
    EXPECT_NEAR(k.mode(i).A(0, 0), m / (w * y[i]), 1e-12);
    EXPECT_NEAR(k.mode(i).A(0, 1), 0.0, 1e-12);
  }
}

TEST(Synthesis, CouplingDegeneracyIsReported) {
  const auto plant = diagonal_plant(-1, 1, 1, 1, -1, 1, -1);
  const Matrix eye = Matrix::Identity(2, 2);
  EXPECT_THROW(reconstruct_controller(plant, 1.0, {{0.5 * eye, 2.0 * eye, eye, eye}}), NumericalError);
}

TEST(Synthesis, ReferencePlantTinyLevelIsInfeasible) {
  const auto r = synthesize(optics::reference::plant(), 1e-6);
  EXPECT_FALSE(r.feasible());
  EXPECT_FALSE(r.controller.has_value());
}

TEST(Synthesis, StablePlantGenerousLevelIsFeasible) {
  const auto plant = diagonal_plant(-1, 1, 1, 1, -1, 1, -1);
  const auto r = synthesize(plant, 1e3);
  ASSERT_TRUE(r.feasible());
  EXPECT_EQ(r.controller->n_k(), plant.n());
  EXPECT_TRUE(verify_closed_loop(plant, augment_controller(*r.controller), 1e3).pass);
}

TEST(Synthesis, BisectionMatchesBruteForceSweep) {
  const auto plant = diagonal_plant(-1, 1, 1, 1, 1, 1, 1);
  const auto s = min_attenuation(plant, 0.05, 4.0, 1e-4);
  // Oracle: scan a log grid for the feasibility boundary.
  double last_infeasible = 0.0, first_feasible = 0.0;
  const int points = 60;
  for (int k = 0; k < points; ++k) {
    const double g = 0.05 * std::pow(80.0, double(k) / (points - 1));
    if (synthesize(plant, g).feasible()) {
      first_feasible = g;
      break;
    }
    last_infeasible = g;
  }
  ASSERT_GT(first_feasible, 0.0);
  EXPECT_GE(s.g_star, last_infeasible - 1e-4);
  EXPECT_LE(s.g_star, first_feasible + 1e-4);
  EXPECT_LE(s.g_star - s.g_lower, 1e-4 + 1e-12);
  EXPECT_TRUE(s.result.feasible());
}

TEST(Synthesis, BracketErrors) {
  const auto plant = diagonal_plant(-1, 1, 1, 1, 1, 1, 1);
  EXPECT_THROW(min_attenuation(plant, 1.0, 1.0, 1e-3), std::invalid_argument);
  EXPECT_THROW(min_attenuation(plant, 1.0, 0.5, 1e-3), std::invalid_argument);
}

TEST(Synthesis, FeasibilityIsMonotoneAndSelfVerifying) {
  const auto plant = optics::reference::plant();
  for (double g : {0.05, 0.2, 1.0}) {
    const auto r = synthesize(plant, g);
    ASSERT_TRUE(r.feasible()) << g;
    EXPECT_TRUE(synthesize(plant, 2 * g).feasible()) << 2 * g;
    const auto p = build_hinf_lmis(plant, g);
    const auto margins = lmi::constraint_margins(p, r.solution.assignment);
    for (std::size_t k = 0; k < margins.size(); ++k) EXPECT_NEAR(margins[k], r.solution.constraint_margins[k], 1e-8);
    for (const auto& m : r.certificate) {
      EXPECT_GT(lmi::lambda_min(m.X), 0.0);
      EXPECT_GT(lmi::lambda_min(m.Y), 0.0);
    }
    EXPECT_EQ(r.controller->n_k(), plant.n());
  }
}

// --- analysis ----------------------------------------------------------------

TEST(BoundedReal, MarginExamples) {
  EXPECT_NEAR(bounded_real_margin(scalar(-1), scalar(1), scalar(1), scalar(0), scalar(1), 2.0), -0.75, 1e-14);
  const Matrix a = scalar(-2);
  EXPECT_LT(bounded_real_margin(a, scalar(0), scalar(0), scalar(0), scalar(3), 1.0), 0.0);
  EXPECT_THROW(bounded_real_margin(scalar(-1), scalar(1), scalar(1), scalar(0.5), scalar(1), 0.5),
               std::invalid_argument);
}

TEST(Riccati, ScalarOracle) {
  const auto sol = solve_riccati(scalar(-1), scalar(1), scalar(1), scalar(0), 2.0);
  EXPECT_NEAR(sol.P(0, 0), 4 - 2 * std::sqrt(3.0), 1e-9);
  EXPECT_TRUE(sol.stabilizing());
  EXPECT_NEAR(sol.closed_loop(0, 0), -1 + sol.P(0, 0) / 4, 1e-9);
}

TEST(Riccati, ZeroOutputCostGivesZero) {
  const auto sol = solve_riccati(scalar(-1), scalar(1), scalar(0), scalar(0), 2.0);
  EXPECT_NEAR(sol.P(0, 0), 0.0, 1e-12);
}

TEST(Riccati, BelowTheNormHasNoSolution) {
  EXPECT_THROW(solve_riccati(scalar(-1), scalar(1), scalar(1), scalar(0), 0.9), NumericalError);
  EXPECT_FALSE(riccati_solvable(scalar(-1), scalar(1), scalar(1), scalar(0), 0.9));
}

TEST(Riccati, ResidualBoundOnRandomSystems) {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 30; ++trial) {
    const auto s = random_stable_system(rng, trial);
    const double g = 1.2 * hinf_norm(s.a, s.b, s.c, s.d);
    const auto sol = solve_riccati(s.a, s.b, s.c, s.d, g);
    EXPECT_LE(max_abs(riccati_residual(s.a, s.b, s.c, s.d, sol.P, g)), 1e-8 * (1 + max_abs(sol.P)));
    EXPECT_LE(max_abs(sol.P - sol.P.transpose()), 1e-9);
    EXPECT_GE(lmi::lambda_min(sol.P), -1e-9);
    EXPECT_TRUE(sol.stabilizing());
  }
}

TEST(Riccati, DifferentialFormConvergesToAlgebraic) {
  const double r1 = 4 - 2 * std::sqrt(3.0), r2 = 4 + 2 * std::sqrt(3.0), s = std::sqrt(3.0);
  const double horizon = 50.0;
  const auto traj = solve_riccati_differential(scalar(-1), scalar(1), scalar(1), scalar(0), 2.0, horizon);
  ASSERT_GE(traj.t.size(), 3u);
  EXPECT_NEAR(traj.t.back(), horizon, 1e-12);
  EXPECT_NEAR(traj.P.back()(0, 0), 0.0, 1e-15);
  for (std::size_t k = 0; k < traj.t.size(); ++k) {
    // Closed form of the backward scalar equation with P(T) = 0.
    const double q = r1 / r2 * std::exp(-s * (horizon - traj.t[k]));
    EXPECT_NEAR(traj.P[k](0, 0), (r1 - q * r2) / (1 - q), 1e-6) << "t = " << traj.t[k];
    if (k + 1 < traj.t.size()) EXPECT_GE(traj.P[k](0, 0), traj.P[k + 1](0, 0) - 1e-12);
  }
  EXPECT_NEAR(traj.P.front()(0, 0), r1, 1e-6);
}

TEST(HinfNorm, Examples) {
  EXPECT_NEAR(hinf_norm(scalar(-1), scalar(1), scalar(1), scalar(0)), 1.0, 1e-6);
  EXPECT_NEAR(hinf_norm(scalar(-2), scalar(1), scalar(1), scalar(0)), 0.5, 1e-6);
  EXPECT_NEAR(hinf_norm(scalar(-1), scalar(0), scalar(0), scalar(-0.7)), 0.7, 1e-6);
  EXPECT_THROW(hinf_norm(scalar(1), scalar(1), scalar(1), scalar(0)), std::invalid_argument);
}

TEST(HinfNorm, AgreesWithFrequencySweep) {
  std::mt19937_64 rng(23);
  const double tol = 1e-9;
  for (int trial = 0; trial < 30; ++trial) {
    const auto s = random_stable_system(rng, trial);
    const double bis = hinf_norm(s.a, s.b, s.c, s.d, tol);
    const double sweep = hinf_norm_sweep(s.a, s.b, s.c, s.d, 1000);
    EXPECT_NEAR(bis, sweep, 2e-6 * std::max(1.0, bis)) << "trial " << trial;
    EXPECT_LE(sweep, bis * (1 + 1e-8));
  }
}

TEST(BoundedRealEquivalence, RiccatiAndMatrixInequalityAgree) {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 25; ++trial) {
    const auto s = random_stable_system(rng, trial);
    const double g = hinf_norm(s.a, s.b, s.c, s.d);
    EXPECT_TRUE(riccati_solvable(s.a, s.b, s.c, s.d, 1.01 * g)) << trial;
    EXPECT_FALSE(riccati_solvable(s.a, s.b, s.c, s.d, 0.99 * g)) << trial;
    const auto sol = solve_riccati(s.a, s.b, s.c, s.d, 1.01 * g);
    EXPECT_LE(bounded_real_margin(s.a, s.b, s.c, s.d, sol.P, 1.01 * g), 1e-6);
    EXPECT_TRUE(bounded_real_lmi(s.a, s.b, s.c, s.d, 1.01 * g).feasible()) << trial;
    EXPECT_FALSE(bounded_real_lmi(s.a, s.b, s.c, s.d, 0.99 * g).feasible()) << trial;
  }
}

TEST(CoupledCheck, SingleModeMatchesNorm) {
  const auto rates = TransitionRateMatrix::single_mode();
  EXPECT_TRUE(coupled_mode_check({scalar(-1)}, rates, scalar(1), scalar(1), 2.0).feasible());
  EXPECT_FALSE(coupled_mode_check({scalar(-1)}, rates, scalar(1), scalar(1), 0.9).feasible());
  EXPECT_THROW(coupled_mode_check({scalar(-1)}, rates, scalar(1), scalar(1), 0.0), std::invalid_argument);
}

TEST(CoupledCheck, PositiveRowSumIsRejected) {
  Matrix pi(2, 2);
  pi << -1, 2, 1, -1;
  EXPECT_THROW(TransitionRateMatrix{pi}, std::invalid_argument);
}

TEST(CoupledCheck, CertificateMatricesArePositive) {
  Matrix pi(2, 2);
  pi << -0.5, 0.5, 0.2, -0.2;
  const auto cert = coupled_mode_check({scalar(-1), scalar(-2)}, TransitionRateMatrix(pi), scalar(1), scalar(1), 1.5);
  ASSERT_TRUE(cert.feasible());
  ASSERT_EQ(cert.P_modes.size(), 2u);
  for (const auto& p : cert.P_modes) EXPECT_GT(lmi::lambda_min(p), 0.0);
  EXPECT_GT(cert.epsilon, 0.0);
}

TEST(VerifyClosedLoop, ReferenceControllerOnReferencePlant) {
  const auto plant = optics::reference::plant();
  const auto ctrl = optics::reference::controller_augmented();
  bool any = false;
  for (double g : {0.5, 1.0, 2.0}) {
    const auto rep = verify_closed_loop(plant, ctrl, g);
    EXPECT_TRUE(rep.all_hurwitz());
    any = any || rep.pass;
  }
  EXPECT_TRUE(any);
  // The literal coupling term gives a different problem but also certifies.
  EXPECT_TRUE(verify_closed_loop(plant, ctrl, 1.0, {}, CouplingReading::literal).certificate.feasible());
}

TEST(VerifyClosedLoop, ParkedControllerPassesAndUnstableOneFails) {
  const auto plant = diagonal_plant(-1, 1, 1, 1, -1, 1, -1);
  const Matrix eye = Matrix::Identity(2, 2);
  const Matrix zero = Matrix::Zero(2, 2);
  const Controller parked({{-eye, zero, zero, {}, {}}}, canonical_theta(2));
  EXPECT_TRUE(verify_closed_loop(plant, parked, 10.0).pass);
  const Controller unstable({{eye, zero, zero, {}, {}}}, canonical_theta(2));
  const auto rep = verify_closed_loop(plant, unstable, 10.0);
  EXPECT_FALSE(rep.pass);
  EXPECT_FALSE(rep.all_hurwitz());
}

TEST(VerifyClosedLoop, SynthesizedControllerAtCertifiedLevel) {
  const auto plant = optics::reference::plant();
  const auto s = min_attenuation(plant, 1e-3, 1.0, 1e-5);
  const auto rep = verify_closed_loop(plant, augment_controller(*s.result.controller), s.g_star);
  EXPECT_TRUE(rep.pass);
  ASSERT_TRUE(rep.realizability.has_value());
  EXPECT_TRUE(rep.realizability->realizable);
  EXPECT_GT(rep.certificate.lambda, 0.0);
}
