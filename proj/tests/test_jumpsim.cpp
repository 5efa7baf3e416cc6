#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <map>

using namespace qhinf;
using qhinf::testing::expm;
using qhinf::testing::kron_lyapunov;
using qhinf::testing::max_abs;
using qhinf::testing::random_hurwitz;
using qhinf::testing::random_matrix;

namespace {

ClosedLoop single_mode_loop(Matrix a, Matrix b1, Matrix b2, Matrix c) {
  const auto nz = c.rows();
  const auto nw = b1.cols();
  ClosedLoop cl{{}, TransitionRateMatrix::single_mode()};
  cl.modes.push_back({std::move(a), std::move(b1), std::move(b2), std::move(c), Matrix::Zero(nz, nw)});
  return cl;
}

ClosedLoop scalar_loop(double a) {
  return single_mode_loop(Matrix::Constant(1, 1, a), Matrix::Ones(1, 1), Matrix::Zero(1, 0), Matrix::Ones(1, 1));
}

Matrix two_state_rates(double up, double down) {
  Matrix pi(2, 2);
  pi << -up, up, down, -down;
  return pi;
}

const Signal no_input = [](double) { return Vector::Zero(1); };

}  // namespace

// --- Markov paths ------------------------------------------------------------

TEST(MarkovPath, ZeroRatesNeverJump) {
  const auto p = sample_markov_path(TransitionRateMatrix(Matrix::Zero(2, 2)), 100.0, 1, 5);
  EXPECT_TRUE(p.jump_times.empty());
  EXPECT_EQ(p.modes, std::vector<int>{1});
  EXPECT_EQ(sample_markov_path(TransitionRateMatrix::single_mode(), 10.0, 0, 1).modes.size(), 1u);
}

TEST(MarkovPath, StructureAndLookup) {
  const auto p = sample_markov_path(TransitionRateMatrix(two_state_rates(2.0, 3.0)), 20.0, 0, 77);
  ASSERT_EQ(p.modes.size(), p.jump_times.size() + 1);
  EXPECT_EQ(p.mode_at(0.0), 0);
  for (std::size_t k = 0; k < p.jump_times.size(); ++k) {
    EXPECT_GT(p.jump_times[k], k ? p.jump_times[k - 1] : 0.0);
    EXPECT_LT(p.jump_times[k], 20.0);
    EXPECT_NE(p.modes[k], p.modes[k + 1]);
    EXPECT_EQ(p.mode_at(p.jump_times[k]), p.modes[k + 1]);
  }
}

TEST(MarkovPath, ReferenceHoldingTimesAndJumpChain) {
  const TransitionRateMatrix rates(optics::reference::rates_matrix());
  std::map<int, std::pair<double, int>> holding;  // total time and completed visits per mode
  std::map<std::pair<int, int>, int> moves;
  auto fewest_visits = [&] {
    int least = holding.size() < 3 ? 0 : std::numeric_limits<int>::max();
    for (const auto& [mode, tv] : holding) least = std::min(least, tv.second);
    return least;
  };
  for (std::uint64_t seed = 1; fewest_visits() < 10000; ++seed) {
    const auto p = sample_markov_path(rates, 5e4, int(seed % 3), seed);
    double start = 0.0;
    for (std::size_t k = 0; k < p.jump_times.size(); ++k) {
      auto& [total, visits] = holding[p.modes[k]];
      total += p.jump_times[k] - start;
      ++visits;
      ++moves[{p.modes[k], p.modes[k + 1]}];
      start = p.jump_times[k];
    }
  }
  const Matrix& pi = rates.matrix();
  for (const auto& [mode, tv] : holding) {
    const double expected = -1.0 / pi(mode, mode);
    EXPECT_NEAR(tv.first / tv.second, expected, 0.05 * expected) << "mode " << mode;
  }
  // From mode 0 both exits are equally likely; modes 1 and 2 always return to 0.
  auto count = [&](int from, int to) { return moves[std::make_pair(from, to)]; };
  const double from0 = count(0, 1) + count(0, 2);
  EXPECT_NEAR(count(0, 1) / from0, 0.5, 0.03);
  EXPECT_EQ(count(1, 2), 0);
  EXPECT_EQ(count(2, 1), 0);
}

TEST(MarkovPath, TwoStateJumpCount) {
  const TransitionRateMatrix rates(two_state_rates(1.0, 1.0));
  double total = 0.0;
  const int paths = 200;
  for (int s = 0; s < paths; ++s) total += double(sample_markov_path(rates, 100.0, 0, std::uint64_t(s)).jump_times.size());
  EXPECT_NEAR(total / paths, 100.0, 5.0);
}

TEST(MarkovPath, DeterministicPerSeedAndValidated) {
  const TransitionRateMatrix rates(two_state_rates(0.5, 0.7));
  const auto a = sample_markov_path(rates, 50.0, 0, 42);
  const auto b = sample_markov_path(rates, 50.0, 0, 42);
  EXPECT_EQ(a.jump_times, b.jump_times);
  EXPECT_EQ(a.modes, b.modes);
  EXPECT_NE(a.jump_times, sample_markov_path(rates, 50.0, 0, 43).jump_times);
  EXPECT_THROW(sample_markov_path(rates, 50.0, 2, 1), std::invalid_argument);
  EXPECT_THROW(sample_markov_path(rates, 0.0, 0, 1), std::invalid_argument);
  EXPECT_NE(path_seed(1, 0), path_seed(1, 1));
  EXPECT_NE(path_seed(1, 0), path_seed(2, 0));
}

// --- moment propagation ------------------------------------------------------

TEST(Moments, SteadyStateMatchesLyapunov) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 2 + trial % 3;
    const Matrix a = random_hurwitz(rng, n, 0.5);
    const Matrix b1 = random_matrix(rng, n, 2);
    const Matrix b2 = random_matrix(rng, n, 2);
    const auto cl = single_mode_loop(a, b1, b2, Matrix::Identity(n, n));
    const Signal zero = [](double) { return Vector::Zero(2); };
    MomentOptions mo;
    mo.store = false;
    const auto traj = propagate_moments(cl, constant_path(0, 80.0), zero, Vector::Zero(n), Matrix::Zero(n, n), mo);
    const Matrix oracle = kron_lyapunov(a, b1 * b1.transpose() + b2 * b2.transpose());
    EXPECT_LE(max_abs(traj.Q.back() - oracle), 1e-6) << "trial " << trial;
  }
}

TEST(Moments, MeanFollowsPiecewiseExponential) {
  std::mt19937_64 rng(37);
  const int n = 3;
  ClosedLoop cl{{}, TransitionRateMatrix(two_state_rates(0.8, 0.5))};
  for (int i = 0; i < 2; ++i)
    cl.modes.push_back({random_hurwitz(rng, n, 0.2), random_matrix(rng, n, 1), Matrix::Zero(n, 0),
                        Matrix::Identity(n, n), Matrix::Zero(n, 1)});
  const auto path = sample_markov_path(cl.rates, 6.0, 0, 9);
  ASSERT_FALSE(path.jump_times.empty());
  const Vector m0 = random_matrix(rng, n, 1);
  MomentOptions mo;
  mo.dt = 2e-3;
  const auto traj = propagate_moments(cl, path, no_input, m0, m0 * m0.transpose(), mo);
  Vector oracle = m0;
  double t = 0.0;
  for (std::size_t k = 0; k <= path.jump_times.size(); ++k) {
    const double end = k < path.jump_times.size() ? path.jump_times[k] : path.t_end;
    oracle = expm(cl.modes[std::size_t(path.modes[k])].A * (end - t)) * oracle;
    t = end;
  }
  EXPECT_LE((traj.mean.back() - oracle).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_NEAR(traj.t.back(), path.t_end, 1e-12);
}

TEST(Moments, InvariantsAlongRandomPaths) {
  std::mt19937_64 rng(41);
  const auto plant = optics::reference::plant();
  const auto cl = assemble_closed_loop(plant, optics::reference::controller_augmented());
  const auto n = cl.dim();
  Matrix x = random_matrix(rng, n, n);
  const Vector m0 = random_matrix(rng, n, 1);
  const Matrix q0 = x * x.transpose() + m0 * m0.transpose();
  const Signal beta = [](double t) { return Vector::Constant(2, std::sin(0.3 * t)); };
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto path = sample_markov_path(cl.rates, 200.0, 0, seed);
    MomentOptions mo;
    mo.dt = std::min(0.05, stable_step(cl));
    mo.store_every = 10;
    const auto traj = propagate_moments(cl, path, beta, m0, q0, mo);
    EXPECT_TRUE(traj.invariants_hold()) << "seed " << seed;
    for (const auto& q : traj.Q) EXPECT_EQ(q, q.transpose());
    EXPECT_GT(traj.output_energy, 0.0);
  }
}

TEST(Moments, FourthOrderConvergence) {
  std::mt19937_64 rng(43);
  const int n = 3;
  const Matrix a = random_hurwitz(rng, n, 0.3);
  const auto cl = single_mode_loop(a, random_matrix(rng, n, 1), random_matrix(rng, n, 2), Matrix::Identity(n, n));
  const Signal beta = [](double t) { return Vector::Constant(1, std::sin(2.0 * t) + std::cos(0.7 * t)); };
  const Vector m0 = Vector::Ones(n);
  auto final_q = [&](double dt) {
    MomentOptions mo;
    mo.dt = dt;
    mo.store = false;
    return propagate_moments(cl, constant_path(0, 4.0), beta, m0, m0 * m0.transpose(), mo).Q.back();
  };
  const Matrix ref = final_q(0.2 / 64);
  const double e1 = max_abs(final_q(0.2) - ref);
  const double e2 = max_abs(final_q(0.1) - ref);
  const double e3 = max_abs(final_q(0.05) - ref);
  const double order1 = std::log2(e1 / e2), order2 = std::log2(e2 / e3);
  EXPECT_NEAR(order1, 4.0, 0.4);
  EXPECT_NEAR(order2, 4.0, 0.4);
}

TEST(Moments, InputEnergyOfStep) {
  const auto cl = scalar_loop(-1.0);
  const Signal step = [](double) { return Vector::Ones(1); };
  const auto traj = propagate_moments(cl, constant_path(0, 7.5), step, Vector::Zero(1), Matrix::Zero(1, 1));
  EXPECT_NEAR(traj.input_energy, 7.5, 1e-12);
}

TEST(Moments, RejectsBadArguments) {
  const auto cl = scalar_loop(-1.0);
  MomentOptions bad;
  bad.dt = 0.0;
  const auto path = constant_path(0, 1.0);
  EXPECT_THROW(propagate_moments(cl, path, no_input, Vector::Zero(1), Matrix::Zero(1, 1), bad), std::invalid_argument);
  EXPECT_THROW(propagate_moments(cl, path, no_input, Vector::Zero(2), Matrix::Zero(1, 1)), std::invalid_argument);
  EXPECT_THROW(propagate_moments(cl, path, no_input, Vector::Zero(1), -Matrix::Ones(1, 1)), std::invalid_argument);
  EXPECT_THROW(propagate_moments(cl, constant_path(1, 1.0), no_input, Vector::Zero(1), Matrix::Zero(1, 1)),
               std::invalid_argument);
}

TEST(Moments, FullMomentKeepsCommutationPart) {
  const Matrix j = canonical_theta(2).theta();
  const ComplexMatrix f{Matrix::Identity(2, 2), j};
  for (double detuning : {0.0, 0.7}) {
    const Matrix a = -0.5 * Matrix::Identity(2, 2) + detuning * j;
    const ComplexMatrix p0{Matrix::Identity(2, 2) * 3.0, j};
    const auto p = propagate_full_moment(a, -Matrix::Identity(2, 2), f, p0, 10.0, 1e-2);
    EXPECT_LE(max_abs(p.im - j), 1e-12);
    // The symmetric part relaxes to the vacuum value I.
    EXPECT_LE(max_abs(p.re - Matrix::Identity(2, 2)), 1e-4);
  }
}

// --- attenuation estimate ----------------------------------------------------

TEST(Attenuation, ScalarStepRatioMatchesClosedForm) {
  const auto cl = scalar_loop(-1.0);
  AttenuationOptions ao;
  ao.t_end = 200.0;
  ao.n_paths = 1;
  const auto est = estimate_attenuation(cl, {parse_disturbance("step", 1)}, ao);
  const double t = ao.t_end;
  const double exact = (t - 2.0 * (1.0 - std::exp(-t)) + 0.5 * (1.0 - std::exp(-2.0 * t))) / t;
  EXPECT_NEAR(est.ratio[0][0], exact, 1e-6);
  EXPECT_NEAR(est.max_mean_ratio, 1.0, 0.05);
  EXPECT_TRUE(est.below(1.01));
}

TEST(Attenuation, SinusoidApproachesSteadyStateGain) {
  const auto cl = scalar_loop(-1.0);
  AttenuationOptions ao;
  ao.t_end = 400.0;
  ao.n_paths = 1;
  const double w = 2.0;
  const auto est = estimate_attenuation(cl, {parse_disturbance("sin:2", 1)}, ao);
  EXPECT_NEAR(est.ratio[0][0], 1.0 / (1.0 + w * w), 0.05 / (1.0 + w * w));
}

TEST(Attenuation, IndependentOfThreadCount) {
  const auto cl = assemble_closed_loop(optics::reference::plant(), optics::reference::controller_augmented());
  AttenuationOptions ao;
  ao.t_end = 5.0;
  ao.n_paths = 6;
  const auto family = default_disturbances(2, 2);
  ao.threads = 1;
  const auto one = estimate_attenuation(cl, family, ao);
  ao.threads = 3;
  const auto three = estimate_attenuation(cl, family, ao);
  EXPECT_EQ(one.ratio, three.ratio);
  for (std::size_t p = 0; p < one.paths.size(); ++p) EXPECT_EQ(one.paths[p].jump_times, three.paths[p].jump_times);
}

TEST(Attenuation, RejectsDegenerateInputs) {
  const auto cl = scalar_loop(-1.0);
  AttenuationOptions ao;
  ao.t_end = 1.0;
  ao.n_paths = 1;
  EXPECT_THROW(estimate_attenuation(cl, {{"zero", no_input, 0.0}}, ao), std::invalid_argument);
  EXPECT_THROW(estimate_attenuation(cl, {}, ao), std::invalid_argument);
  ao.n_paths = 0;
  EXPECT_THROW(estimate_attenuation(cl, {parse_disturbance("step", 1)}, ao), std::invalid_argument);
}

TEST(Disturbances, Parsing) {
  const auto s = parse_disturbance("sin:2.5", 2);
  EXPECT_DOUBLE_EQ(s.frequency, 2.5);
  EXPECT_NEAR(s.signal(1.0)(1), std::sin(2.5), 1e-15);
  EXPECT_EQ(parse_disturbance("step", 3).signal(4.0), Vector::Ones(3));
  EXPECT_THROW(parse_disturbance("sin:x", 1), std::invalid_argument);
  EXPECT_THROW(parse_disturbance("sin:1x", 1), std::invalid_argument);
  EXPECT_THROW(parse_disturbance("sin:-1", 1), std::invalid_argument);
  EXPECT_THROW(parse_disturbance("cos:1", 1), std::invalid_argument);
  const auto family = default_disturbances(2, 5, 0.1, 10.0);
  ASSERT_EQ(family.size(), 6u);
  EXPECT_NEAR(family.front().frequency, 0.1, 1e-15);
  EXPECT_NEAR(family[4].frequency, 10.0, 1e-12);
  EXPECT_EQ(family.back().label, "step");
}

TEST(Disturbances, StableStepFromSpectralRadius) {
  EXPECT_DOUBLE_EQ(stable_step(scalar_loop(-4.0)), 1.4 / 8.0);
}
