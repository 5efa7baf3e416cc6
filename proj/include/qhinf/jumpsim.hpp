#pragma once

// Markov fault paths and closed-loop moment propagation.
//
// The attenuation estimate is a falsification probe: it evaluates a finite
// disturbance family over a finite horizon, so it can refute an attenuation
// level but never prove one.

#include "qhinf/qmodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace qhinf {

struct MarkovPath {
  double t_end = 0.0;
  std::vector<double> jump_times;  // strictly increasing in (0, t_end)
  std::vector<int> modes;          // modes.size() == jump_times.size() + 1
  std::uint64_t seed = 0;

  [[nodiscard]] int mode_at(double t) const {
    const auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
    return modes[std::size_t(it - jump_times.begin())];
  }
};

/// Exponential holding times with rate -pi_jj; the next mode k != j is chosen
/// with probability pi_jk / (-pi_jj).
inline MarkovPath sample_markov_path(const TransitionRateMatrix& rates, double t_end, int initial_mode,
                                     std::uint64_t seed) {
  if (!(t_end > 0.0)) throw std::invalid_argument("t_end must be positive");
  if (initial_mode < 0 || initial_mode >= rates.modes()) throw std::invalid_argument("initial mode out of range");
  std::mt19937_64 rng(seed);
  MarkovPath path;
  path.t_end = t_end;
  path.seed = seed;
  path.modes.push_back(initial_mode);
  const Matrix& pi = rates.matrix();
  double t = 0.0;
  int mode = initial_mode;
  for (;;) {
    const double rate = -pi(mode, mode);
    if (!(rate > 0.0)) break;
    t += std::exponential_distribution<double>(rate)(rng);
    if (!(t < t_end)) break;
    std::vector<double> weights(std::size_t(rates.modes()));
    for (int k = 0; k < rates.modes(); ++k) weights[std::size_t(k)] = k == mode ? 0.0 : pi(mode, k);
    mode = std::discrete_distribution<int>(weights.begin(), weights.end())(rng);
    path.jump_times.push_back(t);
    path.modes.push_back(mode);
  }
  return path;
}

/// Path that stays in one mode.
inline MarkovPath constant_path(int mode, double t_end) { return {t_end, {}, {mode}, 0}; }

using Signal = std::function<Vector(double)>;

struct MomentTrajectory {
  std::vector<double> t;
  std::vector<Vector> mean;
  std::vector<Matrix> Q;
  double output_energy = 0.0;  // integral of Tr(C'C Q)
  double input_energy = 0.0;   // integral of |beta|^2

  /// Symmetry of Q and Q >= mean mean' - tol I at every stored point.
  [[nodiscard]] bool invariants_hold(double sym_tol = 1e-12, double psd_tol = 1e-8) const {
    for (std::size_t k = 0; k < Q.size(); ++k) {
      if (linalg::max_abs(Q[k] - Q[k].transpose()) > sym_tol * (1.0 + linalg::max_abs(Q[k]))) return false;
      const Matrix gap = linalg::symmetrize(Q[k] - mean[k] * mean[k].transpose());
      Eigen::SelfAdjointEigenSolver<Matrix> es(gap, Eigen::EigenvaluesOnly);
      if (es.eigenvalues().minCoeff() < -psd_tol * (1.0 + linalg::max_abs(Q[k]))) return false;
    }
    return true;
  }
};

struct MomentOptions {
  double dt = 1e-2;
  int store_every = 1;        // keep every k-th grid point (the end point is always kept)
  bool store = true;          // false keeps only the energies and the final state
  Matrix S_w;                 // disturbance-channel noise covariance (default I)
  Matrix S_nu;                // controller-noise covariance (default I)
};

namespace detail {

template <class Mat, class Vec>
struct MomentState {
  Vec m;
  Mat q;
  double e_out = 0.0;
  double e_in = 0.0;
};

/// RK4 moment integration with matrix types `Mat`/`Vec`; bounded-size types
/// keep the small closed-loop matrices off the heap.
template <class Mat, class Vec>
MomentTrajectory integrate_moments(const ClosedLoop& cl, const MarkovPath& path, const Signal& beta,
                                   const Vector& mean0, const Matrix& q0, const MomentOptions& opts) {
  const auto nw = cl.modes.front().B1.cols();
  const auto nnu = cl.modes.front().B2.cols();
  const Matrix s_w = opts.S_w.size() ? opts.S_w : Matrix::Identity(nw, nw);
  const Matrix s_nu = opts.S_nu.size() ? opts.S_nu : Matrix::Identity(nnu, nnu);
  std::vector<Mat> a, noise, ctc;
  std::vector<Matrix> b1;
  for (const auto& m : cl.modes) {
    a.push_back(m.A);
    b1.push_back(m.B1);
    noise.push_back(linalg::symmetrize(m.B1 * s_w * m.B1.transpose() + m.B2 * s_nu * m.B2.transpose()));
    ctc.push_back(m.C.transpose() * m.C);
  }

  using State = MomentState<Mat, Vec>;
  State k1, k2, k3, k4, tmp;
  Mat aq;
  // Forcing B1 beta and |beta|^2 at the three RK4 abscissae of a step.
  Vec bb[3];
  double b2[3];
  auto forcing = [&](int mode, double t0, double h) {
    for (int s = 0; s < 3; ++s) {
      const Vector b = beta(t0 + 0.5 * h * s);
      bb[s] = (b1[std::size_t(mode)] * b).eval();
      b2[s] = b.squaredNorm();
    }
  };
  auto rhs = [&](int mode, int at, const State& x, State& d) {
    const auto im = std::size_t(mode);
    const Vec& f = bb[at];
    d.m.noalias() = a[im].lazyProduct(x.m);
    d.m += f;
    aq.noalias() = a[im].lazyProduct(x.q);
    d.q = aq + aq.transpose() + noise[im];
    d.q.noalias() += x.m.lazyProduct(f.transpose());
    d.q.noalias() += f.lazyProduct(x.m.transpose());
    d.e_out = ctc[im].cwiseProduct(x.q).sum();
    d.e_in = b2[at];
  };
  auto axpy = [](const State& x, double h, const State& k, State& out) {
    out.m = x.m + h * k.m;
    out.q = x.q + h * k.q;
    out.e_out = x.e_out + h * k.e_out;
    out.e_in = x.e_in + h * k.e_in;
  };

  MomentTrajectory traj;
  State x{mean0, linalg::symmetrize(q0), 0.0, 0.0};
  auto keep = [&](double t) {
    traj.t.push_back(t);
    traj.mean.push_back(x.m);
    traj.Q.push_back(x.q);
  };
  if (opts.store) keep(0.0);

  double t = 0.0;
  long step = 0;
  std::vector<double> bounds = path.jump_times;
  bounds.push_back(path.t_end);
  for (std::size_t seg = 0; seg < bounds.size(); ++seg) {
    const int mode = path.modes[seg];
    const double seg_end = bounds[seg];
    const long pieces = std::max<long>(1, long(std::ceil((seg_end - t) / opts.dt - 1e-9)));
    const double h = (seg_end - t) / double(pieces);
    const double seg_start = t;
    for (long p = 0; p < pieces; ++p) {
      const double t0 = seg_start + double(p) * h;
      forcing(mode, t0, h);
      rhs(mode, 0, x, k1);
      axpy(x, 0.5 * h, k1, tmp);
      rhs(mode, 1, tmp, k2);
      axpy(x, 0.5 * h, k2, tmp);
      rhs(mode, 1, tmp, k3);
      axpy(x, h, k3, tmp);
      rhs(mode, 2, tmp, k4);
      x.m += h / 6.0 * (k1.m + 2.0 * k2.m + 2.0 * k3.m + k4.m);
      x.q += h / 6.0 * (k1.q + 2.0 * k2.q + 2.0 * k3.q + k4.q);
      x.q = (0.5 * (x.q + x.q.transpose())).eval();
      x.e_out += h / 6.0 * (k1.e_out + 2.0 * k2.e_out + 2.0 * k3.e_out + k4.e_out);
      x.e_in += h / 6.0 * (k1.e_in + 2.0 * k2.e_in + 2.0 * k3.e_in + k4.e_in);
      ++step;
      const bool last = seg + 1 == bounds.size() && p + 1 == pieces;
      if (opts.store && (last || step % std::max(1, opts.store_every) == 0)) keep(t0 + h);
    }
    t = seg_end;
  }
  if (!opts.store) keep(t);
  traj.output_energy = x.e_out;
  traj.input_energy = x.e_in;
  return traj;
}

}  // namespace detail

/// Integrates, with classic RK4 steps that never straddle a jump,
///   d<eta>/dt = A_i <eta> + B1_i beta,
///   dQ/dt = A_i Q + Q A_i' + <eta> beta' B1_i' + B1_i beta <eta>' + B1_i S_w B1_i' + B2_i S_nu B2_i',
/// together with the energies Tr(C_i' C_i Q) and |beta|^2.
inline MomentTrajectory propagate_moments(const ClosedLoop& cl, const MarkovPath& path, const Signal& beta,
                                          const Vector& mean0, const Matrix& q0, const MomentOptions& opts = {}) {
  if (!(opts.dt > 0.0)) throw std::invalid_argument("dt must be positive");
  const auto n = cl.dim();
  if (mean0.size() != n || q0.rows() != n || q0.cols() != n) throw std::invalid_argument("initial moments have wrong size");
  if (!linalg::is_symmetric(q0, 1e-12)) throw std::invalid_argument("Q0 must be symmetric");
  if (n > 0) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(linalg::symmetrize(q0), Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10) throw std::invalid_argument("Q0 must be positive semidefinite");
  }
  for (int mode : path.modes)
    if (mode < 0 || mode >= int(cl.modes.size())) throw std::invalid_argument("path mode out of range");
  constexpr int kSmall = 12;
  if (n <= kSmall)
    return detail::integrate_moments<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kSmall, kSmall>,
                                     Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kSmall, 1>>(cl, path, beta, mean0,
                                                                                               q0, opts);
  return detail::integrate_moments<Matrix, Vector>(cl, path, beta, mean0, q0, opts);
}

/// Full (non-symmetrized) second moment <eta eta'> = Q + i Theta for a
/// constant system dx = A x dt + B dw with Ito matrix F = S + i T:
///   dP/dt = A P + P A' + B F B'. Returns P(t_end) as (re, im).
inline ComplexMatrix propagate_full_moment(const Matrix& a, const Matrix& b, const ComplexMatrix& f,
                                           const ComplexMatrix& p0, double t_end, double dt) {
  if (!(dt > 0.0) || !(t_end >= 0.0)) throw std::invalid_argument("invalid time grid");
  const Matrix fs = b * f.re * b.transpose();
  const Matrix fi = b * f.im * b.transpose();
  Matrix re = p0.re;
  Matrix im = p0.im;
  auto g = [&](const Matrix& m, const Matrix& src) { return Matrix(a * m + m * a.transpose() + src); };
  const long steps = std::max<long>(1, long(std::ceil(t_end / dt - 1e-9)));
  const double h = t_end / double(steps);
  for (long s = 0; s < steps; ++s) {
    for (int part = 0; part < 2; ++part) {
      Matrix& m = part == 0 ? re : im;
      const Matrix& src = part == 0 ? fs : fi;
      const Matrix k1 = g(m, src);
      const Matrix k2 = g(m + 0.5 * h * k1, src);
      const Matrix k3 = g(m + 0.5 * h * k2, src);
      const Matrix k4 = g(m + h * k3, src);
      m += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
  }
  return {re, im};
}

// ---------------------------------------------------------------------------
// Attenuation estimate

struct Disturbance {
  std::string label;
  Signal signal;
  double frequency = 0.0;  // rad/time, 0 for non-periodic inputs
};

/// Sinusoids on every disturbance channel at `count` log-spaced frequencies in
/// [w_lo, w_hi], plus a unit step.
inline std::vector<Disturbance> default_disturbances(Eigen::Index n_w, int count = 20, double w_lo = 1e-2,
                                                     double w_hi = 1e2) {
  std::vector<Disturbance> out;
  for (int k = 0; k < count; ++k) {
    const double w = count == 1 ? w_lo : w_lo * std::pow(w_hi / w_lo, double(k) / double(count - 1));
    out.push_back({"sin:" + std::to_string(w), [n_w, w](double t) { return Vector::Constant(n_w, std::sin(w * t)); },
                   w});
  }
  out.push_back({"step", [n_w](double) { return Vector::Ones(n_w); }, 0.0});
  return out;
}

/// Single-channel sinusoid or step, parsed from "sin:<w>" or "step".
inline Disturbance parse_disturbance(const std::string& spec, Eigen::Index n_w) {
  if (spec == "step") return {"step", [n_w](double) { return Vector::Ones(n_w); }, 0.0};
  if (spec.rfind("sin:", 0) == 0) {
    std::size_t used = 0;
    const double w = std::stod(spec.substr(4), &used);
    if (used != spec.size() - 4 || !(w >= 0.0)) throw std::invalid_argument("bad disturbance frequency: " + spec);
    return {spec, [n_w, w](double t) { return Vector::Constant(n_w, std::sin(w * t)); }, w};
  }
  throw std::invalid_argument("unknown disturbance '" + spec + "' (expected sin:<w> or step)");
}

/// Largest RK4 step that keeps the second-moment equation (eigenvalues
/// lambda_i + lambda_j of the mode matrices) well inside the stability region.
inline double stable_step(const ClosedLoop& cl) {
  double rho = 0.0;
  for (const auto& m : cl.modes) {
    if (m.A.size() == 0) continue;
    Eigen::EigenSolver<Matrix> es(m.A, false);
    rho = std::max(rho, es.eigenvalues().cwiseAbs().maxCoeff());
  }
  return rho > 0.0 ? 1.4 / (2.0 * rho) : std::numeric_limits<double>::infinity();
}

struct AttenuationOptions {
  double t_end = 50.0;
  int n_paths = 100;
  std::uint64_t master_seed = 1;
  int initial_mode = 0;
  /// Upper bound on the step; it is further limited by stable_step and by
  /// steps_per_period for sinusoids.
  double dt = 1e-2;
  /// Steps per period for sinusoids; dt shrinks for fast inputs.
  int steps_per_period = 40;
  unsigned threads = 0;  // 0: hardware concurrency
};

struct AttenuationEstimate {
  std::vector<std::string> labels;
  /// ratio[d][p]: (output energy - noise baseline) / input energy for
  /// disturbance d on path p.
  std::vector<std::vector<double>> ratio;
  std::vector<double> mean_ratio;  // per disturbance, averaged over paths
  double max_mean_ratio = 0.0;     // max over the family of the path average
  double max_path_ratio = 0.0;     // worst single path and disturbance
  std::vector<MarkovPath> paths;

  [[nodiscard]] bool below(double g) const { return max_mean_ratio < g * g; }
};

/// Path seeds come from seed_seq{master, index}, so results do not depend on
/// the number of worker threads.
inline std::uint64_t path_seed(std::uint64_t master, std::uint64_t index) {
  std::seed_seq seq{std::uint32_t(master), std::uint32_t(master >> 32), std::uint32_t(index),
                    std::uint32_t(index >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (std::uint64_t(words[0]) << 32) | words[1];
}

inline AttenuationEstimate estimate_attenuation(const ClosedLoop& cl, const std::vector<Disturbance>& family,
                                                const AttenuationOptions& opts = {}) {
  if (family.empty()) throw std::invalid_argument("disturbance family is empty");
  if (opts.n_paths < 1) throw std::invalid_argument("need at least one path");
  const auto n = cl.dim();
  AttenuationEstimate est;
  for (std::uint64_t p = 0; p < std::uint64_t(opts.n_paths); ++p)
    est.paths.push_back(sample_markov_path(cl.rates, opts.t_end, opts.initial_mode, path_seed(opts.master_seed, p)));
  est.ratio.assign(family.size(), std::vector<double>(std::size_t(opts.n_paths), 0.0));
  for (const auto& d : family) est.labels.push_back(d.label);

  const Signal zero = [nw = cl.modes.front().B1.cols()](double) { return Vector::Zero(nw); };
  const double base_dt = std::min(opts.dt, stable_step(cl));
  auto dt_for = [&](const Disturbance& d) {
    return d.frequency > 0.0 ? std::min(base_dt, 2.0 * std::numbers::pi / (d.frequency * opts.steps_per_period))
                             : base_dt;
  };
  std::vector<std::string> errors(std::size_t(opts.n_paths));
  auto work = [&](std::size_t p) {
    try {
      const auto& path = est.paths[p];
      MomentOptions mo;
      mo.store = false;
      std::vector<std::pair<double, double>> baselines;  // (dt, energy)
      for (std::size_t d = 0; d < family.size(); ++d) {
        mo.dt = dt_for(family[d]);
        double base = -1.0;
        for (const auto& [bdt, e] : baselines)
          if (bdt == mo.dt) base = e;
        if (base < 0.0) {
          base = propagate_moments(cl, path, zero, Vector::Zero(n), Matrix::Zero(n, n), mo).output_energy;
          baselines.emplace_back(mo.dt, base);
        }
        const auto traj = propagate_moments(cl, path, family[d].signal, Vector::Zero(n), Matrix::Zero(n, n), mo);
        if (!(traj.input_energy > 0.0)) throw std::invalid_argument("disturbance '" + family[d].label + "' has zero energy");
        est.ratio[d][p] = (traj.output_energy - base) / traj.input_energy;
      }
    } catch (const std::exception& e) {
      errors[p] = e.what();
    }
  };
  unsigned workers = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, unsigned(opts.n_paths));
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t p = w; p < std::size_t(opts.n_paths); p += workers) work(p);
    });
  for (auto& th : pool) th.join();
  for (const auto& e : errors)
    if (!e.empty()) throw std::invalid_argument(e);

  for (std::size_t d = 0; d < family.size(); ++d) {
    double sum = 0.0;
    for (double r : est.ratio[d]) {
      sum += r;
      est.max_path_ratio = std::max(est.max_path_ratio, r);
    }
    est.mean_ratio.push_back(sum / double(opts.n_paths));
    est.max_mean_ratio = std::max(est.max_mean_ratio, est.mean_ratio.back());
  }
  return est;
}

}  // namespace qhinf
