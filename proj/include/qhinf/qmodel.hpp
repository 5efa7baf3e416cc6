#pragma once

// Core data model for Markovian-jump linear quantum systems: commutation
// matrices, Ito noise tables, plant/controller/closed-loop containers and the
// map from physical (Hamiltonian, coupling) parameters to quadrature state space.

#include "qhinf/linalg.hpp"

#include <complex>
#include <cstddef>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace qhinf {

// Tolerances shared across the model layer.
inline constexpr double kStructuralTol = 1e-12;
inline constexpr double kSpectralTol = 1e-10;

// ---------------------------------------------------------------------------
// Commutation matrix

enum class CommutationKind { canonical, degenerate };

/// Theta in [x_j, x_k] = 2i Theta_jk. Canonical is block-diag(J, ..., J);
/// degenerate canonical is block-diag(0_{n'}, J, ..., J).
class CommutationMatrix {
 public:
  [[nodiscard]] int n() const { return n_; }
  [[nodiscard]] CommutationKind kind() const { return kind_; }
  /// Size n' of the zero block (0 for canonical).
  [[nodiscard]] int degenerate_dim() const { return degenerate_dim_; }
  [[nodiscard]] const Matrix& theta() const { return theta_; }
  [[nodiscard]] bool is_canonical() const { return kind_ == CommutationKind::canonical; }

  friend CommutationMatrix make_commutation_matrix(int n, CommutationKind kind, int degenerate_dim);

 private:
  CommutationMatrix(int n, CommutationKind kind, int degenerate_dim, Matrix theta)
      : n_(n), kind_(kind), degenerate_dim_(degenerate_dim), theta_(std::move(theta)) {}

  int n_;
  CommutationKind kind_;
  int degenerate_dim_;
  Matrix theta_;
};

inline CommutationMatrix make_commutation_matrix(int n, CommutationKind kind = CommutationKind::canonical,
                                                 int degenerate_dim = 0) {
  if (n <= 0 || n % 2 != 0)
    throw std::invalid_argument("commutation matrix dimension must be even and positive, got " + std::to_string(n));
  if (kind == CommutationKind::canonical) {
    return {n, kind, 0, linalg::block_diag_j(n / 2)};
  }
  if (degenerate_dim <= 0 || degenerate_dim > n || (n - degenerate_dim) % 2 != 0)
    throw std::invalid_argument("invalid degenerate block size " + std::to_string(degenerate_dim) + " for n = " +
                                std::to_string(n));
  Matrix theta = Matrix::Zero(n, n);
  theta.bottomRightCorner(n - degenerate_dim, n - degenerate_dim) = linalg::block_diag_j((n - degenerate_dim) / 2);
  return {n, kind, degenerate_dim, std::move(theta)};
}

inline CommutationMatrix canonical_theta(int n) { return make_commutation_matrix(n, CommutationKind::canonical); }

// ---------------------------------------------------------------------------
// Ito table

/// F = S + i T_im with S symmetric and T_im skew-symmetric.
struct ItoTriple {
  ComplexMatrix F;
  Matrix S;
  Matrix T_im;
};

/// Splits a nonnegative Hermitian Ito matrix into its symmetric and
/// antisymmetric parts.
inline ItoTriple ito_decompose(const ComplexMatrix& f) {
  const Eigen::Index m = f.rows();
  if (f.cols() != m || f.im.rows() != m || f.im.cols() != m)
    throw std::invalid_argument("ito_decompose: F must be square");
  const Eigen::MatrixXcd fc = f.to_complex();
  if (m > 0 && (fc - fc.adjoint()).cwiseAbs().maxCoeff() > kSpectralTol)
    throw std::invalid_argument("ito_decompose: F is not Hermitian");
  if (m > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (fc + fc.adjoint()), Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -kSpectralTol)
      throw std::invalid_argument("ito_decompose: F has a negative eigenvalue " +
                                  std::to_string(es.eigenvalues().minCoeff()));
  }
  // Hermitian F: (F + F^T)/2 = Re F, (F - F^T)/2 = i Im F.
  ItoTriple out;
  out.F = f;
  out.S = 0.5 * (f.re + f.re.transpose());
  out.T_im = 0.5 * (f.im - f.im.transpose());
  return out;
}

/// Canonical quadrature vacuum table F = I + i block-diag(J, ..., J) for `m` channels (m even).
inline ItoTriple canonical_ito(Eigen::Index m) {
  if (m % 2 != 0) throw std::invalid_argument("canonical_ito: dimension must be even");
  return ito_decompose({Matrix::Identity(m, m), linalg::block_diag_j(m / 2)});
}

// ---------------------------------------------------------------------------
// Transition rate matrix

struct GeneratorViolation {
  int row;
  int col;
  double value;
  std::string reason;
};

struct GeneratorReport {
  bool ok = true;
  std::vector<GeneratorViolation> violations;

  [[nodiscard]] std::string describe() const {
    std::ostringstream os;
    for (const auto& v : violations)
      os << "(" << v.row + 1 << "," << v.col + 1 << ") = " << v.value << ": " << v.reason << "\n";
    return os.str();
  }
};

inline constexpr double kRowSumTol = 1e-12;

inline GeneratorReport validate_generator(const Matrix& pi) {
  GeneratorReport report;
  if (pi.rows() != pi.cols()) {
    report.ok = false;
    report.violations.push_back({-1, -1, 0.0, "matrix is not square"});
    return report;
  }
  for (Eigen::Index i = 0; i < pi.rows(); ++i) {
    for (Eigen::Index j = 0; j < pi.cols(); ++j) {
      if (i != j && pi(i, j) < 0.0)
        report.violations.push_back({int(i), int(j), pi(i, j), "negative off-diagonal rate"});
    }
    const double row_sum = pi.row(i).sum();
    if (std::abs(row_sum) > kRowSumTol)
      report.violations.push_back({int(i), int(i), row_sum, "row does not sum to zero"});
  }
  report.ok = report.violations.empty();
  return report;
}

/// Generator of the continuous-time fault chain (rates in 1/time).
class TransitionRateMatrix {
 public:
  explicit TransitionRateMatrix(Matrix pi) : pi_(std::move(pi)) {
    const auto report = validate_generator(pi_);
    if (!report.ok) throw std::invalid_argument("invalid transition rate matrix:\n" + report.describe());
    if (pi_.rows() < 1) throw std::invalid_argument("transition rate matrix needs at least one mode");
  }
  /// Single mode, no jumps.
  static TransitionRateMatrix single_mode() { return TransitionRateMatrix(Matrix::Zero(1, 1)); }

  [[nodiscard]] int modes() const { return int(pi_.rows()); }
  [[nodiscard]] const Matrix& matrix() const { return pi_; }
  [[nodiscard]] double operator()(int i, int j) const { return pi_(i, j); }

 private:
  Matrix pi_;
};

// ---------------------------------------------------------------------------
// Plant, controller, closed loop

/// Faulty plant
///   dx = A_i x dt + B1 dw + B2 du,  dz = C1 x dt + D1 du,  dy = C2 x dt + D2 dw
/// where only A jumps with the fault mode.
class JumpPlant {
 public:
  JumpPlant(std::vector<Matrix> a_modes, Matrix b1, Matrix b2, Matrix c1, Matrix d1, Matrix c2, Matrix d2,
            CommutationMatrix theta, TransitionRateMatrix rates)
      : a_(std::move(a_modes)),
        b1_(std::move(b1)),
        b2_(std::move(b2)),
        c1_(std::move(c1)),
        d1_(std::move(d1)),
        c2_(std::move(c2)),
        d2_(std::move(d2)),
        theta_(std::move(theta)),
        rates_(std::move(rates)) {
    if (a_.empty()) throw std::invalid_argument("plant needs at least one mode");
    if (int(a_.size()) != rates_.modes())
      throw std::invalid_argument("plant mode count " + std::to_string(a_.size()) +
                                  " does not match rate matrix size " + std::to_string(rates_.modes()));
    const auto n = a_.front().rows();
    for (const auto& a : a_)
      if (a.rows() != n || a.cols() != n) throw std::invalid_argument("plant A matrices must all be n x n");
    auto need = [](const Matrix& m, Eigen::Index r, Eigen::Index c, const char* name) {
      if (m.rows() != r || m.cols() != c)
        throw std::invalid_argument(std::string("plant ") + name + " has shape " + std::to_string(m.rows()) + "x" +
                                    std::to_string(m.cols()) + ", expected " + std::to_string(r) + "x" +
                                    std::to_string(c));
    };
    need(b1_, n, b1_.cols(), "B1");
    need(b2_, n, b2_.cols(), "B2");
    need(c1_, c1_.rows(), n, "C1");
    need(d1_, c1_.rows(), b2_.cols(), "D1");
    need(c2_, c2_.rows(), n, "C2");
    need(d2_, c2_.rows(), b1_.cols(), "D2");
    if (theta_.n() != n) throw std::invalid_argument("plant commutation matrix dimension mismatch");
  }

  [[nodiscard]] int modes() const { return int(a_.size()); }
  [[nodiscard]] Eigen::Index n() const { return a_.front().rows(); }
  [[nodiscard]] Eigen::Index n_w() const { return b1_.cols(); }
  [[nodiscard]] Eigen::Index n_u() const { return b2_.cols(); }
  [[nodiscard]] Eigen::Index n_z() const { return c1_.rows(); }
  [[nodiscard]] Eigen::Index n_y() const { return c2_.rows(); }

  [[nodiscard]] const std::vector<Matrix>& a_modes() const { return a_; }
  [[nodiscard]] const Matrix& a(int mode) const { return a_.at(std::size_t(mode)); }
  [[nodiscard]] const Matrix& b1() const { return b1_; }
  [[nodiscard]] const Matrix& b2() const { return b2_; }
  [[nodiscard]] const Matrix& c1() const { return c1_; }
  [[nodiscard]] const Matrix& d1() const { return d1_; }
  [[nodiscard]] const Matrix& c2() const { return c2_; }
  [[nodiscard]] const Matrix& d2() const { return d2_; }
  [[nodiscard]] const CommutationMatrix& theta() const { return theta_; }
  [[nodiscard]] const TransitionRateMatrix& rates() const { return rates_; }

 private:
  std::vector<Matrix> a_;
  Matrix b1_, b2_, c1_, d1_, c2_, d2_;
  CommutationMatrix theta_;
  TransitionRateMatrix rates_;
};

/// One mode of the coherent controller
///   dxi = A xi dt + B dy + E dnu,  du = C xi dt + D dnu.
struct ControllerMode {
  Matrix A;
  Matrix B;
  Matrix C;
  Matrix D;  // n_u x n_nu
  Matrix E;  // n_k x n_nu
};

class Controller {
 public:
  Controller(std::vector<ControllerMode> modes, CommutationMatrix theta)
      : modes_(std::move(modes)), theta_(std::move(theta)) {
    if (modes_.empty()) throw std::invalid_argument("controller needs at least one mode");
    const auto& m0 = modes_.front();
    const auto nk = m0.A.rows();
    for (auto& m : modes_) {
      if (m.D.size() == 0 && m.D.rows() == 0) m.D.resize(m.C.rows(), 0);
      if (m.E.size() == 0 && m.E.rows() == 0) m.E.resize(nk, m.D.cols());
    }
    const auto ny = modes_.front().B.cols();
    const auto nu = modes_.front().C.rows();
    const auto nnu = modes_.front().E.cols();
    for (const auto& m : modes_) {
      if (m.A.rows() != nk || m.A.cols() != nk || m.B.rows() != nk || m.B.cols() != ny || m.C.rows() != nu ||
          m.C.cols() != nk || m.D.rows() != nu || m.D.cols() != nnu || m.E.rows() != nk || m.E.cols() != nnu)
        throw std::invalid_argument("controller modes have inconsistent dimensions");
    }
    if (nnu % 2 != 0) throw std::invalid_argument("controller noise dimension must be even");
    if (theta_.n() != nk) throw std::invalid_argument("controller commutation matrix dimension mismatch");
  }

  [[nodiscard]] int modes() const { return int(modes_.size()); }
  [[nodiscard]] Eigen::Index n_k() const { return modes_.front().A.rows(); }
  [[nodiscard]] Eigen::Index n_y() const { return modes_.front().B.cols(); }
  [[nodiscard]] Eigen::Index n_u() const { return modes_.front().C.rows(); }
  [[nodiscard]] Eigen::Index n_nu() const { return modes_.front().E.cols(); }
  [[nodiscard]] const ControllerMode& mode(int i) const { return modes_.at(std::size_t(i)); }
  [[nodiscard]] const std::vector<ControllerMode>& mode_list() const { return modes_; }
  [[nodiscard]] const CommutationMatrix& theta() const { return theta_; }
  [[nodiscard]] bool augmented() const { return n_nu() > 0; }

 private:
  std::vector<ControllerMode> modes_;
  CommutationMatrix theta_;
};

struct ClosedLoopMode {
  Matrix A;   // (n + n_k)^2
  Matrix B1;  // disturbance input
  Matrix B2;  // controller noise input
  Matrix C;
  Matrix D;   // D1 * Dk
};

struct ClosedLoop {
  std::vector<ClosedLoopMode> modes;
  TransitionRateMatrix rates;

  [[nodiscard]] Eigen::Index dim() const { return modes.front().A.rows(); }
};

/// Block assembly of the plant/controller interconnection, mode by mode.
inline ClosedLoop assemble_closed_loop(const JumpPlant& plant, const Controller& ctrl) {
  if (plant.modes() != ctrl.modes())
    throw std::invalid_argument("mode count mismatch: plant has " + std::to_string(plant.modes()) +
                                ", controller has " + std::to_string(ctrl.modes()));
  if (ctrl.n_y() != plant.n_y() || ctrl.n_u() != plant.n_u())
    throw std::invalid_argument("controller interface (n_y, n_u) does not match plant");
  const auto n = plant.n();
  const auto nk = ctrl.n_k();
  ClosedLoop cl{{}, plant.rates()};
  cl.modes.reserve(std::size_t(plant.modes()));
  for (int i = 0; i < plant.modes(); ++i) {
    const auto& k = ctrl.mode(i);
    ClosedLoopMode m;
    m.A.resize(n + nk, n + nk);
    m.A << plant.a(i), plant.b2() * k.C, k.B * plant.c2(), k.A;
    m.B1.resize(n + nk, plant.n_w());
    m.B1 << plant.b1(), k.B * plant.d2();
    m.B2.resize(n + nk, ctrl.n_nu());
    m.B2 << plant.b2() * k.D, k.E;
    m.C.resize(plant.n_z(), n + nk);
    m.C << plant.c1(), plant.d1() * k.C;
    m.D = plant.d1() * k.D;
    cl.modes.push_back(std::move(m));
  }
  return cl;
}

// ---------------------------------------------------------------------------
// Physical parameters -> quadrature state space

/// Hamiltonian matrix R (n x n, symmetric) and coupling Lambda (n_L x n, complex).
struct PhysicalParams {
  Matrix R;
  ComplexMatrix Lambda;
};

struct StateSpace {
  Matrix A;
  Matrix B;
  Matrix C;
  Matrix D;
};

namespace detail {

/// P_k: [a1 ... a2k] -> [a1 a3 ... a_{2k-1} a2 a4 ... a2k].
inline Matrix pair_permutation(Eigen::Index k) {
  Matrix p = Matrix::Zero(2 * k, 2 * k);
  for (Eigen::Index i = 0; i < k; ++i) {
    p(i, 2 * i) = 1.0;
    p(k + i, 2 * i + 1) = 1.0;
  }
  return p;
}

}  // namespace detail

/// Quadrature model of an open quantum harmonic oscillator:
///   A = 2 Theta (R + Im(Lambda^dag Lambda)), B = 2i Theta [-Lambda^dag, Lambda^T] Gamma,
///   C = P^T diag(Sigma, Sigma) [Lambda + Lambda^#; -i Lambda + i Lambda^#], D = [I 0].
/// `n_y` output quadratures (defaults to all 2 n_L field channels).
inline StateSpace physical_to_statespace(const PhysicalParams& params, const CommutationMatrix& theta,
                                         Eigen::Index n_y = -1) {
  using Cx = std::complex<double>;
  if (!theta.is_canonical())
    throw std::invalid_argument("physical_to_statespace requires a canonical commutation matrix");
  const Eigen::Index n = theta.n();
  if (params.R.rows() != n || params.R.cols() != n)
    throw std::invalid_argument("Hamiltonian matrix R must be n x n");
  if (!linalg::is_symmetric(params.R, kStructuralTol))
    throw std::invalid_argument("Hamiltonian matrix R must be symmetric");
  if (params.Lambda.cols() != n || params.Lambda.im.rows() != params.Lambda.rows() ||
      params.Lambda.im.cols() != n)
    throw std::invalid_argument("coupling matrix Lambda must be n_L x n");
  const Eigen::Index n_l = params.Lambda.rows();  // N_w field channels
  const Eigen::Index n_w = 2 * n_l;
  if (n_y < 0) n_y = n_w;
  if (n_y % 2 != 0 || n_y > n_w) throw std::invalid_argument("n_y must be even and at most 2 n_L");
  const Eigen::Index n_yc = n_y / 2;

  const Eigen::MatrixXcd lam = params.Lambda.to_complex();
  const Eigen::MatrixXcd th = theta.theta().cast<Cx>();

  StateSpace ss;
  const Matrix im_ll = (lam.adjoint() * lam).imag();
  ss.A = 2.0 * theta.theta() * (params.R + im_ll);

  // Gamma = P_{N_w} diag_{N_w}(M), M = 1/2 [[1, i], [1, -i]].
  Eigen::MatrixXcd m(2, 2);
  m << Cx(0.5, 0.0), Cx(0.0, 0.5), Cx(0.5, 0.0), Cx(0.0, -0.5);
  Eigen::MatrixXcd diag_m = Eigen::MatrixXcd::Zero(n_w, n_w);
  for (Eigen::Index k = 0; k < n_l; ++k) diag_m.block(2 * k, 2 * k, 2, 2) = m;
  const Eigen::MatrixXcd gamma = detail::pair_permutation(n_l).cast<Cx>() * diag_m;

  Eigen::MatrixXcd coupling(n, n_w);
  coupling << -lam.adjoint(), lam.transpose();
  const Eigen::MatrixXcd b = Cx(0.0, 2.0) * th * coupling * gamma;
  if (b.size() > 0 && b.imag().cwiseAbs().maxCoeff() > kSpectralTol)
    throw NumericalError("physical_to_statespace: B has a non-negligible imaginary part");
  ss.B = b.real();

  const Eigen::MatrixXcd lam_conj = lam.conjugate();
  Eigen::MatrixXcd stacked(n_w, n);
  stacked << lam + lam_conj, Cx(0.0, -1.0) * lam + Cx(0.0, 1.0) * lam_conj;
  Matrix sigma = Matrix::Zero(n_yc, n_l);
  sigma.leftCols(n_yc) = Matrix::Identity(n_yc, n_yc);
  const Matrix selector = linalg::block_diag({sigma, sigma});
  const Eigen::MatrixXcd c = detail::pair_permutation(n_yc).transpose().cast<Cx>() * selector.cast<Cx>() * stacked;
  if (c.size() > 0 && c.imag().cwiseAbs().maxCoeff() > kSpectralTol)
    throw NumericalError("physical_to_statespace: C has a non-negligible imaginary part");
  ss.C = c.real();
  ss.D = Matrix::Zero(n_y, n_w);
  ss.D.leftCols(n_y) = Matrix::Identity(n_y, n_y);
  return ss;
}

}  // namespace qhinf
