#pragma once

// Physical realizability of (jump) linear quantum systems and construction of
// the extra vacuum channels that make a synthesized controller realizable.

#include "qhinf/lmi.hpp"
#include "qhinf/qmodel.hpp"

#include <string>
#include <vector>

namespace qhinf {

inline constexpr double kRealizabilityTol = 1e-9;
inline constexpr double kPrintedValueTol = 5e-3;

/// A A Theta + Theta A^T + B T_im B^T: the commutation-relation defect with
/// the common factor i removed. Zero iff commutation relations are preserved.
inline Matrix cr_residual(const Matrix& a, const Matrix& b, const CommutationMatrix& theta, const Matrix& t_im) {
  const auto n = theta.n();
  if (a.rows() != n || a.cols() != n) throw std::invalid_argument("cr_residual: A must be n x n");
  if (b.rows() != n || b.cols() != t_im.rows() || t_im.rows() != t_im.cols())
    throw std::invalid_argument("cr_residual: B / T dimension mismatch");
  const Matrix& th = theta.theta();
  return a * th + th * a.transpose() + b * t_im * b.transpose();
}

/// B D^T - Theta C^T diag(J, ..., J). With D = [I 0] this is the usual
/// B [I; 0] = Theta C^T diag(J) output condition; other feedthrough
/// selections (sign flips, channel reorderings) go through the D overload.
inline Matrix output_condition_residual(const Matrix& b, const Matrix& c, const Matrix& d,
                                        const CommutationMatrix& theta) {
  const auto n = theta.n();
  const auto n_y = c.rows();
  if (n_y % 2 != 0) throw std::invalid_argument("output_condition_residual: n_y must be even");
  if (b.rows() != n || c.cols() != n || d.rows() != n_y || d.cols() != b.cols())
    throw std::invalid_argument("output_condition_residual: dimension mismatch");
  return b * d.transpose() - theta.theta() * c.transpose() * linalg::block_diag_j(n_y / 2);
}

inline Matrix output_condition_residual(const Matrix& b, const Matrix& c, const CommutationMatrix& theta) {
  const auto n_y = c.rows();
  if (n_y > b.cols()) throw std::invalid_argument("output_condition_residual: n_y exceeds input count");
  Matrix d = Matrix::Zero(n_y, b.cols());
  d.leftCols(n_y) = Matrix::Identity(n_y, n_y);
  return output_condition_residual(b, c, d, theta);
}

/// Per-mode quadrature system dx = A dt + B dw, dy = C x dt + D dw.
struct QuantumSystemMode {
  Matrix A;
  Matrix B;
  Matrix C;
  Matrix D;
};

struct RealizabilityReport {
  std::vector<double> cr_residual_norm;
  std::vector<double> output_residual_norm;
  double tolerance = kRealizabilityTol;
  bool realizable = false;
};

/// Checks both realizability conditions mode by mode. A piecewise-constant
/// (jump) system is realizable iff every mode is.
inline RealizabilityReport is_physically_realizable(const std::vector<QuantumSystemMode>& modes,
                                                    const CommutationMatrix& theta, const Matrix& t_im,
                                                    double tol = kRealizabilityTol) {
  RealizabilityReport r;
  r.tolerance = tol;
  r.realizable = !modes.empty();
  for (const auto& m : modes) {
    const double cr = linalg::max_abs(cr_residual(m.A, m.B, theta, t_im));
    const double out = m.C.rows() == 0 ? 0.0 : linalg::max_abs(output_condition_residual(m.B, m.C, m.D, theta));
    r.cr_residual_norm.push_back(cr);
    r.output_residual_norm.push_back(out);
    if (!(cr <= tol && out <= tol)) r.realizable = false;
  }
  return r;
}

/// Jump system with only A varying and shared (B, C, D = [I 0]).
inline RealizabilityReport is_physically_realizable(const std::vector<Matrix>& a_modes, const Matrix& b,
                                                    const Matrix& c, const CommutationMatrix& theta,
                                                    const Matrix& t_im, double tol = kRealizabilityTol) {
  Matrix d = Matrix::Zero(c.rows(), b.cols());
  d.leftCols(std::min(c.rows(), b.cols())) = Matrix::Identity(c.rows(), std::min(c.rows(), b.cols()));
  std::vector<QuantumSystemMode> modes;
  for (const auto& a : a_modes) modes.push_back({a, b, c, d});
  return is_physically_realizable(modes, theta, t_im, tol);
}

/// Views each controller mode as a quantum system with inputs [y; nu] and
/// output u: B = [B_k, E_k], C = C_k, D = [0, D_k].
inline std::vector<QuantumSystemMode> controller_quantum_modes(const Controller& ctrl) {
  std::vector<QuantumSystemMode> out;
  for (const auto& k : ctrl.mode_list()) {
    QuantumSystemMode m;
    m.A = k.A;
    m.B = linalg::hstack({k.B, k.E});
    m.C = k.C;
    m.D = linalg::hstack({Matrix::Zero(k.C.rows(), k.B.cols()), k.D});
    out.push_back(std::move(m));
  }
  return out;
}

/// Realizability of a controller whose inputs y and nu are all canonical fields.
inline RealizabilityReport controller_realizability(const Controller& ctrl, double tol = kRealizabilityTol) {
  const auto inputs = ctrl.n_y() + ctrl.n_nu();
  if (inputs % 2 != 0) throw std::invalid_argument("controller input dimension must be even");
  return is_physically_realizable(controller_quantum_modes(ctrl), ctrl.theta(), linalg::block_diag_j(inputs / 2),
                                  tol);
}

/// Whole-plant view with inputs [w; u] and outputs [z; y].
inline std::vector<QuantumSystemMode> plant_quantum_modes(const JumpPlant& plant) {
  std::vector<QuantumSystemMode> out;
  const Matrix b = linalg::hstack({plant.b1(), plant.b2()});
  const Matrix c = linalg::vstack({plant.c1(), plant.c2()});
  Matrix d = Matrix::Zero(plant.n_z() + plant.n_y(), plant.n_w() + plant.n_u());
  d.block(0, plant.n_w(), plant.n_z(), plant.n_u()) = plant.d1();
  d.block(plant.n_z(), 0, plant.n_y(), plant.n_w()) = plant.d2();
  for (const auto& a : plant.a_modes()) out.push_back({a, b, c, d});
  return out;
}

inline RealizabilityReport plant_realizability(const JumpPlant& plant, double tol = kRealizabilityTol) {
  const auto inputs = plant.n_w() + plant.n_u();
  if (inputs % 2 != 0) throw std::invalid_argument("plant input dimension must be even");
  return is_physically_realizable(plant_quantum_modes(plant), plant.theta(), linalg::block_diag_j(inputs / 2), tol);
}

// ---------------------------------------------------------------------------
// Noise augmentation

inline constexpr double kDropChannelTol = 1e-12;

/// Real factorization K = E diag(J, ..., J) E^T of a skew-symmetric K, read
/// off the canonical form of K (orthogonal similarity to block-diag(c_k J, 0)).
/// Channels with c_k <= kDropChannelTol are omitted. Inside each invariant plane
/// the first basis vector is aligned with the most represented coordinate
/// axis, so K = cJ on R^2 factors as sqrt(c) I (c > 0) or sqrt(|c|) diag(1, -1).
inline Matrix skew_factor(const Matrix& k) {
  const auto n = k.rows();
  if (k.cols() != n) throw std::invalid_argument("skew_factor: matrix must be square");
  if (!linalg::is_skew(k, 1e-10 * (1.0 + linalg::max_abs(k))))
    throw std::invalid_argument("skew_factor: matrix is not skew-symmetric");
  const Matrix ks = 0.5 * (k - k.transpose());
  if (n == 0 || linalg::max_abs(ks) == 0.0) return Matrix::Zero(n, 0);

  // -K^2 = K^T K is PSD; its eigenvalues are c_k^2, each with even multiplicity.
  const auto eig = lmi::symmetric_eigen(ks.transpose() * ks);
  const double top = std::sqrt(std::max(eig.values.maxCoeff(), 0.0));
  const double cluster_tol = 1e-8 * top;

  std::vector<Matrix> columns;
  Eigen::Index hi = n - 1;
  while (hi >= 0) {
    const double sigma_hi = std::sqrt(std::max(eig.values(hi), 0.0));
    if (sigma_hi <= kDropChannelTol) break;
    Eigen::Index lo = hi;
    while (lo - 1 >= 0 && std::abs(std::sqrt(std::max(eig.values(lo - 1), 0.0)) - sigma_hi) <= cluster_tol) --lo;
    Matrix basis = eig.vectors.middleCols(lo, hi - lo + 1);
    hi = lo - 1;

    while (basis.cols() >= 2) {
      // Pick the coordinate axis with the largest projection onto the plane set.
      Eigen::Index axis = 0;
      double best = -1.0;
      for (Eigen::Index r = 0; r < n; ++r) {
        const double w = basis.row(r).squaredNorm();
        if (w > best + 1e-12) {
          best = w;
          axis = r;
        }
      }
      Vector q1 = basis * basis.row(axis).transpose();
      q1.normalize();
      Vector kq = ks * q1;
      const double sigma = kq.norm();
      Vector q2 = -kq / sigma;
      Matrix e(n, 2);
      e.col(0) = std::sqrt(sigma) * q1;
      e.col(1) = std::sqrt(sigma) * q2;
      columns.push_back(e);

      // Deflate span{q1, q2} from the cluster and re-orthonormalize.
      Matrix rest = basis - q1 * (q1.transpose() * basis) - q2 * (q2.transpose() * basis);
      Eigen::JacobiSVD<Matrix> svd(rest, Eigen::ComputeThinU);
      const Eigen::Index keep = basis.cols() - 2;
      basis = svd.matrixU().leftCols(keep);
    }
  }
  Matrix out(n, Eigen::Index(2 * columns.size()));
  for (std::size_t i = 0; i < columns.size(); ++i) out.middleCols(Eigen::Index(2 * i), 2) = columns[i];
  return out;
}

struct AugmentedNoise {
  Matrix E_out;    // channel feeding the controller output u
  Matrix E_extra;  // channels absorbing the remaining commutation defect
  Matrix E;        // [E_out, E_extra]
  Matrix D;        // [I, 0]
  Eigen::Index noise_dim = 0;
};

/// Adds vacuum channels to one controller mode (A_k, B_k, C_k) so that both
/// realizability conditions hold. The output channel comes first and is the
/// one selected by D = [I, 0].
inline AugmentedNoise augment_controller(const Matrix& a, const Matrix& b, const Matrix& c,
                                         const CommutationMatrix& theta_k) {
  if (!theta_k.is_canonical()) throw std::invalid_argument("augment_controller requires a canonical Theta_K");
  const auto nk = theta_k.n();
  const auto nu = c.rows();
  const auto ny = b.cols();
  if (nu % 2 != 0) throw std::invalid_argument("augment_controller: n_u must be even");
  if (ny % 2 != 0) throw std::invalid_argument("augment_controller: n_y must be even");
  if (a.rows() != nk || a.cols() != nk || b.rows() != nk || c.cols() != nk)
    throw std::invalid_argument("augment_controller: dimension mismatch");

  const Matrix& th = theta_k.theta();
  AugmentedNoise out;
  out.E_out = th * c.transpose() * linalg::block_diag_j(nu / 2);
  const Matrix w = a * th + th * a.transpose() + b * linalg::block_diag_j(ny / 2) * b.transpose() +
                   out.E_out * linalg::block_diag_j(nu / 2) * out.E_out.transpose();
  out.E_extra = skew_factor(-0.5 * (w - w.transpose()));
  out.E = linalg::hstack({out.E_out, out.E_extra});
  out.noise_dim = out.E.cols();
  out.D = Matrix::Zero(nu, out.noise_dim);
  out.D.leftCols(nu) = Matrix::Identity(nu, nu);
  return out;
}

/// Augments every mode; modes that need fewer extra channels are padded
/// with zero columns so all modes share one noise vector.
inline Controller augment_controller(const Controller& ctrl) {
  std::vector<AugmentedNoise> per_mode;
  Eigen::Index width = 0;
  for (const auto& k : ctrl.mode_list()) {
    per_mode.push_back(augment_controller(k.A, k.B, k.C, ctrl.theta()));
    width = std::max(width, per_mode.back().noise_dim);
  }
  std::vector<ControllerMode> modes;
  for (std::size_t i = 0; i < per_mode.size(); ++i) {
    const auto& src = ctrl.mode_list()[i];
    ControllerMode m{src.A, src.B, src.C, Matrix::Zero(src.C.rows(), width), Matrix::Zero(src.A.rows(), width)};
    m.E.leftCols(per_mode[i].noise_dim) = per_mode[i].E;
    m.D.leftCols(per_mode[i].noise_dim) = per_mode[i].D;
    modes.push_back(std::move(m));
  }
  return Controller(std::move(modes), ctrl.theta());
}

}  // namespace qhinf
