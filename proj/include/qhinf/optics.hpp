#pragma once

// Optical front end: the degenerate OPO plant, the static squeezer gain, and
// the map between controller matrices and optical component parameters.

#include "qhinf/qmodel.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace qhinf::optics {

/// Jump plant of a pumped cavity whose pump coefficient chi jumps with the
/// fault mode:
///   A_i = diag(-kappa/2 - chi_i, -kappa/2 + chi_i), kappa = kappa1 + kappa2,
///   B1 = C2 = sqrt(kappa1) I, B2 = C1 = sqrt(kappa2) I, D1 = D2 = -I.
inline JumpPlant opo_plant(double kappa1, double kappa2, const std::vector<double>& chi_modes,
                           const TransitionRateMatrix& rates) {
  if (!(kappa1 > 0.0) || !(kappa2 > 0.0)) throw std::invalid_argument("opo_plant: decay rates must be positive");
  if (chi_modes.empty()) throw std::invalid_argument("opo_plant: need at least one pump value");
  const double kappa = kappa1 + kappa2;
  std::vector<Matrix> a;
  for (double chi : chi_modes) {
    if (!(std::abs(chi) < kappa / 2.0))
      throw std::invalid_argument("opo_plant: chi = " + std::to_string(chi) + " outside the amplifier range |chi| < " +
                                  std::to_string(kappa / 2.0));
    Matrix m = Matrix::Zero(2, 2);
    m(0, 0) = -kappa / 2.0 - chi;
    m(1, 1) = -kappa / 2.0 + chi;
    a.push_back(m);
  }
  const Matrix eye = Matrix::Identity(2, 2);
  return JumpPlant(std::move(a), std::sqrt(kappa1) * eye, std::sqrt(kappa2) * eye, std::sqrt(kappa2) * eye, -eye,
                   std::sqrt(kappa1) * eye, -eye, canonical_theta(2), rates);
}

/// Broadband quadrature gain of a cavity squeezer with total decay kappa' and
/// pump coefficient chi': diag((k - chi')/(k + chi'), (k + chi')/(k - chi')), k = kappa'/2.
inline Matrix static_squeezer_gain(double kappa_prime, double chi_prime) {
  if (!(kappa_prime > 0.0)) throw std::invalid_argument("static_squeezer_gain: kappa' must be positive");
  const double k = kappa_prime / 2.0;
  if (!(std::abs(chi_prime) < k)) throw std::invalid_argument("static_squeezer_gain: |chi'| must be below kappa'/2");
  Matrix g = Matrix::Zero(2, 2);
  g(0, 0) = (k - chi_prime) / (k + chi_prime);
  g(1, 1) = (k + chi_prime) / (k - chi_prime);
  return g;
}

struct OpticalRealization {
  double kappa = 0.0;
  double kappa1 = 0.0;
  double kappa2 = 0.0;
  double kappa3 = 0.0;
  double chi = 0.0;
  double kappa_prime = 10.0;
  double chi_prime = 0.0;
  /// Overall sign of the measurement-port gain (a pi phase shift flips it).
  double b_sign = 1.0;

  void validate() const {
    if (kappa1 < 0.0 || kappa2 < 0.0 || kappa3 < 0.0) throw std::invalid_argument("decay rates must be nonnegative");
    if (std::abs(kappa - (kappa1 + kappa2 + kappa3)) > 1e-9 * (1.0 + kappa))
      throw std::invalid_argument("kappa must equal kappa1 + kappa2 + kappa3");
    if (!(kappa_prime > 0.0) || !(std::abs(chi_prime) < kappa_prime / 2.0))
      throw std::invalid_argument("static squeezer needs |chi'| < kappa'/2");
    if (b_sign != 1.0 && b_sign != -1.0) throw std::invalid_argument("b_sign must be +1 or -1");
  }
};

/// One controller mode built from a static squeezer feeding a pumped cavity
/// with three mirrors; the first noise channel is the output mirror.
struct OpticalController {
  Matrix A;
  Matrix B;
  Matrix C;
  Matrix E1;
  Matrix E2;
  Matrix D;  // [I, 0]

  [[nodiscard]] ControllerMode mode() const { return {A, B, C, D, linalg::hstack({E1, E2})}; }
};

inline OpticalController controller_from_optics(const OpticalRealization& r) {
  r.validate();
  const Matrix eye = Matrix::Identity(2, 2);
  OpticalController k;
  k.A = Matrix::Zero(2, 2);
  k.A(0, 0) = -r.kappa / 2.0 - r.chi;
  k.A(1, 1) = -r.kappa / 2.0 + r.chi;
  k.B = r.b_sign * std::sqrt(r.kappa1) * static_squeezer_gain(r.kappa_prime, r.chi_prime);
  k.C = -std::sqrt(r.kappa2) * eye;
  k.E1 = std::sqrt(r.kappa2) * eye;
  k.E2 = std::sqrt(r.kappa3) * eye;
  k.D = linalg::hstack({eye, Matrix::Zero(2, 2)});
  return k;
}

struct RealizationReport {
  OpticalRealization realization;
  /// |B11 B22 - kappa1|: the product of the measurement gains should equal
  /// the input mirror rate implied by A and the noise blocks.
  double product_residual = 0.0;
  bool product_consistent = false;
};

inline constexpr double kProductTol = 2e-3;

namespace detail {

inline void require_diagonal(const Matrix& m, const char* name) {
  if (m.rows() != 2 || m.cols() != 2) throw std::invalid_argument(std::string(name) + " must be 2x2");
  if (m(0, 1) != 0.0 || m(1, 0) != 0.0) throw std::invalid_argument(std::string(name) + " must be diagonal");
}

inline double scalar_block(const Matrix& m, const char* name) {
  require_diagonal(m, name);
  if (std::abs(std::abs(m(0, 0)) - std::abs(m(1, 1))) > 1e-12 || m(0, 0) * m(1, 1) < 0.0)
    throw std::invalid_argument(std::string(name) + " must be a multiple of the identity");
  return std::abs(m(0, 0));
}

}  // namespace detail

/// Optical parameters reproducing a diagonal controller mode:
///   kappa = -tr A, chi = (A22 - A11)/2, kappa2 = e1^2, kappa3 = e2^2,
///   kappa1 = kappa - kappa2 - kappa3, and chi' from the gain ratio
///   (k + chi')/(k - chi') = sqrt(B22/B11), k = kappa'/2.
inline RealizationReport realize_controller_optics(const Matrix& a, const Matrix& b, const Matrix& e1,
                                                   const Matrix& e2, double kappa_prime = 10.0) {
  detail::require_diagonal(a, "A");
  detail::require_diagonal(b, "B");
  const double s1 = detail::scalar_block(e1, "E1");
  const double s2 = detail::scalar_block(e2, "E2");
  if (!(b(0, 0) * b(1, 1) > 0.0)) throw std::invalid_argument("B entries must be nonzero with equal signs");
  if (!(kappa_prime > 0.0)) throw std::invalid_argument("kappa' must be positive");

  RealizationReport rep;
  auto& r = rep.realization;
  r.kappa = -(a(0, 0) + a(1, 1));
  r.chi = (a(1, 1) - a(0, 0)) / 2.0;
  r.kappa2 = s1 * s1;
  r.kappa3 = s2 * s2;
  r.kappa1 = r.kappa - r.kappa2 - r.kappa3;
  if (!(r.kappa1 > 0.0))
    throw std::invalid_argument("total decay " + std::to_string(r.kappa) + " is too small for the noise channels");
  r.kappa_prime = kappa_prime;
  r.b_sign = b(0, 0) > 0.0 ? 1.0 : -1.0;
  const double ratio = std::sqrt(b(1, 1) / b(0, 0));
  const double k = kappa_prime / 2.0;
  r.chi_prime = k * (ratio - 1.0) / (ratio + 1.0);
  rep.product_residual = std::abs(b(0, 0) * b(1, 1) - r.kappa1);
  rep.product_consistent = rep.product_residual <= kProductTol;
  r.validate();
  return rep;
}

// ---------------------------------------------------------------------------
// Reference OPO design: plant constants, fault rates and the printed
// three-mode controller with its optical parameter lists.

namespace reference {

inline constexpr double kKappa1 = 0.8264;
inline constexpr double kKappa2 = 0.0011;
inline constexpr double kKappaPrime = 10.0;
/// Pump coefficients 0.05, 0.10, 0.15 times kappa = kappa1 + kappa2.
inline std::vector<double> chi_modes() {
  const double kappa = kKappa1 + kKappa2;
  return {0.05 * kappa, 0.10 * kappa, 0.15 * kappa};
}

inline Matrix rates_matrix() {
  Matrix pi(3, 3);
  pi << -0.02, 0.01, 0.01, 0.01, -0.01, 0.0, 0.01, 0.0, -0.01;
  return pi;
}

inline JumpPlant plant() { return opo_plant(kKappa1, kKappa2, chi_modes(), TransitionRateMatrix(rates_matrix())); }

/// Printed plant mode matrices, diagonal entries.
inline const std::vector<std::pair<double, double>>& plant_a_diagonals() {
  static const std::vector<std::pair<double, double>> v{{-0.4551, -0.3724}, {-0.4965, -0.3310}, {-0.5379, -0.2896}};
  return v;
}

struct PrintedMode {
  double a11, a22;
  double b11, b22;
  double c;   // C = c I
  double e1;  // output noise block e1 I
  double e2;  // extra noise block e2 I
  double kappa, chi, kappa1, kappa2, kappa3, chi_prime;
};

inline const std::vector<PrintedMode>& printed_modes() {
  static const std::vector<PrintedMode> v{
      {-1.7535, -2.1226, 1.2524, 1.8944, -0.0331, 0.0331, 1.2258, 3.8761, -0.1846, 2.3724, 0.0011, 1.5026, 0.6237},
      {-1.5796, -2.2738, 0.9713, 2.2099, -0.0331, 0.0331, 1.3057, 3.8534, -0.3471, 2.1475, 0.0011, 1.7046, 1.1953},
      {-1.3992, -2.4340, 0.7024, 2.5600, -0.0331, 0.0331, 1.4262, 3.8332, -0.5174, 1.7981, 0.0011, 2.0340, 1.7650},
  };
  return v;
}

inline Matrix diag2(double x, double y) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = x;
  m(1, 1) = y;
  return m;
}

/// Printed controller without noise channels.
inline Controller controller_core() {
  std::vector<ControllerMode> modes;
  for (const auto& p : printed_modes())
    modes.push_back({diag2(p.a11, p.a22), diag2(p.b11, p.b22), diag2(p.c, p.c), {}, {}});
  return Controller(std::move(modes), canonical_theta(2));
}

/// Printed controller with the printed noise blocks [E1, E2] and D = [I, 0].
inline Controller controller_augmented() {
  std::vector<ControllerMode> modes;
  const Matrix d = linalg::hstack({Matrix::Identity(2, 2), Matrix::Zero(2, 2)});
  for (const auto& p : printed_modes())
    modes.push_back({diag2(p.a11, p.a22), diag2(p.b11, p.b22), diag2(p.c, p.c), d,
                     linalg::hstack({diag2(p.e1, p.e1), diag2(p.e2, p.e2)})});
  return Controller(std::move(modes), canonical_theta(2));
}

}  // namespace reference

}  // namespace qhinf::optics
