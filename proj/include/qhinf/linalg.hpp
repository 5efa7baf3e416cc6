#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace qhinf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Complex matrix stored as a (real, imaginary) pair of real matrices.
struct ComplexMatrix {
  Matrix re;
  Matrix im;

  [[nodiscard]] Eigen::Index rows() const { return re.rows(); }
  [[nodiscard]] Eigen::Index cols() const { return re.cols(); }
  [[nodiscard]] Eigen::MatrixXcd to_complex() const {
    Eigen::MatrixXcd out(re.rows(), re.cols());
    out.real() = re;
    out.imag() = im;
    return out;
  }
  static ComplexMatrix from_complex(const Eigen::MatrixXcd& m) { return {m.real(), m.imag()}; }
};

/// Raised when a numerical operation hits a singular or otherwise degenerate case.
class NumericalError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

namespace linalg {

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

inline bool is_symmetric(const Matrix& m, double tol) {
  return m.rows() == m.cols() && max_abs(m - m.transpose()) <= tol;
}

inline bool is_skew(const Matrix& m, double tol) {
  return m.rows() == m.cols() && max_abs(m + m.transpose()) <= tol;
}

/// J = [[0, 1], [-1, 0]].
inline Matrix symplectic_j() {
  Matrix j(2, 2);
  j << 0.0, 1.0, -1.0, 0.0;
  return j;
}

inline Matrix block_diag(const std::vector<Matrix>& blocks) {
  Eigen::Index r = 0;
  Eigen::Index c = 0;
  for (const auto& b : blocks) {
    r += b.rows();
    c += b.cols();
  }
  Matrix out = Matrix::Zero(r, c);
  r = 0;
  c = 0;
  for (const auto& b : blocks) {
    out.block(r, c, b.rows(), b.cols()) = b;
    r += b.rows();
    c += b.cols();
  }
  return out;
}

/// block-diag(J, ..., J) with `pairs` copies; `pairs == 0` gives a 0x0 matrix.
inline Matrix block_diag_j(Eigen::Index pairs) {
  Matrix out = Matrix::Zero(2 * pairs, 2 * pairs);
  for (Eigen::Index k = 0; k < pairs; ++k) {
    out(2 * k, 2 * k + 1) = 1.0;
    out(2 * k + 1, 2 * k) = -1.0;
  }
  return out;
}

inline Matrix hstack(std::initializer_list<Matrix> parts) {
  Eigen::Index rows = -1;
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (rows < 0) rows = p.rows();
    if (p.rows() != rows) throw std::invalid_argument("hstack: row mismatch");
    cols += p.cols();
  }
  Matrix out(std::max<Eigen::Index>(rows, 0), cols);
  cols = 0;
  for (const auto& p : parts) {
    out.middleCols(cols, p.cols()) = p;
    cols += p.cols();
  }
  return out;
}

inline Matrix vstack(std::initializer_list<Matrix> parts) {
  Eigen::Index cols = -1;
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (cols < 0) cols = p.cols();
    if (p.cols() != cols) throw std::invalid_argument("vstack: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, std::max<Eigen::Index>(cols, 0));
  rows = 0;
  for (const auto& p : parts) {
    out.middleRows(rows, p.rows()) = p;
    rows += p.rows();
  }
  return out;
}

/// Largest real part among the eigenvalues of a square matrix.
inline double spectral_abscissa(const Matrix& a) {
  if (a.size() == 0) return -std::numeric_limits<double>::infinity();
  Eigen::EigenSolver<Matrix> es(a, false);
  return es.eigenvalues().real().maxCoeff();
}

inline bool is_hurwitz(const Matrix& a) { return spectral_abscissa(a) < 0.0; }

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Solves A X + X A^T + Q = 0 by a dense Kronecker solve. Intended for the small
/// state dimensions (n <= ~12) this library works with.
inline Matrix solve_lyapunov(const Matrix& a, const Matrix& q) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n || q.rows() != n || q.cols() != n)
    throw std::invalid_argument("solve_lyapunov: dimension mismatch");
  const Matrix eye = Matrix::Identity(n, n);
  // vec(A X + X A^T) = (I (x) A + A (x) I) vec(X)
  const Matrix op = kron(eye, a) + kron(a, eye);
  Eigen::FullPivLU<Matrix> lu(op);
  if (!lu.isInvertible()) throw NumericalError("solve_lyapunov: singular Lyapunov operator");
  const Vector rhs = -Eigen::Map<const Vector>(q.data(), n * n);
  const Vector x = lu.solve(rhs);
  Matrix out = Eigen::Map<const Matrix>(x.data(), n, n);
  return out;
}

}  // namespace linalg
}  // namespace qhinf
