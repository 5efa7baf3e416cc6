#pragma once

// Test helpers: seeded random matrices and oracles that do not go through
// the library's own solvers.

#include "qhinf/qhinf.hpp"

#include <cmath>
#include <random>

namespace qhinf::testing {

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index k = 0; k < c; ++k) m(i, k) = nd(rng);
  return m;
}

inline Matrix random_skew(std::mt19937_64& rng, Eigen::Index n) {
  const Matrix m = random_matrix(rng, n, n);
  return m - m.transpose();
}

/// Random matrix shifted so that its spectral abscissa is -margin.
inline Matrix random_hurwitz(std::mt19937_64& rng, Eigen::Index n, double margin = 0.3) {
  Matrix a = random_matrix(rng, n, n);
  const double sa = Eigen::EigenSolver<Matrix>(a, false).eigenvalues().real().maxCoeff();
  return a - (sa + margin) * Matrix::Identity(n, n);
}

/// Solves A X + X A' + Q = 0 through the Kronecker form.
inline Matrix kron_lyapunov(const Matrix& a, const Matrix& q) {
  const auto n = a.rows();
  Matrix big = Matrix::Zero(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index k = 0; k < n; ++k) {
        // vec(A X): (I kron A), vec(X A'): (A kron I), column-major vec.
        big(i + j * n, k + j * n) += a(i, k);
        big(i + j * n, i + k * n) += a(j, k);
      }
  const Eigen::Map<const Vector> qv(q.data(), n * n);
  const Vector x = big.fullPivLu().solve(-qv);
  return Eigen::Map<const Matrix>(x.data(), n, n);
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
inline Matrix expm(const Matrix& a) {
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  while (norm / std::ldexp(1.0, squarings) > 0.25) ++squarings;
  const Matrix s = a / std::ldexp(1.0, squarings);
  Matrix term = Matrix::Identity(a.rows(), a.cols());
  Matrix sum = term;
  for (int k = 1; k <= 24; ++k) {
    term = term * s / double(k);
    sum += term;
  }
  for (int k = 0; k < squarings; ++k) sum = sum * sum;
  return sum;
}

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

}  // namespace qhinf::testing
