#pragma once

// Strict LMI feasibility over named matrix variables.
//
// Every constraint is brought to the form G_k(x) < 0 and the solver minimizes
// the common shift t subject to G_k(x) <= t I with a log-det barrier,
// following the central path. A point is reported feasible only after its
// constraints have been re-evaluated and their eigenvalues checked directly.

#include "qhinf/linalg.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace qhinf::lmi {

// ---------------------------------------------------------------------------
// Dense symmetric eigendecomposition

struct SymmetricEigen {
  Vector values;   // ascending
  Matrix vectors;  // orthonormal columns, same order
};

inline constexpr double kSymmetryTol = 1e-10;

inline SymmetricEigen symmetric_eigen(const Matrix& m, bool with_vectors = true) {
  if (m.rows() != m.cols()) throw std::invalid_argument("symmetric_eigen: matrix is not square");
  if (!linalg::is_symmetric(m, kSymmetryTol)) throw std::invalid_argument("symmetric_eigen: matrix is not symmetric");
  if (m.size() == 0) return {};
  Eigen::SelfAdjointEigenSolver<Matrix> es(linalg::symmetrize(m),
                                           with_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("symmetric_eigen: eigensolver did not converge");
  SymmetricEigen out;
  out.values = es.eigenvalues();
  if (with_vectors) out.vectors = es.eigenvectors();
  return out;
}

inline Vector symmetric_eigenvalues(const Matrix& m) { return symmetric_eigen(m, false).values; }

inline double lambda_max(const Matrix& m) { return symmetric_eigenvalues(m).maxCoeff(); }
inline double lambda_min(const Matrix& m) { return symmetric_eigenvalues(m).minCoeff(); }

// ---------------------------------------------------------------------------
// Problem description

struct MatrixVariable {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  bool symmetric = true;

  /// Number of scalar unknowns (upper triangle for symmetric variables).
  [[nodiscard]] Eigen::Index scalar_count() const { return symmetric ? rows * (rows + 1) / 2 : rows * cols; }
};

/// One summand L V R of an affine expression; with `add_transpose` the
/// summand contributes L V R + (L V R)^T.
struct Term {
  std::string variable;
  Matrix left;
  Matrix right;
  bool add_transpose = false;
};

/// Symmetric affine matrix function of the declared variables, built block by
/// block. Off-diagonal blocks are mirrored automatically.
class AffineMatrixExpr {
 public:
  explicit AffineMatrixExpr(std::vector<Eigen::Index> block_sizes) : sizes_(std::move(block_sizes)) {
    offsets_.reserve(sizes_.size());
    Eigen::Index d = 0;
    for (auto s : sizes_) {
      offsets_.push_back(d);
      d += s;
    }
    constant_ = Matrix::Zero(d, d);
  }

  [[nodiscard]] Eigen::Index dim() const { return constant_.rows(); }
  [[nodiscard]] const Matrix& constant() const { return constant_; }
  [[nodiscard]] const std::vector<Term>& terms() const { return terms_; }

  /// Adds M to block (bi, bj) (and M^T to (bj, bi) when bi != bj).
  AffineMatrixExpr& add_constant(std::size_t bi, std::size_t bj, const Matrix& m) {
    check_block(bi, bj, m.rows(), m.cols());
    constant_.block(offsets_[bi], offsets_[bj], m.rows(), m.cols()) += m;
    if (bi != bj) constant_.block(offsets_[bj], offsets_[bi], m.cols(), m.rows()) += m.transpose();
    return *this;
  }

  /// Adds L V R to block (bi, bj); mirrored when off-diagonal. On a diagonal
  /// block the caller must supply a symmetric product (e.g. L = cI, R = I).
  AffineMatrixExpr& add_term(std::size_t bi, std::size_t bj, const std::string& var, const Matrix& left,
                             const Matrix& right) {
    check_block(bi, bj, left.rows(), right.cols());
    terms_.push_back({var, embed_left(bi, left), embed_right(bj, right), bi != bj});
    return *this;
  }

  /// Adds L V R + (L V R)^T to diagonal block b.
  AffineMatrixExpr& add_sym_term(std::size_t b, const std::string& var, const Matrix& left, const Matrix& right) {
    check_block(b, b, left.rows(), right.cols());
    terms_.push_back({var, embed_left(b, left), embed_right(b, right), true});
    return *this;
  }

  /// Evaluates the expression (symmetrized) at the given variable values.
  [[nodiscard]] Matrix evaluate(const std::map<std::string, Matrix>& values) const {
    Matrix out = constant_;
    for (const auto& t : terms_) {
      const auto it = values.find(t.variable);
      if (it == values.end()) throw std::invalid_argument("no value for LMI variable '" + t.variable + "'");
      const Matrix p = t.left * it->second * t.right;
      out += p;
      if (t.add_transpose) out += p.transpose();
    }
    return linalg::symmetrize(out);
  }

 private:
  void check_block(std::size_t bi, std::size_t bj, Eigen::Index r, Eigen::Index c) const {
    if (bi >= sizes_.size() || bj >= sizes_.size()) throw std::invalid_argument("LMI block index out of range");
    if (sizes_[bi] != r || sizes_[bj] != c) throw std::invalid_argument("LMI block has the wrong shape");
  }
  [[nodiscard]] Matrix embed_left(std::size_t bi, const Matrix& left) const {
    Matrix l = Matrix::Zero(dim(), left.cols());
    l.middleRows(offsets_[bi], left.rows()) = left;
    return l;
  }
  [[nodiscard]] Matrix embed_right(std::size_t bj, const Matrix& right) const {
    Matrix r = Matrix::Zero(right.rows(), dim());
    r.middleCols(offsets_[bj], right.cols()) = right;
    return r;
  }

  std::vector<Eigen::Index> sizes_;
  std::vector<Eigen::Index> offsets_;
  Matrix constant_;
  std::vector<Term> terms_;
};

enum class Sense { negative_definite, positive_definite };

struct Constraint {
  AffineMatrixExpr expr;
  Sense sense;
  std::string label;
};

class LmiProblem {
 public:
  LmiProblem& declare(std::string name, Eigen::Index rows, Eigen::Index cols, bool symmetric) {
    if (symmetric && rows != cols) throw std::invalid_argument("symmetric LMI variable must be square: " + name);
    if (index_.count(name) != 0) throw std::invalid_argument("LMI variable declared twice: " + name);
    index_[name] = variables_.size();
    variables_.push_back({std::move(name), rows, cols, symmetric});
    return *this;
  }
  LmiProblem& declare_symmetric(std::string name, Eigen::Index n) { return declare(std::move(name), n, n, true); }
  LmiProblem& declare_full(std::string name, Eigen::Index rows, Eigen::Index cols) {
    return declare(std::move(name), rows, cols, false);
  }

  LmiProblem& require(AffineMatrixExpr expr, Sense sense, std::string label = {}) {
    for (const auto& t : expr.terms()) {
      const auto it = index_.find(t.variable);
      if (it == index_.end()) throw std::invalid_argument("undeclared LMI variable '" + t.variable + "'");
      const auto& v = variables_[it->second];
      if (t.left.cols() != v.rows || t.right.rows() != v.cols)
        throw std::invalid_argument("term dimensions do not match variable '" + t.variable + "'");
    }
    constraints_.push_back({std::move(expr), sense, std::move(label)});
    return *this;
  }
  LmiProblem& require_negative(AffineMatrixExpr expr, std::string label = {}) {
    return require(std::move(expr), Sense::negative_definite, std::move(label));
  }
  LmiProblem& require_positive(AffineMatrixExpr expr, std::string label = {}) {
    return require(std::move(expr), Sense::positive_definite, std::move(label));
  }

  [[nodiscard]] const std::vector<MatrixVariable>& variables() const { return variables_; }
  [[nodiscard]] const std::vector<Constraint>& constraints() const { return constraints_; }
  [[nodiscard]] const MatrixVariable& variable(const std::string& name) const {
    return variables_.at(index_.at(name));
  }
  [[nodiscard]] bool has_variable(const std::string& name) const { return index_.count(name) != 0; }

  [[nodiscard]] Eigen::Index scalar_count() const {
    Eigen::Index n = 0;
    for (const auto& v : variables_) n += v.scalar_count();
    return n;
  }

 private:
  std::vector<MatrixVariable> variables_;
  std::map<std::string, std::size_t> index_;
  std::vector<Constraint> constraints_;
};

// ---------------------------------------------------------------------------
// Solution

enum class Status { feasible, infeasible_at_tolerance, max_iter };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::feasible: return "feasible";
    case Status::infeasible_at_tolerance: return "infeasible-at-tolerance";
    case Status::max_iter: return "max-iter";
  }
  return "?";
}

struct SolverOptions {
  double eps_strict = 1e-6;
  double tol = 1e-9;
  int max_iter = 200;
  /// Bound on the Euclidean norm of the scalar unknowns; keeps homogeneous
  /// problems bounded.
  double radius = 1e6;
  /// Stop as soon as a verified certificate is available instead of
  /// maximizing the margin.
  bool stop_at_certificate = false;
};

struct LmiSolution {
  std::map<std::string, Matrix> assignment;
  /// Signed strictness slack: min over constraints of -lambda_max (for < 0)
  /// or lambda_min (for > 0).
  double margin = -std::numeric_limits<double>::infinity();
  std::vector<double> constraint_margins;
  double t = std::numeric_limits<double>::infinity();
  int iterations = 0;
  Status status = Status::infeasible_at_tolerance;
  double eps_strict = 0.0;

  [[nodiscard]] bool feasible() const { return status == Status::feasible; }
  [[nodiscard]] const Matrix& operator[](const std::string& name) const { return assignment.at(name); }
};

/// Margin of each constraint evaluated directly from its eigenvalues.
inline std::vector<double> constraint_margins(const LmiProblem& problem, const std::map<std::string, Matrix>& values) {
  std::vector<double> out;
  out.reserve(problem.constraints().size());
  for (const auto& c : problem.constraints()) {
    const Matrix m = c.expr.evaluate(values);
    out.push_back(c.sense == Sense::negative_definite ? -lambda_max(m) : lambda_min(m));
  }
  return out;
}

namespace detail {

struct Layout {
  std::vector<Eigen::Index> offsets;
  Eigen::Index total = 0;
};

inline Layout make_layout(const LmiProblem& p) {
  Layout l;
  for (const auto& v : p.variables()) {
    l.offsets.push_back(l.total);
    l.total += v.scalar_count();
  }
  return l;
}

/// Unit matrix for scalar unknown k of variable v.
inline Matrix unit_value(const MatrixVariable& v, Eigen::Index k) {
  Matrix u = Matrix::Zero(v.rows, v.cols);
  if (v.symmetric) {
    Eigen::Index idx = 0;
    for (Eigen::Index j = 0; j < v.cols; ++j)
      for (Eigen::Index i = 0; i <= j; ++i, ++idx)
        if (idx == k) {
          u(i, j) = 1.0;
          u(j, i) = 1.0;
          return u;
        }
  } else {
    u(k % v.rows, k / v.rows) = 1.0;
  }
  return u;
}

inline Matrix unpack(const MatrixVariable& v, const Vector& x, Eigen::Index offset) {
  Matrix m = Matrix::Zero(v.rows, v.cols);
  if (v.symmetric) {
    Eigen::Index idx = offset;
    for (Eigen::Index j = 0; j < v.cols; ++j)
      for (Eigen::Index i = 0; i <= j; ++i, ++idx) {
        m(i, j) = x(idx);
        m(j, i) = x(idx);
      }
  } else {
    for (Eigen::Index j = 0; j < v.cols; ++j)
      for (Eigen::Index i = 0; i < v.rows; ++i) m(i, j) = x(offset + j * v.rows + i);
  }
  return m;
}

/// G_k(x) = G0 + sum_j x_j G_j with G normalized to the "< 0" sense.
struct AffineForm {
  Matrix g0;
  std::vector<std::pair<Eigen::Index, Matrix>> basis;

  [[nodiscard]] Matrix at(const Vector& x) const {
    Matrix g = g0;
    for (const auto& [j, gj] : basis) g += x(j) * gj;
    return g;
  }
};

inline std::vector<AffineForm> lower(const LmiProblem& p, const Layout& layout) {
  std::map<std::string, std::size_t> var_index;
  for (std::size_t i = 0; i < p.variables().size(); ++i) var_index[p.variables()[i].name] = i;

  std::vector<AffineForm> forms;
  for (const auto& c : p.constraints()) {
    const double sign = c.sense == Sense::negative_definite ? 1.0 : -1.0;
    AffineForm f;
    f.g0 = sign * linalg::symmetrize(c.expr.constant());
    std::map<Eigen::Index, Matrix> acc;
    for (const auto& t : c.expr.terms()) {
      const auto vi = var_index.at(t.variable);
      const auto& v = p.variables()[vi];
      for (Eigen::Index k = 0; k < v.scalar_count(); ++k) {
        Matrix prod = t.left * unit_value(v, k) * t.right;
        if (t.add_transpose) prod += prod.transpose().eval();
        if (prod.cwiseAbs().maxCoeff() == 0.0) continue;
        const Eigen::Index j = layout.offsets[vi] + k;
        auto it = acc.find(j);
        if (it == acc.end())
          acc.emplace(j, sign * prod);
        else
          it->second += sign * prod;
      }
    }
    for (auto& [j, m] : acc) f.basis.emplace_back(j, linalg::symmetrize(m));
    forms.push_back(std::move(f));
  }
  return forms;
}

}  // namespace detail

/// Minimizes the largest constraint eigenvalue shift t; the problem is
/// feasible at tolerance when t <= -eps_strict is reached and verified.
inline LmiSolution solve_feasibility(const LmiProblem& problem, const SolverOptions& opts = {}) {
  if (!(opts.eps_strict > 0.0)) throw std::invalid_argument("eps_strict must be positive");
  if (!(opts.tol > 0.0)) throw std::invalid_argument("tol must be positive");
  if (opts.max_iter < 1) throw std::invalid_argument("max_iter must be at least 1");
  if (problem.constraints().empty()) throw std::invalid_argument("LMI problem has no constraints");

  const auto layout = detail::make_layout(problem);
  const auto forms = detail::lower(problem, layout);
  const Eigen::Index m = layout.total;
  const Eigen::Index nz = m + 1;  // unknowns plus the shift t
  const double r2 = opts.radius * opts.radius;

  double nu = 1.0;  // barrier parameter: sum of block sizes plus the ball
  for (const auto& f : forms) nu += double(f.g0.rows());

  Vector x = Vector::Zero(m);
  double lam0 = -std::numeric_limits<double>::infinity();
  for (const auto& f : forms) lam0 = std::max(lam0, lambda_max(f.g0));
  double t = lam0 + 1.0 + 0.1 * std::abs(lam0);

  // Returns +inf outside the domain.
  auto barrier = [&](const Vector& xv, double tv) {
    double phi = 0.0;
    for (const auto& f : forms) {
      const Eigen::Index d = f.g0.rows();
      Matrix s = tv * Matrix::Identity(d, d) - f.at(xv);
      Eigen::LLT<Matrix> llt(s);
      if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
      const Matrix& l = llt.matrixLLT();
      for (Eigen::Index i = 0; i < d; ++i) {
        const double di = l(i, i);
        if (!(di > 0.0)) return std::numeric_limits<double>::infinity();
        phi -= 2.0 * std::log(di);
      }
    }
    const double rr = r2 - xv.squaredNorm();
    if (!(rr > 0.0)) return std::numeric_limits<double>::infinity();
    return phi - std::log(rr);
  };

  LmiSolution sol;
  sol.eps_strict = opts.eps_strict;
  double mu = 1.0;
  int iters = 0;
  bool hit_max = false;
  bool infeasible_proved = false;

  auto current_values = [&](const Vector& xv) {
    std::map<std::string, Matrix> vals;
    for (std::size_t i = 0; i < problem.variables().size(); ++i)
      vals[problem.variables()[i].name] = detail::unpack(problem.variables()[i], xv, layout.offsets[i]);
    return vals;
  };
  auto certified = [&](const Vector& xv) {
    const auto margins = constraint_margins(problem, current_values(xv));
    double mn = std::numeric_limits<double>::infinity();
    for (double v : margins) mn = std::min(mn, v);
    return mn >= opts.eps_strict;
  };

  for (int outer = 0; outer < 200 && !hit_max; ++outer) {
    // Newton centering for mu * t + barrier.
    for (;;) {
      if (iters >= opts.max_iter) {
        hit_max = true;
        break;
      }
      Vector grad = Vector::Zero(nz);
      Matrix hess = Matrix::Zero(nz, nz);
      grad(m) = mu;
      for (const auto& f : forms) {
        const Eigen::Index d = f.g0.rows();
        Matrix s = t * Matrix::Identity(d, d) - f.at(x);
        Eigen::LLT<Matrix> llt(s);
        const Matrix sinv = llt.solve(Matrix::Identity(d, d));
        // dS/dt = I, dS/dx_j = -G_j.
        const std::size_t nb = f.basis.size();
        std::vector<Matrix> ms(nb + 1);
        std::vector<Eigen::Index> idx(nb + 1);
        for (std::size_t b = 0; b < nb; ++b) {
          ms[b] = -(sinv * f.basis[b].second);
          idx[b] = f.basis[b].first;
        }
        ms[nb] = sinv;
        idx[nb] = m;
        for (std::size_t a = 0; a <= nb; ++a) {
          grad(idx[a]) -= ms[a].trace();
          for (std::size_t b = a; b <= nb; ++b) {
            const double h = ms[a].cwiseProduct(ms[b].transpose()).sum();
            hess(idx[a], idx[b]) += h;
            if (a != b) hess(idx[b], idx[a]) += h;
          }
        }
      }
      const double rr = r2 - x.squaredNorm();
      grad.head(m) += 2.0 * x / rr;
      hess.topLeftCorner(m, m) += (2.0 / rr) * Matrix::Identity(m, m) + (4.0 / (rr * rr)) * x * x.transpose();

      Eigen::LDLT<Matrix> ldlt(hess);
      Vector step = ldlt.solve(-grad);
      if (!step.allFinite() || ldlt.info() != Eigen::Success) {
        Matrix reg = hess;
        reg.diagonal().array() += 1e-12 * (1.0 + hess.diagonal().cwiseAbs().maxCoeff());
        step = reg.ldlt().solve(-grad);
      }
      const double dec2 = -grad.dot(step);
      ++iters;
      if (!(dec2 > 1e-12)) break;  // centered

      const double f0 = mu * t + barrier(x, t);
      double alpha = 1.0;
      bool accepted = false;
      bool progressed = false;
      while (alpha > 1e-14) {
        const Vector xn = x + alpha * step.head(m);
        const double tn = t + alpha * step(m);
        const double fn = mu * tn + barrier(xn, tn);
        if (std::isfinite(fn) && fn <= f0 - 0.25 * alpha * dec2) {
          x = xn;
          t = tn;
          accepted = true;
          progressed = fn < f0;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted) {
        // A large Newton decrement with no acceptable step means the barrier
        // model is broken (unbounded or ill-posed data), not that we are centered.
        if (dec2 > 1.0 && !certified(x)) throw NumericalError("LMI solver: step-size collapse (ill-posed problem)");
        break;
      }
      // Centered, or the objective no longer moves in floating point.
      if (dec2 < 1e-7 || !progressed) break;
      if (opts.stop_at_certificate && t <= -opts.eps_strict && certified(x)) break;
    }

    const double gap = nu / mu;
    if (opts.stop_at_certificate && t <= -opts.eps_strict && certified(x)) break;
    if (t - gap > -opts.eps_strict && outer > 0) {
      infeasible_proved = true;
      break;
    }
    if (gap <= opts.tol * std::max(1.0, std::abs(t))) break;
    mu *= 10.0;
  }

  sol.iterations = iters;
  sol.t = t;
  sol.assignment = current_values(x);
  sol.constraint_margins = constraint_margins(problem, sol.assignment);
  sol.margin = std::numeric_limits<double>::infinity();
  for (double v : sol.constraint_margins) sol.margin = std::min(sol.margin, v);
  if (sol.margin >= opts.eps_strict)
    sol.status = Status::feasible;
  else if (hit_max && !infeasible_proved)
    sol.status = Status::max_iter;
  else
    sol.status = Status::infeasible_at_tolerance;
  return sol;
}

}  // namespace qhinf::lmi
