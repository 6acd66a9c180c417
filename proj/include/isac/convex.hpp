#ifndef ISAC_CONVEX_HPP
#define ISAC_CONVEX_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>

#include "isac/types.hpp"

namespace isac::convex {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Complex-valued linear form coeff^T x + offset over a real variable x.
struct ComplexLinearTerm {
  VectorXcd coeff;
  Complex offset{0.0, 0.0};
};

/// ||a x + b|| <= c^T x + d with a stacked as rows.
struct SocConstraint {
  MatrixXd a;
  VectorXd b;
  VectorXd c;
  double d = 0;
};

/// (1/2) x^T p x + q^T x + r <= 0 with p PSD.
struct QuadConstraint {
  MatrixXd p;
  VectorXd q;
  double r = 0;
};

/**
 * Smooth concave lower-bound constraint g(x) >= min_value. The caller
 * supplies value, gradient and a Hessian oracle; `hessian_diag` covers the
 * separable case (the sum-rate constraint) without forming a dense matrix.
 */
struct ConcaveConstraint {
  std::function<double(const VectorXd&)> value;
  std::function<VectorXd(const VectorXd&)> gradient;
  std::function<VectorXd(const VectorXd&)> hessian_diag;  // either this...
  std::function<MatrixXd(const VectorXd&)> hessian;       // ...or this
  double min_value = 0;
  std::string label = "concave";
};

enum class SolveStatus { kOptimal, kMaxIter, kInfeasible };

struct KktResiduals {
  double stationarity = 0;
  double primal = 0;
  double dual = 0;
  double complementarity = 0;
  double worst() const {
    return std::max(std::max(stationarity, primal), std::max(dual, complementarity));
  }
};

struct Solution {
  VectorXd x;
  double objective = 0;
  double dual_bound = -kInf;
  SolveStatus status = SolveStatus::kMaxIter;
  KktResiduals kkt;
  int iterations = 0;                // total Newton steps
  std::vector<double> barrier_path;  // objective after each barrier stage
  std::string infeasibility_certificate;
};

struct SolveOptions {
  double tol = 1e-8;  // normalized KKT tolerance
  int max_iter = 4000;
  double newton_tol = 1e-10;
  double barrier_factor = 10.0;
};

/**
 * Dense convex program: quadratic objective, linear equalities and
 * inequalities, box bounds, second-order cones, convex quadratic
 * constraints, and smooth concave lower bounds. Variables may be appended
 * (epigraph reformulation) until the first concave constraint is added.
 */
class ConvexProgram {
 public:
  explicit ConvexProgram(int n)
      : n_(n),
        p_(MatrixXd::Zero(n, n)),
        q_(VectorXd::Zero(n)),
        lower_(VectorXd::Constant(n, -kInf)),
        upper_(VectorXd::Constant(n, kInf)) {}

  int variables() const { return n_; }

  /// Sets (1/2) x^T P x + q^T x + constant; symmetrizes P and validates it
  /// is PSD via a shifted Cholesky factorization (min eigenvalue >= -1e-9
  /// relative to the diagonal scale).
  void set_objective(MatrixXd p, VectorXd q, double constant = 0) {
    check_dims(p, q);
    p = 0.5 * (p + p.transpose()).eval();
    check_psd(p, "objective");
    p_ = std::move(p);
    q_ = std::move(q);
    constant_ = constant;
  }

  void set_linear_objective(VectorXd q, double constant = 0) {
    set_objective(MatrixXd::Zero(n_, n_), std::move(q), constant);
  }

  void add_linear_inequality(VectorXd a, double b) {
    if (a.size() != n_) throw config_error("constraint dimension mismatch");
    lin_a_.push_back(std::move(a));
    lin_b_.push_back(b);
  }

  void add_equality(VectorXd e, double f) {
    if (e.size() != n_) throw config_error("constraint dimension mismatch");
    eq_e_.push_back(std::move(e));
    eq_f_.push_back(f);
  }

  void set_bounds(VectorXd lower, VectorXd upper) {
    if (lower.size() != n_ || upper.size() != n_) throw config_error("bounds dimension mismatch");
    lower_ = std::move(lower);
    upper_ = std::move(upper);
  }

  void set_bound(int var, double lower, double upper) {
    lower_(var) = lower;
    upper_(var) = upper;
  }

  int add_soc(MatrixXd a, VectorXd b, VectorXd c, double d) {
    if (a.cols() != n_ || c.size() != n_ || a.rows() != b.size())
      throw config_error("SOC dimension mismatch");
    soc_.push_back({std::move(a), std::move(b), std::move(c), d});
    return static_cast<int>(soc_.size()) - 1;
  }

  /// |term| <= bound.
  void add_modulus_bound(const ComplexLinearTerm& term, double bound) {
    add_soc(stack_rows(term), stack_offset(term), VectorXd::Zero(n_), bound);
  }

  /// |term| <= c^T x + d (scalable bound, e.g. mainlobe-relative PSL).
  void add_modulus_bound(const ComplexLinearTerm& term, VectorXd c, double d) {
    add_soc(stack_rows(term), stack_offset(term), std::move(c), d);
  }

  void add_quadratic_inequality(MatrixXd p, VectorXd q, double r) {
    check_dims(p, q);
    p = 0.5 * (p + p.transpose()).eval();
    check_psd(p, "quadratic constraint");
    quad_.push_back({std::move(p), std::move(q), r});
  }

  void add_concave_lower_bound(ConcaveConstraint con) {
    if (!con.value || !con.gradient || (!con.hessian_diag && !con.hessian))
      throw config_error("concave constraint needs value, gradient and a Hessian oracle");
    concave_.push_back(std::move(con));
  }

  /**
   * Epigraph reformulation of a minimax over complex moduli: appends a
   * scalar t, adds |term_i| <= t for every distinct term and +t to the
   * objective, and returns the index of t. Duplicate terms are collapsed
   * after sign/row canonicalization, which also absorbs conjugate pairs.
   */
  int add_epigraph_minimax(const std::vector<ComplexLinearTerm>& terms) {
    if (terms.empty()) throw config_error("epigraph_minimax: empty term list");
    const int n_before = n_;
    const int t_var = append_variable();
    q_(t_var) += 1.0;
    std::map<std::vector<double>, bool> seen;
    VectorXd c = VectorXd::Zero(n_);
    c(t_var) = 1.0;
    for (const auto& term : terms) {
      if (term.coeff.size() != n_before) throw config_error("term dimension mismatch");
      ComplexLinearTerm padded{VectorXcd::Zero(n_), term.offset};
      padded.coeff.head(n_before) = term.coeff;
      MatrixXd rows = stack_rows(padded);
      VectorXd offs = stack_offset(padded);
      canonicalize(rows, offs);
      std::vector<double> key;
      key.reserve(static_cast<size_t>(rows.size() + offs.size()));
      for (int i = 0; i < rows.rows(); ++i) {
        for (int j = 0; j < rows.cols(); ++j) key.push_back(rows(i, j));
        key.push_back(offs(i));
      }
      if (seen.emplace(std::move(key), true).second) add_soc(rows, offs, c, 0.0);
    }
    epigraph_vars_.push_back(t_var);
    return t_var;
  }

  double objective_value(const VectorXd& x) const {
    return 0.5 * x.dot(p_ * x) + q_.dot(x) + constant_;
  }
  double objective_constant() const { return constant_; }

  const MatrixXd& quadratic_cost() const { return p_; }
  const VectorXd& linear_cost() const { return q_; }
  const VectorXd& lower() const { return lower_; }
  const VectorXd& upper() const { return upper_; }
  const std::vector<VectorXd>& linear_lhs() const { return lin_a_; }
  const std::vector<double>& linear_rhs() const { return lin_b_; }
  const std::vector<VectorXd>& equality_lhs() const { return eq_e_; }
  const std::vector<double>& equality_rhs() const { return eq_f_; }
  const std::vector<SocConstraint>& socs() const { return soc_; }
  const std::vector<QuadConstraint>& quads() const { return quad_; }
  const std::vector<ConcaveConstraint>& concaves() const { return concave_; }
  const std::vector<int>& epigraph_variables() const { return epigraph_vars_; }

 private:
  int append_variable() {
    if (!concave_.empty())
      throw config_error("cannot append variables after concave constraints");
    const int idx = n_++;
    MatrixXd p = MatrixXd::Zero(n_, n_);
    p.topLeftCorner(idx, idx) = p_;
    p_ = std::move(p);
    q_.conservativeResize(n_);
    q_(idx) = 0;
    lower_.conservativeResize(n_);
    lower_(idx) = -kInf;
    upper_.conservativeResize(n_);
    upper_(idx) = kInf;
    for (auto& a : lin_a_) {
      a.conservativeResize(n_);
      a(idx) = 0;
    }
    for (auto& e : eq_e_) {
      e.conservativeResize(n_);
      e(idx) = 0;
    }
    for (auto& s : soc_) {
      s.a.conservativeResize(Eigen::NoChange, n_);
      s.a.col(idx).setZero();
      s.c.conservativeResize(n_);
      s.c(idx) = 0;
    }
    for (auto& qc : quad_) {
      MatrixXd p2 = MatrixXd::Zero(n_, n_);
      p2.topLeftCorner(idx, idx) = qc.p;
      qc.p = std::move(p2);
      qc.q.conservativeResize(n_);
      qc.q(idx) = 0;
    }
    return idx;
  }

  MatrixXd stack_rows(const ComplexLinearTerm& term) const {
    if (term.coeff.size() != n_) throw config_error("term dimension mismatch");
    MatrixXd rows(2, n_);
    rows.row(0) = term.coeff.real().transpose();
    rows.row(1) = term.coeff.imag().transpose();
    return rows;
  }
  static VectorXd stack_offset(const ComplexLinearTerm& term) {
    VectorXd offs(2);
    offs << term.offset.real(), term.offset.imag();
    return offs;
  }

  /// Sign-normalizes and orders the rows so that conjugate-equivalent terms
  /// (same modulus for every x) map to identical coefficient bytes.
  static void canonicalize(MatrixXd& rows, VectorXd& offs) {
    for (int i = 0; i < rows.rows(); ++i) {
      double lead = 0;
      for (int j = 0; j < rows.cols() && lead == 0; ++j) lead = rows(i, j);
      if (lead == 0) lead = offs(i);
      if (lead < 0) {
        rows.row(i) = -rows.row(i);
        offs(i) = -offs(i);
      }
    }
    const auto row_key = [&](int i) {
      std::vector<double> key(static_cast<size_t>(rows.cols()) + 1);
      for (int j = 0; j < rows.cols(); ++j) key[static_cast<size_t>(j)] = rows(i, j);
      key.back() = offs(i);
      return key;
    };
    if (row_key(1) < row_key(0)) {
      rows.row(0).swap(rows.row(1));
      std::swap(offs(0), offs(1));
    }
  }

  void check_dims(const MatrixXd& p, const VectorXd& q) const {
    if (p.rows() != n_ || p.cols() != n_ || q.size() != n_)
      throw config_error("objective dimension mismatch");
  }

  static void check_psd(const MatrixXd& p, const std::string& what) {
    if (p.size() == 0 || p.isZero(0.0)) return;
    const double scale = std::max(1.0, p.diagonal().cwiseAbs().maxCoeff());
    Eigen::LLT<MatrixXd> llt(p + 1e-9 * scale * MatrixXd::Identity(p.rows(), p.cols()));
    if (llt.info() != Eigen::Success)
      throw config_error(what + " matrix is not positive semidefinite");
  }

  int n_;
  MatrixXd p_;
  VectorXd q_;
  double constant_ = 0;
  VectorXd lower_, upper_;
  std::vector<VectorXd> lin_a_;
  std::vector<double> lin_b_;
  std::vector<VectorXd> eq_e_;
  std::vector<double> eq_f_;
  std::vector<SocConstraint> soc_;
  std::vector<QuadConstraint> quad_;
  std::vector<ConcaveConstraint> concave_;
  std::vector<int> epigraph_vars_;
};

namespace detail {

/**
 * Barrier value/gradient/Hessian over all inequality-type constraints,
 * each slack relaxed by a shared amount (0 for the main solve, s for
 * phase I).
 */
class BarrierModel {
 public:
  BarrierModel(const ConvexProgram& prog, double relax) : prog_(prog), relax_(relax) {}

  /// Total barrier degree: 1 per scalar inequality, 2 per cone.
  double degree() const {
    double nu = static_cast<double>(prog_.linear_lhs().size() + prog_.quads().size() +
                                    prog_.concaves().size());
    for (int i = 0; i < prog_.lower().size(); ++i) {
      if (std::isfinite(prog_.lower()(i))) nu += 1;
      if (std::isfinite(prog_.upper()(i))) nu += 1;
    }
    nu += 2.0 * static_cast<double>(prog_.socs().size());
    return nu;
  }

  /// Largest unrelaxed constraint value f_i(x) (<= 0 when feasible) and the
  /// description of the maximizer.
  std::pair<double, std::string> worst_violation(const VectorXd& x) const {
    double worst = -kInf;
    std::string label = "none";
    const auto consider = [&](double value, std::string what) {
      if (value > worst) {
        worst = value;
        label = std::move(what);
      }
    };
    for (size_t i = 0; i < prog_.linear_lhs().size(); ++i)
      consider(prog_.linear_lhs()[i].dot(x) - prog_.linear_rhs()[i],
               "linear[" + std::to_string(i) + "]");
    for (int i = 0; i < x.size(); ++i) {
      if (std::isfinite(prog_.lower()(i)))
        consider(prog_.lower()(i) - x(i), "lower[" + std::to_string(i) + "]");
      if (std::isfinite(prog_.upper()(i)))
        consider(x(i) - prog_.upper()(i), "upper[" + std::to_string(i) + "]");
    }
    for (size_t i = 0; i < prog_.quads().size(); ++i) {
      const auto& qc = prog_.quads()[i];
      consider(0.5 * x.dot(qc.p * x) + qc.q.dot(x) + qc.r,
               "quadratic[" + std::to_string(i) + "]");
    }
    for (size_t i = 0; i < prog_.socs().size(); ++i) {
      const auto& s = prog_.socs()[i];
      consider((s.a * x + s.b).norm() - (s.c.dot(x) + s.d), "soc[" + std::to_string(i) + "]");
    }
    for (size_t i = 0; i < prog_.concaves().size(); ++i) {
      const auto& c = prog_.concaves()[i];
      consider(c.min_value - c.value(x), c.label);
    }
    return {worst, label};
  }

  bool in_domain(const VectorXd& x) const { return evaluate(x, nullptr, nullptr, nullptr); }

  double value(const VectorXd& x) const {
    double phi = 0;
    if (!evaluate(x, &phi, nullptr, nullptr)) return kInf;
    return phi;
  }

  bool derivatives(const VectorXd& x, double& phi, VectorXd& grad, MatrixXd& hess) const {
    grad.setZero(x.size());
    hess.setZero(x.size(), x.size());
    return evaluate(x, &phi, &grad, &hess);
  }

 private:
  bool evaluate(const VectorXd& x, double* phi, VectorXd* grad, MatrixXd* hess) const {
    double acc = 0;
    for (size_t i = 0; i < prog_.linear_lhs().size(); ++i) {
      const VectorXd& a = prog_.linear_lhs()[i];
      const double slack = relax_ + prog_.linear_rhs()[i] - a.dot(x);
      if (!(slack > 0)) return false;
      acc -= std::log(slack);
      if (grad) {
        *grad += a / slack;
        hess->noalias() += (a / slack) * (a / slack).transpose();
      }
    }
    for (int i = 0; i < x.size(); ++i) {
      if (std::isfinite(prog_.lower()(i))) {
        const double slack = relax_ + x(i) - prog_.lower()(i);
        if (!(slack > 0)) return false;
        acc -= std::log(slack);
        if (grad) {
          (*grad)(i) -= 1.0 / slack;
          (*hess)(i, i) += 1.0 / (slack * slack);
        }
      }
      if (std::isfinite(prog_.upper()(i))) {
        const double slack = relax_ + prog_.upper()(i) - x(i);
        if (!(slack > 0)) return false;
        acc -= std::log(slack);
        if (grad) {
          (*grad)(i) += 1.0 / slack;
          (*hess)(i, i) += 1.0 / (slack * slack);
        }
      }
    }
    for (const auto& qc : prog_.quads()) {
      const double slack = relax_ - (0.5 * x.dot(qc.p * x) + qc.q.dot(x) + qc.r);
      if (!(slack > 0)) return false;
      acc -= std::log(slack);
      if (grad) {
        const VectorXd gf = qc.p * x + qc.q;
        *grad += gf / slack;
        hess->noalias() += (gf / slack) * (gf / slack).transpose();
        hess->noalias() += qc.p / slack;
      }
    }
    for (const auto& s : prog_.socs()) {
      // Barrier on (w + relax)^2 - ||z||^2, w = c'x + d, z = Ax + b.
      const VectorXd z = s.a * x + s.b;
      const double w = s.c.dot(x) + s.d + relax_;
      const double f = w * w - z.squaredNorm();
      if (!(w > 0) || !(f > 0)) return false;
      acc -= std::log(f);
      if (grad) {
        const VectorXd gf = 2.0 * w * s.c - 2.0 * s.a.transpose() * z;
        *grad -= gf / f;
        hess->noalias() += (gf / f) * (gf / f).transpose();
        hess->noalias() += (2.0 / f) * (s.a.transpose() * s.a);
        hess->noalias() -= (2.0 / f) * (s.c * s.c.transpose());
      }
    }
    for (const auto& c : prog_.concaves()) {
      const double slack = relax_ + c.value(x) - c.min_value;
      if (!(slack > 0)) return false;
      acc -= std::log(slack);
      if (grad) {
        const VectorXd g = c.gradient(x);
        *grad -= g / slack;
        hess->noalias() += (g / slack) * (g / slack).transpose();
        if (c.hessian_diag) {
          hess->diagonal() -= c.hessian_diag(x) / slack;
        } else {
          hess->noalias() -= c.hessian(x) / slack;
        }
      }
    }
    if (phi) *phi = acc;
    return true;
  }

  const ConvexProgram& prog_;
  double relax_ = 0;
};

struct CenteringResult {
  VectorXd x;
  VectorXd eq_multipliers;
  double final_decrement_sq = 0;  // g' H^{-1} g at the last iterate
  int newton_steps = 0;
  bool stalled = false;
};

/// Equality-constrained damped Newton minimization of t*f0 + phi.
inline CenteringResult center(const ConvexProgram& prog, const BarrierModel& barrier, double t,
                              VectorXd x, double newton_tol, int max_steps) {
  const int n = static_cast<int>(x.size());
  const int n_eq = static_cast<int>(prog.equality_lhs().size());
  MatrixXd eq(n_eq, n);
  VectorXd eq_rhs(n_eq);
  for (int i = 0; i < n_eq; ++i) {
    eq.row(i) = prog.equality_lhs()[static_cast<size_t>(i)].transpose();
    eq_rhs(i) = prog.equality_rhs()[static_cast<size_t>(i)];
  }

  CenteringResult result;
  result.eq_multipliers = VectorXd::Zero(n_eq);
  VectorXd grad_phi(n);
  MatrixXd hess_phi(n, n);
  const auto merit = [&](const VectorXd& point) {
    return t * prog.objective_value(point) + barrier.value(point);
  };

  for (int step = 0; step < max_steps; ++step) {
    double phi = 0;
    if (!barrier.derivatives(x, phi, grad_phi, hess_phi))
      throw numeric_error("interior-point: iterate left the barrier domain");
    const VectorXd grad = t * (prog.quadratic_cost() * x + prog.linear_cost()) + grad_phi;
    const MatrixXd hess = t * prog.quadratic_cost() + hess_phi;

    VectorXd dx(n), w(n_eq);
    const double hess_scale = std::max(1.0, hess.diagonal().cwiseAbs().maxCoeff());
    bool solved = false;
    for (double reg = 1e-12 * hess_scale; reg <= hess_scale; reg *= 100) {
      Eigen::LDLT<MatrixXd> ldlt(hess + reg * MatrixXd::Identity(n, n));
      if (n_eq == 0) {
        dx = ldlt.solve(-grad);
        if (dx.allFinite()) {
          solved = true;
          break;
        }
      } else {
        // Block elimination keeps Ex = f exact: dx solves the KKT system
        // through the Schur complement of the (regularized) Hessian.
        const VectorXd y = ldlt.solve(-grad);
        const MatrixXd hinv_et = ldlt.solve(eq.transpose());
        const MatrixXd schur = eq * hinv_et;
        w = schur.ldlt().solve(eq * y - (eq_rhs - eq * x));
        dx = y - hinv_et * w;
        if (dx.allFinite() && w.allFinite()) {
          solved = true;
          break;
        }
      }
    }
    if (!solved) throw numeric_error("interior-point: Newton system is numerically singular");
    if (n_eq > 0) result.eq_multipliers = w;
    ++result.newton_steps;

    const double decrement_sq = -grad.dot(dx);
    result.final_decrement_sq = std::max(decrement_sq, 0.0);
    if (!(decrement_sq > 0)) break;

    const double merit_now = merit(x);
    double alpha = 1.0;
    bool moved = false;
    for (int back = 0; back < 60; ++back) {
      const VectorXd trial = x + alpha * dx;
      if (barrier.in_domain(trial) &&
          merit(trial) <= merit_now - 0.01 * alpha * decrement_sq + 1e-14 * std::abs(merit_now)) {
        x = trial;
        moved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!moved) {
      result.stalled = true;
      break;
    }
    if (0.5 * decrement_sq <= newton_tol) break;
  }
  result.x = std::move(x);
  return result;
}

}  // namespace detail

/// Minimum-norm correction of x onto the affine manifold Ex = f.
inline VectorXd project_onto_equalities(const ConvexProgram& prog, VectorXd x) {
  const int n_eq = static_cast<int>(prog.equality_lhs().size());
  if (n_eq == 0) return x;
  MatrixXd eq(n_eq, x.size());
  VectorXd residual(n_eq);
  for (int i = 0; i < n_eq; ++i) {
    eq.row(i) = prog.equality_lhs()[static_cast<size_t>(i)].transpose();
    residual(i) = prog.equality_rhs()[static_cast<size_t>(i)] -
                  prog.equality_lhs()[static_cast<size_t>(i)].dot(x);
  }
  const MatrixXd gram = eq * eq.transpose();
  x += eq.transpose() * gram.ldlt().solve(residual);
  return x;
}

/// Pulls a start point into the finite part of the box with a small margin.
inline VectorXd clamp_into_box(const ConvexProgram& prog, VectorXd x) {
  for (int i = 0; i < x.size(); ++i) {
    const double lo = prog.lower()(i), hi = prog.upper()(i);
    if (std::isfinite(lo) && std::isfinite(hi)) {
      const double margin = 1e-6 * (hi - lo);
      x(i) = std::clamp(x(i), lo + margin, hi - margin);
    } else if (std::isfinite(lo)) {
      x(i) = std::max(x(i), lo + 1e-6 * (1.0 + std::abs(lo)));
    } else if (std::isfinite(hi)) {
      x(i) = std::min(x(i), hi - 1e-6 * (1.0 + std::abs(hi)));
    }
  }
  return x;
}

/**
 * Phase I: starting from a box-interior point, drives the shared
 * constraint relaxation s toward the minimax violation by repeated
 * analytic centering of the s-relaxed set. Returns a strictly feasible
 * point on success; otherwise reports the maximally violated constraint.
 */
inline std::pair<bool, VectorXd> phase_one(const ConvexProgram& prog, VectorXd x0,
                                           std::string* certificate, const SolveOptions& opts,
                                           int& newton_steps) {
  ConvexProgram relaxed = prog;
  relaxed.set_linear_objective(VectorXd::Zero(prog.variables()));
  // Cap unbounded variables around the start so analytic centers exist.
  VectorXd lo = prog.lower(), hi = prog.upper();
  if (prog.equality_lhs().empty()) x0 = clamp_into_box(prog, x0);
  x0 = project_onto_equalities(prog, x0);
  for (int i = 0; i < x0.size(); ++i) {
    const double big = 1e4 * (1.0 + std::abs(x0(i)));
    if (!std::isfinite(lo(i))) lo(i) = x0(i) - big;
    if (!std::isfinite(hi(i))) hi(i) = x0(i) + big;
  }
  relaxed.set_bounds(lo, hi);

  detail::BarrierModel probe(prog, 0.0);
  double s = std::max(probe.worst_violation(x0).first, 0.0) + 1.0;
  for (int round = 0; round < 60; ++round) {
    detail::BarrierModel barrier(relaxed, s);
    if (!barrier.in_domain(x0))
      throw numeric_error("phase one: start left the relaxed domain");
    auto centered = detail::center(relaxed, barrier, 1.0, x0, opts.newton_tol, 200);
    newton_steps += centered.newton_steps;
    x0 = std::move(centered.x);
    const auto [worst, label] = probe.worst_violation(x0);
    if (worst < 0) return {true, x0};
    const double next = 1.25 * worst + 1e-16;
    if (next >= s * (1.0 - 1e-9)) {
      if (certificate) *certificate = label + " violated by " + std::to_string(worst);
      return {false, x0};
    }
    s = next;
  }
  if (certificate) *certificate = probe.worst_violation(x0).second + " (phase one stalled)";
  return {false, x0};
}

/**
 * Primal interior-point solve with a logarithmic barrier and Newton
 * centering. Deterministic: identical inputs produce bit-identical
 * iterates. A strictly feasible warm start is used directly; anything else
 * goes through phase I first.
 */
inline Solution solve(const ConvexProgram& prog, const SolveOptions& opts = {},
                      std::optional<VectorXd> warm = std::nullopt) {
  const int n = prog.variables();
  detail::BarrierModel barrier(prog, 0.0);

  VectorXd x = warm.has_value() ? *warm : VectorXd::Zero(n);
  if (x.size() != n) throw config_error("warm start dimension mismatch");
  // Seed epigraph variables strictly above their cones.
  for (int t_var : prog.epigraph_variables()) {
    double needed = 0;
    for (const auto& s : prog.socs())
      if (s.c(t_var) == 1.0 && s.c.cwiseAbs().sum() == 1.0)
        needed = std::max(needed, (s.a * x + s.b).norm() - s.d);
    x(t_var) = std::max(x(t_var), needed + 1.0);
  }
  if (prog.equality_lhs().empty())
    x = clamp_into_box(prog, x);
  else
    x = project_onto_equalities(prog, x);

  Solution sol;
  if (barrier.worst_violation(x).first >= -1e-12) {
    std::string certificate;
    auto [feasible, x_feas] = phase_one(prog, x, &certificate, opts, sol.iterations);
    if (!feasible) {
      sol.status = SolveStatus::kInfeasible;
      sol.infeasibility_certificate = certificate;
      sol.x = x_feas;
      sol.objective = prog.objective_value(x_feas);
      sol.kkt.primal = std::max(0.0, barrier.worst_violation(x_feas).first);
      return sol;
    }
    x = std::move(x_feas);
  }

  const double degree = std::max(barrier.degree(), 1.0);
  double t = 1.0 / std::max(1.0, std::abs(prog.objective_value(x)));
  VectorXd eq_mult;
  double final_decrement_sq = 0;
  for (;;) {
    auto centered =
        detail::center(prog, barrier, t, x, opts.newton_tol, opts.max_iter - sol.iterations);
    sol.iterations += centered.newton_steps;
    x = std::move(centered.x);
    eq_mult = std::move(centered.eq_multipliers);
    final_decrement_sq = centered.final_decrement_sq;
    sol.barrier_path.push_back(prog.objective_value(x));
    const double scale = 1.0 + std::abs(prog.objective_value(x));
    if (degree / t <= opts.tol * scale) {
      sol.status = SolveStatus::kOptimal;
      break;
    }
    if (sol.iterations >= opts.max_iter) {
      sol.status = SolveStatus::kMaxIter;
      break;
    }
    t *= opts.barrier_factor;
  }

  sol.x = x;
  sol.objective = prog.objective_value(x);
  sol.dual_bound = sol.objective - degree / t;

  // KKT residuals. Stationarity is the final Newton decrement converted to
  // objective units (the Hessian-metric norm of the Lagrangian gradient),
  // which is the natural scale-free proximity measure of the barrier method.
  const double q_scale = 1.0 + prog.linear_cost().cwiseAbs().maxCoeff();
  sol.kkt.stationarity = std::sqrt(std::max(final_decrement_sq, 0.0)) / t / q_scale;
  double eq_res = 0;
  for (size_t i = 0; i < prog.equality_lhs().size(); ++i)
    eq_res = std::max(eq_res, std::abs(prog.equality_lhs()[i].dot(x) - prog.equality_rhs()[i]));
  sol.kkt.primal = std::max(0.0, std::max(eq_res, barrier.worst_violation(x).first));
  sol.kkt.dual = 0.0;  // barrier multipliers are positive by construction
  sol.kkt.complementarity = degree / t / (1.0 + std::abs(sol.objective));
  return sol;
}

}  // namespace isac::convex

#endif  // ISAC_CONVEX_HPP
