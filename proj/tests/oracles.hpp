#ifndef ISAC_TEST_ORACLES_HPP
#define ISAC_TEST_ORACLES_HPP

#include <cmath>
#include <vector>

#include "isac/convex.hpp"
#include "isac/types.hpp"

namespace isac::test {

/**
 * Time-domain ambiguity oracle: builds the cyclic-prefixed multicarrier
 * probe signal sample by sample and integrates the delay-Doppler
 * correlation with the midpoint rule over the CP-protected window of each
 * symbol (the first T seconds, so a delay up to the CP never crosses a
 * symbol boundary). Completely independent of the closed-form path.
 *
 * The delay argument must be a multiple of the sample step; `snap_tau`
 * rounds to the grid. The CP must divide the symbol period so the sample
 * grid aligns with symbol starts.
 */
class TimeDomainAf {
 public:
  TimeDomainAf(const ResourceState& state, const ProbeMatrix& probe, const OfdmConfig& cfg,
               int samples_per_period)
      : cfg_(cfg), samples_per_period_(samples_per_period) {
    const double period = cfg.symbol_period_s();
    step_ = period / samples_per_period;
    const double ratio = cfg.total_symbol_s() / step_;
    samples_per_symbol_ = static_cast<int>(std::lround(ratio));
    if (std::abs(ratio - samples_per_symbol_) > 1e-9)
      throw config_error("TimeDomainAf: CP must divide the sample grid");
    const int total = samples_per_symbol_ * cfg.symbols;
    signal_.resize(total);
    for (int idx = 0; idx < total; ++idx) {
      const double t = (idx + 0.5) * step_;
      const int sym = idx / samples_per_symbol_;
      Complex acc = 0;
      for (int n = 0; n < cfg.subcarriers; ++n) {
        const double sel = state.sensing()(n, sym);
        if (sel == 0) continue;
        acc += sel * std::sqrt(state.power(n, sym)) * probe.symbols(n, sym) *
               std::polar(1.0, 2.0 * kPi * n * cfg.subcarrier_spacing_hz * t);
      }
      signal_[static_cast<size_t>(idx)] = acc / std::sqrt(static_cast<double>(cfg.subcarriers));
    }
  }

  double sample_step() const { return step_; }

  double snap_tau(double tau) const { return std::lround(tau / step_) * step_; }

  Complex eval(double tau, double doppler_hz) const {
    const int shift = static_cast<int>(std::lround(tau / step_));
    if (std::abs(shift * step_ - tau) > 1e-12 * cfg_.symbol_period_s())
      throw config_error("TimeDomainAf: tau must sit on the sample grid");
    if (shift < 0 || shift > samples_per_symbol_ - samples_per_period_)
      throw config_error("TimeDomainAf: tau outside the CP-protected window");
    Complex acc = 0;
    for (int sym = 0; sym < cfg_.symbols; ++sym) {
      const int base = sym * samples_per_symbol_;
      for (int i = 0; i < samples_per_period_; ++i) {
        const double t = (base + i + 0.5) * step_;
        acc += signal_[static_cast<size_t>(base + i)] *
               std::conj(signal_[static_cast<size_t>(base + i + shift)]) *
               std::polar(1.0, 2.0 * kPi * doppler_hz * t);
      }
    }
    // Appendix-style normalization: one factor T from the per-symbol
    // integral and M from the symbol count.
    return acc * step_ / (cfg_.symbols * cfg_.symbol_period_s());
  }

 private:
  OfdmConfig cfg_;
  int samples_per_period_;
  int samples_per_symbol_ = 0;
  double step_ = 0;
  std::vector<Complex> signal_;
};

/// Scalar double-loop evaluation of the sampled AF bin (l, nu).
inline Complex brute_force_af_bin(const ResourceState& state, int l, int nu) {
  const int n_sub = state.subcarriers(), n_sym = state.symbols();
  Complex acc = 0;
  for (int m = 0; m < n_sym; ++m)
    for (int n = 0; n < n_sub; ++n) {
      const double w = state.sensing()(n, m) * state.power(n, m);
      if (w == 0) continue;
      const double phase = -2.0 * kPi * l * n / static_cast<double>(n_sub) +
                           2.0 * kPi * nu * m / static_cast<double>(n_sym);
      acc += std::polar(w, phase);
    }
  return acc / static_cast<double>(n_sub * n_sym);
}

/**
 * First-order oracle for convex programs: projected gradient on the box
 * with the other constraints handled by a smooth augmented Lagrangian,
 * run with diminishing curvature-free steps over a long horizon. Slow but
 * entirely independent of the interior-point path.
 */
class FirstOrderOracle {
 public:
  explicit FirstOrderOracle(const convex::ConvexProgram& prog) : prog_(prog) {
    const size_t inequalities = prog.linear_lhs().size() + prog.quads().size() +
                                prog.socs().size() + prog.concaves().size();
    lambda_.assign(inequalities, 0.0);
    mu_.assign(prog.equality_lhs().size(), 0.0);
  }

  /// Runs the outer multiplier loop and returns the best feasible-ish
  /// objective found.
  double minimize(VectorXd x, int outer_rounds = 60, int inner_steps = 3000) {
    x = project(x);
    double kappa = 10.0;
    double prev_violation = std::numeric_limits<double>::infinity();
    for (int round = 0; round < outer_rounds; ++round) {
      x = inner_minimize(x, kappa, inner_steps);
      std::vector<double> values;
      constraint_values(x, values);
      double violation = 0;
      for (size_t i = 0; i < values.size(); ++i) {
        lambda_[i] = std::max(0.0, lambda_[i] + kappa * values[i]);
        violation = std::max(violation, values[i]);
      }
      for (size_t i = 0; i < mu_.size(); ++i) {
        const double h = prog_.equality_lhs()[i].dot(x) - prog_.equality_rhs()[i];
        mu_[i] += kappa * h;
        violation = std::max(violation, std::abs(h));
      }
      if (violation < 1e-10) break;
      if (violation > 0.25 * prev_violation) kappa *= 4.0;
      prev_violation = violation;
    }
    best_x_ = x;
    return prog_.objective_value(x);
  }

  const VectorXd& solution() const { return best_x_; }

 private:
  VectorXd project(VectorXd x) const {
    for (int i = 0; i < x.size(); ++i)
      x(i) = std::clamp(x(i), prog_.lower()(i), prog_.upper()(i));
    return x;
  }

  void constraint_values(const VectorXd& x, std::vector<double>& values) const {
    values.clear();
    for (size_t i = 0; i < prog_.linear_lhs().size(); ++i)
      values.push_back(prog_.linear_lhs()[i].dot(x) - prog_.linear_rhs()[i]);
    for (const auto& qc : prog_.quads())
      values.push_back(0.5 * x.dot(qc.p * x) + qc.q.dot(x) + qc.r);
    for (const auto& s : prog_.socs()) {
      const VectorXd z = s.a * x + s.b;
      values.push_back(std::sqrt(z.squaredNorm() + 1e-18) - (s.c.dot(x) + s.d));
    }
    for (const auto& c : prog_.concaves()) values.push_back(c.min_value - c.value(x));
  }

  VectorXd augmented_gradient(const VectorXd& x, double kappa) const {
    VectorXd grad = prog_.quadratic_cost() * x + prog_.linear_cost();
    size_t slot = 0;
    const auto add_term = [&](double value, const VectorXd& value_grad) {
      const double active = lambda_[slot] + kappa * value;
      if (active > 0) grad += active * value_grad;
      ++slot;
    };
    for (size_t i = 0; i < prog_.linear_lhs().size(); ++i)
      add_term(prog_.linear_lhs()[i].dot(x) - prog_.linear_rhs()[i], prog_.linear_lhs()[i]);
    for (const auto& qc : prog_.quads())
      add_term(0.5 * x.dot(qc.p * x) + qc.q.dot(x) + qc.r, VectorXd(qc.p * x + qc.q));
    for (const auto& s : prog_.socs()) {
      const VectorXd z = s.a * x + s.b;
      const double norm = std::sqrt(z.squaredNorm() + 1e-18);
      add_term(norm - (s.c.dot(x) + s.d), VectorXd(s.a.transpose() * z / norm - s.c));
    }
    for (const auto& c : prog_.concaves())
      add_term(c.min_value - c.value(x), VectorXd(-c.gradient(x)));
    for (size_t i = 0; i < mu_.size(); ++i) {
      const double h = prog_.equality_lhs()[i].dot(x) - prog_.equality_rhs()[i];
      grad += (mu_[i] + kappa * h) * prog_.equality_lhs()[i];
    }
    return grad;
  }

  double augmented_value(const VectorXd& x, double kappa) const {
    double value = prog_.objective_value(x);
    std::vector<double> values;
    constraint_values(x, values);
    for (size_t i = 0; i < values.size(); ++i) {
      const double active = std::max(0.0, lambda_[i] + kappa * values[i]);
      value += (active * active - lambda_[i] * lambda_[i]) / (2.0 * kappa);
    }
    for (size_t i = 0; i < mu_.size(); ++i) {
      const double h = prog_.equality_lhs()[i].dot(x) - prog_.equality_rhs()[i];
      value += mu_[i] * h + 0.5 * kappa * h * h;
    }
    return value;
  }

  VectorXd inner_minimize(VectorXd x, double kappa, int steps) const {
    double step = 1.0;
    for (int it = 0; it < steps; ++it) {
      const VectorXd grad = augmented_gradient(x, kappa);
      const double value = augmented_value(x, kappa);
      bool moved = false;
      for (int back = 0; back < 40; ++back) {
        const VectorXd trial = project(x - step * grad);
        if (augmented_value(trial, kappa) <
            value - 1e-4 * grad.dot(VectorXd(x - trial)) + 1e-15 * std::abs(value)) {
          x = trial;
          moved = true;
          step *= 1.3;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
      if (grad.lpNorm<Eigen::Infinity>() < 1e-12) break;
    }
    return x;
  }

  const convex::ConvexProgram& prog_;
  std::vector<double> lambda_;
  std::vector<double> mu_;
  VectorXd best_x_;
};

}  // namespace isac::test

#endif  // ISAC_TEST_ORACLES_HPP
