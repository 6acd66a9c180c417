#ifndef ISAC_ALLOC_HPP
#define ISAC_ALLOC_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "isac/convex.hpp"
#include "isac/metrics.hpp"
#include "isac/types.hpp"

namespace isac::alloc {

/// Inputs of the resolution-oriented allocation (problem weights/bounds in
/// linear units; power internally normalized by the budget).
struct ResolutionSpec {
  double delay_weight = 0.5;    // weighting of the normalized delay term
  double psl_bound = 0.01;      // bound on |AF sidelobe|, linear
  bool psl_relative = true;     // bound is relative to the mainlobe value
  double snr_min = 0.1;         // sensing SNR floor, linear
  double rate_min = 0.0;        // sum-rate floor, bps/Hz (0 disables)
  double power_budget_w = 1.0;
  double echo_gain = 1.0;       // radar-equation gain at the reference range
  SidelobeRegion region{0, 0};
  double penalty_weight = 0.0;  // 0 selects the automatic schedule
  double stop_tol = 1e-4;
  int max_iter = 30;
};

/// Inputs of the sidelobe-oriented allocation.
struct SidelobeSpec {
  double delay_resolution_max_s = 0;     // hard bound on the 3 dB delay width
  double doppler_resolution_max_hz = 0;  // hard bound on the Doppler width
  double snr_min = 0.1;
  double rate_min = 0.0;
  double power_budget_w = 1.0;
  double echo_gain = 1.0;
  SidelobeRegion region{0, 0};
  double penalty_weight = 0.0;
  double stop_tol = 1e-4;
  int max_iter = 30;
};

struct IterationRecord {
  int iteration = 0;
  double objective = 0;       // monitored outer objective
  double mm_before = 0;       // fixed-point MM objective before the solves
  double mm_after = 0;        // same objective after both block solves
  double t_delay = 0, t_doppler = 0;
  double rho = 0;
  double mean_penalty = 0;    // mean_k u_k'(1 - u_k)
  double psl = 0, snr = 0, rate = 0, power = 0;
  bool restoration = false;
};

enum class RunStatus { kConverged, kMaxIterations, kInfeasibleRounding };

struct AchievedMetrics {
  double delay_resolution_s = 0;
  double doppler_resolution_hz = 0;
  double psl = 0;           // absolute |AF| bound over the region
  double psl_normalized = 0;  // relative to the mainlobe
  double snr = 0;
  double rate = 0;
  double sensing_occupancy = 0;
};

struct AllocationResult {
  ResourceState state;  // Boolean, power in watts
  RunStatus status = RunStatus::kMaxIterations;
  bool converged = false;
  int iterations = 0;
  double relaxation_gap = 0;  // true objective: rounded minus relaxed
  AchievedMetrics achieved;
  ResourceState relaxed_state;  // final relaxed iterate (normalized power scaled back)
  std::vector<IterationRecord> trace;
  std::string note;
};

/// Quadratic Boolean penalty h(u) = u'(1 - u); zero exactly on {0,1} grids.
inline double boolean_penalty(const VectorXd& u) { return u.dot(VectorXd::Ones(u.size()) - u); }

namespace detail {

/// Power-independent Hermitian kernel splits (real parts, which is what the
/// quadratic forms over real vectors see), cached once per grid shape.
struct KernelSplit {
  MatrixXd delay_pos, delay_neg;      // real parts of the PSD split
  MatrixXd doppler_pos, doppler_neg;
};

inline KernelSplit build_kernels(const OfdmConfig& cfg) {
  ResourceState ones(cfg.subcarriers, cfg.symbols, 0);
  ones.power.setOnes();
  const auto coupling = coupling_matrices(ones, cfg);
  KernelSplit split;
  split.delay_pos = coupling.delay_kernel_pos.real();
  split.delay_neg = coupling.delay_kernel_neg.real();
  split.doppler_pos = coupling.doppler_kernel_pos.real();
  split.doppler_neg = coupling.doppler_kernel_neg.real();
  return split;
}

/// Shared per-run context: normalized coefficients, ramps, kernels, bins.
struct Workspace {
  OfdmConfig cfg;
  int users = 0;
  int cells = 0;  // MN
  double power_budget_w = 1.0;
  double snr_coef = 0;   // echo_gain * P_t / sigma^2 (per unit normalized power)
  double snr_floor = 0;  // linear SNR bound
  double rate_floor = 0;
  double psl_bound = 0;
  bool psl_relative = true;
  double delay_coef = 0;    // c_tau = 4*pi/N
  double doppler_coef = 0;  // c_v = 4*pi/M
  VectorXcd delay_ramp;     // exp(-j*pi*n/N) per cell
  VectorXcd doppler_ramp;   // exp(+j*pi*m/M) per cell
  std::vector<std::pair<int, int>> bins;   // symmetry-deduped sidelobe bins
  std::vector<VectorXcd> bin_phases;       // per bin, exp(-j2pi l n/N + j2pi nu m/M)
  MatrixXd rate_gain;       // cells x users: |h|^2 P_t / sigma^2
  KernelSplit kernels;

  int selection_vars() const { return (users + 1) * cells; }
};

inline Workspace make_workspace(const OfdmConfig& cfg, const std::vector<MatrixXcd>& channels,
                                double power_budget_w, double echo_gain, double snr_min,
                                double rate_min, double psl_bound, bool psl_relative,
                                const SidelobeRegion& region) {
  cfg.validate();
  region.validate(cfg);
  if (!(power_budget_w > 0)) throw config_error("allocation: power budget must be positive");
  Workspace ws;
  ws.cfg = cfg;
  ws.users = static_cast<int>(channels.size());
  ws.cells = cfg.resource_elements();
  ws.power_budget_w = power_budget_w;
  ws.snr_coef = echo_gain * power_budget_w / cfg.noise_power_w();
  ws.snr_floor = snr_min;
  ws.rate_floor = rate_min;
  ws.psl_bound = psl_bound;
  ws.psl_relative = psl_relative;
  ws.delay_coef = 4.0 * kPi / cfg.subcarriers;
  ws.doppler_coef = 4.0 * kPi / cfg.symbols;
  ws.delay_ramp = isac::detail::half_bin_delay_phases(cfg.subcarriers, cfg.symbols);
  ws.doppler_ramp = isac::detail::half_bin_doppler_phases(cfg.subcarriers, cfg.symbols);
  ws.bins = region.constrained_bins();
  ws.bin_phases.reserve(ws.bins.size());
  for (const auto& [l, nu] : ws.bins) {
    VectorXcd phases(ws.cells);
    for (int i = 0; i < ws.cells; ++i) {
      const int n = isac::detail::sub_of(i, cfg.subcarriers);
      const int m = isac::detail::sym_of(i, cfg.subcarriers);
      phases(i) = std::polar(1.0, -2.0 * kPi * l * n / static_cast<double>(cfg.subcarriers) +
                                      2.0 * kPi * nu * m / static_cast<double>(cfg.symbols));
    }
    ws.bin_phases.push_back(std::move(phases));
  }
  ws.rate_gain.resize(ws.cells, std::max(ws.users, 1));
  ws.rate_gain.setZero();
  for (int k = 0; k < ws.users; ++k) {
    const auto h = ResourceState::vec(channels[static_cast<size_t>(k)].cwiseAbs2());
    ws.rate_gain.col(k) = h * power_budget_w / cfg.noise_power_w();
  }
  ws.kernels = build_kernels(cfg);
  return ws;
}

/// Stacked selection vector [u_0; u_1; ...; u_K].
inline VectorXd stack_selection(const ResourceState& state) {
  VectorXd x(static_cast<int>(state.selection.size()) * state.resource_elements());
  for (size_t k = 0; k < state.selection.size(); ++k)
    x.segment(static_cast<int>(k) * state.resource_elements(), state.resource_elements()) =
        ResourceState::vec(state.selection[k]);
  return x;
}

inline void unstack_selection(const VectorXd& x, ResourceState& state) {
  const int cells = state.resource_elements();
  for (size_t k = 0; k < state.selection.size(); ++k)
    state.selection[k] = Eigen::Map<const MatrixXd>(x.data() + static_cast<int>(k) * cells,
                                                    state.subcarriers(), state.symbols());
}

/// Average sum-rate in bps/Hz for normalized power: user-block entries of
/// `selection` against `power_hat`.
inline double rate_value(const Workspace& ws, const VectorXd& selection_stack,
                         const VectorXd& power_hat) {
  double acc = 0;
  for (int k = 0; k < ws.users; ++k) {
    const auto u_k = selection_stack.segment((k + 1) * ws.cells, ws.cells);
    for (int i = 0; i < ws.cells; ++i)
      acc += std::log2(1.0 + ws.rate_gain(i, k) * power_hat(i) * u_k(i));
  }
  return acc / ws.cells;
}

/// Generic MM pieces of a difference-of-convex quadratic
///   gamma * y' (K_pos - K_neg) y  restricted to y = weight .* variable,
/// linearized at `expansion`. The convex part stays quadratic, the concave
/// part becomes linear; `quad`, `linear`, `constant` accumulate the
/// surrogate and `true_quad` evaluates the exact DC value.
struct DcQuadratic {
  double gamma = 0;
  const MatrixXd* keep = nullptr;       // PSD kernel kept quadratic
  const MatrixXd* linearized = nullptr; // PSD kernel that was linearized

  static DcQuadratic make(double gamma, const MatrixXd& pos, const MatrixXd& neg) {
    DcQuadratic dc;
    dc.gamma = gamma;
    if (gamma >= 0) {
      dc.keep = &pos;
      dc.linearized = &neg;
    } else {
      dc.keep = &neg;
      dc.linearized = &pos;
    }
    return dc;
  }

  /// Exact value of gamma * (w.*x)' K0 (w.*x).
  double exact(const VectorXd& weight, const VectorXd& x) const {
    const VectorXd y = weight.cwiseProduct(x);
    return gamma * (y.dot((*keep) * y) - y.dot((*linearized) * y)) * sign_factor();
  }

  /// Adds the surrogate at `expansion` into (quad, linear, constant), all
  /// expressed in the raw variable x (objective form 1/2 x'Px + q'x + r).
  void accumulate(double scale, const VectorXd& weight, const VectorXd& expansion,
                  MatrixXd& quad, VectorXd& linear, double& constant) const {
    const double mag = std::abs(gamma);
    if (mag == 0) return;
    const VectorXd ye = weight.cwiseProduct(expansion);
    // Quadratic part: + mag * (w.*x)' keep (w.*x).
    quad.noalias() += (2.0 * scale * mag) *
                      (weight.asDiagonal() * (*keep) * weight.asDiagonal());
    // Linearized part: - mag * (w.*x)' lin (w.*x) <= -2 mag (w.*x)' lin ye + mag ye' lin ye.
    const VectorXd lin_ye = (*linearized) * ye;
    linear.noalias() -= (2.0 * scale * mag) * weight.cwiseProduct(lin_ye);
    constant += scale * mag * ye.dot(lin_ye);
  }

 private:
  // keep - linearized equals sign(gamma) * (pos - neg).
  double sign_factor() const { return gamma >= 0 ? 1.0 : -1.0; }
};

/// Rank-two PSD quadratic 2|x' w|^2 contributed into 1/2 x'Px form.
inline void add_modulus_square(double scale, const VectorXcd& w, MatrixXd& quad) {
  const VectorXd re = w.real(), im = w.imag();
  quad.noalias() += (4.0 * scale) * (re * re.transpose());
  quad.noalias() += (4.0 * scale) * (im * im.transpose());
}

/// Linearization of -|x'p|^2 at expansion e: -2 (p p' e)'x + (p'e)^2.
inline void add_negative_modulus_linearized(double scale, const VectorXd& p, const VectorXd& e,
                                            VectorXd& linear, double& constant) {
  const double pe = p.dot(e);
  linear.noalias() -= (2.0 * scale * pe) * p;
  constant += scale * pe * pe;
}

/// Sum-rate concave constraint over the stacked selection variable with
/// fixed normalized power.
inline convex::ConcaveConstraint rate_constraint_in_selection(const Workspace& ws,
                                                              const VectorXd& power_hat,
                                                              int total_vars) {
  convex::ConcaveConstraint con;
  const int cells = ws.cells, users = ws.users;
  MatrixXd gain = ws.rate_gain;
  for (int k = 0; k < users; ++k) gain.col(k) = gain.col(k).cwiseProduct(power_hat);
  con.value = [cells, users, gain, total_vars](const VectorXd& x) {
    double acc = 0;
    for (int k = 0; k < users; ++k)
      for (int i = 0; i < cells; ++i)
        acc += std::log2(1.0 + gain(i, k) * std::max(x((k + 1) * cells + i), 0.0));
    return acc / cells;
  };
  con.gradient = [cells, users, gain, total_vars](const VectorXd& x) {
    VectorXd g = VectorXd::Zero(total_vars);
    const double ln2 = std::log(2.0);
    for (int k = 0; k < users; ++k)
      for (int i = 0; i < cells; ++i) {
        const int idx = (k + 1) * cells + i;
        g(idx) = gain(i, k) / ((1.0 + gain(i, k) * std::max(x(idx), 0.0)) * ln2) / cells;
      }
    return g;
  };
  con.hessian_diag = [cells, users, gain, total_vars](const VectorXd& x) {
    VectorXd h = VectorXd::Zero(total_vars);
    const double ln2 = std::log(2.0);
    for (int k = 0; k < users; ++k)
      for (int i = 0; i < cells; ++i) {
        const int idx = (k + 1) * cells + i;
        const double d = 1.0 + gain(i, k) * std::max(x(idx), 0.0);
        h(idx) = -gain(i, k) * gain(i, k) / (d * d * ln2) / cells;
      }
    return h;
  };
  con.label = "sum-rate";
  return con;
}

/// Sum-rate concave constraint in normalized power with fixed selection.
inline convex::ConcaveConstraint rate_constraint_in_power(const Workspace& ws,
                                                          const VectorXd& selection_stack) {
  convex::ConcaveConstraint con;
  const int cells = ws.cells, users = ws.users;
  MatrixXd gain = ws.rate_gain;
  for (int k = 0; k < users; ++k)
    gain.col(k) =
        gain.col(k).cwiseProduct(selection_stack.segment((k + 1) * cells, cells));
  con.value = [cells, users, gain](const VectorXd& p) {
    double acc = 0;
    for (int k = 0; k < users; ++k)
      for (int i = 0; i < cells; ++i)
        acc += std::log2(1.0 + gain(i, k) * std::max(p(i), 0.0));
    return acc / cells;
  };
  con.gradient = [cells, users, gain](const VectorXd& p) {
    VectorXd g = VectorXd::Zero(cells);
    const double ln2 = std::log(2.0);
    for (int k = 0; k < users; ++k)
      for (int i = 0; i < cells; ++i)
        g(i) += gain(i, k) / ((1.0 + gain(i, k) * std::max(p(i), 0.0)) * ln2) / cells;
    return g;
  };
  con.hessian_diag = [cells, users, gain](const VectorXd& p) {
    VectorXd h = VectorXd::Zero(cells);
    const double ln2 = std::log(2.0);
    for (int k = 0; k < users; ++k)
      for (int i = 0; i < cells; ++i) {
        const double d = 1.0 + gain(i, k) * std::max(p(i), 0.0);
        h(i) += -gain(i, k) * gain(i, k) / (d * d * ln2) / cells;
      }
    return h;
  };
  con.label = "sum-rate";
  return con;
}

/// Shared hard constraints of every selection subproblem: per-RE
/// exclusivity, the SNR floor, the sum-rate floor (when users exist), and
/// the [0, 1] box. `total` is the program size (>= stacked selection size,
/// to allow an epigraph variable at the tail).
inline void add_selection_constraints(const Workspace& ws, const VectorXd& power_hat,
                                      convex::ConvexProgram& prog) {
  const int cells = ws.cells, users = ws.users;
  const int total = prog.variables();
  for (int i = 0; i < cells; ++i) {
    VectorXd row = VectorXd::Zero(total);
    for (int k = 0; k <= users; ++k) row(k * cells + i) = 1.0;
    prog.add_linear_inequality(std::move(row), 1.0);
  }
  {
    // snr_coef * u0'p >= snr_floor * u0'1.
    VectorXd row = VectorXd::Zero(total);
    row.head(cells) = ws.snr_floor * VectorXd::Ones(cells) - ws.snr_coef * power_hat;
    prog.add_linear_inequality(std::move(row), 0.0);
  }
  VectorXd lower = VectorXd::Zero(total);
  VectorXd upper = VectorXd::Ones(total);
  for (int v = (users + 1) * cells; v < total; ++v) {
    lower(v) = -convex::kInf;
    upper(v) = convex::kInf;
  }
  prog.set_bounds(std::move(lower), std::move(upper));
  if (users > 0 && ws.rate_floor > 0) {
    auto con = rate_constraint_in_selection(ws, power_hat, total);
    con.min_value = ws.rate_floor;
    prog.add_concave_lower_bound(std::move(con));
  }
}

/// Shared hard constraints of every power subproblem: SNR floor, sum-rate
/// floor, unit normalized budget, nonnegativity.
inline void add_power_constraints(const Workspace& ws, const VectorXd& selection_stack,
                                  convex::ConvexProgram& prog) {
  const int cells = ws.cells;
  const int total = prog.variables();
  const VectorXd u0 = selection_stack.head(cells);
  {
    VectorXd row = VectorXd::Zero(total);
    row.head(cells) = -ws.snr_coef * u0;
    prog.add_linear_inequality(std::move(row), -ws.snr_floor * u0.sum());
  }
  {
    VectorXd row = VectorXd::Zero(total);
    row.head(cells).setOnes();
    prog.add_linear_inequality(std::move(row), 1.0);
  }
  VectorXd lower = VectorXd::Constant(total, -convex::kInf);
  VectorXd upper = VectorXd::Constant(total, convex::kInf);
  lower.head(cells).setZero();
  upper.head(cells).setOnes();
  prog.set_bounds(std::move(lower), std::move(upper));
  if (ws.users > 0 && ws.rate_floor > 0) {
    auto con = rate_constraint_in_power(ws, selection_stack);
    con.min_value = ws.rate_floor;
    if (total > cells) {
      // The rate reads only the leading power block; pad the oracle so its
      // gradients match the program size (epigraph variable at the tail).
      const auto inner = std::move(con);
      convex::ConcaveConstraint outer;
      outer.min_value = inner.min_value;
      outer.label = inner.label;
      outer.value = [inner, cells](const VectorXd& x) {
        return inner.value(VectorXd(x.head(cells)));
      };
      outer.gradient = [inner, cells, total](const VectorXd& x) {
        VectorXd g = VectorXd::Zero(total);
        g.head(cells) = inner.gradient(VectorXd(x.head(cells)));
        return g;
      };
      outer.hessian_diag = [inner, cells, total](const VectorXd& x) {
        VectorXd h = VectorXd::Zero(total);
        h.head(cells) = inner.hessian_diag(VectorXd(x.head(cells)));
        return h;
      };
      prog.add_concave_lower_bound(std::move(outer));
    } else {
      prog.add_concave_lower_bound(std::move(con));
    }
  }
}

/// PSL cone |u0' (phases .* p)| <= bound (or relative bound) over the
/// stacked selection variable.
inline void add_psl_cones_in_selection(const Workspace& ws, const VectorXd& power_hat,
                                       convex::ConvexProgram& prog) {
  if (ws.bins.empty() || ws.psl_bound <= 0) return;
  const int total = prog.variables();
  for (const auto& phases : ws.bin_phases) {
    convex::ComplexLinearTerm term{VectorXcd::Zero(total), Complex(0, 0)};
    term.coeff.head(ws.cells) = phases.cwiseProduct(power_hat.cast<Complex>());
    if (ws.psl_relative) {
      VectorXd c = VectorXd::Zero(total);
      c.head(ws.cells) = ws.psl_bound * power_hat;
      prog.add_modulus_bound(term, std::move(c), 0.0);
    } else {
      prog.add_modulus_bound(term, ws.psl_bound);
    }
  }
}

/// PSL cone in normalized power with fixed selection.
inline void add_psl_cones_in_power(const Workspace& ws, const VectorXd& selection_stack,
                                   convex::ConvexProgram& prog) {
  if (ws.bins.empty() || ws.psl_bound <= 0) return;
  const int total = prog.variables();
  const VectorXd u0 = selection_stack.head(ws.cells);
  for (const auto& phases : ws.bin_phases) {
    convex::ComplexLinearTerm term{VectorXcd::Zero(total), Complex(0, 0)};
    term.coeff.head(ws.cells) = phases.cwiseProduct(u0.cast<Complex>());
    if (ws.psl_relative) {
      VectorXd c = VectorXd::Zero(total);
      c.head(ws.cells) = ws.psl_bound * u0;
      prog.add_modulus_bound(term, std::move(c), 0.0);
    } else {
      prog.add_modulus_bound(term, ws.psl_bound);
    }
  }
}

/// Worst sidelobe modulus |u0'(phases .* p)| over the deduped bins.
inline double worst_bin_modulus(const Workspace& ws, const VectorXd& u0,
                                const VectorXd& power_hat) {
  double worst = 0;
  const VectorXcd weighted = u0.cwiseProduct(power_hat).cast<Complex>();
  for (const auto& phases : ws.bin_phases)
    worst = std::max(worst, std::abs(phases.dot(weighted)));
  return worst;
}

/// Closest feasible point to the canonical all-half initialization under
/// the selection constraints (the paper's start violates exclusivity as
/// soon as K >= 2, so the run begins from its projection).
inline VectorXd feasible_selection_start(const Workspace& ws, const VectorXd& power_hat,
                                         const VectorXd& desired) {
  convex::ConvexProgram prog(ws.selection_vars());
  prog.set_objective(MatrixXd::Identity(ws.selection_vars(), ws.selection_vars()), -desired,
                     0.5 * desired.squaredNorm());
  add_selection_constraints(ws, power_hat, prog);
  add_psl_cones_in_selection(ws, power_hat, prog);
  const auto sol = convex::solve(prog, {}, desired);
  if (sol.status == convex::SolveStatus::kInfeasible)
    throw infeasible_error("allocation start is infeasible: " + sol.infeasibility_certificate);
  return sol.x;
}

/// Per-RE winner-take-all rounding: the largest entry wins when it reaches
/// 1/2 (ties to the lowest entity index); smaller entries leave the RE
/// unassigned.
inline void round_selection(const VectorXd& relaxed_stack, ResourceState& state) {
  const int cells = state.resource_elements();
  const int entities = static_cast<int>(state.selection.size());
  for (auto& grid : state.selection) grid.setZero();
  for (int i = 0; i < cells; ++i) {
    int best = 0;
    double best_value = relaxed_stack(i);
    for (int k = 1; k < entities; ++k) {
      const double v = relaxed_stack(k * cells + i);
      if (v > best_value + 1e-12) {  // exact ties keep the lowest index
        best_value = v;
        best = k;
      }
    }
    if (best_value >= 0.5 - 1e-9)
      state.selection[static_cast<size_t>(best)].data()[i] = 1.0;
  }
  state.relaxed = false;
}

}  // namespace detail

}  // namespace isac::alloc

#endif  // ISAC_ALLOC_HPP
