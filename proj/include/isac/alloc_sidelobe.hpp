#ifndef ISAC_ALLOC_SIDELOBE_HPP
#define ISAC_ALLOC_SIDELOBE_HPP

#include <optional>
#include <utility>

#include "isac/alloc.hpp"

namespace isac::alloc {

/// Fixed polynomial coefficients of the resolution constraints: positive
/// when the threshold sits above the full-occupancy baseline.
struct ResolutionBudgets {
  double delay = 0;    // 4*pi*(df*tau_th - 1/N)
  double doppler = 0;  // 4*pi*(f_th*Tsym - 1/M)
};

inline ResolutionBudgets resolution_constants(const SidelobeSpec& spec, const OfdmConfig& cfg) {
  ResolutionBudgets budgets;
  budgets.delay = 4.0 * kPi * (cfg.subcarrier_spacing_hz * spec.delay_resolution_max_s -
                               1.0 / cfg.subcarriers);
  budgets.doppler = 4.0 * kPi * (spec.doppler_resolution_max_hz * cfg.total_symbol_s() -
                                 1.0 / cfg.symbols);
  return budgets;
}

/**
 * Sidelobe-oriented adaptive allocation: minimizes the worst delay-Doppler
 * sidelobe modulus over the region (epigraph reformulation) subject to
 * resolution, SNR, sum-rate and power constraints. The resolution bounds
 * are difference-of-convex constraints with fixed coefficients; each outer
 * iteration convexifies them at the current iterate, which yields an inner
 * approximation of the feasible set, and alternates selection and power
 * updates exactly as the resolution-oriented algorithm does.
 */
class SidelobeAllocator {
 public:
  SidelobeAllocator(const OfdmConfig& cfg, SidelobeSpec spec,
                    const std::vector<MatrixXcd>& channels)
      : spec_(std::move(spec)),
        ws_(detail::make_workspace(cfg, channels, spec_.power_budget_w, spec_.echo_gain,
                                   spec_.snr_min, spec_.rate_min,
                                   /*psl_bound=*/0.0, /*psl_relative=*/false, spec_.region)),
        budgets_(resolution_constants(spec_, cfg)) {
    if (ws_.bins.empty())
      throw config_error("SidelobeAllocator: the sidelobe region is empty");
    if (budgets_.delay < 0)
      note_ = "delay resolution threshold lies below the full-grid baseline; ";
    if (budgets_.doppler < 0)
      note_ += "Doppler resolution threshold lies below the full-grid baseline; ";
  }

  /// Exact DC resolution constraint values (feasible when <= 0).
  double delay_constraint(const VectorXd& u0, const VectorXd& power_hat) const {
    const VectorXcd weighted = u0.cwiseProduct(power_hat).cast<Complex>();
    const double plain = u0.dot(power_hat);
    return 2.0 * std::norm(ws_.delay_ramp.dot(weighted)) - plain * plain -
           budgets_.delay * delay_form_value(u0, power_hat, ws_.cfg.subcarriers);
  }
  double doppler_constraint(const VectorXd& u0, const VectorXd& power_hat) const {
    const VectorXcd weighted = u0.cwiseProduct(power_hat).cast<Complex>();
    const double plain = u0.dot(power_hat);
    return 2.0 * std::norm(ws_.doppler_ramp.dot(weighted)) - plain * plain +
           budgets_.doppler *
               doppler_form_value(u0, power_hat, ws_.cfg.subcarriers, ws_.cfg.symbols);
  }

  /// Monitored objective: worst sidelobe modulus plus the Boolean penalty.
  double objective(const VectorXd& selection_stack, const VectorXd& power_hat,
                   double rho) const {
    double penalty = 0;
    for (int k = 0; k <= ws_.users; ++k)
      penalty += boolean_penalty(selection_stack.segment(k * ws_.cells, ws_.cells));
    return detail::worst_bin_modulus(ws_, selection_stack.head(ws_.cells), power_hat) +
           rho * penalty;
  }

  /**
   * Epigraph subproblem in the stacked selection variable. The surrogate
   * resolution constraints are expanded at `selection_expansion`; the
   * returned program appends the epigraph variable at the tail.
   */
  convex::ConvexProgram build_selection_subproblem(const VectorXd& selection_expansion,
                                                   const VectorXd& power_hat, double rho) const {
    const int n = ws_.selection_vars();
    const int cells = ws_.cells;
    VectorXd linear = VectorXd::Zero(n);
    double constant = 0;
    for (int k = 0; k <= ws_.users; ++k) {
      const VectorXd u_k = selection_expansion.segment(k * cells, cells);
      linear.segment(k * cells, cells) = rho * (VectorXd::Ones(cells) - 2.0 * u_k);
      constant += rho * u_k.squaredNorm();
    }
    convex::ConvexProgram prog(n);
    prog.set_linear_objective(std::move(linear), constant);

    std::vector<convex::ComplexLinearTerm> terms;
    terms.reserve(ws_.bin_phases.size());
    for (const auto& phases : ws_.bin_phases) {
      convex::ComplexLinearTerm term{VectorXcd::Zero(n), Complex(0, 0)};
      term.coeff.head(cells) = phases.cwiseProduct(power_hat.cast<Complex>());
      terms.push_back(std::move(term));
    }
    prog.add_epigraph_minimax(terms);

    add_resolution_surrogates(prog, power_hat, selection_expansion.head(cells));
    detail::add_selection_constraints(ws_, power_hat, prog);
    return prog;
  }

  /// Epigraph subproblem in the normalized power vector at fixed selection.
  convex::ConvexProgram build_power_subproblem(const VectorXd& selection_stack,
                                               const VectorXd& power_expansion,
                                               double rho) const {
    const int cells = ws_.cells;
    const VectorXd u0 = selection_stack.head(cells);
    double constant = 0;
    for (int k = 0; k <= ws_.users; ++k)
      constant += rho * boolean_penalty(selection_stack.segment(k * cells, cells));
    convex::ConvexProgram prog(cells);
    prog.set_linear_objective(VectorXd::Zero(cells), constant);

    std::vector<convex::ComplexLinearTerm> terms;
    terms.reserve(ws_.bin_phases.size());
    for (const auto& phases : ws_.bin_phases) {
      convex::ComplexLinearTerm term{VectorXcd::Zero(cells), Complex(0, 0)};
      term.coeff = phases.cwiseProduct(u0.cast<Complex>());
      terms.push_back(std::move(term));
    }
    prog.add_epigraph_minimax(terms);

    add_resolution_surrogates(prog, u0, power_expansion);
    detail::add_power_constraints(ws_, selection_stack, prog);
    return prog;
  }

  AllocationResult run(std::optional<ResourceState> init = std::nullopt) const {
    const int cells = ws_.cells;
    VectorXd power_hat = VectorXd::Constant(cells, 1.0 / cells);
    VectorXd desired = VectorXd::Constant(ws_.selection_vars(), 0.5);
    if (init.has_value()) {
      desired = detail::stack_selection(*init);
      const double total = init->power.sum();
      if (total > 0) power_hat = ResourceState::vec(init->power) / total;
    }
    VectorXd selection = detail::feasible_selection_start(ws_, power_hat, desired);
    ensure_resolution_feasible(selection, power_hat);

    double rho = spec_.penalty_weight;
    if (rho <= 0)
      rho = 0.1 * std::max(detail::worst_bin_modulus(ws_, selection.head(cells), power_hat),
                           1e-9) /
            cells;

    AllocationResult result;
    result.note = note_;
    result.relaxed_state = ResourceState(ws_.cfg.subcarriers, ws_.cfg.symbols, ws_.users);
    result.relaxed_state.relaxed = true;

    convex::SolveOptions solve_opts;
    double previous_objective = std::numeric_limits<double>::quiet_NaN();
    int last_rho_change = -1;
    bool converged = false;
    int iter = 0;
    for (; iter < spec_.max_iter; ++iter) {
      const double mm_before = objective(selection, power_hat, rho);
      bool restored = false;

      auto u_prog = build_selection_subproblem(selection, power_hat, rho);
      auto u_sol = convex::solve(u_prog, solve_opts, pad(selection, u_prog.variables()));
      if (u_sol.status == convex::SolveStatus::kInfeasible) {
        restore(selection, power_hat);
        restored = true;
        u_prog = build_selection_subproblem(selection, power_hat, rho);
        u_sol = convex::solve(u_prog, solve_opts, pad(selection, u_prog.variables()));
        if (u_sol.status == convex::SolveStatus::kInfeasible)
          throw infeasible_error("selection subproblem infeasible after restoration: " +
                                 u_sol.infeasibility_certificate);
      }
      VectorXd new_selection = u_sol.x.head(ws_.selection_vars());

      auto p_prog = build_power_subproblem(new_selection, power_hat, rho);
      auto p_sol = convex::solve(p_prog, solve_opts, pad(power_hat, p_prog.variables()));
      if (p_sol.status == convex::SolveStatus::kInfeasible)
        throw infeasible_error("power subproblem infeasible: " +
                               p_sol.infeasibility_certificate);
      VectorXd new_power = p_sol.x.head(cells);

      const double mm_after = objective(new_selection, new_power, rho);
      if (!restored && mm_after > mm_before + 1e-7 * std::max(1.0, std::abs(mm_before)))
        throw numeric_error("alternating MM failed to descend (surrogate contract broken)");

      selection = std::move(new_selection);
      power_hat = std::move(new_power);

      double penalty_total = 0;
      for (int k = 0; k <= ws_.users; ++k)
        penalty_total += boolean_penalty(selection.segment(k * cells, cells));
      const double mean_penalty = penalty_total / (ws_.users + 1);
      const double current = objective(selection, power_hat, rho);

      IterationRecord row;
      row.iteration = iter;
      row.objective = current;
      row.mm_before = mm_before;
      row.mm_after = mm_after;
      row.rho = rho;
      row.mean_penalty = mean_penalty;
      row.psl = detail::worst_bin_modulus(ws_, selection.head(cells), power_hat);
      row.snr = ws_.snr_coef * selection.head(cells).dot(power_hat) /
                std::max(selection.head(cells).sum(), 1e-12);
      row.rate = detail::rate_value(ws_, selection, power_hat);
      row.power = power_hat.sum();
      row.restoration = restored;
      result.trace.push_back(row);

      const bool rho_stable = (last_rho_change < iter - 1);
      const bool penalty_ok = mean_penalty <= 0.01 * cells;
      if (!std::isnan(previous_objective) && rho_stable && penalty_ok && !restored &&
          std::abs(previous_objective - current) <=
              spec_.stop_tol * std::max(std::abs(previous_objective), 1e-12)) {
        converged = true;
        ++iter;
        break;
      }
      previous_objective = current;

      if (!penalty_ok && spec_.penalty_weight <= 0 && (iter + 1) % 5 == 0) {
        rho *= 2.0;
        last_rho_change = iter;
      }
    }

    result.iterations = iter;
    result.converged = converged;
    result.status = converged ? RunStatus::kConverged : RunStatus::kMaxIterations;
    detail::unstack_selection(selection, result.relaxed_state);
    result.relaxed_state.power = Eigen::Map<const MatrixXd>(power_hat.data(),
                                                            ws_.cfg.subcarriers, ws_.cfg.symbols) *
                                 spec_.power_budget_w;

    finalize(selection, power_hat, rho, result);
    return result;
  }

  const detail::Workspace& workspace() const { return ws_; }
  const SidelobeSpec& spec() const { return spec_; }
  const ResolutionBudgets& budgets() const { return budgets_; }

 private:
  static VectorXd pad(const VectorXd& x, int total) {
    VectorXd padded = VectorXd::Zero(total);
    padded.head(x.size()) = x;
    return padded;
  }

  /**
   * Adds the convexified resolution constraints to a program whose leading
   * block is the variable being optimized: `weight` is the fixed grid on
   * the other block (power for the selection update, selection for the
   * power update) and `expansion` the current iterate of the variable.
   */
  void add_resolution_surrogates(convex::ConvexProgram& prog, const VectorXd& weight,
                                 const VectorXd& expansion) const {
    const int total = prog.variables();
    const int cells = ws_.cells;
    const auto make_constraint = [&](bool delay) {
      MatrixXd quad_cells = MatrixXd::Zero(cells, cells);
      VectorXd linear_cells = VectorXd::Zero(cells);
      double constant = 0;
      const VectorXcd& ramp = delay ? ws_.delay_ramp : ws_.doppler_ramp;
      const double gamma = delay ? -budgets_.delay : budgets_.doppler;
      const MatrixXd& pos = delay ? ws_.kernels.delay_pos : ws_.kernels.doppler_pos;
      const MatrixXd& neg = delay ? ws_.kernels.delay_neg : ws_.kernels.doppler_neg;
      detail::add_modulus_square(1.0, ramp.cwiseProduct(weight.cast<Complex>()), quad_cells);
      detail::add_negative_modulus_linearized(1.0, weight, expansion, linear_cells, constant);
      const auto dc = detail::DcQuadratic::make(gamma, pos, neg);
      dc.accumulate(1.0, weight, expansion, quad_cells, linear_cells, constant);
      MatrixXd quad = MatrixXd::Zero(total, total);
      quad.topLeftCorner(cells, cells) = quad_cells;
      VectorXd linear = VectorXd::Zero(total);
      linear.head(cells) = linear_cells;
      prog.add_quadratic_inequality(std::move(quad), std::move(linear), constant);
    };
    make_constraint(true);
    make_constraint(false);
  }

  /// Restoration per the MM-with-constraints recipe: minimize the common
  /// slack of the two surrogate resolution constraints while keeping every
  /// other constraint hard, then continue from the restored point.
  void restore(VectorXd& selection, const VectorXd& power_hat) const {
    const int n = ws_.selection_vars();
    convex::ConvexProgram feas(n);
    feas.set_objective(MatrixXd::Identity(n, n), -selection, 0.5 * selection.squaredNorm());
    add_resolution_surrogates(feas, power_hat, selection.head(ws_.cells));
    detail::add_selection_constraints(ws_, power_hat, feas);
    const auto sol = convex::solve(feas, {}, selection);
    if (sol.status == convex::SolveStatus::kInfeasible)
      throw infeasible_error("feasibility restoration failed: " +
                             sol.infeasibility_certificate);
    selection = sol.x;
  }

  /// The canonical start must satisfy the true DC resolution constraints
  /// for the first surrogates to be feasible at their expansion point.
  void ensure_resolution_feasible(VectorXd& selection, const VectorXd& power_hat) const {
    const VectorXd u0 = selection.head(ws_.cells);
    if (delay_constraint(u0, power_hat) <= 0 && doppler_constraint(u0, power_hat) <= 0) return;
    restore(selection, power_hat);
    const VectorXd u0r = selection.head(ws_.cells);
    if (delay_constraint(u0r, power_hat) > 0 || doppler_constraint(u0r, power_hat) > 0)
      throw infeasible_error(
          "initialization violates the resolution constraints and restoration did not recover");
  }

  void finalize(const VectorXd& selection, const VectorXd& power_hat, double rho,
                AllocationResult& result) const {
    const int cells = ws_.cells;
    ResourceState rounded(ws_.cfg.subcarriers, ws_.cfg.symbols, ws_.users);
    detail::round_selection(selection, rounded);

    VectorXd final_power = power_hat;
    for (int repair = 0;; ++repair) {
      VectorXd stack = detail::stack_selection(rounded);
      const VectorXd u0 = stack.head(cells);
      bool solved = false;
      if (u0.sum() >= 2.0) {
        auto prog = build_power_subproblem(stack, power_hat, rho);
        const auto sol = convex::solve(prog, {}, pad(power_hat, prog.variables()));
        if (sol.status != convex::SolveStatus::kInfeasible) {
          final_power = sol.x.head(cells);
          solved = true;
        }
      }
      if (solved) break;
      if (repair >= cells || !promote_unassigned(selection, rounded)) {
        result.status = RunStatus::kInfeasibleRounding;
        result.converged = false;
        result.note += "rounded selection could not satisfy the constraints";
        result.state = rounded;
        result.state.power = Eigen::Map<const MatrixXd>(
                                 final_power.data(), ws_.cfg.subcarriers, ws_.cfg.symbols) *
                             spec_.power_budget_w;
        return;
      }
    }

    result.state = rounded;
    result.state.power = Eigen::Map<const MatrixXd>(final_power.data(), ws_.cfg.subcarriers,
                                                    ws_.cfg.symbols) *
                         spec_.power_budget_w;
    const VectorXd stack = detail::stack_selection(rounded);
    const VectorXd u0 = stack.head(cells);

    result.achieved.psl =
        detail::worst_bin_modulus(ws_, u0, final_power) * spec_.power_budget_w / cells;
    const double mainlobe = u0.dot(final_power);
    result.achieved.psl_normalized =
        mainlobe > 0 ? detail::worst_bin_modulus(ws_, u0, final_power) / mainlobe : 0;
    result.achieved.snr =
        ws_.snr_coef * u0.dot(final_power) / std::max(u0.sum(), 1e-12);
    result.achieved.rate = detail::rate_value(ws_, stack, final_power);
    result.achieved.sensing_occupancy = u0.sum() / cells;
    try {
      ResourceState state = result.state;
      const auto report = resolution_report(state, ws_.cfg);
      result.achieved.delay_resolution_s = report.delay_resolution_s;
      result.achieved.doppler_resolution_hz = report.doppler_resolution_hz;
    } catch (const degenerate_error&) {
      result.achieved.delay_resolution_s = std::numeric_limits<double>::quiet_NaN();
      result.achieved.doppler_resolution_hz = std::numeric_limits<double>::quiet_NaN();
    }
    result.relaxation_gap =
        detail::worst_bin_modulus(ws_, u0, final_power) -
        detail::worst_bin_modulus(ws_, selection.head(cells), power_hat);
  }

  bool promote_unassigned(const VectorXd& relaxed_stack, ResourceState& rounded) const {
    int best = -1;
    double best_value = -1;
    for (int i = 0; i < ws_.cells; ++i) {
      bool taken = false;
      for (const auto& grid : rounded.selection)
        if (grid.data()[i] > 0.5) taken = true;
      if (taken) continue;
      if (relaxed_stack(i) > best_value) {
        best_value = relaxed_stack(i);
        best = i;
      }
    }
    if (best < 0) return false;
    rounded.sensing().data()[best] = 1.0;
    return true;
  }

  SidelobeSpec spec_;
  detail::Workspace ws_;
  ResolutionBudgets budgets_;
  std::string note_;
};

}  // namespace isac::alloc

#endif  // ISAC_ALLOC_SIDELOBE_HPP
