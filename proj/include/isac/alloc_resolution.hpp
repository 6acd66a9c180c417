#ifndef ISAC_ALLOC_RESOLUTION_HPP
#define ISAC_ALLOC_RESOLUTION_HPP

#include <optional>
#include <utility>

#include "isac/alloc.hpp"

namespace isac::alloc {

/**
 * Resolution-oriented adaptive allocation: alternating MM updates of the
 * selection grids and the power grid, with fractional-objective auxiliary
 * variables refreshed each outer iteration, minimizing the weighted
 * normalized delay/Doppler resolution under sidelobe, SNR, sum-rate and
 * power constraints.
 *
 * All power quantities are normalized by the budget internally; selection
 * grids are relaxed to [0, 1] with a quadratic Boolean penalty and rounded
 * at the end.
 */
class ResolutionAllocator {
 public:
  ResolutionAllocator(const OfdmConfig& cfg, ResolutionSpec spec,
                      const std::vector<MatrixXcd>& channels)
      : spec_(std::move(spec)),
        ws_(detail::make_workspace(cfg, channels, spec_.power_budget_w, spec_.echo_gain,
                                   spec_.snr_min, spec_.rate_min, spec_.psl_bound,
                                   spec_.psl_relative, spec_.region)) {
    if (spec_.delay_weight < 0 || spec_.delay_weight > 1)
      throw config_error("ResolutionAllocator: delay weight must lie in [0, 1]");
  }

  struct AuxiliaryRatios {
    double delay = 0;    // normalized delay deviation of the current iterate
    double doppler = 0;  // normalized Doppler deviation
  };

  /// Fractional-objective refresh: both ratios equal the current normalized
  /// resolution deviations. Scale-invariant in the power vector.
  AuxiliaryRatios auxiliary_ratios(const VectorXd& u0, const VectorXd& power_hat) const {
    const double delay_form = delay_form_value(u0, power_hat, ws_.cfg.subcarriers);
    const double doppler_form =
        doppler_form_value(u0, power_hat, ws_.cfg.subcarriers, ws_.cfg.symbols);
    const double scale = power_hat.squaredNorm() * u0.squaredNorm();
    if (u0.cwiseAbs().maxCoeff() == 0 || power_hat.cwiseAbs().maxCoeff() == 0 ||
        std::abs(delay_form) < 1e-12 * scale || std::abs(doppler_form) < 1e-12 * scale)
      throw degenerate_error("auxiliary ratios: degenerate coupling form");
    const Complex half_delay = ws_.delay_ramp.dot(u0.cwiseProduct(power_hat).cast<Complex>());
    const Complex half_doppler =
        ws_.doppler_ramp.dot(u0.cwiseProduct(power_hat).cast<Complex>());
    const double plain = u0.dot(power_hat);
    AuxiliaryRatios t;
    t.delay = (2.0 * std::norm(half_delay) - plain * plain) / (ws_.delay_coef * delay_form);
    t.doppler =
        (plain * plain - 2.0 * std::norm(half_doppler)) / (ws_.doppler_coef * doppler_form);
    return t;
  }

  /// Exact penalized DC objective at fixed auxiliary ratios; the quantity
  /// every MM step must not increase.
  double dc_objective(const VectorXd& selection_stack, const VectorXd& power_hat,
                      const AuxiliaryRatios& t, double rho) const {
    const VectorXd u0 = selection_stack.head(ws_.cells);
    const VectorXcd weighted = u0.cwiseProduct(power_hat).cast<Complex>();
    const double plain = u0.dot(power_hat);
    const double delay_piece = 2.0 * std::norm(ws_.delay_ramp.dot(weighted)) - plain * plain -
                               ws_.delay_coef * t.delay *
                                   delay_form_value(u0, power_hat, ws_.cfg.subcarriers);
    const double doppler_piece =
        2.0 * std::norm(ws_.doppler_ramp.dot(weighted)) - plain * plain +
        ws_.doppler_coef * t.doppler *
            doppler_form_value(u0, power_hat, ws_.cfg.subcarriers, ws_.cfg.symbols);
    double penalty = 0;
    for (int k = 0; k <= ws_.users; ++k)
      penalty += boolean_penalty(selection_stack.segment(k * ws_.cells, ws_.cells));
    return spec_.delay_weight * delay_piece + (1.0 - spec_.delay_weight) * doppler_piece +
           rho * penalty;
  }

  /// Convex surrogate subproblem in the stacked selection variable at fixed
  /// power and auxiliary ratios, expanded at `selection_expansion`.
  convex::ConvexProgram build_selection_subproblem(const VectorXd& selection_expansion,
                                                   const VectorXd& power_hat,
                                                   const AuxiliaryRatios& t, double rho) const {
    const int n = ws_.selection_vars();
    const int cells = ws_.cells;
    MatrixXd quad = MatrixXd::Zero(n, n);
    VectorXd linear = VectorXd::Zero(n);
    double constant = 0;

    MatrixXd quad_u0 = MatrixXd::Zero(cells, cells);
    VectorXd linear_u0 = VectorXd::Zero(cells);
    const VectorXd u0_exp = selection_expansion.head(cells);
    const double eps = spec_.delay_weight;

    detail::add_modulus_square(eps, ws_.delay_ramp.cwiseProduct(power_hat.cast<Complex>()),
                               quad_u0);
    detail::add_modulus_square(1.0 - eps,
                               ws_.doppler_ramp.cwiseProduct(power_hat.cast<Complex>()), quad_u0);
    detail::add_negative_modulus_linearized(eps, power_hat, u0_exp, linear_u0, constant);
    detail::add_negative_modulus_linearized(1.0 - eps, power_hat, u0_exp, linear_u0, constant);
    const auto delay_dc = detail::DcQuadratic::make(-ws_.delay_coef * t.delay,
                                                    ws_.kernels.delay_pos, ws_.kernels.delay_neg);
    delay_dc.accumulate(eps, power_hat, u0_exp, quad_u0, linear_u0, constant);
    const auto doppler_dc = detail::DcQuadratic::make(
        ws_.doppler_coef * t.doppler, ws_.kernels.doppler_pos, ws_.kernels.doppler_neg);
    doppler_dc.accumulate(1.0 - eps, power_hat, u0_exp, quad_u0, linear_u0, constant);

    quad.topLeftCorner(cells, cells) = quad_u0;
    linear.head(cells) = linear_u0;
    for (int k = 0; k <= ws_.users; ++k) {
      const VectorXd u_k = selection_expansion.segment(k * cells, cells);
      linear.segment(k * cells, cells) += rho * (VectorXd::Ones(cells) - 2.0 * u_k);
      constant += rho * u_k.squaredNorm();
    }

    convex::ConvexProgram prog(n);
    prog.set_objective(std::move(quad), std::move(linear), constant);
    detail::add_psl_cones_in_selection(ws_, power_hat, prog);
    detail::add_selection_constraints(ws_, power_hat, prog);
    return prog;
  }

  /// Convex surrogate subproblem in the normalized power vector at fixed
  /// selection, expanded at `power_expansion`. The Boolean penalty of the
  /// fixed selection enters as a constant so objective values stay
  /// comparable across the alternation.
  convex::ConvexProgram build_power_subproblem(const VectorXd& selection_stack,
                                               const VectorXd& power_expansion,
                                               const AuxiliaryRatios& t, double rho) const {
    const int cells = ws_.cells;
    const VectorXd u0 = selection_stack.head(cells);
    MatrixXd quad = MatrixXd::Zero(cells, cells);
    VectorXd linear = VectorXd::Zero(cells);
    double constant = 0;
    const double eps = spec_.delay_weight;

    detail::add_modulus_square(eps, ws_.delay_ramp.cwiseProduct(u0.cast<Complex>()), quad);
    detail::add_modulus_square(1.0 - eps, ws_.doppler_ramp.cwiseProduct(u0.cast<Complex>()),
                               quad);
    detail::add_negative_modulus_linearized(eps, u0, power_expansion, linear, constant);
    detail::add_negative_modulus_linearized(1.0 - eps, u0, power_expansion, linear, constant);
    const auto delay_dc = detail::DcQuadratic::make(-ws_.delay_coef * t.delay,
                                                    ws_.kernels.delay_pos, ws_.kernels.delay_neg);
    delay_dc.accumulate(eps, u0, power_expansion, quad, linear, constant);
    const auto doppler_dc = detail::DcQuadratic::make(
        ws_.doppler_coef * t.doppler, ws_.kernels.doppler_pos, ws_.kernels.doppler_neg);
    doppler_dc.accumulate(1.0 - eps, u0, power_expansion, quad, linear, constant);

    for (int k = 0; k <= ws_.users; ++k)
      constant += rho * boolean_penalty(selection_stack.segment(k * cells, cells));

    convex::ConvexProgram prog(cells);
    prog.set_objective(std::move(quad), std::move(linear), constant);
    detail::add_psl_cones_in_power(ws_, selection_stack, prog);
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

    AuxiliaryRatios t = auxiliary_ratios(selection.head(cells), power_hat);
    double rho = spec_.penalty_weight;
    if (rho <= 0) rho = initial_penalty(selection, power_hat);

    AllocationResult result;
    result.relaxed_state = ResourceState(ws_.cfg.subcarriers, ws_.cfg.symbols, ws_.users);
    result.relaxed_state.relaxed = true;

    convex::SolveOptions solve_opts;
    double previous_objective = std::numeric_limits<double>::quiet_NaN();
    int last_rho_change = -1;
    bool converged = false;
    int iter = 0;
    for (; iter < spec_.max_iter; ++iter) {
      const double mm_before = dc_objective(selection, power_hat, t, rho);

      auto u_prog = build_selection_subproblem(selection, power_hat, t, rho);
      auto u_sol = convex::solve(u_prog, solve_opts, selection);
      if (u_sol.status == convex::SolveStatus::kInfeasible)
        throw infeasible_error("selection subproblem infeasible: " +
                               u_sol.infeasibility_certificate);
      VectorXd new_selection = u_sol.x;

      auto p_prog = build_power_subproblem(new_selection, power_hat, t, rho);
      auto p_sol = convex::solve(p_prog, solve_opts, power_hat);
      if (p_sol.status == convex::SolveStatus::kInfeasible)
        throw infeasible_error("power subproblem infeasible: " +
                               p_sol.infeasibility_certificate);
      VectorXd new_power = p_sol.x.head(cells);

      const double mm_after = dc_objective(new_selection, new_power, t, rho);
      if (mm_after > mm_before + 1e-7 * std::max(1.0, std::abs(mm_before)))
        throw numeric_error("alternating MM failed to descend (surrogate contract broken)");

      selection = std::move(new_selection);
      power_hat = std::move(new_power);
      t = auxiliary_ratios(selection.head(cells), power_hat);

      double penalty_total = 0;
      for (int k = 0; k <= ws_.users; ++k)
        penalty_total += boolean_penalty(selection.segment(k * cells, cells));
      const double mean_penalty = penalty_total / (ws_.users + 1);
      const double objective =
          2.0 + 2.0 * (spec_.delay_weight * t.delay + (1.0 - spec_.delay_weight) * t.doppler) +
          rho * penalty_total;

      IterationRecord row;
      row.iteration = iter;
      row.objective = objective;
      row.mm_before = mm_before;
      row.mm_after = mm_after;
      row.t_delay = t.delay;
      row.t_doppler = t.doppler;
      row.rho = rho;
      row.mean_penalty = mean_penalty;
      row.psl = detail::worst_bin_modulus(ws_, selection.head(cells), power_hat);
      row.snr = snr_value(selection.head(cells), power_hat);
      row.rate = detail::rate_value(ws_, selection, power_hat);
      row.power = power_hat.sum();
      result.trace.push_back(row);

      const bool rho_stable = (last_rho_change < iter - 1);
      const bool penalty_ok = mean_penalty <= 0.01 * cells;
      if (!std::isnan(previous_objective) && rho_stable && penalty_ok &&
          std::abs(previous_objective - objective) <=
              spec_.stop_tol * std::max(std::abs(previous_objective), 1e-12)) {
        converged = true;
        ++iter;
        break;
      }
      previous_objective = objective;

      if (!penalty_ok && spec_.penalty_weight <= 0 && (iter + 1) % 5 == 0) {
        rho *= 2.0;
        last_rho_change = iter;
      }
    }

    result.iterations = iter;
    result.converged = converged;
    result.status = converged ? RunStatus::kConverged : RunStatus::kMaxIterations;

    // Keep the relaxed iterate (power back in watts).
    detail::unstack_selection(selection, result.relaxed_state);
    result.relaxed_state.power = Eigen::Map<const MatrixXd>(power_hat.data(),
                                                            ws_.cfg.subcarriers, ws_.cfg.symbols) *
                                 spec_.power_budget_w;

    finalize(selection, power_hat, t, rho, result);
    return result;
  }

  const detail::Workspace& workspace() const { return ws_; }
  const ResolutionSpec& spec() const { return spec_; }

 private:
  double snr_value(const VectorXd& u0, const VectorXd& power_hat) const {
    const double active = u0.sum();
    if (active <= 0) return 0;
    return ws_.snr_coef * u0.dot(power_hat) / active;
  }

  /// rho_0 = 0.1 * |initial objective magnitude| / (MN), measured on the
  /// auxiliary-free quadratic pieces (the full parametric objective is
  /// identically zero at fresh ratios).
  double initial_penalty(const VectorXd& selection, const VectorXd& power_hat) const {
    const VectorXd u0 = selection.head(ws_.cells);
    const VectorXcd weighted = u0.cwiseProduct(power_hat).cast<Complex>();
    const double plain = u0.dot(power_hat);
    const double delay_mag =
        std::abs(2.0 * std::norm(ws_.delay_ramp.dot(weighted)) - plain * plain);
    const double doppler_mag =
        std::abs(2.0 * std::norm(ws_.doppler_ramp.dot(weighted)) - plain * plain);
    const double magnitude =
        spec_.delay_weight * delay_mag + (1.0 - spec_.delay_weight) * doppler_mag;
    return 0.1 * std::max(magnitude, 1e-9) / ws_.cells;
  }

  /// True (unpenalized) normalized-resolution objective of a state.
  double true_objective(const VectorXd& u0, const VectorXd& power_hat) const {
    const auto t = auxiliary_ratios(u0, power_hat);
    return 2.0 + 2.0 * (spec_.delay_weight * t.delay + (1.0 - spec_.delay_weight) * t.doppler);
  }

  void finalize(const VectorXd& selection, const VectorXd& power_hat, const AuxiliaryRatios& t,
                double rho, AllocationResult& result) const {
    const int cells = ws_.cells;
    ResourceState rounded(ws_.cfg.subcarriers, ws_.cfg.symbols, ws_.users);
    detail::round_selection(selection, rounded);

    VectorXd final_power = power_hat;
    for (int repair = 0;; ++repair) {
      VectorXd stack = detail::stack_selection(rounded);
      const VectorXd u0 = stack.head(cells);
      bool solved = false;
      if (u0.sum() >= 2.0) {
        try {
          const auto t_round = auxiliary_ratios(u0, power_hat);
          auto prog = build_power_subproblem(stack, power_hat, t_round, rho);
          const auto sol = convex::solve(prog, {}, power_hat);
          if (sol.status != convex::SolveStatus::kInfeasible) {
            final_power = sol.x.head(cells);
            solved = true;
          }
        } catch (const degenerate_error&) {
          // Fall through to the repair step below.
        }
      }
      if (solved) break;
      if (repair >= cells || !promote_unassigned(selection, rounded)) {
        result.status = RunStatus::kInfeasibleRounding;
        result.converged = false;
        result.note = "rounded selection could not satisfy the constraints";
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
    result.achieved = achieved_metrics(stack, final_power);
    try {
      result.relaxation_gap =
          true_objective(u0, final_power) - true_objective(selection.head(cells), power_hat);
    } catch (const degenerate_error&) {
      result.relaxation_gap = 0;
    }
  }

  /// Greedy repair: promote the unassigned RE with the largest relaxed
  /// sensing value to the sensing set. Returns false when every RE is
  /// already assigned.
  bool promote_unassigned(const VectorXd& relaxed_stack, ResourceState& rounded) const {
    int best = -1;
    double best_value = -1;
    const int cells = ws_.cells;
    for (int i = 0; i < cells; ++i) {
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

  AchievedMetrics achieved_metrics(const VectorXd& stack, const VectorXd& power_hat) const {
    AchievedMetrics achieved;
    const VectorXd u0 = stack.head(ws_.cells);
    ResourceState state(ws_.cfg.subcarriers, ws_.cfg.symbols, ws_.users);
    detail::unstack_selection(stack, state);
    state.power = Eigen::Map<const MatrixXd>(power_hat.data(), ws_.cfg.subcarriers,
                                             ws_.cfg.symbols) *
                  spec_.power_budget_w;
    try {
      const auto report = resolution_report(state, ws_.cfg);
      achieved.delay_resolution_s = report.delay_resolution_s;
      achieved.doppler_resolution_hz = report.doppler_resolution_hz;
    } catch (const degenerate_error&) {
      achieved.delay_resolution_s = std::numeric_limits<double>::quiet_NaN();
      achieved.doppler_resolution_hz = std::numeric_limits<double>::quiet_NaN();
    }
    achieved.psl = detail::worst_bin_modulus(ws_, u0, power_hat) * spec_.power_budget_w /
                   ws_.cells;
    const double mainlobe = u0.dot(power_hat);
    achieved.psl_normalized =
        mainlobe > 0 ? detail::worst_bin_modulus(ws_, u0, power_hat) / mainlobe : 0;
    achieved.snr = snr_value(u0, power_hat);
    achieved.rate = detail::rate_value(ws_, stack, power_hat);
    achieved.sensing_occupancy = u0.sum() / ws_.cells;
    return achieved;
  }

  ResolutionSpec spec_;
  detail::Workspace ws_;
};

}  // namespace isac::alloc

#endif  // ISAC_ALLOC_RESOLUTION_HPP
