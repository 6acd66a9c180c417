#ifndef ISAC_METRICS_HPP
#define ISAC_METRICS_HPP

#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "isac/types.hpp"

namespace isac {

/**
 * Integer delay-Doppler bin window whose interior (minus the origin) is the
 * sidelobe region of interest: all (l, nu) with |l| <= max_delay_bin,
 * |nu| <= max_doppler_bin, (l, nu) != (0, 0).
 */
struct SidelobeRegion {
  int max_delay_bin = 0;
  int max_doppler_bin = 0;

  void validate(const OfdmConfig& cfg) const {
    if (max_delay_bin < 0 || max_doppler_bin < 0)
      throw config_error("SidelobeRegion: bounds must be nonnegative");
    if (max_delay_bin >= cfg.subcarriers || max_doppler_bin >= cfg.symbols)
      throw config_error("SidelobeRegion: bounds must be smaller than the grid");
  }

  /// Every bin of the region, origin excluded.
  std::vector<std::pair<int, int>> all_bins() const {
    std::vector<std::pair<int, int>> bins;
    for (int l = -max_delay_bin; l <= max_delay_bin; ++l)
      for (int nu = -max_doppler_bin; nu <= max_doppler_bin; ++nu)
        if (l != 0 || nu != 0) bins.emplace_back(l, nu);
    return bins;
  }

  /**
   * Half of the region after removing conjugate-symmetric duplicates: for
   * real selection/power grids the sampled AF satisfies
   * theta(-l, -nu) = conj(theta(l, nu)), so only bins with l > 0 or
   * (l == 0 and nu > 0) need to be instantiated as constraints.
   */
  std::vector<std::pair<int, int>> constrained_bins() const {
    std::vector<std::pair<int, int>> bins;
    for (int l = 0; l <= max_delay_bin; ++l)
      for (int nu = (l == 0) ? 1 : -max_doppler_bin; nu <= max_doppler_bin; ++nu)
        bins.emplace_back(l, nu);
    return bins;
  }

  bool empty() const { return max_delay_bin == 0 && max_doppler_bin == 0; }
};

/// Closed-form 3 dB resolution summary. The resolution fields always satisfy
/// delay_resolution_s = 1/(N*df) + 2*delay_deviation_s exactly (same for
/// Doppler), because they are derived, not stored independently.
struct ResolutionReport {
  double delay_baseline_s = 0;     // half the full-occupancy delay width
  double doppler_baseline_hz = 0;  // half the full-occupancy Doppler width
  double delay_deviation_s = 0;
  double doppler_deviation_hz = 0;
  double delay_resolution_s = 0;
  double doppler_resolution_hz = 0;
};

/// Power-weighted coupling forms and their power-free Hermitian kernels.
/// The kernels split as kernel = pos - neg with both parts PSD (eigenvalue
/// sign clamping), and carry zero trace.
struct CouplingMatrices {
  MatrixXd delay_form;        // real MN x MN, power-weighted
  MatrixXd doppler_form;      // real MN x MN, power-weighted
  MatrixXcd delay_kernel;     // Hermitian, zero trace
  MatrixXcd doppler_kernel;   // Hermitian, zero trace
  MatrixXcd delay_kernel_pos, delay_kernel_neg;
  MatrixXcd doppler_kernel_pos, doppler_kernel_neg;
};

namespace detail {

inline int sub_of(int idx, int n_subcarriers) { return idx % n_subcarriers; }
inline int sym_of(int idx, int n_subcarriers) { return idx / n_subcarriers; }

/// Half-bin delay phase ramp: exp(-j*pi*n/N) per vectorised RE.
inline VectorXcd half_bin_delay_phases(int n_sub, int n_sym) {
  VectorXcd v(n_sub * n_sym);
  for (int i = 0; i < v.size(); ++i)
    v(i) = std::polar(1.0, -kPi * sub_of(i, n_sub) / static_cast<double>(n_sub));
  return v;
}

/// Half-bin Doppler phase ramp: exp(+j*pi*m/M) per vectorised RE.
inline VectorXcd half_bin_doppler_phases(int n_sub, int n_sym) {
  VectorXcd v(n_sub * n_sym);
  for (int i = 0; i < v.size(); ++i)
    v(i) = std::polar(1.0, kPi * sym_of(i, n_sub) / static_cast<double>(n_sym));
  return v;
}

}  // namespace detail

/**
 * Delay coupling form u^T B(p) u evaluated in O(MN) via the rank-structured
 * identity B_ij = p_i p_j n_j sin(pi (n_j - n_i)/N). Strictly positive for
 * any nonzero u >= 0, p >= 0 with at least two distinct subcarriers active.
 */
inline double delay_form_value(const VectorXd& u, const VectorXd& p, int n_sub) {
  Complex plain = 0, weighted = 0;
  for (int i = 0; i < u.size(); ++i) {
    const double w = u(i) * p(i);
    if (w == 0) continue;
    const int n = detail::sub_of(i, n_sub);
    const Complex phase = std::polar(w, -kPi * n / static_cast<double>(n_sub));
    plain += phase;
    weighted += static_cast<double>(n) * phase;
  }
  return std::imag(plain * std::conj(weighted));
}

/// Doppler coupling form u^T D(p) u; strictly negative on nonzero inputs
/// spanning at least two symbols.
inline double doppler_form_value(const VectorXd& u, const VectorXd& p, int n_sub, int n_sym) {
  Complex plain = 0, weighted = 0;
  for (int i = 0; i < u.size(); ++i) {
    const double w = u(i) * p(i);
    if (w == 0) continue;
    const int m = detail::sym_of(i, n_sub);
    const Complex phase = std::polar(w, kPi * m / static_cast<double>(n_sym));
    plain += phase;
    weighted += static_cast<double>(m) * phase;
  }
  return std::imag(plain * std::conj(weighted));
}

/**
 * Ambiguity function of an arbitrary nonnegative RE weight grid at
 * continuous delay tau and Doppler fd:
 *   chi(tau, fd) = (1/MN) sum_{n,m} w(n,m) exp(-j2pi n df tau)
 *                                        exp(+j2pi m fd Tsym).
 */
inline Complex ambiguity(const MatrixXd& weights, const OfdmConfig& cfg, double tau_s,
                         double doppler_hz) {
  const int n_sub = cfg.subcarriers, n_sym = cfg.symbols;
  const double dphi_n = -2.0 * kPi * cfg.subcarrier_spacing_hz * tau_s;
  const double dphi_m = 2.0 * kPi * doppler_hz * cfg.total_symbol_s();
  Complex acc = 0;
  for (int m = 0; m < n_sym; ++m) {
    Complex col = 0;
    for (int n = 0; n < n_sub; ++n) {
      const double w = weights(n, m);
      if (w != 0) col += std::polar(w, dphi_n * n);
    }
    acc += col * std::polar(1.0, dphi_m * m);
  }
  return acc / static_cast<double>(n_sub * n_sym);
}

/// Ambiguity function of the sensing allocation (weights u0 .* p).
inline Complex ambiguity(const ResourceState& state, const OfdmConfig& cfg, double tau_s,
                         double doppler_hz) {
  return ambiguity(MatrixXd(state.sensing().cwiseProduct(state.power)), cfg, tau_s, doppler_hz);
}

/**
 * Sampled AF over the region's full bin window (origin included), returned
 * as a (2 lmax + 1) x (2 numax + 1) grid; entry (l + lmax, nu + numax) is
 *   theta(l, nu) = (1/MN) sum w(n,m) exp(-j2pi l n/N) exp(+j2pi nu m/M).
 */
inline MatrixXcd ambiguity_grid(const MatrixXd& weights, const SidelobeRegion& region) {
  const int n_sub = static_cast<int>(weights.rows());
  const int n_sym = static_cast<int>(weights.cols());
  const int lmax = region.max_delay_bin, numax = region.max_doppler_bin;
  // Symbol-axis transform once per nu, then the subcarrier axis per (l, nu).
  MatrixXcd partial(n_sub, 2 * numax + 1);
  for (int nu = -numax; nu <= numax; ++nu)
    for (int n = 0; n < n_sub; ++n) {
      Complex acc = 0;
      for (int m = 0; m < n_sym; ++m)
        if (weights(n, m) != 0)
          acc += std::polar(weights(n, m), 2.0 * kPi * nu * m / static_cast<double>(n_sym));
      partial(n, nu + numax) = acc;
    }
  MatrixXcd grid(2 * lmax + 1, 2 * numax + 1);
  for (int l = -lmax; l <= lmax; ++l)
    for (int nu = -numax; nu <= numax; ++nu) {
      Complex acc = 0;
      for (int n = 0; n < n_sub; ++n)
        acc += partial(n, nu + numax) *
               std::polar(1.0, -2.0 * kPi * l * n / static_cast<double>(n_sub));
      grid(l + lmax, nu + numax) = acc / static_cast<double>(n_sub * n_sym);
    }
  return grid;
}

inline MatrixXcd ambiguity_grid(const ResourceState& state, const SidelobeRegion& region) {
  return ambiguity_grid(MatrixXd(state.sensing().cwiseProduct(state.power)), region);
}

/// Peak sidelobe level: max |theta(l, nu)| over the region (origin excluded).
inline double peak_sidelobe(const MatrixXd& weights, const SidelobeRegion& region) {
  const MatrixXcd grid = ambiguity_grid(weights, region);
  const int lmax = region.max_delay_bin, numax = region.max_doppler_bin;
  double peak = 0;
  for (int l = -lmax; l <= lmax; ++l)
    for (int nu = -numax; nu <= numax; ++nu) {
      if (l == 0 && nu == 0) continue;
      peak = std::max(peak, std::abs(grid(l + lmax, nu + numax)));
    }
  return peak;
}

inline double peak_sidelobe(const ResourceState& state, const SidelobeRegion& region) {
  return peak_sidelobe(MatrixXd(state.sensing().cwiseProduct(state.power)), region);
}

namespace detail {

inline void check_nondegenerate(const VectorXd& u, const VectorXd& p, double form_value) {
  if (u.cwiseAbs().maxCoeff() == 0 || p.cwiseAbs().maxCoeff() == 0)
    throw degenerate_error("resolution metric: all-zero selection or power");
  const double scale = p.squaredNorm() * u.squaredNorm();
  if (std::abs(form_value) < 1e-12 * scale)
    throw degenerate_error("resolution metric: coupling form is numerically zero");
}

}  // namespace detail

/**
 * Closed-form delay resolution (3 dB width of the zero-Doppler AF cut,
 * first-order Taylor model). Fills the delay half of the report.
 */
inline ResolutionReport delay_resolution(const ResourceState& state, const OfdmConfig& cfg) {
  const VectorXd u = state.sensing_vec();
  const VectorXd p = state.power_vec();
  const double form = delay_form_value(u, p, cfg.subcarriers);
  detail::check_nondegenerate(u, p, form);
  const VectorXcd ramp = detail::half_bin_delay_phases(cfg.subcarriers, cfg.symbols);
  Complex half = 0;
  for (int i = 0; i < u.size(); ++i) half += u(i) * p(i) * ramp(i);
  const double plain = u.dot(p);
  const double numerator = 2.0 * std::norm(half) - plain * plain;
  ResolutionReport report;
  report.delay_baseline_s = 0.5 * cfg.delay_bin_s();
  report.doppler_baseline_hz = 0.5 * cfg.doppler_bin_hz();
  report.delay_deviation_s = numerator / (8.0 * kPi * cfg.subcarrier_spacing_hz * form);
  report.delay_resolution_s = cfg.delay_bin_s() + 2.0 * report.delay_deviation_s;
  return report;
}

/// Closed-form Doppler resolution; mirror of `delay_resolution`.
inline ResolutionReport doppler_resolution(const ResourceState& state, const OfdmConfig& cfg) {
  const VectorXd u = state.sensing_vec();
  const VectorXd p = state.power_vec();
  const double form = doppler_form_value(u, p, cfg.subcarriers, cfg.symbols);
  detail::check_nondegenerate(u, p, form);
  const VectorXcd ramp = detail::half_bin_doppler_phases(cfg.subcarriers, cfg.symbols);
  Complex half = 0;
  for (int i = 0; i < u.size(); ++i) half += u(i) * p(i) * ramp(i);
  const double plain = u.dot(p);
  const double numerator = plain * plain - 2.0 * std::norm(half);
  ResolutionReport report;
  report.delay_baseline_s = 0.5 * cfg.delay_bin_s();
  report.doppler_baseline_hz = 0.5 * cfg.doppler_bin_hz();
  report.doppler_deviation_hz = numerator / (8.0 * kPi * cfg.total_symbol_s() * form);
  report.doppler_resolution_hz = cfg.doppler_bin_hz() + 2.0 * report.doppler_deviation_hz;
  return report;
}

/// Both halves in one report.
inline ResolutionReport resolution_report(const ResourceState& state, const OfdmConfig& cfg) {
  ResolutionReport report = delay_resolution(state, cfg);
  const ResolutionReport dop = doppler_resolution(state, cfg);
  report.doppler_deviation_hz = dop.doppler_deviation_hz;
  report.doppler_resolution_hz = dop.doppler_resolution_hz;
  return report;
}

/**
 * Power-weighted coupling forms plus the power-free Hermitian kernels and
 * their PSD eigenvalue-sign splits. The kernels depend only on the grid
 * dimensions, so optimizers cache this across iterations.
 */
inline CouplingMatrices coupling_matrices(const ResourceState& state, const OfdmConfig& cfg) {
  const int n_sub = cfg.subcarriers, n_sym = cfg.symbols, total = n_sub * n_sym;
  const VectorXd p = state.power_vec();
  if (p.cwiseAbs().maxCoeff() == 0)
    throw degenerate_error("coupling_matrices: all-zero power grid");

  CouplingMatrices out;
  out.delay_form.resize(total, total);
  out.doppler_form.resize(total, total);
  out.delay_kernel.resize(total, total);
  out.doppler_kernel.resize(total, total);
  for (int i = 0; i < total; ++i) {
    const int ni = detail::sub_of(i, n_sub), mi = detail::sym_of(i, n_sub);
    for (int j = 0; j < total; ++j) {
      const int nj = detail::sub_of(j, n_sub), mj = detail::sym_of(j, n_sub);
      const double dn = kPi * (nj - ni) / static_cast<double>(n_sub);
      const double dm = kPi * (mi - mj) / static_cast<double>(n_sym);
      out.delay_form(i, j) = p(i) * p(j) * nj * std::sin(dn);
      out.doppler_form(i, j) = p(i) * p(j) * mj * std::sin(dm);
      // (K - K^H)/2j for K = n_j exp(j dn) resp. m_j exp(j dm).
      out.delay_kernel(i, j) = Complex(0.5 * (nj - ni) * std::sin(dn),
                                       -0.5 * (nj - ni) * std::cos(dn));
      out.doppler_kernel(i, j) = Complex(0.5 * (mj - mi) * std::sin(dm),
                                         -0.5 * (mj - mi) * std::cos(dm));
    }
  }

  const auto split = [](const MatrixXcd& kernel, MatrixXcd& pos, MatrixXcd& neg) {
    Eigen::SelfAdjointEigenSolver<MatrixXcd> evd(kernel);
    if (evd.info() != Eigen::Success)
      throw numeric_error("coupling_matrices: eigendecomposition failed (matrix norm " +
                          std::to_string(kernel.norm()) + ")");
    const VectorXd lam = evd.eigenvalues();
    const MatrixXcd& vecs = evd.eigenvectors();
    pos = vecs * lam.cwiseMax(0.0).asDiagonal() * vecs.adjoint();
    neg = vecs * (-lam).cwiseMax(0.0).asDiagonal() * vecs.adjoint();
  };
  split(out.delay_kernel, out.delay_kernel_pos, out.delay_kernel_neg);
  split(out.doppler_kernel, out.doppler_kernel_pos, out.doppler_kernel_neg);
  return out;
}

/**
 * Average channel-gain constant of the radar range equation:
 * lambda^2 / (varsigma (4 pi)^3 R0^4).
 */
inline double average_echo_gain(const OfdmConfig& cfg, double max_range_m, double mean_rcs_m2) {
  const double lambda = cfg.wavelength_m();
  const double four_pi_cubed = std::pow(4.0 * kPi, 3);
  return lambda * lambda / (mean_rcs_m2 * four_pi_cubed * std::pow(max_range_m, 4));
}

/// Received sensing SNR over the selected REs (linear scale).
inline double sensing_snr(const ResourceState& state, double max_range_m, double mean_rcs_m2,
                          const OfdmConfig& cfg) {
  const VectorXd u = state.sensing_vec();
  const double active = u.sum();
  if (active <= 0) throw degenerate_error("sensing_snr: empty sensing set");
  const double gain = average_echo_gain(cfg, max_range_m, mean_rcs_m2);
  return gain * u.dot(state.power_vec()) / (active * cfg.noise_power_w());
}

/**
 * Average achievable multi-user sum-rate in bps/Hz. Accepts relaxed
 * (fractional) selection grids, which the optimizers rely on mid-iteration.
 */
inline double sum_rate(const ResourceState& state, const std::vector<MatrixXcd>& channels,
                       const OfdmConfig& cfg) {
  if (static_cast<int>(channels.size()) != state.users())
    throw config_error("sum_rate: need one channel grid per user");
  const double sigma2 = cfg.noise_power_w();
  double acc = 0;
  for (int k = 1; k <= state.users(); ++k) {
    const MatrixXcd& h = channels[static_cast<size_t>(k - 1)];
    for (int m = 0; m < cfg.symbols; ++m)
      for (int n = 0; n < cfg.subcarriers; ++n) {
        const double sel = state.user(k)(n, m);
        if (sel == 0) continue;
        acc += std::log2(1.0 + std::norm(h(n, m)) * state.power(n, m) * sel / sigma2);
      }
  }
  return acc / cfg.resource_elements();
}

enum class ScanAxis { kDelay, kDoppler };

/**
 * Numeric 3 dB mainlobe width: locates the first half-power crossing of
 * |chi|^2 along the zero-Doppler (delay) or zero-delay (Doppler) cut by
 * coarse scan plus bisection to 1e-6 relative accuracy, and returns twice
 * the crossing offset. `window_bins` bounds the scan in bin units.
 */
inline double mainlobe_width_3db(const ResourceState& state, const OfdmConfig& cfg, ScanAxis axis,
                                 double window_bins = 2.0) {
  const MatrixXd weights = state.sensing().cwiseProduct(state.power);
  const double window =
      window_bins * (axis == ScanAxis::kDelay ? cfg.delay_bin_s() : cfg.doppler_bin_hz());
  const auto power_at = [&](double offset) {
    const Complex value = (axis == ScanAxis::kDelay) ? ambiguity(weights, cfg, offset, 0.0)
                                                     : ambiguity(weights, cfg, 0.0, offset);
    return std::norm(value);
  };
  const double peak = power_at(0.0);
  if (peak <= 0) throw degenerate_error("mainlobe_width_3db: zero-power mainlobe");
  const double half = 0.5 * peak;

  constexpr int kCoarseSteps = 256;
  double lo = 0.0, hi = -1.0;
  for (int i = 1; i <= kCoarseSteps; ++i) {
    const double offset = window * i / kCoarseSteps;
    if (power_at(offset) <= half) {
      hi = offset;
      lo = window * (i - 1) / kCoarseSteps;
      break;
    }
  }
  if (hi < 0)
    throw numeric_error("mainlobe_width_3db: no half-power crossing inside the scan window");
  while ((hi - lo) > 1e-6 * hi) {
    const double mid = 0.5 * (lo + hi);
    (power_at(mid) <= half ? hi : lo) = mid;
  }
  return 2.0 * 0.5 * (lo + hi);
}

}  // namespace isac

#endif  // ISAC_METRICS_HPP
