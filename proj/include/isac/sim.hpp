#ifndef ISAC_SIM_HPP
#define ISAC_SIM_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "isac/metrics.hpp"
#include "isac/rng.hpp"
#include "isac/types.hpp"

namespace isac {

/**
 * One point target. `rcs_m2` is either the deterministic radar cross
 * section or, when `swerling` is set, the mean of an exponentially
 * distributed per-trial RCS (Swerling I: constant within a scan,
 * independent between trials).
 */
struct Target {
  double range_m = 0;
  double velocity_mps = 0;
  double rcs_m2 = 1.0;
  bool swerling = false;

  double delay_s() const { return 2.0 * range_m / kSpeedOfLight; }
  double doppler_hz(const OfdmConfig& cfg) const {
    return 2.0 * velocity_mps / cfg.wavelength_m();
  }
};

struct TargetScene {
  std::vector<Target> targets;

  /// Rejects delays beyond the CP and warns-by-throwing on nothing else;
  /// Doppler magnitudes are the caller's concern (checked softly).
  void validate(const OfdmConfig& cfg) const {
    for (const auto& t : targets) {
      if (t.delay_s() >= cfg.cp_duration_s)
        throw config_error("TargetScene: target delay exceeds the cyclic prefix");
      if (t.range_m < 0) throw config_error("TargetScene: negative range");
      if (t.rcs_m2 <= 0) throw config_error("TargetScene: RCS must be positive");
    }
  }

  bool doppler_within_model(const OfdmConfig& cfg, double fraction = 0.05) const {
    for (const auto& t : targets)
      if (std::abs(t.doppler_hz(cfg)) > fraction * cfg.subcarrier_spacing_hz) return false;
    return true;
  }
};

/// Frequency-domain user channels, one N x M grid per user.
struct ChannelSet {
  std::vector<MatrixXcd> gains;
};

/// Complex range-velocity image produced by the 2D transform of the echo.
struct RdImage {
  MatrixXcd values;  // N x M, row = delay bin, column = Doppler bin
  int delay_bins() const { return static_cast<int>(values.rows()); }
  int doppler_bins() const { return static_cast<int>(values.cols()); }
};

struct TargetEstimate {
  double range_m = 0;
  double velocity_mps = 0;
  double magnitude = 0;
};

/**
 * Block-static frequency-selective user channels: `taps` i.i.d. complex
 * Gaussian delay taps scaled to unit average power, transformed to the
 * subcarrier domain and held constant across the frame's symbols.
 */
inline ChannelSet gen_channels(const OfdmConfig& cfg, int users, int taps, Rng& rng) {
  if (taps < 1 || taps > cfg.subcarriers)
    throw config_error("gen_channels: tap count must lie in [1, N]");
  ChannelSet set;
  set.gains.reserve(static_cast<size_t>(users));
  for (int k = 0; k < users; ++k) {
    std::vector<Complex> tap(static_cast<size_t>(taps));
    for (auto& g : tap) g = rng.complex_normal(1.0 / taps);
    MatrixXcd h(cfg.subcarriers, cfg.symbols);
    for (int n = 0; n < cfg.subcarriers; ++n) {
      Complex acc = 0;
      for (int l = 0; l < taps; ++l)
        acc += tap[static_cast<size_t>(l)] *
               std::polar(1.0, -2.0 * kPi * n * l / static_cast<double>(cfg.subcarriers));
      h.row(n).setConstant(acc);
    }
    set.gains.push_back(std::move(h));
  }
  return set;
}

/// Draws the per-trial complex echo amplitude of a target: radar-equation
/// magnitude with uniformly random phase, Swerling I RCS when requested.
inline Complex draw_echo_amplitude(const Target& target, const OfdmConfig& cfg, Rng& rng) {
  const double rcs = target.swerling ? rng.exponential(target.rcs_m2) : target.rcs_m2;
  const double lambda = cfg.wavelength_m();
  const double power =
      rcs * lambda * lambda / (std::pow(4.0 * kPi, 3) * std::pow(target.range_m, 4));
  return std::polar(std::sqrt(power), rng.uniform(0.0, 2.0 * kPi));
}

/**
 * Frequency-domain echo over the sensing REs:
 *   y(n,m) = sum_q amp_q exp(-j2pi n df tau_q) exp(+j2pi m fd_q Tsym)
 *            * sqrt(p(n,m)) * probe(n,m) + noise,
 * masked by the sensing selection grid. Amplitudes are drawn per call
 * (random phase and Swerling RCS), noise is complex white of power sigma2.
 */
inline MatrixXcd echo(const ResourceState& state, const ProbeMatrix& probe,
                      const TargetScene& scene, const OfdmConfig& cfg, double sigma2, Rng& rng) {
  scene.validate(cfg);
  const int n_sub = cfg.subcarriers, n_sym = cfg.symbols;
  MatrixXcd received = MatrixXcd::Zero(n_sub, n_sym);
  for (const auto& target : scene.targets) {
    const Complex amp = draw_echo_amplitude(target, cfg, rng);
    const double tau = target.delay_s();
    const double fd = target.doppler_hz(cfg);
    VectorXcd delay_ramp(n_sub), doppler_ramp(n_sym);
    for (int n = 0; n < n_sub; ++n)
      delay_ramp(n) = std::polar(1.0, -2.0 * kPi * n * cfg.subcarrier_spacing_hz * tau);
    for (int m = 0; m < n_sym; ++m)
      doppler_ramp(m) = std::polar(1.0, 2.0 * kPi * m * fd * cfg.total_symbol_s());
    received += amp * (delay_ramp * doppler_ramp.transpose());
  }
  for (int m = 0; m < n_sym; ++m)
    for (int n = 0; n < n_sub; ++n) {
      received(n, m) *= std::sqrt(state.power(n, m)) * probe.symbols(n, m);
      if (sigma2 > 0) received(n, m) += rng.complex_normal(sigma2);
      received(n, m) *= state.sensing()(n, m);
    }
  return received;
}

/**
 * Range-velocity image: unitary IDFT along subcarriers and unitary DFT
 * along symbols of the probe-matched echo, so a full-grid on-bin target of
 * amplitude a peaks at |a| sqrt(MN) and Parseval holds exactly.
 */
inline RdImage rd_image(const MatrixXcd& received, const ProbeMatrix& probe) {
  const int n_sub = static_cast<int>(received.rows());
  const int n_sym = static_cast<int>(received.cols());
  const MatrixXcd matched = received.cwiseProduct(probe.symbols.conjugate());
  MatrixXcd idft(n_sub, n_sub), dft(n_sym, n_sym);
  for (int a = 0; a < n_sub; ++a)
    for (int b = 0; b < n_sub; ++b)
      idft(a, b) = std::polar(1.0 / std::sqrt(static_cast<double>(n_sub)),
                              2.0 * kPi * a * b / static_cast<double>(n_sub));
  for (int a = 0; a < n_sym; ++a)
    for (int b = 0; b < n_sym; ++b)
      dft(a, b) = std::polar(1.0 / std::sqrt(static_cast<double>(n_sym)),
                             -2.0 * kPi * a * b / static_cast<double>(n_sym));
  RdImage image;
  image.values = idft * matched * dft;
  return image;
}

/// Rectangular search window in signed bins; defaults to the whole image.
struct SearchWindow {
  int min_delay_bin = 0, max_delay_bin = -1;      // max < min means "all"
  int min_doppler_bin = 0, max_doppler_bin = -1;  // signed Doppler bins
  bool whole() const { return max_delay_bin < min_delay_bin; }
};

namespace detail {

inline int wrap_index(int idx, int size) { return ((idx % size) + size) % size; }

/// Signed bin value of a raw FFT index.
inline int signed_bin(int idx, int size) { return idx < size / 2 ? idx : idx - size; }

/// Three-point parabolic interpolation on log magnitude; returns the
/// sub-bin offset clamped to [-0.5, 0.5].
inline double parabolic_offset(double prev_mag, double peak_mag, double next_mag) {
  constexpr double kFloor = 1e-300;
  const double a = std::log(std::max(prev_mag, kFloor));
  const double b = std::log(std::max(peak_mag, kFloor));
  const double c = std::log(std::max(next_mag, kFloor));
  const double denom = a - 2.0 * b + c;
  if (denom >= 0 || !std::isfinite(denom)) return 0.0;
  return std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
}

}  // namespace detail

/**
 * Sequential peak extraction with guard nulling: finds the largest
 * magnitude inside the window, refines each axis with parabolic
 * interpolation, zeroes the 3x3 neighbourhood (wrapped) and repeats.
 * Raw image indices are mapped to signed bins, then to range and velocity.
 */
inline std::vector<TargetEstimate> estimate_targets(const RdImage& image, const OfdmConfig& cfg,
                                                    int n_targets,
                                                    const SearchWindow& window = {}) {
  const int n_sub = image.delay_bins(), n_sym = image.doppler_bins();
  MatrixXd mag = image.values.cwiseAbs();
  std::vector<std::pair<int, int>> cells;
  for (int m = 0; m < n_sym; ++m)
    for (int n = 0; n < n_sub; ++n) {
      if (!window.whole()) {
        const int l = detail::signed_bin(n, n_sub);
        const int nu = detail::signed_bin(m, n_sym);
        if (l < window.min_delay_bin || l > window.max_delay_bin || nu < window.min_doppler_bin ||
            nu > window.max_doppler_bin)
          continue;
      }
      cells.emplace_back(n, m);
    }
  if (cells.empty()) throw config_error("estimate_targets: empty search window");

  std::vector<TargetEstimate> estimates;
  for (int found = 0; found < n_targets; ++found) {
    int best_n = -1, best_m = -1;
    double best = -1;
    for (const auto& [n, m] : cells)
      if (mag(n, m) > best) {
        best = mag(n, m);
        best_n = n;
        best_m = m;
      }
    if (best <= 0) break;
    const double dl = detail::parabolic_offset(
        mag(detail::wrap_index(best_n - 1, n_sub), best_m), best,
        mag(detail::wrap_index(best_n + 1, n_sub), best_m));
    const double dv = detail::parabolic_offset(
        mag(best_n, detail::wrap_index(best_m - 1, n_sym)), best,
        mag(best_n, detail::wrap_index(best_m + 1, n_sym)));
    const double l = detail::signed_bin(best_n, n_sub) + dl;
    const double nu = detail::signed_bin(best_m, n_sym) + dv;
    TargetEstimate est;
    est.range_m = l * kSpeedOfLight / (2.0 * cfg.occupied_bandwidth_hz());
    est.velocity_mps = nu * cfg.wavelength_m() / (2.0 * n_sym * cfg.total_symbol_s());
    est.magnitude = best;
    estimates.push_back(est);
    for (int di = -1; di <= 1; ++di)
      for (int dj = -1; dj <= 1; ++dj)
        mag(detail::wrap_index(best_n + di, n_sub), detail::wrap_index(best_m + dj, n_sym)) = 0;
  }
  return estimates;
}

/// Kahan-compensated accumulator so trial aggregation is order-independent
/// up to the compensation bound.
class KahanSum {
 public:
  void add(double value) {
    const double y = value - compensation_;
    const double t = sum_ + y;
    compensation_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const { return sum_; }

 private:
  double sum_ = 0;
  double compensation_ = 0;
};

struct RmsePoint {
  double sweep_value = 0;
  double range_rmse_m = 0;
  double velocity_rmse_mps = 0;
  int trials = 0;
};

enum class SweepVariable { kSensingSnrDb, kRcsDbsm };

struct MonteCarloOptions {
  SweepVariable variable = SweepVariable::kSensingSnrDb;
  std::vector<double> values;
  int trials = 100;
  int weak_target = -1;  // index whose RCS the kRcsDbsm sweep replaces
  SearchWindow window;
};

/**
 * Monte-Carlo RMSE of range/velocity estimation.
 *
 * kSensingSnrDb: the sweep value is the received sensing SNR of the first
 * target; noise power is derived from it through the radar equation.
 * kRcsDbsm: the sweep value replaces the RCS (or Swerling mean) of
 * `weak_target`; noise stays at the configured level.
 *
 * Estimates are matched to ground truth by nearest range-velocity pairing
 * (all permutations; target counts are small). Per-trial randomness comes
 * from forked, order-independent streams.
 */
inline std::vector<RmsePoint> monte_carlo_rmse(const ResourceState& alloc,
                                               const ProbeMatrix& probe, TargetScene scene,
                                               const OfdmConfig& cfg,
                                               const MonteCarloOptions& options, Rng& rng) {
  if (options.trials < 1) throw config_error("monte_carlo_rmse: need at least one trial");
  scene.validate(cfg);
  std::vector<RmsePoint> result;
  const int n_targets = static_cast<int>(scene.targets.size());
  const VectorXd u = alloc.sensing_vec();
  const double active_res = u.sum();
  const double sensing_power = u.dot(alloc.power_vec());

  for (size_t point = 0; point < options.values.size(); ++point) {
    const double value = options.values[point];
    TargetScene trial_scene = scene;
    double sigma2 = cfg.noise_power_w();
    if (options.variable == SweepVariable::kSensingSnrDb) {
      const Target& ref = trial_scene.targets.front();
      const double lambda = cfg.wavelength_m();
      const double echo_power = ref.rcs_m2 * lambda * lambda /
                                (std::pow(4.0 * kPi, 3) * std::pow(ref.range_m, 4));
      sigma2 = echo_power * sensing_power / (active_res * std::pow(10.0, value / 10.0));
    } else {
      const int idx = options.weak_target >= 0 ? options.weak_target : n_targets - 1;
      trial_scene.targets.at(static_cast<size_t>(idx)).rcs_m2 = std::pow(10.0, value / 10.0);
    }

    KahanSum range_sq, velocity_sq;
    for (int trial = 0; trial < options.trials; ++trial) {
      Rng stream = rng.fork((point << 24) ^ static_cast<std::uint64_t>(trial));
      const MatrixXcd received = echo(alloc, probe, trial_scene, cfg, sigma2, stream);
      const RdImage image = rd_image(received, probe);
      const auto estimates = estimate_targets(image, cfg, n_targets, options.window);
      // Best assignment of estimates to truth over all permutations.
      std::vector<int> order(estimates.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      std::vector<int> best_order = order;
      double best_cost = std::numeric_limits<double>::infinity();
      do {
        double cost = 0;
        for (size_t q = 0; q < order.size() && q < trial_scene.targets.size(); ++q) {
          const auto& truth = trial_scene.targets[q];
          const auto& est = estimates[static_cast<size_t>(order[q])];
          const double dr = (est.range_m - truth.range_m) / (kSpeedOfLight / (2.0 * cfg.occupied_bandwidth_hz()));
          const double dv = (est.velocity_mps - truth.velocity_mps) /
                            (cfg.wavelength_m() / (2.0 * cfg.symbols * cfg.total_symbol_s()));
          cost += dr * dr + dv * dv;
        }
        if (cost < best_cost) {
          best_cost = cost;
          best_order = order;
        }
      } while (std::next_permutation(order.begin(), order.end()));
      for (size_t q = 0; q < trial_scene.targets.size(); ++q) {
        const auto& truth = trial_scene.targets[q];
        if (q < best_order.size()) {
          const auto& est = estimates[static_cast<size_t>(best_order[q])];
          range_sq.add(std::pow(est.range_m - truth.range_m, 2));
          velocity_sq.add(std::pow(est.velocity_mps - truth.velocity_mps, 2));
        } else {
          // Missed target counts with the full window span as error.
          range_sq.add(std::pow(cfg.subcarriers * kSpeedOfLight /
                                    (2.0 * cfg.occupied_bandwidth_hz()),
                                2));
          velocity_sq.add(std::pow(cfg.wavelength_m() / (2.0 * cfg.total_symbol_s()), 2));
        }
      }
    }
    const double samples = static_cast<double>(options.trials) * n_targets;
    RmsePoint row;
    row.sweep_value = value;
    row.range_rmse_m = std::sqrt(range_sq.value() / samples);
    row.velocity_rmse_mps = std::sqrt(velocity_sq.value() / samples);
    row.trials = options.trials;
    result.push_back(row);
  }
  return result;
}

}  // namespace isac

#endif  // ISAC_SIM_HPP
