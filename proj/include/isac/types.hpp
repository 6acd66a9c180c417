#ifndef ISAC_TYPES_HPP
#define ISAC_TYPES_HPP

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace isac {

using Complex = std::complex<double>;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s
inline constexpr double kPi = 3.14159265358979323846;

/// Invalid waveform or experiment configuration.
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input is structurally valid but numerically degenerate for the
/// requested operation (e.g. an all-zero selection grid).
class degenerate_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical routine failed to converge or produced a non-finite result.
class numeric_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A constraint system has no feasible point.
class infeasible_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/**
 * OFDM numerology. Primary fields are stored; every derived quantity is
 * computed on demand so it can never drift out of sync.
 *
 * The frame has `subcarriers` rows and `symbols` columns; the (n, m)-th
 * resource element (RE) is subcarrier n of symbol m.
 */
struct OfdmConfig {
  int subcarriers = 0;               // N
  int symbols = 0;                   // M
  double subcarrier_spacing_hz = 0;  // spacing between adjacent subcarriers
  double carrier_frequency_hz = 0;
  double cp_duration_s = 0;          // cyclic prefix length
  double noise_psd_w_hz = 0;         // one-sided noise PSD at the receiver

  /// Useful symbol period (inverse subcarrier spacing).
  double symbol_period_s() const { return 1.0 / subcarrier_spacing_hz; }
  /// Total symbol duration including the cyclic prefix.
  double total_symbol_s() const { return symbol_period_s() + cp_duration_s; }
  double wavelength_m() const { return kSpeedOfLight / carrier_frequency_hz; }
  /// Noise power per resource element.
  double noise_power_w() const { return noise_psd_w_hz * subcarrier_spacing_hz; }
  int resource_elements() const { return subcarriers * symbols; }
  double occupied_bandwidth_hz() const { return subcarriers * subcarrier_spacing_hz; }
  /// Delay-bin and Doppler-bin sizes of the sampled ambiguity function.
  double delay_bin_s() const { return 1.0 / occupied_bandwidth_hz(); }
  double doppler_bin_hz() const { return 1.0 / (symbols * total_symbol_s()); }

  void validate() const {
    if (subcarriers < 2) throw config_error("OfdmConfig: need at least 2 subcarriers");
    if (symbols < 2) throw config_error("OfdmConfig: need at least 2 symbols");
    if (!(subcarrier_spacing_hz > 0)) throw config_error("OfdmConfig: subcarrier spacing must be positive");
    if (!(carrier_frequency_hz > 0)) throw config_error("OfdmConfig: carrier frequency must be positive");
    if (cp_duration_s < 0 || cp_duration_s >= symbol_period_s())
      throw config_error("OfdmConfig: CP duration must lie in [0, T)");
    if (noise_psd_w_hz < 0) throw config_error("OfdmConfig: noise PSD must be nonnegative");
  }
};

/**
 * Joint selection/power state over the RE grid.
 *
 * `selection[0]` is the sensing indicator grid, `selection[k]` (k >= 1) the
 * grid of user k. Entries live in [0, 1]; when `relaxed` is false they are
 * Boolean. `power` holds the per-RE transmit power in watts.
 *
 * All vectorised views use column-major order (subcarriers stacked within a
 * symbol), which every module in this library shares.
 */
struct ResourceState {
  std::vector<MatrixXd> selection;  // size K+1, each N x M
  MatrixXd power;                   // N x M, nonnegative
  bool relaxed = false;

  ResourceState() = default;
  ResourceState(int subcarriers, int symbols, int users)
      : power(MatrixXd::Zero(subcarriers, symbols)) {
    selection.assign(users + 1, MatrixXd::Zero(subcarriers, symbols));
  }

  int subcarriers() const { return static_cast<int>(power.rows()); }
  int symbols() const { return static_cast<int>(power.cols()); }
  int users() const { return static_cast<int>(selection.size()) - 1; }
  int resource_elements() const { return subcarriers() * symbols(); }

  MatrixXd& sensing() { return selection.front(); }
  const MatrixXd& sensing() const { return selection.front(); }
  MatrixXd& user(int k) { return selection.at(static_cast<size_t>(k)); }
  const MatrixXd& user(int k) const { return selection.at(static_cast<size_t>(k)); }

  /// Column-major flattening of an N x M grid (the shared vec convention).
  static VectorXd vec(const MatrixXd& grid) {
    return Eigen::Map<const VectorXd>(grid.data(), grid.size());
  }
  VectorXd sensing_vec() const { return vec(sensing()); }
  VectorXd power_vec() const { return vec(power); }

  double sensing_re_count() const { return sensing().sum(); }
  double sensing_occupancy() const { return sensing_re_count() / resource_elements(); }
};

/// Violation record produced by `validate`.
struct Violation {
  enum class Kind { kExclusivity, kNegativePower, kPowerBudget, kNotBoolean };
  Kind kind;
  int subcarrier = -1;  // -1 when the violation is not cell-local
  int symbol = -1;
  double magnitude = 0;  // how far past the bound
  std::string describe() const;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

inline std::string Violation::describe() const {
  std::string where = (subcarrier >= 0)
                          ? " at RE (" + std::to_string(subcarrier) + "," + std::to_string(symbol) + ")"
                          : "";
  switch (kind) {
    case Kind::kExclusivity:
      return "selection sum exceeds 1 by " + std::to_string(magnitude) + where;
    case Kind::kNegativePower:
      return "negative power " + std::to_string(-magnitude) + where;
    case Kind::kPowerBudget:
      return "power budget exceeded by " + std::to_string(magnitude) + " W";
    case Kind::kNotBoolean:
      return "non-Boolean selection entry" + where;
  }
  return "unknown violation";
}

/**
 * Radar probe symbols over the RE grid, unit modulus for Zadoff-Chu probes.
 * `warnings` collects non-fatal conventions issues found at build time
 * (even length, root not coprime with the length).
 */
struct ProbeMatrix {
  MatrixXcd symbols;       // N x M
  std::vector<int> roots;  // per-symbol root index (empty for non-ZC probes)
  std::vector<std::string> warnings;
};

}  // namespace isac

#endif  // ISAC_TYPES_HPP
