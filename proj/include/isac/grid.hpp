#ifndef ISAC_GRID_HPP
#define ISAC_GRID_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "isac/rng.hpp"
#include "isac/types.hpp"

namespace isac {

/**
 * Zadoff-Chu sequence of length `length` with root `root`:
 * entry n is exp(-j*pi*root*n*(n+1)/length). Unit modulus for every entry;
 * the periodic autocorrelation is ideal when gcd(root, length) == 1 and the
 * length is odd.
 */
inline VectorXcd zadoff_chu(int length, int root) {
  if (length < 1) throw config_error("zadoff_chu: length must be >= 1");
  VectorXcd seq(length);
  for (int n = 0; n < length; ++n) {
    // n*(n+1) can exceed 2^31 for large lengths; keep the product in double.
    const double phase = -kPi * static_cast<double>(root) * static_cast<double>(n) *
                         (static_cast<double>(n) + 1.0) / static_cast<double>(length);
    seq(n) = std::polar(1.0, phase);
  }
  return seq;
}

/// True when the root gives the ideal periodic autocorrelation property.
inline bool zadoff_chu_is_ideal(int length, int root) {
  return length % 2 == 1 && std::gcd(std::abs(root), length) == 1;
}

/**
 * Zadoff-Chu probe grid with per-symbol roots. Pass an empty vector to use
 * root 1 on every symbol.
 */
inline ProbeMatrix make_probe(const OfdmConfig& cfg, std::vector<int> roots = {}) {
  cfg.validate();
  if (roots.empty()) roots.assign(static_cast<size_t>(cfg.symbols), 1);
  if (static_cast<int>(roots.size()) != cfg.symbols)
    throw config_error("make_probe: need one root per symbol");
  ProbeMatrix probe;
  probe.symbols.resize(cfg.subcarriers, cfg.symbols);
  probe.roots = roots;
  if (cfg.subcarriers % 2 == 0)
    probe.warnings.push_back(
        "even sequence length: ideal ZC autocorrelation is only guaranteed for odd lengths");
  for (int m = 0; m < cfg.symbols; ++m) {
    if (std::gcd(std::abs(roots[static_cast<size_t>(m)]), cfg.subcarriers) != 1)
      probe.warnings.push_back("root " + std::to_string(roots[static_cast<size_t>(m)]) +
                               " shares a factor with the sequence length on symbol " +
                               std::to_string(m));
    probe.symbols.col(m) = zadoff_chu(cfg.subcarriers, roots[static_cast<size_t>(m)]);
  }
  return probe;
}

/**
 * Random square-QAM probe with unit average symbol energy, used to model a
 * communication-only signal being repurposed for sensing. `bits` is the
 * number of bits per symbol (10 -> 1024-QAM).
 */
inline ProbeMatrix make_qam_probe(const OfdmConfig& cfg, int bits, Rng& rng) {
  cfg.validate();
  if (bits < 2 || bits % 2 != 0) throw config_error("make_qam_probe: bits must be even and >= 2");
  const int side = 1 << (bits / 2);
  // Average energy of a square constellation with odd-integer coordinates.
  const double mean_energy = 2.0 * (static_cast<double>(side) * side - 1.0) / 3.0;
  const double scale = 1.0 / std::sqrt(mean_energy);
  ProbeMatrix probe;
  probe.symbols.resize(cfg.subcarriers, cfg.symbols);
  for (int m = 0; m < cfg.symbols; ++m)
    for (int n = 0; n < cfg.subcarriers; ++n) {
      const double re = 2.0 * static_cast<double>(rng.bounded(static_cast<std::uint64_t>(side))) -
                        (side - 1);
      const double im = 2.0 * static_cast<double>(rng.bounded(static_cast<std::uint64_t>(side))) -
                        (side - 1);
      probe.symbols(n, m) = Complex(re * scale, im * scale);
    }
  return probe;
}

enum class BaselineKind { kTdm, kFdm, kUniform, kRandom, kRadarOnly, kCommOnly };

inline const char* to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::kTdm: return "tdm";
    case BaselineKind::kFdm: return "fdm";
    case BaselineKind::kUniform: return "uniform";
    case BaselineKind::kRandom: return "random";
    case BaselineKind::kRadarOnly: return "radar-only";
    case BaselineKind::kCommOnly: return "comm-only";
  }
  return "?";
}

namespace detail {

// Sensing RE indices (column-major) for each fixed scheme.
inline std::vector<int> baseline_sensing_indices(const OfdmConfig& cfg, BaselineKind kind,
                                                 int count, Rng& rng) {
  const int n = cfg.subcarriers, m = cfg.symbols, total = n * m;
  std::vector<int> picks;
  picks.reserve(static_cast<size_t>(count));
  switch (kind) {
    case BaselineKind::kRadarOnly:
    case BaselineKind::kCommOnly:
    case BaselineKind::kTdm:
      // Contiguous symbols, filling the last one partially if needed.
      for (int i = 0; i < count; ++i) picks.push_back(i);
      break;
    case BaselineKind::kFdm:
      // Contiguous subcarriers across all symbols.
      for (int i = 0; i < count; ++i) {
        const int row = i / m, col = i % m;
        picks.push_back(col * n + row);
      }
      break;
    case BaselineKind::kUniform: {
      // 2D lattice with strides chosen to keep the row/column densities
      // proportional to the grid shape; pad in scan order to hit the count.
      const double frac = static_cast<double>(count) / total;
      int rows = std::clamp(static_cast<int>(std::lround(n * std::sqrt(frac))), 1, n);
      int cols = std::clamp((count + rows - 1) / rows, 1, m);
      rows = std::clamp((count + cols - 1) / cols, 1, n);
      std::vector<char> used(static_cast<size_t>(total), 0);
      for (int j = 0; j < cols && static_cast<int>(picks.size()) < count; ++j) {
        const int col = static_cast<int>(static_cast<long long>(j) * m / cols);
        for (int i = 0; i < rows && static_cast<int>(picks.size()) < count; ++i) {
          const int row = static_cast<int>(static_cast<long long>(i) * n / rows);
          const int idx = col * n + row;
          if (!used[static_cast<size_t>(idx)]) {
            used[static_cast<size_t>(idx)] = 1;
            picks.push_back(idx);
          }
        }
      }
      for (int idx = 0; idx < total && static_cast<int>(picks.size()) < count; ++idx)
        if (!used[static_cast<size_t>(idx)]) {
          used[static_cast<size_t>(idx)] = 1;
          picks.push_back(idx);
        }
      break;
    }
    case BaselineKind::kRandom: {
      std::vector<int> all(static_cast<size_t>(total));
      std::iota(all.begin(), all.end(), 0);
      rng.shuffle(all);
      picks.assign(all.begin(), all.begin() + count);
      break;
    }
  }
  return picks;
}

}  // namespace detail

/**
 * Boolean allocation following one of the fixed schemes. The sensing set
 * receives round(sensing_fraction * N * M) REs (everything for kRadarOnly,
 * nothing for kCommOnly); the remaining REs are dealt to the `users`
 * communication users round-robin in scan order. Power is initialised
 * uniformly to 1 W per RE; callers rescale against their budget.
 */
inline ResourceState baseline_allocation(const OfdmConfig& cfg, BaselineKind kind, int users,
                                         double sensing_fraction, Rng& rng) {
  cfg.validate();
  if (sensing_fraction < 0 || sensing_fraction > 1)
    throw config_error("baseline_allocation: sensing fraction must lie in [0, 1]");
  const int total = cfg.resource_elements();
  int count = static_cast<int>(std::floor(sensing_fraction * total + 0.5));
  if (kind == BaselineKind::kRadarOnly) count = total;
  if (kind == BaselineKind::kCommOnly) count = 0;

  ResourceState state(cfg.subcarriers, cfg.symbols, users);
  state.relaxed = false;
  state.power.setOnes();

  auto picks = detail::baseline_sensing_indices(cfg, kind, count, rng);
  std::vector<char> is_sensing(static_cast<size_t>(total), 0);
  for (int idx : picks) {
    is_sensing[static_cast<size_t>(idx)] = 1;
    state.sensing().data()[idx] = 1.0;
  }
  if (users > 0) {
    int turn = 0;
    for (int idx = 0; idx < total; ++idx) {
      if (is_sensing[static_cast<size_t>(idx)]) continue;
      state.user(1 + turn % users).data()[idx] = 1.0;
      ++turn;
    }
  }
  return state;
}

/**
 * Checks the selection-exclusivity, power-nonnegativity, power-budget and
 * Booleanness invariants and reports every violated cell instead of
 * throwing.
 */
inline ValidationReport validate(const ResourceState& state, double power_budget_w) {
  ValidationReport report;
  const int n = state.subcarriers(), m = state.symbols();
  constexpr double kTol = 1e-9;
  for (int col = 0; col < m; ++col)
    for (int row = 0; row < n; ++row) {
      double sum = 0;
      bool boolean = true;
      for (const auto& grid : state.selection) {
        const double v = grid(row, col);
        sum += v;
        if (std::abs(v) > kTol && std::abs(v - 1.0) > kTol) boolean = false;
      }
      if (sum > 1.0 + kTol)
        report.violations.push_back({Violation::Kind::kExclusivity, row, col, sum - 1.0});
      if (!state.relaxed && !boolean)
        report.violations.push_back({Violation::Kind::kNotBoolean, row, col, 0.0});
      if (state.power(row, col) < -kTol)
        report.violations.push_back(
            {Violation::Kind::kNegativePower, row, col, -state.power(row, col)});
    }
  const double total = state.power.sum();
  if (total > power_budget_w * (1.0 + kTol) + kTol)
    report.violations.push_back({Violation::Kind::kPowerBudget, -1, -1, total - power_budget_w});
  return report;
}

}  // namespace isac

#endif  // ISAC_GRID_HPP
