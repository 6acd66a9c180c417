#include <catch2/catch_amalgamated.hpp>

#include "isac/grid.hpp"
#include "isac/metrics.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace isac;

namespace {

ResourceState full_grid_state(const OfdmConfig& cfg, double power = 1.0) {
  ResourceState state(cfg.subcarriers, cfg.symbols, 0);
  state.sensing().setOnes();
  state.power.setConstant(power);
  return state;
}

}  // namespace

TEST_CASE("ambiguity at the origin and for a single RE") {
  auto cfg = test::desk_config(16, 8);
  auto state = full_grid_state(cfg);
  CHECK(std::abs(ambiguity(state, cfg, 0.0, 0.0) - Complex(1.0, 0.0)) < 1e-12);

  ResourceState single(cfg.subcarriers, cfg.symbols, 0);
  single.sensing()(3, 2) = 1.0;
  single.power(3, 2) = 0.7;
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    const double tau = rng.uniform(-1.0, 1.0) * cfg.cp_duration_s;
    const double fd = rng.uniform(-1.0, 1.0) * 0.05 * cfg.subcarrier_spacing_hz;
    CHECK(std::abs(ambiguity(single, cfg, tau, fd)) ==
          Catch::Approx(0.7 / cfg.resource_elements()).epsilon(1e-12));
  }
}

TEST_CASE("ambiguity matches the time-domain correlation oracle") {
  auto cfg = test::desk_config(16, 8);
  const auto probe = make_probe(cfg);
  Rng rng(2024);
  double worst = 0;
  for (int trial = 0; trial < 6; ++trial) {
    auto state = test::random_boolean_state(cfg, 0.5, rng);
    for (int m = 0; m < cfg.symbols; ++m)
      for (int n = 0; n < cfg.subcarriers; ++n) state.power(n, m) = rng.uniform(0.5, 1.5);
    test::TimeDomainAf oracle(state, probe, cfg, 32 * cfg.subcarriers);
    const double peak = std::abs(oracle.eval(0.0, 0.0));
    for (double tau_frac : {0.0, 0.3, 0.6, 1.0}) {
      for (double fd_frac : {-0.05, 0.0, 0.02, 0.05}) {
        const double tau = oracle.snap_tau(tau_frac * cfg.cp_duration_s);
        const double fd = fd_frac * cfg.subcarrier_spacing_hz;
        const double reference = std::abs(oracle.eval(tau, fd));
        const double closed = std::abs(ambiguity(state, cfg, tau, fd));
        // Relative error, with the denominator floored at -10 dB of the
        // mainlobe: below that the closed form's neglected inter-carrier
        // terms (an O(fd*T) fraction of the peak) dominate any local value.
        const double rel = std::abs(closed - reference) / std::max(reference, 0.3 * peak);
        worst = std::max(worst, rel);
      }
    }
  }
  CHECK(worst < 0.05);
}

TEST_CASE("spec point check: tau=0.3 bin, fd=0.2 bin vs oracle") {
  auto cfg = test::desk_config(16, 8);
  const auto probe = make_probe(cfg);
  Rng rng(7);
  auto state = test::random_boolean_state(cfg, 0.6, rng);
  test::TimeDomainAf oracle(state, probe, cfg, 32 * cfg.subcarriers);
  const double tau = oracle.snap_tau(0.3 * cfg.delay_bin_s());
  const double fd = 0.2 * cfg.doppler_bin_hz();
  REQUIRE(std::abs(fd) <= 0.05 * cfg.subcarrier_spacing_hz);
  const double reference = std::abs(oracle.eval(tau, fd));
  const double closed = std::abs(ambiguity(state, cfg, tau, fd));
  CHECK(std::abs(closed - reference) <= 0.05 * reference);
}

TEST_CASE("sampled AF: orthogonality, symmetry, brute force") {
  auto cfg = test::desk_config(8, 4);
  const SidelobeRegion region{3, 2};
  region.validate(cfg);

  // Full grid with uniform power: every nonzero bin vanishes.
  auto state = full_grid_state(cfg, 0.37);
  const auto grid = ambiguity_grid(state, region);
  for (const auto& [l, nu] : region.all_bins())
    CHECK(std::abs(grid(l + 3, nu + 2)) < 1e-12);
  CHECK(std::abs(grid(3, 2) - Complex(0.37, 0.0)) < 1e-12);

  // Conjugate symmetry and brute-force agreement on random states.
  Rng rng(31);
  for (int trial = 0; trial < 8; ++trial) {
    auto random_state = test::random_boolean_state(cfg, 0.45, rng);
    const auto g = ambiguity_grid(random_state, region);
    for (const auto& [l, nu] : region.all_bins()) {
      const Complex direct = test::brute_force_af_bin(random_state, l, nu);
      CHECK(std::abs(g(l + 3, nu + 2) - direct) < 1e-12);
      CHECK(std::abs(g(l + 3, nu + 2) - std::conj(g(-l + 3, -nu + 2))) < 1e-12);
    }
  }
}

TEST_CASE("peak sidelobe level") {
  auto cfg = test::desk_config(16, 8);
  const SidelobeRegion region{4, 2};

  CHECK(peak_sidelobe(full_grid_state(cfg), region) < 1e-12);

  ResourceState single(cfg.subcarriers, cfg.symbols, 0);
  single.sensing()(5, 3) = 1.0;
  single.power(5, 3) = 0.8;
  CHECK(peak_sidelobe(single, region) ==
        Catch::Approx(0.8 / cfg.resource_elements()).epsilon(1e-12));

  Rng rng(17);
  auto state = test::random_boolean_state(cfg, 0.5, rng);
  double exhaustive = 0;
  for (const auto& [l, nu] : region.all_bins())
    exhaustive = std::max(exhaustive, std::abs(test::brute_force_af_bin(state, l, nu)));
  CHECK(region.all_bins().size() == 44);
  CHECK(peak_sidelobe(state, region) == Catch::Approx(exhaustive).epsilon(1e-12));
}

TEST_CASE("constrained bin list uses conjugate symmetry") {
  const SidelobeRegion region{4, 2};
  const auto half = region.constrained_bins();
  CHECK(half.size() == 22);
  for (const auto& [l, nu] : half) CHECK((l > 0 || (l == 0 && nu > 0)));
}

TEST_CASE("delay resolution: closed form vs numeric width") {
  auto cfg = test::desk_config(32, 8);
  auto state = full_grid_state(cfg);
  const auto report = delay_resolution(state, cfg);
  const double numeric = mainlobe_width_3db(state, cfg, ScanAxis::kDelay);
  CHECK(std::abs(report.delay_resolution_s - numeric) < 0.10 * numeric);
  // Full rectangular aperture is slightly better than one bin.
  CHECK(report.delay_deviation_s < 0.0);
}

TEST_CASE("TDM keeps the full-grid delay deviation exactly") {
  auto cfg = test::desk_config(16, 8);
  Rng rng(3);
  const auto full = delay_resolution(full_grid_state(cfg), cfg);
  const auto tdm_state = baseline_allocation(cfg, BaselineKind::kTdm, 0, 0.5, rng);
  const auto tdm = delay_resolution(tdm_state, cfg);
  CHECK(tdm.delay_deviation_s == Catch::Approx(full.delay_deviation_s).epsilon(1e-12));
}

TEST_CASE("FDM with half the subcarriers degrades delay resolution") {
  auto cfg = test::desk_config(16, 8);
  Rng rng(3);
  const auto fdm_state = baseline_allocation(cfg, BaselineKind::kFdm, 0, 0.5, rng);
  const auto report = delay_resolution(fdm_state, cfg);
  CHECK(report.delay_deviation_s > 0.0);
  const double numeric = mainlobe_width_3db(fdm_state, cfg, ScanAxis::kDelay);
  CHECK(std::abs(report.delay_resolution_s - numeric) < 0.10 * numeric);
}

TEST_CASE("Doppler resolution mirrors the delay results") {
  auto cfg = test::desk_config(8, 32);
  auto state = full_grid_state(cfg);
  const auto report = doppler_resolution(state, cfg);
  const double numeric = mainlobe_width_3db(state, cfg, ScanAxis::kDoppler);
  CHECK(std::abs(report.doppler_resolution_hz - numeric) < 0.10 * numeric);

  Rng rng(4);
  auto cfg2 = test::desk_config(16, 8);
  const auto fdm = baseline_allocation(cfg2, BaselineKind::kFdm, 0, 0.5, rng);
  const auto full = doppler_resolution(full_grid_state(cfg2), cfg2);
  CHECK(doppler_resolution(fdm, cfg2).doppler_deviation_hz ==
        Catch::Approx(full.doppler_deviation_hz).epsilon(1e-12));

  const auto tdm = baseline_allocation(cfg2, BaselineKind::kTdm, 0, 0.5, rng);
  CHECK(doppler_resolution(tdm, cfg2).doppler_deviation_hz > 0.0);
}

TEST_CASE("resolution identities hold exactly") {
  auto cfg = test::desk_config(16, 8);
  Rng rng(11);
  auto state = test::random_relaxed_state(cfg, rng, 0.1, 1.0);
  const auto report = resolution_report(state, cfg);
  CHECK(report.delay_resolution_s ==
        Catch::Approx(cfg.delay_bin_s() + 2 * report.delay_deviation_s).epsilon(1e-15));
  CHECK(report.doppler_resolution_hz ==
        Catch::Approx(cfg.doppler_bin_hz() + 2 * report.doppler_deviation_hz).epsilon(1e-15));
  CHECK(report.delay_baseline_s == Catch::Approx(0.5 * cfg.delay_bin_s()));
  CHECK(report.doppler_baseline_hz == Catch::Approx(0.5 * cfg.doppler_bin_hz()));
}

TEST_CASE("degenerate resolution inputs raise") {
  auto cfg = test::desk_config(8, 4);
  ResourceState zero(cfg.subcarriers, cfg.symbols, 0);
  CHECK_THROWS_AS(delay_resolution(zero, cfg), degenerate_error);

  // A single active RE has an identically flat AF: the coupling form is 0.
  ResourceState single(cfg.subcarriers, cfg.symbols, 0);
  single.sensing()(2, 1) = 1.0;
  single.power.setOnes();
  CHECK_THROWS_AS(delay_resolution(single, cfg), degenerate_error);
  CHECK_THROWS_AS(mainlobe_width_3db(single, cfg, ScanAxis::kDelay), numeric_error);
}

TEST_CASE("coupling form signs over 1000 random states") {
  auto cfg = test::desk_config(8, 4);
  Rng rng(123);
  for (int trial = 0; trial < 1000; ++trial) {
    const VectorXd u = VectorXd::NullaryExpr(32, [&](Eigen::Index) { return rng.uniform(); });
    const VectorXd p =
        VectorXd::NullaryExpr(32, [&](Eigen::Index) { return rng.uniform(0.01, 1.0); });
    REQUIRE(delay_form_value(u, p, cfg.subcarriers) > 0.0);
    REQUIRE(doppler_form_value(u, p, cfg.subcarriers, cfg.symbols) < 0.0);
  }
}

TEST_CASE("coupling matrices: traces, splits, identities") {
  auto cfg = test::desk_config(8, 4);
  Rng rng(55);
  auto state = test::random_relaxed_state(cfg, rng, 0.05, 1.0);
  const auto coupling = coupling_matrices(state, cfg);

  CHECK(std::abs(coupling.delay_kernel.trace()) < 1e-10);
  CHECK(std::abs(coupling.doppler_kernel.trace()) < 1e-10);

  const auto check_split = [](const MatrixXcd& kernel, const MatrixXcd& pos,
                              const MatrixXcd& neg) {
    CHECK((kernel - (pos - neg)).norm() <= 1e-9 * kernel.norm());
    Eigen::SelfAdjointEigenSolver<MatrixXcd> ep(pos), en(neg);
    CHECK(ep.eigenvalues().minCoeff() >= -1e-9);
    CHECK(en.eigenvalues().minCoeff() >= -1e-9);
  };
  check_split(coupling.delay_kernel, coupling.delay_kernel_pos, coupling.delay_kernel_neg);
  check_split(coupling.doppler_kernel, coupling.doppler_kernel_pos, coupling.doppler_kernel_neg);

  // u' B u computed three ways: dense weighted form, power-scaled kernel,
  // and the O(MN) evaluation.
  const VectorXd u = state.sensing_vec();
  const VectorXd p = state.power_vec();
  const double via_form = u.dot(coupling.delay_form * u);
  const VectorXd pu = p.cwiseProduct(u);
  const double via_kernel = pu.dot((coupling.delay_kernel * pu).real());
  const double via_fast = delay_form_value(u, p, cfg.subcarriers);
  CHECK(via_form == Catch::Approx(via_fast).epsilon(1e-9));
  CHECK(via_kernel == Catch::Approx(via_fast).epsilon(1e-9));
  CHECK(via_fast > 0.0);

  const double dvia_form = u.dot(coupling.doppler_form * u);
  const double dvia_kernel = pu.dot((coupling.doppler_kernel * pu).real());
  const double dvia_fast = doppler_form_value(u, p, cfg.subcarriers, cfg.symbols);
  CHECK(dvia_form == Catch::Approx(dvia_fast).epsilon(1e-9));
  CHECK(dvia_kernel == Catch::Approx(dvia_fast).epsilon(1e-9));
  CHECK(dvia_fast < 0.0);
}

TEST_CASE("sensing SNR substitution and linearity") {
  OfdmConfig cfg = test::desk_config(4, 4);
  cfg.noise_psd_w_hz = 1.0 / cfg.subcarrier_spacing_hz;  // sigma^2 = 1
  // Choose RCS so the averaged echo gain is exactly 1.
  const double r0 = 1.0;
  const double rcs = cfg.wavelength_m() * cfg.wavelength_m() / std::pow(4.0 * kPi, 3);
  CHECK(average_echo_gain(cfg, r0, rcs) == Catch::Approx(1.0));

  ResourceState state(4, 4, 0);
  state.sensing()(0, 0) = state.sensing()(1, 1) = state.sensing()(2, 2) = state.sensing()(3, 3) =
      1.0;
  state.power.setZero();
  for (int i = 0; i < 4; ++i) state.power(i, i) = 2.0;
  CHECK(sensing_snr(state, r0, rcs, cfg) == Catch::Approx(2.0));

  state.power *= 2.0;
  CHECK(sensing_snr(state, r0, rcs, cfg) == Catch::Approx(4.0));

  ResourceState empty(4, 4, 0);
  CHECK_THROWS_AS(sensing_snr(empty, r0, rcs, cfg), degenerate_error);
}

TEST_CASE("echo gain constant matches an independent calculator") {
  OfdmConfig cfg;
  cfg.subcarriers = 256;
  cfg.symbols = 128;
  cfg.subcarrier_spacing_hz = 120e3;
  cfg.carrier_frequency_hz = 28e9;
  cfg.cp_duration_s = 1e-6;
  cfg.noise_psd_w_hz = 1e-18;
  const double r0 = 24.0 * kSpeedOfLight / (2.0 * 256.0 * 120e3);
  CHECK(r0 == Catch::Approx(117.10642890625));
  const double gain = average_echo_gain(cfg, r0, std::pow(10.0, 0.5));
  CHECK(gain == Catch::Approx(9.713434157133503e-17).epsilon(1e-12));
}

TEST_CASE("sum rate: closed cases and triple-loop reference") {
  OfdmConfig cfg = test::desk_config(8, 4);
  cfg.noise_psd_w_hz = 1.0 / cfg.subcarrier_spacing_hz;  // sigma^2 = 1

  ResourceState state(8, 4, 1);
  state.user(1).setOnes();
  state.power.setOnes();
  std::vector<MatrixXcd> channels{MatrixXcd::Ones(8, 4)};
  CHECK(sum_rate(state, channels, cfg) == Catch::Approx(1.0));

  state.user(1).setZero();
  CHECK(sum_rate(state, channels, cfg) == 0.0);

  // Random fractional state against a scalar triple loop.
  Rng rng(77);
  ResourceState frac(8, 4, 2);
  frac.relaxed = true;
  std::vector<MatrixXcd> h2(2, MatrixXcd::Zero(8, 4));
  for (int m = 0; m < 4; ++m)
    for (int n = 0; n < 8; ++n) {
      frac.power(n, m) = rng.uniform(0.0, 2.0);
      frac.user(1)(n, m) = rng.uniform(0.0, 0.5);
      frac.user(2)(n, m) = rng.uniform(0.0, 0.5);
      h2[0](n, m) = rng.complex_normal();
      h2[1](n, m) = rng.complex_normal();
    }
  double reference = 0;
  for (int k = 1; k <= 2; ++k)
    for (int m = 0; m < 4; ++m)
      for (int n = 0; n < 8; ++n)
        reference += std::log2(1.0 + std::norm(h2[static_cast<size_t>(k - 1)](n, m)) *
                                         frac.power(n, m) * frac.user(k)(n, m));
  reference /= 32.0;
  CHECK(sum_rate(frac, h2, cfg) == Catch::Approx(reference).epsilon(1e-12));
}

TEST_CASE("sum rate is monotone and concave along random directions") {
  OfdmConfig cfg = test::desk_config(4, 4);
  cfg.noise_psd_w_hz = 1.0 / cfg.subcarrier_spacing_hz;
  Rng rng(99);
  ResourceState state(4, 4, 1);
  state.relaxed = true;
  std::vector<MatrixXcd> channels(1, MatrixXcd::Zero(4, 4));
  for (int m = 0; m < 4; ++m)
    for (int n = 0; n < 4; ++n) {
      state.power(n, m) = rng.uniform(0.1, 1.0);
      state.user(1)(n, m) = rng.uniform(0.1, 0.9);
      channels[0](n, m) = rng.complex_normal();
    }
  const double base = sum_rate(state, channels, cfg);
  for (int trial = 0; trial < 30; ++trial) {
    auto bumped = state;
    const int n = static_cast<int>(rng.bounded(4)), m = static_cast<int>(rng.bounded(4));
    if (trial % 2 == 0)
      bumped.power(n, m) += 0.25;
    else
      bumped.user(1)(n, m) = std::min(1.0, bumped.user(1)(n, m) + 0.05);
    const double up = sum_rate(bumped, channels, cfg);
    CHECK(up >= base - 1e-12);
    // Midpoint concavity along the bump direction.
    auto mid = state;
    mid.power = 0.5 * (state.power + bumped.power);
    mid.user(1) = 0.5 * (state.user(1) + bumped.user(1));
    CHECK(sum_rate(mid, channels, cfg) >= 0.5 * (base + up) - 1e-12);
  }
}

TEST_CASE("full-grid AF peaks at the origin") {
  auto cfg = test::desk_config(16, 8);
  auto state = full_grid_state(cfg);
  const double peak = std::abs(ambiguity(state, cfg, 0.0, 0.0));
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    const double tau = rng.uniform(-1.0, 1.0) * cfg.cp_duration_s;
    const double fd = rng.uniform(-1.0, 1.0) * 0.05 * cfg.subcarrier_spacing_hz;
    CHECK(std::abs(ambiguity(state, cfg, tau, fd)) <= peak + 1e-12);
  }
}
