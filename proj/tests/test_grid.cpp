#include <catch2/catch_amalgamated.hpp>

#include "isac/grid.hpp"
#include "test_helpers.hpp"

using namespace isac;

TEST_CASE("zadoff_chu basic entries") {
  const auto seq = zadoff_chu(11, 3);
  // Zero exponent at n = 0 for any length/root.
  CHECK(seq(0).real() == Catch::Approx(1.0));
  CHECK(seq(0).imag() == Catch::Approx(0.0).margin(1e-15));

  // Length 2, root 1, n = 1: exp(-j*pi) = -1.
  const auto two = zadoff_chu(2, 1);
  CHECK(two(1).real() == Catch::Approx(-1.0));
  CHECK(std::abs(two(1).imag()) < 1e-12);

  CHECK_THROWS_AS(zadoff_chu(0, 1), config_error);
}

TEST_CASE("zadoff_chu unit modulus for many lengths and roots") {
  for (int length : {2, 3, 7, 8, 16, 63}) {
    for (int root : {1, 2, 3, 5}) {
      const auto seq = zadoff_chu(length, root);
      for (int n = 0; n < length; ++n) CHECK(std::abs(seq(n)) == Catch::Approx(1.0));
    }
  }
}

TEST_CASE("zadoff_chu ideal periodic autocorrelation, N=7 q=3") {
  const int length = 7;
  const auto seq = zadoff_chu(length, 3);
  for (int lag = 1; lag < length; ++lag) {
    Complex acc = 0;
    for (int n = 0; n < length; ++n) acc += seq(n) * std::conj(seq((n + lag) % length));
    CHECK(std::abs(acc) < 1e-12);
  }
}

TEST_CASE("probe warnings for even length and shared factors") {
  auto cfg = test::desk_config(16, 4);
  const auto probe = make_probe(cfg);
  REQUIRE_FALSE(probe.warnings.empty());  // even length

  auto odd = test::desk_config(15, 4);
  const auto clean = make_probe(odd, {1, 2, 4, 7});
  CHECK(clean.warnings.empty());
  const auto shared = make_probe(odd, {1, 3, 1, 1});  // gcd(3,15) != 1
  CHECK(shared.warnings.size() == 1);
}

TEST_CASE("QAM probe has unit average energy") {
  auto cfg = test::desk_config(16, 8);
  Rng rng(99);
  const auto probe = make_qam_probe(cfg, 10, rng);
  double energy = 0;
  for (int m = 0; m < cfg.symbols; ++m)
    for (int n = 0; n < cfg.subcarriers; ++n) energy += std::norm(probe.symbols(n, m));
  energy /= cfg.resource_elements();
  CHECK(energy == Catch::Approx(1.0).margin(0.1));
}

TEST_CASE("baseline radar-only and comm-only") {
  auto cfg = test::desk_config(8, 4);
  Rng rng(1);
  const auto radar = baseline_allocation(cfg, BaselineKind::kRadarOnly, 2, 0.5, rng);
  CHECK(radar.sensing().sum() == Catch::Approx(32.0));
  CHECK(radar.user(1).sum() == 0.0);
  CHECK(radar.user(2).sum() == 0.0);

  const auto comm = baseline_allocation(cfg, BaselineKind::kCommOnly, 2, 0.5, rng);
  CHECK(comm.sensing().sum() == 0.0);
  CHECK(comm.user(1).sum() + comm.user(2).sum() == Catch::Approx(32.0));
}

TEST_CASE("baseline TDM covers whole leading symbols") {
  auto cfg = test::desk_config(4, 4);
  Rng rng(1);
  const auto tdm = baseline_allocation(cfg, BaselineKind::kTdm, 1, 0.5, rng);
  for (int n = 0; n < 4; ++n) {
    CHECK(tdm.sensing()(n, 0) == 1.0);
    CHECK(tdm.sensing()(n, 1) == 1.0);
    CHECK(tdm.sensing()(n, 2) == 0.0);
    CHECK(tdm.sensing()(n, 3) == 0.0);
  }
}

TEST_CASE("baseline FDM covers whole leading subcarriers") {
  auto cfg = test::desk_config(4, 4);
  Rng rng(1);
  const auto fdm = baseline_allocation(cfg, BaselineKind::kFdm, 1, 0.25, rng);
  for (int m = 0; m < 4; ++m) {
    CHECK(fdm.sensing()(0, m) == 1.0);
    CHECK(fdm.sensing()(1, m) == 0.0);
  }
}

TEST_CASE("baseline random: exact count, reproducible, exclusive") {
  auto cfg = test::desk_config(8, 8);
  Rng rng_a(42), rng_b(42), rng_c(43);
  const auto a = baseline_allocation(cfg, BaselineKind::kRandom, 2, 0.25, rng_a);
  const auto b = baseline_allocation(cfg, BaselineKind::kRandom, 2, 0.25, rng_b);
  const auto c = baseline_allocation(cfg, BaselineKind::kRandom, 2, 0.25, rng_c);
  CHECK(a.sensing().sum() == Catch::Approx(16.0));
  CHECK((a.sensing() - b.sensing()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.sensing() - c.sensing()).cwiseAbs().maxCoeff() > 0.0);
  CHECK(validate(a, 1e9).ok());
}

TEST_CASE("baseline rounding is half-up on the RE count") {
  auto cfg = test::desk_config(5, 5);  // 25 REs
  Rng rng(7);
  // 0.5 * 25 = 12.5 -> 13 REs.
  const auto state = baseline_allocation(cfg, BaselineKind::kRandom, 0, 0.5, rng);
  CHECK(state.sensing().sum() == Catch::Approx(13.0));
}

TEST_CASE("every baseline kind satisfies the exclusivity invariant") {
  auto cfg = test::desk_config(8, 6);
  for (auto kind : {BaselineKind::kTdm, BaselineKind::kFdm, BaselineKind::kUniform,
                    BaselineKind::kRandom, BaselineKind::kRadarOnly, BaselineKind::kCommOnly}) {
    for (double fraction : {0.0, 0.3, 0.7, 1.0}) {
      Rng rng(11);
      const auto state = baseline_allocation(cfg, kind, 3, fraction, rng);
      CHECK(validate(state, 1e9).ok());
      int expected = static_cast<int>(std::floor(fraction * 48 + 0.5));
      if (kind == BaselineKind::kRadarOnly) expected = 48;
      if (kind == BaselineKind::kCommOnly) expected = 0;
      CHECK(state.sensing().sum() == Catch::Approx(expected));
      // Boolean entries everywhere.
      for (const auto& grid : state.selection)
        CHECK(((grid.array() == 0.0) || (grid.array() == 1.0)).all());
    }
  }
}

TEST_CASE("validate reports each violation kind") {
  auto cfg = test::desk_config(4, 4);
  ResourceState state(4, 4, 1);
  CHECK(validate(state, 1.0).ok());  // all-zero state is fine

  state.sensing()(1, 2) = 1.0;
  state.user(1)(1, 2) = 1.0;  // exclusivity broken at one RE
  auto report = validate(state, 1.0);
  REQUIRE(report.violations.size() == 1);
  CHECK(report.violations[0].kind == Violation::Kind::kExclusivity);
  CHECK(report.violations[0].subcarrier == 1);
  CHECK(report.violations[0].symbol == 2);

  state.user(1)(1, 2) = 0.0;
  state.power.setConstant(1.01 / 16.0);  // sums to 1.01 against budget 1
  report = validate(state, 1.0);
  REQUIRE(report.violations.size() == 1);
  CHECK(report.violations[0].kind == Violation::Kind::kPowerBudget);
  CHECK(report.violations[0].magnitude == Catch::Approx(0.01).margin(1e-9));

  state.power.setZero();
  state.power(0, 0) = -0.5;
  report = validate(state, 1.0);
  REQUIRE(report.violations.size() == 1);
  CHECK(report.violations[0].kind == Violation::Kind::kNegativePower);

  state.power.setZero();
  state.sensing()(1, 2) = 0.4;  // fractional but relaxed = false
  report = validate(state, 1.0);
  REQUIRE(report.violations.size() == 1);
  CHECK(report.violations[0].kind == Violation::Kind::kNotBoolean);
  state.relaxed = true;
  CHECK(validate(state, 1.0).ok());
}

TEST_CASE("OfdmConfig invariants") {
  auto cfg = test::desk_config(16, 8);
  cfg.validate();
  CHECK(cfg.symbol_period_s() == Catch::Approx(1.0 / 120e3));
  CHECK(cfg.total_symbol_s() == Catch::Approx(cfg.symbol_period_s() + cfg.cp_duration_s));
  CHECK(cfg.noise_power_w() == Catch::Approx(1e-18 * 120e3));
  CHECK(cfg.wavelength_m() == Catch::Approx(kSpeedOfLight / 28e9));

  auto bad = cfg;
  bad.subcarriers = 1;
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad = cfg;
  bad.cp_duration_s = cfg.symbol_period_s();
  CHECK_THROWS_AS(bad.validate(), config_error);
}
