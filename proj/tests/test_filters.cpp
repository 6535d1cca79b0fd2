#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "pf/csv.hpp"
#include "pf/errors.hpp"
#include "pf/experiments.hpp"
#include "pf/filters.hpp"

using namespace pf;

namespace {

TrajectoryResult single_mode_run(Scheme scheme, std::uint64_t seed, double T, double dt,
                                 int stride = 1) {
  static const SingleModeSetup setup = build_single_mode({});
  static const ObservableSet obs = single_mode_observables(setup);
  TrajectoryOptions opt;
  opt.observables = &obs;
  opt.sample_stride = stride;
  opt.audit = true;
  opt.eigenvalues_every_step = true;
  NoiseSource noise(seed, 0);
  return simulate_trajectory(setup.model, setup.pulse, scheme, setup.h0, T, dt, noise, opt);
}

}  // namespace

TEST_SUITE("filters") {
  TEST_CASE("rates of the initial state") {
    const SingleModeSetup s = build_single_mode({});
    const cplx xi = s.pulse.xi(0.0);
    CHECK(k_rate(s.h0, s.model.L(), xi) == doctest::Approx(0.0));
    CHECK(nu_rate(s.h0, s.model.L(), xi) == doctest::Approx(std::norm(xi)));
  }

  TEST_CASE("a detection collapses the empty cavity back to vacuum") {
    const SingleModeSetup s = build_single_mode({});
    FilterStepper stepper(s.model, s.pulse);
    Hierarchy h = s.h0;
    for (int k = 0; k < 800; ++k) REQUIRE_FALSE(stepper.photodetect(h, 1e-3, 0.999999).jumped);
    CHECK(expectation(h.r11, s.n).real() > 0.3);
    const PhotodetectOutcome out = stepper.photodetect(h, 1e-3, 0.0);
    CHECK(out.jumped);
    CHECK(expectation(h.r11, s.n).real() < 1e-12);
    CHECK(std::abs(h.r11.trace() - 1.0) < 1e-12);
    CHECK(h.r00.norm() < 1e-12);
    CHECK(stepper.nu_rate(h) < 1e-12);
  }

  TEST_CASE("no-detection steps keep the trace with O(dt^2) drift before renormalization") {
    const SingleModeSetup s = build_single_mode({});
    FilterStepper stepper(s.model, s.pulse);
    Hierarchy h = s.h0;
    const double dt = 1e-3;
    for (int k = 0; k < 5000; ++k) {
      const PhotodetectOutcome out = stepper.photodetect(h, dt, 0.999999);
      REQUIRE_FALSE(out.jumped);
      CHECK(std::abs(out.trace_before_renorm - 1.0) < 5.0 * dt * dt);
      CHECK(std::abs(h.r11.trace() - 1.0) < 1e-12);
    }
  }

  TEST_CASE("homodyne steps keep the state physical") {
    const SingleModeSetup s = build_single_mode({});
    FilterStepper stepper(s.model, s.pulse);
    Hierarchy h = s.h0;
    NoiseSource noise(5, 0);
    for (int k = 0; k < 6000; ++k) {
      stepper.homodyne(h, 1e-3, noise.normal());
      const HierarchyAudit a = audit(h, k % 100 == 0);
      REQUIRE(a.trace_error < 1e-12);
      REQUIRE(a.hermiticity_r11 < 1e-10);
      REQUIRE(a.adjoint_pairing < 1e-10);
      if (k % 100 == 0) REQUIRE(a.min_eigenvalue_r11 > -1e-8);
    }
  }

  TEST_CASE("the homodyne rate K enters the increment: dY = K dt + sqrt(dt) z") {
    const SingleModeSetup s = build_single_mode({});
    FilterStepper stepper(s.model, s.pulse);
    Hierarchy h = s.h0;
    for (int k = 0; k < 1000; ++k) stepper.homodyne(h, 1e-3, 0.0);
    const double K = stepper.k_rate(h);
    const HomodyneOutcome out = stepper.homodyne(h, 1e-3, 0.7);
    CHECK(out.K == doctest::Approx(K));
    CHECK(out.dY == doctest::Approx(K * 1e-3 + std::sqrt(1e-3) * 0.7).epsilon(1e-12));
  }

  TEST_CASE("oversized counting steps are refused") {
    const SingleModeSetup s = build_single_mode({});
    FilterStepper stepper(s.model, s.pulse);
    Hierarchy h = s.h0;
    CHECK_THROWS_AS(stepper.photodetect(h, 0.2, 0.5), StepSizeError);
    CHECK_THROWS_AS(step_count(1.0, 0.3), ValidationError);
    CHECK(step_count(12.0, 1e-3) == 12000);
  }

  TEST_CASE("trajectories are deterministic in (seed, stream)") {
    for (Scheme scheme : {Scheme::Homodyne, Scheme::Photodetect}) {
      const TrajectoryResult a = single_mode_run(scheme, 9, 4.0, 1e-3, 50);
      const TrajectoryResult b = single_mode_run(scheme, 9, 4.0, 1e-3, 50);
      const TrajectoryResult c = single_mode_run(scheme, 10, 4.0, 1e-3, 50);
      CHECK(a.samples == b.samples);
      CHECK(a.record.dY == b.record.dY);
      CHECK(a.record.jump_times == b.record.jump_times);
      CHECK(a.samples != c.samples);
    }
  }

  TEST_CASE("sampling grid: every stride steps plus the final time") {
    const TrajectoryResult r = single_mode_run(Scheme::Photodetect, 1, 1.0, 1e-3, 300);
    REQUIRE(r.times.size() == 5);
    CHECK(r.times[3] == doctest::Approx(0.9));
    CHECK(r.times[4] == doctest::Approx(1.0));
    CHECK(r.record.rates.size() == 5);
  }

  TEST_CASE("trajectory audits stay within the invariant tolerances") {
    for (Scheme scheme : {Scheme::Homodyne, Scheme::Photodetect}) {
      const TrajectoryResult r = single_mode_run(scheme, 3, 12.0, 1e-3, 100);
      CHECK(r.audit.max_trace_error < 1e-12);
      CHECK(r.audit.max_hermiticity < 1e-10);
      CHECK(r.audit.max_adjoint_pairing < 1e-10);
      CHECK(r.audit.min_eigenvalue > -1e-8);
      CHECK(r.audit.steps == 12001);  // initial state plus every step
    }
  }

  TEST_CASE("the no-detection branch cache reproduces direct stepping bit for bit") {
    const SingleModeSetup setup = build_single_mode({});
    const ObservableSet obs = single_mode_observables(setup);
    TrajectoryOptions opt;
    opt.observables = &obs;
    opt.sample_stride = 37;
    opt.audit = true;
    const NoDetectionBranch branch(setup.model, setup.pulse, setup.h0, 6.0, 1e-3, opt, 16);
    for (std::uint64_t i = 0; i < 8; ++i) {
      NoiseSource n1(21, i), n2(21, i);
      const TrajectoryResult direct =
          simulate_trajectory(setup.model, setup.pulse, Scheme::Photodetect, setup.h0, 6.0, 1e-3,
                              n1, opt);
      const TrajectoryResult cached = branch.run_from(n2);
      CHECK(direct.samples == cached.samples);
      CHECK(direct.record.jump_times == cached.record.jump_times);
      CHECK(direct.record.rates == cached.record.rates);
      CHECK(direct.audit.max_trace_error == cached.audit.max_trace_error);
      CHECK((direct.final_state.r11 - cached.final_state.r11).norm() == 0.0);
    }
    // The cached state at step k is the no-detection state.
    FilterStepper stepper(setup.model, setup.pulse);
    Hierarchy h = setup.h0;
    for (int k = 0; k < 500; ++k) stepper.photodetect(h, 1e-3, 0.999999);
    CHECK((branch.state_at(500).r11 - h.r11).norm() == 0.0);
  }

  TEST_CASE("scalar moment equations follow the matrix filter") {
    const double dt = 1e-3, T = 8.0;
    TrajectoryResult r;
    std::uint64_t seed = 0;
    do {
      r = single_mode_run(Scheme::Photodetect, seed++, T, dt, 1);
    } while (r.record.jump_times.size() != 1 || r.record.jump_times[0] < 1.0);
    const double tj = r.record.jump_times[0];
    const MomentSeries m = moment_oracle_pd({}, r.record.jump_times, T, dt);
    REQUIRE(m.times.size() == r.times.size());
    double worst_before = 0.0, worst_after = 0.0;
    for (std::size_t k = 0; k < m.times.size(); ++k) {
      const auto& row = r.samples[k];
      const double d = std::max({std::abs(m.n11[k] - row[0]), std::abs(std::abs(m.a01[k]) - row[1]),
                                 std::abs(m.one00[k] - row[2]), std::abs(m.n00[k] - row[3]),
                                 std::abs(m.nu[k] - r.record.rates[k])});
      (m.times[k] < tj - dt / 2 ? worst_before : worst_after) =
          std::max(m.times[k] < tj - dt / 2 ? worst_before : worst_after, d);
      if (m.times[k] > tj - dt / 2) CHECK(row[0] < 1e-12);
    }
    CHECK(worst_before < 1e-6);
    CHECK(worst_after < 1e-6);
  }

  TEST_CASE("measurement records round-trip through CSV") {
    const TrajectoryResult r = single_mode_run(Scheme::Homodyne, 4, 0.5, 1e-3, 100);
    const auto path = (std::filesystem::temp_directory_path() / "pf_record_test.csv").string();
    write_record_csv(r.record, path);
    const CsvTable t = read_numeric_csv(path);
    REQUIRE(t.rows.size() == 500);
    CHECK(t.header == std::vector<std::string>{"t", "dY"});
    for (std::size_t k = 0; k < 500; k += 97) {
      CHECK(t.rows[k][1] == doctest::Approx(r.record.dY[k]).epsilon(1e-8));
    }
    std::filesystem::remove(path);
  }
}
