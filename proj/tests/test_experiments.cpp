#include <cmath>
#include <string>

#include "doctest.h"
#include "pf/errors.hpp"
#include "pf/experiments.hpp"

using namespace pf;

namespace {

KerrScenario weak_drive(Frame frame) {
  KerrScenario k;
  k.kappa_b = 1.0;
  k.beta = cplx(0.25, 0.0);
  k.dim_b = 12;
  k.frame = frame;
  return k;
}

}  // namespace

TEST_SUITE("experiments") {
  TEST_CASE("Kerr defaults: beta = kappa_b^2/(4 kappa_a) gives a 0.1 benchmark shift") {
    KerrScenario k;
    CHECK(k.beta_value() == cplx(4.0, 0.0));
    CHECK(k.delta_beta() == doctest::Approx(0.1));
    CHECK(k.gamma_value() == 1.0);
    CHECK(std::abs(k.alpha_ss() - cplx(0.0, -2.0)) < 1e-15);
    CHECK(k.resolved_frame() == Frame::Displaced);
    k.kappa_b = 0.5;
    CHECK(k.resolved_frame() == Frame::Bare);
    k.kappa_b = 3.0;
    CHECK(k.resolved_frame() == Frame::Displaced);
    CHECK(parse_frame("bare") == Frame::Bare);
    CHECK_THROWS_AS(parse_frame("sideways"), ValidationError);
  }

  TEST_CASE("truncation choice and its audit") {
    CHECK(required_dim_b(cplx(0.0), 0.5) == 7);
    CHECK(required_dim_b(cplx(0.0, 2.0), 0.5) > required_dim_b(cplx(0.0), 0.5));
    KerrScenario k;
    k.frame = Frame::Bare;
    k.dim_b = 5;
    try {
      build_kerr(k);
      FAIL("expected a truncation error");
    } catch (const TruncationError& e) {
      CHECK(std::string(e.what()).find("need dim_b >=") != std::string::npos);
    }
    const KerrSetup auto_setup = build_kerr(KerrScenario{});
    CHECK(auto_setup.model.layout().dims()[1] == 7);
  }

  TEST_CASE("initial Kerr observables sit at the driven steady state") {
    const KerrSetup s = build_kerr(KerrScenario{});
    const ObservableSet obs = kerr_observables(s);
    std::vector<double> row(obs.names.size());
    obs.evaluate(s.h0, 0.0, row);
    CHECK(row[0] == doctest::Approx(0.0));
    CHECK(row[1] == doctest::Approx(0.0));
    CHECK(row[2] == doctest::Approx(-2.0).epsilon(1e-9));
    CHECK(feedback_detuning(s, s.h0) == doctest::Approx(-0.1 * 4.0).epsilon(1e-9));
  }

  TEST_CASE("bare and displaced frames give the same mode-b quadrature") {
    const KerrSetup bare = build_kerr(weak_drive(Frame::Bare));
    const KerrSetup disp = build_kerr(weak_drive(Frame::Displaced));
    const ObservableSet ob = kerr_observables(bare), od = kerr_observables(disp);
    Hierarchy hb = bare.h0, hd = disp.h0;
    std::vector<double> rb(3), rd(3);
    double worst = 0.0;
    for (int k = 0; k < 2500; ++k) {
      hb = step_me(bare.model, bare.pulse, hb, 2e-3);
      hd = step_me(disp.model, disp.pulse, hd, 2e-3);
      if (k % 25 == 0) {
        ob.evaluate(hb, 0.0, rb);
        od.evaluate(hd, 0.0, rd);
        worst = std::max({worst, std::abs(rb[1] - rd[1]), std::abs(rb[2] - rd[2]),
                          std::abs(rb[0] - rd[0])});
      }
    }
    CHECK(worst < 1e-4);
  }

  TEST_CASE("one counting step moves <b> as the moment equation says") {
    const KerrSetup s = build_kerr(weak_drive(Frame::Displaced));
    FilterStepper stepper(s.model, s.pulse);
    Hierarchy h = s.h0;
    for (int k = 0; k < 1500; ++k) stepper.photodetect(h, 1e-3, 0.999999);
    for (double dt : {1e-3, 1e-4}) {
      const double no_jump = b_increment_check(s, h, dt, 0.999999);
      const double jump = b_increment_check(s, h, dt, 0.0);
      CHECK(no_jump < 50.0 * dt * dt);
      CHECK(jump < 1e-10);
    }
  }

  TEST_CASE("max shift and relaxation time on a synthetic series") {
    TrajectoryObservables o;
    for (int k = 0; k <= 100; ++k) {
      const double t = 0.1 * k;
      o.times.push_back(t);
      o.X_b.push_back(1.0 + (t < 2.0 ? 0.0 : 0.2 * std::exp(-(t - 2.0))));
    }
    CHECK(max_conditional_shift(o) == doctest::Approx(0.2));
    CHECK(relaxation_time(o, 2.0, std::exp(-1.0)) == doctest::Approx(1.1).epsilon(1e-9));
    CHECK(std::isnan(relaxation_time(o, 20.0, 0.5)));
  }

  TEST_CASE("after the detection mode b relaxes at kappa_b / 2") {
    for (double kb : {1.0, 4.0}) {
      KerrScenario k;
      k.kappa_b = kb;
      const KerrSetup s = build_kerr(k);
      FilterStepper stepper(s.model, s.pulse);
      Hierarchy h = s.h0;
      for (int i = 0; i < 1500; ++i) stepper.photodetect(h, 1e-3, 0.999999);
      REQUIRE(stepper.photodetect(h, 1e-3, 0.0).jumped);
      const double tau = post_detection_relaxation(s, h, std::exp(-1.0), 1e-3, 50.0);
      CHECK(tau == doctest::Approx(2.0 / kb).epsilon(2e-3));
    }
  }

  TEST_CASE("histogram: fixed edges, gap detection and bimodality") {
    std::vector<double> v;
    for (int i = 0; i < 300; ++i) v.push_back(0.0101 + 0.00004 * (i % 100));  // bin 2
    for (int i = 0; i < 700; ++i) v.push_back(0.102 + 0.0001 * (i % 20));   // bin 20
    v.push_back(0.29);
    v.push_back(-0.1);
    v.push_back(0.5);
    const ShiftHistogram h = shift_histogram(v, 0.005, 0.0, 0.3);
    CHECK(h.counts.size() == 60);
    CHECK(h.counts[2] == 300);
    CHECK(h.counts[20] == 700);
    CHECK(h.below == 1);
    CHECK(h.above == 1);
    REQUIRE(h.gap);
    // The sparse tail gap after bin 20 is longer but splits off < 5%.
    CHECK(h.gap->first_bin == 3);
    CHECK(h.gap->last_bin == 19);
    CHECK(h.gap->left == doctest::Approx(0.015));
    CHECK(h.gap->right == doctest::Approx(0.1));
    CHECK(h.bimodal);
    CHECK(h.mass_left == doctest::Approx(301.0 / 1003.0));
  }

  TEST_CASE("histogram: a single cluster is not bimodal") {
    std::vector<double> v;
    for (int i = 0; i < 500; ++i) v.push_back(0.05 + 0.00005 * i);
    const ShiftHistogram h = shift_histogram(v, 0.005, 0.0, 0.3);
    CHECK_FALSE(h.bimodal);
    CHECK_FALSE(h.gap);
    CHECK_THROWS_AS(shift_histogram(std::vector<double>(50, 0.1), 0.005, 0.0, 0.3),
                    ValidationError);
  }

  TEST_CASE("median") {
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  }
}
