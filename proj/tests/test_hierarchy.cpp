#include <cmath>
#include <numbers>

#include "doctest.h"
#include "pf/errors.hpp"
#include "pf/experiments.hpp"
#include "pf/hierarchy.hpp"

using namespace pf;

namespace {

// Integrates the hierarchy ME for the empty cavity and returns the largest
// deviation of n11 from the closed form, sampled every 10 steps.
double me_vs_closed_form(double gamma, double kappa, double t0, double T, double dt) {
  SingleModeScenario s;
  s.gamma = gamma;
  s.kappa = kappa;
  s.t0 = t0;
  const SingleModeSetup setup = build_single_mode(s);
  Hierarchy h = setup.h0;
  double worst = 0.0;
  const auto n = static_cast<int>(std::llround(T / dt));
  for (int k = 1; k <= n; ++k) {
    h = step_me(setup.model, setup.pulse, h, dt);
    if (k % 10 == 0) {
      const double n11 = expectation(h.r11, setup.n).real();
      worst = std::max(worst, std::abs(n11 - closed_form_n11(gamma, kappa, k * dt, t0)));
    }
  }
  return worst;
}

}  // namespace

TEST_SUITE("hierarchy") {
  TEST_CASE("closed form: degenerate peak 4 e^-2 at kappa t = 2") {
    CHECK(closed_form_n11(1.0, 1.0, 2.0) == doctest::Approx(4.0 * std::exp(-2.0)).epsilon(1e-14));
    CHECK(closed_form_n11(1.0, 1.0, 2.0) == doctest::Approx(0.54134).epsilon(1e-5));
    CHECK(closed_form_n11(1.0, 1.0, 1.99) < closed_form_n11(1.0, 1.0, 2.0));
    CHECK(closed_form_n11(1.0, 1.0, 2.01) < closed_form_n11(1.0, 1.0, 2.0));
    CHECK(closed_form_n11(1.0, 1.0, -0.5) == 0.0);
  }

  TEST_CASE("closed form is continuous through gamma = kappa") {
    for (double t : {0.5, 2.0, 6.0}) {
      CHECK(closed_form_n11(1.0 + 1e-5, 1.0, t) ==
            doctest::Approx(closed_form_n11(1.0, 1.0, t)).epsilon(1e-4));
    }
  }

  TEST_CASE("closed form is translation invariant in t0") {
    for (double t : {0.3, 1.7, 4.0}) {
      CHECK(closed_form_n11(3.0, 1.0, t + 2.0, 2.0) ==
            doctest::Approx(closed_form_n11(3.0, 1.0, t)).epsilon(1e-13));
    }
  }

  TEST_CASE("faster pulses enter sooner but peak lower") {
    auto peak = [](double gamma) {
      double best = 0.0, at = 0.0;
      for (int k = 0; k < 12000; ++k) {
        const double v = closed_form_n11(gamma, 1.0, k * 1e-3);
        if (v > best) best = v, at = k * 1e-3;
      }
      return std::pair{best, at};
    };
    const auto [p1, t1] = peak(1.0);
    const auto [p10, t10] = peak(10.0);
    CHECK(t10 < t1);
    CHECK(p10 < p1);
  }

  TEST_CASE("ME integration matches the closed form") {
    CHECK(me_vs_closed_form(1.0, 1.0, 0.0, 12.0, 1e-3) < 1e-4);
    CHECK(me_vs_closed_form(0.1, 1.0, 0.0, 12.0, 1e-3) < 1e-4);
    CHECK(me_vs_closed_form(10.0, 1.0, 0.0, 12.0, 1e-3) < 1e-4);
    // A late onset is a discontinuity; a binary step lands on it exactly.
    CHECK(me_vs_closed_form(2.0, 1.0, 1.5, 8.0, 1.0 / 1024.0) < 1e-4);
  }

  TEST_CASE("ME preserves the hierarchy invariants") {
    const SingleModeSetup setup = build_single_mode({});
    Hierarchy h = setup.h0;
    for (int k = 0; k < 3000; ++k) {
      h = step_me(setup.model, setup.pulse, h, 1e-3);
      if (k % 500 == 0) {
        const HierarchyAudit a = audit(h);
        CHECK(a.trace_error < 1e-10);
        CHECK(a.hermiticity_r11 < 1e-12);
        CHECK(a.hermiticity_r00 < 1e-12);
        CHECK(a.adjoint_pairing < 1e-12);
        CHECK(a.min_eigenvalue_r11 > -1e-10);
      }
    }
    CHECK(std::abs(h.t - 3.0) < 1e-9);
  }

  TEST_CASE("with no photon the hierarchy reduces to the Lindblad equation") {
    const SingleModeSetup setup = build_single_mode({});
    DensityOp rho = 0.5 * fock_dm(1, 3) + 0.5 * fock_dm(2, 3);
    Hierarchy h = initial_hierarchy(rho);
    for (int k = 0; k < 500; ++k) {
      h = step_me(setup.model, Pulse::absent(), h, 1e-3);
      rho = step_lindblad(setup.model, k * 1e-3, rho, 1e-3);
    }
    CHECK((h.r11 - rho).norm() < 1e-12);
  }

  TEST_CASE("coherent drive reproduces the single-photon mean photon number") {
    const double kappa = 1.0, dt = 1e-3;
    const Pulse pulse = Pulse::exponential(1.0);
    const SystemModel coherent = coherent_reference_model(kappa, pulse, 12);
    const SingleModeSetup setup = build_single_mode({});
    Hierarchy h = setup.h0;
    DensityOp rho = fock_dm(0, 12);
    const Operator n12 = number_op(12);
    double worst = 0.0;
    for (int k = 0; k < 6000; ++k) {
      h = step_me(setup.model, setup.pulse, h, dt);
      rho = step_lindblad(coherent, k * dt, rho, dt);
      worst = std::max(worst, std::abs(expectation(h.r11, setup.n).real() -
                                       expectation(rho, n12).real()));
    }
    CHECK(worst < 1e-6);
  }

  TEST_CASE("initial hierarchy validation") {
    DensityOp bad = fock_dm(0, 3);
    bad(0, 0) = 2.0;
    CHECK_THROWS_AS(initial_hierarchy(bad), ValidationError);
    const Hierarchy h = initial_hierarchy(fock_dm(0, 3));
    CHECK((h.r00 - h.r11).norm() == 0.0);
    CHECK(h.r01.norm() == 0.0);
  }
}
