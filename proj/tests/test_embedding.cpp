#include <cmath>

#include "doctest.h"
#include "pf/embedding.hpp"
#include "pf/errors.hpp"
#include "pf/experiments.hpp"

using namespace pf;

namespace {

double sup_gap_n11(Scheme scheme, double T, double dt, std::uint64_t seed) {
  const SingleModeSetup s = build_single_mode({});
  const ObservableSet obs = single_mode_observables(s);
  TrajectoryOptions opt;
  opt.observables = &obs;
  opt.sample_stride = 10;
  NoiseSource n1(seed, 0), n2(seed, 0);
  const TrajectoryResult sme = simulate_trajectory(s.model, s.pulse, scheme, s.h0, T, dt, n1, opt);
  const JointKet jk = initial_joint_ket(fock_ket(0, 3), s.model.layout());
  const TrajectoryResult sse = simulate_sse_trajectory(s.model, s.pulse, scheme, jk, T, dt, n2, opt);
  REQUIRE(sme.times.size() == sse.times.size());
  CHECK(sme.record.jump_times == sse.record.jump_times);
  double gap = 0.0;
  for (std::size_t k = 0; k < sme.times.size(); ++k) {
    gap = std::max(gap, std::abs(sme.samples[k][0] - sse.samples[k][0]));
  }
  return gap;
}

}  // namespace

TEST_SUITE("embedding") {
  TEST_CASE("joint Hamiltonian is Hermitian and conserves excitations") {
    const SingleModeSetup s = build_single_mode({});
    const ModeLayout joint = s.model.layout().with_ancilla();
    const Operator n_total = embed(number_op(3), Slot::mode(0), joint) +
                             embed(sigma_plus() * sigma_minus(), Slot::ancilla(), joint);
    for (double t : {0.0, 0.7, 3.0}) {
      const Operator H = total_hamiltonian(s.model, s.pulse, t, s.h0.r11);
      const Operator L = total_coupling(s.model, s.pulse, t);
      CHECK(hermiticity_residue(H) < 1e-14);
      // Ignore the truncation edge where a^dag saturates.
      const Operator comm = n_total * H - H * n_total;
      CHECK(comm.norm() < 1e-12);
      CHECK((n_total * L - L * n_total + L).norm() < 1e-12);
    }
  }

  TEST_CASE("extraction at the start returns the initial hierarchy") {
    const SingleModeSetup s = build_single_mode({});
    const JointKet jk = initial_joint_ket(fock_ket(0, 3), s.model.layout());
    const ExtractedHierarchy e = extract_hierarchy(jk, s.pulse, 0.0);
    CHECK(e.conditional_available);
    CHECK((e.hierarchy.r11 - s.h0.r11).norm() < 1e-14);
    CHECK((e.hierarchy.r00 - s.h0.r00).norm() < 1e-14);
    CHECK(e.hierarchy.r01.norm() < 1e-14);
    CHECK_THROWS_AS(initial_joint_ket(fock_ket(0, 6), ModeLayout({3}, true)), ValidationError);
  }

  TEST_CASE("cascaded Lindblad dynamics reproduces the hierarchy master equation") {
    SingleModeScenario sc;
    sc.gamma = 2.0;
    const SingleModeSetup s = build_single_mode(sc);
    const SystemModel joint = cascaded_model(s.model, s.pulse);
    const JointKet jk = initial_joint_ket(fock_ket(0, 3), s.model.layout());
    DensityOp rho = projector(jk.psi);
    Hierarchy h = s.h0;
    const double dt = 1e-3;
    double worst = 0.0;
    for (int k = 0; k < 6000; ++k) {
      rho = step_lindblad(joint, k * dt, rho, dt);
      h = step_me(s.model, s.pulse, h, dt);
      if (k % 50 == 0) {
        DensityOp sys = Operator::Zero(3, 3);
        // Partial trace over the ancilla (last slot, dimension 2).
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) sys(i, j) = rho(2 * i, 2 * j) + rho(2 * i + 1, 2 * j + 1);
        worst = std::max(worst, (sys - h.r11).cwiseAbs().maxCoeff());
      }
    }
    CHECK(worst < 1e-9);
  }

  TEST_CASE("state-dependent Hamiltonians cannot be cascaded") {
    KerrScenario k;
    k.kappa_b = 1.0;
    k.beta = cplx(0.25, 0.0);
    const KerrSetup setup = build_kerr(k);
    CHECK_THROWS_AS(cascaded_model(setup.model, setup.pulse), UnsupportedConfigError);
  }

  TEST_CASE("SSE and SME agree pathwise on the same noise record") {
    CHECK(sup_gap_n11(Scheme::Homodyne, 4.0, 1e-4, 2) < 1e-8);
    CHECK(sup_gap_n11(Scheme::Photodetect, 4.0, 1e-4, 2) < 1e-3);
  }

  TEST_CASE("SSE keeps the joint state normalized") {
    const SingleModeSetup s = build_single_mode({});
    SseStepper stepper(s.model, s.pulse);
    JointKet jk = initial_joint_ket(fock_ket(0, 3), s.model.layout());
    NoiseSource noise(8, 0);
    for (int k = 0; k < 3000; ++k) {
      stepper.homodyne(jk, 1e-3, noise.normal());
      REQUIRE(std::abs(jk.psi.norm() - 1.0) < 1e-12);
    }
  }
}
