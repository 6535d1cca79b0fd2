#include <cmath>
#include <numbers>

#include "doctest.h"
#include "pf/errors.hpp"
#include "pf/hilbert.hpp"

using namespace pf;

namespace {

double grid_integral(const DensityOp& rho) {
  const auto xs = linspace_step(-5.0, 5.0, 0.05);
  const Eigen::MatrixXd w = wigner(rho, xs, xs);
  return w.sum() * 0.05 * 0.05;
}

}  // namespace

TEST_SUITE("hilbert") {
  TEST_CASE("ladder operators satisfy [a, a^dag] = 1 below the top level") {
    const int dim = 6;
    const LadderOps ops = ladder_ops(dim);
    const Operator comm = ops.annihilation * ops.creation - ops.creation * ops.annihilation;
    for (int k = 0; k < dim - 1; ++k) CHECK(std::abs(comm(k, k) - 1.0) < 1e-14);
    CHECK(std::abs(comm(dim - 1, dim - 1) - cplx(1.0 - dim)) < 1e-14);
    CHECK((ops.creation * ops.annihilation - number_op(dim)).norm() < 1e-14);
    CHECK_THROWS_AS(ladder_ops(1), DimensionError);
  }

  TEST_CASE("embedding acts on the right slot") {
    const ModeLayout layout({3, 4});
    const Operator na = embed(number_op(3), Slot::mode(0), layout);
    const Operator nb = embed(number_op(4), Slot::mode(1), layout);
    CHECK(na.rows() == 12);
    const Ket f[] = {fock_ket(2, 3), fock_ket(1, 4)};
    const Ket psi = product_ket(f);
    CHECK(std::abs(expectation(psi, na) - 2.0) < 1e-14);
    CHECK(std::abs(expectation(psi, nb) - 1.0) < 1e-14);
    CHECK((na * nb - nb * na).norm() < 1e-14);
    const ModeLayout with_anc = layout.with_ancilla();
    CHECK(with_anc.total_dim() == 24);
    CHECK(with_anc.system_dim() == 12);
  }

  TEST_CASE("coherent state has the requested amplitude") {
    const cplx alpha(0.8, -0.3);
    const Ket psi = coherent_ket(alpha, 25);
    CHECK(std::abs(psi.norm() - 1.0) < 1e-12);
    CHECK(std::abs(expectation(psi, ladder_ops(25).annihilation) - alpha) < 1e-10);
    CHECK(top_level_population(psi, Slot::mode(0), ModeLayout({25})) < 1e-12);
  }

  TEST_CASE("vacuum Wigner function peaks at 1/pi") {
    const double zero[] = {0.0};
    const Eigen::MatrixXd w = wigner(fock_dm(0, 4), zero, zero);
    CHECK(w(0, 0) == doctest::Approx(1.0 / std::numbers::pi).epsilon(1e-12));
  }

  TEST_CASE("coherent-state Wigner function is the displaced Gaussian") {
    const cplx alpha(0.7, 0.4);
    const DensityOp rho = projector(coherent_ket(alpha, 30));
    const double x0 = std::sqrt(2.0) * alpha.real();
    const double p0 = std::sqrt(2.0) * alpha.imag();
    const std::vector<double> xs = {-1.0, 0.0, 0.5, 1.3};
    const std::vector<double> ps = {-0.6, 0.2, 0.9};
    const Eigen::MatrixXd w = wigner(rho, xs, ps);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      for (std::size_t j = 0; j < xs.size(); ++j) {
        const double d2 = (xs[j] - x0) * (xs[j] - x0) + (ps[i] - p0) * (ps[i] - p0);
        CHECK(std::abs(w(i, j) - std::exp(-d2) / std::numbers::pi) < 1e-9);
      }
    }
  }

  TEST_CASE("vacuum/one-photon mixture: W(0,0) = (1 - 2p)/pi") {
    const double p = 0.7;
    const DensityOp rho = p * fock_dm(1, 3) + (1.0 - p) * fock_dm(0, 3);
    const double zero[] = {0.0};
    CHECK(std::abs(wigner(rho, zero, zero)(0, 0) - (1.0 - 2.0 * p) / std::numbers::pi) < 1e-12);
    CHECK((1.0 - 2.0 * p) / std::numbers::pi == doctest::Approx(-0.12732).epsilon(1e-4));
  }

  TEST_CASE("Wigner grid integral is one for low-occupation states") {
    CHECK(grid_integral(fock_dm(0, 5)) == doctest::Approx(1.0).epsilon(0.01));
    CHECK(grid_integral(fock_dm(2, 5)) == doctest::Approx(1.0).epsilon(0.01));
    CHECK(grid_integral(projector(coherent_ket(cplx(1.0, 0.5), 20))) ==
          doctest::Approx(1.0).epsilon(0.01));
  }

  TEST_CASE("diagonal Fock mixtures have radially symmetric Wigner functions") {
    const DensityOp rho = 0.5 * fock_dm(0, 4) + 0.3 * fock_dm(1, 4) + 0.2 * fock_dm(3, 4);
    const int n = 40;
    std::vector<double> radial_x(n), radial_p(n);
    for (int k = 0; k < n; ++k) {
      const double r = 0.1 * k;
      const double phi = 0.37 * k + 0.2;
      radial_x[k] = r * std::cos(phi);
      radial_p[k] = r * std::sin(phi);
    }
    for (int k = 0; k < n; ++k) {
      const double x[] = {radial_x[k]};
      const double p[] = {radial_p[k]};
      const double r[] = {std::hypot(radial_x[k], radial_p[k])};
      const double zero[] = {0.0};
      CHECK(std::abs(wigner(rho, x, p)(0, 0) - wigner(rho, r, zero)(0, 0)) < 1e-8);
    }
  }

  TEST_CASE("partial trace and top-level population") {
    const ModeLayout layout({2, 8});
    const Ket f[] = {fock_ket(1, 2), coherent_ket(cplx(0.5, 0.0), 8)};
    const DensityOp rho = projector(product_ket(f));
    const DensityOp rb = reduce_to_mode(rho, 1, layout);
    CHECK(std::abs(rb.trace() - 1.0) < 1e-12);
    CHECK((reduce_to_mode(rho, 0, layout) - fock_dm(1, 2)).norm() < 1e-12);
    CHECK(top_level_population(rho, Slot::mode(1), layout) == doctest::Approx(rb(7, 7).real()).epsilon(1e-9));
  }

  TEST_CASE("min eigenvalue and hermiticity residue") {
    DensityOp rho = fock_dm(0, 3);
    CHECK(min_eigenvalue(rho) == doctest::Approx(0.0));
    rho(1, 1) = -0.25;
    CHECK(min_eigenvalue(rho) == doctest::Approx(-0.25));
    Operator m = Operator::Zero(2, 2);
    m(0, 1) = 1.0;
    CHECK(hermiticity_residue(m) > 0.5);
    CHECK(hermiticity_residue(m + m.adjoint()) == 0.0);
  }
}
