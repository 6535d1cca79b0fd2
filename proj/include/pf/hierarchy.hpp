#pragma once

// Deterministic single-photon master equation. The physical state is r11;
// r00, r01 and r10 are the auxiliary components it couples to when the
// input field carries one photon in wavepacket xi(t):
//
//   d r11 = L r11 + xi [r01, L^dag] + xi^* [L, r10]
//   d r01 = L r01 + xi^* [L, r00]
//   d r10 = L r10 + xi [r00, L^dag]
//   d r00 = L r00
//
// with L rho = -i[H, rho] + sum_k D[L_k] rho over the monitored channel and
// every unmonitored channel.

#include <functional>
#include <vector>

#include "pf/hilbert.hpp"
#include "pf/pulse.hpp"

namespace pf {

/// Coefficient times a fixed operator. The coefficient may read the time and
/// the current physical state (r11), which is how feedback enters.
struct HamiltonianTerm {
  Operator op;
  std::function<cplx(double t, const DensityOp& state)> coefficient;
  bool reads_state = false;
};

class SystemModel {
 public:
  SystemModel(ModeLayout layout, Operator static_hamiltonian, Operator monitored_L,
              std::vector<Operator> extra_Ls = {}, std::vector<HamiltonianTerm> terms = {});

  const ModeLayout& layout() const { return layout_; }
  int dim() const { return layout_.total_dim(); }

  const Operator& static_hamiltonian() const { return h0_; }
  const std::vector<HamiltonianTerm>& terms() const { return terms_; }
  bool state_dependent() const { return state_dependent_; }
  bool time_dependent() const { return !terms_.empty(); }

  Operator hamiltonian(double t, const DensityOp& state) const;
  void hamiltonian_into(double t, const DensityOp& state, Operator& out) const;

  const Operator& L() const { return L_; }
  const Operator& L_dag() const { return L_dag_; }
  const std::vector<Operator>& extra_Ls() const { return extra_; }
  const std::vector<Operator>& extra_Ls_dag() const { return extra_dag_; }
  /// (1/2) sum_k L_k^dag L_k over all channels.
  const Operator& damping() const { return damping_; }

  /// Sparse copies of the couplings, used by the steppers.
  const SparseOp& L_sparse() const { return L_sp_; }
  const SparseOp& L_dag_sparse() const { return L_dag_sp_; }
  const std::vector<SparseOp>& extra_sparse() const { return extra_sp_; }
  const std::vector<SparseOp>& extra_dag_sparse() const { return extra_dag_sp_; }

 private:
  ModeLayout layout_;
  Operator h0_;
  Operator L_;
  Operator L_dag_;
  std::vector<Operator> extra_;
  std::vector<Operator> extra_dag_;
  std::vector<HamiltonianTerm> terms_;
  Operator damping_;
  SparseOp L_sp_, L_dag_sp_;
  std::vector<SparseOp> extra_sp_, extra_dag_sp_;
  bool state_dependent_ = false;
};

struct Hierarchy {
  DensityOp r00;
  DensityOp r01;
  DensityOp r10;
  DensityOp r11;
  double t = 0.0;

  int dim() const { return static_cast<int>(r11.rows()); }
};

struct HierarchyRates {
  DensityOp d00;
  DensityOp d01;
  DensityOp d10;
  DensityOp d11;
};

/// r11 = r00 = rho0, r01 = r10 = 0. rho0 must be Hermitian with unit trace.
Hierarchy initial_hierarchy(const DensityOp& rho0, double t0 = 0.0);

/// Residues of the hierarchy invariants, for audits and tests.
struct HierarchyAudit {
  double trace_error = 0.0;       // |tr r11 - 1|
  double hermiticity_r11 = 0.0;
  double hermiticity_r00 = 0.0;
  double adjoint_pairing = 0.0;   // max |r10 - r01^dag|
  double min_eigenvalue_r11 = 0.0;
};

HierarchyAudit audit(const Hierarchy& h, bool with_eigenvalues = true);

/// -i[H, rho] + sum_k D[L_k] rho with H evaluated at (t, rho).
DensityOp lindblad_rhs(const SystemModel& model, double t, const DensityOp& rho);

HierarchyRates hierarchy_rhs(const SystemModel& model, const Pulse& pulse, double t,
                             const Hierarchy& h);

/// Classical RK4 on all four components. The Hamiltonian's state input is
/// frozen at the start of the step; its time input follows the stages.
/// Throws InstabilityError when an invariant drifts beyond 1e-6.
Hierarchy step_me(const SystemModel& model, const Pulse& pulse, const Hierarchy& h, double dt);

/// Classical RK4 on the plain Lindblad equation.
DensityOp step_lindblad(const SystemModel& model, double t, const DensityOp& rho, double dt);

/// Mean intracavity photon number of an empty cavity (decay kappa) fed by
/// an exponential single-photon pulse (rate gamma, onset t0). For
/// |gamma - kappa|/kappa < 1e-6 the degenerate limit is returned.
double closed_form_n11(double gamma, double kappa, double t, double t0 = 0.0);

/// Single-mode cavity driven classically so that the mean field follows the
/// same equations as the single-photon case: H(t) = i sqrt(kappa) (xi a^dag
/// - xi^* a), L = sqrt(kappa) a.
SystemModel coherent_reference_model(double kappa, const Pulse& pulse, int dim = 12);

/// Allocation-free evaluation engine shared by the deterministic and
/// stochastic steppers. Not thread-safe: one instance per worker.
class HierarchyEvaluator {
 public:
  HierarchyEvaluator(const SystemModel& model, const Pulse& pulse);

  const SystemModel& model() const { return *model_; }
  const Pulse& pulse() const { return *pulse_; }

  /// Rebuilds H_eff = H(t, state) - i damping.
  void prepare(double t, const DensityOp& state);
  /// out = L rho with the prepared Hamiltonian; zero input gives zero output.
  void liouvillian(const DensityOp& rho, DensityOp& out);
  /// Full hierarchy right-hand side with the prepared Hamiltonian and the
  /// given field amplitude.
  void rates(cplx xi, const Hierarchy& h, HierarchyRates& out);

  /// RK4 step in place.
  void rk4_step(Hierarchy& h, double dt);

 private:
  const SystemModel* model_;
  const Pulse* pulse_;
  Operator h_eff_;
  SparseOp h_eff_sp_;
  SparseOp h_eff_dag_sp_;
  DensityOp tmp_;
  DensityOp tmp2_;
  HierarchyRates k1_, k2_, k3_, k4_;
  Hierarchy stage_;
};

bool is_exact_zero(const DensityOp& m);

/// tr[a b] without forming the product.
inline cplx trace_product(const Operator& a, const Operator& b) {
  return (a.array() * b.transpose().array()).sum();
}

}  // namespace pf
