#pragma once

// Pure-state route: the single-photon source is replaced by a two-level
// ancilla, initially excited, cascaded into the system. With r(t) the
// regularized ratio xi(t)/sqrt(w(t)):
//
//   L_T = L + r sigma_-
//   H_T = H + (i/2) (r^* sigma_+ L - r L^dag sigma_-)
//
// The joint dynamics is Markovian, so ordinary stochastic Schroedinger
// equations unravel it. The hierarchy is recovered from partial inner
// products over the ancilla:
//   r00 = rho_ee / w,  r01 = rho_eg / sqrt(w),  r10 = rho_ge / sqrt(w),
//   r11 = rho_ee + rho_gg,  with rho_ij = <i|Psi><Psi|j>.

#include "pf/filters.hpp"

namespace pf {

struct JointKet {
  ModeLayout layout;  // system modes plus ancilla
  Ket psi;
  double t = 0.0;
};

/// system (x) |e>. The system layout must not already carry an ancilla.
JointKet initial_joint_ket(const Ket& system, const ModeLayout& system_layout, double t0 = 0.0);

Operator total_coupling(const SystemModel& model, const Pulse& pulse, double t);

/// `feedback_state` is the physical state handed to state-dependent
/// Hamiltonian terms.
Operator total_hamiltonian(const SystemModel& model, const Pulse& pulse, double t,
                           const DensityOp& feedback_state);

/// Joint-space model with L_T as the monitored channel and H_T as the
/// Hamiltonian, for use with the plain Lindblad integrator. Requires a
/// state-independent system Hamiltonian.
SystemModel cascaded_model(const SystemModel& model, const Pulse& pulse);

/// Partial trace over the ancilla.
DensityOp reduced_system_state(const JointKet& jk);

struct ExtractedHierarchy {
  Hierarchy hierarchy;
  /// False once w(t) <= 1e-10: only r11 is meaningful then and the other
  /// components are returned as zero.
  bool conditional_available = true;
};

ExtractedHierarchy extract_hierarchy(const JointKet& jk, const Pulse& pulse, double t);

struct SseHomodyneOutcome {
  double dY = 0.0;
  double dW = 0.0;
};

struct SsePhotodetectOutcome {
  bool jumped = false;
  double rate = 0.0;  // <L_T^dag L_T>
};

/// Euler steppers for the joint pure state; one draw per step, matching
/// FilterStepper so that both can be driven by the same noise stream.
class SseStepper {
 public:
  SseStepper(const SystemModel& model, const Pulse& pulse);

  SseHomodyneOutcome homodyne(JointKet& jk, double dt, double z);
  SsePhotodetectOutcome photodetect(JointKet& jk, double dt, double u);

  /// <L_T + L_T^dag> (homodyne) and <L_T^dag L_T> (counting).
  double homodyne_rate(const JointKet& jk);
  double detection_rate(const JointKet& jk);

 private:
  void prepare(const JointKet& jk);

  const SystemModel* model_;
  const Pulse* pulse_;
  Operator L_joint_, L_sigma_plus_, Ldag_sigma_minus_, sigma_minus_joint_, h_static_joint_;
  std::vector<Operator> term_ops_;
  Operator LT_, LT_dag_, HT_;
  Ket work_, work2_;
  DensityOp reduced_;
};

struct SseHomodyneStep {
  JointKet state;
  double dY = 0.0;
};

struct SsePhotodetectStep {
  JointKet state;
  bool jumped = false;
};

SseHomodyneStep sse_homodyne_step(const SystemModel& model, const Pulse& pulse,
                                  const JointKet& jk, double dt, NoiseSource& noise);
SsePhotodetectStep sse_photodetect_step(const SystemModel& model, const Pulse& pulse,
                                        const JointKet& jk, double dt, NoiseSource& noise);

/// Fixed-grid SSE loop with the same sampling convention as
/// simulate_trajectory. Observables see the extracted hierarchy and the
/// SSE rate.
TrajectoryResult simulate_sse_trajectory(const SystemModel& model, const Pulse& pulse,
                                         Scheme scheme, const JointKet& jk0, double T, double dt,
                                         NoiseSource& noise, const TrajectoryOptions& options = {});

}  // namespace pf
