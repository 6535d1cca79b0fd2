#pragma once

// Conditional evolution of the hierarchy while the single-photon channel L
// is monitored, either by homodyne detection (diffusive record dY) or by
// photon counting (jump record).

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pf/hierarchy.hpp"
#include "pf/noise.hpp"

namespace pf {

enum class Scheme { Homodyne, Photodetect };

std::string to_string(Scheme s);
Scheme parse_scheme(const std::string& s);

/// Homodyne drift K_t = tr[(L + L^dag) r11 + r01 xi + r10 xi^*].
/// Throws CorruptedStateError if the trace has an imaginary part >= 1e-6.
double k_rate(const Hierarchy& h, const Operator& L, cplx xi);

/// Detection rate nu_t = tr[L^dag L r11 + L r10 xi^* + L^dag r01 xi + r00 |xi|^2].
/// Values in [-1e-9, 0) are clamped to 0; anything lower throws CorruptedStateError.
double nu_rate(const Hierarchy& h, const Operator& L, cplx xi);

struct MeasurementRecord {
  Scheme scheme = Scheme::Homodyne;
  double t_start = 0.0;
  double dt = 0.0;
  std::vector<double> dY;          // homodyne: one increment per step
  std::vector<double> jump_times;  // photodetection: end time of each jump step
  std::vector<double> rate_times;  // K_t or nu_t at the sample points
  std::vector<double> rates;
};

void write_record_csv(const MeasurementRecord& record, const std::string& path);
void write_rate_csv(const MeasurementRecord& record, const std::string& path);

struct HomodyneOutcome {
  double dY = 0.0;
  double dW = 0.0;
  double K = 0.0;
  double trace_before_renorm = 1.0;
};

struct PhotodetectOutcome {
  bool jumped = false;
  double nu = 0.0;
  double trace_before_renorm = 1.0;
};

/// In-place Euler steppers for both measurement schemes. Each step consumes
/// exactly one draw: a standard normal (homodyne) or a uniform (counting).
/// Holds scratch space, so use one instance per thread.
class FilterStepper {
 public:
  FilterStepper(const SystemModel& model, const Pulse& pulse);

  /// One step of the second-order Ito map
  ///   M = 1 - i H_eff dt + L dY + L^2 (dY^2 - dt)/2,  dY = K dt + sqrt(dt) z,
  /// written on the hierarchy blocks (see the implementation), followed by
  /// joint renormalization. The map is positive on the underlying joint
  /// state, so r11 stays positive semidefinite.
  HomodyneOutcome homodyne(Hierarchy& h, double dt, double z);
  /// Jump when u < nu dt. Otherwise the normalized no-detection equation
  ///   dr = [rates(r) - J(r) + nu(r) r] dt
  /// is advanced by one RK4 step, with the Hamiltonian's state input frozen
  /// at the start of the step.
  PhotodetectOutcome photodetect(Hierarchy& h, double dt, double u);

  double k_rate(const Hierarchy& h) const;
  double nu_rate(const Hierarchy& h) const;

  const SystemModel& model() const { return *model_; }
  const Pulse& pulse() const { return *pulse_; }

 private:
  void renormalize(Hierarchy& h, double& trace_before);
  void prepare(const Hierarchy& h);
  /// Unnormalized jump maps of every component (nu J/nu without the 1/nu).
  void jump_maps(const Hierarchy& h, cplx xi, HierarchyRates& out);
  /// Right-hand side of the no-detection equation at time t.
  void no_jump_rhs(const Hierarchy& h, double t, cplx xi, HierarchyRates& out);

  const SystemModel* model_;
  const Pulse* pulse_;
  HierarchyEvaluator eval_;
  Operator LdL_;
  HierarchyRates rates_;
  HierarchyRates jumps_;
  HierarchyRates k1_, k2_, k3_, k4_;
  Hierarchy stage_;
  DensityOp frozen_;
  DensityOp scratch_;
  Operator H_, P_, R_, q_;
  DensityOp a_, b_, c_, d_;
};

struct HomodyneStep {
  Hierarchy state;
  double dY = 0.0;
};

struct PhotodetectStep {
  Hierarchy state;
  bool jumped = false;
};

HomodyneStep sme_homodyne_step(const SystemModel& model, const Pulse& pulse, const Hierarchy& h,
                               double dt, NoiseSource& noise);
PhotodetectStep sme_photodetect_step(const SystemModel& model, const Pulse& pulse,
                                     const Hierarchy& h, double dt, NoiseSource& noise);

/// Named scalar observables evaluated at sample points. `evaluate` receives
/// the state and the current rate (K_t or nu_t) and fills one value per name.
struct ObservableSet {
  std::vector<std::string> names;
  std::function<void(const Hierarchy& h, double rate, std::span<double> out)> evaluate;
};

/// Running extrema of the invariant residues along a trajectory.
struct TrajectoryAudit {
  double max_trace_error = 0.0;      // after renormalization
  double max_hermiticity = 0.0;      // r11 and r00
  double max_adjoint_pairing = 0.0;  // |r10 - r01^dag|
  double min_eigenvalue = 0.0;       // of r11
  double max_pre_renorm_drift = 0.0; // |tr r11 - 1| before renormalization
  std::int64_t steps = 0;

  void merge(const TrajectoryAudit& other);
};

struct TrajectoryOptions {
  int sample_stride = 1;
  const ObservableSet* observables = nullptr;
  bool audit = false;
  /// Eigenvalue audit on every step (otherwise at sample points only).
  bool eigenvalues_every_step = false;
  /// Photodetection only: once a count has happened, the run ends at the
  /// first step where this returns true.
  std::function<bool(const Hierarchy&)> stop_after_detection;
};

struct TrajectoryResult {
  std::vector<double> times;
  std::vector<std::vector<double>> samples;  // one row per time, one column per observable
  MeasurementRecord record;
  TrajectoryAudit audit;
  Hierarchy final_state;
  bool stopped_early = false;
};

/// Fixed-grid loop over n = T/dt steps starting at h0.t. Samples are taken
/// at step indices divisible by the stride and at the final time. Stepper
/// errors are rethrown with the failure time in the message.
TrajectoryResult simulate_trajectory(const SystemModel& model, const Pulse& pulse, Scheme scheme,
                                     const Hierarchy& h0, double T, double dt, NoiseSource& noise,
                                     const TrajectoryOptions& options = {});

/// Number of steps for horizon T; throws if T is not a multiple of dt.
std::int64_t step_count(double T, double dt);

/// The photodetection filter is deterministic until the first count, so
/// every trajectory of an ensemble shares that prefix. This caches it once:
/// per-step jump probabilities, periodic state checkpoints, sampled
/// observables and running audits. run_from() reproduces
/// simulate_trajectory bit for bit.
class NoDetectionBranch {
 public:
  NoDetectionBranch(const SystemModel& model, const Pulse& pulse, const Hierarchy& h0, double T,
                    double dt, const TrajectoryOptions& options, int checkpoint_every = 16);

  std::int64_t steps() const { return static_cast<std::int64_t>(threshold_.size()); }
  /// nu_k dt, compared against the uniform draw of step k.
  double jump_threshold(std::int64_t k) const { return threshold_[k]; }
  /// Filter state at the start of step k (0 <= k <= steps()).
  Hierarchy state_at(std::int64_t k) const;

  TrajectoryResult run_from(NoiseSource& noise) const;

 private:
  const SystemModel* model_;
  const Pulse* pulse_;
  double t_start_;
  double dt_;
  std::int64_t n_steps_;
  TrajectoryOptions options_;
  int checkpoint_every_;
  std::vector<Hierarchy> checkpoints_;
  std::vector<double> threshold_;
  std::vector<double> sample_times_;
  std::vector<std::vector<double>> sample_rows_;
  std::vector<double> sample_rates_;
  std::vector<TrajectoryAudit> audit_prefix_;  // running audit after step k
  std::int64_t failure_step_ = -1;
  std::string failure_message_;
};

}  // namespace pf
