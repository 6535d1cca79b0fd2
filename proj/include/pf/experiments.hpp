#pragma once

// Scenario builders and analysis for the two worked examples: an empty
// cavity fed by one photon, and a two-mode Kerr cavity where the photon in
// mode a shifts the coherent field held in mode b.

#include <optional>
#include <string>
#include <vector>

#include "pf/filters.hpp"

namespace pf {

// ---------------------------------------------------------------- single mode

struct SingleModeScenario {
  double gamma = 1.0;
  double kappa = 1.0;
  int dim_a = 3;
  double t0 = 0.0;

  void validate() const;
};

/// H = 0, L = sqrt(kappa) a, exponential pulse, cavity in vacuum.
struct SingleModeSetup {
  SingleModeScenario scenario;
  SystemModel model;
  Pulse pulse;
  Hierarchy h0;
  Operator a;
  Operator n;
};

SingleModeSetup build_single_mode(const SingleModeScenario& s);

/// Columns: n11, a01 = tr[a r10], one00 = tr r00, n00.
ObservableSet single_mode_observables(const SingleModeSetup& setup);

/// Scalar moments of the counting filter for the single-mode cavity, valid
/// while at most one excitation is present. One value per grid point
/// t0 + k dt, k = 0..n.
struct MomentSeries {
  std::vector<double> times;
  std::vector<double> n11;
  std::vector<cplx> a01;
  std::vector<double> one00;
  std::vector<double> n00;
  std::vector<double> nu;
};

/// Integrates the four moment equations with the same scheme as the matrix
/// filter: the jump brackets at the steps whose end time appears in
/// `jump_times`, RK4 on the normalized no-detection equations elsewhere.
MomentSeries moment_oracle_pd(const SingleModeScenario& s, const std::vector<double>& jump_times,
                              double T, double dt);

// ----------------------------------------------------------------------- Kerr

enum class Frame { Bare, Displaced, Auto };

std::string to_string(Frame f);
Frame parse_frame(const std::string& s);

struct KerrScenario {
  double chi = 0.1;
  double kappa_a = 1.0;
  double kappa_b = 4.0;
  /// Drive on mode b. Unset means kappa_b^2 / (4 kappa_a).
  std::optional<cplx> beta;
  /// Photon rate. Unset means kappa_a.
  std::optional<double> gamma;
  double t0 = 0.0;
  int dim_a = 3;
  /// 0 picks the smallest dimension that passes the truncation audit.
  int dim_b = 0;
  Frame frame = Frame::Auto;
  bool feedback = true;

  void validate() const;
  cplx beta_value() const;
  double gamma_value() const;
  /// Auto resolves to Displaced when kappa_b >= 3 kappa_a.
  Frame resolved_frame() const;
  /// Steady-state amplitude of the driven mode b, -2 i beta / kappa_b.
  cplx alpha_ss() const;
  /// Benchmark shift 4 |beta| chi / kappa_b^2.
  double delta_beta() const;
};

/// Smallest b truncation for which the coherent state of amplitude
/// |centre| + margin leaves less than 1e-6 on the top level.
int required_dim_b(cplx centre, double margin = 0.5);

struct KerrSetup {
  KerrScenario scenario;
  Frame frame;         // resolved
  cplx alpha;          // alpha_ss, or 0 in the bare frame
  SystemModel model;
  Pulse pulse;
  Hierarchy h0;
  Operator a;          // monitored mode
  Operator n_a;
  Operator b;          // physical b, i.e. c + alpha in the displaced frame
  Operator n_b;        // physical b^dag b
};

/// Throws TruncationError naming the required dim_b when the chosen
/// truncation cannot hold the driven steady state.
KerrSetup build_kerr(const KerrScenario& s);

/// delta_a = -chi tr[n_b r11].
double feedback_detuning(const KerrSetup& setup, const Hierarchy& h);

/// Columns: n_a, X_b, P_b (physical frame).
ObservableSet kerr_observables(const KerrSetup& setup);

/// Ends a counting run once mode a has emptied after the detection; from
/// then on mode b only relaxes, so the maximum shift is already known.
std::function<bool(const Hierarchy&)> kerr_stop_when_a_empty(const KerrSetup& setup,
                                                             double threshold = 1e-9);

struct TrajectoryObservables {
  std::vector<double> times;
  std::vector<double> n_a;
  std::vector<double> X_b;
  std::vector<double> P_b;
  std::vector<double> nu;
  std::vector<double> jump_times;
  double max_shift = 0.0;
};

/// Unpacks a run made with kerr_observables().
TrajectoryObservables kerr_trajectory_observables(const TrajectoryResult& r);

/// max_t |X_b(t) - X_b(0)|.
double max_conditional_shift(const TrajectoryObservables& obs);

/// First time after `t_from` at which |X_b - X_b(0)| drops below
/// `fraction` of its value at t_from; NaN if it never does.
double relaxation_time(const TrajectoryObservables& obs, double t_from, double fraction);

/// Once mode a is empty after the detection, the Kerr and feedback terms
/// vanish and mode b evolves on its own. Integrates that one-mode Lindblad
/// equation from the final filter state and returns the time for
/// |X_b - X_b(0)| to fall below `fraction` of its starting value. NaN when
/// the starting shift is zero or the decay takes longer than `horizon`.
double post_detection_relaxation(const KerrSetup& setup, const Hierarchy& h, double fraction,
                                 double dt, double horizon);

struct ShiftHistogram {
  double lo = 0.0;
  double bin_width = 0.0;
  std::vector<std::int64_t> counts;
  std::int64_t below = 0;  // values under lo
  std::int64_t above = 0;  // values at or beyond the last edge

  struct Gap {
    int first_bin;
    int last_bin;  // inclusive
    double left;
    double right;
  };
  /// Run of >= 2 empty bins with occupied bins on both sides; runs that
  /// leave >= 5% of the values on each side are preferred, then longer runs.
  std::optional<Gap> gap;
  /// A gap exists and each side carries at least 5% of the values.
  bool bimodal = false;
  double mass_left = 0.0;
  double mass_right = 0.0;

  double bin_left(int i) const { return lo + i * bin_width; }
  double bin_right(int i) const { return lo + (i + 1) * bin_width; }
};

/// Fixed-edge histogram over [lo, hi). Needs at least 100 values.
ShiftHistogram shift_histogram(const std::vector<double>& values, double bin_width, double lo,
                               double hi);

/// Takes one counting step with the given uniform draw and compares the
/// change of <b>_11 with the moment equation for d<b>_11. Returns the
/// absolute residual.
double b_increment_check(const KerrSetup& setup, const Hierarchy& h, double dt, double u);

double median(std::vector<double> values);

}  // namespace pf
