#pragma once

// Operational shell: configuration, ensemble execution, aggregation and
// file output.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pf/experiments.hpp"

namespace pf {

enum class Experiment { SingleMode, Kerr, MeOnly };
enum class SchemeChoice { Homodyne, Photodetect, Unconditional };
enum class Representation { Sme, Sse };
enum class OutputFormat { Csv, Json };

/// Every knob of a run. Optional fields take documented defaults that depend
/// on other fields; use the resolved_* accessors.
struct RunConfig {
  /// me_only solves the single-mode master equation; scheme=unconditional
  /// does the same for whichever experiment is selected.
  Experiment experiment = Experiment::SingleMode;
  SchemeChoice scheme = SchemeChoice::Photodetect;
  Representation representation = Representation::Sme;

  std::optional<double> gamma;  // default kappa_a
  double kappa_a = 1.0;
  double kappa_b = 4.0;
  double chi = 0.1;
  std::optional<double> beta;   // real drive; default kappa_b^2 / (4 kappa_a)
  double t0 = 0.0;

  std::optional<double> dt;     // default 1e-3 / kappa_a
  std::optional<double> T;      // default 12 / kappa_a
  int sample_stride = 100;
  int dim_a = 3;
  int dim_b = 0;                // 0 = automatic
  Frame frame = Frame::Auto;
  bool feedback = true;

  std::int64_t n_traj = 1;
  std::uint64_t master_seed = 0;
  int workers = 0;              // 0 = hardware concurrency

  std::string output_dir = "out";
  OutputFormat format = OutputFormat::Csv;
  int save_trajectories = 1;    // per-trajectory series written to disk

  double hist_bin_width = 0.005;
  double hist_lo = 0.0;
  double hist_hi = 0.3;
  /// Kerr counting runs end once mode a is empty after the detection.
  bool stop_after_detection = true;

  double resolved_gamma() const { return gamma.value_or(kappa_a); }
  double resolved_dt() const { return dt.value_or(1e-3 / kappa_a); }
  double resolved_T() const { return T.value_or(12.0 / kappa_a); }
  double resolved_beta() const { return beta.value_or(kappa_b * kappa_b / (4.0 * kappa_a)); }
  bool is_kerr() const { return experiment == Experiment::Kerr; }
  bool is_me() const {
    return experiment == Experiment::MeOnly || scheme == SchemeChoice::Unconditional;
  }

  SingleModeScenario single_mode() const;
  KerrScenario kerr() const;

  /// Throws ValidationError naming the offending field.
  void validate() const;
};

/// Keys accepted by the config file and as --key flags.
const std::vector<std::string>& config_keys();

/// Applies one key=value pair. Unknown keys raise a ValidationError that
/// lists the valid ones.
void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

/// Starts from `base`, reads a flat `key = value` file (# starts a comment),
/// then applies the overrides in order, so flags win over the file.
/// Validates the result.
RunConfig parse_config(const std::optional<std::string>& path,
                       const std::vector<std::pair<std::string, std::string>>& overrides = {},
                       RunConfig base = {});

/// Canonical `key = value` text of a configuration, one line per key, with
/// defaults resolved.
std::string canonical_config(const RunConfig& cfg);

/// Git-style content hash: SHA-1 of "blob <size>\0" + text, in hex.
std::string git_blob_hash(const std::string& text);

/// Correctly rounded floating-point sum (Shewchuk partials): the value does
/// not depend on the order of additions, so ensembles aggregate to the same
/// bits whatever the scheduling and merges are exact.
class ExactSum {
 public:
  void add(double x);
  void merge(const ExactSum& other);
  double value() const;

 private:
  std::vector<double> partials_;
};

struct SeriesStats {
  std::vector<std::string> names;
  std::vector<double> times;
  std::vector<std::vector<double>> mean;  // [checkpoint][observable]
  std::vector<std::vector<double>> se;    // standard error of the mean
  std::vector<std::int64_t> count;        // trajectories that reached the checkpoint
};

struct FailureRecord {
  std::int64_t index;
  double time;
  std::string cause;
};

/// Order-independent running aggregate of trajectory results.
class EnsembleAccumulator {
 public:
  EnsembleAccumulator(std::vector<std::string> names, std::vector<double> times);
  /// `rows` are sampled at the first rows.size() checkpoints.
  void add(const std::vector<std::vector<double>>& rows);
  void merge(const EnsembleAccumulator& other);
  SeriesStats stats() const;

 private:
  std::vector<std::string> names_;
  std::vector<double> times_;
  std::vector<ExactSum> sum_, sum_sq_;
  std::vector<std::int64_t> count_;
};

struct EnsembleResult {
  RunConfig config;
  SeriesStats stats;
  std::int64_t n_success = 0;
  std::vector<FailureRecord> failures;
  /// jump_histogram[k] = trajectories with exactly k detections.
  std::vector<std::int64_t> jump_histogram;
  /// Per trajectory index (NaN for failed ones).
  std::vector<double> first_jump_time;
  std::vector<double> max_shift;  // Kerr only
  std::optional<ShiftHistogram> histogram;
  /// Counting runs: detection rate nu at the start of every step along the
  /// branch with no detection so far (step k at t = k dt).
  std::vector<double> no_detection_nu;
  double delta_beta = 0.0;
  TrajectoryAudit audit;
  /// The first save_trajectories successful runs, by index.
  std::vector<std::pair<std::int64_t, TrajectoryResult>> saved;
  /// Set for Kerr runs: resolved frame and dim_b.
  std::string frame;
  int dim_b = 0;
};

/// Runs trajectories 0..n_traj-1, trajectory i on NoiseSource(master_seed, i).
/// Failed trajectories are logged; the run aborts with a NumericalError
/// once more than 1% of n_traj have failed. me_only configurations
/// integrate the master equation instead and report a single "trajectory".
EnsembleResult run_ensemble(const RunConfig& cfg);

/// Writes the result surfaces into cfg.output_dir (created if missing):
/// series, counts, shifts, histogram, failures, per-trajectory files,
/// summary.json and metadata.json. Returns the paths written.
std::vector<std::string> write_outputs(const EnsembleResult& result, const RunConfig& cfg);

/// Process exit code for an exception thrown by the library: 2 validation,
/// 3 numerical, 4 IO, 1 anything else.
int exit_code_for(const std::exception& e);

}  // namespace pf
