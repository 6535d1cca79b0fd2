#include "pf/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include "json.hpp"
#include "pf/csv.hpp"
#include "pf/embedding.hpp"
#include "pf/errors.hpp"

namespace pf {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ValidationError(key + ": expected a number, got '" + v + "'");
  }
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ValidationError(key + ": expected an integer, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ValidationError(key + ": expected true or false, got '" + v + "'");
}

std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::SingleMode: return "single_mode";
    case Experiment::Kerr: return "kerr";
    case Experiment::MeOnly: return "me_only";
  }
  return "";
}

std::string to_string(SchemeChoice s) {
  switch (s) {
    case SchemeChoice::Homodyne: return "homodyne";
    case SchemeChoice::Photodetect: return "photodetect";
    case SchemeChoice::Unconditional: return "unconditional";
  }
  return "";
}

Scheme filter_scheme(SchemeChoice s) {
  return s == SchemeChoice::Homodyne ? Scheme::Homodyne : Scheme::Photodetect;
}

std::string num(double x) { return format_number(x); }

}  // namespace

// ------------------------------------------------------------------ config

SingleModeScenario RunConfig::single_mode() const {
  SingleModeScenario s;
  s.gamma = resolved_gamma();
  s.kappa = kappa_a;
  s.dim_a = dim_a;
  s.t0 = t0;
  return s;
}

KerrScenario RunConfig::kerr() const {
  KerrScenario s;
  s.chi = chi;
  s.kappa_a = kappa_a;
  s.kappa_b = kappa_b;
  s.beta = cplx(resolved_beta(), 0.0);
  s.gamma = resolved_gamma();
  s.t0 = t0;
  s.dim_a = dim_a;
  s.dim_b = dim_b;
  s.frame = frame;
  s.feedback = feedback;
  return s;
}

void RunConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ValidationError(std::string(name) + " must be > 0 (got " + num(v) + ")");
    }
  };
  positive(kappa_a, "kappa_a");
  positive(kappa_b, "kappa_b");
  positive(chi, "chi");
  positive(resolved_gamma(), "gamma");
  positive(resolved_dt(), "dt");
  positive(resolved_T(), "T");
  positive(hist_bin_width, "hist_bin_width");
  if (beta && !std::isfinite(*beta)) throw ValidationError("beta must be finite");
  if (!std::isfinite(t0)) throw ValidationError("t0 must be finite");
  if (!(hist_hi > hist_lo)) throw ValidationError("hist_hi must exceed hist_lo");
  if (sample_stride < 1) throw ValidationError("sample_stride must be >= 1");
  if (n_traj < 1) throw ValidationError("n_traj must be >= 1");
  if (workers < 0) throw ValidationError("workers must be >= 0");
  if (save_trajectories < 0) throw ValidationError("save_trajectories must be >= 0");
  if (dim_a < 2) throw ValidationError("dim_a must be >= 2");
  if (dim_b != 0 && dim_b < 2) throw ValidationError("dim_b must be >= 2 (or 0 for automatic)");
  step_count(resolved_T(), resolved_dt());
  if (representation == Representation::Sse) {
    if (is_kerr()) {
      throw UnsupportedConfigError(
          "representation: sse cannot carry the unmonitored mode-b channel; use sme");
    }
    if (is_me()) throw ValidationError("representation: sse needs a conditional scheme");
  }
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "experiment", "scheme",  "representation", "gamma",          "kappa",
      "kappa_a",    "kappa_b", "chi",            "beta",           "t0",
      "dt",         "T",       "sample_stride",  "dim_a",          "dim_b",
      "frame",      "feedback", "n_traj",        "seed",           "workers",
      "output_dir", "format",  "save_trajectories", "hist_bin_width", "hist_lo",
      "hist_hi",    "stop_after_detection"};
  return keys;
}

void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "experiment") {
    if (v == "single_mode") cfg.experiment = Experiment::SingleMode;
    else if (v == "kerr") cfg.experiment = Experiment::Kerr;
    else if (v == "me_only") cfg.experiment = Experiment::MeOnly;
    else throw ValidationError("experiment: expected single_mode|kerr|me_only, got '" + v + "'");
  } else if (key == "scheme") {
    if (v == "homodyne") cfg.scheme = SchemeChoice::Homodyne;
    else if (v == "photodetect") cfg.scheme = SchemeChoice::Photodetect;
    else if (v == "unconditional") cfg.scheme = SchemeChoice::Unconditional;
    else throw ValidationError("scheme: expected homodyne|photodetect|unconditional, got '" + v + "'");
  } else if (key == "representation") {
    if (v == "sme") cfg.representation = Representation::Sme;
    else if (v == "sse") cfg.representation = Representation::Sse;
    else throw ValidationError("representation: expected sme|sse, got '" + v + "'");
  } else if (key == "gamma") {
    cfg.gamma = parse_double(key, v);
  } else if (key == "kappa" || key == "kappa_a") {
    cfg.kappa_a = parse_double(key, v);
  } else if (key == "kappa_b") {
    cfg.kappa_b = parse_double(key, v);
  } else if (key == "chi") {
    cfg.chi = parse_double(key, v);
  } else if (key == "beta") {
    cfg.beta = parse_double(key, v);
  } else if (key == "t0") {
    cfg.t0 = parse_double(key, v);
  } else if (key == "dt") {
    cfg.dt = parse_double(key, v);
  } else if (key == "T") {
    cfg.T = parse_double(key, v);
  } else if (key == "sample_stride") {
    cfg.sample_stride = static_cast<int>(parse_int(key, v));
  } else if (key == "dim_a") {
    cfg.dim_a = static_cast<int>(parse_int(key, v));
  } else if (key == "dim_b") {
    cfg.dim_b = static_cast<int>(parse_int(key, v));
  } else if (key == "frame") {
    cfg.frame = parse_frame(v);
  } else if (key == "feedback") {
    cfg.feedback = parse_bool(key, v);
  } else if (key == "n_traj") {
    cfg.n_traj = parse_int(key, v);
  } else if (key == "seed") {
    const std::int64_t s = parse_int(key, v);
    if (s < 0) throw ValidationError("seed must be >= 0");
    cfg.master_seed = static_cast<std::uint64_t>(s);
  } else if (key == "workers") {
    cfg.workers = static_cast<int>(parse_int(key, v));
  } else if (key == "output_dir") {
    if (v.empty()) throw ValidationError("output_dir must not be empty");
    cfg.output_dir = v;
  } else if (key == "format") {
    if (v == "csv") cfg.format = OutputFormat::Csv;
    else if (v == "json") cfg.format = OutputFormat::Json;
    else throw ValidationError("format: expected csv|json, got '" + v + "'");
  } else if (key == "save_trajectories") {
    cfg.save_trajectories = static_cast<int>(parse_int(key, v));
  } else if (key == "hist_bin_width") {
    cfg.hist_bin_width = parse_double(key, v);
  } else if (key == "hist_lo") {
    cfg.hist_lo = parse_double(key, v);
  } else if (key == "hist_hi") {
    cfg.hist_hi = parse_double(key, v);
  } else if (key == "stop_after_detection") {
    cfg.stop_after_detection = parse_bool(key, v);
  } else {
    std::string valid;
    for (const auto& k : config_keys()) valid += (valid.empty() ? "" : ", ") + k;
    throw ValidationError("unknown configuration key '" + key + "'; valid keys: " + valid);
  }
}

RunConfig parse_config(const std::optional<std::string>& path,
                       const std::vector<std::pair<std::string, std::string>>& overrides,
                       RunConfig base) {
  RunConfig cfg = std::move(base);
  if (path) {
    std::ifstream in(*path);
    if (!in) throw IoError("cannot read config file " + *path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ValidationError(*path + ":" + std::to_string(line_no) + ": expected key = value");
      }
      apply_config_value(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
    }
  }
  for (const auto& [k, v] : overrides) apply_config_value(cfg, k, v);
  cfg.validate();
  return cfg;
}

std::string canonical_config(const RunConfig& c) {
  std::ostringstream out;
  auto line = [&](const std::string& k, const std::string& v) { out << k << " = " << v << "\n"; };
  line("experiment", to_string(c.experiment));
  line("scheme", to_string(c.scheme));
  line("representation", c.representation == Representation::Sme ? "sme" : "sse");
  line("gamma", num(c.resolved_gamma()));
  line("kappa_a", num(c.kappa_a));
  if (c.is_kerr()) {
    line("kappa_b", num(c.kappa_b));
    line("chi", num(c.chi));
    line("beta", num(c.resolved_beta()));
    line("dim_b", std::to_string(c.dim_b));
    line("frame", to_string(c.frame));
    line("feedback", c.feedback ? "true" : "false");
    line("stop_after_detection", c.stop_after_detection ? "true" : "false");
    line("hist_bin_width", num(c.hist_bin_width));
    line("hist_lo", num(c.hist_lo));
    line("hist_hi", num(c.hist_hi));
  }
  line("t0", num(c.t0));
  line("dt", num(c.resolved_dt()));
  line("T", num(c.resolved_T()));
  line("sample_stride", std::to_string(c.sample_stride));
  line("dim_a", std::to_string(c.dim_a));
  line("n_traj", std::to_string(c.n_traj));
  line("seed", std::to_string(c.master_seed));
  return out.str();
}

std::string git_blob_hash(const std::string& text) {
  std::string blob = "blob " + std::to_string(text.size());
  blob.push_back('\0');
  blob += text;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(blob.data(), blob.size(), digest, &len, EVP_sha1(), nullptr) != 1) {
    throw Error("SHA-1 digest failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

// ------------------------------------------------------------- aggregation

void ExactSum::add(double x) {
  std::size_t i = 0;
  for (double y : partials_) {
    if (std::abs(x) < std::abs(y)) std::swap(x, y);
    const double hi = x + y;
    const double lo = y - (hi - x);
    if (lo != 0.0) partials_[i++] = lo;
    x = hi;
  }
  partials_.resize(i);
  partials_.push_back(x);
}

void ExactSum::merge(const ExactSum& other) {
  for (double p : other.partials_) add(p);
}

double ExactSum::value() const {
  // Round the exact sum of the non-overlapping partials (as in fsum).
  if (partials_.empty()) return 0.0;
  std::size_t n = partials_.size();
  double hi = partials_[--n];
  double lo = 0.0;
  while (n > 0) {
    const double x = hi;
    const double y = partials_[--n];
    hi = x + y;
    const double yr = hi - x;
    lo = y - yr;
    if (lo != 0.0) break;
  }
  if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) || (lo > 0.0 && partials_[n - 1] > 0.0))) {
    const double y = lo * 2.0;
    const double x = hi + y;
    if (y == x - hi) hi = x;
  }
  return hi;
}

EnsembleAccumulator::EnsembleAccumulator(std::vector<std::string> names, std::vector<double> times)
    : names_(std::move(names)), times_(std::move(times)) {
  sum_.resize(times_.size() * names_.size());
  sum_sq_.resize(times_.size() * names_.size());
  count_.assign(times_.size(), 0);
}

void EnsembleAccumulator::add(const std::vector<std::vector<double>>& rows) {
  if (rows.size() > times_.size()) throw DimensionError("accumulator: too many sample rows");
  const std::size_t m = names_.size();
  for (std::size_t j = 0; j < rows.size(); ++j) {
    if (rows[j].size() != m) throw DimensionError("accumulator: row width");
    ++count_[j];
    for (std::size_t q = 0; q < m; ++q) {
      sum_[j * m + q].add(rows[j][q]);
      sum_sq_[j * m + q].add(rows[j][q] * rows[j][q]);
    }
  }
}

void EnsembleAccumulator::merge(const EnsembleAccumulator& other) {
  if (other.names_ != names_ || other.times_.size() != times_.size()) {
    throw DimensionError("accumulator: incompatible merge");
  }
  for (std::size_t i = 0; i < sum_.size(); ++i) {
    sum_[i].merge(other.sum_[i]);
    sum_sq_[i].merge(other.sum_sq_[i]);
  }
  for (std::size_t j = 0; j < count_.size(); ++j) count_[j] += other.count_[j];
}

SeriesStats EnsembleAccumulator::stats() const {
  SeriesStats s;
  s.names = names_;
  s.times = times_;
  s.count = count_;
  const std::size_t m = names_.size();
  for (std::size_t j = 0; j < times_.size(); ++j) {
    std::vector<double> mean(m, kNaN), se(m, kNaN);
    const double n = static_cast<double>(count_[j]);
    for (std::size_t q = 0; q < m && count_[j] > 0; ++q) {
      mean[q] = sum_[j * m + q].value() / n;
      if (count_[j] > 1) {
        const double var = std::max(0.0, (sum_sq_[j * m + q].value() - n * mean[q] * mean[q]) /
                                             (n - 1.0));
        se[q] = std::sqrt(var / n);
      } else {
        se[q] = 0.0;
      }
    }
    s.mean.push_back(std::move(mean));
    s.se.push_back(std::move(se));
  }
  return s;
}

// -------------------------------------------------------------- execution

namespace {

std::vector<double> sample_grid(double t_start, double dt, std::int64_t n, int stride) {
  std::vector<double> times;
  for (std::int64_t k = 0; k < n; k += stride) times.push_back(t_start + k * dt);
  times.push_back(t_start + n * dt);
  return times;
}

EnsembleResult run_me(const RunConfig& cfg) {
  const double dt = cfg.resolved_dt();
  const std::int64_t n = step_count(cfg.resolved_T(), dt);
  EnsembleResult r;
  r.config = cfg;
  r.n_success = 1;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> names;
  auto integrate = [&](const SystemModel& model, const Pulse& pulse, Hierarchy h,
                       const ObservableSet& obs, std::size_t columns) {
    names.assign(obs.names.begin(), obs.names.begin() + columns);
    std::vector<double> row(obs.names.size());
    auto sample = [&] {
      obs.evaluate(h, 0.0, row);
      rows.emplace_back(row.begin(), row.begin() + columns);
    };
    for (std::int64_t k = 0; k < n; ++k) {
      if (k % cfg.sample_stride == 0) sample();
      h = step_me(model, pulse, h, dt);
    }
    sample();
  };
  if (cfg.is_kerr()) {
    const KerrSetup setup = build_kerr(cfg.kerr());
    r.frame = to_string(setup.frame);
    r.dim_b = setup.model.layout().dims()[1];
    r.delta_beta = setup.scenario.delta_beta();
    integrate(setup.model, setup.pulse, setup.h0, kerr_observables(setup), 3);
  } else {
    const SingleModeSetup setup = build_single_mode(cfg.single_mode());
    integrate(setup.model, setup.pulse, setup.h0, single_mode_observables(setup), 1);
  }
  EnsembleAccumulator acc(names, sample_grid(0.0, dt, n, cfg.sample_stride));
  acc.add(rows);
  r.stats = acc.stats();
  return r;
}

// Everything a worker needs to produce trajectory i; shared read-only.
struct TrajectoryFactory {
  explicit TrajectoryFactory(const RunConfig& c) : cfg(c) {}

  const RunConfig& cfg;
  const SystemModel* model = nullptr;
  const Pulse* pulse = nullptr;
  Hierarchy h0;
  Ket psi0;
  const ObservableSet* obs = nullptr;
  TrajectoryOptions options;
  std::unique_ptr<NoDetectionBranch> branch;

  TrajectoryResult run(std::int64_t i) const {
    NoiseSource noise(cfg.master_seed, static_cast<std::uint64_t>(i));
    const double T = cfg.resolved_T();
    const double dt = cfg.resolved_dt();
    if (branch) return branch->run_from(noise);
    if (cfg.representation == Representation::Sse) {
      const JointKet jk = initial_joint_ket(psi0, model->layout(), h0.t);
      return simulate_sse_trajectory(*model, *pulse, filter_scheme(cfg.scheme), jk, T, dt, noise,
                                     options);
    }
    return simulate_trajectory(*model, *pulse, filter_scheme(cfg.scheme), h0, T, dt, noise,
                               options);
  }
};

}  // namespace

EnsembleResult run_ensemble(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.is_me()) return run_me(cfg);

  const double dt = cfg.resolved_dt();
  const std::int64_t n_steps = step_count(cfg.resolved_T(), dt);
  const bool kerr = cfg.is_kerr();
  const Scheme scheme = filter_scheme(cfg.scheme);

  std::optional<SingleModeSetup> single;
  std::optional<KerrSetup> two_mode;
  ObservableSet obs;
  TrajectoryFactory factory(cfg);
  EnsembleResult result;
  result.config = cfg;
  if (kerr) {
    two_mode.emplace(build_kerr(cfg.kerr()));
    obs = kerr_observables(*two_mode);
    factory.model = &two_mode->model;
    factory.pulse = &two_mode->pulse;
    factory.h0 = two_mode->h0;
    result.frame = to_string(two_mode->frame);
    result.dim_b = two_mode->model.layout().dims()[1];
    result.delta_beta = two_mode->scenario.delta_beta();
    if (cfg.stop_after_detection && scheme == Scheme::Photodetect) {
      factory.options.stop_after_detection = kerr_stop_when_a_empty(*two_mode);
    }
  } else {
    single.emplace(build_single_mode(cfg.single_mode()));
    obs = single_mode_observables(*single);
    factory.model = &single->model;
    factory.pulse = &single->pulse;
    factory.h0 = single->h0;
    factory.psi0 = fock_ket(0, cfg.dim_a);
  }
  factory.obs = &obs;
  factory.options.observables = &obs;
  factory.options.sample_stride = cfg.sample_stride;
  factory.options.audit = true;
  factory.options.eigenvalues_every_step = !kerr;
  if (scheme == Scheme::Photodetect && cfg.representation == Representation::Sme) {
    factory.branch = std::make_unique<NoDetectionBranch>(*factory.model, *factory.pulse,
                                                         factory.h0, cfg.resolved_T(), dt,
                                                         factory.options, 8);
    for (std::int64_t k = 0; k < factory.branch->steps(); ++k) {
      result.no_detection_nu.push_back(factory.branch->jump_threshold(k) / dt);
    }
  }

  std::vector<std::string> names = obs.names;
  names.push_back(scheme == Scheme::Homodyne ? "K" : "nu");
  const std::vector<double> grid = sample_grid(0.0, dt, n_steps, cfg.sample_stride);

  const std::int64_t n = cfg.n_traj;
  result.first_jump_time.assign(n, kNaN);
  if (kerr) result.max_shift.assign(n, kNaN);
  const std::int64_t keep = std::min<std::int64_t>(cfg.save_trajectories, n);
  std::vector<std::optional<TrajectoryResult>> saved(keep);

  struct WorkerState {
    EnsembleAccumulator acc;
    std::vector<std::int64_t> jumps;
    TrajectoryAudit audit;
    std::vector<FailureRecord> failures;
    std::int64_t ok = 0;
  };
  int workers = cfg.workers > 0 ? cfg.workers
                                : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = static_cast<int>(std::min<std::int64_t>(workers, n));
  std::vector<WorkerState> states;
  for (int w = 0; w < workers; ++w) states.push_back({EnsembleAccumulator(names, grid), {}, {}, {}, 0});

  std::atomic<std::int64_t> next{0};
  std::atomic<std::int64_t> failed{0};
  std::atomic<bool> abort{false};
  const auto max_failures = static_cast<std::int64_t>(std::floor(0.01 * static_cast<double>(n)));

  auto work = [&](WorkerState& st) {
    for (;;) {
      if (abort.load()) return;
      const std::int64_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        TrajectoryResult r = factory.run(i);
        std::vector<std::vector<double>> rows = r.samples;
        for (std::size_t j = 0; j < rows.size(); ++j) rows[j].push_back(r.record.rates[j]);
        st.acc.add(rows);
        st.audit.merge(r.audit);
        if (scheme == Scheme::Photodetect) {
          const std::size_t k = r.record.jump_times.size();
          if (st.jumps.size() <= k) st.jumps.resize(k + 1, 0);
          ++st.jumps[k];
          if (k > 0) result.first_jump_time[i] = r.record.jump_times.front();
        }
        if (kerr) result.max_shift[i] = kerr_trajectory_observables(r).max_shift;
        if (i < keep) saved[i] = std::move(r);
        ++st.ok;
      } catch (const NumericalError& e) {
        st.failures.push_back({i, e.time(), e.what()});
        if (failed.fetch_add(1) + 1 > max_failures) abort.store(true);
      }
    }
  };
  if (workers == 1) {
    work(states[0]);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, std::ref(states[w]));
    for (auto& t : pool) t.join();
  }

  EnsembleAccumulator total(names, grid);
  for (auto& st : states) {
    total.merge(st.acc);
    result.audit.merge(st.audit);
    result.n_success += st.ok;
    for (auto& f : st.failures) result.failures.push_back(std::move(f));
    if (result.jump_histogram.size() < st.jumps.size()) result.jump_histogram.resize(st.jumps.size(), 0);
    for (std::size_t k = 0; k < st.jumps.size(); ++k) result.jump_histogram[k] += st.jumps[k];
  }
  std::sort(result.failures.begin(), result.failures.end(),
            [](const FailureRecord& a, const FailureRecord& b) { return a.index < b.index; });
  if (abort.load()) {
    std::ostringstream msg;
    msg << result.failures.size() << " of " << n << " trajectories failed (limit 1%); first: "
        << "trajectory " << result.failures.front().index << ": " << result.failures.front().cause;
    throw NumericalError(msg.str(), result.failures.front().time);
  }
  result.stats = total.stats();
  for (std::int64_t i = 0; i < keep; ++i) {
    if (saved[i]) result.saved.emplace_back(i, std::move(*saved[i]));
  }
  if (kerr) {
    std::vector<double> shifts;
    for (double s : result.max_shift) {
      if (!std::isnan(s)) shifts.push_back(s);
    }
    if (shifts.size() >= 100) {
      result.histogram = shift_histogram(shifts, cfg.hist_bin_width, cfg.hist_lo, cfg.hist_hi);
    }
  }
  return result;
}

// ----------------------------------------------------------------- output

namespace {

json stats_json(const SeriesStats& s) {
  json j;
  j["t"] = s.times;
  j["count"] = s.count;
  for (std::size_t q = 0; q < s.names.size(); ++q) {
    std::vector<double> m, e;
    for (std::size_t k = 0; k < s.times.size(); ++k) {
      m.push_back(s.mean[k][q]);
      e.push_back(s.se[k][q]);
    }
    j[s.names[q] + "_mean"] = m;
    j[s.names[q] + "_se"] = e;
  }
  return j;
}

json summary_json(const EnsembleResult& r) {
  const RunConfig& cfg = r.config;
  json s;
  s["n_traj"] = cfg.is_me() ? 1 : cfg.n_traj;
  s["n_success"] = r.n_success;
  s["n_failed"] = r.failures.size();
  const auto& st = r.stats;
  const auto it = std::find(st.names.begin(), st.names.end(), "n11");
  if (it != st.names.end() && !st.times.empty()) {
    const std::size_t q = it - st.names.begin();
    std::size_t best = 0;
    for (std::size_t k = 0; k < st.times.size(); ++k) {
      if (st.mean[k][q] > st.mean[best][q]) best = k;
    }
    s["peak_n11"] = {{"value", st.mean[best][q]}, {"time", st.times[best]}};
  }
  if (!r.jump_histogram.empty()) {
    const double ok = static_cast<double>(std::max<std::int64_t>(r.n_success, 1));
    std::int64_t multiple = 0;
    for (std::size_t k = 2; k < r.jump_histogram.size(); ++k) multiple += r.jump_histogram[k];
    s["counts"] = {
        {"fraction_exactly_one", r.jump_histogram.size() > 1 ? r.jump_histogram[1] / ok : 0.0},
        {"fraction_none", r.jump_histogram[0] / ok},
        {"trajectories_with_multiple", multiple}};
  }
  if (!r.no_detection_nu.empty()) {
    const auto it_nu = std::min_element(r.no_detection_nu.begin(), r.no_detection_nu.end());
    s["no_detection_nu_min"] = {
        {"value", *it_nu},
        {"time", static_cast<double>(it_nu - r.no_detection_nu.begin()) * cfg.resolved_dt()}};
  }
  if (cfg.is_kerr()) {
    s["delta_beta"] = r.delta_beta;
    s["frame"] = r.frame;
    s["dim_b"] = r.dim_b;
  }
  if (!r.max_shift.empty()) {
    std::vector<double> v;
    std::int64_t exceed = 0;
    for (double x : r.max_shift) {
      if (std::isnan(x)) continue;
      v.push_back(x);
      if (x > r.delta_beta) ++exceed;
    }
    s["median_shift"] = median(v);
    s["exceed_delta_beta_fraction"] = v.empty() ? 0.0 : static_cast<double>(exceed) / v.size();
    if (r.histogram) {
      s["bimodal"] = r.histogram->bimodal;
      if (r.histogram->gap) {
        s["gap"] = {{"left", r.histogram->gap->left}, {"right", r.histogram->gap->right}};
      } else {
        s["gap"] = nullptr;
      }
    }
  }
  if (!cfg.is_me()) {
    s["audit"] = {{"max_trace_error", r.audit.max_trace_error},
                  {"max_hermiticity", r.audit.max_hermiticity},
                  {"max_adjoint_pairing", r.audit.max_adjoint_pairing},
                  {"min_eigenvalue", r.audit.min_eigenvalue},
                  {"steps", r.audit.steps}};
  }
  return s;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

std::vector<std::string> trajectory_header(const EnsembleResult& r) {
  std::vector<std::string> h = {"t"};
  h.insert(h.end(), r.stats.names.begin(), r.stats.names.end());
  return h;
}

}  // namespace

std::vector<std::string> write_outputs(const EnsembleResult& r, const RunConfig& cfg) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) throw IoError("cannot create output directory " + cfg.output_dir + ": " + ec.message());
  std::vector<std::string> written;
  auto path = [&](const std::string& name) {
    written.push_back((fs::path(cfg.output_dir) / name).string());
    return written.back();
  };
  const auto& st = r.stats;

  if (cfg.format == OutputFormat::Csv) {
    if (cfg.is_me()) {
      std::vector<std::string> header = {"t"};
      header.insert(header.end(), st.names.begin(), st.names.end());
      CsvWriter out(path(cfg.is_kerr() ? "me.csv" : "n11.csv"), header);
      for (std::size_t k = 0; k < st.times.size(); ++k) {
        std::vector<double> row = {st.times[k]};
        row.insert(row.end(), st.mean[k].begin(), st.mean[k].end());
        out.row(row);
      }
    } else {
      std::vector<std::string> header = {"t", "count"};
      for (const auto& nme : st.names) {
        header.push_back(nme + "_mean");
        header.push_back(nme + "_se");
      }
      CsvWriter out(path("series.csv"), header);
      for (std::size_t k = 0; k < st.times.size(); ++k) {
        std::vector<double> row = {st.times[k], static_cast<double>(st.count[k])};
        for (std::size_t q = 0; q < st.names.size(); ++q) {
          row.push_back(st.mean[k][q]);
          row.push_back(st.se[k][q]);
        }
        out.row(row);
      }
      if (!r.jump_histogram.empty()) {
        CsvWriter counts(path("counts.csv"), {"jumps", "trajectories"});
        for (std::size_t k = 0; k < r.jump_histogram.size(); ++k) {
          counts.row({static_cast<double>(k), static_cast<double>(r.jump_histogram[k])});
        }
      }
      if (!r.max_shift.empty()) {
        CsvWriter shifts(path("shifts.csv"), {"trajectory", "max_shift", "first_jump_time"});
        for (std::size_t i = 0; i < r.max_shift.size(); ++i) {
          shifts.row({static_cast<double>(i), r.max_shift[i], r.first_jump_time[i]});
        }
      }
      if (r.histogram) {
        CsvWriter hist(path("histogram.csv"), {"bin_left", "bin_right", "count"});
        for (std::size_t b = 0; b < r.histogram->counts.size(); ++b) {
          hist.row({r.histogram->bin_left(b), r.histogram->bin_right(b),
                    static_cast<double>(r.histogram->counts[b])});
        }
      }
      if (!r.no_detection_nu.empty()) {
        CsvWriter nu(path("no_detection_rate.csv"), {"t", "nu"});
        for (std::size_t k = 0; k < r.no_detection_nu.size(); ++k) {
          nu.row({static_cast<double>(k) * cfg.resolved_dt(), r.no_detection_nu[k]});
        }
      }
      CsvWriter fail(path("failures.csv"), {"trajectory", "time", "cause"});
      for (const auto& f : r.failures) {
        const std::vector<std::string> fields = {std::to_string(f.index), num(f.time), f.cause};
        fail.text_row(fields);
      }
      const std::vector<std::string> header_traj = trajectory_header(r);
      for (const auto& [i, tr] : r.saved) {
        CsvWriter out(path("trajectory_" + std::to_string(i) + ".csv"), header_traj);
        for (std::size_t k = 0; k < tr.times.size(); ++k) {
          std::vector<double> row = {tr.times[k]};
          row.insert(row.end(), tr.samples[k].begin(), tr.samples[k].end());
          row.push_back(tr.record.rates[k]);
          out.row(row);
        }
        write_record_csv(tr.record, path("record_" + std::to_string(i) + ".csv"));
      }
    }
  } else {
    json j;
    j["series"] = stats_json(st);
    if (!r.jump_histogram.empty()) j["counts"] = r.jump_histogram;
    if (!r.no_detection_nu.empty()) j["no_detection_nu"] = r.no_detection_nu;
    if (!r.max_shift.empty()) {
      j["max_shift"] = r.max_shift;
      j["first_jump_time"] = r.first_jump_time;
    }
    if (r.histogram) {
      json h;
      for (std::size_t b = 0; b < r.histogram->counts.size(); ++b) {
        h.push_back({{"bin_left", r.histogram->bin_left(b)},
                     {"bin_right", r.histogram->bin_right(b)},
                     {"count", r.histogram->counts[b]}});
      }
      j["histogram"] = h;
    }
    json fails = json::array();
    for (const auto& f : r.failures) {
      fails.push_back({{"trajectory", f.index}, {"time", f.time}, {"cause", f.cause}});
    }
    j["failures"] = fails;
    json trajs = json::array();
    for (const auto& [i, tr] : r.saved) {
      json t;
      t["trajectory"] = i;
      t["t"] = tr.times;
      for (std::size_t q = 0; q + 1 < st.names.size(); ++q) {
        std::vector<double> col;
        for (const auto& row : tr.samples) col.push_back(row[q]);
        t[st.names[q]] = col;
      }
      t[st.names.back()] = tr.record.rates;
      if (tr.record.scheme == Scheme::Photodetect) {
        t["jump_times"] = tr.record.jump_times;
      } else {
        t["dY"] = tr.record.dY;
      }
      trajs.push_back(t);
    }
    j["trajectories"] = trajs;
    write_text(path("results.json"), j.dump(1) + "\n");
  }

  write_text(path("summary.json"), summary_json(r).dump(2) + "\n");
  const std::string canon = canonical_config(cfg);
  json meta;
  std::istringstream lines(canon);
  std::string line;
  json params;
  while (std::getline(lines, line)) {
    const auto eq = line.find(" = ");
    params[line.substr(0, eq)] = line.substr(eq + 3);
  }
  meta["parameters"] = params;
  meta["seed"] = cfg.master_seed;
  meta["config_hash"] = git_blob_hash(canon);
  meta["rng"] = "Philox4x32-10, key = seed, counter = (block, trajectory index)";
  if (cfg.is_kerr()) {
    meta["frame"] = r.frame;
    meta["dim_b"] = r.dim_b;
    meta["shift_definition"] =
        "max over sampled t of |X_b(t) - X_b(0)|, X_b = Re tr[b rho11], X_b(0) = Re alpha_ss";
  }
  write_text(path("metadata.json"), meta.dump(2) + "\n");
  return written;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ValidationError*>(&e)) return 2;
  if (dynamic_cast<const NumericalError*>(&e)) return 3;
  if (dynamic_cast<const IoError*>(&e)) return 4;
  return 1;
}

}  // namespace pf
