#include "pf/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "pf/errors.hpp"

namespace pf {

namespace {

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ValidationError(std::string(name) + " must be a positive finite number");
  }
}

}  // namespace

void SingleModeScenario::validate() const {
  require_positive(gamma, "gamma");
  require_positive(kappa, "kappa");
  if (dim_a < 2) throw ValidationError("dim_a must be >= 2");
  if (!std::isfinite(t0)) throw ValidationError("t0 must be finite");
}

SingleModeSetup build_single_mode(const SingleModeScenario& s) {
  s.validate();
  const LadderOps ops = ladder_ops(s.dim_a);
  const ModeLayout layout({s.dim_a});
  SystemModel model(layout, Operator::Zero(s.dim_a, s.dim_a),
                    std::sqrt(s.kappa) * ops.annihilation);
  Hierarchy h0 = initial_hierarchy(fock_dm(0, s.dim_a), 0.0);
  return {s,  std::move(model), Pulse::exponential(s.gamma, s.t0), std::move(h0),
          ops.annihilation, number_op(s.dim_a)};
}

ObservableSet single_mode_observables(const SingleModeSetup& setup) {
  const Operator a = setup.a;
  const Operator n = setup.n;
  return {{"n11", "a01", "one00", "n00"},
          [a, n](const Hierarchy& h, double, std::span<double> out) {
            out[0] = trace_product(n, h.r11).real();
            out[1] = std::abs(trace_product(a, h.r10));
            out[2] = h.r00.trace().real();
            out[3] = trace_product(n, h.r00).real();
          }};
}

MomentSeries moment_oracle_pd(const SingleModeScenario& s, const std::vector<double>& jump_times,
                              double T, double dt) {
  s.validate();
  const std::int64_t steps = step_count(T, dt);
  const Pulse pulse = Pulse::exponential(s.gamma, s.t0);
  const double k = s.kappa;
  const double sk = std::sqrt(k);

  double n11 = 0.0, one00 = 1.0, n00 = 0.0;
  cplx a01 = 0.0;
  MomentSeries m;
  std::size_t next_jump = 0;
  auto record = [&](double t, double nu) {
    m.times.push_back(t);
    m.n11.push_back(n11);
    m.a01.push_back(a01);
    m.one00.push_back(one00);
    m.n00.push_back(n00);
    m.nu.push_back(nu);
  };

  for (std::int64_t j = 0; j <= steps; ++j) {
    const double t = static_cast<double>(j) * dt;
    const cplx xi = pulse.xi(t);
    const double xi2 = std::norm(xi);
    const double nu =
        std::max(0.0, k * n11 + 2.0 * sk * (a01 * std::conj(xi)).real() + one00 * xi2);
    record(t, nu);
    if (j == steps) break;

    // Post-jump values (the dN brackets plus the current value).
    const bool jump = next_jump < jump_times.size() &&
                      std::abs(jump_times[next_jump] - (t + dt)) < 0.5 * dt;
    if (jump) {
      ++next_jump;
      if (!(nu > 0.0)) throw ImpossibleJumpError("moment oracle: jump at zero rate", t);
      n11 = n00 * xi2 / nu;
      a01 = sk * n00 * xi / nu;
      one00 = k * n00 / nu;
      n00 = 0.0;
      continue;
    }
    // No detection: RK4 on the normalized equations, dN = -nu dt.
    struct M {
      double n11, one00, n00;
      cplx a01;
    };
    auto rhs = [&](const M& x, double ts, bool end = false) {
      const cplx z = end ? pulse.xi_left(ts) : pulse.xi(ts);
      const double z2 = std::norm(z);
      const double r = k * x.n11 + 2.0 * sk * (x.a01 * std::conj(z)).real() + x.one00 * z2;
      return M{-k * x.n11 - 2.0 * sk * (x.a01 * std::conj(z)).real() - x.n00 * z2 + r * x.n11,
               -k * x.n00 + r * x.one00, -k * x.n00 + r * x.n00,
               -0.5 * k * x.a01 - sk * x.one00 * z - sk * x.n00 * z + r * x.a01};
    };
    auto axpy = [](const M& x, double f, const M& d) {
      return M{x.n11 + f * d.n11, x.one00 + f * d.one00, x.n00 + f * d.n00, x.a01 + f * d.a01};
    };
    const M x{n11, one00, n00, a01};
    const M k1 = rhs(x, t);
    const M k2 = rhs(axpy(x, 0.5 * dt, k1), t + 0.5 * dt);
    const M k3 = rhs(axpy(x, 0.5 * dt, k2), t + 0.5 * dt);
    const M k4 = rhs(axpy(x, dt, k3), t + dt, true);
    const double w = dt / 6.0;
    n11 += w * (k1.n11 + 2.0 * k2.n11 + 2.0 * k3.n11 + k4.n11);
    one00 += w * (k1.one00 + 2.0 * k2.one00 + 2.0 * k3.one00 + k4.one00);
    n00 += w * (k1.n00 + 2.0 * k2.n00 + 2.0 * k3.n00 + k4.n00);
    a01 += w * (k1.a01 + 2.0 * k2.a01 + 2.0 * k3.a01 + k4.a01);
  }
  if (next_jump != jump_times.size()) {
    throw ValidationError("moment oracle: a recorded jump time does not lie on the grid");
  }
  return m;
}

// ----------------------------------------------------------------------- Kerr

std::string to_string(Frame f) {
  switch (f) {
    case Frame::Bare: return "bare";
    case Frame::Displaced: return "displaced";
    case Frame::Auto: return "auto";
  }
  return "auto";
}

Frame parse_frame(const std::string& s) {
  if (s == "bare") return Frame::Bare;
  if (s == "displaced") return Frame::Displaced;
  if (s == "auto") return Frame::Auto;
  throw ValidationError("unknown frame '" + s + "' (bare|displaced|auto)");
}

void KerrScenario::validate() const {
  require_positive(chi, "chi");
  require_positive(kappa_a, "kappa_a");
  require_positive(kappa_b, "kappa_b");
  if (gamma) require_positive(*gamma, "gamma");
  if (beta && !(std::isfinite(beta->real()) && std::isfinite(beta->imag()))) {
    throw ValidationError("beta must be finite");
  }
  if (dim_a < 2) throw ValidationError("dim_a must be >= 2");
  if (dim_b != 0 && dim_b < 2) throw ValidationError("dim_b must be >= 2 (or 0 for automatic)");
  if (!std::isfinite(t0)) throw ValidationError("t0 must be finite");
}

cplx KerrScenario::beta_value() const {
  return beta ? *beta : cplx(kappa_b * kappa_b / (4.0 * kappa_a), 0.0);
}

double KerrScenario::gamma_value() const { return gamma ? *gamma : kappa_a; }

Frame KerrScenario::resolved_frame() const {
  if (frame != Frame::Auto) return frame;
  return kappa_b >= 3.0 * kappa_a ? Frame::Displaced : Frame::Bare;
}

cplx KerrScenario::alpha_ss() const { return -2.0 * kI * beta_value() / kappa_b; }

double KerrScenario::delta_beta() const {
  return 4.0 * std::abs(beta_value()) * chi / (kappa_b * kappa_b);
}

int required_dim_b(cplx centre, double margin) {
  const double r = std::abs(centre) + margin;
  // Poisson weights of the coherent state, accumulated in log space.
  const double mean = r * r;
  for (int d = 2; d < 400; ++d) {
    const int top = d - 1;
    const double log_p = -mean + top * std::log(std::max(mean, 1e-300)) - std::lgamma(top + 1.0);
    double tail = 0.0;
    for (int k = top; k < top + 200; ++k) {
      const double lp = -mean + k * std::log(std::max(mean, 1e-300)) - std::lgamma(k + 1.0);
      tail += std::exp(lp);
    }
    if (std::exp(log_p) < 1e-6 && tail < 1e-6 && top > mean) return d;
  }
  throw TruncationError("mode b amplitude too large for any supported truncation");
}

KerrSetup build_kerr(const KerrScenario& s) {
  s.validate();
  const Frame frame = s.resolved_frame();
  const cplx alpha = s.alpha_ss();
  const cplx centre = frame == Frame::Bare ? alpha : cplx(0.0);
  const int need = required_dim_b(centre);
  const int dim_b = s.dim_b == 0 ? need : s.dim_b;
  if (dim_b < need) {
    std::ostringstream msg;
    msg << "dim_b = " << dim_b << " cannot hold mode b in the " << to_string(frame)
        << " frame (|alpha_ss| = " << std::abs(alpha) << "); need dim_b >= " << need;
    throw TruncationError(msg.str());
  }

  const ModeLayout layout({s.dim_a, dim_b});
  const int n = layout.total_dim();
  const LadderOps la = ladder_ops(s.dim_a);
  const LadderOps lb = ladder_ops(dim_b);
  const Operator a = embed(la.annihilation, Slot::mode(0), layout);
  const Operator n_a = embed(number_op(s.dim_a), Slot::mode(0), layout);
  const Operator c = embed(lb.annihilation, Slot::mode(1), layout);
  const Operator id = Operator::Identity(n, n);
  const cplx beta = s.beta_value();

  Operator b, n_b, h0;
  Ket b_state;
  if (frame == Frame::Bare) {
    b = c;
    n_b = c.adjoint() * c;
    h0 = s.chi * (n_b * n_a) + std::conj(beta) * c + beta * c.adjoint();
    b_state = coherent_ket(alpha, dim_b);
  } else {
    // b = c + alpha: the drive cancels against the displaced damping term,
    // leaving only the Kerr coupling in the shifted variables.
    b = c + alpha * id;
    n_b = b.adjoint() * b;
    h0 = s.chi * (n_b * n_a);
    b_state = fock_ket(0, dim_b);
  }
  h0 = 0.5 * (h0 + h0.adjoint()).eval();

  std::vector<HamiltonianTerm> terms;
  if (s.feedback) {
    const double chi = s.chi;
    terms.push_back({n_a,
                     [chi, n_b](double, const DensityOp& state) {
                       return cplx(-chi * trace_product(n_b, state).real(), 0.0);
                     },
                     true});
  }
  SystemModel model(layout, h0, std::sqrt(s.kappa_a) * a, {std::sqrt(s.kappa_b) * c},
                    std::move(terms));
  const Ket factors[] = {fock_ket(0, s.dim_a), b_state};
  Hierarchy h = initial_hierarchy(projector(product_ket(factors)), 0.0);
  return {s,
          frame,
          frame == Frame::Displaced ? alpha : cplx(0.0),
          std::move(model),
          Pulse::exponential(s.gamma_value(), s.t0),
          std::move(h),
          a,
          n_a,
          b,
          n_b};
}

double feedback_detuning(const KerrSetup& setup, const Hierarchy& h) {
  return -setup.scenario.chi * trace_product(setup.n_b, h.r11).real();
}

ObservableSet kerr_observables(const KerrSetup& setup) {
  const Operator n_a = setup.n_a;
  const Operator b = setup.b;
  return {{"n_a", "X_b", "P_b"}, [n_a, b](const Hierarchy& h, double, std::span<double> out) {
            const cplx mean_b = trace_product(b, h.r11);
            out[0] = trace_product(n_a, h.r11).real();
            out[1] = mean_b.real();
            out[2] = mean_b.imag();
          }};
}

std::function<bool(const Hierarchy&)> kerr_stop_when_a_empty(const KerrSetup& setup,
                                                             double threshold) {
  const Operator n_a = setup.n_a;
  return [n_a, threshold](const Hierarchy& h) {
    return std::abs(trace_product(n_a, h.r11)) < threshold;
  };
}

TrajectoryObservables kerr_trajectory_observables(const TrajectoryResult& r) {
  TrajectoryObservables o;
  o.times = r.times;
  o.nu = r.record.rates;
  o.jump_times = r.record.jump_times;
  for (const auto& row : r.samples) {
    if (row.size() < 3) throw DimensionError("kerr observables need n_a, X_b, P_b columns");
    o.n_a.push_back(row[0]);
    o.X_b.push_back(row[1]);
    o.P_b.push_back(row[2]);
  }
  o.max_shift = max_conditional_shift(o);
  return o;
}

double max_conditional_shift(const TrajectoryObservables& obs) {
  if (obs.X_b.empty()) throw ValidationError("max_conditional_shift: empty series");
  double best = 0.0;
  for (double x : obs.X_b) best = std::max(best, std::abs(x - obs.X_b.front()));
  return best;
}

double relaxation_time(const TrajectoryObservables& obs, double t_from, double fraction) {
  const double base = obs.X_b.empty() ? 0.0 : obs.X_b.front();
  std::size_t i = 0;
  while (i < obs.times.size() && obs.times[i] < t_from) ++i;
  if (i == obs.times.size()) return std::numeric_limits<double>::quiet_NaN();
  const double start = std::abs(obs.X_b[i] - base);
  for (std::size_t j = i; j < obs.times.size(); ++j) {
    if (std::abs(obs.X_b[j] - base) < fraction * start) return obs.times[j] - obs.times[i];
  }
  return std::numeric_limits<double>::quiet_NaN();
}

double post_detection_relaxation(const KerrSetup& setup, const Hierarchy& h, double fraction,
                                 double dt, double horizon) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ValidationError("post_detection_relaxation: fraction must lie in (0, 1)");
  }
  require_positive(dt, "dt");
  const double left_in_a = trace_product(setup.n_a, h.r11).real();
  if (left_in_a > 1e-9) {
    throw ValidationError("post_detection_relaxation: mode a still holds " +
                          std::to_string(left_in_a) + " excitations");
  }
  const KerrScenario& s = setup.scenario;
  const ModeLayout& layout = setup.model.layout();
  const int dim_b = layout.dims()[1];
  const Operator c = ladder_ops(dim_b).annihilation;
  const Operator id = Operator::Identity(dim_b, dim_b);
  const Operator b = c + setup.alpha * id;
  Operator hb = Operator::Zero(dim_b, dim_b);
  if (setup.frame == Frame::Bare) {
    const cplx beta = s.beta_value();
    hb = std::conj(beta) * c + beta * c.adjoint();
  }
  const SystemModel mode_b(ModeLayout({dim_b}), hb, std::sqrt(s.kappa_b) * c);
  DensityOp rho = reduce_to_mode(h.r11, 1, layout);
  const double baseline = s.alpha_ss().real();
  const double start = std::abs(trace_product(b, rho).real() - baseline);
  if (start == 0.0) return std::numeric_limits<double>::quiet_NaN();
  const std::int64_t n = static_cast<std::int64_t>(std::ceil(horizon / dt));
  for (std::int64_t k = 1; k <= n; ++k) {
    rho = step_lindblad(mode_b, (k - 1) * dt, rho, dt);
    if (std::abs(trace_product(b, rho).real() - baseline) < fraction * start) return k * dt;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

ShiftHistogram shift_histogram(const std::vector<double>& values, double bin_width, double lo,
                               double hi) {
  if (values.size() < 100) throw ValidationError("shift_histogram needs at least 100 values");
  require_positive(bin_width, "bin_width");
  if (!(hi > lo)) throw ValidationError("shift_histogram: hi must exceed lo");
  ShiftHistogram hist;
  hist.lo = lo;
  hist.bin_width = bin_width;
  const int bins = static_cast<int>(std::ceil((hi - lo) / bin_width - 1e-9));
  hist.counts.assign(bins, 0);
  for (double v : values) {
    if (v < lo) {
      ++hist.below;
      continue;
    }
    const auto i = static_cast<std::int64_t>(std::floor((v - lo) / bin_width));
    if (i >= bins) {
      ++hist.above;
    } else {
      ++hist.counts[i];
    }
  }

  int first = -1, last = -1;
  for (int i = 0; i < bins; ++i) {
    if (hist.counts[i] > 0) {
      if (first < 0) first = i;
      last = i;
    }
  }
  if (first < 0) return hist;
  // Candidate gaps: runs of >= 2 empty interior bins. A gap that leaves at
  // least 5% of the values on each side beats one that only isolates a
  // sparse tail; among equals the longer run wins, then the earlier one.
  const double total = static_cast<double>(values.size());
  std::vector<std::int64_t> prefix(bins + 1, hist.below);
  for (int i = 0; i < bins; ++i) prefix[i + 1] = prefix[i] + hist.counts[i];
  int best_rank = -1;
  int best_len = 0;
  for (int i = first; i <= last;) {
    if (hist.counts[i] != 0) {
      ++i;
      continue;
    }
    int j = i;
    while (j <= last && hist.counts[j] == 0) ++j;
    const int len = j - i;
    if (len >= 2) {
      const double left = prefix[i] / total;
      const double right = 1.0 - left;
      const int rank = (left >= 0.05 && right >= 0.05) ? 1 : 0;
      if (rank > best_rank || (rank == best_rank && len > best_len)) {
        best_rank = rank;
        best_len = len;
        hist.gap = ShiftHistogram::Gap{i, j - 1, hist.bin_left(i), hist.bin_right(j - 1)};
        hist.mass_left = left;
        hist.mass_right = right;
        hist.bimodal = rank == 1;
      }
    }
    i = j;
  }
  return hist;
}

double b_increment_check(const KerrSetup& setup, const Hierarchy& h, double dt, double u) {
  const KerrScenario& s = setup.scenario;
  const double ka = s.kappa_a;
  const double sk = std::sqrt(ka);
  const cplx xi = setup.pulse.xi(h.t);
  const cplx beta = s.beta_value();
  const Operator ba = setup.b * setup.a;
  const Operator bad = setup.b * setup.a.adjoint();
  const Operator bn = setup.b * setup.n_a;

  const cplx b11 = trace_product(setup.b, h.r11);
  const cplx bn11 = trace_product(bn, h.r11);
  const cplx ba10 = trace_product(ba, h.r10);
  const cplx bad01 = trace_product(bad, h.r01);
  const cplx b00 = trace_product(setup.b, h.r00);

  FilterStepper stepper(setup.model, setup.pulse);
  const double nu = stepper.nu_rate(h);
  Hierarchy next = h;
  const PhotodetectOutcome o = stepper.photodetect(next, dt, u);
  const cplx actual = trace_product(setup.b, next.r11) - b11;

  const cplx drift = -kI * beta - kI * s.chi * bn11 - 0.5 * s.kappa_b * b11;
  const cplx jump_part = ka * bn11 + sk * ba10 * std::conj(xi) + sk * bad01 * xi + b00 * std::norm(xi);
  cplx expected;
  if (o.jumped) {
    expected = jump_part / nu - b11;
  } else {
    // dN = -nu dt: the bracket times -nu dt.
    expected = (drift - jump_part + nu * b11) * dt;
  }
  return std::abs(actual - expected);
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  double m = values[mid];
  if (values.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(values.begin(), values.begin() + mid));
  }
  return m;
}

}  // namespace pf
