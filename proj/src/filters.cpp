#include "pf/filters.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pf/csv.hpp"
#include "pf/errors.hpp"

namespace pf {

std::string to_string(Scheme s) { return s == Scheme::Homodyne ? "homodyne" : "photodetect"; }

Scheme parse_scheme(const std::string& s) {
  if (s == "homodyne") return Scheme::Homodyne;
  if (s == "photodetect") return Scheme::Photodetect;
  throw ValidationError("unknown measurement scheme '" + s + "' (homodyne|photodetect)");
}

namespace {

double checked_k(cplx k) {
  if (!std::isfinite(k.real()) || std::abs(k.imag()) >= 1e-6) {
    std::ostringstream msg;
    msg << "K_t has imaginary part " << k.imag();
    throw CorruptedStateError(msg.str());
  }
  return k.real();
}

double checked_nu(cplx nu) {
  const double v = nu.real();
  if (!std::isfinite(v) || v < -1e-9) {
    std::ostringstream msg;
    msg << "detection rate is negative: " << v;
    throw CorruptedStateError(msg.str());
  }
  return std::max(v, 0.0);
}

std::string annotate(const std::exception& e, double t) {
  std::ostringstream msg;
  msg << e.what() << " (at t=" << t << ")";
  return msg.str();
}

}  // namespace

double k_rate(const Hierarchy& h, const Operator& L, cplx xi) {
  const cplx k = trace_product(L, h.r11) + trace_product(L.adjoint(), h.r11) +
                 h.r01.trace() * xi + h.r10.trace() * std::conj(xi);
  return checked_k(k);
}

double nu_rate(const Hierarchy& h, const Operator& L, cplx xi) {
  const Operator Ld = L.adjoint();
  const cplx nu = trace_product(Ld * L, h.r11) + trace_product(L, h.r10) * std::conj(xi) +
                  trace_product(Ld, h.r01) * xi + h.r00.trace() * std::norm(xi);
  return checked_nu(nu);
}

void write_record_csv(const MeasurementRecord& record, const std::string& path) {
  if (record.scheme == Scheme::Homodyne) {
    CsvWriter out(path, {"t", "dY"});
    for (std::size_t k = 0; k < record.dY.size(); ++k) {
      out.row({record.t_start + static_cast<double>(k) * record.dt, record.dY[k]});
    }
  } else {
    CsvWriter out(path, {"jump_time"});
    for (double t : record.jump_times) out.row({t});
  }
}

void write_rate_csv(const MeasurementRecord& record, const std::string& path) {
  CsvWriter out(path, {"t", record.scheme == Scheme::Homodyne ? "K" : "nu"});
  for (std::size_t k = 0; k < record.rates.size(); ++k) {
    out.row({record.rate_times[k], record.rates[k]});
  }
}

FilterStepper::FilterStepper(const SystemModel& model, const Pulse& pulse)
    : model_(&model), pulse_(&pulse), eval_(model, pulse) {
  const int n = model.dim();
  LdL_ = model.L_dag() * model.L();
  for (HierarchyRates* r : {&rates_, &jumps_, &k1_, &k2_, &k3_, &k4_}) {
    for (DensityOp* m : {&r->d00, &r->d01, &r->d10, &r->d11}) m->resize(n, n);
  }
  for (DensityOp* m : {&stage_.r00, &stage_.r01, &stage_.r10, &stage_.r11, &frozen_, &scratch_, &H_, &P_, &R_, &q_,
                       &a_, &b_, &c_, &d_}) {
    m->resize(n, n);
  }
}

void FilterStepper::prepare(const Hierarchy& h) { eval_.prepare(h.t, h.r11); }

double FilterStepper::k_rate(const Hierarchy& h) const {
  const cplx xi = pulse_->xi(h.t);
  const cplx k = trace_product(model_->L(), h.r11) + trace_product(model_->L_dag(), h.r11) +
                 h.r01.trace() * xi + h.r10.trace() * std::conj(xi);
  return checked_k(k);
}

double FilterStepper::nu_rate(const Hierarchy& h) const {
  const cplx xi = pulse_->xi(h.t);
  cplx nu = trace_product(LdL_, h.r11);
  if (xi != cplx(0.0, 0.0)) {
    nu += trace_product(model_->L(), h.r10) * std::conj(xi) +
          trace_product(model_->L_dag(), h.r01) * xi + h.r00.trace() * std::norm(xi);
  }
  return checked_nu(nu);
}

void FilterStepper::renormalize(Hierarchy& h, double& trace_before) {
  trace_before = h.r11.trace().real();
  if (!std::isfinite(trace_before) || trace_before < 0.5) {
    std::ostringstream msg;
    msg << "tr r11 = " << trace_before << " before renormalization; reduce dt";
    throw InstabilityError(msg.str(), h.t);
  }
  const double inv = 1.0 / trace_before;
  h.r11 *= inv;
  h.r01 *= inv;
  h.r10 *= inv;
  h.r00 *= inv;
}

// The hierarchy is the block decomposition of a joint state of system and
// source qubit: with the qubit basis {g, e},
//   rho_ee = w r00,  rho_eg = sqrt(w) r01,  rho_gg = r11 - w r00.
// In that basis the step operator of the joint diffusive filter is upper
// block-triangular,
//   M = [[P, (xi/sqrt(w)) q], [0, R]],
//   P = 1 - i H_eff dt + L dY + L^2 s/2,   s = dY^2 - dt,
//   q = dY - L^dag dt + L s,               R = P - |xi|^2 dt / (2 w),
// and rho -> M rho M^dag + dt sum_k E_k rho E_k^dag is applied blockwise.
// Every factor of w cancels except in r00 and r01, which pick up the ratio
// of w before and after the step.
HomodyneOutcome FilterStepper::homodyne(Hierarchy& h, double dt, double z) {
  if (!(dt > 0.0)) throw ValidationError("homodyne step: dt must be > 0");
  const Operator& L = model_->L();
  const Operator& Ld = model_->L_dag();
  const double t = h.t;
  const cplx xi = pulse_->xi(t);
  const cplx xic = std::conj(xi);
  const double xi2 = std::norm(xi);
  const double r2 = std::norm(pulse_->xi_over_sqrt_w(t));
  HomodyneOutcome out;
  out.K = k_rate(h);
  out.dW = std::sqrt(dt) * z;
  out.dY = out.K * dt + out.dW;
  const double s = out.dY * out.dY - dt;

  model_->hamiltonian_into(t, h.r11, H_);
  P_ = -kI * dt * H_ - dt * model_->damping();
  P_.diagonal().array() += 1.0;
  P_ += out.dY * L;
  P_.noalias() += (0.5 * s) * (L * L);
  q_ = -dt * Ld + s * L;
  q_.diagonal().array() += out.dY;
  R_ = P_;
  R_.diagonal().array() -= 0.5 * r2 * dt;

  const double w_now = pulse_->w(t);
  const double w_next = pulse_->w(t + dt);
  const double f = (w_next > 1e-10 && w_now > 0.0) ? w_now / w_next : 1.0;
  const double sf = std::sqrt(f);
  const bool z00 = is_exact_zero(h.r00);

  // r11 = rho_gg + rho_ee after the step.
  a_.noalias() = P_ * h.r11;
  d_.noalias() = a_ * P_.adjoint();
  if (xi != cplx(0.0, 0.0)) {
    b_.noalias() = q_ * h.r01;
    c_.noalias() = b_ * P_.adjoint();
    d_ += xi * c_ + xic * c_.adjoint();
    if (!z00) {
      b_.noalias() = q_ * h.r00;
      d_.noalias() += xi2 * (b_ * q_.adjoint());
      a_.noalias() = P_ * h.r00;
      d_ -= (0.5 * xi2 * dt) * (a_ + a_.adjoint());
      d_ += (0.25 * xi2 * r2 * dt * dt) * h.r00;
    }
  }
  for (const Operator& E : model_->extra_Ls()) {
    a_.noalias() = E * h.r11;
    d_.noalias() += dt * (a_ * E.adjoint());
  }

  // r01 and r00 from the e row.
  if (!z00) {
    a_.noalias() = R_ * h.r01;
    c_.noalias() = a_ * P_.adjoint();
    b_.noalias() = R_ * h.r00;
    c_.noalias() += xic * (b_ * q_.adjoint());
    scratch_.noalias() = b_ * R_.adjoint();
    b_ = scratch_;
    for (std::size_t k = 0; k < model_->extra_Ls().size(); ++k) {
      const Operator& E = model_->extra_Ls()[k];
      const Operator& Ed = model_->extra_Ls_dag()[k];
      a_.noalias() = E * h.r01;
      c_.noalias() += dt * (a_ * Ed);
      a_.noalias() = E * h.r00;
      b_.noalias() += dt * (a_ * Ed);
    }
    h.r01 = sf * c_;
    h.r10 = h.r01.adjoint();
    h.r00 = f * b_;
  } else if (!is_exact_zero(h.r01)) {
    a_.noalias() = R_ * h.r01;
    c_.noalias() = a_ * P_.adjoint();
    for (std::size_t k = 0; k < model_->extra_Ls().size(); ++k) {
      a_.noalias() = model_->extra_Ls()[k] * h.r01;
      c_.noalias() += dt * (a_ * model_->extra_Ls_dag()[k]);
    }
    h.r01 = sf * c_;
    h.r10 = h.r01.adjoint();
  }
  h.r11 = 0.5 * (d_ + d_.adjoint());
  h.t += dt;
  renormalize(h, out.trace_before_renorm);
  return out;
}

void FilterStepper::jump_maps(const Hierarchy& h, cplx xi, HierarchyRates& out) {
  const SparseOp& L = model_->L_sparse();
  const SparseOp& Ld = model_->L_dag_sparse();
  const cplx xic = std::conj(xi);
  const bool z00 = is_exact_zero(h.r00);
  const bool z01 = is_exact_zero(h.r01);
  const bool z10 = is_exact_zero(h.r10);
  scratch_.noalias() = L * h.r11;
  out.d11.noalias() = scratch_ * Ld;
  if (!z01) {
    scratch_.noalias() = L * h.r01;
    out.d01.noalias() = scratch_ * Ld;
    a_.noalias() = h.r01 * Ld;
    out.d11 += xi * a_;
  } else {
    out.d01.setZero();
  }
  if (!z10) {
    scratch_.noalias() = L * h.r10;
    out.d10.noalias() = scratch_ * Ld;
    out.d11 += xic * scratch_;
  } else {
    out.d10.setZero();
  }
  if (!z00) {
    scratch_.noalias() = L * h.r00;
    out.d00.noalias() = scratch_ * Ld;
    out.d01 += xic * scratch_;
    a_.noalias() = h.r00 * Ld;
    out.d10 += xi * a_;
    out.d11 += std::norm(xi) * h.r00;
  } else {
    out.d00.setZero();
  }
}

void FilterStepper::no_jump_rhs(const Hierarchy& h, double t, cplx xi, HierarchyRates& out) {
  eval_.prepare(t, frozen_);
  eval_.rates(xi, h, out);
  jump_maps(h, xi, jumps_);
  const double nu = jumps_.d11.trace().real();
  out.d11 += nu * h.r11 - jumps_.d11;
  out.d01 += nu * h.r01 - jumps_.d01;
  out.d10 += nu * h.r10 - jumps_.d10;
  out.d00 += nu * h.r00 - jumps_.d00;
}

PhotodetectOutcome FilterStepper::photodetect(Hierarchy& h, double dt, double u) {
  if (!(dt > 0.0)) throw ValidationError("photodetection step: dt must be > 0");
  const cplx xi = pulse_->xi(h.t);
  PhotodetectOutcome out;
  out.nu = nu_rate(h);
  if (out.nu * dt >= 0.1) {
    std::ostringstream msg;
    msg << "nu dt = " << out.nu * dt << " >= 0.1; reduce dt";
    throw StepSizeError(msg.str(), h.t);
  }
  out.jumped = u < out.nu * dt;

  if (out.jumped) {
    jump_maps(h, xi, jumps_);
    const double tr = jumps_.d11.trace().real();
    if (std::abs(tr - out.nu) > 1e-8 * (1.0 + jumps_.d11.cwiseAbs().maxCoeff())) {
      std::ostringstream msg;
      msg << "jump map trace " << tr << " differs from nu " << out.nu;
      throw CorruptedStateError(msg.str(), h.t);
    }
    if (!(out.nu > 0.0)) throw ImpossibleJumpError("jump with zero detection rate", h.t);
    const double inv = 1.0 / out.nu;
    h.r11 = inv * jumps_.d11;
    h.r01 = inv * jumps_.d01;
    h.r10 = inv * jumps_.d10;
    h.r00 = inv * jumps_.d00;
  } else {
    frozen_ = h.r11;
    const double t = h.t;
    auto stage = [&](const HierarchyRates& k, double f) {
      stage_.r11 = h.r11 + f * k.d11;
      stage_.r01 = h.r01 + f * k.d01;
      stage_.r10 = h.r10 + f * k.d10;
      stage_.r00 = h.r00 + f * k.d00;
    };
    const cplx xi_mid = pulse_->xi(t + 0.5 * dt);
    no_jump_rhs(h, t, xi, k1_);
    stage(k1_, 0.5 * dt);
    no_jump_rhs(stage_, t + 0.5 * dt, xi_mid, k2_);
    stage(k2_, 0.5 * dt);
    no_jump_rhs(stage_, t + 0.5 * dt, xi_mid, k3_);
    stage(k3_, dt);
    no_jump_rhs(stage_, t + dt, pulse_->xi_left(t + dt), k4_);
    const double w = dt / 6.0;
    h.r11 += w * (k1_.d11 + 2.0 * k2_.d11 + 2.0 * k3_.d11 + k4_.d11);
    h.r01 += w * (k1_.d01 + 2.0 * k2_.d01 + 2.0 * k3_.d01 + k4_.d01);
    h.r10 += w * (k1_.d10 + 2.0 * k2_.d10 + 2.0 * k3_.d10 + k4_.d10);
    h.r00 += w * (k1_.d00 + 2.0 * k2_.d00 + 2.0 * k3_.d00 + k4_.d00);
  }
  h.t += dt;
  renormalize(h, out.trace_before_renorm);
  return out;
}

HomodyneStep sme_homodyne_step(const SystemModel& model, const Pulse& pulse, const Hierarchy& h,
                               double dt, NoiseSource& noise) {
  FilterStepper stepper(model, pulse);
  HomodyneStep out{h, 0.0};
  out.dY = stepper.homodyne(out.state, dt, noise.normal()).dY;
  return out;
}

PhotodetectStep sme_photodetect_step(const SystemModel& model, const Pulse& pulse,
                                     const Hierarchy& h, double dt, NoiseSource& noise) {
  FilterStepper stepper(model, pulse);
  PhotodetectStep out{h, false};
  out.jumped = stepper.photodetect(out.state, dt, noise.uniform()).jumped;
  return out;
}

void TrajectoryAudit::merge(const TrajectoryAudit& other) {
  max_trace_error = std::max(max_trace_error, other.max_trace_error);
  max_hermiticity = std::max(max_hermiticity, other.max_hermiticity);
  max_adjoint_pairing = std::max(max_adjoint_pairing, other.max_adjoint_pairing);
  min_eigenvalue = std::min(min_eigenvalue, other.min_eigenvalue);
  max_pre_renorm_drift = std::max(max_pre_renorm_drift, other.max_pre_renorm_drift);
  steps += other.steps;
}

std::int64_t step_count(double T, double dt) {
  if (!(T > 0.0) || !(dt > 0.0)) throw ValidationError("T and dt must be > 0");
  const double ratio = T / dt;
  const auto n = static_cast<std::int64_t>(std::llround(ratio));
  if (n < 1 || std::abs(ratio - static_cast<double>(n)) > 1e-7 * std::max(1.0, ratio)) {
    throw ValidationError("T must be an integer multiple of dt");
  }
  return n;
}

namespace {

// Shared per-step bookkeeping so that the direct loop and the cached
// no-detection branch produce identical results.
class Runner {
 public:
  Runner(const SystemModel& model, const Pulse& pulse, Scheme scheme, double t_start, double dt,
         const TrajectoryOptions& options, TrajectoryResult& result)
      : stepper_(model, pulse),
        scheme_(scheme),
        t_start_(t_start),
        dt_(dt),
        options_(options),
        result_(result) {
    result_.record.scheme = scheme;
    result_.record.t_start = t_start;
    result_.record.dt = dt;
    result_.audit.min_eigenvalue = 0.0;
    if (options_.observables) row_.resize(options_.observables->names.size());
  }

  double grid_time(std::int64_t k) const { return t_start_ + static_cast<double>(k) * dt_; }

  void sample(const Hierarchy& h) {
    const double rate =
        scheme_ == Scheme::Homodyne ? stepper_.k_rate(h) : stepper_.nu_rate(h);
    result_.times.push_back(h.t);
    result_.record.rate_times.push_back(h.t);
    result_.record.rates.push_back(rate);
    if (options_.observables) {
      options_.observables->evaluate(h, rate, row_);
      result_.samples.push_back(row_);
    }
    if (options_.audit && !options_.eigenvalues_every_step) {
      result_.audit.min_eigenvalue = std::min(result_.audit.min_eigenvalue, min_eigenvalue(h.r11));
    }
  }

  void audit_state(const Hierarchy& h, double trace_before) {
    if (!options_.audit) return;
    auto& a = result_.audit;
    a.max_trace_error = std::max(a.max_trace_error, std::abs(h.r11.trace().real() - 1.0));
    a.max_hermiticity =
        std::max({a.max_hermiticity, hermiticity_residue(h.r11), hermiticity_residue(h.r00)});
    a.max_adjoint_pairing =
        std::max(a.max_adjoint_pairing, (h.r10 - h.r01.adjoint()).cwiseAbs().maxCoeff());
    a.max_pre_renorm_drift = std::max(a.max_pre_renorm_drift, std::abs(trace_before - 1.0));
    if (options_.eigenvalues_every_step) {
      a.min_eigenvalue = std::min(a.min_eigenvalue, min_eigenvalue(h.r11));
    }
    ++a.steps;
  }

  // One grid step from k to k+1 with the given draw. Returns true when the
  // run should end early.
  bool step(Hierarchy& h, std::int64_t k, double draw) {
    h.t = grid_time(k);
    double trace_before = 1.0;
    try {
      if (scheme_ == Scheme::Homodyne) {
        const HomodyneOutcome o = stepper_.homodyne(h, dt_, draw);
        result_.record.dY.push_back(o.dY);
        trace_before = o.trace_before_renorm;
      } else {
        const PhotodetectOutcome o = stepper_.photodetect(h, dt_, draw);
        trace_before = o.trace_before_renorm;
        if (o.jumped) result_.record.jump_times.push_back(grid_time(k + 1));
      }
    } catch (const StepSizeError& e) {
      throw StepSizeError(annotate(e, grid_time(k)), grid_time(k));
    } catch (const InstabilityError& e) {
      throw InstabilityError(annotate(e, grid_time(k)), grid_time(k));
    } catch (const CorruptedStateError& e) {
      throw CorruptedStateError(annotate(e, grid_time(k)), grid_time(k));
    } catch (const NumericalError& e) {
      throw NumericalError(annotate(e, grid_time(k)), grid_time(k));
    }
    h.t = grid_time(k + 1);
    audit_state(h, trace_before);
    return scheme_ == Scheme::Photodetect && !result_.record.jump_times.empty() &&
           options_.stop_after_detection && options_.stop_after_detection(h);
  }

  double draw(NoiseSource& noise) const {
    return scheme_ == Scheme::Homodyne ? noise.normal() : noise.uniform();
  }

  // Steps k_begin..n-1 then the closing sample.
  void run(Hierarchy& h, std::int64_t k_begin, std::int64_t n, NoiseSource& noise) {
    const int stride = std::max(1, options_.sample_stride);
    for (std::int64_t k = k_begin; k < n; ++k) {
      if (k % stride == 0) sample(h);
      if (step(h, k, draw(noise))) {
        result_.stopped_early = true;
        sample(h);
        result_.final_state = h;
        return;
      }
    }
    sample(h);
    result_.final_state = h;
  }

  FilterStepper& stepper() { return stepper_; }

 private:
  FilterStepper stepper_;
  Scheme scheme_;
  double t_start_;
  double dt_;
  const TrajectoryOptions& options_;
  TrajectoryResult& result_;
  std::vector<double> row_;
};

}  // namespace

TrajectoryResult simulate_trajectory(const SystemModel& model, const Pulse& pulse, Scheme scheme,
                                     const Hierarchy& h0, double T, double dt, NoiseSource& noise,
                                     const TrajectoryOptions& options) {
  const std::int64_t n = step_count(T, dt);
  if (h0.dim() != model.dim()) throw DimensionError("simulate_trajectory: state dimension");
  TrajectoryResult result;
  Runner runner(model, pulse, scheme, h0.t, dt, options, result);
  Hierarchy h = h0;
  runner.audit_state(h, 1.0);
  runner.run(h, 0, n, noise);
  return result;
}

NoDetectionBranch::NoDetectionBranch(const SystemModel& model, const Pulse& pulse,
                                     const Hierarchy& h0, double T, double dt,
                                     const TrajectoryOptions& options, int checkpoint_every)
    : model_(&model),
      pulse_(&pulse),
      t_start_(h0.t),
      dt_(dt),
      n_steps_(step_count(T, dt)),
      options_(options),
      checkpoint_every_(std::max(1, checkpoint_every)) {
  if (h0.dim() != model.dim()) throw DimensionError("NoDetectionBranch: state dimension");
  TrajectoryResult prefix;
  Runner runner(model, pulse, Scheme::Photodetect, t_start_, dt_, options_, prefix);
  Hierarchy h = h0;
  runner.audit_state(h, 1.0);
  const int stride = std::max(1, options_.sample_stride);
  threshold_.reserve(n_steps_);
  audit_prefix_.reserve(n_steps_ + 1);
  for (std::int64_t k = 0; k < n_steps_; ++k) {
    if (k % checkpoint_every_ == 0) checkpoints_.push_back(h);
    if (k % stride == 0) runner.sample(h);
    audit_prefix_.push_back(prefix.audit);
    h.t = runner.grid_time(k);
    double nu = 0.0;
    try {
      nu = runner.stepper().nu_rate(h);
      // A draw of exactly 1.0 never triggers a jump, which keeps the
      // no-detection arithmetic identical to the direct loop.
      runner.step(h, k, 1.0);
    } catch (const NumericalError& e) {
      failure_step_ = k;
      failure_message_ = e.what();
      break;
    }
    threshold_.push_back(nu * dt_);
  }
  if (failure_step_ < 0) {
    if (n_steps_ % checkpoint_every_ == 0) checkpoints_.push_back(h);
    runner.sample(h);
    audit_prefix_.push_back(prefix.audit);
  }
  sample_times_ = std::move(prefix.times);
  sample_rows_ = std::move(prefix.samples);
  sample_rates_ = std::move(prefix.record.rates);
}

Hierarchy NoDetectionBranch::state_at(std::int64_t k) const {
  if (k < 0 || k > n_steps_) throw ValidationError("NoDetectionBranch: step out of range");
  const std::int64_t c = k / checkpoint_every_;
  Hierarchy h = checkpoints_.at(c);
  FilterStepper stepper(*model_, *pulse_);
  for (std::int64_t j = c * checkpoint_every_; j < k; ++j) {
    h.t = t_start_ + static_cast<double>(j) * dt_;
    stepper.photodetect(h, dt_, 1.0);
    h.t = t_start_ + static_cast<double>(j + 1) * dt_;
  }
  return h;
}

TrajectoryResult NoDetectionBranch::run_from(NoiseSource& noise) const {
  TrajectoryResult result;
  result.record.scheme = Scheme::Photodetect;
  result.record.t_start = t_start_;
  result.record.dt = dt_;
  const int stride = std::max(1, options_.sample_stride);
  const std::int64_t limit = failure_step_ >= 0 ? failure_step_ : n_steps_;

  std::int64_t jump_step = -1;
  double jump_draw = 0.0;
  for (std::int64_t k = 0; k < limit; ++k) {
    const double u = noise.uniform();
    if (u < threshold_[k]) {
      jump_step = k;
      jump_draw = u;
      break;
    }
  }
  if (jump_step < 0 && failure_step_ >= 0) {
    noise.uniform();
    const double t = t_start_ + static_cast<double>(failure_step_) * dt_;
    throw NumericalError(failure_message_, t);
  }

  // Prefix samples are those taken at step indices <= the last prefix step.
  const std::int64_t last = jump_step < 0 ? n_steps_ : jump_step;
  const std::size_t n_samples =
      jump_step < 0 ? sample_times_.size() : static_cast<std::size_t>(last / stride + 1);
  result.times.assign(sample_times_.begin(), sample_times_.begin() + n_samples);
  result.record.rate_times = result.times;
  result.record.rates.assign(sample_rates_.begin(), sample_rates_.begin() + n_samples);
  if (!sample_rows_.empty()) {
    result.samples.assign(sample_rows_.begin(), sample_rows_.begin() + n_samples);
  }
  result.audit = audit_prefix_[last];
  if (jump_step < 0) {
    result.final_state = state_at(n_steps_);
    return result;
  }

  Runner runner(*model_, *pulse_, Scheme::Photodetect, t_start_, dt_, options_, result);
  Hierarchy h = state_at(jump_step);
  if (runner.step(h, jump_step, jump_draw)) {
    result.stopped_early = true;
    runner.sample(h);
    result.final_state = h;
    return result;
  }
  runner.run(h, jump_step + 1, n_steps_, noise);
  return result;
}

}  // namespace pf
