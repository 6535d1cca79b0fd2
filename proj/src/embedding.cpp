#include "pf/embedding.hpp"

#include <cmath>
#include <sstream>

#include "pf/errors.hpp"

namespace pf {

namespace {

void require_no_extra_channels(const SystemModel& model) {
  if (!model.extra_Ls().empty()) {
    throw UnsupportedConfigError(
        "the pure-state representation cannot carry unmonitored channels; use the SME");
  }
}

Operator system_lift(const Operator& op, const Operator& ancilla_op) {
  Operator out(op.rows() * 2, op.cols() * 2);
  for (Eigen::Index i = 0; i < op.rows(); ++i) {
    for (Eigen::Index j = 0; j < op.cols(); ++j) {
      out.block(2 * i, 2 * j, 2, 2) = op(i, j) * ancilla_op;
    }
  }
  return out;
}

// Ancilla index 0 = |g>, 1 = |e>; joint index = 2 * system_index + ancilla.
void split(const Ket& psi, Ket& g, Ket& e) {
  const Eigen::Index n = psi.size() / 2;
  g.resize(n);
  e.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    g(i) = psi(2 * i);
    e(i) = psi(2 * i + 1);
  }
}

}  // namespace

JointKet initial_joint_ket(const Ket& system, const ModeLayout& system_layout, double t0) {
  if (system_layout.has_ancilla()) throw DimensionError("system layout already has an ancilla");
  if (system.size() != system_layout.total_dim()) throw DimensionError("initial ket size");
  if (std::abs(system.norm() - 1.0) > 1e-10) throw PhysicalityError("initial ket not normalized");
  const Ket excited = fock_ket(1, 2);
  const Ket factors[] = {system, excited};
  return {system_layout.with_ancilla(), product_ket(factors), t0};
}

Operator total_coupling(const SystemModel& model, const Pulse& pulse, double t) {
  const cplx r = pulse.xi_over_sqrt_w(t);
  return with_ancilla_identity(model.L()) +
         r * system_lift(Operator::Identity(model.dim(), model.dim()), sigma_minus());
}

Operator total_hamiltonian(const SystemModel& model, const Pulse& pulse, double t,
                           const DensityOp& feedback_state) {
  const cplx r = pulse.xi_over_sqrt_w(t);
  Operator h = with_ancilla_identity(model.hamiltonian(t, feedback_state));
  h += 0.5 * kI *
       (std::conj(r) * system_lift(model.L(), sigma_plus()) -
        r * system_lift(model.L_dag(), sigma_minus()));
  if (hermiticity_residue(h) > 1e-10) throw NumericalError("H_T is not Hermitian");
  return h;
}

SystemModel cascaded_model(const SystemModel& model, const Pulse& pulse) {
  const auto* shape = std::get_if<Pulse::Exponential>(&pulse.shape());
  if (!shape) throw UnsupportedConfigError("cascaded_model needs an exponential pulse");
  if (model.state_dependent()) {
    throw UnsupportedConfigError("cascaded_model needs a state-independent Hamiltonian");
  }
  const double t_on = shape->t0;
  const ModeLayout joint = model.layout().with_ancilla();
  std::vector<HamiltonianTerm> terms;
  for (const auto& term : model.terms()) {
    auto coeff = term.coefficient;
    terms.push_back({with_ancilla_identity(term.op),
                     [coeff](double t, const DensityOp&) {
                       return coeff(t, DensityOp());
                     },
                     false});
  }
  const cplx r = pulse.xi_over_sqrt_w(t_on);
  const Operator swap = 0.5 * kI *
                        (std::conj(r) * system_lift(model.L(), sigma_plus()) -
                         r * system_lift(model.L_dag(), sigma_minus()));
  std::vector<Operator> extra;
  for (const auto& op : model.extra_Ls()) extra.push_back(with_ancilla_identity(op));
  return SystemModel(joint, with_ancilla_identity(model.static_hamiltonian()) + swap,
                     total_coupling(model, pulse, t_on), std::move(extra), std::move(terms));
}

DensityOp reduced_system_state(const JointKet& jk) {
  Ket g, e;
  split(jk.psi, g, e);
  return (g * g.adjoint() + e * e.adjoint()) / jk.psi.squaredNorm();
}

ExtractedHierarchy extract_hierarchy(const JointKet& jk, const Pulse& pulse, double t) {
  if (!jk.layout.has_ancilla() || jk.psi.size() != jk.layout.total_dim()) {
    throw DimensionError("extract_hierarchy: not a joint ket");
  }
  Ket g, e;
  split(jk.psi, g, e);
  const Eigen::Index n = g.size();
  ExtractedHierarchy out;
  Hierarchy& h = out.hierarchy;
  h.t = t;
  h.r11 = g * g.adjoint() + e * e.adjoint();
  const double norm = h.r11.trace().real();
  if (!(norm > 0.0)) throw PhysicalityError("extract_hierarchy: zero state");
  h.r11 /= norm;
  const double w = pulse.w(t);
  if (w > 1e-10) {
    h.r00 = (e * e.adjoint()) / (w * norm);
    h.r01 = (e * g.adjoint()) / (std::sqrt(w) * norm);
    h.r10 = h.r01.adjoint();
  } else {
    out.conditional_available = false;
    h.r00 = DensityOp::Zero(n, n);
    h.r01 = DensityOp::Zero(n, n);
    h.r10 = DensityOp::Zero(n, n);
  }
  return out;
}

SseStepper::SseStepper(const SystemModel& model, const Pulse& pulse)
    : model_(&model), pulse_(&pulse) {
  require_no_extra_channels(model);
  const int n = model.dim();
  const Operator id = Operator::Identity(n, n);
  L_joint_ = with_ancilla_identity(model.L());
  L_sigma_plus_ = system_lift(model.L(), sigma_plus());
  Ldag_sigma_minus_ = system_lift(model.L_dag(), sigma_minus());
  sigma_minus_joint_ = system_lift(id, sigma_minus());
  h_static_joint_ = with_ancilla_identity(model.static_hamiltonian());
  for (const auto& term : model.terms()) term_ops_.push_back(with_ancilla_identity(term.op));
  LT_.resize(2 * n, 2 * n);
  LT_dag_.resize(2 * n, 2 * n);
  HT_.resize(2 * n, 2 * n);
  work_.resize(2 * n);
  work2_.resize(2 * n);
}

void SseStepper::prepare(const JointKet& jk) {
  const cplx r = pulse_->xi_over_sqrt_w(jk.t);
  LT_ = L_joint_ + r * sigma_minus_joint_;
  LT_dag_ = LT_.adjoint();
  HT_ = h_static_joint_;
  if (!term_ops_.empty()) {
    if (model_->state_dependent()) {
      reduced_ = reduced_system_state(jk);
    } else if (reduced_.size() == 0) {
      reduced_ = DensityOp::Zero(model_->dim(), model_->dim());
    }
    const auto& terms = model_->terms();
    for (std::size_t k = 0; k < terms.size(); ++k) {
      HT_ += terms[k].coefficient(jk.t, reduced_) * term_ops_[k];
    }
  }
  HT_ += (0.5 * kI * std::conj(r)) * L_sigma_plus_ - (0.5 * kI * r) * Ldag_sigma_minus_;
}

double SseStepper::homodyne_rate(const JointKet& jk) {
  prepare(jk);
  work_.noalias() = LT_ * jk.psi;
  return 2.0 * jk.psi.dot(work_).real() / jk.psi.squaredNorm();
}

double SseStepper::detection_rate(const JointKet& jk) {
  prepare(jk);
  work_.noalias() = LT_ * jk.psi;
  return work_.squaredNorm() / jk.psi.squaredNorm();
}

SseHomodyneOutcome SseStepper::homodyne(JointKet& jk, double dt, double z) {
  if (!(dt > 0.0)) throw ValidationError("SSE homodyne step: dt must be > 0");
  prepare(jk);
  Ket& psi = jk.psi;
  work_.noalias() = LT_ * psi;            // L_T psi
  const cplx mean_L = psi.dot(work_);     // <L_T>
  SseHomodyneOutcome out;
  out.dW = std::sqrt(dt) * z;
  out.dY = 2.0 * mean_L.real() * dt + out.dW;
  const double s = out.dY * out.dY - dt;
  // psi -> M psi with M = 1 - (i H_T + L_T^dag L_T / 2) dt + L_T dY + L_T^2 s / 2,
  // the pure-state form of the map used by the hierarchy filter.
  work2_.noalias() = -kI * dt * (HT_ * psi);
  work2_.noalias() -= (0.5 * dt) * (LT_dag_ * work_);
  work2_ += out.dY * work_;
  work2_.noalias() += (0.5 * s) * (LT_ * work_);
  psi += work2_;
  psi /= psi.norm();
  jk.t += dt;
  return out;
}

SsePhotodetectOutcome SseStepper::photodetect(JointKet& jk, double dt, double u) {
  if (!(dt > 0.0)) throw ValidationError("SSE photodetection step: dt must be > 0");
  prepare(jk);
  Ket& psi = jk.psi;
  work_.noalias() = LT_ * psi;
  SsePhotodetectOutcome out;
  out.rate = work_.squaredNorm();
  if (out.rate * dt >= 0.1) {
    std::ostringstream msg;
    msg << "<L_T^dag L_T> dt = " << out.rate * dt << " >= 0.1; reduce dt";
    throw StepSizeError(msg.str(), jk.t);
  }
  out.jumped = u < out.rate * dt;
  if (out.jumped) {
    const double nrm = work_.norm();
    if (!(nrm > 0.0)) throw ImpossibleJumpError("jump on a state with L_T psi = 0", jk.t);
    psi = work_ / nrm;
  } else {
    work2_.noalias() = -kI * (HT_ * psi);
    work2_.noalias() -= 0.5 * (LT_dag_ * work_);
    work2_ += 0.5 * out.rate * psi;
    psi += dt * work2_;
    psi /= psi.norm();
  }
  jk.t += dt;
  return out;
}

SseHomodyneStep sse_homodyne_step(const SystemModel& model, const Pulse& pulse,
                                  const JointKet& jk, double dt, NoiseSource& noise) {
  SseStepper stepper(model, pulse);
  SseHomodyneStep out{jk, 0.0};
  out.dY = stepper.homodyne(out.state, dt, noise.normal()).dY;
  return out;
}

SsePhotodetectStep sse_photodetect_step(const SystemModel& model, const Pulse& pulse,
                                        const JointKet& jk, double dt, NoiseSource& noise) {
  SseStepper stepper(model, pulse);
  SsePhotodetectStep out{jk, false};
  out.jumped = stepper.photodetect(out.state, dt, noise.uniform()).jumped;
  return out;
}

TrajectoryResult simulate_sse_trajectory(const SystemModel& model, const Pulse& pulse,
                                         Scheme scheme, const JointKet& jk0, double T, double dt,
                                         NoiseSource& noise, const TrajectoryOptions& options) {
  const std::int64_t n = step_count(T, dt);
  if (jk0.psi.size() != 2 * model.dim()) throw DimensionError("simulate_sse_trajectory: ket size");
  SseStepper stepper(model, pulse);
  TrajectoryResult result;
  result.record.scheme = scheme;
  result.record.t_start = jk0.t;
  result.record.dt = dt;
  std::vector<double> row(options.observables ? options.observables->names.size() : 0);
  const int stride = std::max(1, options.sample_stride);
  JointKet jk = jk0;
  auto grid_time = [&](std::int64_t k) { return jk0.t + static_cast<double>(k) * dt; };

  auto sample = [&] {
    const double rate =
        scheme == Scheme::Homodyne ? stepper.homodyne_rate(jk) : stepper.detection_rate(jk);
    result.times.push_back(jk.t);
    result.record.rate_times.push_back(jk.t);
    result.record.rates.push_back(rate);
    if (options.observables) {
      const ExtractedHierarchy ex = extract_hierarchy(jk, pulse, jk.t);
      options.observables->evaluate(ex.hierarchy, rate, row);
      result.samples.push_back(row);
    }
  };

  for (std::int64_t k = 0; k < n; ++k) {
    jk.t = grid_time(k);
    if (k % stride == 0) sample();
    try {
      if (scheme == Scheme::Homodyne) {
        result.record.dY.push_back(stepper.homodyne(jk, dt, noise.normal()).dY);
      } else if (stepper.photodetect(jk, dt, noise.uniform()).jumped) {
        result.record.jump_times.push_back(grid_time(k + 1));
      }
    } catch (const NumericalError& e) {
      std::ostringstream msg;
      msg << e.what() << " (at t=" << grid_time(k) << ")";
      throw NumericalError(msg.str(), grid_time(k));
    }
    jk.t = grid_time(k + 1);
    if (options.audit) {
      result.audit.max_trace_error =
          std::max(result.audit.max_trace_error, std::abs(jk.psi.norm() - 1.0));
      ++result.audit.steps;
    }
  }
  sample();
  const ExtractedHierarchy ex = extract_hierarchy(jk, pulse, jk.t);
  result.final_state = ex.hierarchy;
  return result;
}

}  // namespace pf
