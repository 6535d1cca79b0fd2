#include "pf/hierarchy.hpp"

#include <cmath>
#include <string>

#include "pf/errors.hpp"

namespace pf {

namespace {

void require_dim(const Operator& op, int dim, const std::string& what) {
  if (op.rows() != dim || op.cols() != dim) {
    throw DimensionError(what + ": expected " + std::to_string(dim) + "x" + std::to_string(dim) +
                         ", got " + std::to_string(op.rows()) + "x" + std::to_string(op.cols()));
  }
}

void resize_rates(HierarchyRates& r, int n) {
  r.d00.resize(n, n);
  r.d01.resize(n, n);
  r.d10.resize(n, n);
  r.d11.resize(n, n);
}

void resize_hierarchy(Hierarchy& h, int n) {
  h.r00.resize(n, n);
  h.r01.resize(n, n);
  h.r10.resize(n, n);
  h.r11.resize(n, n);
}

void require_hierarchy(const Hierarchy& h, int n) {
  require_dim(h.r00, n, "hierarchy r00");
  require_dim(h.r01, n, "hierarchy r01");
  require_dim(h.r10, n, "hierarchy r10");
  require_dim(h.r11, n, "hierarchy r11");
}

const Pulse& no_photon() {
  static const Pulse p = Pulse::absent();
  return p;
}

}  // namespace

bool is_exact_zero(const DensityOp& m) { return (m.array() == cplx(0.0, 0.0)).all(); }

SystemModel::SystemModel(ModeLayout layout, Operator static_hamiltonian, Operator monitored_L,
                         std::vector<Operator> extra_Ls, std::vector<HamiltonianTerm> terms)
    : layout_(std::move(layout)),
      h0_(std::move(static_hamiltonian)),
      L_(std::move(monitored_L)),
      extra_(std::move(extra_Ls)),
      terms_(std::move(terms)) {
  const int n = layout_.total_dim();
  require_dim(h0_, n, "static Hamiltonian");
  require_dim(L_, n, "monitored coupling");
  if (hermiticity_residue(h0_) > 1e-10) {
    throw ValidationError("static Hamiltonian is not Hermitian");
  }
  L_dag_ = L_.adjoint();
  damping_ = 0.5 * (L_dag_ * L_);
  L_sp_ = L_.sparseView();
  L_dag_sp_ = L_dag_.sparseView();
  for (const auto& op : extra_) {
    require_dim(op, n, "unmonitored coupling");
    extra_dag_.push_back(op.adjoint());
    damping_ += 0.5 * (op.adjoint() * op);
    extra_sp_.push_back(op.sparseView());
    extra_dag_sp_.push_back(op.adjoint().sparseView());
  }
  for (const auto& term : terms_) {
    require_dim(term.op, n, "Hamiltonian term");
    if (!term.coefficient) throw ValidationError("Hamiltonian term without coefficient");
    state_dependent_ = state_dependent_ || term.reads_state;
  }
}

void SystemModel::hamiltonian_into(double t, const DensityOp& state, Operator& out) const {
  out = h0_;
  for (const auto& term : terms_) out += term.coefficient(t, state) * term.op;
}

Operator SystemModel::hamiltonian(double t, const DensityOp& state) const {
  Operator out;
  hamiltonian_into(t, state, out);
  return out;
}

Hierarchy initial_hierarchy(const DensityOp& rho0, double t0) {
  if (rho0.rows() != rho0.cols() || rho0.rows() < 1) {
    throw DimensionError("initial state must be square");
  }
  if (hermiticity_residue(rho0) > 1e-10) throw PhysicalityError("initial state is not Hermitian");
  if (std::abs(rho0.trace().real() - 1.0) > 1e-8) {
    throw PhysicalityError("initial state trace " + std::to_string(rho0.trace().real()) +
                           " is not 1");
  }
  if (min_eigenvalue(rho0) < -1e-8) throw PhysicalityError("initial state is not positive");
  const auto n = rho0.rows();
  return Hierarchy{rho0, DensityOp::Zero(n, n), DensityOp::Zero(n, n), rho0, t0};
}

HierarchyAudit audit(const Hierarchy& h, bool with_eigenvalues) {
  HierarchyAudit a;
  a.trace_error = std::abs(h.r11.trace().real() - 1.0);
  a.hermiticity_r11 = hermiticity_residue(h.r11);
  a.hermiticity_r00 = hermiticity_residue(h.r00);
  a.adjoint_pairing = (h.r10 - h.r01.adjoint()).cwiseAbs().maxCoeff();
  a.min_eigenvalue_r11 = with_eigenvalues ? min_eigenvalue(h.r11) : 0.0;
  return a;
}

HierarchyEvaluator::HierarchyEvaluator(const SystemModel& model, const Pulse& pulse)
    : model_(&model), pulse_(&pulse) {
  const int n = model.dim();
  h_eff_.resize(n, n);
  tmp_.resize(n, n);
  tmp2_.resize(n, n);
  resize_rates(k1_, n);
  resize_rates(k2_, n);
  resize_rates(k3_, n);
  resize_rates(k4_, n);
  resize_hierarchy(stage_, n);
  prepare(0.0, DensityOp::Identity(n, n) / static_cast<double>(n));
}

void HierarchyEvaluator::prepare(double t, const DensityOp& state) {
  model_->hamiltonian_into(t, state, h_eff_);
  h_eff_.noalias() -= kI * model_->damping();
  h_eff_sp_ = h_eff_.sparseView();
  h_eff_dag_sp_ = h_eff_sp_.adjoint();
}

void HierarchyEvaluator::liouvillian(const DensityOp& rho, DensityOp& out) {
  if (is_exact_zero(rho)) {
    out.setZero();
    return;
  }
  tmp_.noalias() = h_eff_sp_ * rho;
  tmp_.noalias() -= rho * h_eff_dag_sp_;
  out = -kI * tmp_;
  tmp2_.noalias() = model_->L_sparse() * rho;
  out.noalias() += tmp2_ * model_->L_dag_sparse();
  const auto& extra = model_->extra_sparse();
  const auto& extra_dag = model_->extra_dag_sparse();
  for (std::size_t k = 0; k < extra.size(); ++k) {
    tmp2_.noalias() = extra[k] * rho;
    out.noalias() += tmp2_ * extra_dag[k];
  }
}

void HierarchyEvaluator::rates(cplx xi, const Hierarchy& h, HierarchyRates& out) {
  const SparseOp& L = model_->L_sparse();
  const SparseOp& Ld = model_->L_dag_sparse();
  liouvillian(h.r11, out.d11);
  liouvillian(h.r01, out.d01);
  liouvillian(h.r10, out.d10);
  liouvillian(h.r00, out.d00);
  if (xi == cplx(0.0, 0.0)) return;
  const cplx xic = std::conj(xi);
  // [r01, L^dag] xi + [L, r10] xi^*; the r10 term is the adjoint of the r01 one
  // only when r10 = r01^dag, which is not assumed here.
  if (!is_exact_zero(h.r01)) {
    tmp_.noalias() = h.r01 * Ld;
    tmp_.noalias() -= Ld * h.r01;
    out.d11 += xi * tmp_;
  }
  if (!is_exact_zero(h.r10)) {
    tmp_.noalias() = L * h.r10;
    tmp_.noalias() -= h.r10 * L;
    out.d11 += xic * tmp_;
  }
  if (!is_exact_zero(h.r00)) {
    tmp_.noalias() = L * h.r00;
    tmp_.noalias() -= h.r00 * L;
    out.d01 += xic * tmp_;
    tmp_.noalias() = h.r00 * Ld;
    tmp_.noalias() -= Ld * h.r00;
    out.d10 += xi * tmp_;
  }
}

void HierarchyEvaluator::rk4_step(Hierarchy& h, double dt) {
  const double t = h.t;
  const bool varying = model_->time_dependent();
  // The last stage sits on the step end and takes the pulse's left limit,
  // so a step that ends at the onset does not see the photon early.
  auto stage = [&](double ts, const Hierarchy& x, HierarchyRates& k, bool end = false) {
    if (varying) prepare(ts, h.r11);
    rates(end ? pulse_->xi_left(ts) : pulse_->xi(ts), x, k);
  };
  auto advance = [&](const HierarchyRates& k, double f) {
    stage_.r00 = h.r00 + f * k.d00;
    stage_.r01 = h.r01 + f * k.d01;
    stage_.r10 = h.r10 + f * k.d10;
    stage_.r11 = h.r11 + f * k.d11;
  };
  if (!varying) prepare(t, h.r11);
  stage(t, h, k1_);
  advance(k1_, 0.5 * dt);
  stage(t + 0.5 * dt, stage_, k2_);
  advance(k2_, 0.5 * dt);
  stage(t + 0.5 * dt, stage_, k3_);
  advance(k3_, dt);
  stage(t + dt, stage_, k4_, true);
  const double w = dt / 6.0;
  h.r00 += w * (k1_.d00 + 2.0 * k2_.d00 + 2.0 * k3_.d00 + k4_.d00);
  h.r01 += w * (k1_.d01 + 2.0 * k2_.d01 + 2.0 * k3_.d01 + k4_.d01);
  h.r10 += w * (k1_.d10 + 2.0 * k2_.d10 + 2.0 * k3_.d10 + k4_.d10);
  h.r11 += w * (k1_.d11 + 2.0 * k2_.d11 + 2.0 * k3_.d11 + k4_.d11);
  h.t = t + dt;
}

DensityOp lindblad_rhs(const SystemModel& model, double t, const DensityOp& rho) {
  require_dim(rho, model.dim(), "lindblad_rhs state");
  HierarchyEvaluator ev(model, no_photon());
  ev.prepare(t, rho);
  DensityOp out(rho.rows(), rho.cols());
  ev.liouvillian(rho, out);
  return out;
}

HierarchyRates hierarchy_rhs(const SystemModel& model, const Pulse& pulse, double t,
                             const Hierarchy& h) {
  require_hierarchy(h, model.dim());
  HierarchyEvaluator ev(model, pulse);
  ev.prepare(t, h.r11);
  HierarchyRates out;
  resize_rates(out, model.dim());
  ev.rates(pulse.xi(t), h, out);
  return out;
}

Hierarchy step_me(const SystemModel& model, const Pulse& pulse, const Hierarchy& h, double dt) {
  if (!(dt > 0.0)) throw ValidationError("step_me: dt must be > 0");
  require_hierarchy(h, model.dim());
  HierarchyEvaluator ev(model, pulse);
  Hierarchy out = h;
  ev.rk4_step(out, dt);
  const HierarchyAudit a = audit(out, false);
  const double worst = std::max({a.trace_error, a.hermiticity_r11, a.hermiticity_r00,
                                 a.adjoint_pairing});
  if (!std::isfinite(worst) || worst > 1e-6) {
    throw InstabilityError("step_me: invariant residue " + std::to_string(worst), out.t);
  }
  return out;
}

DensityOp step_lindblad(const SystemModel& model, double t, const DensityOp& rho, double dt) {
  if (!(dt > 0.0)) throw ValidationError("step_lindblad: dt must be > 0");
  require_dim(rho, model.dim(), "step_lindblad state");
  HierarchyEvaluator ev(model, no_photon());
  const int n = model.dim();
  DensityOp k1(n, n), k2(n, n), k3(n, n), k4(n, n);
  auto f = [&](double ts, const DensityOp& x, DensityOp& k) {
    ev.prepare(ts, rho);
    ev.liouvillian(x, k);
  };
  f(t, rho, k1);
  f(t + 0.5 * dt, rho + 0.5 * dt * k1, k2);
  f(t + 0.5 * dt, rho + 0.5 * dt * k2, k3);
  f(t + dt, rho + dt * k3, k4);
  return rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

double closed_form_n11(double gamma, double kappa, double t, double t0) {
  if (!(gamma > 0.0) || !(kappa > 0.0)) throw ValidationError("closed_form_n11: rates must be > 0");
  const double tau = t - t0;
  if (tau < 0.0) return 0.0;
  if (std::abs(gamma - kappa) / kappa < 1e-6) {
    return kappa * kappa * tau * tau * std::exp(-kappa * tau);
  }
  // e^{-gamma tau} (e^{(gamma-kappa) tau/2} - 1)^2 = (e^{-kappa tau/2} - e^{-gamma tau/2})^2
  const double diff = std::exp(-0.5 * kappa * tau) - std::exp(-0.5 * gamma * tau);
  return 4.0 * gamma * kappa * diff * diff / ((gamma - kappa) * (gamma - kappa));
}

SystemModel coherent_reference_model(double kappa, const Pulse& pulse, int dim) {
  if (!(kappa > 0.0)) throw ValidationError("coherent_reference_model: kappa must be > 0");
  const LadderOps ops = ladder_ops(dim);
  const double sk = std::sqrt(kappa);
  std::vector<HamiltonianTerm> terms;
  terms.push_back({ops.creation,
                   [pulse, sk](double t, const DensityOp&) { return kI * sk * pulse.xi(t); },
                   false});
  terms.push_back({ops.annihilation,
                   [pulse, sk](double t, const DensityOp&) {
                     return -kI * sk * std::conj(pulse.xi(t));
                   },
                   false});
  return SystemModel(ModeLayout({dim}), Operator::Zero(dim, dim), sk * ops.annihilation, {},
                     std::move(terms));
}

}  // namespace pf
