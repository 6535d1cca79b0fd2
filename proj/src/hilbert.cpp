#include "pf/hilbert.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "pf/csv.hpp"
#include "pf/errors.hpp"

namespace pf {

namespace {

Operator kron(const Operator& a, const Operator& b) {
  Operator out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

// Slot dimensions in tensor order (modes, then ancilla).
std::vector<int> slot_dims(const ModeLayout& layout) {
  std::vector<int> d = layout.dims();
  if (layout.has_ancilla()) d.push_back(2);
  return d;
}

int slot_position(Slot slot, const ModeLayout& layout) {
  if (slot.is_ancilla()) {
    if (!layout.has_ancilla()) throw DimensionError("layout has no ancilla slot");
    return layout.mode_count();
  }
  if (slot.index < 0 || slot.index >= layout.mode_count()) {
    throw DimensionError("mode slot " + std::to_string(slot.index) + " out of range");
  }
  return slot.index;
}

// Index stride of a slot in the flattened basis: first slot most significant.
int slot_stride(int position, const std::vector<int>& dims) {
  int stride = 1;
  for (std::size_t k = position + 1; k < dims.size(); ++k) stride *= dims[k];
  return stride;
}

void require_square(const Operator& op, Eigen::Index dim, const char* what) {
  if (op.rows() != dim || op.cols() != dim) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(dim) + "x" +
                         std::to_string(dim) + ", got " + std::to_string(op.rows()) + "x" +
                         std::to_string(op.cols()));
  }
}

}  // namespace

ModeLayout::ModeLayout(std::vector<int> dims, bool ancilla)
    : dims_(std::move(dims)), ancilla_(ancilla) {
  if (dims_.empty()) throw DimensionError("layout needs at least one mode");
  for (int d : dims_) {
    if (d < 1) throw DimensionError("mode dimension must be >= 1, got " + std::to_string(d));
  }
}

int ModeLayout::slot_dim(Slot slot) const {
  if (slot.is_ancilla()) {
    if (!ancilla_) throw DimensionError("layout has no ancilla slot");
    return 2;
  }
  if (slot.index < 0 || slot.index >= mode_count()) {
    throw DimensionError("mode slot " + std::to_string(slot.index) + " out of range");
  }
  return dims_[slot.index];
}

int ModeLayout::system_dim() const {
  int n = 1;
  for (int d : dims_) n *= d;
  return n;
}

int ModeLayout::total_dim() const { return system_dim() * (ancilla_ ? 2 : 1); }

LadderOps ladder_ops(int dim) {
  if (dim < 2) throw DimensionError("ladder operators need dim >= 2, got " + std::to_string(dim));
  Operator a = Operator::Zero(dim, dim);
  for (int k = 1; k < dim; ++k) a(k - 1, k) = std::sqrt(static_cast<double>(k));
  Operator ad = a.adjoint();
  return {std::move(a), std::move(ad)};
}

Operator number_op(int dim) {
  if (dim < 1) throw DimensionError("number operator needs dim >= 1");
  Operator n = Operator::Zero(dim, dim);
  for (int k = 0; k < dim; ++k) n(k, k) = static_cast<double>(k);
  return n;
}

Operator sigma_minus() {
  Operator s = Operator::Zero(2, 2);
  s(0, 1) = 1.0;  // |g><e|
  return s;
}

Operator sigma_plus() { return sigma_minus().adjoint(); }

Operator embed(const Operator& op, Slot slot, const ModeLayout& layout) {
  const auto dims = slot_dims(layout);
  const int pos = slot_position(slot, layout);
  require_square(op, dims[pos], "embed");
  int before = 1;
  for (int k = 0; k < pos; ++k) before *= dims[k];
  const int after = slot_stride(pos, dims);
  Operator out = kron(Operator::Identity(before, before), op);
  return kron(out, Operator::Identity(after, after));
}

Operator identity(const ModeLayout& layout) {
  return Operator::Identity(layout.total_dim(), layout.total_dim());
}

Operator with_ancilla_identity(const Operator& op) {
  return kron(op, Operator::Identity(2, 2));
}

cplx expectation(const DensityOp& rho, const Operator& op) {
  if (rho.rows() != op.rows() || rho.cols() != op.cols() || rho.rows() != rho.cols()) {
    throw DimensionError("expectation: state and operator shapes differ");
  }
  // tr[rho op] = sum_ij rho_ij op_ji
  return (rho.array() * op.transpose().array()).sum();
}

cplx expectation(const Ket& psi, const Operator& op) {
  if (psi.size() != op.rows() || op.rows() != op.cols()) {
    throw DimensionError("expectation: ket and operator shapes differ");
  }
  return psi.dot(op * psi);
}

Ket fock_ket(int n, int dim) {
  if (n < 0 || n >= dim) throw DimensionError("Fock level out of range");
  Ket k = Ket::Zero(dim);
  k(n) = 1.0;
  return k;
}

DensityOp fock_dm(int n, int dim) { return projector(fock_ket(n, dim)); }

DensityOp projector(const Ket& psi) { return psi * psi.adjoint(); }

Ket coherent_ket(cplx alpha, int dim) {
  if (dim < 1) throw DimensionError("coherent_ket: dim must be >= 1");
  Ket k(dim);
  k(0) = 1.0;
  for (int n = 1; n < dim; ++n) k(n) = k(n - 1) * alpha / std::sqrt(static_cast<double>(n));
  k /= k.norm();
  const double top = std::norm(k(dim - 1));
  if (dim > 1 && top > 1e-6) {
    throw TruncationError("coherent_ket: |alpha|^2 = " + std::to_string(std::norm(alpha)) +
                          " needs more than " + std::to_string(dim) +
                          " levels (top-level population " + std::to_string(top) + ")");
  }
  return k;
}

Ket product_ket(std::span<const Ket> factors) {
  if (factors.empty()) throw DimensionError("product_ket: no factors");
  Ket out = factors[0];
  for (std::size_t f = 1; f < factors.size(); ++f) {
    Ket next(out.size() * factors[f].size());
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      next.segment(i * factors[f].size(), factors[f].size()) = out(i) * factors[f];
    }
    out = std::move(next);
  }
  return out;
}

double top_level_population(const DensityOp& rho, Slot slot, const ModeLayout& layout) {
  const auto dims = slot_dims(layout);
  const int pos = slot_position(slot, layout);
  require_square(rho, layout.total_dim(), "top_level_population");
  const int stride = slot_stride(pos, dims);
  double pop = 0.0;
  for (Eigen::Index i = 0; i < rho.rows(); ++i) {
    if ((i / stride) % dims[pos] == dims[pos] - 1) pop += rho(i, i).real();
  }
  return pop;
}

double top_level_population(const Ket& psi, Slot slot, const ModeLayout& layout) {
  const auto dims = slot_dims(layout);
  const int pos = slot_position(slot, layout);
  if (psi.size() != layout.total_dim()) throw DimensionError("top_level_population: ket size");
  const int stride = slot_stride(pos, dims);
  double pop = 0.0;
  for (Eigen::Index i = 0; i < psi.size(); ++i) {
    if ((i / stride) % dims[pos] == dims[pos] - 1) pop += std::norm(psi(i));
  }
  return pop / psi.squaredNorm();
}

DensityOp reduce_to_mode(const DensityOp& rho, int mode, const ModeLayout& layout) {
  const auto dims = slot_dims(layout);
  const int pos = slot_position(Slot::mode(mode), layout);
  require_square(rho, layout.total_dim(), "reduce_to_mode");
  const int d = dims[pos];
  const int stride = slot_stride(pos, dims);
  DensityOp out = DensityOp::Zero(d, d);
  const Eigen::Index n = rho.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    const int li = (i / stride) % d;
    const Eigen::Index rest_i = i - li * stride;
    for (int lj = 0; lj < d; ++lj) {
      out(li, lj) += rho(i, rest_i + lj * stride);
    }
  }
  return out;
}

double hermiticity_residue(const Operator& op) {
  if (op.rows() != op.cols()) throw DimensionError("hermiticity_residue: not square");
  return (op - op.adjoint()).cwiseAbs().maxCoeff();
}

double min_eigenvalue(const DensityOp& rho) {
  const DensityOp herm = 0.5 * (rho + rho.adjoint());
  Eigen::SelfAdjointEigenSolver<DensityOp> solver(herm, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

Eigen::MatrixXd wigner(const DensityOp& rho, std::span<const double> xs,
                       std::span<const double> ps) {
  if (rho.rows() != rho.cols()) throw DimensionError("wigner: state not square");
  if (hermiticity_residue(rho) > 1e-8) {
    throw PhysicalityError("wigner: state is not Hermitian (residue " +
                           std::to_string(hermiticity_residue(rho)) + ")");
  }
  if (std::abs(rho.trace().real() - 1.0) > 1e-6) {
    throw PhysicalityError("wigner: trace " + std::to_string(rho.trace().real()) + " != 1");
  }
  const int m_dim = static_cast<int>(rho.rows());
  Eigen::MatrixXd w(ps.size(), xs.size());
  std::vector<cplx> basis(m_dim);
  std::vector<double> sq(m_dim);
  for (int k = 0; k < m_dim; ++k) sq[k] = std::sqrt(static_cast<double>(k));

  // Clenshaw-style recursion over the Wigner functions of |m><n|, which are
  // products of a Gaussian and associated Laguerre polynomials in |2A|^2.
  for (std::size_t ip = 0; ip < ps.size(); ++ip) {
    for (std::size_t ix = 0; ix < xs.size(); ++ix) {
      const cplx a_val = cplx(xs[ix], ps[ip]) / std::numbers::sqrt2;
      basis[0] = std::exp(-2.0 * std::norm(a_val)) / std::numbers::pi;
      double acc = rho(0, 0).real() * basis[0].real();
      for (int n = 1; n < m_dim; ++n) {
        basis[n] = 2.0 * a_val * basis[n - 1] / sq[n];
        acc += 2.0 * (rho(0, n) * basis[n]).real();
      }
      for (int m = 1; m < m_dim; ++m) {
        cplx carry = basis[m];
        basis[m] = (2.0 * std::conj(a_val) * carry - sq[m] * basis[m - 1]) / sq[m];
        acc += (rho(m, m) * basis[m]).real();
        for (int n = m + 1; n < m_dim; ++n) {
          const cplx next = (2.0 * a_val * basis[n - 1] - sq[m] * carry) / sq[n];
          carry = basis[n];
          basis[n] = next;
          acc += 2.0 * (rho(m, n) * basis[n]).real();
        }
      }
      w(ip, ix) = acc;
    }
  }
  return w;
}

std::vector<double> linspace_step(double lo, double hi, double step) {
  if (!(step > 0.0) || !(hi >= lo)) throw ValidationError("linspace_step: bad range");
  const auto count = static_cast<long>(std::floor((hi - lo) / step + 0.5)) + 1;
  std::vector<double> out(count);
  for (long i = 0; i < count; ++i) out[i] = lo + step * static_cast<double>(i);
  return out;
}

void write_wigner_csv(const std::string& path, std::span<const double> xs,
                      std::span<const double> ps, const Eigen::MatrixXd& w) {
  if (w.rows() != static_cast<Eigen::Index>(ps.size()) ||
      w.cols() != static_cast<Eigen::Index>(xs.size())) {
    throw DimensionError("write_wigner_csv: grid shape mismatch");
  }
  CsvWriter out(path, {"x", "p", "w"});
  for (std::size_t ip = 0; ip < ps.size(); ++ip) {
    for (std::size_t ix = 0; ix < xs.size(); ++ix) out.row({xs[ix], ps[ip], w(ip, ix)});
  }
}

}  // namespace pf
