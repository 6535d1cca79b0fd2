#pragma once

// Truncated Fock-space algebra shared by every other module.
//
// Tensor slot ordering is fixed: system modes in the order given by
// ModeLayout::dims (mode a first, mode b second), then the optional
// two-level ancilla last. The ancilla basis is {|g>, |e>} with index 0 = g,
// so sigma_minus() has the same matrix as a two-level annihilator.

#include <complex>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace pf {

using cplx = std::complex<double>;
using Operator = Eigen::MatrixXcd;
using DensityOp = Eigen::MatrixXcd;
using Ket = Eigen::VectorXcd;
/// Compressed copy of a (mostly ladder-like) operator for fast products.
using SparseOp = Eigen::SparseMatrix<cplx>;

inline constexpr cplx kI{0.0, 1.0};

/// Identifies a tensor slot: a system mode by index, or the ancilla.
struct Slot {
  enum class Kind { Mode, Ancilla };
  Kind kind = Kind::Mode;
  int index = 0;

  static Slot mode(int i) { return {Kind::Mode, i}; }
  static Slot ancilla() { return {Kind::Ancilla, -1}; }
  bool is_ancilla() const { return kind == Kind::Ancilla; }
};

class ModeLayout {
 public:
  explicit ModeLayout(std::vector<int> dims, bool ancilla = false);

  const std::vector<int>& dims() const { return dims_; }
  bool has_ancilla() const { return ancilla_; }
  int mode_count() const { return static_cast<int>(dims_.size()); }
  int slot_dim(Slot slot) const;
  /// Product of mode dimensions, times 2 with an ancilla.
  int total_dim() const;
  /// Dimension of the system modes alone.
  int system_dim() const;

  ModeLayout with_ancilla() const { return ModeLayout(dims_, true); }
  ModeLayout system_only() const { return ModeLayout(dims_, false); }

  bool operator==(const ModeLayout&) const = default;

 private:
  std::vector<int> dims_;
  bool ancilla_;
};

struct LadderOps {
  Operator annihilation;
  Operator creation;
};

/// a[k-1,k] = sqrt(k); creation is the adjoint. Throws DimensionError for dim < 2.
LadderOps ladder_ops(int dim);

/// Number operator diag(0, 1, ..., dim-1).
Operator number_op(int dim);

/// |g><e| on the ancilla basis {g, e}.
Operator sigma_minus();
Operator sigma_plus();

/// Kronecker embedding of a single-slot operator into the full layout.
Operator embed(const Operator& op, Slot slot, const ModeLayout& layout);

Operator identity(const ModeLayout& layout);

/// op (x) 1_2, i.e. a system operator lifted onto system (x) ancilla.
Operator with_ancilla_identity(const Operator& op);

/// tr[rho op].
cplx expectation(const DensityOp& rho, const Operator& op);
/// <psi|op|psi>.
cplx expectation(const Ket& psi, const Operator& op);

Ket fock_ket(int n, int dim);
DensityOp fock_dm(int n, int dim);
DensityOp projector(const Ket& psi);

/// Coherent state truncated to `dim` levels and renormalized. Throws
/// TruncationError if the top level still carries more than 1e-6 of the
/// population.
Ket coherent_ket(cplx alpha, int dim);

/// Kronecker product of per-slot kets in layout order.
Ket product_ket(std::span<const Ket> factors);

/// Population of the highest Fock level of `slot` (the truncation audit).
double top_level_population(const DensityOp& rho, Slot slot, const ModeLayout& layout);
double top_level_population(const Ket& psi, Slot slot, const ModeLayout& layout);

/// Severity of a truncation audit value: above kTruncationWarn is worth a
/// warning, above kTruncationFail is an error.
inline constexpr double kTruncationWarn = 1e-4;
inline constexpr double kTruncationFail = 1e-2;

/// Reduced density operator of one system mode.
DensityOp reduce_to_mode(const DensityOp& rho, int mode, const ModeLayout& layout);

/// max |A - A^dagger| entrywise.
double hermiticity_residue(const Operator& op);

/// Smallest eigenvalue of the Hermitian part of rho.
double min_eigenvalue(const DensityOp& rho);

/// Wigner function W(x, p) with hbar = 1, a = (x + i p)/sqrt(2), computed as
/// the displaced-parity expectation (1/pi) tr[rho D(a) P D(a)^dagger] with
/// the Fock-basis series, so the vacuum peaks at 1/pi and the integral over
/// the plane is 1. Result rows index ps, columns index xs.
Eigen::MatrixXd wigner(const DensityOp& rho, std::span<const double> xs,
                       std::span<const double> ps);

/// Uniform grid lo, lo+step, ..., up to hi inclusive (within step/2).
std::vector<double> linspace_step(double lo, double hi, double step);

/// CSV with header `x,p,w`, looping p outer and x inner.
void write_wigner_csv(const std::string& path, std::span<const double> xs,
                      std::span<const double> ps, const Eigen::MatrixXd& w);

}  // namespace pf
