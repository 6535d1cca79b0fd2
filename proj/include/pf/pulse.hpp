#pragma once

// Single-photon wavepackets xi(t) and their remaining norm
// w(t) = int_t^inf |xi(s)|^2 ds.

#include <string>
#include <variant>
#include <vector>

#include "pf/hilbert.hpp"

namespace pf {

class Pulse {
 public:
  /// Photon emitted by a two-level source of decay rate gamma switched on
  /// at t0: xi(t) = sqrt(gamma) exp(-gamma (t - t0)/2) for t >= t0.
  struct Exponential {
    double gamma;
    double t0;
  };

  /// Tabulated wavepacket, linearly interpolated and zero outside the grid.
  struct Sampled {
    std::vector<double> times;
    std::vector<cplx> values;
    std::vector<double> cumulative;  // trapezoid integral of |xi|^2 from times[0]
    double total = 0.0;
  };

  /// No photon at all: the input field is in vacuum, xi = 0 and w = 0.
  struct Absent {};

  static Pulse exponential(double gamma, double t0 = 0.0);
  /// Rejects wavepackets whose trapezoid norm differs from 1 by more than
  /// `norm_tolerance`. Samples are never rescaled.
  static Pulse sampled(std::vector<double> times, std::vector<cplx> values,
                       double norm_tolerance = 1e-8);
  static Pulse absent();

  /// Right-continuous at the onset: xi(t0) is the first nonzero value.
  /// Times within 1e-9 (relative) of the onset count as the onset, so a
  /// grid that reaches t0 through accumulated steps still switches on.
  cplx xi(double t) const;
  /// Left limit, for the stage at the end of an integration step: zero at
  /// the onset itself.
  cplx xi_left(double t) const;
  double w(double t) const;
  /// xi / sqrt(w), finite for all t. For the exponential shape the
  /// quotient is evaluated analytically and equals sqrt(gamma) after onset.
  cplx xi_over_sqrt_w(double t) const;

  /// |int |xi|^2 - 1|: exact zero for Exponential, quadrature for Sampled.
  double normalization_error() const;

  bool is_absent() const { return std::holds_alternative<Absent>(shape_); }
  const auto& shape() const { return shape_; }
  std::string describe() const;

 private:
  explicit Pulse(std::variant<Exponential, Sampled, Absent> shape) : shape_(std::move(shape)) {}

  std::variant<Exponential, Sampled, Absent> shape_;
};

/// Reads `t,re_xi[,im_xi]` rows (header required) and validates the norm.
Pulse load_pulse_csv(const std::string& path, double norm_tolerance = 1e-8);

}  // namespace pf
