#include "pf/pulse.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pf/csv.hpp"
#include "pf/errors.hpp"

namespace pf {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

double onset_slack(double t0) { return 1e-9 * std::max(1.0, std::abs(t0)); }

// Locates the segment [times[i], times[i+1]] containing t; requires t inside the grid.
std::size_t segment_of(const std::vector<double>& times, double t) {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  auto idx = static_cast<std::size_t>(std::distance(times.begin(), it));
  return std::min(idx == 0 ? 0 : idx - 1, times.size() - 2);
}

}  // namespace

Pulse Pulse::exponential(double gamma, double t0) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw ValidationError("exponential pulse: gamma must be > 0");
  }
  if (!std::isfinite(t0)) throw ValidationError("exponential pulse: t0 must be finite");
  return Pulse(Exponential{gamma, t0});
}

Pulse Pulse::absent() { return Pulse(Absent{}); }

Pulse Pulse::sampled(std::vector<double> times, std::vector<cplx> values, double norm_tolerance) {
  if (times.size() != values.size()) throw ValidationError("sampled pulse: length mismatch");
  if (times.size() < 2) throw ValidationError("sampled pulse: need at least two samples");
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) {
      throw ValidationError("sampled pulse: times must be strictly increasing");
    }
  }
  for (const auto& v : values) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
      throw ValidationError("sampled pulse: non-finite sample");
    }
  }
  Sampled s{std::move(times), std::move(values), {}, 0.0};
  s.cumulative.resize(s.times.size());
  s.cumulative[0] = 0.0;
  for (std::size_t i = 1; i < s.times.size(); ++i) {
    const double h = s.times[i] - s.times[i - 1];
    s.cumulative[i] =
        s.cumulative[i - 1] + 0.5 * h * (std::norm(s.values[i - 1]) + std::norm(s.values[i]));
  }
  s.total = s.cumulative.back();
  if (std::abs(s.total - 1.0) > norm_tolerance) {
    std::ostringstream msg;
    msg.precision(12);
    msg << "sampled pulse: integral of |xi|^2 is " << s.total << ", not 1 (tolerance "
        << norm_tolerance << ")";
    throw ValidationError(msg.str());
  }
  return Pulse(std::move(s));
}

cplx Pulse::xi(double t) const {
  return std::visit(
      Overloaded{
          [&](const Exponential& e) -> cplx {
            if (t < e.t0 - onset_slack(e.t0)) return 0.0;
            return std::sqrt(e.gamma) * std::exp(-0.5 * e.gamma * std::max(t - e.t0, 0.0));
          },
          [&](const Sampled& s) -> cplx {
            if (t < s.times.front() || t > s.times.back()) return 0.0;
            const std::size_t i = segment_of(s.times, t);
            const double f = (t - s.times[i]) / (s.times[i + 1] - s.times[i]);
            return (1.0 - f) * s.values[i] + f * s.values[i + 1];
          },
          [](const Absent&) -> cplx { return 0.0; },
      },
      shape_);
}

cplx Pulse::xi_left(double t) const {
  return std::visit(
      Overloaded{
          [&](const Exponential& e) -> cplx {
            if (t <= e.t0 + onset_slack(e.t0)) return 0.0;
            return xi(t);
          },
          [&](const Sampled& s) -> cplx {
            if (t <= s.times.front()) return 0.0;
            return xi(t);
          },
          [](const Absent&) -> cplx { return 0.0; },
      },
      shape_);
}

double Pulse::w(double t) const {
  return std::visit(
      Overloaded{
          [&](const Exponential& e) {
            if (t <= e.t0) return 1.0;
            return std::exp(-e.gamma * (t - e.t0));
          },
          [&](const Sampled& s) {
            if (t <= s.times.front()) return 1.0;
            if (t >= s.times.back()) return 0.0;
            const std::size_t i = segment_of(s.times, t);
            const double h = s.times[i + 1] - s.times[i];
            const double f = (t - s.times[i]) / h;
            // |xi|^2 taken linear inside the segment, matching the trapezoid rule.
            const double p0 = std::norm(s.values[i]);
            const double p1 = std::norm(s.values[i + 1]);
            const double partial = h * (p0 * f + 0.5 * (p1 - p0) * f * f);
            const double tail = s.total - (s.cumulative[i] + partial);
            return std::clamp(tail / s.total, 0.0, 1.0);
          },
          [](const Absent&) { return 0.0; },
      },
      shape_);
}

cplx Pulse::xi_over_sqrt_w(double t) const {
  return std::visit(
      Overloaded{
          [&](const Exponential& e) -> cplx {
            if (t < e.t0 - onset_slack(e.t0)) return 0.0;
            return std::sqrt(e.gamma);
          },
          [&](const Sampled&) -> cplx {
            const double wt = w(t);
            if (wt <= 1e-12) return 0.0;
            return xi(t) / std::sqrt(wt);
          },
          [](const Absent&) -> cplx { return 0.0; },
      },
      shape_);
}

double Pulse::normalization_error() const {
  return std::visit(Overloaded{
                        [](const Exponential&) { return 0.0; },
                        [](const Sampled& s) { return std::abs(s.total - 1.0); },
                        [](const Absent&) { return 1.0; },
                    },
                    shape_);
}

std::string Pulse::describe() const {
  return std::visit(Overloaded{
                        [](const Exponential& e) {
                          std::ostringstream os;
                          os << "exponential(gamma=" << e.gamma << ", t0=" << e.t0 << ")";
                          return os.str();
                        },
                        [](const Sampled& s) {
                          return "sampled(" + std::to_string(s.times.size()) + " points)";
                        },
                        [](const Absent&) { return std::string("absent"); },
                    },
                    shape_);
}

Pulse load_pulse_csv(const std::string& path, double norm_tolerance) {
  const CsvTable table = read_numeric_csv(path);
  if (table.header.size() < 2 || table.header.size() > 3) {
    throw ValidationError(path + ": expected columns t,re_xi[,im_xi]");
  }
  std::vector<double> times;
  std::vector<cplx> values;
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size()) throw ValidationError(path + ": ragged row");
    times.push_back(row[0]);
    values.emplace_back(row[1], row.size() == 3 ? row[2] : 0.0);
  }
  return Pulse::sampled(std::move(times), std::move(values), norm_tolerance);
}

}  // namespace pf
