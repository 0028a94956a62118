#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "cavstab/carfollowing.hpp"
#include "cavstab/errors.hpp"

namespace cavstab {

/// Uniform-flow operating point of one vehicle: desired headway
/// lambda2 * v_star + lambda3.
struct EquilibriumSpec {
  double v_star = 15.0;   // m/s
  double lambda2 = 0.0;   // s
  double lambda3 = 20.0;  // m

  double desired_headway() const { return lambda2 * v_star + lambda3; }
};

/// Log-spaced frequency grid, rad/s.
struct OmegaGrid {
  double omega_min = 1e-3;
  double omega_max = 1e2;
  std::size_t points = 4000;

  void validate() const {
    if (!(omega_min > 0.0) || !(omega_max > omega_min) || points < 2) {
      throw DataError("omega grid needs 0 < omega_min < omega_max and at least 2 points");
    }
  }

  /// All points, both ends included.
  std::vector<double> values() const { return values_up_to(omega_max, true); }

  /// Points of the same spacing in [omega_min, upper); `points` samples
  /// regardless of where upper falls.
  std::vector<double> values_up_to(double upper, bool include_end = false) const {
    std::vector<double> out(points);
    const double span = std::log(upper / omega_min);
    const double denom = static_cast<double>(include_end ? points - 1 : points);
    for (std::size_t i = 0; i < points; ++i) {
      out[i] = omega_min * std::exp(span * static_cast<double>(i) / denom);
    }
    if (include_end) out.back() = upper;
    return out;
  }
};

// ---------------------------------------------------------------------------
// Linearization and transfer functions

inline LinearizedHdv linearize_hdv(const FvdmParams& theta, const EquilibriumSpec& eq) {
  const double h = eq.desired_headway();
  if (!(h > 0.0)) throw NonpositiveEquilibriumHeadway(h);
  return {theta.alpha * ov_slope(theta, h), theta.alpha, theta.beta, eq.lambda2, theta.tau};
}

/// T_i(j omega) of the delayed linearized HDV.
inline std::complex<double> hdv_transfer(const LinearizedHdv& lin, double omega) {
  using namespace std::complex_literals;
  const std::complex<double> s = 1i * omega;
  const std::complex<double> delay = std::exp(-s * lin.tau);
  const double big_k = lin.k2 + lin.k3 + lin.k1 * lin.lambda2;
  return (lin.k1 + s * lin.k3) * delay / (s * s + s * big_k * delay + lin.k1 * delay);
}

/// |T_i(j omega)|^2 by complex substitution.
inline double hdv_gain_sq(const LinearizedHdv& lin, double omega) {
  return std::norm(hdv_transfer(lin, omega));
}

/// |T_i(j omega)|^2 from the expanded real closed form.
inline double hdv_gain_sq_closed_form(const LinearizedHdv& lin, double omega) {
  const double big_k = lin.k2 + lin.k3 + lin.k1 * lin.lambda2;
  const double w2 = omega * omega;
  const double c = std::cos(omega * lin.tau);
  const double s = std::sin(omega * lin.tau);
  // Expanding these squares gives w^4 + w^2 K^2 + k1^2 - 2 w^3 K sin - 2 w^2 k1 cos,
  // which cancels badly near resonance peaks; the factored sum does not.
  const double re = -w2 + omega * big_k * s + lin.k1 * c;
  const double im = omega * big_k * c - lin.k1 * s;
  return (lin.k1 * lin.k1 + w2 * lin.k3 * lin.k3) / (re * re + im * im);
}

/// T_A(j omega) of the delay-free CAV controller.
inline std::complex<double> cav_transfer(const ControllerGains& g, double omega) {
  using namespace std::complex_literals;
  const std::complex<double> s = 1i * omega;
  return (g.k1 + s * g.k3) / (s * s + s * (g.k2 + g.k3 + g.k1 * g.lambda2) + g.k1);
}

/// |T_A(j omega)|^2, closed form.
inline double cav_gain_sq(const ControllerGains& g, double omega) {
  const double w2 = omega * omega;
  const double big_k = g.k2 + g.k3 + g.k1 * g.lambda2;
  const double d = g.k1 - w2;
  return (g.k1 * g.k1 + w2 * g.k3 * g.k3) / (d * d + w2 * big_k * big_k);
}

/// |1 - T_A(j omega)|^2, closed form.
inline double cav_error_gain_sq(const ControllerGains& g, double omega) {
  const double w2 = omega * omega;
  const double big_k = g.k2 + g.k3 + g.k1 * g.lambda2;
  const double d = g.k1 - w2;
  const double r = big_k - g.k3;
  return (w2 * w2 + w2 * r * r) / (d * d + w2 * big_k * big_k);
}

// ---------------------------------------------------------------------------
// Critical frequencies

/// sqrt(max(0, 2k1 - k2^2 - 2 k2 k3)); valid for tau = 0 and lambda2 = 0.
inline double critical_frequency(const LinearizedHdv& lin) {
  return std::sqrt(std::max(0.0, 2.0 * lin.k1 - lin.k2 * lin.k2 - 2.0 * lin.k2 * lin.k3));
}

/// Largest grid frequency with |T_i|^2 >= 1, refined by bisection towards
/// the next grid point. 0 if the gain stays below one on the whole grid.
inline double numeric_critical_frequency(const LinearizedHdv& lin, const OmegaGrid& grid = {}) {
  grid.validate();
  const auto omegas = grid.values();
  std::optional<std::size_t> last;
  for (std::size_t i = omegas.size(); i-- > 0;) {
    if (hdv_gain_sq(lin, omegas[i]) >= 1.0) {
      last = i;
      break;
    }
  }
  if (!last) return 0.0;
  if (*last + 1 == omegas.size()) return omegas.back();
  double lo = omegas[*last];
  double hi = omegas[*last + 1];
  while (hi - lo > 1e-10 * hi) {
    const double mid = 0.5 * (lo + hi);
    (hdv_gain_sq(lin, mid) >= 1.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Closed form where it applies, numeric crossover otherwise.
inline double vehicle_critical_frequency(const LinearizedHdv& lin, const OmegaGrid& grid = {}) {
  if (lin.tau == 0.0 && lin.lambda2 == 0.0) return critical_frequency(lin);
  return numeric_critical_frequency(lin, grid);
}

/// Smallest non-zero critical frequency; 0 when every vehicle is string
/// stable.
inline double platoon_critical_frequency(std::span<const double> omegas) {
  if (omegas.empty()) throw EmptyPlatoon();
  double best = 0.0;
  for (double w : omegas) {
    if (w > 0.0 && (best == 0.0 || w < best)) best = w;
  }
  return best;
}

inline double platoon_critical_frequency(std::span<const LinearizedHdv> lins, const OmegaGrid& grid = {}) {
  if (lins.empty()) throw EmptyPlatoon();
  std::vector<double> omegas;
  omegas.reserve(lins.size());
  for (const auto& lin : lins) omegas.push_back(vehicle_critical_frequency(lin, grid));
  return platoon_critical_frequency(omegas);
}

/// Left-hand side of the CAV string-stability inequality.
inline double cav_stability_margin(const ControllerGains& g) {
  return g.k2 * g.k2 + g.k1 * g.k1 * g.lambda2 * g.lambda2 + 2.0 * g.k2 * g.k3 +
         2.0 * g.k1 * g.k2 * g.lambda2 + 2.0 * g.k1 * g.k3 * g.lambda2 - 2.0 * g.k1;
}

inline bool cav_string_stable(const ControllerGains& g) { return cav_stability_margin(g) >= 0.0; }

// ---------------------------------------------------------------------------
// Stabilization counts

/// Number of HDVs a CAV keeps from amplifying a disturbance.
struct StabCount {
  enum class Kind { Finite, AtLeast, Unbounded };
  Kind kind = Kind::Finite;
  std::int64_t value = 0;  // meaningless for Unbounded

  static StabCount finite(std::int64_t n) { return {Kind::Finite, n}; }
  static StabCount at_least(std::int64_t n) { return {Kind::AtLeast, n}; }
  static StabCount unbounded() { return {Kind::Unbounded, -1}; }

  bool is_unbounded() const { return kind == Kind::Unbounded; }

  /// Total order: Finite(n) < AtLeast(n) < Finite(n + 1) < ... < Unbounded.
  std::int64_t rank() const {
    if (kind == Kind::Unbounded) return std::numeric_limits<std::int64_t>::max();
    return 2 * value + (kind == Kind::AtLeast ? 1 : 0);
  }

  /// Heatmap cell: -1 for Unbounded, otherwise the count.
  std::int64_t encode() const { return is_unbounded() ? -1 : value; }

  friend bool operator==(const StabCount&, const StabCount&) = default;
};

inline StabCount min_count(const StabCount& a, const StabCount& b) { return b.rank() < a.rank() ? b : a; }

struct CountResult {
  StabCount count;
  double binding_omega = 0.0;  // first grid frequency attaining the minimum; 0 if Unbounded
};

/// Per-frequency cumulative HDV log-gains over the perturbation band
/// (0, omega0H), precomputed once per platoon so that many controller
/// gains can be scanned cheaply.
class PlatoonResponse {
 public:
  PlatoonResponse(std::span<const LinearizedHdv> lins, const OmegaGrid& grid = {}) : size_(lins.size()) {
    grid.validate();
    if (lins.empty()) throw EmptyPlatoon();
    critical_ = platoon_critical_frequency(lins, grid);
    if (critical_ == 0.0 || critical_ <= grid.omega_min) return;
    omegas_ = grid.values_up_to(std::min(critical_, grid.omega_max), critical_ > grid.omega_max);
    prefix_max_.resize(omegas_.size() * size_);
    for (std::size_t w = 0; w < omegas_.size(); ++w) {
      double sum = 0.0;
      double running = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < size_; ++i) {
        sum += 0.5 * std::log(hdv_gain_sq(lins[i], omegas_[w]));
        running = std::max(running, sum);
        prefix_max_[w * size_ + i] = running;
      }
    }
  }

  double critical_frequency() const { return critical_; }
  const std::vector<double>& omegas() const { return omegas_; }
  std::size_t platoon_size() const { return size_; }

  /// First-crossing scan at grid point w for a head log-term: the largest n
  /// with head + sum_{i<=m} log|T_i| <= 0 for every m <= n.
  StabCount count_at(std::size_t w, double head) const {
    if (head > 0.0) return StabCount::finite(0);
    const auto* row = prefix_max_.data() + w * size_;
    const auto* hit = std::upper_bound(row, row + size_, -head);
    if (hit == row + size_) return StabCount::at_least(static_cast<std::int64_t>(size_));
    return StabCount::finite(hit - row);
  }

  /// Minimum over the band of count_at(w, head(omega)).
  template <typename HeadFn>
  CountResult scan(HeadFn&& head) const {
    if (omegas_.empty()) return {StabCount::unbounded(), 0.0};
    CountResult best{StabCount::at_least(std::numeric_limits<std::int64_t>::max() / 4), 0.0};
    for (std::size_t w = 0; w < omegas_.size(); ++w) {
      const auto c = count_at(w, head(omegas_[w]));
      if (c.rank() < best.count.rank()) best = {c, omegas_[w]};
      if (best.count.rank() == 0) break;
    }
    return best;
  }

 private:
  std::size_t size_;
  double critical_ = 0.0;
  std::vector<double> omegas_;
  std::vector<double> prefix_max_;  // [omega][vehicle]
};

inline void require_cav_stable(const ControllerGains& g) {
  if (!cav_string_stable(g)) throw DataError("controller gains are not string stable");
}

inline CountResult n_stable(const ControllerGains& g, const PlatoonResponse& response) {
  require_cav_stable(g);
  return response.scan([&g](double w) { return 0.5 * std::log(cav_gain_sq(g, w)); });
}

inline CountResult n_safe(const ControllerGains& g, const PlatoonResponse& response, double eta) {
  require_cav_stable(g);
  if (!(eta > 0.0)) throw DataError("eta must be positive");
  const double log_eta = std::log(eta);
  return response.scan([&g, log_eta](double w) { return 0.5 * std::log(cav_error_gain_sq(g, w)) - log_eta; });
}

inline CountResult n_stable(const ControllerGains& g, std::span<const LinearizedHdv> lins,
                            const OmegaGrid& grid = {}) {
  return n_stable(g, PlatoonResponse(lins, grid));
}

inline CountResult n_safe(const ControllerGains& g, std::span<const LinearizedHdv> lins, double eta,
                          const OmegaGrid& grid = {}) {
  return n_safe(g, PlatoonResponse(lins, grid), eta);
}

// ---------------------------------------------------------------------------
// Gain search

struct GainGridSpec {
  std::vector<double> k1;
  std::vector<double> k2;
  std::vector<double> k3;

  /// start, start + step, ... up to stop (inclusive within half a step).
  static std::vector<double> range(double start, double stop, double step) {
    if (!(step > 0.0) || stop < start) throw DataError("gain range needs step > 0 and stop >= start");
    std::vector<double> out;
    const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 0.5));
    for (std::size_t i = 0; i <= n; ++i) {
      out.push_back(std::round((start + static_cast<double>(i) * step) * 1e9) / 1e9);
    }
    return out;
  }

  static GainGridSpec defaults() {
    return {range(0.0, 1.0, 0.05), range(0.02, 2.0, 0.02), range(0.02, 2.0, 0.02)};
  }
};

struct HeadwayBounds {
  double min = 5.0;   // m
  double max = 60.0;  // m
};

struct GainSearchResult {
  std::vector<double> k1_values;
  std::vector<double> k2_values;
  std::vector<double> k3_values;
  /// Flattened [k1][k2][k3]; cells violating CAV string stability are
  /// marked infeasible and carry no counts.
  std::vector<StabCount> n_stable_grid;
  std::vector<StabCount> n_safe_grid;
  std::vector<std::uint8_t> feasible;
  ControllerGains best_gains;
  StabCount best_stable;
  StabCount best_safe;
  double binding_omega = 0.0;
  double eta = 0.0;
  double desired_headway = 0.0;
  double critical_frequency = 0.0;

  std::size_t index(std::size_t i1, std::size_t i2, std::size_t i3) const {
    return (i1 * k2_values.size() + i2) * k3_values.size() + i3;
  }
};

/// eta = min(h* - h_min, h_max - h*) / beta.
inline double disturbance_eta(double desired_headway, const HeadwayBounds& bounds, double beta) {
  if (!(bounds.min < desired_headway && desired_headway < bounds.max)) {
    throw DataError("desired headway must lie strictly inside the headway bounds");
  }
  if (!(beta > 0.0)) throw DataError("disturbance magnitude must be positive");
  return std::min(desired_headway - bounds.min, bounds.max - desired_headway) / beta;
}

/// Exhaustive search over the gain grid for the string-stable gains that
/// maximize min(n_stable, n_safe), then n_stable. Ties go to the smaller
/// k1, then k2, then k3 (grid order).
inline GainSearchResult optimize_gains(std::span<const LinearizedHdv> lins, const EquilibriumSpec& cav_eq,
                                       const HeadwayBounds& bounds, double disturbance_beta,
                                       const GainGridSpec& grid = GainGridSpec::defaults(),
                                       const OmegaGrid& omega_grid = {},
                                       std::optional<double> eta_override = std::nullopt) {
  GainSearchResult res;
  res.desired_headway = cav_eq.desired_headway();
  res.eta = eta_override ? *eta_override : disturbance_eta(res.desired_headway, bounds, disturbance_beta);
  if (!(res.eta > 0.0)) throw DataError("eta must be positive");
  res.k1_values = grid.k1;
  res.k2_values = grid.k2;
  res.k3_values = grid.k3;
  const std::size_t cells = grid.k1.size() * grid.k2.size() * grid.k3.size();
  res.n_stable_grid.assign(cells, StabCount::finite(0));
  res.n_safe_grid.assign(cells, StabCount::finite(0));
  res.feasible.assign(cells, 0);

  const PlatoonResponse response(lins, omega_grid);
  res.critical_frequency = response.critical_frequency();

  bool found = false;
  std::int64_t best_primary = 0;
  std::int64_t best_secondary = 0;
  for (std::size_t a = 0; a < grid.k1.size(); ++a) {
    for (std::size_t b = 0; b < grid.k2.size(); ++b) {
      for (std::size_t c = 0; c < grid.k3.size(); ++c) {
        const ControllerGains g{grid.k1[a], grid.k2[b], grid.k3[c], cav_eq.lambda2};
        if (g.k1 < 0.0 || g.k2 < 0.0 || g.k3 < 0.0 || !cav_string_stable(g)) continue;
        const std::size_t idx = res.index(a, b, c);
        const auto st = n_stable(g, response);
        const auto sf = n_safe(g, response, res.eta);
        res.feasible[idx] = 1;
        res.n_stable_grid[idx] = st.count;
        res.n_safe_grid[idx] = sf.count;
        const std::int64_t primary = min_count(st.count, sf.count).rank();
        const std::int64_t secondary = st.count.rank();
        if (!found || primary > best_primary || (primary == best_primary && secondary > best_secondary)) {
          found = true;
          best_primary = primary;
          best_secondary = secondary;
          res.best_gains = g;
          res.best_stable = st.count;
          res.best_safe = sf.count;
          res.binding_omega = st.binding_omega;
        }
      }
    }
  }
  if (!found) throw NoFeasibleGains();
  return res;
}

}  // namespace cavstab
