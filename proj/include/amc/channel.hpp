#pragma once

// Correlated multi-user uplink channel generator.
//
// Each user column is a Rician mix of a line-of-sight steering vector and
// L diffuse paths arriving around the user's azimuth. Users assigned to
// the same cluster share the diffuse path offsets, which is what makes
// their channels correlated. Mobile scenarios evolve the diffuse part as a
// first-order Gauss-Markov process with a Jakes correlation coefficient.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "amc/error.hpp"
#include "amc/rng.hpp"

namespace amc::channel {

using cplx = std::complex<double>;

inline constexpr double kSpeedOfLight = 2.99792458e8;

enum class Propagation { los, nlos };
enum class Mode { uncorrelated, one_cluster, two_clusters, random_placement };
enum class Mobility { stationary, mobile };

inline std::string_view to_string(Propagation p) { return p == Propagation::los ? "los" : "nlos"; }
inline std::string_view to_string(Mobility m) { return m == Mobility::mobile ? "mobile" : "static"; }
inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::uncorrelated: return "uncorrelated";
    case Mode::one_cluster: return "one_cluster";
    case Mode::two_clusters: return "two_clusters";
    case Mode::random_placement: return "random_placement";
  }
  return "?";
}

inline Propagation parse_propagation(std::string_view s) {
  if (s == "los") return Propagation::los;
  if (s == "nlos") return Propagation::nlos;
  throw ConfigError("unknown propagation '" + std::string(s) + "'");
}
inline Mode parse_mode(std::string_view s) {
  if (s == "uncorrelated") return Mode::uncorrelated;
  if (s == "one_cluster") return Mode::one_cluster;
  if (s == "two_clusters") return Mode::two_clusters;
  if (s == "random_placement") return Mode::random_placement;
  throw ConfigError("unknown mode '" + std::string(s) + "'");
}
inline Mobility parse_mobility(std::string_view s) {
  if (s == "static") return Mobility::stationary;
  if (s == "mobile") return Mobility::mobile;
  throw ConfigError("unknown mobility '" + std::string(s) + "'");
}

struct ScenarioConfig {
  Propagation propagation = Propagation::nlos;
  Mode mode = Mode::uncorrelated;
  Mobility mobility = Mobility::stationary;
  double speed_mps = 0.0;
  double carrier_hz = 3.6e9;
  double frame_s = 1e-3;
  double cell_radius_m = 100.0;
  int n_scatterers = 8;
  double cluster_spread_rad = 0.05;
  double rician_k_db = 10.0;
  std::uint64_t master_seed = 1;
  int n_bs = 32;
  int n_ue = 4;

  /// Short identifier such as "nlos_static_one_cluster".
  std::string tag() const {
    return std::string(to_string(propagation)) + "_" + std::string(to_string(mobility)) + "_" +
           std::string(to_string(mode));
  }

  /// Linear Rician K factor; zero without a line-of-sight component.
  double k_factor() const {
    return propagation == Propagation::los ? std::pow(10.0, rician_k_db / 10.0) : 0.0;
  }

  void validate() const {
    if (n_bs < 1 || n_ue < 1) throw ConfigError("n_bs and n_ue must be >= 1");
    if (!(speed_mps >= 0.0)) throw ConfigError("speed_mps must be >= 0");
    // A mobile scenario at zero speed is a legal degenerate case (rho = 1).
    if (mobility == Mobility::stationary && speed_mps != 0.0)
      throw ConfigError("static scenarios require speed_mps = 0");
    if (n_scatterers < 1) throw ConfigError("n_scatterers must be >= 1");
    if (!(cluster_spread_rad > 0.0 && cluster_spread_rad < std::numbers::pi))
      throw ConfigError("cluster_spread_rad must lie in (0, pi)");
    if (!(carrier_hz >= 0.0) || !(frame_s >= 0.0)) throw ConfigError("carrier_hz and frame_s must be >= 0");
    if (!(cell_radius_m > 0.0)) throw ConfigError("cell_radius_m must be > 0");
    if (mode == Mode::two_clusters && n_ue % 2 != 0)
      throw ConfigError("two_clusters mode needs an even number of users");
  }
};

struct UserGeometry {
  std::vector<double> azimuth;     // radians, [-pi, pi)
  std::vector<double> distance;    // meters, (0, cell_radius]
  std::vector<double> heading;     // velocity direction, radians
  std::vector<int> cluster;        // users with equal ids share scatterers

  std::size_t size() const { return azimuth.size(); }
};

/// Uplink channel H (n_bs x n_ue), stored as separate real and imaginary
/// planes in row-major order: entry (m, k) lives at m * n_ue + k.
struct ChannelFrame {
  int n_bs = 0;
  int n_ue = 0;
  std::vector<double> re;
  std::vector<double> im;
  std::int64_t frame_index = 0;
  std::uint64_t seed = 0;

  ChannelFrame() = default;
  ChannelFrame(int bs, int ue, std::int64_t index = 0, std::uint64_t s = 0)
      : n_bs(bs), n_ue(ue), re(static_cast<std::size_t>(bs) * ue, 0.0),
        im(static_cast<std::size_t>(bs) * ue, 0.0), frame_index(index), seed(s) {}

  cplx at(int m, int k) const {
    const auto i = static_cast<std::size_t>(m) * n_ue + k;
    return {re[i], im[i]};
  }
  void set(int m, int k, cplx v) {
    const auto i = static_cast<std::size_t>(m) * n_ue + k;
    re[i] = v.real();
    im[i] = v.imag();
  }

  /// Squared norm of user k's column.
  double column_power(int k) const {
    double p = 0.0;
    for (int m = 0; m < n_bs; ++m) p += std::norm(at(m, k));
    return p;
  }

  bool finite() const {
    return std::all_of(re.begin(), re.end(), [](double v) { return std::isfinite(v); }) &&
           std::all_of(im.begin(), im.end(), [](double v) { return std::isfinite(v); });
  }

  /// Multiplies every entry by a real factor.
  ChannelFrame scaled(double alpha) const {
    ChannelFrame out = *this;
    for (auto& v : out.re) v *= alpha;
    for (auto& v : out.im) v *= alpha;
    return out;
  }
};

inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a + std::numbers::pi, two_pi);
  if (a < 0.0) a += two_pi;
  return a - std::numbers::pi;
}

/// ULA response a_m = exp(j 2 pi d m sin(azimuth)).
inline std::vector<cplx> steering_vector(int n_bs, double azimuth, double spacing_wavelengths = 0.5) {
  std::vector<cplx> a(static_cast<std::size_t>(n_bs));
  const double step = 2.0 * std::numbers::pi * spacing_wavelengths * std::sin(azimuth);
  for (int m = 0; m < n_bs; ++m) a[m] = std::polar(1.0, step * m);
  return a;
}

namespace detail {

// Users are placed in a 120 degree sector facing the array broadside so
// that distinct azimuths map to distinct steering vectors. Only random
// placement uses the whole circle, front-back ambiguity included.
inline constexpr double kSectorHalfWidth = std::numbers::pi / 3.0;

inline double draw_distance(CounterRng& rng, double radius) {
  const double r_min = std::min(1.0, radius);
  const double r = radius * std::sqrt(rng.uniform());
  return std::max(r, r_min);
}

}  // namespace detail

/// Places users for the configured mode. Deterministic given seed.
inline UserGeometry place_users(const ScenarioConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  CounterRng rng{seed, stream::kGeometry};
  const int n = cfg.n_ue;
  const double s = cfg.cluster_spread_rad;
  const double half = detail::kSectorHalfWidth;
  UserGeometry g;
  g.azimuth.resize(n);
  g.distance.resize(n);
  g.heading.resize(n);
  g.cluster.resize(n);

  switch (cfg.mode) {
    case Mode::uncorrelated: {
      // One sub-sector per user; shrinking each by the spread on both sides
      // keeps neighbours at least 2 * spread apart.
      const double width = 2.0 * half / n;
      if (width <= 2.0 * s) throw ConfigError("cluster spread too wide for uncorrelated placement");
      for (int k = 0; k < n; ++k) {
        const double lo = -half + k * width + s;
        g.azimuth[k] = rng.uniform(lo, lo + width - 2.0 * s);
        g.cluster[k] = k;
      }
      break;
    }
    case Mode::one_cluster: {
      const double center = rng.uniform(-half + s, half - s);
      for (int k = 0; k < n; ++k) {
        g.azimuth[k] = center + rng.uniform(-s, s);
        g.cluster[k] = 0;
      }
      break;
    }
    case Mode::two_clusters: {
      if (half <= 2.0 * s) throw ConfigError("cluster spread too wide for two clusters");
      const double c0 = rng.uniform(-half, -2.0 * s);
      const double c1 = rng.uniform(2.0 * s, half);
      for (int k = 0; k < n; ++k) {
        const bool first = k < n / 2;
        g.azimuth[k] = (first ? c0 : c1) + rng.uniform(-s, s);
        g.cluster[k] = first ? 0 : 1;
      }
      break;
    }
    case Mode::random_placement:
      for (int k = 0; k < n; ++k) {
        g.azimuth[k] = rng.uniform(-std::numbers::pi, std::numbers::pi);
        g.cluster[k] = k;
      }
      break;
  }
  for (int k = 0; k < n; ++k) {
    g.azimuth[k] = wrap_angle(g.azimuth[k]);
    g.distance[k] = detail::draw_distance(rng, cfg.cell_radius_m);
    g.heading[k] = rng.uniform(-std::numbers::pi, std::numbers::pi);
  }
  return g;
}

/// Moves every user by `meters` along its heading; the base station sits
/// at the origin with its array broadside along the x axis.
inline UserGeometry advance_geometry(const UserGeometry& g, double meters) {
  if (meters == 0.0) return g;
  UserGeometry out = g;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double x = g.distance[k] * std::cos(g.azimuth[k]) + meters * std::cos(g.heading[k]);
    const double y = g.distance[k] * std::sin(g.azimuth[k]) + meters * std::sin(g.heading[k]);
    out.distance[k] = std::max(std::hypot(x, y), 1e-3);
    out.azimuth[k] = wrap_angle(std::atan2(y, x));
  }
  return out;
}

/// Geometry at a given frame of a scenario whose users start at `g`.
inline UserGeometry geometry_at(const ScenarioConfig& cfg, const UserGeometry& g, std::int64_t frame_index) {
  return advance_geometry(g, cfg.speed_mps * cfg.frame_s * static_cast<double>(frame_index));
}

/// Deterministic line-of-sight part of the channel, sqrt(K/(K+1)) a(theta_k).
inline ChannelFrame mean_component(const ScenarioConfig& cfg, const UserGeometry& geom) {
  ChannelFrame h(cfg.n_bs, cfg.n_ue);
  const double k = cfg.k_factor();
  if (k == 0.0) return h;
  const double w = std::sqrt(k / (k + 1.0));
  for (int u = 0; u < cfg.n_ue; ++u) {
    const auto a = steering_vector(cfg.n_bs, geom.azimuth[u]);
    for (int m = 0; m < cfg.n_bs; ++m) h.set(m, u, w * a[m]);
  }
  return h;
}

/// Draws one frame from the clustered Rician model. Randomness is keyed by
/// (master_seed, frame_index, cluster or user, scatterer), so frames can be
/// generated in any order.
inline ChannelFrame gen_static_frame(const ScenarioConfig& cfg, const UserGeometry& geom,
                                     std::int64_t frame_index) {
  if (static_cast<int>(geom.size()) != cfg.n_ue) throw ConfigError("geometry does not match n_ue");
  if (frame_index < 0) throw ConfigError("frame_index must be >= 0");
  const int L = cfg.n_scatterers;
  const double k = cfg.k_factor();
  const double diffuse_w = std::sqrt(1.0 / (k + 1.0)) / std::sqrt(static_cast<double>(L));
  const auto fi = static_cast<std::uint64_t>(frame_index);

  ChannelFrame h = mean_component(cfg, geom);
  h.frame_index = frame_index;
  h.seed = cfg.master_seed;

  int n_clusters = 0;
  for (int c : geom.cluster) n_clusters = std::max(n_clusters, c + 1);
  std::vector<double> offsets(static_cast<std::size_t>(n_clusters) * L);
  for (int c = 0; c < n_clusters; ++c) {
    CounterRng rng{cfg.master_seed, stream::kScatterAngle, fi, static_cast<std::uint64_t>(c)};
    for (int l = 0; l < L; ++l)
      offsets[static_cast<std::size_t>(c) * L + l] = rng.uniform(-cfg.cluster_spread_rad, cfg.cluster_spread_rad);
  }

  const double gain_sd = std::sqrt(0.5);
  for (int u = 0; u < cfg.n_ue; ++u) {
    const int c = geom.cluster[u];
    for (int l = 0; l < L; ++l) {
      CounterRng rng{cfg.master_seed, stream::kScatterGain, fi, static_cast<std::uint64_t>(u),
                     static_cast<std::uint64_t>(l)};
      const cplx gain{gain_sd * rng.normal(), gain_sd * rng.normal()};
      const auto a = steering_vector(cfg.n_bs, geom.azimuth[u] + offsets[static_cast<std::size_t>(c) * L + l]);
      for (int m = 0; m < cfg.n_bs; ++m) h.set(m, u, h.at(m, u) + diffuse_w * gain * a[m]);
    }
  }
  return h;
}

/// Bessel function of the first kind, order zero, by its power series
/// sum_k (-x^2/4)^k / (k!)^2. Accurate to ~1e-13 on [0, 10].
inline double bessel_j0(double x) {
  const double q = -0.25 * x * x;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 200; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (std::abs(term) < 1e-17 * std::max(1.0, std::abs(sum))) break;
  }
  return sum;
}

/// Jakes correlation between consecutive frames.
inline double doppler_rho(double speed_mps, double carrier_hz, double frame_s) {
  if (!(speed_mps >= 0.0) || !(carrier_hz >= 0.0) || !(frame_s >= 0.0))
    throw DomainError("doppler_rho inputs must be >= 0");
  const double fd = speed_mps * carrier_hz / kSpeedOfLight;
  return bessel_j0(2.0 * std::numbers::pi * fd * frame_s);
}

/// One Gauss-Markov step, H_t = M_t + rho (H_{t-1} - M_{t-1}) +
/// sqrt(1 - rho^2) (W_t - M_t), with M the line-of-sight mean and W_t a
/// fresh frame at the advanced geometry. Without line of sight M = 0 and
/// this is the plain AR(1) recursion.
inline ChannelFrame evolve_frame(const ChannelFrame& prev, double rho, const ScenarioConfig& cfg,
                                 const UserGeometry& geom, std::int64_t frame_index) {
  if (!(std::abs(rho) <= 1.0)) throw DomainError("|rho| must be <= 1");
  if (prev.n_bs != cfg.n_bs || prev.n_ue != cfg.n_ue) throw ConfigError("frame shape does not match config");
  if (rho == 1.0) {
    ChannelFrame out = prev;
    out.frame_index = frame_index;
    return out;
  }
  const auto g_now = geometry_at(cfg, geom, frame_index);
  const auto g_prev = geometry_at(cfg, geom, frame_index - 1);
  const ChannelFrame innov = gen_static_frame(cfg, g_now, frame_index);
  const ChannelFrame m_now = mean_component(cfg, g_now);
  const ChannelFrame m_prev = mean_component(cfg, g_prev);
  const double w = std::sqrt(std::max(0.0, 1.0 - rho * rho));

  ChannelFrame out(cfg.n_bs, cfg.n_ue, frame_index, cfg.master_seed);
  for (std::size_t i = 0; i < out.re.size(); ++i) {
    out.re[i] = m_now.re[i] + rho * (prev.re[i] - m_prev.re[i]) + w * (innov.re[i] - m_now.re[i]);
    out.im[i] = m_now.im[i] + rho * (prev.im[i] - m_prev.im[i]) + w * (innov.im[i] - m_now.im[i]);
  }
  return out;
}

/// Frames start_index .. start_index + t_len - 1 of a scenario. Mobile
/// sequences are always chained from frame 0, so a window is reproducible
/// regardless of where it starts.
inline std::vector<ChannelFrame> gen_sequence(const ScenarioConfig& cfg, int t_len, std::int64_t start_index = 0) {
  if (t_len < 1) throw ConfigError("t_len must be >= 1");
  if (start_index < 0) throw ConfigError("start_index must be >= 0");
  cfg.validate();
  const UserGeometry geom = place_users(cfg, cfg.master_seed);
  std::vector<ChannelFrame> out;
  out.reserve(static_cast<std::size_t>(t_len));
  if (cfg.mobility == Mobility::stationary) {
    for (int t = 0; t < t_len; ++t) out.push_back(gen_static_frame(cfg, geom, start_index + t));
    return out;
  }
  const double rho = doppler_rho(cfg.speed_mps, cfg.carrier_hz, cfg.frame_s);
  ChannelFrame h = gen_static_frame(cfg, geom, 0);
  for (std::int64_t i = 1; i <= start_index; ++i) h = evolve_frame(h, rho, cfg, geom, i);
  out.push_back(h);
  for (int t = 1; t < t_len; ++t) {
    h = evolve_frame(h, rho, cfg, geom, start_index + t);
    out.push_back(h);
  }
  return out;
}

/// |h_i^H h_j| / (|h_i| |h_j|) averaged over all user pairs.
inline double mean_pairwise_correlation(const ChannelFrame& h) {
  double acc = 0.0;
  int pairs = 0;
  for (int i = 0; i < h.n_ue; ++i) {
    for (int j = i + 1; j < h.n_ue; ++j) {
      cplx dot{0.0, 0.0};
      for (int m = 0; m < h.n_bs; ++m) dot += std::conj(h.at(m, i)) * h.at(m, j);
      acc += std::abs(dot) / std::sqrt(h.column_power(i) * h.column_power(j));
      ++pairs;
    }
  }
  return pairs ? acc / pairs : 0.0;
}

}  // namespace amc::channel
