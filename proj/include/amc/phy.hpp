#pragma once

// Zero-forcing downlink precoding, per-user SINR, the MCS table and the
// BER link abstraction used to label frames with their best MCS.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "amc/channel.hpp"
#include "amc/error.hpp"
#include "amc/rng.hpp"

namespace amc::phy {

inline constexpr int kMinMcs = 10;
inline constexpr int kMaxMcs = 24;
inline constexpr int kNumMcs = kMaxMcs - kMinMcs + 1;

struct McsEntry {
  int index = 0;
  int modulation_order = 0;
  double code_rate = 0.0;

  int bits_per_symbol() const { return std::countr_zero(static_cast<unsigned>(modulation_order)); }
  double spectral_efficiency() const { return bits_per_symbol() * code_rate; }
};

class McsTable {
public:
  McsTable() = default;
  explicit McsTable(std::vector<McsEntry> entries) : entries_(std::move(entries)) { validate(); }

  const std::vector<McsEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const McsEntry& at_index(int mcs) const {
    if (mcs < kMinMcs || mcs > kMaxMcs) throw DomainError("MCS index out of range");
    return entries_[static_cast<std::size_t>(mcs - kMinMcs)];
  }

  /// FNV-1a over the entries rendered as index,M,rate-in-micro-units.
  std::uint64_t checksum() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    auto mix = [&h](std::int64_t v) {
      for (int b = 0; b < 8; ++b) {
        h ^= static_cast<std::uint64_t>(v >> (8 * b)) & 0xFF;
        h *= 0x100000001B3ULL;
      }
    };
    for (const auto& e : entries_) {
      mix(e.index);
      mix(e.modulation_order);
      mix(std::llround(e.code_rate * 1e6));
    }
    return h;
  }

  void validate() const {
    if (entries_.size() != static_cast<std::size_t>(kNumMcs)) throw DataError("MCS table must have 15 entries");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& e = entries_[i];
      if (e.index != kMinMcs + static_cast<int>(i)) throw DataError("MCS indices must be contiguous from 10");
      if (e.modulation_order != 4 && e.modulation_order != 16 && e.modulation_order != 64 &&
          e.modulation_order != 256)
        throw DataError("unsupported modulation order in MCS table");
      if (!(e.code_rate >= 0.11 && e.code_rate <= 0.92)) throw DataError("code rate outside [0.11, 0.92]");
      if (i > 0 && !(e.spectral_efficiency() > entries_[i - 1].spectral_efficiency()))
        throw DataError("spectral efficiency must increase with MCS index");
    }
  }

private:
  std::vector<McsEntry> entries_;
};

/// Indices 10-24 of 3GPP TS 38.214 Table 5.1.3.1-2 (PDSCH, up to 256QAM).
/// Code rates are the standard's R x 1024 values divided by 1024.
inline McsTable default_mcs_table() {
  static constexpr std::array<std::array<double, 3>, kNumMcs> rows{{
      {10, 16, 658.0},  {11, 64, 466.0},  {12, 64, 517.0},  {13, 64, 567.0},   {14, 64, 616.0},
      {15, 64, 666.0},  {16, 64, 719.0},  {17, 64, 772.0},  {18, 64, 822.0},   {19, 64, 873.0},
      {20, 256, 682.5}, {21, 256, 711.0}, {22, 256, 754.0}, {23, 256, 797.0},  {24, 256, 841.0},
  }};
  std::vector<McsEntry> e;
  for (const auto& r : rows) e.push_back({static_cast<int>(r[0]), static_cast<int>(r[1]), r[2] / 1024.0});
  return McsTable(std::move(e));
}

/// Parses the index,modulation_order,code_rate CSV resource.
inline McsTable load_mcs_table(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("index,modulation_order,code_rate", 0) != 0)
    throw DataError("MCS table: missing header");
  std::vector<McsEntry> entries;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::istringstream ss(line);
    McsEntry e;
    char c1 = 0, c2 = 0;
    if (!(ss >> e.index >> c1 >> e.modulation_order >> c2 >> e.code_rate) || c1 != ',' || c2 != ',')
      throw DataError("MCS table: malformed row '" + line + "'");
    entries.push_back(e);
  }
  return McsTable(std::move(entries));
}

inline McsTable load_mcs_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open MCS table " + path);
  return load_mcs_table(in);
}

struct LinkConfig {
  double tx_power = 1.0;
  double noise_power = 0.02;
  double ber_threshold = 1e-3;
  double coding_gain_coeff_db = 3.0;

  void validate() const {
    if (!(tx_power > 0.0)) throw ConfigError("tx_power must be > 0");
    if (!(noise_power > 0.0)) throw ConfigError("noise_power must be > 0");
    if (!(ber_threshold > 0.0 && ber_threshold < 0.5)) throw ConfigError("ber_threshold must lie in (0, 0.5)");
  }
};

using SinrVector = std::vector<double>;

/// Downlink effective channel G = H^T (n_ue x n_bs).
inline Eigen::MatrixXcd downlink_channel(const channel::ChannelFrame& h) {
  Eigen::MatrixXcd g(h.n_ue, h.n_bs);
  for (int m = 0; m < h.n_bs; ++m)
    for (int k = 0; k < h.n_ue; ++k) g(k, m) = h.at(m, k);
  return g;
}

/// Unnormalized zero-forcing precoder W0 = G^H (G G^H)^{-1}.
///
/// Computed from a thin QR factorization G^H = Q R as W0 = Q R^{-H}, which
/// avoids forming the Gram matrix.
inline Eigen::MatrixXcd zf_precoder(const Eigen::MatrixXcd& g) {
  const auto n_ue = g.rows();
  const auto n_bs = g.cols();
  if (n_ue > n_bs) throw SingularChannelError("more users than antennas");
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(g);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || !(sv(sv.size() - 1) > 1e-12 * sv(0)))
    throw SingularChannelError("downlink channel is rank deficient");

  Eigen::MatrixXcd gh = g.adjoint();
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(gh);
  Eigen::MatrixXcd q = qr.householderQ() * Eigen::MatrixXcd::Identity(n_bs, n_ue);
  Eigen::MatrixXcd r = qr.matrixQR().topLeftCorner(n_ue, n_ue).triangularView<Eigen::Upper>();
  // W0 = Q R^{-H}  <=>  W0^H = R^{-1} Q^H, solved as R X = Q^H.
  Eigen::MatrixXcd x = r.triangularView<Eigen::Upper>().solve(q.adjoint());
  return x.adjoint();
}

inline Eigen::MatrixXcd zf_precoder(const channel::ChannelFrame& h) { return zf_precoder(downlink_channel(h)); }

/// Per-user SINR under zero forcing with equal per-user power and per-column
/// precoder normalization: SINR_k = P / (n_ue sigma^2 |w0_k|^2).
inline SinrVector post_zf_sinr(const channel::ChannelFrame& h, const LinkConfig& link) {
  const Eigen::MatrixXcd w0 = zf_precoder(h);
  SinrVector s(static_cast<std::size_t>(h.n_ue));
  for (int k = 0; k < h.n_ue; ++k)
    s[k] = link.tx_power / (h.n_ue * link.noise_power * w0.col(k).squaredNorm());
  return s;
}

/// Gaussian tail probability.
inline double q_function(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

inline bool supported_modulation(int m) { return m == 4 || m == 16 || m == 64 || m == 256; }

/// Bit error probability of Gray-mapped square M-QAM on AWGN at per-symbol
/// SNR `snr` (Es/N0), exact closed form (Cho and Yoon, 2002). For M = 4 it
/// is Q(sqrt(snr)); at high SNR it tends to
/// (4 / log2 M)(1 - 1/sqrt M) Q(sqrt(3 snr / (M - 1))).
inline double qam_ber_uncoded(double snr, int modulation_order) {
  if (!supported_modulation(modulation_order)) throw DomainError("unsupported modulation order");
  if (!(snr >= 0.0)) throw DomainError("snr must be >= 0");
  const int m = modulation_order;
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(m))));
  const int bits_per_axis = std::countr_zero(static_cast<unsigned>(side));
  const double arg = std::sqrt(3.0 * snr / (2.0 * (m - 1)));
  double total = 0.0;
  for (int k = 1; k <= bits_per_axis; ++k) {
    const int pow_k = 1 << (k - 1);
    const int terms = static_cast<int>((1.0 - std::ldexp(1.0, -k)) * side);
    double pk = 0.0;
    for (int i = 0; i < terms; ++i) {
      const int flo = (i * pow_k) / side;
      const double weight = (flo % 2 == 0 ? 1.0 : -1.0) *
                            (pow_k - std::floor(static_cast<double>(i * pow_k) / side + 0.5));
      pk += weight * std::erfc((2 * i + 1) * arg);
    }
    total += pk / side;
  }
  return std::clamp(total / bits_per_axis, 0.0, 0.5);
}

/// The union-bound style approximation; kept for comparison.
inline double qam_ber_nearest_neighbour(double snr, int modulation_order) {
  if (!supported_modulation(modulation_order)) throw DomainError("unsupported modulation order");
  const double m = modulation_order;
  const double v = (4.0 / std::log2(m)) * (1.0 - 1.0 / std::sqrt(m)) * q_function(std::sqrt(3.0 * snr / (m - 1.0)));
  return std::clamp(v, 0.0, 0.5);
}

struct MonteCarloBer {
  double ber = 0.0;
  /// Standard error of `ber`, from the variance of per-symbol error counts.
  double std_error = 0.0;
  std::uint64_t bits = 0;
  std::uint64_t errors = 0;
};

/// Simulates Gray-mapped unit-energy square QAM over complex AWGN with
/// minimum-distance detection. Symbols are processed in fixed blocks, each
/// with its own counter-keyed stream, so the result does not depend on how
/// blocks are scheduled.
inline MonteCarloBer monte_carlo_ber_stats(double snr, int modulation_order, std::uint64_t n_bits, std::uint64_t seed) {
  if (!supported_modulation(modulation_order)) throw DomainError("unsupported modulation order");
  const int bps = std::countr_zero(static_cast<unsigned>(modulation_order));
  if (n_bits < 10000 || n_bits % bps != 0) throw ConfigError("n_bits must be >= 1e4 and a multiple of log2 M");
  if (!(snr > 0.0)) throw DomainError("snr must be > 0");
  const int side = 1 << (bps / 2);
  const double d = std::sqrt(3.0 / (2.0 * (modulation_order - 1)));
  const double noise_sd = std::sqrt(1.0 / (2.0 * snr));
  const std::uint64_t n_sym = n_bits / bps;
  constexpr std::uint64_t kBlock = 1 << 16;

  auto axis = [&](CounterRng& rng, unsigned gray) {
    unsigned level = gray;
    for (unsigned s = 1; s < 32; s <<= 1) level ^= level >> s;  // Gray -> binary
    const double x = (2.0 * level - (side - 1)) * d + noise_sd * rng.normal();
    const double idx = std::clamp(std::round((x / d + (side - 1)) / 2.0), 0.0, static_cast<double>(side - 1));
    const auto det = static_cast<unsigned>(idx);
    return std::popcount(gray ^ (det ^ (det >> 1)));
  };

  std::uint64_t errors = 0;
  double sum_sq = 0.0;
  for (std::uint64_t start = 0, block = 0; start < n_sym; start += kBlock, ++block) {
    CounterRng rng{seed, stream::kMonteCarlo, block};
    const std::uint64_t stop = std::min(n_sym, start + kBlock);
    for (std::uint64_t s = start; s < stop; ++s) {
      const auto bits = static_cast<unsigned>(rng.below(static_cast<std::uint64_t>(side) * side));
      const int e = axis(rng, bits % side) + axis(rng, bits / side);
      errors += e;
      sum_sq += static_cast<double>(e) * e;
    }
  }
  MonteCarloBer r;
  r.bits = n_bits;
  r.errors = errors;
  const double mean_sym = static_cast<double>(errors) / n_sym;
  const double var_sym = std::max(0.0, sum_sq / n_sym - mean_sym * mean_sym) * n_sym / std::max<double>(1.0, n_sym - 1.0);
  r.ber = static_cast<double>(errors) / static_cast<double>(n_bits);
  r.std_error = std::sqrt(var_sym / n_sym) / bps;
  return r;
}

inline double monte_carlo_ber(double snr, int modulation_order, std::uint64_t n_bits, std::uint64_t seed) {
  return monte_carlo_ber_stats(snr, modulation_order, n_bits, seed).ber;
}

/// Effective SNR in dB after the code-rate dependent coding gain
/// c0 * log2(1 / r).
inline double effective_snr_db(double sinr, double code_rate, const LinkConfig& link) {
  return 10.0 * std::log10(sinr) + link.coding_gain_coeff_db * std::log2(1.0 / code_rate);
}

/// Post-decoding BER proxy for an MCS at a given SINR.
inline double coded_ber(double sinr, const McsEntry& mcs, const LinkConfig& link) {
  if (!(sinr > 0.0)) throw DomainError("sinr must be > 0");
  const double eff = effective_snr_db(sinr, mcs.code_rate, link);
  return qam_ber_uncoded(std::pow(10.0, eff / 10.0), mcs.modulation_order);
}

/// Highest MCS whose coded BER meets the threshold; the table floor when
/// none does.
inline int oracle_mcs(double sinr, const McsTable& table, const LinkConfig& link) {
  if (!(sinr > 0.0)) throw DomainError("sinr must be > 0");
  const auto& e = table.entries();
  for (auto it = e.rbegin(); it != e.rend(); ++it)
    if (coded_ber(sinr, *it, link) <= link.ber_threshold) return it->index;
  return kMinMcs;
}

inline std::vector<int> label_frame(const channel::ChannelFrame& h, const McsTable& table, const LinkConfig& link) {
  const SinrVector s = post_zf_sinr(h, link);
  std::vector<int> labels;
  labels.reserve(s.size());
  for (double v : s) labels.push_back(oracle_mcs(v, table, link));
  return labels;
}

inline double to_db(double linear) { return 10.0 * std::log10(linear); }
inline double from_db(double db) { return std::pow(10.0, db / 10.0); }

}  // namespace amc::phy
