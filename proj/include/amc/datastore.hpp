#pragma once

// Dataset generation (channels -> SINR -> labels -> windowed samples), the
// AMCD container, deterministic stratified splits and label histograms.
//
// AMCD layout, little-endian:
//   "AMCD" | version u16 | manifest_len u32 | manifest utf-8 | count u64 |
//   count x ( scenario u16 | frame u32 | user u8 | label u8 | sinr_db f32 |
//             T * 2 * n_bs * n_ue x f32 )

#include <array>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "amc/binary_io.hpp"
#include "amc/channel.hpp"
#include "amc/models.hpp"
#include "amc/parallel.hpp"
#include "amc/phy.hpp"

namespace amc::data {

inline constexpr std::uint16_t kDatasetVersion = 1;

struct ScenarioEntry {
  int id = 0;
  channel::ScenarioConfig cfg;
  std::int64_t n_frames = 0;
  std::uint64_t records = 0;
  std::uint64_t skipped_frames = 0;
};

struct DatasetManifest {
  std::uint16_t version = kDatasetVersion;
  std::vector<ScenarioEntry> scenarios;
  int n_bs = 32;
  int n_ue = 4;
  int seq_len = 3;
  phy::LinkConfig link;
  std::uint64_t mcs_checksum = 0;
  std::uint64_t skipped_frames = 0;
  std::uint64_t total_records = 0;
  double train_fraction = 0.84375;
  std::uint64_t split_seed = 1;
  std::uint64_t train_count = 0;
  std::uint64_t test_count = 0;

  const ScenarioEntry& scenario(int id) const {
    for (const auto& s : scenarios)
      if (s.id == id) return s;
    throw DataError("unknown scenario id " + std::to_string(id));
  }
};

struct Record {
  std::uint16_t scenario_id = 0;
  std::uint32_t frame_index = 0;  // last frame of the window
  std::uint8_t user_id = 0;
  std::uint8_t label = 0;  // raw MCS index
  float sinr_db = 0.0f;
  std::vector<float> x;  // [T, 2, n_bs, n_ue], target user in column 0
};

struct DatasetFile {
  DatasetManifest manifest;
  std::vector<Record> records;
};

// ------------------------------------------------------------ catalog

/// Twelve scenarios: {los, nlos} x {static uncorrelated, static one
/// cluster, static two clusters, static random, mobile co-located, mobile
/// random}. Each scenario gets its own seed derived from the master seed.
inline std::vector<channel::ScenarioConfig> default_catalog(const channel::ScenarioConfig& base, double mobile_speed_mps = 2.8) {
  using namespace channel;
  std::vector<ScenarioConfig> out;
  for (Propagation p : {Propagation::los, Propagation::nlos}) {
    for (Mode m : {Mode::uncorrelated, Mode::one_cluster, Mode::two_clusters, Mode::random_placement}) {
      ScenarioConfig c = base;
      c.propagation = p;
      c.mode = m;
      c.mobility = Mobility::stationary;
      c.speed_mps = 0.0;
      out.push_back(c);
    }
    for (Mode m : {Mode::one_cluster, Mode::random_placement}) {
      ScenarioConfig c = base;
      c.propagation = p;
      c.mode = m;
      c.mobility = Mobility::mobile;
      c.speed_mps = mobile_speed_mps;
      out.push_back(c);
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].master_seed = derive_key({base.master_seed, i});
  return out;
}

// ------------------------------------------------------------ labelling

/// Label re-derived from a stored (float32) SINR in dB.
inline int label_from_sinr_db(float sinr_db, const phy::McsTable& table, const phy::LinkConfig& link) {
  return phy::oracle_mcs(phy::from_db(static_cast<double>(sinr_db)), table, link);
}

/// Rescales a frame to unit mean entry power, |H|_F^2 = n_bs n_ue. Labels
/// and network inputs are then both independent of the absolute path gain.
inline channel::ChannelFrame power_normalized(const channel::ChannelFrame& h) {
  double p = 0.0;
  for (std::size_t i = 0; i < h.re.size(); ++i) p += h.re[i] * h.re[i] + h.im[i] * h.im[i];
  if (!(p > 0.0) || !std::isfinite(p)) throw SingularChannelError("frame has zero or non-finite power");
  return h.scaled(std::sqrt(static_cast<double>(h.re.size()) / p));
}

struct GenerateOptions {
  std::int64_t frames_per_scenario = 280;
  int seq_len = 3;
  phy::LinkConfig link;
  double train_fraction = 0.84375;
  std::uint64_t split_seed = 1;
  unsigned threads = 1;
};

namespace detail {

struct ScenarioOutput {
  std::vector<Record> records;
  std::uint64_t skipped = 0;
};

inline ScenarioOutput generate_scenario(int id, const channel::ScenarioConfig& cfg, const GenerateOptions& opt,
                                        const phy::McsTable& table) {
  ScenarioOutput out;
  const int t_len = opt.seq_len;
  std::vector<channel::ChannelFrame> frames;
  std::vector<bool> ok;
  std::vector<std::vector<float>> sinr_db;
  const auto raw = channel::gen_sequence(cfg, static_cast<int>(opt.frames_per_scenario), 0);
  for (const auto& h : raw) {
    channel::ChannelFrame hn = h;
    std::vector<float> db;
    bool good = true;
    try {
      hn = power_normalized(h);
      for (double v : phy::post_zf_sinr(hn, opt.link)) {
        if (!(v > 0.0) || !std::isfinite(v)) throw SingularChannelError("non-finite SINR");
        db.push_back(static_cast<float>(phy::to_db(v)));
      }
    } catch (const SingularChannelError&) {
      good = false;
      ++out.skipped;
    }
    frames.push_back(std::move(hn));
    sinr_db.push_back(std::move(db));
    ok.push_back(good);
  }
  for (std::size_t t = static_cast<std::size_t>(t_len - 1); t < frames.size(); ++t) {
    if (!ok[t]) continue;
    const std::vector<channel::ChannelFrame> window(frames.begin() + static_cast<std::ptrdiff_t>(t + 1 - t_len),
                                                    frames.begin() + static_cast<std::ptrdiff_t>(t + 1));
    for (int u = 0; u < cfg.n_ue; ++u) {
      Record r;
      r.scenario_id = static_cast<std::uint16_t>(id);
      r.frame_index = static_cast<std::uint32_t>(t);
      r.user_id = static_cast<std::uint8_t>(u);
      r.sinr_db = sinr_db[t][static_cast<std::size_t>(u)];
      r.label = static_cast<std::uint8_t>(label_from_sinr_db(r.sinr_db, table, opt.link));
      const auto norm = models::normalize_sample(window, t_len, u);
      r.x.assign(norm.x.data.begin(), norm.x.data.end());
      out.records.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace detail

inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_dataset(const DatasetFile& file,
                                                                            double train_fraction,
                                                                            std::uint64_t seed);

/// Generates one record per (scenario, window of T frames, user), ordered by
/// (scenario, frame, user). Frames whose channel is rank deficient are
/// skipped and counted.
inline DatasetFile generate_dataset(const std::vector<channel::ScenarioConfig>& catalog, const GenerateOptions& opt,
                                    const phy::McsTable& table = phy::default_mcs_table()) {
  if (catalog.empty()) throw ConfigError("generate_dataset: empty scenario catalog");
  if (catalog.size() > 65535) throw ConfigError("generate_dataset: too many scenarios");
  if (opt.seq_len < 1) throw ConfigError("generate_dataset: seq_len must be >= 1");
  if (opt.frames_per_scenario < opt.seq_len) throw ConfigError("generate_dataset: frames per scenario must be >= T");
  if (opt.frames_per_scenario > static_cast<std::int64_t>(UINT32_MAX)) throw ConfigError("generate_dataset: too many frames");
  opt.link.validate();
  table.validate();
  for (const auto& c : catalog) {
    c.validate();
    if (c.n_bs != catalog[0].n_bs || c.n_ue != catalog[0].n_ue)
      throw ConfigError("generate_dataset: all scenarios must share n_bs and n_ue");
    if (c.n_ue > 255) throw ConfigError("generate_dataset: at most 255 users");
  }

  std::vector<detail::ScenarioOutput> parts(catalog.size());
  parallel_for(catalog.size(), opt.threads, [&](std::size_t i) {
    parts[i] = detail::generate_scenario(static_cast<int>(i), catalog[i], opt, table);
  });

  DatasetFile file;
  auto& m = file.manifest;
  m.n_bs = catalog[0].n_bs;
  m.n_ue = catalog[0].n_ue;
  m.seq_len = opt.seq_len;
  m.link = opt.link;
  m.mcs_checksum = table.checksum();
  m.train_fraction = opt.train_fraction;
  m.split_seed = opt.split_seed;
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    ScenarioEntry e;
    e.id = static_cast<int>(i);
    e.cfg = catalog[i];
    e.n_frames = opt.frames_per_scenario;
    e.records = parts[i].records.size();
    e.skipped_frames = parts[i].skipped;
    m.skipped_frames += e.skipped_frames;
    m.scenarios.push_back(e);
    for (auto& r : parts[i].records) file.records.push_back(std::move(r));
  }
  m.total_records = file.records.size();
  const auto [train, test] = split_dataset(file, opt.train_fraction, opt.split_seed);
  m.train_count = train.size();
  m.test_count = test.size();
  return file;
}

// ------------------------------------------------------------ manifest text

namespace detail {

inline std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& key) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) throw DataError("manifest: bad number for " + key);
  return v;
}

inline std::uint64_t parse_u64(const std::string& s, const std::string& key, int base = 10) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) throw DataError("manifest: bad integer for " + key);
  return v;
}

inline std::string scenario_line(const ScenarioEntry& e) {
  const auto& c = e.cfg;
  std::ostringstream s;
  s << "tag=" << c.tag() << ";propagation=" << channel::to_string(c.propagation)
    << ";mobility=" << channel::to_string(c.mobility) << ";mode=" << channel::to_string(c.mode)
    << ";speed_mps=" << fmt_double(c.speed_mps) << ";carrier_hz=" << fmt_double(c.carrier_hz)
    << ";frame_s=" << fmt_double(c.frame_s) << ";cell_radius_m=" << fmt_double(c.cell_radius_m)
    << ";n_scatterers=" << c.n_scatterers << ";cluster_spread_rad=" << fmt_double(c.cluster_spread_rad)
    << ";rician_k_db=" << fmt_double(c.rician_k_db) << ";seed=" << c.master_seed << ";frames=" << e.n_frames
    << ";records=" << e.records << ";skipped_frames=" << e.skipped_frames;
  return s.str();
}

inline ScenarioEntry parse_scenario_line(int id, const std::string& line, int n_bs, int n_ue) {
  std::map<std::string, std::string> kv;
  std::istringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ';')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw DataError("manifest: malformed scenario entry");
    kv[item.substr(0, eq)] = item.substr(eq + 1);
  }
  auto get = [&](const std::string& k) -> const std::string& {
    const auto it = kv.find(k);
    if (it == kv.end()) throw DataError("manifest: scenario " + std::to_string(id) + " lacks " + k);
    return it->second;
  };
  ScenarioEntry e;
  e.id = id;
  auto& c = e.cfg;
  c.propagation = channel::parse_propagation(get("propagation"));
  c.mobility = channel::parse_mobility(get("mobility"));
  c.mode = channel::parse_mode(get("mode"));
  c.speed_mps = parse_double(get("speed_mps"), "speed_mps");
  c.carrier_hz = parse_double(get("carrier_hz"), "carrier_hz");
  c.frame_s = parse_double(get("frame_s"), "frame_s");
  c.cell_radius_m = parse_double(get("cell_radius_m"), "cell_radius_m");
  c.n_scatterers = static_cast<int>(parse_u64(get("n_scatterers"), "n_scatterers"));
  c.cluster_spread_rad = parse_double(get("cluster_spread_rad"), "cluster_spread_rad");
  c.rician_k_db = parse_double(get("rician_k_db"), "rician_k_db");
  c.master_seed = parse_u64(get("seed"), "seed");
  c.n_bs = n_bs;
  c.n_ue = n_ue;
  e.n_frames = static_cast<std::int64_t>(parse_u64(get("frames"), "frames"));
  e.records = parse_u64(get("records"), "records");
  e.skipped_frames = parse_u64(get("skipped_frames"), "skipped_frames");
  if (get("tag") != c.tag()) throw DataError("manifest: scenario tag does not match its fields");
  return e;
}

}  // namespace detail

inline std::string manifest_text(const DatasetManifest& m) {
  std::ostringstream s;
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(m.mcs_checksum));
  s << "format_version=" << m.version << "\n"
    << "n_bs=" << m.n_bs << "\n"
    << "n_ue=" << m.n_ue << "\n"
    << "seq_len=" << m.seq_len << "\n"
    << "tx_power=" << detail::fmt_double(m.link.tx_power) << "\n"
    << "noise_power=" << detail::fmt_double(m.link.noise_power) << "\n"
    << "ber_threshold=" << detail::fmt_double(m.link.ber_threshold) << "\n"
    << "coding_gain_coeff_db=" << detail::fmt_double(m.link.coding_gain_coeff_db) << "\n"
    << "mcs_checksum=" << hex << "\n"
    << "source=simulation\n"
    << "scenario_count=" << m.scenarios.size() << "\n";
  for (const auto& e : m.scenarios) s << "scenario." << e.id << "=" << detail::scenario_line(e) << "\n";
  s << "skipped_frames=" << m.skipped_frames << "\n"
    << "total_records=" << m.total_records << "\n"
    << "split.train_fraction=" << detail::fmt_double(m.train_fraction) << "\n"
    << "split.seed=" << m.split_seed << "\n"
    << "split.train=" << m.train_count << "\n"
    << "split.test=" << m.test_count << "\n";
  return s.str();
}

inline DatasetManifest parse_manifest(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("manifest: malformed line '" + line + "'");
    if (!kv.emplace(line.substr(0, eq), line.substr(eq + 1)).second)
      throw DataError("manifest: duplicate key " + line.substr(0, eq));
  }
  auto get = [&](const std::string& k) -> const std::string& {
    const auto it = kv.find(k);
    if (it == kv.end()) throw DataError("manifest: missing key " + k);
    return it->second;
  };
  using detail::parse_double;
  using detail::parse_u64;
  DatasetManifest m;
  m.version = static_cast<std::uint16_t>(parse_u64(get("format_version"), "format_version"));
  m.n_bs = static_cast<int>(parse_u64(get("n_bs"), "n_bs"));
  m.n_ue = static_cast<int>(parse_u64(get("n_ue"), "n_ue"));
  m.seq_len = static_cast<int>(parse_u64(get("seq_len"), "seq_len"));
  m.link.tx_power = parse_double(get("tx_power"), "tx_power");
  m.link.noise_power = parse_double(get("noise_power"), "noise_power");
  m.link.ber_threshold = parse_double(get("ber_threshold"), "ber_threshold");
  m.link.coding_gain_coeff_db = parse_double(get("coding_gain_coeff_db"), "coding_gain_coeff_db");
  m.mcs_checksum = parse_u64(get("mcs_checksum"), "mcs_checksum", 16);
  const auto n_sc = parse_u64(get("scenario_count"), "scenario_count");
  for (std::uint64_t i = 0; i < n_sc; ++i)
    m.scenarios.push_back(detail::parse_scenario_line(static_cast<int>(i), get("scenario." + std::to_string(i)),
                                                      m.n_bs, m.n_ue));
  m.skipped_frames = parse_u64(get("skipped_frames"), "skipped_frames");
  m.total_records = parse_u64(get("total_records"), "total_records");
  m.train_fraction = parse_double(get("split.train_fraction"), "split.train_fraction");
  m.split_seed = parse_u64(get("split.seed"), "split.seed");
  m.train_count = parse_u64(get("split.train"), "split.train");
  m.test_count = parse_u64(get("split.test"), "split.test");
  if (m.train_count + m.test_count != m.total_records) throw DataError("manifest: split counts do not sum to total");
  return m;
}

// ------------------------------------------------------------ binary io

inline std::size_t record_floats(const DatasetManifest& m) {
  return static_cast<std::size_t>(m.seq_len) * 2 * static_cast<std::size_t>(m.n_bs) * static_cast<std::size_t>(m.n_ue);
}

inline void write_dataset(std::ostream& out, const DatasetFile& f) {
  const std::string text = manifest_text(f.manifest);
  io::write_magic(out, "AMCD");
  io::write_le<std::uint16_t>(out, f.manifest.version);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  io::write_bytes(out, text);
  io::write_le<std::uint64_t>(out, f.records.size());
  const std::size_t per = record_floats(f.manifest);
  for (const auto& r : f.records) {
    if (r.x.size() != per) throw DataError("write_dataset: record tensor has wrong size");
    io::write_le(out, r.scenario_id);
    io::write_le(out, r.frame_index);
    io::write_le(out, r.user_id);
    io::write_le(out, r.label);
    io::write_le(out, r.sinr_db);
    for (float v : r.x) io::write_le(out, v);
  }
  if (!out) throw DataError("write_dataset: write failed");
}

inline void save_dataset(const std::string& path, const DatasetFile& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  write_dataset(out, f);
}

/// Reads an AMCD stream. Every stored label is checked against the label
/// re-derived from the stored SINR.
inline DatasetFile read_dataset(std::istream& in, const phy::McsTable& table = phy::default_mcs_table()) {
  io::expect_magic(in, "AMCD", "dataset");
  DatasetFile f;
  const auto version = io::read_le<std::uint16_t>(in);
  if (version != kDatasetVersion) throw DataError("dataset: unsupported version " + std::to_string(version));
  f.manifest = parse_manifest(io::read_bytes(in, io::read_le<std::uint32_t>(in)));
  auto& m = f.manifest;
  if (m.mcs_checksum != table.checksum()) throw DataError("dataset: MCS table checksum mismatch");
  const auto count = io::read_le<std::uint64_t>(in);
  if (count != m.total_records) throw DataError("dataset: record count differs from manifest");
  const std::size_t per = record_floats(m);
  f.records.resize(count);
  for (auto& r : f.records) {
    r.scenario_id = io::read_le<std::uint16_t>(in);
    r.frame_index = io::read_le<std::uint32_t>(in);
    r.user_id = io::read_le<std::uint8_t>(in);
    r.label = io::read_le<std::uint8_t>(in);
    r.sinr_db = io::read_le<float>(in);
    r.x.resize(per);
    for (auto& v : r.x) v = io::read_le<float>(in);
    if (r.scenario_id >= m.scenarios.size()) throw DataError("dataset: record references unknown scenario");
    if (r.label < phy::kMinMcs || r.label > phy::kMaxMcs) throw DataError("dataset: label outside [10, 24]");
    if (!std::isfinite(r.sinr_db)) throw DataError("dataset: non-finite SINR");
    if (label_from_sinr_db(r.sinr_db, table, m.link) != r.label)
      throw DataError("dataset: stored label does not match the label derived from its SINR");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("dataset: trailing bytes");
  return f;
}

inline DatasetFile load_dataset(const std::string& path, const phy::McsTable& table = phy::default_mcs_table()) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return read_dataset(in, table);
}

inline std::string dataset_bytes(const DatasetFile& f) {
  std::ostringstream out(std::ios::binary);
  write_dataset(out, f);
  return out.str();
}

// ------------------------------------------------------------ splits

/// Stratified by scenario: within each scenario a seeded permutation puts
/// round(fraction * n) records in the training split. Both splits are
/// returned in ascending record order.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_dataset(const DatasetFile& file,
                                                                                   double train_fraction,
                                                                                   std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
  std::map<int, std::vector<std::size_t>> by_scenario;
  for (std::size_t i = 0; i < file.records.size(); ++i) by_scenario[file.records[i].scenario_id].push_back(i);
  std::vector<std::size_t> train, test;
  for (auto& [sid, idx] : by_scenario) {
    CounterRng rng{seed, stream::kSplit, static_cast<std::uint64_t>(sid)};
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
    train.insert(train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    test.insert(test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  if (train.empty() || test.empty()) throw ConfigError("split leaves an empty train or test set");
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

/// FNV-1a over the serialized records selected by `indices`.
inline std::uint64_t records_checksum(const DatasetFile& f, std::span<const std::size_t> indices) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (std::size_t i : indices) {
    const Record& r = f.records.at(i);
    std::ostringstream s(std::ios::binary);
    io::write_le(s, r.scenario_id);
    io::write_le(s, r.frame_index);
    io::write_le(s, r.user_id);
    io::write_le(s, r.label);
    io::write_le(s, r.sinr_db);
    for (float v : r.x) io::write_le(s, v);
    const std::string b = s.str();
    h = io::fnv1a(b.data(), b.size(), h);
  }
  return h;
}

/// Converts records to training samples (class = MCS - 10).
inline models::Dataset to_samples(const DatasetFile& f, std::span<const std::size_t> indices) {
  const auto& m = f.manifest;
  const ad::Shape shape{static_cast<std::size_t>(m.seq_len), 2, static_cast<std::size_t>(m.n_bs),
                        static_cast<std::size_t>(m.n_ue)};
  models::Dataset out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    const Record& r = f.records.at(i);
    models::Sample s;
    s.x = ad::Tensor(shape, std::vector<double>(r.x.begin(), r.x.end()));
    s.y = r.label - phy::kMinMcs;
    s.user_id = r.user_id;
    s.scenario_id = r.scenario_id;
    s.frame_index = r.frame_index;
    s.sinr_db = r.sinr_db;
    out.push_back(std::move(s));
  }
  return out;
}

inline models::Dataset to_samples(const DatasetFile& f) {
  std::vector<std::size_t> all(f.records.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return to_samples(f, all);
}

// ------------------------------------------------------------ histograms

using Histogram = std::array<std::uint64_t, phy::kNumMcs>;

/// True when the scenario matches: "all", an exact tag such as
/// "nlos_static_one_cluster", or a mobility word ("static" / "mobile").
inline bool scenario_matches(const channel::ScenarioConfig& c, const std::string& filter) {
  if (filter.empty() || filter == "all") return true;
  if (filter == "static" || filter == "mobile") return channel::to_string(c.mobility) == filter;
  return c.tag() == filter;
}

inline Histogram label_histogram(const DatasetFile& f, const std::string& filter = "all") {
  Histogram h{};
  for (const auto& r : f.records)
    if (scenario_matches(f.manifest.scenario(r.scenario_id).cfg, filter)) ++h[r.label - phy::kMinMcs];
  return h;
}

inline std::string histogram_csv(const Histogram& h) {
  std::ostringstream s;
  s << "mcs,count\n";
  for (int i = 0; i < phy::kNumMcs; ++i) s << phy::kMinMcs + i << "," << h[static_cast<std::size_t>(i)] << "\n";
  return s.str();
}

inline int histogram_mode(const Histogram& h) {
  return phy::kMinMcs + static_cast<int>(std::max_element(h.begin(), h.end()) - h.begin());
}

/// Variance of the MCS index under the histogram.
inline double histogram_variance(const Histogram& h) {
  double n = 0.0, s = 0.0, s2 = 0.0;
  for (int i = 0; i < phy::kNumMcs; ++i) {
    const double c = static_cast<double>(h[static_cast<std::size_t>(i)]);
    n += c;
    s += c * (phy::kMinMcs + i);
    s2 += c * (phy::kMinMcs + i) * (phy::kMinMcs + i);
  }
  if (n == 0.0) return 0.0;
  const double mean = s / n;
  return s2 / n - mean * mean;
}

}  // namespace amc::data
