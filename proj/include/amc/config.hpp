#pragma once

// Flat key=value run configuration with section prefixes (channel., phy.,
// data., model., train., dqn., lut.). Unknown keys are rejected.

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "amc/baselines.hpp"
#include "amc/channel.hpp"
#include "amc/datastore.hpp"
#include "amc/models.hpp"
#include "amc/phy.hpp"

namespace amc::config {

struct RunConfig {
  channel::ScenarioConfig channel;
  double mobile_speed_mps = 2.8;
  std::vector<std::string> scenarios{"all"};
  phy::LinkConfig link;
  std::string mcs_table = "builtin";
  data::GenerateOptions data;
  models::CnnLstmConfig model;
  models::TrainConfig train;
  baselines::DqnConfig dqn;
  baselines::LutInput lut_input = baselines::LutInput::single_user_snr;

  /// Applies one seed to every seeded component.
  void override_seed(std::uint64_t seed) {
    channel.master_seed = seed;
    data.split_seed = seed;
    model.seed = seed;
    train.seed = seed;
    dqn.seed = seed;
  }

  void validate() const {
    channel.validate();
    link.validate();
    model.validate();
    train.validate();
    dqn.validate();
    if (data.seq_len != model.seq_len) throw ConfigError("data.seq_len must equal model.seq_len");
    if (model.n_bs != channel.n_bs || model.n_ue != channel.n_ue)
      throw ConfigError("model input extents must match channel.n_bs / channel.n_ue");
    if (data.frames_per_scenario < data.seq_len) throw ConfigError("data.frames_per_scenario must be >= data.seq_len");
    if (!(data.train_fraction > 0.0 && data.train_fraction < 1.0))
      throw ConfigError("data.train_fraction must lie in (0, 1)");
    if (!(mobile_speed_mps >= 0.0)) throw ConfigError("channel.mobile_speed_mps must be >= 0");
    if (scenarios.empty()) throw ConfigError("channel.scenarios must not be empty");
  }

  phy::McsTable mcs() const {
    return mcs_table == "builtin" ? phy::default_mcs_table() : phy::load_mcs_table(mcs_table);
  }

  /// The scenario catalog selected by channel.scenarios.
  std::vector<channel::ScenarioConfig> catalog() const {
    const auto all = data::default_catalog(channel, mobile_speed_mps);
    if (scenarios.size() == 1 && scenarios[0] == "all") return all;
    std::vector<channel::ScenarioConfig> out;
    for (const auto& tag : scenarios) {
      bool found = false;
      for (const auto& c : all)
        if (c.tag() == tag) {
          out.push_back(c);
          found = true;
        }
      if (!found) throw ConfigError("unknown scenario '" + tag + "' in channel.scenarios");
    }
    return out;
  }
};

namespace detail {

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
    throw ConfigError("config: invalid value '" + v + "' for " + key);
  return out;
}

inline std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

inline std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

struct Key {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class T, class Member>
Key number_key(const std::string& name, Member m) {
  return {[name, m](RunConfig& c, const std::string& v) { m(c) = parse_number<T>(name, v); },
          [m](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>)
              return fmt(m(const_cast<RunConfig&>(c)));
            else
              return std::to_string(m(const_cast<RunConfig&>(c)));
          }};
}

#define AMC_KEY(T, name, expr) \
  { name, number_key<T>(name, [](RunConfig& c) -> T& { return expr; }) }

inline const std::map<std::string, Key>& keys() {
  static const std::map<std::string, Key> table = {
      AMC_KEY(std::uint64_t, "channel.master_seed", c.channel.master_seed),
      AMC_KEY(int, "channel.n_bs", c.channel.n_bs),
      AMC_KEY(int, "channel.n_ue", c.channel.n_ue),
      AMC_KEY(double, "channel.carrier_hz", c.channel.carrier_hz),
      AMC_KEY(double, "channel.frame_s", c.channel.frame_s),
      AMC_KEY(double, "channel.cell_radius_m", c.channel.cell_radius_m),
      AMC_KEY(int, "channel.n_scatterers", c.channel.n_scatterers),
      AMC_KEY(double, "channel.cluster_spread_rad", c.channel.cluster_spread_rad),
      AMC_KEY(double, "channel.rician_k_db", c.channel.rician_k_db),
      AMC_KEY(double, "channel.mobile_speed_mps", c.mobile_speed_mps),
      {"channel.scenarios",
       {[](RunConfig& c, const std::string& v) { c.scenarios = split_list(v); },
        [](const RunConfig& c) { return join(c.scenarios); }}},
      AMC_KEY(double, "phy.tx_power", c.link.tx_power),
      AMC_KEY(double, "phy.noise_power", c.link.noise_power),
      AMC_KEY(double, "phy.ber_threshold", c.link.ber_threshold),
      AMC_KEY(double, "phy.coding_gain_coeff_db", c.link.coding_gain_coeff_db),
      {"phy.mcs_table",
       {[](RunConfig& c, const std::string& v) { c.mcs_table = v; }, [](const RunConfig& c) { return c.mcs_table; }}},
      AMC_KEY(std::int64_t, "data.frames_per_scenario", c.data.frames_per_scenario),
      AMC_KEY(int, "data.seq_len", c.data.seq_len),
      AMC_KEY(double, "data.train_fraction", c.data.train_fraction),
      AMC_KEY(std::uint64_t, "data.split_seed", c.data.split_seed),
      AMC_KEY(int, "model.growth_channels", c.model.growth_channels),
      AMC_KEY(int, "model.kernel", c.model.kernel),
      AMC_KEY(int, "model.pool", c.model.pool),
      AMC_KEY(int, "model.lstm_hidden", c.model.lstm_hidden),
      {"model.fcl_sizes",
       {[](RunConfig& c, const std::string& v) {
          c.model.fcl_sizes.clear();
          for (const auto& s : split_list(v)) c.model.fcl_sizes.push_back(parse_number<int>("model.fcl_sizes", s));
        },
        [](const RunConfig& c) {
          std::vector<std::string> s;
          for (int v : c.model.fcl_sizes) s.push_back(std::to_string(v));
          return join(s);
        }}},
      AMC_KEY(int, "model.seq_len", c.model.seq_len),
      AMC_KEY(double, "model.bn_eps", c.model.bn_eps),
      AMC_KEY(double, "model.bn_momentum", c.model.bn_momentum),
      AMC_KEY(std::uint64_t, "model.seed", c.model.seed),
      AMC_KEY(int, "train.batch_size", c.train.batch_size),
      AMC_KEY(double, "train.learning_rate", c.train.learning_rate),
      AMC_KEY(int, "train.epochs", c.train.epochs),
      AMC_KEY(std::uint64_t, "train.seed", c.train.seed),
      AMC_KEY(int, "train.eval_every", c.train.eval_every),
      AMC_KEY(double, "dqn.epsilon_start", c.dqn.epsilon_start),
      AMC_KEY(double, "dqn.epsilon_end", c.dqn.epsilon_end),
      AMC_KEY(std::int64_t, "dqn.epsilon_decay_steps", c.dqn.epsilon_decay_steps),
      AMC_KEY(double, "dqn.gamma", c.dqn.gamma),
      AMC_KEY(std::size_t, "dqn.replay_capacity", c.dqn.replay_capacity),
      AMC_KEY(int, "dqn.batch_size", c.dqn.batch_size),
      AMC_KEY(std::int64_t, "dqn.target_sync", c.dqn.target_sync),
      AMC_KEY(int, "dqn.train_every", c.dqn.train_every),
      AMC_KEY(double, "dqn.learning_rate", c.dqn.learning_rate),
      AMC_KEY(int, "dqn.episodes", c.dqn.episodes),
      AMC_KEY(std::uint64_t, "dqn.seed", c.dqn.seed),
      {"lut.input",
       {[](RunConfig& c, const std::string& v) { c.lut_input = baselines::parse_lut_input(v); },
        [](const RunConfig& c) { return baselines::to_string(c.lut_input); }}},
  };
  return table;
}

#undef AMC_KEY

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Sets one key; throws ConfigError for unknown keys or bad values.
inline void set_key(RunConfig& c, const std::string& key, const std::string& value) {
  const auto& k = detail::keys();
  const auto it = k.find(key);
  if (it == k.end()) throw ConfigError("config: unknown key '" + key + "'");
  it->second.set(c, value);
}

/// Parses key=value lines; '#' starts a comment. Later lines win.
inline RunConfig parse_config(std::istream& in) {
  RunConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    set_key(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return c;
}

inline RunConfig parse_config_text(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  return parse_config(in);
}

/// Every key with its effective value, sorted; parses back to the same
/// configuration.
inline std::string effective_config(const RunConfig& c) {
  std::ostringstream s;
  for (const auto& [name, key] : detail::keys()) s << name << "=" << key.get(c) << "\n";
  return s.str();
}

inline std::vector<std::string> known_keys() {
  std::vector<std::string> out;
  for (const auto& [name, key] : detail::keys()) out.push_back(name);
  return out;
}

}  // namespace amc::config
