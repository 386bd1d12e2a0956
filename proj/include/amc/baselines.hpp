#pragma once

// Comparison policies: a data-calibrated SNR -> CQI -> MCS lookup table and
// a deep Q-network trained by dataset replay.

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "amc/autodiff.hpp"
#include "amc/models.hpp"
#include "amc/phy.hpp"

namespace amc::baselines {

using ad::Tensor;
using models::Dataset;
using models::Sample;

// ------------------------------------------------------------ lookup table

/// thresholds[0] is the floor (-inf) and thresholds[c] the lowest SINR in dB
/// mapped to class c. Bins are closed below: a value equal to a boundary
/// belongs to the higher class. Bin c reports CQI c + 1 and MCS 10 + c.
struct LutThresholds {
  std::array<double, phy::kNumMcs> thresholds{};

  void validate() const {
    for (std::size_t i = 1; i < thresholds.size(); ++i)
      if (!(thresholds[i] > thresholds[i - 1])) throw ConfigError("LUT thresholds must be strictly ascending");
  }

  std::string to_csv() const {
    std::ostringstream s;
    s.precision(17);
    s << "class,threshold_db\n";
    for (int c = 0; c < phy::kNumMcs; ++c) s << phy::kMinMcs + c << "," << thresholds[static_cast<std::size_t>(c)] << "\n";
    return s.str();
  }

  static LutThresholds from_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("class,threshold_db", 0) != 0) throw DataError("LUT CSV: missing header");
    LutThresholds t;
    for (int c = 0; c < phy::kNumMcs; ++c) {
      if (!std::getline(in, line)) throw DataError("LUT CSV: expected 15 rows");
      const auto comma = line.find(',');
      if (comma == std::string::npos || std::stoi(line.substr(0, comma)) != phy::kMinMcs + c)
        throw DataError("LUT CSV: malformed row '" + line + "'");
      const std::string v = line.substr(comma + 1);
      t.thresholds[static_cast<std::size_t>(c)] =
          v == "-inf" ? -std::numeric_limits<double>::infinity() : std::stod(v);
    }
    t.validate();
    return t;
  }
};

/// CQI 1..15 for a SINR in dB.
inline int lut_cqi(const LutThresholds& t, double sinr_db) {
  if (std::isnan(sinr_db)) throw DomainError("lut: SINR is NaN");
  const auto it = std::upper_bound(t.thresholds.begin() + 1, t.thresholds.end(), sinr_db);
  return static_cast<int>(it - t.thresholds.begin());
}

inline int cqi_to_mcs(int cqi) {
  if (cqi < 1 || cqi > phy::kNumMcs) throw DomainError("CQI outside 1..15");
  return phy::kMinMcs + cqi - 1;
}

inline int lut_predict(const LutThresholds& t, double sinr_db) { return cqi_to_mcs(lut_cqi(t, sinr_db)); }

namespace detail {

/// Pool-adjacent-violators: least-squares nondecreasing fit.
inline std::vector<double> isotonic(const std::vector<double>& y) {
  std::vector<double> level;
  std::vector<std::size_t> count;
  for (double v : y) {
    level.push_back(v);
    count.push_back(1);
    while (level.size() > 1 && level[level.size() - 2] > level.back()) {
      const std::size_t n = count.back() + count[count.size() - 2];
      const double merged = (level.back() * static_cast<double>(count.back()) +
                             level[level.size() - 2] * static_cast<double>(count[count.size() - 2])) /
                            static_cast<double>(n);
      level.pop_back();
      count.pop_back();
      level.back() = merged;
      count.back() = n;
    }
  }
  std::vector<double> out;
  for (std::size_t i = 0; i < level.size(); ++i) out.insert(out.end(), count[i], level[i]);
  return out;
}

}  // namespace detail

/// Midpoint calibration. The boundary between classes c and c + 1 is the
/// midpoint of their mean SINRs (dB). Means of empty classes are linearly
/// interpolated (or extrapolated) over the class index from the populated
/// ones. Boundaries are then made nondecreasing by isotonic regression and
/// strictly ascending by nudging ties upward by one ulp.
inline LutThresholds calibrate_lut(std::span<const double> sinr_db, std::span<const int> mcs) {
  if (sinr_db.size() != mcs.size()) throw ConfigError("calibrate_lut: size mismatch");
  std::array<double, phy::kNumMcs> sum{};
  std::array<std::size_t, phy::kNumMcs> n{};
  for (std::size_t i = 0; i < mcs.size(); ++i) {
    if (mcs[i] < phy::kMinMcs || mcs[i] > phy::kMaxMcs) throw DomainError("calibrate_lut: label outside [10, 24]");
    if (!std::isfinite(sinr_db[i])) throw DomainError("calibrate_lut: non-finite SINR");
    const auto c = static_cast<std::size_t>(mcs[i] - phy::kMinMcs);
    sum[c] += sinr_db[i];
    ++n[c];
  }
  std::vector<int> present;
  for (int c = 0; c < phy::kNumMcs; ++c)
    if (n[static_cast<std::size_t>(c)]) present.push_back(c);
  if (present.size() < 2) throw ConfigError("calibrate_lut: need at least two distinct labels");

  std::array<double, phy::kNumMcs> mean{};
  for (int c : present) mean[static_cast<std::size_t>(c)] = sum[static_cast<std::size_t>(c)] / static_cast<double>(n[static_cast<std::size_t>(c)]);
  for (int c = 0; c < phy::kNumMcs; ++c) {
    if (n[static_cast<std::size_t>(c)]) continue;
    // Neighbouring populated classes, or the two nearest on one side.
    auto hi = std::lower_bound(present.begin(), present.end(), c);
    int a, b;
    if (hi == present.begin()) {
      a = present[0], b = present[1];
    } else if (hi == present.end()) {
      a = present[present.size() - 2], b = present.back();
    } else {
      a = *(hi - 1), b = *hi;
    }
    const double ma = mean[static_cast<std::size_t>(a)], mb = mean[static_cast<std::size_t>(b)];
    mean[static_cast<std::size_t>(c)] = ma + (mb - ma) * (c - a) / static_cast<double>(b - a);
  }

  std::vector<double> mid;
  for (int c = 1; c < phy::kNumMcs; ++c)
    mid.push_back(0.5 * (mean[static_cast<std::size_t>(c - 1)] + mean[static_cast<std::size_t>(c)]));
  mid = detail::isotonic(mid);
  for (std::size_t i = 1; i < mid.size(); ++i)
    if (!(mid[i] > mid[i - 1])) mid[i] = std::nextafter(mid[i - 1], std::numeric_limits<double>::infinity());

  LutThresholds t;
  t.thresholds[0] = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < mid.size(); ++i) t.thresholds[i + 1] = mid[i];
  t.validate();
  return t;
}

/// What the lookup table reads from a sample.
enum class LutInput {
  post_zf_sinr,     // the stored post-precoding SINR of the target user
  single_user_snr,  // P |h_k|^2 / (n_ue sigma^2) of the final frame, ignoring interference
};

inline std::string to_string(LutInput v) { return v == LutInput::post_zf_sinr ? "post_zf_sinr" : "single_user_snr"; }

inline LutInput parse_lut_input(const std::string& s) {
  if (s == "post_zf_sinr") return LutInput::post_zf_sinr;
  if (s == "single_user_snr") return LutInput::single_user_snr;
  throw ConfigError("unknown LUT input '" + s + "'");
}

/// Single-user SNR in dB of the target user (column 0) in the final frame,
/// with that frame rescaled to unit mean entry power.
inline double single_user_snr_db(const Sample& s, const phy::LinkConfig& link) {
  const Tensor& x = s.x;
  if (x.rank() != 4 || x.dim(1) != 2) throw ConfigError("single_user_snr_db: expected [T, 2, n_bs, n_ue]");
  const std::size_t t = x.dim(0), n_bs = x.dim(2), n_ue = x.dim(3);
  const double* last = &x.data[(t - 1) * 2 * n_bs * n_ue];
  double total = 0.0, col = 0.0;
  for (std::size_t p = 0; p < 2; ++p)
    for (std::size_t m = 0; m < n_bs; ++m)
      for (std::size_t k = 0; k < n_ue; ++k) {
        const double v = last[(p * n_bs + m) * n_ue + k];
        total += v * v;
        if (k == 0) col += v * v;
      }
  if (!(total > 0.0)) throw DataError("single_user_snr_db: empty frame");
  const double gain = col * static_cast<double>(n_bs * n_ue) / total;
  return phy::to_db(link.tx_power * gain / (static_cast<double>(n_ue) * link.noise_power));
}

inline double lut_feature(const Sample& s, LutInput input, const phy::LinkConfig& link) {
  return input == LutInput::post_zf_sinr ? static_cast<double>(s.sinr_db) : single_user_snr_db(s, link);
}

inline LutThresholds calibrate_lut(const Dataset& train, LutInput input, const phy::LinkConfig& link) {
  std::vector<double> f;
  std::vector<int> y;
  for (const auto& s : train) {
    f.push_back(lut_feature(s, input, link));
    y.push_back(s.y + phy::kMinMcs);
  }
  return calibrate_lut(f, y);
}

// ------------------------------------------------------------ DQN

struct DqnConfig {
  static constexpr int kHiddenLayers = 5;
  static constexpr int kWidth = 64;

  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  std::int64_t epsilon_decay_steps = 20000;
  double gamma = 0.0;
  std::size_t replay_capacity = 10000;
  int batch_size = 64;
  std::int64_t target_sync = 500;
  /// Environment steps between gradient updates.
  int train_every = 1;
  double learning_rate = 1e-3;
  int episodes = 300;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0) || !(epsilon_end >= 0.0 && epsilon_end <= 1.0))
      throw ConfigError("dqn epsilon must lie in [0, 1]");
    if (epsilon_decay_steps < 0) throw ConfigError("dqn.epsilon_decay_steps must be >= 0");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("dqn.gamma must lie in [0, 1]");
    if (replay_capacity < 1) throw ConfigError("dqn.replay_capacity must be >= 1");
    if (batch_size < 1) throw ConfigError("dqn.batch_size must be >= 1");
    if (target_sync < 1) throw ConfigError("dqn.target_sync must be >= 1");
    if (train_every < 1) throw ConfigError("dqn.train_every must be >= 1");
    if (!(learning_rate >= 0.0)) throw ConfigError("dqn.learning_rate must be >= 0");
    if (episodes < 1) throw ConfigError("dqn.episodes must be >= 1");
  }

  /// Linear schedule from epsilon_start to epsilon_end over the decay steps.
  double epsilon(std::int64_t step) const {
    if (epsilon_decay_steps == 0 || step >= epsilon_decay_steps) return epsilon_end;
    const double f = static_cast<double>(step) / static_cast<double>(epsilon_decay_steps);
    return epsilon_start + (epsilon_end - epsilon_start) * f;
  }
};

/// Five hidden ReLU layers of 64 units on the flattened state, 15 outputs.
class QNet {
public:
  QNet() = default;
  QNet(std::size_t input, std::uint64_t seed) : input_(input) {
    std::size_t prev = input;
    for (int l = 0; l < DqnConfig::kHiddenLayers; ++l) {
      layers_.emplace_back("dqn.fc" + std::to_string(l + 1), prev, DqnConfig::kWidth);
      prev = DqnConfig::kWidth;
    }
    layers_.emplace_back("dqn.out", prev, static_cast<std::size_t>(phy::kNumMcs));
    relus_.resize(DqnConfig::kHiddenLayers);
    CounterRng rng{seed, stream::kInit};
    for (auto& l : layers_) l.init(rng);
  }

  /// Q values [N, 15] for states [N, input].
  Tensor forward(const Tensor& x) {
    Tensor h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      h = layers_[i].forward(h);
      if (i < relus_.size()) h = relus_[i].forward(h);
    }
    return h;
  }

  void backward(const Tensor& dq) {
    Tensor g = dq;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      if (i < relus_.size()) g = relus_[i].backward(g);
      g = layers_[i].backward(g);
    }
  }

  ad::ParamList params() {
    ad::ParamList p;
    for (auto& l : layers_)
      for (auto* q : l.params()) p.push_back(q);
    return p;
  }

  ad::NamedTensors state() {
    ad::NamedTensors out;
    for (auto* p : params()) out.push_back({p->name, p->value});
    return out;
  }

  void load_state(const ad::NamedTensors& src) {
    std::vector<std::pair<std::string, Tensor*>> dst;
    for (auto* p : params()) dst.emplace_back(p->name, &p->value);
    ad::assign_named(src, dst);
  }

  void copy_from(QNet& other) { load_state(other.state()); }

  ad::Dense& output_layer() { return layers_.back(); }
  std::size_t input_size() const { return input_; }

  std::string descriptor() const {
    std::ostringstream s;
    s << "kind=dqn\nhidden_layers=" << DqnConfig::kHiddenLayers << "\nwidth=" << DqnConfig::kWidth
      << "\ninput=" << input_ << "\nactions=" << phy::kNumMcs << "\n";
    return s.str();
  }

private:
  std::size_t input_ = 0;
  std::vector<ad::Dense> layers_;
  std::vector<ad::Relu> relus_;
};

inline Tensor flatten_states(const Dataset& data, std::span<const std::size_t> idx) {
  const std::size_t d = data.at(idx[0]).x.size();
  Tensor x({idx.size(), d});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& v = data.at(idx[i]).x.data;
    if (v.size() != d) throw ConfigError("dqn: inconsistent state sizes");
    std::copy(v.begin(), v.end(), x.data.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return x;
}

/// Epsilon-greedy action (class 0..14). Draw `step` of the exploration
/// stream decides between a uniform action and argmax Q (lowest index on
/// ties).
inline int dqn_act(QNet& q, const Sample& state, double epsilon, std::uint64_t seed, std::uint64_t step) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0, 1]");
  CounterRng rng{seed, stream::kExplore, step};
  if (rng.uniform() < epsilon) return static_cast<int>(rng.below(phy::kNumMcs));
  const Tensor qv = q.forward(state.x.reshaped({1, state.x.size()}));
  return models::argmax_low(qv.data);
}

struct Transition {
  std::size_t state = 0;  // index into the replayed dataset
  int action = 0;
  double reward = 0.0;
  std::size_t next_state = 0;
  bool done = true;
};

inline double reward_for(int action, int oracle_class) { return action == oracle_class ? 100.0 : 0.0; }

/// Fixed-capacity FIFO replay memory with uniform sampling.
class ReplayBuffer {
public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay capacity must be >= 1");
    items_.reserve(capacity);
  }

  void push(const Transition& t) {
    if (items_.size() < capacity_) {
      items_.push_back(t);
    } else {
      items_[head_] = t;
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }

  /// i-th oldest transition.
  const Transition& at(std::size_t i) const { return items_.at((head_ + i) % items_.size()); }

  /// Uniform draws with replacement.
  std::vector<Transition> sample(std::size_t n, CounterRng& rng) const {
    if (items_.empty()) throw ConfigError("replay buffer is empty");
    std::vector<Transition> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(items_[rng.below(items_.size())]);
    return out;
  }

private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Transition> items_;
};

/// Bellman targets y = r + gamma max_a Q_target(s', a), or y = r when done.
inline std::vector<double> bellman_targets(const std::vector<Transition>& batch, const Tensor& q_next, double gamma) {
  std::vector<double> y;
  const std::size_t k = phy::kNumMcs;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].done) {
      y.push_back(batch[i].reward);
    } else {
      const double* row = &q_next.data[i * k];
      y.push_back(batch[i].reward + gamma * *std::max_element(row, row + k));
    }
  }
  return y;
}

struct DqnReport {
  std::vector<double> loss;         // mean squared error per episode
  std::vector<double> mean_reward;  // per episode
  std::vector<double> train_accuracy;
  std::int64_t steps = 0;
};

struct DqnHooks {
  std::function<void(int, const DqnReport&)> on_episode;
};

/// Dataset-replay training. Each episode visits the training samples in a
/// seeded order; every visit acts epsilon-greedily, receives reward 100 for
/// the oracle class and 0 otherwise, stores the transition and, every
/// train_every steps, takes one SGD step on the squared error of the chosen
/// action's Q value against the Bellman target.
inline DqnReport dqn_train(QNet& q, const Dataset& train, const DqnConfig& cfg, const DqnHooks& hooks = {}) {
  cfg.validate();
  if (train.empty()) throw ConfigError("dqn_train: empty dataset");
  QNet target = q;
  const ad::ParamList params = q.params();
  ad::zero_grads(params);
  ReplayBuffer buffer(cfg.replay_capacity);
  CounterRng replay_rng{cfg.seed, stream::kReplay};
  DqnReport rep;
  std::int64_t step = 0;
  const std::size_t k = phy::kNumMcs;
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    const auto order = models::shuffled_indices(train.size(), cfg.seed ^ 0x44514E, static_cast<std::uint64_t>(ep));
    double loss_sum = 0.0, reward_sum = 0.0;
    std::size_t updates = 0, hits = 0;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      const std::size_t s = order[pos];
      const int a = dqn_act(q, train[s], cfg.epsilon(step), cfg.seed, static_cast<std::uint64_t>(step));
      const double r = reward_for(a, train[s].y);
      reward_sum += r;
      hits += r > 0.0;
      buffer.push({s, a, r, order[(pos + 1) % order.size()], true});
      ++step;
      if (buffer.size() < static_cast<std::size_t>(cfg.batch_size) || step % cfg.train_every != 0) continue;

      const auto batch = buffer.sample(static_cast<std::size_t>(cfg.batch_size), replay_rng);
      std::vector<std::size_t> si, ni;
      bool any_open = false;
      for (const auto& t : batch) {
        si.push_back(t.state);
        ni.push_back(t.next_state);
        any_open |= !t.done;
      }
      Tensor q_next;
      if (any_open) q_next = target.forward(flatten_states(train, ni));
      const auto y = bellman_targets(batch, q_next, cfg.gamma);
      const Tensor qv = q.forward(flatten_states(train, si));
      Tensor dq(qv.shape);
      const double inv_b = 1.0 / static_cast<double>(batch.size());
      double l = 0.0;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const std::size_t col = i * k + static_cast<std::size_t>(batch[i].action);
        const double err = qv.data[col] - y[i];
        l += err * err * inv_b;
        dq.data[col] = 2.0 * err * inv_b;
      }
      if (!std::isfinite(l)) throw NumericError("dqn: non-finite loss");
      q.backward(dq);
      ad::sgd_step(params, cfg.learning_rate);
      loss_sum += l;
      ++updates;
      if (step % cfg.target_sync == 0) target.copy_from(q);
    }
    rep.loss.push_back(updates ? loss_sum / static_cast<double>(updates) : std::nan(""));
    rep.mean_reward.push_back(reward_sum / static_cast<double>(train.size()));
    rep.train_accuracy.push_back(static_cast<double>(hits) / static_cast<double>(train.size()));
    if (hooks.on_episode) hooks.on_episode(ep + 1, rep);
  }
  rep.steps = step;
  return rep;
}

/// Greedy MCS indices for every sample.
inline std::vector<int> dqn_predict_all(QNet& q, const Dataset& data, std::size_t batch = 256) {
  std::vector<int> out;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    idx.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + batch); ++i) idx.push_back(i);
    const Tensor qv = q.forward(flatten_states(data, idx));
    const std::size_t k = qv.dim(1);
    for (std::size_t n = 0; n < idx.size(); ++n)
      out.push_back(models::mcs_from_logits(std::span<const double>(&qv.data[n * k], k)));
  }
  return out;
}

inline void save_qnet(QNet& q, const std::string& path) {
  ad::save_checkpoint(path, q.state());
  std::ofstream d(path + ".arch");
  if (!d) throw DataError("cannot write " + path + ".arch");
  d << q.descriptor();
}

inline QNet load_qnet(std::size_t input, const std::string& path) {
  QNet q(input, 0);
  if (models::read_text(path + ".arch") != q.descriptor())
    throw ConfigError("architecture descriptor of " + path + " does not match the configuration");
  q.load_state(ad::load_checkpoint(path));
  return q;
}

}  // namespace amc::baselines
