#pragma once

// CNN-LSTM MCS predictor, its CNN-only ablation, and the supervised
// training / inference loops.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "amc/autodiff.hpp"
#include "amc/channel.hpp"
#include "amc/phy.hpp"

namespace amc::models {

using ad::ParamList;
using ad::Shape;
using ad::Tensor;

inline constexpr int kNumClasses = phy::kNumMcs;

/// One training example: T consecutive normalized channel tensors with the
/// target user's column rotated to position 0, labelled with the oracle
/// class (MCS - 10) of the final frame.
struct Sample {
  Tensor x;  // [T, 2, n_bs, n_ue]
  int y = 0;
  int user_id = 0;
  int scenario_id = 0;
  std::int64_t frame_index = 0;
  float sinr_db = 0.0f;
};

using Dataset = std::vector<Sample>;

struct NormalizedFrames {
  Tensor x;
  double scale = 1.0;  // RMS that was divided out
};

/// Stacks real/imag planes of the frames into [T, 2, n_bs, n_ue], rotating
/// columns so `target_user` comes first, and divides by the RMS over the
/// whole tensor.
inline NormalizedFrames normalize_sample(const std::vector<channel::ChannelFrame>& frames, int t_len,
                                         int target_user = 0) {
  if (t_len < 1 || frames.size() != static_cast<std::size_t>(t_len))
    throw ConfigError("normalize_sample: expected " + std::to_string(t_len) + " frames");
  const int n_bs = frames[0].n_bs, n_ue = frames[0].n_ue;
  if (target_user < 0 || target_user >= n_ue) throw ConfigError("normalize_sample: target user out of range");
  Tensor x({static_cast<std::size_t>(t_len), 2, static_cast<std::size_t>(n_bs), static_cast<std::size_t>(n_ue)});
  double ss = 0.0;
  for (int t = 0; t < t_len; ++t) {
    const auto& f = frames[static_cast<std::size_t>(t)];
    if (f.n_bs != n_bs || f.n_ue != n_ue) throw ConfigError("normalize_sample: inconsistent frame shapes");
    for (int m = 0; m < n_bs; ++m) {
      for (int k = 0; k < n_ue; ++k) {
        const int src = (k + target_user) % n_ue;
        const auto v = f.at(m, src);
        const std::size_t base = ((static_cast<std::size_t>(t) * 2) * n_bs + m) * n_ue + k;
        x.data[base] = v.real();
        x.data[base + static_cast<std::size_t>(n_bs) * n_ue] = v.imag();
        ss += std::norm(v);
      }
    }
  }
  const double rms = std::sqrt(ss / static_cast<double>(x.size()));
  if (!(rms > 0.0) || !std::isfinite(rms)) throw DataError("normalize_sample: RMS is zero or not finite");
  for (auto& v : x.data) v /= rms;
  return {std::move(x), rms};
}

// ------------------------------------------------------------ configs

struct CnnLstmConfig {
  static constexpr int kDenseBlocks = 3;
  static constexpr int kConvsPerBlock = 4;
  static constexpr int kLstmLayers = 3;

  int growth_channels = 8;
  int kernel = 3;
  int pool = 2;
  int lstm_hidden = 64;
  std::vector<int> fcl_sizes{128, 64, kNumClasses};
  int seq_len = 3;
  int classes = kNumClasses;
  int n_bs = 32;
  int n_ue = 4;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  std::uint64_t seed = 1;

  void validate() const {
    if (growth_channels < 1) throw ConfigError("model.growth_channels must be >= 1");
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("model.kernel must be odd and >= 1");
    if (pool < 1) throw ConfigError("model.pool must be >= 1");
    if (lstm_hidden < 1) throw ConfigError("model.lstm_hidden must be >= 1");
    if (fcl_sizes.size() != 3) throw ConfigError("model.fcl_sizes must list three layers");
    if (std::any_of(fcl_sizes.begin(), fcl_sizes.end(), [](int v) { return v < 1; }))
      throw ConfigError("model.fcl_sizes entries must be >= 1");
    if (classes != kNumClasses || fcl_sizes.back() != classes)
      throw ConfigError("final FCL width must equal the 15 MCS classes");
    if (seq_len < 1) throw ConfigError("model.seq_len must be >= 1");
    if (n_bs < 1 || n_ue < 1) throw ConfigError("model input extents must be >= 1");
  }
};

struct TrainConfig {
  int batch_size = 64;
  double learning_rate = 1e-3;
  int epochs = 300;
  std::uint64_t seed = 1;
  int eval_every = 1;

  void validate() const {
    if (batch_size < 2) throw ConfigError("train.batch_size must be >= 2");
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (!(learning_rate >= 0.0)) throw ConfigError("train.learning_rate must be >= 0");
    if (eval_every < 1) throw ConfigError("train.eval_every must be >= 1");
  }
};

// ------------------------------------------------------------ blocks

/// Dense block: four 3x3 convolutions with ReLU; the block input is
/// concatenated with the output of conv 2, that result with the output of
/// conv 4, then batch norm. Spatial size is preserved.
class DenseBlock {
public:
  DenseBlock(const std::string& name, std::size_t in_ch, const CnnLstmConfig& cfg) : in_ch_(in_ch) {
    const auto g = static_cast<std::size_t>(cfg.growth_channels);
    const auto k = static_cast<std::size_t>(cfg.kernel);
    const std::size_t pad = k / 2;
    conv_[0] = ad::Conv2d(name + ".conv1", in_ch, g, k, 1, pad);
    conv_[1] = ad::Conv2d(name + ".conv2", g, g, k, 1, pad);
    conv_[2] = ad::Conv2d(name + ".conv3", in_ch + g, g, k, 1, pad);
    conv_[3] = ad::Conv2d(name + ".conv4", g, g, k, 1, pad);
    bn_ = ad::BatchNorm2d(name + ".bn", in_ch + 2 * g, cfg.bn_eps, cfg.bn_momentum);
    out_ch_ = in_ch + 2 * g;
  }

  void init(CounterRng& rng) {
    for (auto& c : conv_) c.init(rng);
  }

  Tensor forward(const Tensor& x, bool training) {
    const Tensor a1 = relu_[0].forward(conv_[0].forward(x));
    const Tensor a2 = relu_[1].forward(conv_[1].forward(a1));
    const Tensor cat1 = ad::concat_channels(x, a2);
    cat1_ch_ = cat1.dim(1);
    const Tensor a3 = relu_[2].forward(conv_[2].forward(cat1));
    const Tensor a4 = relu_[3].forward(conv_[3].forward(a3));
    return bn_.forward(ad::concat_channels(cat1, a4), training);
  }

  Tensor backward(const Tensor& dy) {
    auto [dcat1, da4] = ad::split_channels(bn_.backward(dy), cat1_ch_);
    const Tensor da3 = conv_[3].backward(relu_[3].backward(da4));
    add_into(dcat1, conv_[2].backward(relu_[2].backward(da3)));
    auto [dx, da2] = ad::split_channels(dcat1, in_ch_);
    const Tensor da1 = conv_[1].backward(relu_[1].backward(da2));
    add_into(dx, conv_[0].backward(relu_[0].backward(da1)));
    return dx;
  }

  ParamList params() {
    ParamList p;
    for (auto& c : conv_)
      for (auto* q : c.params()) p.push_back(q);
    for (auto* q : bn_.params()) p.push_back(q);
    return p;
  }

  void buffers(std::vector<std::pair<std::string, Tensor*>>& out) {
    out.emplace_back(bn_.name() + ".running_mean", &bn_.running_mean);
    out.emplace_back(bn_.name() + ".running_var", &bn_.running_var);
  }

  std::size_t out_channels() const { return out_ch_; }

private:
  static void add_into(Tensor& a, const Tensor& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += b.data[i];
  }

  std::size_t in_ch_ = 0, out_ch_ = 0, cat1_ch_ = 0;
  ad::Conv2d conv_[4];
  ad::Relu relu_[4];
  ad::BatchNorm2d bn_;
};

/// Three dense blocks with an adaptive average pool between consecutive
/// blocks, then flatten: [N, 2, n_bs, n_ue] -> [N, features].
class CnnTrunk {
public:
  explicit CnnTrunk(const CnnLstmConfig& cfg) {
    std::size_t ch = 2;
    Shape s{1, 2, static_cast<std::size_t>(cfg.n_bs), static_cast<std::size_t>(cfg.n_ue)};
    for (int b = 0; b < CnnLstmConfig::kDenseBlocks; ++b) {
      blocks_.emplace_back("cnn.block" + std::to_string(b + 1), ch, cfg);
      ch = blocks_.back().out_channels();
      s[1] = ch;
      if (b + 1 < CnnLstmConfig::kDenseBlocks) {
        pools_.emplace_back(static_cast<std::size_t>(cfg.pool), static_cast<std::size_t>(cfg.pool), true);
        s = pools_.back().output_shape(s);
      }
    }
    out_shape_ = s;
    features_ = s[1] * s[2] * s[3];
  }

  void init(CounterRng& rng) {
    for (auto& b : blocks_) b.init(rng);
  }

  Tensor forward(const Tensor& x, bool training) {
    Tensor h = x;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      h = blocks_[b].forward(h, training);
      if (b < pools_.size()) h = pools_[b].forward(h);
    }
    pooled_shape_ = h.shape;
    return h.reshaped({h.dim(0), features_});
  }

  Tensor backward(const Tensor& dy) {
    Tensor g = dy.reshaped(pooled_shape_);
    for (std::size_t b = blocks_.size(); b-- > 0;) {
      if (b < pools_.size()) g = pools_[b].backward(g);
      g = blocks_[b].backward(g);
    }
    return g;
  }

  ParamList params() {
    ParamList p;
    for (auto& b : blocks_)
      for (auto* q : b.params()) p.push_back(q);
    return p;
  }

  void buffers(std::vector<std::pair<std::string, Tensor*>>& out) {
    for (auto& b : blocks_) b.buffers(out);
  }

  std::size_t features() const { return features_; }

private:
  std::vector<DenseBlock> blocks_;
  std::vector<ad::AvgPool2d> pools_;
  Shape out_shape_, pooled_shape_;
  std::size_t features_ = 0;
};

/// Three fully connected layers: relu, relu, linear.
class FcHead {
public:
  FcHead(std::size_t in, const std::vector<int>& sizes) {
    std::size_t prev = in;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      layers_.emplace_back("fc" + std::to_string(i + 1), prev, static_cast<std::size_t>(sizes[i]));
      prev = static_cast<std::size_t>(sizes[i]);
    }
    relus_.resize(sizes.size() - 1);
  }

  void init(CounterRng& rng) {
    for (auto& l : layers_) l.init(rng);
  }

  Tensor forward(const Tensor& x) {
    Tensor h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      h = layers_[i].forward(h);
      if (i < relus_.size()) h = relus_[i].forward(h);
    }
    return h;
  }

  Tensor backward(const Tensor& dy) {
    Tensor g = dy;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      if (i < relus_.size()) g = relus_[i].backward(g);
      g = layers_[i].backward(g);
    }
    return g;
  }

  ParamList params() {
    ParamList p;
    for (auto& l : layers_)
      for (auto* q : l.params()) p.push_back(q);
    return p;
  }

  ad::Dense& last() { return layers_.back(); }

private:
  std::vector<ad::Dense> layers_;
  std::vector<ad::Relu> relus_;
};

// ------------------------------------------------------------ models

enum class ModelKind { cnn_lstm, cnn_only };

inline std::string to_string(ModelKind k) { return k == ModelKind::cnn_lstm ? "cnn_lstm" : "cnn_only"; }

/// A batch of samples laid out for the CNN trunk: frames [N * T, 2, n_bs,
/// n_ue] in (sample, time) order.
struct Batch {
  Tensor frames;
  std::size_t n = 0;
  std::size_t t = 0;
  std::vector<int> labels;
};

inline Batch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ConfigError("make_batch: empty batch");
  const Tensor& first = data.at(indices[0]).x;
  if (first.rank() != 4) throw ConfigError("make_batch: sample tensors must be [T, 2, n_bs, n_ue]");
  Batch b;
  b.n = indices.size();
  b.t = first.dim(0);
  b.frames = Tensor({b.n * b.t, first.dim(1), first.dim(2), first.dim(3)});
  const std::size_t per = first.size();
  for (std::size_t i = 0; i < b.n; ++i) {
    const Sample& s = data.at(indices[i]);
    if (s.x.shape != first.shape) throw ConfigError("make_batch: inconsistent sample shapes");
    std::copy(s.x.data.begin(), s.x.data.end(), b.frames.data.begin() + static_cast<std::ptrdiff_t>(i * per));
    b.labels.push_back(s.y);
  }
  return b;
}

/// Common interface of the two supervised networks.
class PolicyModel {
public:
  virtual ~PolicyModel() = default;
  /// Logits [N, 15] for a batch; caches activations for backward().
  virtual Tensor forward(const Batch& batch, bool training) = 0;
  /// Backpropagates dL/dlogits and accumulates parameter gradients.
  virtual void backward(const Tensor& dlogits) = 0;
  virtual ParamList params() = 0;
  /// Non-trainable state saved with the parameters (BN running stats).
  virtual std::vector<std::pair<std::string, Tensor*>> buffers() = 0;
  virtual ModelKind kind() const = 0;
  virtual const CnnLstmConfig& config() const = 0;
  /// Zeroes the final fully connected layer.
  virtual void zero_output_layer() = 0;

  std::size_t parameter_count() { return ad::parameter_count(params()); }

  ad::NamedTensors state() {
    ad::NamedTensors out;
    for (auto* p : params()) out.push_back({p->name, p->value});
    for (auto& [name, t] : buffers()) out.push_back({name, *t});
    return out;
  }

  void load_state(const ad::NamedTensors& src) {
    std::vector<std::pair<std::string, Tensor*>> dst;
    for (auto* p : params()) dst.emplace_back(p->name, &p->value);
    for (auto& b : buffers()) dst.push_back(b);
    ad::assign_named(src, dst);
  }

  /// Structured-text architecture descriptor written next to checkpoints.
  std::string descriptor() const {
    const auto& c = config();
    std::ostringstream s;
    s << "kind=" << to_string(kind()) << "\n"
      << "dense_blocks=" << CnnLstmConfig::kDenseBlocks << "\n"
      << "convs_per_block=" << CnnLstmConfig::kConvsPerBlock << "\n"
      << "growth_channels=" << c.growth_channels << "\n"
      << "kernel=" << c.kernel << "\n"
      << "pool=" << c.pool << "\n"
      << "lstm_layers=" << (kind() == ModelKind::cnn_lstm ? CnnLstmConfig::kLstmLayers : 0) << "\n"
      << "lstm_hidden=" << c.lstm_hidden << "\n"
      << "fcl_sizes=" << c.fcl_sizes[0] << "," << c.fcl_sizes[1] << "," << c.fcl_sizes[2] << "\n"
      << "seq_len=" << c.seq_len << "\n"
      << "classes=" << c.classes << "\n"
      << "n_bs=" << c.n_bs << "\n"
      << "n_ue=" << c.n_ue << "\n";
    return s.str();
  }
};

class CnnLstmModel final : public PolicyModel {
public:
  explicit CnnLstmModel(const CnnLstmConfig& cfg) : cfg_(cfg), trunk_((cfg.validate(), cfg)),
        head_(static_cast<std::size_t>(cfg.lstm_hidden), cfg.fcl_sizes) {
    std::size_t in = trunk_.features();
    for (int l = 0; l < CnnLstmConfig::kLstmLayers; ++l) {
      lstm_.emplace_back("lstm" + std::to_string(l + 1), in, static_cast<std::size_t>(cfg.lstm_hidden));
      in = static_cast<std::size_t>(cfg.lstm_hidden);
    }
    CounterRng rng{cfg.seed, stream::kInit};
    trunk_.init(rng);
    for (auto& l : lstm_) l.init(rng);
    head_.init(rng);
  }

  Tensor forward(const Batch& b, bool training) override {
    if (b.t != static_cast<std::size_t>(cfg_.seq_len)) throw ConfigError("cnn_lstm: sequence length mismatch");
    n_ = b.n;
    Tensor h = trunk_.forward(b.frames, training).reshaped({b.n, b.t, trunk_.features()});
    for (auto& l : lstm_) h = l.forward(h);
    const std::size_t hid = static_cast<std::size_t>(cfg_.lstm_hidden);
    Tensor last({b.n, hid});
    for (std::size_t n = 0; n < b.n; ++n)
      std::copy_n(&h.data[(n * b.t + b.t - 1) * hid], hid, &last.data[n * hid]);
    return head_.forward(last);
  }

  void backward(const Tensor& dlogits) override {
    const Tensor dlast = head_.backward(dlogits);
    const std::size_t hid = static_cast<std::size_t>(cfg_.lstm_hidden), t = static_cast<std::size_t>(cfg_.seq_len);
    Tensor g({n_, t, hid});
    for (std::size_t n = 0; n < n_; ++n) std::copy_n(&dlast.data[n * hid], hid, &g.data[(n * t + t - 1) * hid]);
    for (std::size_t l = lstm_.size(); l-- > 0;) g = lstm_[l].backward(g);
    trunk_.backward(g.reshaped({n_ * t, trunk_.features()}));
  }

  ParamList params() override {
    ParamList p = trunk_.params();
    for (auto& l : lstm_)
      for (auto* q : l.params()) p.push_back(q);
    for (auto* q : head_.params()) p.push_back(q);
    return p;
  }

  std::vector<std::pair<std::string, Tensor*>> buffers() override {
    std::vector<std::pair<std::string, Tensor*>> b;
    trunk_.buffers(b);
    return b;
  }

  ModelKind kind() const override { return ModelKind::cnn_lstm; }
  const CnnLstmConfig& config() const override { return cfg_; }
  void zero_output_layer() override {
    head_.last().weight.value.fill(0.0);
    head_.last().bias.value.fill(0.0);
  }
  std::size_t trunk_parameter_count() { return ad::parameter_count(trunk_.params()); }

private:
  CnnLstmConfig cfg_;
  CnnTrunk trunk_;
  std::vector<ad::LstmLayer> lstm_;
  FcHead head_;
  std::size_t n_ = 0;
};

/// The same CNN trunk applied to the final frame only, feeding the FCLs.
class CnnOnlyModel final : public PolicyModel {
public:
  explicit CnnOnlyModel(const CnnLstmConfig& cfg)
      : cfg_(cfg), trunk_((cfg.validate(), cfg)), head_(trunk_.features(), cfg.fcl_sizes) {
    CounterRng rng{cfg.seed, stream::kInit};
    trunk_.init(rng);
    head_.init(rng);
  }

  Tensor forward(const Batch& b, bool training) override {
    const std::size_t per = b.frames.size() / (b.n * b.t);
    const Shape& fs = b.frames.shape;
    Tensor last({b.n, fs[1], fs[2], fs[3]});
    for (std::size_t n = 0; n < b.n; ++n)
      std::copy_n(&b.frames.data[(n * b.t + b.t - 1) * per], per, &last.data[n * per]);
    return head_.forward(trunk_.forward(last, training));
  }

  void backward(const Tensor& dlogits) override { trunk_.backward(head_.backward(dlogits)); }

  ParamList params() override {
    ParamList p = trunk_.params();
    for (auto* q : head_.params()) p.push_back(q);
    return p;
  }

  std::vector<std::pair<std::string, Tensor*>> buffers() override {
    std::vector<std::pair<std::string, Tensor*>> b;
    trunk_.buffers(b);
    return b;
  }

  ModelKind kind() const override { return ModelKind::cnn_only; }
  const CnnLstmConfig& config() const override { return cfg_; }
  void zero_output_layer() override {
    head_.last().weight.value.fill(0.0);
    head_.last().bias.value.fill(0.0);
  }
  std::size_t trunk_parameter_count() { return ad::parameter_count(trunk_.params()); }

private:
  CnnLstmConfig cfg_;
  CnnTrunk trunk_;
  FcHead head_;
};

inline std::unique_ptr<PolicyModel> build_cnn_lstm(const CnnLstmConfig& cfg) {
  return std::make_unique<CnnLstmModel>(cfg);
}

inline std::unique_ptr<PolicyModel> build_cnn_only(const CnnLstmConfig& cfg) {
  return std::make_unique<CnnOnlyModel>(cfg);
}

inline std::unique_ptr<PolicyModel> build_model(ModelKind kind, const CnnLstmConfig& cfg) {
  return kind == ModelKind::cnn_lstm ? build_cnn_lstm(cfg) : build_cnn_only(cfg);
}

// ------------------------------------------------------------ inference

/// Index of the largest value; ties go to the lowest index.
inline int argmax_low(std::span<const double> v) {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

/// MCS index for a logit row: argmax + 10, lower index on ties.
inline int mcs_from_logits(std::span<const double> logits) { return argmax_low(logits) + phy::kMinMcs; }

/// Predicted MCS index for every sample, evaluated in inference mode.
inline std::vector<int> predict_all(PolicyModel& model, const Dataset& data, std::size_t batch = 64) {
  std::vector<int> out;
  out.reserve(data.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    idx.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + batch); ++i) idx.push_back(i);
    const Tensor logits = model.forward(make_batch(data, idx), false);
    const std::size_t k = logits.dim(1);
    for (std::size_t n = 0; n < idx.size(); ++n)
      out.push_back(mcs_from_logits(std::span<const double>(&logits.data[n * k], k)));
  }
  return out;
}

inline int predict(PolicyModel& model, const Sample& sample) {
  const Dataset one{sample};
  return predict_all(model, one, 1).front();
}

inline double accuracy(PolicyModel& model, const Dataset& data) {
  if (data.empty()) throw ConfigError("accuracy: empty dataset");
  const auto pred = predict_all(model, data);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) hits += pred[i] == data[i].y + phy::kMinMcs;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

// ------------------------------------------------------------ training

struct TrainReport {
  std::vector<double> loss;
  std::vector<double> train_accuracy;
  std::vector<double> test_accuracy;  // NaN on epochs without evaluation
  std::string checkpoint;

  std::string to_csv() const {
    std::ostringstream s;
    s.precision(10);
    s << "epoch,loss,train_acc,test_acc\n";
    for (std::size_t e = 0; e < loss.size(); ++e) {
      s << e + 1 << "," << loss[e] << "," << train_accuracy[e] << ",";
      if (std::isnan(test_accuracy[e]))
        s << "nan";
      else
        s << test_accuracy[e];
      s << "\n";
    }
    return s.str();
  }
};

/// Seeded Fisher-Yates permutation of 0..n-1.
inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed, std::uint64_t round) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  CounterRng rng{seed, stream::kShuffle, round};
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

/// Splits a permutation into mini-batches; a trailing batch of one sample is
/// merged into the previous batch since batch norm needs two samples.
inline std::vector<std::vector<std::size_t>> minibatches(const std::vector<std::size_t>& order, std::size_t size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < order.size(); s += size)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), s + size)));
  if (out.size() > 1 && out.back().size() < 2) {
    out[out.size() - 2].insert(out[out.size() - 2].end(), out.back().begin(), out.back().end());
    out.pop_back();
  }
  return out;
}

struct TrainHooks {
  /// Called after every epoch with (epoch, report so far).
  std::function<void(int, const TrainReport&)> on_epoch;
};

/// Mini-batch SGD on softmax cross-entropy.
inline TrainReport train_supervised(PolicyModel& model, const Dataset& train, const Dataset& test,
                                    const TrainConfig& tc, const TrainHooks& hooks = {}) {
  tc.validate();
  if (train.size() < 2) throw ConfigError("train_supervised: training split needs at least 2 samples");
  if (test.empty()) throw ConfigError("train_supervised: empty test split");
  const ParamList params = model.params();
  ad::zero_grads(params);
  TrainReport rep;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    const auto order = shuffled_indices(train.size(), tc.seed, static_cast<std::uint64_t>(epoch));
    double loss_sum = 0.0;
    std::size_t hits = 0;
    for (const auto& mb : minibatches(order, static_cast<std::size_t>(tc.batch_size))) {
      const Batch b = make_batch(train, mb);
      const Tensor logits = model.forward(b, true);
      const auto lg = ad::softmax_ce(logits, b.labels);
      loss_sum += lg.loss * static_cast<double>(b.n);
      for (std::size_t n = 0; n < b.n; ++n)
        hits += argmax_low(std::span<const double>(&logits.data[n * logits.dim(1)], logits.dim(1))) == b.labels[n];
      model.backward(lg.grad);
      ad::sgd_step(params, tc.learning_rate);
    }
    if (!std::isfinite(loss_sum)) throw NumericError("training diverged: non-finite loss");
    rep.loss.push_back(loss_sum / static_cast<double>(train.size()));
    rep.train_accuracy.push_back(static_cast<double>(hits) / static_cast<double>(train.size()));
    const bool eval = (epoch + 1) % tc.eval_every == 0 || epoch + 1 == tc.epochs;
    rep.test_accuracy.push_back(eval ? accuracy(model, test) : std::nan(""));
    if (hooks.on_epoch) hooks.on_epoch(epoch + 1, rep);
  }
  return rep;
}

// ------------------------------------------------------------ persistence

inline void save_model(PolicyModel& model, const std::string& checkpoint_path) {
  ad::save_checkpoint(checkpoint_path, model.state());
  std::ofstream d(checkpoint_path + ".arch");
  if (!d) throw DataError("cannot write " + checkpoint_path + ".arch");
  d << model.descriptor();
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Loads a checkpoint into a freshly built model; the sidecar descriptor
/// must match the one the configuration produces.
inline std::unique_ptr<PolicyModel> load_model(ModelKind kind, const CnnLstmConfig& cfg, const std::string& path) {
  auto model = build_model(kind, cfg);
  const std::string arch = read_text(path + ".arch");
  if (arch != model->descriptor())
    throw ConfigError("architecture descriptor of " + path + " does not match the configuration");
  model->load_state(ad::load_checkpoint(path));
  return model;
}

}  // namespace amc::models
