#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "amc/channel.hpp"
#include "amc/models.hpp"

using namespace amc;
using namespace amc::models;

namespace {

CnnLstmConfig small_config() {
  CnnLstmConfig c;
  c.n_bs = 8;
  c.growth_channels = 4;
  c.lstm_hidden = 16;
  c.fcl_sizes = {32, 16, 15};
  return c;
}

Tensor noise(Shape s, std::uint64_t seed, double scale = 1.0) {
  Tensor t(std::move(s));
  CounterRng rng{seed, 3};
  for (auto& v : t.data) v = scale * rng.normal();
  return t;
}

std::vector<channel::ChannelFrame> frames(std::uint64_t seed, int t_len = 3) {
  channel::ScenarioConfig c;
  c.master_seed = seed;
  return channel::gen_sequence(c, t_len);
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("amc_models_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Two classes whose inputs differ by the sign of a fixed pattern.
Dataset two_class_set(std::size_t n, std::uint64_t seed, const CnnLstmConfig& cfg) {
  const Shape shape{std::size_t(cfg.seq_len), 2, std::size_t(cfg.n_bs), std::size_t(cfg.n_ue)};
  const Tensor pattern = noise(shape, 1);
  Dataset d(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int cls = static_cast<int>(i % 2);
    d[i].x = noise(shape, seed * 1000 + i, 0.5);
    for (std::size_t j = 0; j < pattern.size(); ++j) d[i].x.data[j] += (cls ? 1.0 : -1.0) * pattern.data[j];
    d[i].y = cls ? 9 : 2;
  }
  return d;
}

}  // namespace

TEST(NormalizeSample, RejectsAllZeroFrames) {
  std::vector<channel::ChannelFrame> z(3, channel::ChannelFrame(32, 4));
  EXPECT_THROW(normalize_sample(z, 3), DataError);
  EXPECT_THROW(normalize_sample(frames(1, 2), 3), ConfigError);
}

TEST(NormalizeSample, UnitRmsAndScaleInvariant) {
  const auto f = frames(5);
  const auto a = normalize_sample(f, 3);
  double ss = 0.0;
  for (double v : a.x.data) ss += v * v;
  EXPECT_NEAR(ss / a.x.size(), 1.0, 1e-12);

  std::vector<channel::ChannelFrame> scaled;
  for (const auto& h : f) scaled.push_back(h.scaled(7.5));
  const auto b = normalize_sample(scaled, 3);
  EXPECT_NEAR(b.scale / a.scale, 7.5, 1e-12);
  for (std::size_t i = 0; i < a.x.size(); ++i) EXPECT_NEAR(a.x.data[i], b.x.data[i], 1e-12);
}

TEST(NormalizeSample, RotatesTargetUserToColumnZero) {
  const auto f = frames(6, 1);
  const auto a = normalize_sample(f, 1, 0);
  const auto b = normalize_sample(f, 1, 2);
  for (int plane = 0; plane < 2; ++plane)
    for (int m = 0; m < 32; ++m)
      for (int k = 0; k < 4; ++k)
        EXPECT_DOUBLE_EQ(b.x.data[(plane * 32 + m) * 4 + k], a.x.data[(plane * 32 + m) * 4 + (k + 2) % 4]);
}

TEST(Predict, TieBreaksTowardLowerIndex) {
  std::vector<double> v(15, 0.0);
  v[0] = 1.0;
  EXPECT_EQ(mcs_from_logits(v), 10);
  v.assign(15, -1.0);
  v[3] = v[7] = 2.0;
  EXPECT_EQ(mcs_from_logits(v), 13);
  v.assign(15, 0.0);
  EXPECT_EQ(mcs_from_logits(v), 10);
}

TEST(Models, ShapesAndParameterBudget) {
  CnnLstmConfig cfg;
  auto lstm = build_cnn_lstm(cfg);
  auto cnn = build_cnn_only(cfg);
  Dataset d(2);
  for (auto& s : d) s.x = noise({3, 2, 32, 4}, 9);
  const std::vector<std::size_t> idx{0, 1};
  EXPECT_EQ(lstm->forward(make_batch(d, idx), false).shape, (Shape{2, 15}));
  EXPECT_EQ(cnn->forward(make_batch(d, idx), false).shape, (Shape{2, 15}));
  EXPECT_LE(lstm->parameter_count(), 1'000'000u);
  EXPECT_EQ(dynamic_cast<CnnLstmModel&>(*lstm).trunk_parameter_count(),
            dynamic_cast<CnnOnlyModel&>(*cnn).trunk_parameter_count());
  EXPECT_GT(lstm->parameter_count(), cnn->parameter_count());
}

TEST(Models, CnnOnlyUsesFinalFrameOnly) {
  auto cnn = build_cnn_only(small_config());
  Dataset d(2);
  d[0].x = noise({3, 2, 8, 4}, 10);
  d[1].x = d[0].x;
  for (std::size_t i = 0; i < 2 * 8 * 4 * 2; ++i) d[1].x.data[i] += 1.0;  // perturb frames 0 and 1
  const std::vector<std::size_t> i0{0}, i1{1};
  const auto a = cnn->forward(make_batch(d, i0), false), b = cnn->forward(make_batch(d, i1), false);
  EXPECT_EQ(a.data, b.data);
}

TEST(Models, InvalidConfigRejected) {
  auto cfg = small_config();
  cfg.fcl_sizes = {32, 16, 10};
  EXPECT_THROW(build_cnn_lstm(cfg), ConfigError);
  cfg = small_config();
  cfg.kernel = 2;
  EXPECT_THROW(build_cnn_only(cfg), ConfigError);
}

TEST(Train, MemorizesSixtyFourCopies) {
  CnnLstmConfig cfg;
  auto model = build_cnn_lstm(cfg);
  Dataset one(1);
  one[0].x = normalize_sample(frames(11), 3).x;
  one[0].y = 6;
  Dataset train(64, one[0]);
  TrainConfig tc;
  tc.epochs = 20;
  tc.learning_rate = 0.05;
  const auto rep = train_supervised(*model, train, one, tc);
  EXPECT_DOUBLE_EQ(rep.train_accuracy.back(), 1.0);
  for (std::size_t e = 3; e < rep.loss.size(); ++e) EXPECT_LE(rep.loss[e], rep.loss[e - 1] + 1e-12) << e;
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  const auto cfg = small_config();
  auto model = build_cnn_lstm(cfg);
  const auto before = model->params();
  std::vector<std::vector<double>> values;
  for (auto* p : before) values.push_back(p->value.data);
  TrainConfig tc;
  tc.epochs = 2;
  tc.learning_rate = 0.0;
  const auto data = two_class_set(20, 2, cfg);
  train_supervised(*model, data, data, tc);
  const auto after = model->params();
  for (std::size_t i = 0; i < after.size(); ++i) EXPECT_EQ(after[i]->value.data, values[i]) << after[i]->name;
}

TEST(Train, SeparableToySetIsLearned) {
  const auto cfg = small_config();
  auto model = build_cnn_lstm(cfg);
  TrainConfig tc;
  tc.epochs = 50;
  tc.learning_rate = 0.05;
  tc.eval_every = 50;
  const auto rep = train_supervised(*model, two_class_set(128, 3, cfg), two_class_set(64, 4, cfg), tc);
  EXPECT_GE(rep.test_accuracy.back(), 0.95);
  EXPECT_TRUE(std::isnan(rep.test_accuracy.front()));
}

TEST(Train, BitExactGivenSeeds) {
  const auto cfg = small_config();
  const auto train = two_class_set(40, 5, cfg), test = two_class_set(10, 6, cfg);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 16;
  tc.learning_rate = 0.05;
  auto a = build_cnn_only(cfg), b = build_cnn_only(cfg);
  EXPECT_EQ(train_supervised(*a, train, test, tc).to_csv(), train_supervised(*b, train, test, tc).to_csv());
  EXPECT_EQ(ad::checkpoint_bytes(a->state()), ad::checkpoint_bytes(b->state()));
}

TEST(Train, EmptySplitsRejected) {
  const auto cfg = small_config();
  auto model = build_cnn_only(cfg);
  const auto data = two_class_set(4, 7, cfg);
  EXPECT_THROW(train_supervised(*model, data, {}, TrainConfig{}), ConfigError);
  EXPECT_THROW(train_supervised(*model, {}, data, TrainConfig{}), ConfigError);
}

TEST(Train, ShuffleIsAPermutationAndBatchesCoverIt) {
  const auto idx = shuffled_indices(130, 1, 0);
  auto sorted = idx;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);
  EXPECT_NE(idx, shuffled_indices(130, 1, 1));
  const auto mb = minibatches(idx, 64);
  ASSERT_EQ(mb.size(), 3u);
  EXPECT_EQ(mb[2].size(), 2u);
  EXPECT_EQ(minibatches(shuffled_indices(129, 1, 0), 64).back().size(), 65u);
}

TEST(Accuracy, ConstantPredictorOnBalancedSet) {
  const auto cfg = small_config();
  auto model = build_cnn_only(cfg);
  model->zero_output_layer();
  Dataset d(30);
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i].x = noise({3, 2, 8, 4}, 40 + i);
    d[i].y = static_cast<int>(i % 15);
  }
  EXPECT_NEAR(accuracy(*model, d), 1.0 / 15.0, 1e-12);
  for (int p : predict_all(*model, d)) EXPECT_EQ(p, 10);
}

TEST(Accuracy, MatchesIndependentRecount) {
  const auto cfg = small_config();
  auto model = build_cnn_lstm(cfg);
  Dataset d(37);
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i].x = noise({3, 2, 8, 4}, 80 + i);
    d[i].y = static_cast<int>((i * 7) % 15);
  }
  int hits = 0;
  for (const auto& s : d) hits += predict(*model, s) == s.y + 10;
  EXPECT_DOUBLE_EQ(accuracy(*model, d), hits / 37.0);
}

TEST(Checkpoint, SaveLoadPredictsIdentically) {
  const auto cfg = small_config();
  auto model = build_cnn_lstm(cfg);
  TrainConfig tc;
  tc.epochs = 1;
  tc.learning_rate = 0.05;
  train_supervised(*model, two_class_set(32, 8, cfg), two_class_set(8, 9, cfg), tc);
  const auto dir = temp_dir("roundtrip");
  const std::string path = (dir / "m.amcw").string();
  save_model(*model, path);
  auto loaded = load_model(ModelKind::cnn_lstm, cfg, path);
  const auto probe = two_class_set(100, 10, cfg);
  EXPECT_EQ(predict_all(*model, probe), predict_all(*loaded, probe));
  EXPECT_EQ(ad::checkpoint_bytes(loaded->state()), ad::checkpoint_bytes(model->state()));
}

TEST(Checkpoint, DescriptorMismatchIsAConfigError) {
  const auto cfg = small_config();
  auto model = build_cnn_lstm(cfg);
  const auto dir = temp_dir("mismatch");
  const std::string path = (dir / "m.amcw").string();
  save_model(*model, path);
  auto other = cfg;
  other.lstm_hidden = 8;
  EXPECT_THROW(load_model(ModelKind::cnn_lstm, other, path), ConfigError);
  EXPECT_THROW(load_model(ModelKind::cnn_only, cfg, path), ConfigError);
}

TEST(Predict, InvariantToChannelScaling) {
  CnnLstmConfig cfg;
  auto model = build_cnn_lstm(cfg);
  const auto f = frames(12);
  std::vector<channel::ChannelFrame> scaled;
  for (const auto& h : f) scaled.push_back(h.scaled(0.01));
  Sample a, b;
  a.x = normalize_sample(f, 3).x;
  b.x = normalize_sample(scaled, 3).x;
  EXPECT_EQ(predict(*model, a), predict(*model, b));
}
