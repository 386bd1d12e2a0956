#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "amc/channel.hpp"
#include "amc/phy.hpp"
#include "oracles.hpp"

using namespace amc;
using namespace amc::phy;

namespace {

channel::ChannelFrame random_frame(std::uint64_t seed, int n_bs = 32, int n_ue = 4) {
  channel::ChannelFrame h(n_bs, n_ue);
  CounterRng rng{seed, 99};
  for (std::size_t i = 0; i < h.re.size(); ++i) {
    h.re[i] = rng.normal();
    h.im[i] = rng.normal();
  }
  return h;
}

}  // namespace

TEST(ZeroForcing, NullsInterUserInterference) {
  for (std::uint64_t s = 1; s <= 5; ++s) {
    const auto h = random_frame(s);
    const Eigen::MatrixXcd g = downlink_channel(h);
    const Eigen::MatrixXcd gw = g * zf_precoder(g);
    EXPECT_LT((gw - Eigen::MatrixXcd::Identity(4, 4)).norm(), 1e-10);
  }
}

TEST(ZeroForcing, SinrMatchesGramInverseDiagonal) {
  LinkConfig link;
  const auto h = random_frame(3);
  const Eigen::MatrixXcd g = downlink_channel(h);
  const Eigen::MatrixXcd gram_inv = (g * g.adjoint()).inverse();
  const auto s = post_zf_sinr(h, link);
  for (int k = 0; k < 4; ++k)
    EXPECT_NEAR(s[k], link.tx_power / (4 * link.noise_power * gram_inv(k, k).real()), 1e-9 * s[k]);
}

TEST(ZeroForcing, SinrScalesWithSquaredGain) {
  LinkConfig link;
  const auto h = random_frame(11);
  const auto s1 = post_zf_sinr(h, link);
  const auto s2 = post_zf_sinr(h.scaled(3.0), link);
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(s2[k] / s1[k], 9.0, 1e-9);
}

TEST(ZeroForcing, RankDeficientChannelIsRejected) {
  auto h = random_frame(5);
  for (int m = 0; m < h.n_bs; ++m) h.set(m, 3, h.at(m, 1) * 2.0);
  EXPECT_THROW(post_zf_sinr(h, LinkConfig{}), SingularChannelError);
  EXPECT_THROW(zf_precoder(random_frame(1, 3, 4)), SingularChannelError);
}

TEST(QamBer, QpskIsTheGaussianTail) {
  for (double snr : {0.5, 1.0, 4.0, 10.0}) EXPECT_NEAR(qam_ber_uncoded(snr, 4), q_function(std::sqrt(snr)), 1e-15);
}

TEST(QamBer, MatchesTransitionSumOracle) {
  for (int m : {4, 16, 64, 256})
    for (double db = -5.0; db <= 35.0; db += 2.5) {
      const double snr = from_db(db);
      const double ref = oracle::qam_ber(snr, m);
      EXPECT_NEAR(qam_ber_uncoded(snr, m), ref, 1e-12 + 1e-9 * ref) << "M=" << m << " snr_db=" << db;
    }
}

TEST(QamBer, ApproachesNearestNeighbourAtHighSnr) {
  for (int m : {16, 64, 256}) {
    const double snr = from_db(10.0 * std::log10(m) + 18.0);
    EXPECT_NEAR(qam_ber_uncoded(snr, m) / qam_ber_nearest_neighbour(snr, m), 1.0, 0.02) << m;
  }
}

TEST(QamBer, DecreasesWithSnr) {
  for (int m : {4, 16, 64, 256}) {
    double prev = 1.0;
    for (double db = -10.0; db <= 40.0; db += 0.25) {
      const double b = qam_ber_uncoded(from_db(db), m);
      EXPECT_LE(b, prev);
      prev = b;
    }
  }
}

TEST(QamBer, MonteCarloWithinThreeStandardErrors) {
  const std::uint64_t bits = 1'200'000;
  for (int m : {4, 16, 64, 256})
    for (double db : {4.0, 12.0, 20.0}) {
      const double snr = from_db(db + (m == 256 ? 6.0 : 0.0));
      const auto mc = monte_carlo_ber_stats(snr, m, bits, 2024 + m);
      const double a = qam_ber_uncoded(snr, m);
      if (mc.errors < 20) continue;  // too few events for a normal approximation
      EXPECT_LE(std::abs(mc.ber - a), 3.0 * mc.std_error) << "M=" << m << " snr_db=" << db;
    }
}

TEST(QamBer, MonteCarloIsSeedDeterministic) {
  EXPECT_EQ(monte_carlo_ber_stats(3.0, 16, 100000, 7).errors, monte_carlo_ber_stats(3.0, 16, 100000, 7).errors);
}

TEST(QamBer, RejectsUnsupportedOrder) {
  EXPECT_THROW(qam_ber_uncoded(1.0, 32), DomainError);
  EXPECT_THROW(qam_ber_uncoded(-1.0, 16), DomainError);
}

TEST(McsTable, BuiltinMatchesStandardRows) {
  const auto t = default_mcs_table();
  ASSERT_EQ(t.size(), 15u);
  for (int i = 0; i < 15; ++i) {
    const auto& e = t.at_index(10 + i);
    EXPECT_EQ(e.modulation_order, oracle::mcs_rows()[i].first);
    EXPECT_DOUBLE_EQ(e.code_rate, oracle::mcs_rows()[i].second / 1024.0);
  }
}

TEST(McsTable, CsvResourceEqualsBuiltin) {
  const auto csv = load_mcs_table(std::string(AMC_DATA_DIR) + "/mcs_table2.csv");
  const auto builtin = default_mcs_table();
  EXPECT_EQ(csv.checksum(), builtin.checksum());
  for (int i = 10; i <= 24; ++i) EXPECT_DOUBLE_EQ(csv.at_index(i).code_rate, builtin.at_index(i).code_rate);
}

TEST(McsTable, RejectsMalformedTables) {
  std::istringstream no_header("10,16,0.64\n");
  EXPECT_THROW(load_mcs_table(no_header), DataError);
  std::istringstream short_table("index,modulation_order,code_rate\n10,16,0.64\n");
  EXPECT_THROW(load_mcs_table(short_table), DataError);
  EXPECT_THROW(load_mcs_table(std::string("/nonexistent/table.csv")), DataError);
}

TEST(Oracle, NondecreasingAndInRange) {
  const auto t = default_mcs_table();
  LinkConfig link;
  int prev = kMinMcs;
  for (int i = 0; i < 200; ++i) {
    const double db = -10.0 + 50.0 * i / 199.0;
    const int m = oracle_mcs(from_db(db), t, link);
    EXPECT_GE(m, kMinMcs);
    EXPECT_LE(m, kMaxMcs);
    EXPECT_GE(m, prev);
    prev = m;
  }
}

TEST(Oracle, MatchesBruteForceOnGrid) {
  const auto t = default_mcs_table();
  LinkConfig link;
  for (int i = 0; i < 400; ++i) {
    const double sinr = from_db(-10.0 + 50.0 * i / 399.0);
    EXPECT_EQ(oracle_mcs(sinr, t, link), oracle::best_mcs(sinr)) << to_db(sinr);
  }
}

TEST(Oracle, ExtremesHitTableEnds) {
  const auto t = default_mcs_table();
  EXPECT_EQ(oracle_mcs(from_db(-20.0), t, LinkConfig{}), 10);
  EXPECT_EQ(oracle_mcs(from_db(60.0), t, LinkConfig{}), 24);
  EXPECT_THROW(oracle_mcs(0.0, t, LinkConfig{}), DomainError);
}

TEST(Oracle, CodingGainShiftsEffectiveSnr) {
  LinkConfig link;
  EXPECT_NEAR(effective_snr_db(from_db(10.0), 0.5, link), 13.0, 1e-12);
  link.coding_gain_coeff_db = 0.0;
  EXPECT_NEAR(effective_snr_db(from_db(10.0), 0.5, link), 10.0, 1e-12);
}

TEST(Oracle, LabelFrameIsPerUser) {
  const auto h = random_frame(17);
  const auto labels = label_frame(h, default_mcs_table(), LinkConfig{});
  const auto s = post_zf_sinr(h, LinkConfig{});
  ASSERT_EQ(labels.size(), 4u);
  for (int k = 0; k < 4; ++k) EXPECT_EQ(labels[k], oracle::best_mcs(s[k]));
}
