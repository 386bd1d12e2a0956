#pragma once

// Cross-policy evaluation on a shared test split: accuracies, confusion
// matrices, per-scenario breakdowns and CSV / text emission.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "amc/error.hpp"
#include "amc/models.hpp"
#include "amc/phy.hpp"

namespace amc::eval {

using Confusion = std::array<std::array<std::uint64_t, phy::kNumMcs>, phy::kNumMcs>;  // [true][predicted]

struct Proportion {
  std::uint64_t hits = 0;
  std::uint64_t n = 0;
  double value() const { return n ? static_cast<double>(hits) / static_cast<double>(n) : 0.0; }
};

struct PolicyResult {
  std::string name;
  std::vector<int> predictions;  // MCS indices, one per test sample
  Proportion overall;
  Confusion confusion{};
  std::map<std::string, Proportion> per_scenario;

  double accuracy() const { return overall.value(); }
};

struct ComparisonReport {
  std::vector<PolicyResult> policies;
  std::uint64_t test_checksum = 0;
  std::uint64_t test_size = 0;
  std::map<std::string, std::string> metadata;

  const PolicyResult& policy(const std::string& name) const {
    for (const auto& p : policies)
      if (p.name == name) return p;
    throw ConfigError("report has no policy '" + name + "'");
  }
};

/// Scores one policy's predictions against the test labels.
inline PolicyResult score_policy(const std::string& name, std::vector<int> predictions, const models::Dataset& test,
                                 const std::function<std::string(const models::Sample&)>& scenario_of = {}) {
  if (predictions.size() != test.size()) throw ConfigError("policy '" + name + "' predicted the wrong number of samples");
  PolicyResult r;
  r.name = name;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const int p = predictions[i];
    if (p < phy::kMinMcs || p > phy::kMaxMcs) throw DomainError("policy '" + name + "' predicted MCS outside [10, 24]");
    const int y = test[i].y;
    const bool hit = p == y + phy::kMinMcs;
    r.overall.hits += hit;
    ++r.overall.n;
    ++r.confusion[static_cast<std::size_t>(y)][static_cast<std::size_t>(p - phy::kMinMcs)];
    if (scenario_of) {
      auto& s = r.per_scenario[scenario_of(test[i])];
      s.hits += hit;
      ++s.n;
    }
  }
  r.predictions = std::move(predictions);
  return r;
}

/// Predictions from an arbitrary per-sample policy.
inline std::vector<int> predict_with(const std::function<int(const models::Sample&)>& policy, const models::Dataset& test) {
  std::vector<int> out;
  out.reserve(test.size());
  for (const auto& s : test) out.push_back(policy(s));
  return out;
}

/// Builds the report for policies that were all run on the same test split.
inline ComparisonReport compare_policies(const std::vector<std::pair<std::string, std::vector<int>>>& predictions,
                                         const models::Dataset& test, std::uint64_t test_checksum,
                                         const std::function<std::string(const models::Sample&)>& scenario_of = {}) {
  if (test.empty()) throw ConfigError("compare_policies: empty test split");
  ComparisonReport rep;
  rep.test_checksum = test_checksum;
  rep.test_size = test.size();
  for (const auto& [name, pred] : predictions) rep.policies.push_back(score_policy(name, pred, test, scenario_of));
  return rep;
}

inline double confusion_accuracy(const Confusion& c) {
  std::uint64_t trace = 0, total = 0;
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t j = 0; j < c.size(); ++j) {
      total += c[i][j];
      if (i == j) trace += c[i][j];
    }
  return total ? static_cast<double>(trace) / static_cast<double>(total) : 0.0;
}

// ------------------------------------------------------------ statistics

/// Half-width of the normal-approximation 95% interval of a proportion.
inline double binomial_ci95(double p, std::uint64_t n) {
  if (n == 0) return 0.0;
  return 1.959963984540054 * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

struct Delta {
  double delta = 0.0;
  double ci95 = 0.0;  // half-width
  std::uint64_t n = 0;
};

/// Accuracy difference a - b on a common test set; the interval treats the
/// two accuracies as independent binomial estimates.
inline Delta accuracy_delta(const Proportion& a, const Proportion& b) {
  Delta d;
  d.n = std::min(a.n, b.n);
  const double pa = a.value(), pb = b.value();
  d.delta = pa - pb;
  d.ci95 = 1.959963984540054 * std::sqrt(pa * (1.0 - pa) / static_cast<double>(std::max<std::uint64_t>(a.n, 1)) +
                                          pb * (1.0 - pb) / static_cast<double>(std::max<std::uint64_t>(b.n, 1)));
  return d;
}

/// accuracy(cnn_lstm) - accuracy(cnn_only), optionally restricted to a
/// subset of scenario names.
inline Delta lstm_ablation_delta(const ComparisonReport& rep, const std::vector<std::string>& scenarios = {}) {
  auto pick = [&](const PolicyResult& r) {
    if (scenarios.empty()) return r.overall;
    Proportion p;
    for (const auto& s : scenarios) {
      const auto it = r.per_scenario.find(s);
      if (it == r.per_scenario.end()) continue;
      p.hits += it->second.hits;
      p.n += it->second.n;
    }
    return p;
  };
  return accuracy_delta(pick(rep.policy("cnn_lstm")), pick(rep.policy("cnn_only")));
}

/// "a is at least b": either a >= b outright, or the shortfall is at most
/// `slack` and lies inside the 95% interval of the difference.
inline bool at_least(const Proportion& a, const Proportion& b, double slack = 0.01) {
  const Delta d = accuracy_delta(a, b);
  if (d.delta >= 0.0) return true;
  return d.delta >= -slack && -d.delta <= d.ci95;
}

// ------------------------------------------------------------ emission

inline std::string comparison_csv(const ComparisonReport& rep) {
  std::ostringstream s;
  s.precision(10);
  s << "policy,accuracy,n\n";
  for (const auto& p : rep.policies) s << p.name << "," << p.accuracy() << "," << p.overall.n << "\n";
  return s.str();
}

inline std::string confusion_csv(const Confusion& c) {
  std::ostringstream s;
  s << "true\\pred";
  for (int j = 0; j < phy::kNumMcs; ++j) s << "," << phy::kMinMcs + j;
  s << "\n";
  for (int i = 0; i < phy::kNumMcs; ++i) {
    s << phy::kMinMcs + i;
    for (int j = 0; j < phy::kNumMcs; ++j) s << "," << c[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    s << "\n";
  }
  return s.str();
}

inline std::string per_scenario_csv(const ComparisonReport& rep) {
  std::ostringstream s;
  s.precision(10);
  s << "policy,scenario,accuracy,n\n";
  for (const auto& p : rep.policies)
    for (const auto& [sc, prop] : p.per_scenario) s << p.name << "," << sc << "," << prop.value() << "," << prop.n << "\n";
  return s.str();
}

inline std::string report_text(const ComparisonReport& rep) {
  std::ostringstream s;
  s.precision(10);
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(rep.test_checksum));
  s << "test_size=" << rep.test_size << "\n" << "test_checksum=" << hex << "\n";
  for (const auto& [k, v] : rep.metadata) s << k << "=" << v << "\n";
  for (const auto& p : rep.policies) {
    s << "policy." << p.name << ".accuracy=" << p.accuracy() << "\n";
    s << "policy." << p.name << ".ci95=" << binomial_ci95(p.accuracy(), p.overall.n) << "\n";
  }
  bool has_lstm = false, has_cnn = false;
  for (const auto& p : rep.policies) {
    has_lstm |= p.name == "cnn_lstm";
    has_cnn |= p.name == "cnn_only";
  }
  if (has_lstm && has_cnn) {
    const Delta d = lstm_ablation_delta(rep);
    s << "lstm_ablation.delta=" << d.delta << "\n" << "lstm_ablation.ci95=" << d.ci95 << "\n";
  }
  return s.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
  if (!out) throw DataError("write failed for " + path.string());
}

/// comparison.csv, confusion_<policy>.csv, per_scenario.csv, report.txt.
inline void write_report(const ComparisonReport& rep, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / "comparison.csv", comparison_csv(rep));
  for (const auto& p : rep.policies) write_file(dir / ("confusion_" + p.name + ".csv"), confusion_csv(p.confusion));
  write_file(dir / "per_scenario.csv", per_scenario_csv(rep));
  write_file(dir / "report.txt", report_text(rep));
}

/// Training curves as CSV (epoch,loss,train_acc,test_acc).
inline std::string training_curves(const models::TrainReport& r) { return r.to_csv(); }

}  // namespace amc::eval
