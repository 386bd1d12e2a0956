// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero when any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "amc/baselines.hpp"
#include "amc/datastore.hpp"
#include "amc/evalreport.hpp"
#include "amc/models.hpp"
#include "amc/phy.hpp"
#include "gradient_suite.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace amc;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void verdict(int id, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::printf("criterion %d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

void progress(const std::string& msg) { std::cerr << "[acceptance] " << msg << std::endl; }

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch() {
  static const fs::path d = [] {
    const auto p = fs::temp_directory_path() / "amc_acceptance";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return d;
}

// ------------------------------------------------------------ 1

void gradients() {
  const auto t0 = Clock::now();
  bool ok = true;
  double worst_layer = 0.0, worst_composite = 0.0;
  for (const auto& c : gradsuite::all()) {
    const bool composite = c.name == "cnn_lstm" || c.name == "cnn_only";
    const double tol = composite ? 1e-4 : 1e-5;
    ok &= c.report.checked > 0 && c.report.max_rel_error <= tol;
    (composite ? worst_composite : worst_layer) =
        std::max(composite ? worst_composite : worst_layer, c.report.max_rel_error);
    if (c.report.max_rel_error > tol) progress("gradient check failed: " + c.name + " " + c.report.worst);
  }
  const double secs = seconds_since(t0);
  verdict(1, ok && secs < 60.0,
          fmt("max rel err layers %.2e composite %.2e, %.1f s", worst_layer, worst_composite, secs));
}

// ------------------------------------------------------------ 2

void ber_agreement() {
  const auto t0 = Clock::now();
  const std::uint64_t bits = 10'000'000;
  bool ok = true;
  double worst_z = 0.0;
  int points = 0;
  for (int m : {4, 16, 64, 256})
    for (double db : {0.0, 5.0, 10.0, 15.0, 20.0, 25.0}) {
      const double snr = phy::from_db(db);
      const std::uint64_t n = bits - bits % static_cast<std::uint64_t>(std::log2(m));
      const auto mc = phy::monte_carlo_ber_stats(snr, m, n, 1000 + static_cast<std::uint64_t>(m) * 100 + static_cast<std::uint64_t>(db));
      const double analytic = phy::qam_ber_uncoded(snr, m);
      ++points;
      if (mc.errors == 0) {
        // no observed errors: consistent while fewer than 3 are expected
        ok &= analytic * static_cast<double>(n) < 3.0;
        continue;
      }
      const double z = std::abs(mc.ber - analytic) / mc.std_error;
      worst_z = std::max(worst_z, z);
      if (z > 3.0) progress(fmt("BER disagreement M=%g snr=%g dB z=%.2f", m, db, z));
      ok &= z <= 3.0;
    }
  const double secs = seconds_since(t0);
  verdict(2, ok && points == 24 && secs < 300.0, fmt("%g points, worst |z| %.2f, %.1f s", points, worst_z, secs));
}

// ------------------------------------------------------------ 3

void label_monotonicity() {
  const auto table = phy::default_mcs_table();
  const phy::LinkConfig link;
  bool mono = true, range = true, brute = true;
  int prev = phy::kMinMcs;
  for (int i = 0; i < 200; ++i) {
    const double sinr = phy::from_db(-10.0 + 50.0 * i / 199.0);
    const int m = phy::oracle_mcs(sinr, table, link);
    mono &= m >= prev;
    range &= m >= 10 && m <= 24;
    brute &= m == oracle::best_mcs(sinr, link.ber_threshold, link.coding_gain_coeff_db);
    prev = m;
  }
  verdict(3, mono && range && brute,
          std::string("nondecreasing=") + (mono ? "yes" : "no") + " in_range=" + (range ? "yes" : "no") +
              " brute_force_match=" + (brute ? "yes" : "no"));
}

// ------------------------------------------------------------ 4

void histogram_shape() {
  channel::ScenarioConfig base;
  base.master_seed = 4;
  const auto cat = data::default_catalog(base);
  std::vector<channel::ScenarioConfig> pick;
  for (const auto& c : cat)
    if (c.tag().ends_with("static_one_cluster") || c.tag().ends_with("mobile_random_placement")) pick.push_back(c);
  data::GenerateOptions opt;
  opt.frames_per_scenario = 1000;
  const auto f = data::generate_dataset(pick, opt);
  data::Histogram one{}, mob{};
  for (const auto& r : f.records) {
    const auto tag = f.manifest.scenario(r.scenario_id).cfg.tag();
    auto& h = tag.ends_with("one_cluster") ? one : mob;
    ++h[static_cast<std::size_t>(r.label - phy::kMinMcs)];
  }
  bool labels_ok = true;
  for (const auto& r : f.records) labels_ok &= r.label >= 10 && r.label <= 24;
  const int mode = data::histogram_mode(one);
  const double v_one = data::histogram_variance(one), v_mob = data::histogram_variance(mob);
  verdict(4, labels_ok && mode == 10 && v_mob > v_one,
          fmt("static one_cluster mode %g (share %.2f), variance mobile_random %.2f > static_one_cluster %.2f", mode,
              static_cast<double>(one[0]) / static_cast<double>(std::accumulate(one.begin(), one.end(), std::uint64_t{0})),
              v_mob, v_one));
}

// ------------------------------------------------------------ 5, 6, 7, 9

struct DeskRun {
  data::DatasetFile file;
  models::Dataset train, test;
  std::unique_ptr<models::PolicyModel> cnn_lstm;
  std::unique_ptr<baselines::QNet> dqn;
  models::CnnLstmConfig model_cfg;
};

DeskRun desk_scale() {
  DeskRun run;
  const auto t0 = Clock::now();
  channel::ScenarioConfig base;
  base.master_seed = 1;
  data::GenerateOptions opt;
  opt.frames_per_scenario = 85;  // 12 x 83 windows x 4 users = 3984 records
  run.file = data::generate_dataset(data::default_catalog(base), opt);
  const auto [tr, te] = data::split_dataset(run.file, opt.train_fraction, opt.split_seed);
  run.train = data::to_samples(run.file, tr);
  run.test = data::to_samples(run.file, te);
  progress("dataset: " + std::to_string(run.file.records.size()) + " records, train " + std::to_string(run.train.size()) +
           ", test " + std::to_string(run.test.size()));

  models::TrainConfig tc;
  tc.learning_rate = 0.05;
  tc.epochs = 50;
  tc.eval_every = 10;
  models::TrainHooks hooks;
  std::string current;
  hooks.on_epoch = [&](int e, const models::TrainReport& r) {
    if (e % 10 == 0)
      progress(current + " epoch " + std::to_string(e) + fmt(" loss %.4f train %.3f test %.3f (%.0f s)", r.loss.back(),
                                                            r.train_accuracy.back(), r.test_accuracy.back(),
                                                            seconds_since(t0)));
  };

  current = "cnn_lstm";
  run.cnn_lstm = models::build_cnn_lstm(run.model_cfg);
  models::train_supervised(*run.cnn_lstm, run.train, run.test, tc, hooks);
  current = "cnn_only";
  auto cnn_only = models::build_cnn_only(run.model_cfg);
  models::train_supervised(*cnn_only, run.train, run.test, tc, hooks);

  baselines::DqnConfig dc;
  dc.learning_rate = 1e-4;
  dc.episodes = 50;
  dc.epsilon_decay_steps = static_cast<std::int64_t>(run.train.size()) * dc.episodes / 2;
  run.dqn = std::make_unique<baselines::QNet>(run.train.front().x.size(), dc.seed);
  baselines::DqnHooks dh;
  dh.on_episode = [&](int e, const baselines::DqnReport& r) {
    if (e % 10 == 0)
      progress("dqn episode " + std::to_string(e) +
               fmt(" loss %.2f reward %.2f (%.0f s)", r.loss.back(), r.mean_reward.back(), seconds_since(t0)));
  };
  baselines::dqn_train(*run.dqn, run.train, dc, dh);

  const phy::LinkConfig link = opt.link;
  const auto lut = baselines::calibrate_lut(run.train, baselines::LutInput::single_user_snr, link);
  const auto lut_zf = baselines::calibrate_lut(run.train, baselines::LutInput::post_zf_sinr, link);
  auto lut_policy = [&](const baselines::LutThresholds& t, baselines::LutInput in) {
    return eval::predict_with(
        [&](const models::Sample& s) { return baselines::lut_predict(t, baselines::lut_feature(s, in, link)); }, run.test);
  };

  const auto& m = run.file.manifest;
  auto rep = eval::compare_policies({{"cnn_lstm", models::predict_all(*run.cnn_lstm, run.test)},
                                     {"cnn_only", models::predict_all(*cnn_only, run.test)},
                                     {"dqn", baselines::dqn_predict_all(*run.dqn, run.test)},
                                     {"lut", lut_policy(lut, baselines::LutInput::single_user_snr)},
                                     {"lut_post_zf_sinr", lut_policy(lut_zf, baselines::LutInput::post_zf_sinr)}},
                                    run.test, data::records_checksum(run.file, te),
                                    [&](const models::Sample& s) { return m.scenario(s.scenario_id).cfg.tag(); });
  eval::write_report(rep, scratch() / "desk_report");
  std::cout << eval::comparison_csv(rep);
  const double secs = seconds_since(t0);

  const auto& a_lstm = rep.policy("cnn_lstm").overall;
  const auto& a_cnn = rep.policy("cnn_only").overall;
  const auto& a_dqn = rep.policy("dqn").overall;
  const auto& a_lut = rep.policy("lut").overall;
  const bool c1 = eval::at_least(a_lstm, a_cnn), c2 = eval::at_least(a_cnn, a_lut), c3 = eval::at_least(a_lstm, a_dqn),
             c4 = eval::at_least(a_dqn, a_lut);
  verdict(5, c1 && c2 && c3 && c4 && secs < 7200.0,
          fmt("cnn_lstm %.4f cnn_only %.4f dqn %.4f lut %.4f", a_lstm.value(), a_cnn.value(), a_dqn.value(),
              a_lut.value()) +
              " | lstm>=cnn " + (c1 ? "ok" : "no") + " cnn>=lut " + (c2 ? "ok" : "no") + " lstm>=dqn " +
              (c3 ? "ok" : "no") + " dqn>=lut " + (c4 ? "ok" : "no") + fmt(" | n=%g, %.0f s", a_lstm.n, secs));
  std::printf("info: lut on post-ZF SINR %.4f\n", rep.policy("lut_post_zf_sinr").accuracy());

  std::vector<std::string> mobile;
  for (const auto& s : m.scenarios)
    if (s.cfg.mobility == channel::Mobility::mobile) mobile.push_back(s.cfg.tag());
  const auto d = eval::lstm_ablation_delta(rep, mobile);
  verdict(6, d.delta >= 0.02, fmt("mobile subset cnn_lstm - cnn_only = %+.4f (95%% CI +/- %.4f, n=%g)", d.delta, d.ci95, d.n));

  verdict(7, a_lstm.value() >= 0.70, fmt("cnn_lstm test accuracy %.4f (threshold 0.70)", a_lstm.value()));
  return run;
}

void round_trips(DeskRun& run) {
  // dataset
  const std::string bytes = data::dataset_bytes(run.file);
  std::istringstream in(bytes);
  const bool ds_ok = data::dataset_bytes(data::read_dataset(in)) == bytes;

  // labels from stored SINR, against the independent oracle
  std::size_t mismatches = 0;
  for (const auto& r : run.file.records)
    if (oracle::best_mcs(phy::from_db(static_cast<double>(r.sinr_db))) != r.label) ++mismatches;

  // checkpoints
  const auto a = scratch() / "cnn_lstm_a.amcw", b = scratch() / "cnn_lstm_b.amcw";
  models::save_model(*run.cnn_lstm, a.string());
  auto reloaded = models::load_model(models::ModelKind::cnn_lstm, run.model_cfg, a.string());
  models::save_model(*reloaded, b.string());
  const bool ck_ok = slurp(a) == slurp(b) && models::predict_all(*reloaded, run.test) == models::predict_all(*run.cnn_lstm, run.test);

  const auto qa = scratch() / "dqn_a.amcw", qb = scratch() / "dqn_b.amcw";
  baselines::save_qnet(*run.dqn, qa.string());
  auto q2 = baselines::load_qnet(run.train.front().x.size(), qa.string());
  baselines::save_qnet(q2, qb.string());
  const bool q_ok = slurp(qa) == slurp(qb);

  verdict(9, ds_ok && mismatches == 0 && ck_ok && q_ok,
          std::string("AMCD ") + (ds_ok ? "ok" : "differs") + ", AMCW cnn_lstm " + (ck_ok ? "ok" : "differs") +
              ", AMCW dqn " + (q_ok ? "ok" : "differs") + ", label mismatches " + std::to_string(mismatches) + "/" +
              std::to_string(run.file.records.size()));
}

// ------------------------------------------------------------ 8

int lab(const std::string& args) {
  const std::string cmd =
      std::string(AMC_LAB_EXE) + " " + args + " >> " + (scratch() / "determinism.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

bool pipeline(const fs::path& dir, const fs::path& cfg) {
  const std::string c = " --config " + cfg.string();
  const std::string ds = " --dataset " + (dir / "gen" / "dataset.amcd").string();
  const std::string t = (dir / "train").string();
  return lab("generate" + c + " --out " + (dir / "gen").string()) == 0 &&
         lab("train" + c + ds + " --out " + t + " --model cnn_lstm") == 0 &&
         lab("train" + c + ds + " --out " + t + " --model cnn_only") == 0 &&
         lab("train" + c + ds + " --out " + t + " --model dqn") == 0 &&
         lab("eval" + c + ds + " --out " + (dir / "eval").string() + " --checkpoint " + t + "/cnn_lstm.amcw --checkpoint " +
             t + "/cnn_only.amcw --checkpoint " + t + "/dqn.amcw") == 0;
}

void determinism() {
  const auto cfg = scratch() / "determinism.cfg";
  std::ofstream(cfg) << "channel.scenarios=los_static_two_clusters,nlos_mobile_one_cluster\n"
                        "data.frames_per_scenario=24\n"
                        "model.growth_channels=4\nmodel.lstm_hidden=16\nmodel.fcl_sizes=32,16,15\n"
                        "train.epochs=3\ntrain.learning_rate=0.05\ntrain.batch_size=16\n"
                        "dqn.episodes=2\ndqn.batch_size=16\ndqn.learning_rate=0.0001\n";
  const auto r1 = scratch() / "run1", r2 = scratch() / "run2";
  const bool ran = pipeline(r1, cfg) && pipeline(r2, cfg);
  std::size_t compared = 0, differing = 0;
  if (ran)
    for (const auto& e : fs::recursive_directory_iterator(r1)) {
      if (!e.is_regular_file()) continue;
      ++compared;
      const auto other = r2 / fs::relative(e.path(), r1);
      if (!fs::exists(other) || slurp(e.path()) != slurp(other)) {
        ++differing;
        progress("differs: " + fs::relative(e.path(), r1).string());
      }
    }
  verdict(8, ran && compared > 0 && differing == 0,
          std::string(ran ? "" : "pipeline failed; ") + std::to_string(compared) + " files compared, " +
              std::to_string(differing) + " differ");
}

}  // namespace

int main() {
  try {
    progress("gradient checks");
    gradients();
    progress("BER Monte-Carlo agreement");
    ber_agreement();
    label_monotonicity();
    progress("histogram dataset");
    histogram_shape();
    progress("generate -> train -> eval determinism");
    determinism();
    progress("desk-scale comparison");
    auto run = desk_scale();
    round_trips(run);
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
