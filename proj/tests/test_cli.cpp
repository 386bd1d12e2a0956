#include <gtest/gtest.h>
#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    const auto d = fs::temp_directory_path() / "amc_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(AMC_LAB_EXE) + " " + args + " > " + (workdir() / "last.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_config(const std::string& name, const std::string& extra = "") {
  const fs::path p = workdir() / name;
  std::ofstream(p) << "channel.scenarios=los_static_uncorrelated,nlos_mobile_random_placement\n"
                      "data.frames_per_scenario=10\n"
                      "model.growth_channels=4\nmodel.lstm_hidden=8\nmodel.fcl_sizes=16,16,15\n"
                      "train.epochs=2\ntrain.batch_size=16\n"
                      "dqn.episodes=1\ndqn.batch_size=8\n"
                   << extra;
  return p;
}

std::string in_dir(const std::string& name) { return (workdir() / name).string(); }

// Generates the shared tiny dataset once.
const std::string& tiny_dataset() {
  static const std::string path = [] {
    EXPECT_EQ(run("generate --config " + write_config("tiny.cfg").string() + " --out " + in_dir("data")), 0);
    return in_dir("data") + "/dataset.amcd";
  }();
  return path;
}

}  // namespace

TEST(Cli, HelpAndVersion) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run("--version"), 0);
  EXPECT_NE(slurp(workdir() / "last.log").find("amc_lab"), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("generate --out " + in_dir("x")), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("generate --config " + in_dir("missing.cfg") + " --out " + in_dir("x")), 2);
}

TEST(Cli, ConfigErrorsExitTwo) {
  const auto bad_key = workdir() / "bad_key.cfg";
  std::ofstream(bad_key) << "train.learning_rat=0.1\n";
  EXPECT_EQ(run("generate --config " + bad_key.string() + " --out " + in_dir("bk")), 2);
  EXPECT_NE(slurp(workdir() / "last.log").find("unknown key"), std::string::npos);
  const auto bad_value = write_config("bad_value.cfg", "data.seq_len=4\n");
  EXPECT_EQ(run("generate --config " + bad_value.string() + " --out " + in_dir("bv")), 2);
  EXPECT_EQ(run("train --config " + write_config("m.cfg").string() + " --dataset " + tiny_dataset() + " --out " +
                in_dir("bm") + " --model transformer"),
            2);
}

TEST(Cli, DataErrorsExitThree) {
  const auto cfg = write_config("d.cfg").string();
  EXPECT_EQ(run("train --config " + cfg + " --dataset " + in_dir("none.amcd") + " --out " + in_dir("de")), 3);
  const auto junk = workdir() / "junk.amcd";
  std::ofstream(junk) << "not a dataset";
  EXPECT_EQ(run("histogram --dataset " + junk.string() + " --out " + in_dir("dj")), 3);
  std::string bytes = slurp(tiny_dataset());
  bytes.pop_back();
  const auto cut = workdir() / "truncated.amcd";
  std::ofstream(cut, std::ios::binary) << bytes;
  EXPECT_EQ(run("eval --config " + cfg + " --dataset " + cut.string() + " --out " + in_dir("dt")), 3);
}

TEST(Cli, GenerateIsFastAndByteReproducible) {
  const auto cfg = write_config("g.cfg").string();
  const auto t0 = std::chrono::steady_clock::now();
  ASSERT_EQ(run("generate --config " + cfg + " --out " + in_dir("g1")), 0);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(secs, 10.0);
  ASSERT_EQ(run("generate --config " + cfg + " --out " + in_dir("g2") + " --threads 2"), 0);
  EXPECT_EQ(slurp(in_dir("g1") + "/dataset.amcd"), slurp(in_dir("g2") + "/dataset.amcd"));
  for (const char* f : {"dataset.amcd", "manifest.txt", "effective_config.txt", "VERSION"})
    EXPECT_TRUE(fs::exists(in_dir("g1") + "/" + f)) << f;
  ASSERT_EQ(run("generate --config " + cfg + " --out " + in_dir("g3") + " --seed-override 99"), 0);
  EXPECT_NE(slurp(in_dir("g1") + "/dataset.amcd"), slurp(in_dir("g3") + "/dataset.amcd"));
  EXPECT_NE(slurp(in_dir("g3") + "/effective_config.txt").find("channel.master_seed=99\n"), std::string::npos);
}

TEST(Cli, HistogramWritesCsv) {
  ASSERT_EQ(run("histogram --dataset " + tiny_dataset() + " --out " + in_dir("h") + " --scenario static"), 0);
  const std::string csv = slurp(in_dir("h") + "/histogram_static.csv");
  EXPECT_EQ(csv.substr(0, 10), "mcs,count\n");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 16);
  EXPECT_EQ(run("histogram --dataset " + tiny_dataset() + " --out " + in_dir("h") + " --scenario los_nowhere"), 2);
}

TEST(Cli, TrainEvalSmoke) {
  const auto cfg = write_config("te.cfg").string();
  const std::string ds = " --dataset " + tiny_dataset();
  ASSERT_EQ(run("train --config " + cfg + ds + " --out " + in_dir("t") + " --model cnn_lstm"), 0);
  ASSERT_EQ(run("train --config " + cfg + ds + " --out " + in_dir("t") + " --model cnn_only"), 0);
  ASSERT_EQ(run("train --config " + cfg + ds + " --out " + in_dir("t") + " --model dqn"), 0);
  ASSERT_EQ(run("train --config " + cfg + ds + " --out " + in_dir("t") + " --model lut"), 0);
  for (const char* f : {"cnn_lstm.amcw", "cnn_lstm.amcw.arch", "cnn_only.amcw", "dqn.amcw", "lut.csv", "training_curve.csv"})
    EXPECT_TRUE(fs::exists(in_dir("t") + "/" + f)) << f;
  const std::string t = in_dir("t");
  ASSERT_EQ(run("eval --config " + cfg + ds + " --out " + in_dir("e") + " --checkpoint " + t + "/cnn_lstm.amcw --checkpoint " +
                t + "/cnn_only.amcw --checkpoint " + t + "/dqn.amcw"),
            0);
  const std::string cmp = slurp(in_dir("e") + "/comparison.csv");
  for (const char* p : {"cnn_lstm,", "cnn_only,", "dqn,", "lut,"}) EXPECT_NE(cmp.find(p), std::string::npos) << p;
  EXPECT_NE(slurp(in_dir("e") + "/report.txt").find("lstm_ablation.delta="), std::string::npos);
  // rerunning eval gives the same report
  ASSERT_EQ(run("eval --config " + cfg + ds + " --out " + in_dir("e2") + " --checkpoint " + t + "/cnn_lstm.amcw --checkpoint " +
                t + "/cnn_only.amcw --checkpoint " + t + "/dqn.amcw"),
            0);
  EXPECT_EQ(slurp(in_dir("e") + "/report.txt"), slurp(in_dir("e2") + "/report.txt"));
}

TEST(Cli, CheckpointArchitectureMismatchIsRejected) {
  const auto cfg = write_config("a.cfg").string();
  const std::string ds = " --dataset " + tiny_dataset();
  ASSERT_EQ(run("train --config " + cfg + ds + " --out " + in_dir("am") + " --model cnn_lstm"), 0);
  const auto other = write_config("b.cfg", "model.lstm_hidden=12\n").string();
  const int rc = run("eval --config " + other + ds + " --out " + in_dir("am2") + " --checkpoint " + in_dir("am") + "/cnn_lstm.amcw");
  EXPECT_NE(rc, 0);
  EXPECT_EQ(rc, 2);
}

TEST(Cli, DivergedTrainingExitsFour) {
  const std::string ds = " --dataset " + tiny_dataset();
  const auto sup = write_config("nan_sup.cfg", "train.learning_rate=1e200\n").string();
  EXPECT_EQ(run("train --config " + sup + ds + " --out " + in_dir("n1") + " --model cnn_lstm"), 4);
  const auto dqn = write_config("nan_dqn.cfg", "dqn.learning_rate=1e200\ndqn.episodes=3\n").string();
  EXPECT_EQ(run("train --config " + dqn + ds + " --out " + in_dir("n2") + " --model dqn"), 4);
}

// Recorded once from this configuration; any change to generation, model or
// training numerics shows up here.
TEST(Cli, GoldenFiftyEpochRun) {
  const auto cfg = workdir() / "golden.cfg";
  std::ofstream(cfg) << "channel.scenarios=los_static_two_clusters,nlos_mobile_one_cluster\n"
                        "data.frames_per_scenario=24\n"
                        "model.growth_channels=4\nmodel.lstm_hidden=16\nmodel.fcl_sizes=32,16,15\n"
                        "train.epochs=50\ntrain.learning_rate=0.05\ntrain.batch_size=16\ntrain.eval_every=50\n";
  const std::string c = " --config " + cfg.string();
  ASSERT_EQ(run("generate" + c + " --out " + in_dir("golden_data")), 0);
  ASSERT_EQ(run("train" + c + " --dataset " + in_dir("golden_data") + "/dataset.amcd --out " + in_dir("golden") +
                " --model cnn_lstm"),
            0);
  const std::string curve = slurp(in_dir("golden") + "/training_curve.csv");
  const auto last = curve.substr(curve.rfind('\n', curve.size() - 2) + 1);
  EXPECT_EQ(last, "50,0.7979343305,0.7635135135,0.7857142857\n");
}
