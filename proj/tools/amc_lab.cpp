// amc_lab: generate | train | eval | histogram
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
// failure (NaN / divergence), 1 anything else.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "amc/baselines.hpp"
#include "amc/config.hpp"
#include "amc/datastore.hpp"
#include "amc/evalreport.hpp"
#include "amc/models.hpp"

namespace fs = std::filesystem;
using namespace amc;

namespace {

constexpr const char* kVersion = "amc_lab " AMC_VERSION;

struct Common {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed_override;
  unsigned threads = 1;
};

config::RunConfig load(const Common& c) {
  config::RunConfig cfg = config::load_config(c.config_path);
  if (c.seed_override) cfg.override_seed(*c.seed_override);
  cfg.data.threads = c.threads;
  cfg.data.link = cfg.link;
  cfg.validate();
  return cfg;
}

void prepare_out(const Common& c, const config::RunConfig& cfg) {
  fs::create_directories(c.out);
  eval::write_file(fs::path(c.out) / "effective_config.txt", config::effective_config(cfg));
  eval::write_file(fs::path(c.out) / "VERSION", std::string(kVersion) + "\n");
}

struct Splits {
  data::DatasetFile file;
  models::Dataset train;
  models::Dataset test;
  std::uint64_t test_checksum = 0;
};

Splits load_splits(const std::string& path, const config::RunConfig& cfg) {
  Splits s;
  s.file = data::load_dataset(path, cfg.mcs());
  const auto& m = s.file.manifest;
  if (m.n_bs != cfg.model.n_bs || m.n_ue != cfg.model.n_ue || m.seq_len != cfg.model.seq_len)
    throw ConfigError("dataset shape (n_bs, n_ue, T) does not match the model configuration");
  const auto [tr, te] = data::split_dataset(s.file, cfg.data.train_fraction, cfg.data.split_seed);
  s.train = data::to_samples(s.file, tr);
  s.test = data::to_samples(s.file, te);
  s.test_checksum = data::records_checksum(s.file, te);
  return s;
}

int cmd_generate(const Common& c) {
  const auto cfg = load(c);
  prepare_out(c, cfg);
  const auto file = data::generate_dataset(cfg.catalog(), cfg.data, cfg.mcs());
  data::save_dataset((fs::path(c.out) / "dataset.amcd").string(), file);
  eval::write_file(fs::path(c.out) / "manifest.txt", data::manifest_text(file.manifest));
  std::cout << "wrote " << file.records.size() << " records (" << file.manifest.skipped_frames
            << " singular frames skipped) to " << c.out << "\n";
  return 0;
}

int cmd_train(const Common& c, const std::string& dataset, const std::string& model) {
  const auto cfg = load(c);
  prepare_out(c, cfg);
  const Splits s = load_splits(dataset, cfg);
  const fs::path out(c.out);
  if (model == "cnn_lstm" || model == "cnn_only") {
    auto net = models::build_model(model == "cnn_lstm" ? models::ModelKind::cnn_lstm : models::ModelKind::cnn_only,
                                   cfg.model);
    models::TrainHooks hooks;
    hooks.on_epoch = [](int e, const models::TrainReport& r) {
      std::cout << "epoch " << e << " loss " << r.loss.back() << " train_acc " << r.train_accuracy.back()
                << " test_acc " << r.test_accuracy.back() << "\n";
    };
    const auto rep = models::train_supervised(*net, s.train, s.test, cfg.train, hooks);
    models::save_model(*net, (out / (model + ".amcw")).string());
    eval::write_file(out / "training_curve.csv", eval::training_curves(rep));
    return 0;
  }
  if (model == "dqn") {
    baselines::QNet q(s.train.front().x.size(), cfg.dqn.seed);
    baselines::DqnHooks hooks;
    hooks.on_episode = [](int e, const baselines::DqnReport& r) {
      std::cout << "episode " << e << " loss " << r.loss.back() << " mean_reward " << r.mean_reward.back() << "\n";
    };
    const auto rep = baselines::dqn_train(q, s.train, cfg.dqn, hooks);
    baselines::save_qnet(q, (out / "dqn.amcw").string());
    std::ostringstream csv;
    csv.precision(10);
    csv << "episode,loss,mean_reward,train_acc\n";
    for (std::size_t e = 0; e < rep.loss.size(); ++e)
      csv << e + 1 << "," << rep.loss[e] << "," << rep.mean_reward[e] << "," << rep.train_accuracy[e] << "\n";
    eval::write_file(out / "training_curve.csv", csv.str());
    return 0;
  }
  if (model == "lut") {
    const auto t = baselines::calibrate_lut(s.train, cfg.lut_input, cfg.link);
    eval::write_file(out / "lut.csv", t.to_csv());
    return 0;
  }
  throw ConfigError("unknown model '" + model + "' (expected cnn_lstm, cnn_only, dqn or lut)");
}

std::string descriptor_kind(const std::string& checkpoint) {
  std::istringstream in(models::read_text(checkpoint + ".arch"));
  std::string line;
  while (std::getline(in, line))
    if (line.rfind("kind=", 0) == 0) return line.substr(5);
  throw DataError("architecture descriptor of " + checkpoint + " has no kind");
}

int cmd_eval(const Common& c, const std::string& dataset, const std::vector<std::string>& checkpoints) {
  const auto cfg = load(c);
  prepare_out(c, cfg);
  const Splits s = load_splits(dataset, cfg);
  std::vector<std::pair<std::string, std::vector<int>>> preds;
  for (const auto& ck : checkpoints) {
    const std::string kind = descriptor_kind(ck);
    if (kind == "cnn_lstm" || kind == "cnn_only") {
      auto net = models::load_model(kind == "cnn_lstm" ? models::ModelKind::cnn_lstm : models::ModelKind::cnn_only,
                                    cfg.model, ck);
      preds.emplace_back(kind, models::predict_all(*net, s.test));
    } else if (kind == "dqn") {
      auto q = baselines::load_qnet(s.test.front().x.size(), ck);
      preds.emplace_back(kind, baselines::dqn_predict_all(q, s.test));
    } else {
      throw ConfigError("unsupported checkpoint kind '" + kind + "'");
    }
  }
  const auto lut = baselines::calibrate_lut(s.train, cfg.lut_input, cfg.link);
  preds.emplace_back("lut", eval::predict_with(
                                [&](const models::Sample& x) {
                                  return baselines::lut_predict(lut, baselines::lut_feature(x, cfg.lut_input, cfg.link));
                                },
                                s.test));
  const auto& m = s.file.manifest;
  auto rep = eval::compare_policies(preds, s.test, s.test_checksum, [&](const models::Sample& x) {
    return m.scenario(x.scenario_id).cfg.tag();
  });
  rep.metadata["dataset_checksum"] = std::to_string(io::fnv1a(data::dataset_bytes(s.file)));
  rep.metadata["split_seed"] = std::to_string(cfg.data.split_seed);
  rep.metadata["lut_input"] = baselines::to_string(cfg.lut_input);
  eval::write_report(rep, c.out);
  eval::write_file(fs::path(c.out) / "lut_thresholds.csv", lut.to_csv());
  std::cout << eval::comparison_csv(rep);
  return 0;
}

int cmd_histogram(const Common& c, const std::string& dataset, const std::string& scenario) {
  phy::McsTable table = phy::default_mcs_table();
  if (!c.config_path.empty()) table = load(c).mcs();
  const auto file = data::load_dataset(dataset, table);
  bool known = scenario == "all" || scenario == "static" || scenario == "mobile";
  for (const auto& e : file.manifest.scenarios) known |= e.cfg.tag() == scenario;
  if (!known) throw ConfigError("scenario '" + scenario + "' is not in the dataset");
  fs::create_directories(c.out);
  eval::write_file(fs::path(c.out) / "VERSION", std::string(kVersion) + "\n");
  if (!c.config_path.empty()) eval::write_file(fs::path(c.out) / "effective_config.txt", config::effective_config(load(c)));
  const auto h = data::label_histogram(file, scenario);
  eval::write_file(fs::path(c.out) / ("histogram_" + scenario + ".csv"), data::histogram_csv(h));
  std::cout << data::histogram_csv(h);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feedback-free MCS selection lab: dataset generation, training and evaluation"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Common common;
  std::string dataset, model = "cnn_lstm", scenario = "all";
  std::vector<std::string> checkpoints;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", common.config_path, "key=value run configuration");
    if (config_required) opt->required();
    sub->add_option("--out", common.out, "output directory")->required();
    sub->add_option("--seed-override", seed, "replace every seed in the configuration");
    sub->add_option("--threads", common.threads, "worker threads")->check(CLI::PositiveNumber);
  };

  auto* gen = app.add_subcommand("generate", "simulate channels and write a labelled dataset");
  add_common(gen, true);
  auto* train = app.add_subcommand("train", "train one policy on the training split");
  add_common(train, true);
  train->add_option("--dataset", dataset, "AMCD dataset")->required();
  train->add_option("--model", model, "cnn_lstm | cnn_only | dqn | lut");
  auto* ev = app.add_subcommand("eval", "compare trained policies on the test split");
  add_common(ev, true);
  ev->add_option("--dataset", dataset, "AMCD dataset")->required();
  ev->add_option("--checkpoint", checkpoints, "AMCW checkpoints (repeatable)");
  auto* hist = app.add_subcommand("histogram", "label histogram of a dataset");
  add_common(hist, false);
  hist->add_option("--dataset", dataset, "AMCD dataset")->required();
  hist->add_option("--scenario", scenario, "scenario tag, static, mobile or all");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  for (auto* sub : {gen, train, ev, hist})
    if (sub->parsed() && sub->count("--seed-override")) common.seed_override = seed;

  try {
    if (gen->parsed()) return cmd_generate(common);
    if (train->parsed()) return cmd_train(common, dataset, model);
    if (ev->parsed()) return cmd_eval(common, dataset, checkpoints);
    if (hist->parsed()) return cmd_histogram(common, dataset, scenario);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
