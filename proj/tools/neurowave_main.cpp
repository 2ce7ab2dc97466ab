// Command-line front end wiring the pipeline stages: synthesize a corpus,
// validate a manifest, featurize trials, split, tune, train, evaluate, and
// predict single trials.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "neurowave/corpus.hpp"
#include "neurowave/dsp.hpp"
#include "neurowave/hpo.hpp"
#include "neurowave/model.hpp"
#include "neurowave/rng.hpp"
#include "neurowave/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace neurowave;

namespace {

// Resolved run configuration: defaults, then config file, then NEUROWAVE_SEED,
// then explicit flags. The resolved state is echoed into every report.
struct RunConfig {
  std::uint64_t seed{42};

  std::string dataset_dir;
  std::string features_dir;
  std::string split_path;
  std::string checkpoint_path;
  std::string history_path;
  std::string report_path;
  std::string hpo_results_path;

  std::vector<std::string> channels{kTargetChannels.begin(),
                                    kTargetChannels.end()};
  int filter_order{4};
  double variance_floor{1e-12};
  double window_s{1.0};

  ModelConfig model;
  int epochs{100};
  std::size_t hpo_samples{100};
  int proxy_epochs{15};

  int synth_trials_per_class{20};
  double synth_duration_s{4.0};
  std::uint32_t synth_sample_rate_hz{200};
  double synth_noise_floor{0.1};
};

void apply_config_file(RunConfig& rc, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed config " + path + ": " + e.what());
  }

  if (j.contains("seed")) rc.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("paths")) {
    const auto& p = j["paths"];
    if (p.contains("dataset_dir")) rc.dataset_dir = p["dataset_dir"];
    if (p.contains("features_dir")) rc.features_dir = p["features_dir"];
    if (p.contains("split")) rc.split_path = p["split"];
    if (p.contains("checkpoint")) rc.checkpoint_path = p["checkpoint"];
    if (p.contains("history")) rc.history_path = p["history"];
    if (p.contains("report")) rc.report_path = p["report"];
    if (p.contains("hpo_results")) rc.hpo_results_path = p["hpo_results"];
  }
  if (j.contains("pipeline")) {
    const auto& p = j["pipeline"];
    if (p.contains("channels"))
      rc.channels = p["channels"].get<std::vector<std::string>>();
    if (p.contains("filter_order")) rc.filter_order = p["filter_order"];
    if (p.contains("variance_floor")) rc.variance_floor = p["variance_floor"];
    if (p.contains("window_s")) rc.window_s = p["window_s"];
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    auto& c = rc.model;
    if (m.contains("cnn_out_channels")) c.cnn_out_channels = m["cnn_out_channels"];
    if (m.contains("kernel_size")) c.kernel_size = m["kernel_size"];
    if (m.contains("n_transformer_layers"))
      c.n_transformer_layers = m["n_transformer_layers"];
    if (m.contains("ffn_hidden")) c.ffn_hidden = m["ffn_hidden"];
    if (m.contains("n_heads")) c.n_heads = m["n_heads"];
    if (m.contains("embed_dim")) c.embed_dim = m["embed_dim"];
    if (m.contains("batch_size")) c.batch_size = m["batch_size"];
    if (m.contains("dropout")) c.dropout = m["dropout"];
    if (m.contains("learning_rate")) c.learning_rate = m["learning_rate"];
  }
  if (j.contains("train") && j["train"].contains("epochs"))
    rc.epochs = j["train"]["epochs"];
  if (j.contains("hpo")) {
    const auto& h = j["hpo"];
    if (h.contains("samples")) rc.hpo_samples = h["samples"].get<std::size_t>();
    if (h.contains("proxy_epochs")) rc.proxy_epochs = h["proxy_epochs"];
  }
  if (j.contains("synth")) {
    const auto& s = j["synth"];
    if (s.contains("trials_per_class"))
      rc.synth_trials_per_class = s["trials_per_class"];
    if (s.contains("duration_s")) rc.synth_duration_s = s["duration_s"];
    if (s.contains("sample_rate_hz"))
      rc.synth_sample_rate_hz = s["sample_rate_hz"];
    if (s.contains("noise_floor")) rc.synth_noise_floor = s["noise_floor"];
  }
}

void apply_env_seed(RunConfig& rc) {
  if (const char* env = std::getenv("NEUROWAVE_SEED")) {
    try {
      rc.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw std::runtime_error("NEUROWAVE_SEED is not a valid integer");
    }
  }
}

json config_echo(const RunConfig& rc) {
  return {
      {"seed", rc.seed},
      {"paths",
       {{"dataset_dir", rc.dataset_dir},
        {"features_dir", rc.features_dir},
        {"split", rc.split_path},
        {"checkpoint", rc.checkpoint_path},
        {"history", rc.history_path},
        {"report", rc.report_path},
        {"hpo_results", rc.hpo_results_path}}},
      {"pipeline",
       {{"channels", rc.channels},
        {"filter_order", rc.filter_order},
        {"variance_floor", rc.variance_floor},
        {"window_s", rc.window_s}}},
      {"model",
       {{"cnn_out_channels", rc.model.cnn_out_channels},
        {"kernel_size", rc.model.kernel_size},
        {"n_transformer_layers", rc.model.n_transformer_layers},
        {"ffn_hidden", rc.model.ffn_hidden},
        {"n_heads", rc.model.n_heads},
        {"embed_dim", rc.model.embed_dim},
        {"batch_size", rc.model.batch_size},
        {"dropout", rc.model.dropout},
        {"learning_rate", rc.model.learning_rate}}},
      {"train", {{"epochs", rc.epochs}}},
      {"hpo", {{"samples", rc.hpo_samples}, {"proxy_epochs", rc.proxy_epochs}}},
      {"synth",
       {{"trials_per_class", rc.synth_trials_per_class},
        {"duration_s", rc.synth_duration_s},
        {"sample_rate_hz", rc.synth_sample_rate_hz},
        {"noise_floor", rc.synth_noise_floor}}}};
}

// Channel list flags accept either a comma-separated list or the path of a
// montage file with one label per line.
std::vector<std::string> parse_channels(const std::string& arg) {
  if (fs::exists(arg)) return load_channel_names(arg);
  std::vector<std::string> names;
  std::stringstream ss(arg);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) names.push_back(item);
  return names;
}

FeatureTensor load_features_for(const RunConfig& rc, const std::string& id) {
  return read_features(
      (fs::path(rc.features_dir) / (id + ".eftr")).string());
}

std::vector<FeatureTensor> load_feature_set(
    const RunConfig& rc, const std::vector<std::string>& ids) {
  std::vector<FeatureTensor> set;
  set.reserve(ids.size());
  for (const auto& id : ids) set.push_back(load_features_for(rc, id));
  return set;
}

json metrics_to_json(const MetricsReport& report) {
  json confusion = json::array();
  for (int r = 0; r < 3; ++r) {
    json row = json::array();
    for (int c = 0; c < 3; ++c) row.push_back(report.confusion.counts(r, c));
    confusion.push_back(row);
  }
  json per_class;
  for (int c = 0; c < 3; ++c) {
    per_class[to_string(static_cast<Label>(c))] = {
        {"precision", report.precision[c]},
        {"recall", report.recall[c]},
        {"f1", report.f1[c]}};
  }
  return {{"accuracy", report.accuracy},
          {"macro_f1", report.macro_f1},
          {"per_class", per_class},
          {"confusion_matrix", confusion},
          {"total", report.confusion.total()}};
}

// Reference accuracies published for the original 1455-trial corpus. They are
// rendered for comparison only and never recomputed here.
json reference_baselines() {
  return {{"note",
           "published reference accuracies on the original 1455-trial corpus; "
           "embedded constants, not recomputed by this tool"},
          {"cnn_transformer", 0.9082},
          {"svm", 0.8665},
          {"dnn", 0.8608},
          {"logistic_regression", 0.8270}};
}

void write_report(const std::string& path, const std::string& command,
                  const RunConfig& rc, const json& body) {
  json j = body;
  j["command"] = command;
  j["config"] = config_echo(rc);
  j["reference_baselines"] = reference_baselines();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write report: " + path);
  out << j.dump(2) << "\n";
}

FeaturizeOptions featurize_options(const RunConfig& rc) {
  FeaturizeOptions opt;
  opt.channels = rc.channels;
  opt.filter_order = rc.filter_order;
  opt.variance_floor = rc.variance_floor;
  opt.window_s = rc.window_s;
  return opt;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_synth(const RunConfig& rc) {
  SynthSpec spec = default_synth_spec();
  spec.n_trials_per_class = rc.synth_trials_per_class;
  spec.duration_s = rc.synth_duration_s;
  spec.sample_rate_hz = rc.synth_sample_rate_hz;
  spec.noise_floor = rc.synth_noise_floor;
  spec.seed = rc.seed;
  const DatasetManifest manifest = synthesize_dataset(spec, rc.dataset_dir);
  const auto counts = validate_manifest(manifest);
  std::cout << "wrote " << counts.total() << " trials to " << rc.dataset_dir
            << " (negative " << counts.per_class[0] << ", neutral "
            << counts.per_class[1] << ", positive " << counts.per_class[2]
            << ")\n";
  return 0;
}

int cmd_validate(const RunConfig& rc, const std::string& manifest_path,
                 bool check_files) {
  const DatasetManifest manifest = read_manifest(manifest_path);
  const LabelCounts counts = validate_manifest(manifest);
  if (check_files)
    validate_manifest_files(manifest,
                            fs::path(manifest_path).parent_path().string());
  const ClassStats stats = class_stats(counts);
  std::cout << "manifest ok: " << counts.total() << " trials\n"
            << "  negative: " << counts.per_class[0] << "\n"
            << "  neutral:  " << counts.per_class[1] << "\n"
            << "  positive: " << counts.per_class[2] << "\n"
            << "  imbalance ratio: " << stats.imbalance_ratio << "\n";
  return 0;
}

int cmd_featurize(const RunConfig& rc, const std::string& manifest_path) {
  const DatasetManifest manifest = read_manifest(manifest_path);
  validate_manifest(manifest);
  const fs::path root = fs::path(manifest_path).parent_path();
  fs::create_directories(rc.features_dir);

  const FeaturizeOptions opt = featurize_options(rc);
  for (const auto& entry : manifest.trials) {
    const RawTrial trial = read_trial((root / entry.path).string());
    const RawTrial reduced = select_channels(trial, rc.channels);
    FeatureTensor features = featurize_trial(reduced, opt);
    features.trial_id = entry.trial_id;  // manifest id, not the file stem
    write_features(features, (fs::path(rc.features_dir) /
                              (entry.trial_id + ".eftr"))
                                 .string());
  }
  std::cout << "featurized " << manifest.trials.size() << " trials into "
            << rc.features_dir << "\n";
  return 0;
}

int cmd_split(const RunConfig& rc, const std::string& manifest_path,
              std::vector<double> ratios) {
  if (ratios.size() != 3)
    throw std::runtime_error("--ratios needs exactly three values");
  const DatasetManifest manifest = read_manifest(manifest_path);
  validate_manifest(manifest);
  const SplitAssignment split =
      partition(manifest, {ratios[0], ratios[1], ratios[2]}, rc.seed);
  write_split(split, rc.split_path);
  std::cout << "split " << manifest.trials.size() << " trials: train "
            << split.train.size() << ", validation " << split.validation.size()
            << ", test " << split.test.size() << " -> " << rc.split_path
            << "\n";
  return 0;
}

int cmd_tune(const RunConfig& rc) {
  const SplitAssignment split = read_split(rc.split_path);
  const auto train_set = load_feature_set(rc, split.train);
  const auto val_set = load_feature_set(rc, split.validation);

  SearchSpace space;
  HpoOptions options;
  options.n_samples = rc.hpo_samples;
  options.proxy_epochs = rc.proxy_epochs;
  options.seed = rc.seed;
  const SearchOutcome outcome = run_search(space, options, train_set, val_set);

  for (const auto& r : outcome.results)
    if (!r.ok)
      std::cerr << "trial " << r.sample_index << " failed: " << r.error
                << "\n";
  if (!rc.hpo_results_path.empty())
    write_results_csv(outcome.results, rc.hpo_results_path);

  const auto& b = outcome.best;
  json best = {{"sample_index", outcome.best_index},
               {"cnn_out_channels", b.cnn_out_channels},
               {"kernel_size", b.kernel_size},
               {"n_transformer_layers", b.n_transformer_layers},
               {"ffn_hidden", b.ffn_hidden},
               {"n_heads", b.n_heads},
               {"embed_dim", b.embed_dim},
               {"batch_size", b.batch_size},
               {"dropout", b.dropout},
               {"learning_rate", b.learning_rate}};
  std::cout << best.dump(2) << "\n";
  if (!rc.report_path.empty()) {
    std::ofstream out(rc.report_path, std::ios::trunc);
    if (!out)
      throw std::runtime_error("cannot write best config: " + rc.report_path);
    out << best.dump(2) << "\n";
  }
  return 0;
}

int cmd_train(const RunConfig& rc) {
  rc.model.validate_search_values();
  const SplitAssignment split = read_split(rc.split_path);
  const auto train_set = load_feature_set(rc, split.train);
  const auto val_set = load_feature_set(rc, split.validation);

  ModelParams params = init_params(rc.model, rc.seed);
  TrainConfig tc;
  tc.epochs = rc.epochs;
  tc.seed = rc.seed;
  tc.checkpoint_path = rc.checkpoint_path;
  const TrainResult result = train(rc.model, params, train_set, val_set, tc);

  if (!rc.history_path.empty())
    write_history_csv(result.history, rc.history_path);

  const MetricsReport val_report = evaluate(result.best.params, val_set);
  std::cout << "best validation accuracy " << result.history.best_val_accuracy
            << " at epoch " << result.history.best_epoch << "\n";
  if (!rc.report_path.empty()) {
    json body = {{"metrics", metrics_to_json(val_report)},
                 {"evaluated_on", "validation"},
                 {"best_epoch", result.history.best_epoch},
                 {"best_val_accuracy", result.history.best_val_accuracy},
                 {"history_csv", rc.history_path},
                 {"checkpoint", rc.checkpoint_path}};
    write_report(rc.report_path, "train", rc, body);
  }
  return 0;
}

int cmd_eval(const RunConfig& rc, const std::string& subset) {
  const SplitAssignment split = read_split(rc.split_path);
  const std::vector<std::string>* ids = nullptr;
  if (subset == "test") ids = &split.test;
  else if (subset == "validation") ids = &split.validation;
  else if (subset == "train") ids = &split.train;
  else throw std::runtime_error("unknown subset: " + subset);

  const Checkpoint checkpoint = load_checkpoint(rc.checkpoint_path);
  const auto dataset = load_feature_set(rc, *ids);
  const MetricsReport report = evaluate(checkpoint.params, dataset);

  std::cout << "accuracy " << report.accuracy << ", macro-F1 "
            << report.macro_f1 << " on " << dataset.size() << " trials ("
            << subset << ")\n";
  if (!rc.report_path.empty()) {
    json body = {{"metrics", metrics_to_json(report)},
                 {"evaluated_on", subset},
                 {"checkpoint", rc.checkpoint_path},
                 {"checkpoint_epoch", checkpoint.meta.epoch},
                 {"checkpoint_val_accuracy", checkpoint.meta.val_accuracy}};
    write_report(rc.report_path, "eval", rc, body);
  }
  return 0;
}

int cmd_predict(const RunConfig& rc, const std::string& trial_path) {
  const Checkpoint checkpoint = load_checkpoint(rc.checkpoint_path);
  const RawTrial trial = read_trial(trial_path);
  const RawTrial reduced = select_channels(trial, rc.channels);
  const FeatureTensor features =
      featurize_trial(reduced, featurize_options(rc));

  const Batch batch = make_batch({&features});
  const Eigen::MatrixXd logits = forward_logits(checkpoint.params, batch);
  const Eigen::RowVectorXd row = logits.row(0);
  const Eigen::ArrayXd shifted = (row.array() - row.maxCoeff()).exp();
  const Eigen::ArrayXd probs = shifted / shifted.sum();

  int best = 0;
  for (int c = 1; c < 3; ++c)
    if (row[c] > row[best]) best = c;
  std::cout << "label: " << to_string(static_cast<Label>(best)) << "\n";
  for (int c = 0; c < 3; ++c)
    std::cout << "p_" << to_string(static_cast<Label>(c)) << ": " << probs[c]
              << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EEG emotion-recognition pipeline"};
  app.require_subcommand(1);

  RunConfig rc;
  std::string config_path;
  std::optional<std::uint64_t> seed_flag;
  app.add_option("--config", config_path, "JSON run configuration file");
  app.add_option("--seed", seed_flag, "override the run seed");

  std::string manifest_path;
  std::string channels_arg;
  std::string subset = "test";
  std::string trial_path;
  std::vector<double> ratios{0.70, 0.15, 0.15};
  bool no_check_files = false;
  std::string model_config_path;

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  synth->add_option("--out", rc.dataset_dir, "output directory")->required();
  synth->add_option("--trials-per-class", rc.synth_trials_per_class,
                    "trials per label");
  synth->add_option("--duration", rc.synth_duration_s, "trial length, seconds");
  synth->add_option("--fs", rc.synth_sample_rate_hz, "sample rate, Hz");
  synth->add_option("--noise", rc.synth_noise_floor, "noise floor amplitude");

  auto* validate = app.add_subcommand("validate", "check a dataset manifest");
  validate->add_option("--manifest", manifest_path, "manifest.json path")
      ->required();
  validate->add_flag("--no-check-files", no_check_files,
                     "skip trial-file existence checks");

  auto* featurize =
      app.add_subcommand("featurize", "extract per-trial feature tensors");
  featurize->add_option("--manifest", manifest_path, "manifest.json path")
      ->required();
  featurize->add_option("--out", rc.features_dir, "feature output directory")
      ->required();
  featurize->add_option("--channels", channels_arg,
                        "comma-separated labels or a montage file");
  featurize->add_option("--order", rc.filter_order, "band-pass filter order");
  featurize->add_option("--floor", rc.variance_floor, "variance floor");

  auto* split = app.add_subcommand("split", "partition a manifest");
  split->add_option("--manifest", manifest_path, "manifest.json path")
      ->required();
  split->add_option("--out", rc.split_path, "split output path")->required();
  split->add_option("--ratios", ratios, "train val test ratios")
      ->expected(3);

  auto* tune = app.add_subcommand("tune", "random hyper-parameter search");
  tune->add_option("--features", rc.features_dir, "feature directory")
      ->required();
  tune->add_option("--split", rc.split_path, "split file")->required();
  tune->add_option("--samples", rc.hpo_samples, "configurations to sample");
  tune->add_option("--proxy-epochs", rc.proxy_epochs, "epochs per trial");
  tune->add_option("--results", rc.hpo_results_path, "results CSV path");
  tune->add_option("--best", rc.report_path, "best-config JSON path");

  auto* train_cmd = app.add_subcommand("train", "train a classifier");
  train_cmd->add_option("--features", rc.features_dir, "feature directory")
      ->required();
  train_cmd->add_option("--split", rc.split_path, "split file")->required();
  train_cmd->add_option("--model-config", model_config_path,
                        "JSON file with the nine model fields");
  train_cmd->add_option("--epochs", rc.epochs, "training epochs");
  train_cmd->add_option("--checkpoint", rc.checkpoint_path,
                        "best-checkpoint output path")
      ->required();
  train_cmd->add_option("--history", rc.history_path, "history CSV path");
  train_cmd->add_option("--report", rc.report_path, "report JSON path");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--features", rc.features_dir, "feature directory")
      ->required();
  eval_cmd->add_option("--split", rc.split_path, "split file")->required();
  eval_cmd->add_option("--checkpoint", rc.checkpoint_path, "checkpoint path")
      ->required();
  eval_cmd->add_option("--subset", subset, "train|validation|test");
  eval_cmd->add_option("--report", rc.report_path, "report JSON path");

  auto* predict = app.add_subcommand("predict", "classify one trial file");
  predict->add_option("--trial", trial_path, "trial file path")->required();
  predict->add_option("--checkpoint", rc.checkpoint_path, "checkpoint path")
      ->required();
  predict->add_option("--channels", channels_arg,
                      "comma-separated labels or a montage file");

  // --config/--seed are accepted after any subcommand name as well.
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (!config_path.empty()) apply_config_file(rc, config_path);
    apply_env_seed(rc);
    if (seed_flag) rc.seed = *seed_flag;
    if (!channels_arg.empty()) rc.channels = parse_channels(channels_arg);
    if (!model_config_path.empty()) {
      std::ifstream in(model_config_path);
      if (!in)
        throw std::runtime_error("cannot open model config: " +
                                 model_config_path);
      json j;
      in >> j;
      auto& c = rc.model;
      c.cnn_out_channels = j.at("cnn_out_channels").get<int>();
      c.kernel_size = j.at("kernel_size").get<int>();
      c.n_transformer_layers = j.at("n_transformer_layers").get<int>();
      c.ffn_hidden = j.at("ffn_hidden").get<int>();
      c.n_heads = j.at("n_heads").get<int>();
      c.embed_dim = j.at("embed_dim").get<int>();
      c.batch_size = j.at("batch_size").get<int>();
      c.dropout = j.at("dropout").get<double>();
      c.learning_rate = j.at("learning_rate").get<double>();
    }

    if (synth->parsed()) return cmd_synth(rc);
    if (validate->parsed())
      return cmd_validate(rc, manifest_path, !no_check_files);
    if (featurize->parsed()) return cmd_featurize(rc, manifest_path);
    if (split->parsed()) return cmd_split(rc, manifest_path, ratios);
    if (tune->parsed()) return cmd_tune(rc);
    if (train_cmd->parsed()) return cmd_train(rc);
    if (eval_cmd->parsed()) return cmd_eval(rc, subset);
    if (predict->parsed()) return cmd_predict(rc, trial_path);
    std::cerr << "error: no command given\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
