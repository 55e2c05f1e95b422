#include "mlec/runner.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "mlec/run_config.hpp"
#include "support/synthetic.hpp"
#include "support/tempdir.hpp"

using namespace mlec;
using testsupport::TempDir;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

nlohmann::json base_config(const TempDir& dir, const std::string& mode,
                           int epochs = 3) {
  return nlohmann::json{
      {"seed", 7},
      {"paths",
       {{"train", std::string(MLEC_DATA_DIR) + "/sample_100.tsv"},
        {"output_dir", dir.file("out")}}},
      {"backends",
       {{{"name", "a"}, {"kind", "toy"}, {"dim", 4}, {"seed", 1}},
        {{"name", "b"}, {"kind", "toy"}, {"dim", 4}, {"seed", 2}},
        {{"name", "c"}, {"kind", "toy"}, {"dim", 4}, {"seed", 3}}}},
      {"loss", {{"mode", mode}}},
      {"meta",
       {{"epochs", epochs}, {"max_len", 16}, {"batch_size", 32}}},
  };
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MLEC_CLI_PATH) + " " + args +
                          " >/dev/null 2>/dev/null";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string cli_stderr(const std::string& args, const std::string& sink) {
  const std::string cmd = std::string(MLEC_CLI_PATH) + " " + args +
                          " >/dev/null 2>" + sink;
  std::system(cmd.c_str());
  return slurp(sink);
}

}  // namespace

// ---------------------------------------------------------------------------
// Config parsing and validation
// ---------------------------------------------------------------------------

TEST(RunConfigParse, AcceptsFullConfig) {
  TempDir dir;
  RunConfig cfg = parse_run_config(base_config(dir, "hybrid"));
  EXPECT_EQ(cfg.seed, 7u);
  EXPECT_EQ(cfg.backends.size(), 3u);
  EXPECT_EQ(cfg.loss.mode, "hybrid");
  EXPECT_EQ(cfg.meta.epochs, 3);
  EXPECT_EQ(cfg.meta.lstm_units, 25);  // default preserved
}

TEST(RunConfigParse, CollectsEveryViolation) {
  nlohmann::json j{
      {"seed", "not-a-number"},
      {"backends",
       {{{"name", "a"}, {"kind", "warp-drive"}, {"dim", 0}, {"seed", 1}}}},
      {"loss", {{"mode", "mystery"}, {"alpha", -2.0}}},
      {"meta", {{"dropout", 1.5}}},
  };
  try {
    parse_run_config(j);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("seed"), std::string::npos);
    EXPECT_NE(msg.find("backends[0].kind"), std::string::npos);
    EXPECT_NE(msg.find("backends[0].dim"), std::string::npos);
    EXPECT_NE(msg.find("loss.mode"), std::string::npos);
    EXPECT_NE(msg.find("loss.alpha"), std::string::npos);
    EXPECT_NE(msg.find("meta"), std::string::npos);
  }
}

TEST(RunConfigParse, BackendsOptionalAtParseRequiredAtTrain) {
  // A backend-free config parses (preprocess needs none)...
  RunConfig cfg = parse_run_config(nlohmann::json::object());
  EXPECT_TRUE(cfg.backends.empty());
  // ...but any command that extracts embeddings refuses it.
  try {
    run_train(cfg);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("backends"), std::string::npos);
  }
}

TEST(RunConfigParse, RelativePathsResolveAgainstBaseDir) {
  nlohmann::json j{
      {"paths", {{"train", "data/train.tsv"}}},
      {"backends", {{{"name", "a"}, {"kind", "toy"}}}},
  };
  RunConfig cfg = parse_run_config(j, "/some/base");
  EXPECT_EQ(cfg.paths.train, "/some/base/data/train.tsv");
}

TEST(LossModes, PresetsMatchAblationColumns) {
  ClassDistribution dist;
  dist.total = 100;
  dist.counts = {50, 5, 10, 10, 40, 40, 40, 40, 40, 5, 10, 2};
  Eigen::MatrixXi labels = Eigen::MatrixXi::Zero(4, 12);
  labels(0, 0) = 1;

  LossSection section;
  section.mode = "baseline";
  TrainLossBundle baseline = resolve_loss_bundle(section, dist, labels);
  EXPECT_EQ(baseline.loss.alpha, 0.0);
  EXPECT_EQ(baseline.loss.beta, 0.0);
  EXPECT_EQ(baseline.loss.gamma, 1.0);
  EXPECT_TRUE((baseline.class_weights.w.array() == 1.0).all());

  section.mode = "cw";
  TrainLossBundle cw = resolve_loss_bundle(section, dist, labels);
  EXPECT_EQ(cw.loss.alpha, 0.0);
  EXPECT_EQ(cw.loss.beta, 0.0);
  EXPECT_DOUBLE_EQ(cw.class_weights.w(0), 2.0);   // 100/50
  EXPECT_DOUBLE_EQ(cw.class_weights.w(1), 20.0);  // 100/5

  section.mode = "lcm";
  TrainLossBundle lcm = resolve_loss_bundle(section, dist, labels);
  EXPECT_EQ(lcm.loss.alpha, 0.0);
  EXPECT_GT(lcm.loss.beta, 0.0);
  EXPECT_TRUE((lcm.class_weights.w.array() == 1.0).all());

  section.mode = "cl";
  TrainLossBundle cl = resolve_loss_bundle(section, dist, labels);
  EXPECT_GT(cl.loss.alpha, 0.0);
  EXPECT_EQ(cl.loss.beta, 0.0);

  section.mode = "hybrid";
  section.alpha = 0.5;
  TrainLossBundle hybrid = resolve_loss_bundle(section, dist, labels);
  EXPECT_DOUBLE_EQ(hybrid.loss.alpha, 0.5);  // explicit value wins
  EXPECT_DOUBLE_EQ(hybrid.loss.beta, 0.3);
  EXPECT_DOUBLE_EQ(hybrid.loss.gamma, 0.4);
  EXPECT_DOUBLE_EQ(hybrid.class_weights.w(11), 50.0);
}

// ---------------------------------------------------------------------------
// preprocess command
// ---------------------------------------------------------------------------

TEST(PreprocessCommand, MatchesGoldenFile) {
  TempDir dir;
  const std::string out = dir.file("out.tsv");
  auto outcome = run_preprocess(std::string(MLEC_DATA_DIR) + "/fixture_10.tsv",
                                out, PreprocessConfig::builtin());
  EXPECT_EQ(outcome.rows, 10u);
  EXPECT_EQ(outcome.flagged_empty, 1u);
  EXPECT_EQ(slurp(out),
            slurp(std::string(MLEC_DATA_DIR) + "/fixture_10_golden.tsv"));
  const std::string sidecar = slurp(outcome.sidecar_path);
  EXPECT_NE(sidecar.find("t03"), std::string::npos);
}

TEST(PreprocessCommand, ConfigCanPointAtShippedSymbolMaps) {
  // The TSV copies in data/ mirror the builtin tables, so routing the maps
  // through the config must reproduce the golden output.
  TempDir dir;
  PreprocessSection section;
  section.emoji_map = std::string(MLEC_DATA_DIR) + "/emoji_map.tsv";
  section.emoticon_map = std::string(MLEC_DATA_DIR) + "/emoticon_map.tsv";
  const std::string out = dir.file("out.tsv");
  run_preprocess(std::string(MLEC_DATA_DIR) + "/fixture_10.tsv", out,
                 section.materialize());
  EXPECT_EQ(slurp(out),
            slurp(std::string(MLEC_DATA_DIR) + "/fixture_10_golden.tsv"));
}

TEST(PreprocessCommand, IdempotentOnItsOwnOutput) {
  TempDir dir;
  const std::string golden =
      std::string(MLEC_DATA_DIR) + "/fixture_10_golden.tsv";
  const std::string out = dir.file("twice.tsv");
  run_preprocess(golden, out, PreprocessConfig::builtin());
  EXPECT_EQ(slurp(out), slurp(golden));
}

TEST(PreprocessCommand, EmptyFileKeepsHeader) {
  TempDir dir;
  const std::string in = dir.file("empty.tsv");
  {
    std::ofstream f(in, std::ios::binary);
    f << "ID\tTweet\tanger\n";
  }
  const std::string out = dir.file("empty_out.tsv");
  auto outcome = run_preprocess(in, out, PreprocessConfig::builtin());
  EXPECT_EQ(outcome.rows, 0u);
  EXPECT_EQ(slurp(out), "ID\tTweet\tanger\n");
}

TEST(PreprocessCommand, ParseErrorsCarryLineNumbers) {
  TempDir dir;
  const std::string in = dir.file("bad.tsv");
  {
    std::ofstream f(in, std::ios::binary);
    f << "ID\tTweet\tanger\n";
    f << "a\tنص\t1\n";
    f << "b\tنص\n";  // missing column
  }
  try {
    run_preprocess(in, dir.file("out.tsv"), PreprocessConfig::builtin());
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

// ---------------------------------------------------------------------------
// train / evaluate / predict, in process
// ---------------------------------------------------------------------------

TEST(TrainCommand, ProducesManifestAndCheckpoint) {
  TempDir dir;
  RunConfig cfg = parse_run_config(base_config(dir, "hybrid", 3));
  TrainOutcome outcome = run_train(cfg);

  EXPECT_TRUE(std::filesystem::exists(outcome.checkpoint_path));
  EXPECT_TRUE(std::filesystem::exists(outcome.manifest_path));
  EXPECT_EQ(outcome.manifest["epochs_completed"], 3);
  EXPECT_EQ(outcome.manifest["loss_history"].size(), 3u);
  EXPECT_EQ(outcome.manifest["loss_mode"], "hybrid");
  EXPECT_TRUE(outcome.manifest.contains("dev_report"));
  EXPECT_TRUE(
      outcome.manifest["artifacts"]["checkpoint"].contains("fnv1a64"));

  // The checkpoint reloads and matches the model's configured width.
  MetaLearnerModel model = load(outcome.checkpoint_path);
  EXPECT_EQ(model.input_width(), 12);
}

TEST(TrainCommand, IdenticalConfigAndSeedReproduceManifests) {
  TempDir dir;
  RunConfig cfg = parse_run_config(base_config(dir, "cw", 2));
  TrainOutcome first = run_train(cfg);
  const std::string manifest_a = slurp(first.manifest_path);
  TrainOutcome second = run_train(cfg);
  const std::string manifest_b = slurp(second.manifest_path);
  EXPECT_EQ(manifest_a, manifest_b);
}

TEST(TrainCommand, DevSplitComesFromTrainWhenMissing) {
  TempDir dir;
  nlohmann::json j = base_config(dir, "baseline", 1);
  j["split"] = {{"fractions", {0.8, 0.2, 0.0}}};
  RunConfig cfg = parse_run_config(j);
  TrainOutcome outcome = run_train(cfg);
  EXPECT_EQ(outcome.manifest["epochs_completed"], 1);
}

TEST(TrainCommand, MissingTrainPathListsKey) {
  TempDir dir;
  nlohmann::json j = base_config(dir, "hybrid");
  j["paths"]["train"] = dir.file("nowhere.tsv");
  RunConfig cfg = parse_run_config(j);
  try {
    run_train(cfg);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("paths.train"), std::string::npos);
  }
}

TEST(EvaluateCommand, WritesReportsWithAggregatesInRange) {
  TempDir dir;
  RunConfig cfg = parse_run_config(base_config(dir, "hybrid", 2));
  TrainOutcome trained = run_train(cfg);
  EvaluateOutcome outcome = run_evaluate(
      trained.checkpoint_path, std::string(MLEC_DATA_DIR) + "/sample_100.tsv",
      cfg);
  EXPECT_TRUE(std::filesystem::exists(outcome.json_path));
  EXPECT_TRUE(std::filesystem::exists(outcome.text_path));
  for (double v :
       {outcome.report.precision_micro, outcome.report.recall_micro,
        outcome.report.f1_micro, outcome.report.f1_macro,
        outcome.report.jaccard_accuracy, outcome.report.hamming_loss}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  nlohmann::json j = nlohmann::json::parse(slurp(outcome.json_path));
  EXPECT_TRUE(j.contains("per_class"));
}

TEST(EvaluateCommand, OverfitModelScoresHighOnTrainingFile) {
  TempDir dir;
  nlohmann::json j = base_config(dir, "cw", 300);
  j["split"] = {{"fractions", {0.9, 0.1, 0.0}}};
  j["meta"]["batch_size"] = 8;
  j["meta"]["learning_rate"] = 0.002;
  RunConfig cfg = parse_run_config(j);
  TrainOutcome trained = run_train(cfg);
  EvaluateOutcome outcome = run_evaluate(
      trained.checkpoint_path, std::string(MLEC_DATA_DIR) + "/sample_100.tsv",
      cfg);
  EXPECT_GE(outcome.report.f1_micro, 0.95);
}

TEST(EvaluateCommand, MismatchedBackendWidthIsShapeError) {
  TempDir dir;
  RunConfig cfg = parse_run_config(base_config(dir, "hybrid", 1));
  TrainOutcome trained = run_train(cfg);
  RunConfig wider = cfg;
  wider.backends.push_back(BackendSpec{"extra", "toy", 4, 9, 0});
  EXPECT_THROW(
      run_evaluate(trained.checkpoint_path,
                   std::string(MLEC_DATA_DIR) + "/sample_100.tsv", wider),
      ShapeError);
}

TEST(PredictCommand, EmitsBinaryColumnsInSchemaOrder) {
  TempDir dir;
  RunConfig cfg = parse_run_config(base_config(dir, "baseline", 1));
  TrainOutcome trained = run_train(cfg);

  const std::string in = dir.file("one.tsv");
  {
    std::ofstream f(in, std::ios::binary);
    f << "ID\tTweet\n";
    f << "p1\tفرح كبير اليوم\n";
  }
  const std::string out = dir.file("pred.tsv");
  run_predict(trained.checkpoint_path, in, out, 0.5f, cfg);
  std::ifstream result(out);
  std::string header, row;
  std::getline(result, header);
  std::getline(result, row);
  EXPECT_EQ(header,
            "ID\tanger\tanticipation\tdisgust\tfear\tjoy\tlove\toptimism\t"
            "pessimism\tsadness\tsurprise\ttrust\tneutral");
  auto fields = detail::split_tabs(row);
  ASSERT_EQ(fields.size(), 13u);
  EXPECT_EQ(fields[0], "p1");
  for (std::size_t k = 1; k < fields.size(); ++k) {
    EXPECT_TRUE(fields[k] == "0" || fields[k] == "1");
  }

  // Deterministic output.
  const std::string out2 = dir.file("pred2.tsv");
  run_predict(trained.checkpoint_path, in, out2, 0.5f, cfg);
  EXPECT_EQ(slurp(out), slurp(out2));

  // An extreme threshold with an uncalibrated model predicts nothing.
  const std::string out3 = dir.file("pred3.tsv");
  run_predict(trained.checkpoint_path, in, out3, 0.999f, cfg);
  std::ifstream extreme(out3);
  std::getline(extreme, header);
  std::getline(extreme, row);
  auto zeros = detail::split_tabs(row);
  for (std::size_t k = 1; k < zeros.size(); ++k) EXPECT_EQ(zeros[k], "0");
}

TEST(TransformerBackendKind, ParsesButIsNotRunnable) {
  TempDir dir;
  nlohmann::json j = base_config(dir, "baseline", 1);
  j["backends"][0]["kind"] = "transformer";
  RunConfig cfg = parse_run_config(j);  // accepted by validation
  EXPECT_THROW(run_train(cfg), CapabilityError);
}

TEST(EmbeddingCacheReuse, SecondRunHitsCacheAndAgrees) {
  TempDir dir;
  nlohmann::json j = base_config(dir, "baseline", 2);
  j["paths"]["cache_dir"] = dir.file("cache");
  RunConfig cfg = parse_run_config(j);
  TrainOutcome first = run_train(cfg);
  EXPECT_FALSE(std::filesystem::is_empty(dir.file("cache")));
  TrainOutcome second = run_train(cfg);
  EXPECT_EQ(first.manifest.dump(), second.manifest.dump());
}

TEST(EmbeddingCacheReuse, EnvVarOverridesCacheDir) {
  TempDir dir;
  const std::string env_cache = dir.file("env_cache");
  ASSERT_EQ(setenv("MLEC_CACHE_DIR", env_cache.c_str(), 1), 0);
  nlohmann::json j = base_config(dir, "baseline", 1);
  j["paths"]["cache_dir"] = dir.file("config_cache");
  RunConfig cfg = parse_run_config(j);
  run_train(cfg);
  unsetenv("MLEC_CACHE_DIR");
  EXPECT_TRUE(std::filesystem::exists(env_cache));
  EXPECT_FALSE(std::filesystem::is_empty(env_cache));
  EXPECT_FALSE(std::filesystem::exists(dir.file("config_cache")));
}

// ---------------------------------------------------------------------------
// CLI process-level behavior
// ---------------------------------------------------------------------------

TEST(Cli, ExitCodesFollowErrorClasses) {
  TempDir dir;

  // Config error: malformed JSON.
  const std::string bad_json = dir.file("bad.json");
  std::ofstream(bad_json) << "{ not json";
  EXPECT_EQ(run_cli("train --config " + bad_json), 2);

  // Config error: unknown flag.
  EXPECT_EQ(run_cli("train --nonsense"), 2);

  // Data error: preprocess input missing.
  EXPECT_EQ(run_cli("preprocess --in " + dir.file("missing.tsv") + " --out " +
                    dir.file("o.tsv")),
            3);

  // Runtime error: evaluate against a corrupt checkpoint.
  nlohmann::json j = base_config(dir, "baseline", 1);
  const std::string cfg_path = dir.file("cfg.json");
  std::ofstream(cfg_path) << j.dump();
  const std::string fake_ckpt = dir.file("fake.bin");
  std::ofstream(fake_ckpt, std::ios::binary) << "not a checkpoint";
  EXPECT_EQ(run_cli("evaluate --checkpoint " + fake_ckpt + " --test " +
                    std::string(MLEC_DATA_DIR) + "/sample_100.tsv --config " +
                    cfg_path),
            4);

  // Success path end to end.
  EXPECT_EQ(run_cli("train --config " + cfg_path), 0);
  EXPECT_EQ(run_cli("evaluate --checkpoint " + dir.file("out/checkpoint.bin") +
                    " --test " + std::string(MLEC_DATA_DIR) +
                    "/sample_100.tsv --config " + cfg_path),
            0);
  EXPECT_EQ(run_cli("report --in " + dir.file("out/eval_report.json")), 0);
}

TEST(Cli, FailuresEmitOneMachineParsableLine) {
  TempDir dir;
  const std::string err = cli_stderr(
      "preprocess --in " + dir.file("missing.tsv") + " --out " +
          dir.file("o.tsv"),
      dir.file("stderr.txt"));
  ASSERT_FALSE(err.empty());
  EXPECT_EQ(err.rfind("error: E_DATA: ", 0), 0u) << err;
  EXPECT_EQ(std::count(err.begin(), err.end(), '\n'), 1);

  const std::string cfg_err =
      cli_stderr("train --config " + dir.file("missing.json"),
                 dir.file("stderr2.txt"));
  EXPECT_EQ(cfg_err.rfind("error: E_CONFIG: ", 0), 0u) << cfg_err;
}
