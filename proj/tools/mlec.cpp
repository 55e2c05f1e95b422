// mlec: config-driven pipeline for multi-label emotion classification of
// Arabic tweets. Subcommands: preprocess, train, evaluate, predict, report.

#include <exception>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mlec/error.hpp"
#include "mlec/metrics.hpp"
#include "mlec/run_config.hpp"
#include "mlec/runner.hpp"

namespace {

int fail(const mlec::Error& e) {
  std::cerr << "error: " << mlec::error_code_name(e.code()) << ": " << e.what()
            << '\n';
  return static_cast<int>(e.code());
}

int fail_unexpected(const std::exception& e) {
  std::cerr << "error: E_RUNTIME: " << e.what() << '\n';
  return static_cast<int>(mlec::ErrorCode::runtime);
}

mlec::RunConfig config_or_default(const std::string& path) {
  if (path.empty()) {
    // Minimal defaults: builtin preprocess maps, no backends. Commands that
    // need backends insist on a config file.
    return mlec::RunConfig{};
  }
  return mlec::load_run_config(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-label emotion classification pipeline"};
  app.require_subcommand(1);

  std::string config_path, in_path, out_path, checkpoint_path, test_path;
  double threshold = -1.0;

  auto* cmd_preprocess =
      app.add_subcommand("preprocess", "normalize the Tweet column of a TSV");
  cmd_preprocess->add_option("--in", in_path, "input TSV")->required();
  cmd_preprocess->add_option("--out", out_path, "output TSV")->required();
  cmd_preprocess->add_option("--config", config_path, "run config JSON");

  auto* cmd_train =
      app.add_subcommand("train", "train the meta-learner from a run config");
  cmd_train->add_option("--config", config_path, "run config JSON")
      ->required();

  auto* cmd_evaluate = app.add_subcommand(
      "evaluate", "evaluate a checkpoint and write metric reports");
  cmd_evaluate->add_option("--checkpoint", checkpoint_path, "checkpoint file")
      ->required();
  cmd_evaluate->add_option("--test", test_path,
                           "test TSV (defaults to paths.test)");
  cmd_evaluate->add_option("--config", config_path, "run config JSON")
      ->required();

  auto* cmd_predict = app.add_subcommand(
      "predict", "write ID + 12 binary label columns for an input TSV");
  cmd_predict->add_option("--checkpoint", checkpoint_path, "checkpoint file")
      ->required();
  cmd_predict->add_option("--in", in_path, "input TSV with ID and Tweet")
      ->required();
  cmd_predict->add_option("--out", out_path, "output predictions TSV")
      ->required();
  cmd_predict->add_option("--threshold", threshold,
                          "decision threshold (defaults to meta.threshold)");
  cmd_predict->add_option("--config", config_path, "run config JSON")
      ->required();

  auto* cmd_report = app.add_subcommand(
      "report", "render a JSON evaluation report as a plain-text table");
  cmd_report->add_option("--in", in_path, "eval_report.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error: E_CONFIG: " << e.what() << '\n';
    return static_cast<int>(mlec::ErrorCode::config);
  }

  try {
    if (cmd_preprocess->parsed()) {
      mlec::RunConfig cfg = config_or_default(config_path);
      auto outcome = mlec::run_preprocess(in_path, out_path,
                                          cfg.preprocess.materialize());
      std::cout << "preprocessed " << outcome.rows << " rows, "
                << outcome.flagged_empty << " flagged empty ("
                << outcome.sidecar_path << ")\n";
    } else if (cmd_train->parsed()) {
      mlec::RunConfig cfg = mlec::load_run_config(config_path);
      auto outcome = mlec::run_train(cfg);
      std::cout << "checkpoint: " << outcome.checkpoint_path << '\n'
                << "manifest:   " << outcome.manifest_path << '\n'
                << "best dev micro-F1: "
                << outcome.manifest["best_dev_micro_f1"].get<double>()
                << '\n';
    } else if (cmd_evaluate->parsed()) {
      mlec::RunConfig cfg = mlec::load_run_config(config_path);
      const std::string tsv = test_path.empty() ? cfg.paths.test : test_path;
      auto outcome = mlec::run_evaluate(checkpoint_path, tsv, cfg);
      std::cout << mlec::report_to_text(outcome.report);
      std::cout << "reports: " << outcome.json_path << ", "
                << outcome.text_path << '\n';
    } else if (cmd_predict->parsed()) {
      mlec::RunConfig cfg = mlec::load_run_config(config_path);
      const float t = threshold < 0 ? cfg.meta.threshold
                                    : static_cast<float>(threshold);
      mlec::run_predict(checkpoint_path, in_path, out_path, t, cfg);
      std::cout << "predictions: " << out_path << '\n';
    } else if (cmd_report->parsed()) {
      std::ifstream in(in_path);
      if (!in) throw mlec::ValidationError("cannot open report: " + in_path);
      nlohmann::json j;
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        throw mlec::ValidationError("report is not valid JSON: " +
                                    std::string(e.what()));
      }
      std::cout << mlec::report_to_text(mlec::report_from_json(j));
    }
  } catch (const mlec::Error& e) {
    return fail(e);
  } catch (const std::exception& e) {
    return fail_unexpected(e);
  }
  return 0;
}
