#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlec/error.hpp"
#include "mlec/loss.hpp"
#include "mlec/meta_learner.hpp"
#include "mlec/preprocess.hpp"

namespace mlec {

struct BackendSpec {
  std::string name;
  std::string kind;  // toy | trainable | frozen | transformer
  int dim = 4;
  std::uint64_t seed = 0;
  int fine_tune_epochs = 0;
};

struct PathsSection {
  std::string train;
  std::string dev;
  std::string test;
  std::string output_dir;
  std::string cache_dir;
};

struct LossSection {
  std::string mode = "hybrid";  // baseline | cw | lcm | cl | hybrid
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<double> gamma;
  std::optional<double> lambda_reg;
  std::optional<double> margin;
  SimilarityRule similarity_rule = SimilarityRule::share_any_label;
  LcmMode lcm_mode = LcmMode::residual;
};

struct PreprocessSection {
  std::string emoji_map = "builtin";     // "builtin" or a TSV path
  std::string emoticon_map = "builtin";  // "builtin" or a TSV path
  std::optional<std::vector<PrefixRule>> prefix_rules;

  PreprocessConfig materialize() const {
    PreprocessConfig cfg = PreprocessConfig::builtin();
    if (emoji_map != "builtin") cfg.emoji_map = load_symbol_map(emoji_map);
    if (emoticon_map != "builtin") {
      cfg.emoticon_map = load_symbol_map(emoticon_map);
    }
    if (prefix_rules) cfg.prefix_rules = *prefix_rules;
    return cfg;
  }
};

struct RunConfig {
  std::uint64_t seed = 42;
  PathsSection paths;
  std::vector<BackendSpec> backends;
  PreprocessSection preprocess;
  LossSection loss;
  MetaLearnerConfig meta;
  // Used to derive a dev split from the train file when paths.dev is empty.
  std::array<double, 3> split_fractions = {0.9, 0.1, 0.0};
};

namespace detail {

inline std::string resolve_path(const std::string& base,
                                const std::string& path) {
  if (path.empty()) return path;
  std::filesystem::path p(path);
  if (p.is_absolute() || base.empty()) return path;
  return (std::filesystem::path(base) / p).lexically_normal().string();
}

class ConfigIssues {
 public:
  void add(const std::string& key, const std::string& problem) {
    issues_.push_back(key + ": " + problem);
  }
  bool empty() const { return issues_.empty(); }
  [[noreturn]] void raise() const {
    std::ostringstream out;
    out << "invalid config (" << issues_.size() << " issue"
        << (issues_.size() == 1 ? "" : "s") << ")";
    for (const auto& i : issues_) out << "; " << i;
    throw ConfigError(out.str());
  }

 private:
  std::vector<std::string> issues_;
};

}  // namespace detail

/// Parses and validates a run config. Collects every violation before
/// throwing so a bad config reports all problems at once. Relative paths are
/// resolved against `base_dir` (normally the config file's directory).
inline RunConfig parse_run_config(const nlohmann::json& j,
                                  const std::string& base_dir = "") {
  detail::ConfigIssues issues;
  RunConfig cfg;

  if (j.contains("seed")) {
    if (j["seed"].is_number_unsigned() || j["seed"].is_number_integer()) {
      cfg.seed = j["seed"].get<std::uint64_t>();
    } else {
      issues.add("seed", "must be an integer");
    }
  }

  if (j.contains("paths") && j["paths"].is_object()) {
    const auto& p = j["paths"];
    auto get_path = [&](const char* key, std::string& out) {
      if (p.contains(key)) {
        if (p[key].is_string()) {
          out = detail::resolve_path(base_dir, p[key].get<std::string>());
        } else {
          issues.add(std::string("paths.") + key, "must be a string");
        }
      }
    };
    get_path("train", cfg.paths.train);
    get_path("dev", cfg.paths.dev);
    get_path("test", cfg.paths.test);
    get_path("output_dir", cfg.paths.output_dir);
    get_path("cache_dir", cfg.paths.cache_dir);
  } else if (j.contains("paths")) {
    issues.add("paths", "must be an object");
  }

  // Optional here; commands that extract embeddings insist on at least one.
  if (j.contains("backends")) {
    if (!j["backends"].is_array() || j["backends"].empty()) {
      issues.add("backends", "must be a non-empty array");
    } else {
      int idx = 0;
      for (const auto& b : j["backends"]) {
        const std::string key = "backends[" + std::to_string(idx) + "]";
        BackendSpec spec;
        if (!b.is_object()) {
          issues.add(key, "must be an object");
          ++idx;
          continue;
        }
        spec.name = b.value("name", std::string("backend_") +
                                        std::to_string(idx));
        spec.kind = b.value("kind", std::string("toy"));
        if (spec.kind != "toy" && spec.kind != "trainable" &&
            spec.kind != "frozen" && spec.kind != "transformer") {
          issues.add(key + ".kind", "unknown kind '" + spec.kind + "'");
        }
        spec.dim = b.value("dim", 4);
        if (spec.dim < 1) issues.add(key + ".dim", "must be >= 1");
        spec.seed = b.value("seed", static_cast<std::uint64_t>(idx));
        spec.fine_tune_epochs = b.value("fine_tune_epochs", 0);
        if (spec.fine_tune_epochs < 0) {
          issues.add(key + ".fine_tune_epochs", "must be >= 0");
        }
        cfg.backends.push_back(std::move(spec));
        ++idx;
      }
    }
  }

  if (j.contains("preprocess") && j["preprocess"].is_object()) {
    const auto& p = j["preprocess"];
    cfg.preprocess.emoji_map = p.value("emoji_map", std::string("builtin"));
    cfg.preprocess.emoticon_map =
        p.value("emoticon_map", std::string("builtin"));
    if (cfg.preprocess.emoji_map != "builtin") {
      cfg.preprocess.emoji_map =
          detail::resolve_path(base_dir, cfg.preprocess.emoji_map);
    }
    if (cfg.preprocess.emoticon_map != "builtin") {
      cfg.preprocess.emoticon_map =
          detail::resolve_path(base_dir, cfg.preprocess.emoticon_map);
    }
    if (p.contains("prefix_rules")) {
      if (!p["prefix_rules"].is_array()) {
        issues.add("preprocess.prefix_rules", "must be an array");
      } else {
        std::vector<PrefixRule> rules;
        int idx = 0;
        for (const auto& r : p["prefix_rules"]) {
          PrefixRule rule;
          rule.prefix = r.value("prefix", std::string());
          rule.min_codepoints =
              r.value("min_len", static_cast<std::size_t>(4));
          if (rule.prefix.empty()) {
            issues.add("preprocess.prefix_rules[" + std::to_string(idx) +
                           "].prefix",
                       "must be non-empty");
          }
          rules.push_back(std::move(rule));
          ++idx;
        }
        cfg.preprocess.prefix_rules = std::move(rules);
      }
    }
  }

  if (j.contains("loss") && j["loss"].is_object()) {
    const auto& l = j["loss"];
    cfg.loss.mode = l.value("mode", std::string("hybrid"));
    if (cfg.loss.mode != "baseline" && cfg.loss.mode != "cw" &&
        cfg.loss.mode != "lcm" && cfg.loss.mode != "cl" &&
        cfg.loss.mode != "hybrid") {
      issues.add("loss.mode", "unknown mode '" + cfg.loss.mode + "'");
    }
    auto get_coeff = [&](const char* key, std::optional<double>& out,
                         bool non_negative = true) {
      if (!l.contains(key)) return;
      if (!l[key].is_number()) {
        issues.add(std::string("loss.") + key, "must be a number");
        return;
      }
      double v = l[key].get<double>();
      if (non_negative && v < 0) {
        issues.add(std::string("loss.") + key, "must be >= 0");
        return;
      }
      out = v;
    };
    get_coeff("alpha", cfg.loss.alpha);
    get_coeff("beta", cfg.loss.beta);
    get_coeff("gamma", cfg.loss.gamma);
    get_coeff("lambda", cfg.loss.lambda_reg);
    get_coeff("margin", cfg.loss.margin);
    if (cfg.loss.margin && *cfg.loss.margin <= 0) {
      issues.add("loss.margin", "must be > 0");
    }
    const std::string rule =
        l.value("similarity_rule", std::string("share_any_label"));
    if (rule == "share_any_label") {
      cfg.loss.similarity_rule = SimilarityRule::share_any_label;
    } else if (rule == "exact_vector_match") {
      cfg.loss.similarity_rule = SimilarityRule::exact_vector_match;
    } else {
      issues.add("loss.similarity_rule", "unknown rule '" + rule + "'");
    }
    const std::string lcm = l.value("lcm_mode", std::string("residual"));
    if (lcm == "residual") {
      cfg.loss.lcm_mode = LcmMode::residual;
    } else if (lcm == "prediction_penalty") {
      cfg.loss.lcm_mode = LcmMode::prediction_penalty;
    } else {
      issues.add("loss.lcm_mode", "unknown mode '" + lcm + "'");
    }
  }

  if (j.contains("meta") && j["meta"].is_object()) {
    const auto& m = j["meta"];
    cfg.meta.lstm_units = m.value("lstm_units", cfg.meta.lstm_units);
    cfg.meta.dropout = m.value("dropout", cfg.meta.dropout);
    cfg.meta.recurrent_dropout =
        m.value("recurrent_dropout", cfg.meta.recurrent_dropout);
    cfg.meta.dense_units = m.value("dense_units", cfg.meta.dense_units);
    cfg.meta.output_units = m.value("output_units", cfg.meta.output_units);
    cfg.meta.max_len = m.value("max_len", cfg.meta.max_len);
    cfg.meta.batch_size = m.value("batch_size", cfg.meta.batch_size);
    cfg.meta.learning_rate = m.value("learning_rate", cfg.meta.learning_rate);
    cfg.meta.epochs = m.value("epochs", cfg.meta.epochs);
    cfg.meta.threshold = m.value("threshold", cfg.meta.threshold);
    try {
      cfg.meta.validate();
    } catch (const ConfigError& e) {
      issues.add("meta", e.what());
    }
  }

  if (j.contains("split")) {
    if (!j["split"].is_object() || !j["split"].contains("fractions") ||
        !j["split"]["fractions"].is_array() ||
        j["split"]["fractions"].size() != 3) {
      issues.add("split.fractions", "must be an array of three numbers");
    } else {
      for (int k = 0; k < 3; ++k) {
        cfg.split_fractions[static_cast<std::size_t>(k)] =
            j["split"]["fractions"][static_cast<std::size_t>(k)]
                .get<double>();
      }
    }
  }

  if (!issues.empty()) issues.raise();
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  const std::string base =
      std::filesystem::path(path).parent_path().string();
  return parse_run_config(j, base);
}

/// Checks that every path a command will read exists. Collects all failures.
inline void validate_paths_exist(const std::vector<std::pair<std::string,
                                                             std::string>>&
                                     key_paths) {
  detail::ConfigIssues issues;
  for (const auto& [key, path] : key_paths) {
    if (path.empty()) {
      issues.add(key, "missing");
    } else if (!std::filesystem::exists(path)) {
      issues.add(key, "file not found: " + path);
    }
  }
  if (!issues.empty()) issues.raise();
}

// ---------------------------------------------------------------------------
// Loss-mode resolution
// ---------------------------------------------------------------------------

/// Effective (alpha, beta, gamma) for a mode. Explicit config values
/// override the per-mode defaults of the active components; inactive
/// components are forced to zero.
inline std::array<double, 3> effective_coefficients(
    const LossSection& section) {
  if (section.mode == "baseline") return {0.0, 0.0, 1.0};
  if (section.mode == "cw") return {0.0, 0.0, section.gamma.value_or(1.0)};
  if (section.mode == "lcm") {
    return {0.0, section.beta.value_or(1.0), section.gamma.value_or(1.0)};
  }
  if (section.mode == "cl") {
    return {section.alpha.value_or(1.0), 0.0, section.gamma.value_or(1.0)};
  }
  return {section.alpha.value_or(0.3), section.beta.value_or(0.3),
          section.gamma.value_or(0.4)};
}

/// Maps the ablation mode onto effective hybrid coefficients and the class
/// weight source:
///   baseline  plain BCE           (alpha=0, beta=0, gamma=1, unit weights)
///   cw        weighted BCE        (alpha=0, beta=0, inverse-freq weights)
///   lcm       BCE + correlation   (alpha=0, unit weights)
///   cl        BCE + contrastive   (beta=0, unit weights)
///   hybrid    all three           (inverse-freq weights)
inline TrainLossBundle resolve_loss_bundle(const LossSection& section,
                                           const ClassDistribution& dist,
                                           const Eigen::MatrixXi& labels) {
  TrainLossBundle bundle;
  bundle.correlation = correlation_from_labels(labels);
  bundle.loss.margin = section.margin.value_or(1.0);
  bundle.loss.lambda_reg = section.lambda_reg.value_or(0.1);
  bundle.loss.similarity_rule = section.similarity_rule;
  bundle.loss.lcm_mode = section.lcm_mode;

  const bool weighted = section.mode == "cw" || section.mode == "hybrid";
  bundle.class_weights =
      weighted ? compute_class_weights(dist) : unit_class_weights(dist.total);

  const auto [alpha, beta, gamma] = effective_coefficients(section);
  bundle.loss.alpha = alpha;
  bundle.loss.beta = beta;
  bundle.loss.gamma = gamma;
  bundle.loss.validate();
  if (bundle.loss.alpha + bundle.loss.beta + bundle.loss.gamma <= 0) {
    throw ConfigError("active loss needs alpha + beta + gamma > 0");
  }
  return bundle;
}

/// Snapshot of the fully resolved configuration, defaults filled in. This is
/// what goes into the run manifest.
inline nlohmann::json resolved_config_json(const RunConfig& cfg) {
  nlohmann::json backends = nlohmann::json::array();
  for (const auto& b : cfg.backends) {
    backends.push_back({{"name", b.name},
                        {"kind", b.kind},
                        {"dim", b.dim},
                        {"seed", b.seed},
                        {"fine_tune_epochs", b.fine_tune_epochs}});
  }
  nlohmann::json prefix_rules = nlohmann::json::array();
  for (const auto& r : cfg.preprocess.prefix_rules.value_or(
           PreprocessConfig::builtin().prefix_rules)) {
    prefix_rules.push_back(
        {{"prefix", r.prefix}, {"min_len", r.min_codepoints}});
  }
  return nlohmann::json{
      {"seed", cfg.seed},
      {"paths",
       {{"train", cfg.paths.train},
        {"dev", cfg.paths.dev},
        {"test", cfg.paths.test},
        {"output_dir", cfg.paths.output_dir},
        {"cache_dir", cfg.paths.cache_dir}}},
      {"backends", backends},
      {"preprocess",
       {{"emoji_map", cfg.preprocess.emoji_map},
        {"emoticon_map", cfg.preprocess.emoticon_map},
        {"prefix_rules", prefix_rules}}},
      {"loss",
       {{"mode", cfg.loss.mode},
        {"alpha", effective_coefficients(cfg.loss)[0]},
        {"beta", effective_coefficients(cfg.loss)[1]},
        {"gamma", effective_coefficients(cfg.loss)[2]},
        {"lambda", cfg.loss.lambda_reg.value_or(0.1)},
        {"margin", cfg.loss.margin.value_or(1.0)},
        {"similarity_rule",
         cfg.loss.similarity_rule == SimilarityRule::share_any_label
             ? "share_any_label"
             : "exact_vector_match"},
        {"lcm_mode", cfg.loss.lcm_mode == LcmMode::residual
                         ? "residual"
                         : "prediction_penalty"}}},
      {"meta", meta_config_to_json(cfg.meta)},
      {"split", {{"fractions", cfg.split_fractions}}},
  };
}

}  // namespace mlec
