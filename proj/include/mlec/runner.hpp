#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlec/corpus.hpp"
#include "mlec/embeddings.hpp"
#include "mlec/error.hpp"
#include "mlec/meta_learner.hpp"
#include "mlec/metrics.hpp"
#include "mlec/preprocess.hpp"
#include "mlec/prng.hpp"
#include "mlec/run_config.hpp"

namespace mlec {

// ---------------------------------------------------------------------------
// Logging. Level comes from MLEC_LOG_LEVEL (off|error|warn|info|debug),
// default warn; everything goes to stderr.
// ---------------------------------------------------------------------------

enum class LogLevel { off = 0, error = 1, warn = 2, info = 3, debug = 4 };

inline LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("MLEC_LOG_LEVEL");
    if (!env) return LogLevel::warn;
    std::string v(env);
    if (v == "off") return LogLevel::off;
    if (v == "error") return LogLevel::error;
    if (v == "warn") return LogLevel::warn;
    if (v == "info") return LogLevel::info;
    if (v == "debug") return LogLevel::debug;
    return LogLevel::warn;
  }();
  return level;
}

inline void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::info) std::cerr << "[info] " << msg << '\n';
}

inline void log_warn(const std::string& msg) {
  if (log_level() >= LogLevel::warn) std::cerr << "[warn] " << msg << '\n';
}

// ---------------------------------------------------------------------------
// Small helpers
// ---------------------------------------------------------------------------

inline std::string file_checksum_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot checksum missing file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();
  std::uint64_t h = fnv1a64(bytes);
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << h;
  return hex.str();
}

inline void write_text_file(const std::string& path,
                            const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot open file for writing: " + path);
  out << content;
  if (!out) throw RuntimeError("write failed: " + path);
}

inline std::string cache_dir_override(const std::string& configured) {
  const char* env = std::getenv("MLEC_CACHE_DIR");
  return env ? std::string(env) : configured;
}

inline std::shared_ptr<EmbeddingBackend> make_backend(const BackendSpec& spec,
                                                      int max_len) {
  if (spec.kind == "toy") {
    return std::make_shared<ToyBackend>(spec.name, spec.dim, spec.seed,
                                        max_len);
  }
  if (spec.kind == "trainable") {
    return std::make_shared<TrainableBackend>(spec.name, spec.dim, spec.seed,
                                              max_len);
  }
  if (spec.kind == "frozen") {
    return std::make_shared<FrozenBackend>(spec.name, spec.dim, spec.seed,
                                           max_len);
  }
  if (spec.kind == "transformer") {
    throw CapabilityError(
        "backend kind 'transformer' needs external pretrained weights, which "
        "this build does not bundle; use toy, trainable or frozen");
  }
  throw ConfigError("unknown backend kind '" + spec.kind + "'");
}

// ---------------------------------------------------------------------------
// preprocess command
// ---------------------------------------------------------------------------

struct PreprocessOutcome {
  std::size_t rows = 0;
  std::size_t flagged_empty = 0;
  std::string sidecar_path;
};

/// Rewrites the Tweet column in place row by row. Rows that clean to the
/// empty string stay in the output and get listed in `<out>.flagged`.
inline PreprocessOutcome run_preprocess(const std::string& in_tsv,
                                        const std::string& out_tsv,
                                        const PreprocessConfig& cfg) {
  std::ifstream in(in_tsv, std::ios::binary);
  if (!in) throw ValidationError("cannot open TSV file: " + in_tsv);
  std::ofstream out(out_tsv, std::ios::binary);
  if (!out) throw RuntimeError("cannot open file for writing: " + out_tsv);

  PreprocessOutcome outcome;
  outcome.sidecar_path = out_tsv + ".flagged";
  std::ofstream sidecar(outcome.sidecar_path, std::ios::binary);

  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "empty file, expected header row");
  detail::strip_bom(line);
  detail::strip_cr(line);
  auto header = detail::split_tabs(line);
  if (header.size() < 2 || header[0] != "ID" || header[1] != "Tweet") {
    throw ParseError(1, "header must start with ID<TAB>Tweet");
  }
  out << line << '\n';

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_cr(line);
    if (line.empty()) continue;
    auto fields = detail::split_tabs(line);
    if (fields.size() != header.size()) {
      throw ParseError(line_no, "expected " + std::to_string(header.size()) +
                                    " columns, got " +
                                    std::to_string(fields.size()));
    }
    CleanText clean = pipeline(fields[1], cfg);
    if (clean.empty()) {
      ++outcome.flagged_empty;
      sidecar << line_no << '\t' << fields[0] << "\tempty_after_preprocess\n";
    }
    out << fields[0] << '\t' << clean.text;
    for (std::size_t k = 2; k < fields.size(); ++k) out << '\t' << fields[k];
    out << '\n';
    ++outcome.rows;
  }
  if (!out) throw RuntimeError("write failed: " + out_tsv);
  return outcome;
}

// ---------------------------------------------------------------------------
// Embedding assembly
// ---------------------------------------------------------------------------

inline std::vector<CleanText> preprocess_dataset(const Dataset& data,
                                                 const PreprocessConfig& cfg) {
  std::vector<CleanText> out;
  out.reserve(data.size());
  for (const Example& ex : data.examples()) {
    out.push_back(pipeline(ex.raw_text, cfg));
  }
  return out;
}

inline std::uint64_t texts_checksum(const std::vector<CleanText>& texts) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& t : texts) {
    h = fnv1a64(t.text, h);
    h = fnv1a64("\x1f", h);
  }
  return h;
}

/// Extracts one backend's sequences for a set of texts, using the on-disk
/// cache when a cache dir is configured. The cache key covers the backend
/// identity, its fine-tune history and the exact texts.
inline std::vector<TokenEmbeddingSequence> extract_all(
    const EmbeddingBackend& backend, const std::vector<CleanText>& texts,
    const BackendSpec& spec, std::uint64_t fine_tune_corpus_hash,
    const std::string& cache_dir) {
  std::string cache_path;
  if (!cache_dir.empty()) {
    std::uint64_t key = fnv1a64(spec.kind);
    key = fnv1a64(spec.name, key);
    key ^= 0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(spec.dim) + 1);
    key ^= spec.seed + 0x517cc1b727220a95ull;
    key ^= static_cast<std::uint64_t>(spec.fine_tune_epochs) << 32;
    key ^= fine_tune_corpus_hash;
    key ^= texts_checksum(texts);
    std::ostringstream name;
    name << "emb_" << spec.name << "_" << std::hex << key << ".bin";
    std::filesystem::create_directories(cache_dir);
    cache_path = (std::filesystem::path(cache_dir) / name.str()).string();
    if (std::filesystem::exists(cache_path)) {
      auto cached = read_embedding_cache(cache_path, backend.name());
      if (cached.size() == texts.size()) {
        log_info("embedding cache hit: " + cache_path);
        return cached;
      }
      log_warn("embedding cache entry has wrong row count, re-extracting");
    }
  }
  std::vector<TokenEmbeddingSequence> seqs;
  seqs.reserve(texts.size());
  for (const auto& t : texts) seqs.push_back(backend.extract(t));
  if (!cache_path.empty()) write_embedding_cache(cache_path, seqs);
  return seqs;
}

struct BackendEnsemble {
  std::vector<std::shared_ptr<EmbeddingBackend>> backends;
  std::uint64_t fine_tune_corpus_hash = 0;
};

/// Builds the configured backends and runs each one's fine-tune pass on the
/// (preprocessed) training data.
inline BackendEnsemble prepare_backends(const RunConfig& cfg,
                                        const Dataset& clean_train) {
  BackendEnsemble ensemble;
  std::vector<CleanText> texts;
  for (const auto& ex : clean_train.examples()) {
    texts.push_back(CleanText{ex.raw_text});
  }
  ensemble.fine_tune_corpus_hash = texts_checksum(texts);
  for (const BackendSpec& spec : cfg.backends) {
    auto backend = make_backend(spec, cfg.meta.max_len);
    if (spec.fine_tune_epochs > 0) {
      log_info("fine-tuning backend " + spec.name + " for " +
               std::to_string(spec.fine_tune_epochs) + " epochs");
      backend = backend->fine_tune(clean_train, spec.fine_tune_epochs);
    }
    ensemble.backends.push_back(std::move(backend));
  }
  return ensemble;
}

/// Preprocess + extract + stack for one dataset.
inline EmbeddedDataset embed_dataset(const Dataset& data,
                                     const PreprocessConfig& pre_cfg,
                                     const BackendEnsemble& ensemble,
                                     const RunConfig& cfg) {
  EmbeddedDataset out;
  auto texts = preprocess_dataset(data, pre_cfg);
  const std::string cache_dir = cache_dir_override(cfg.paths.cache_dir);
  std::vector<std::vector<TokenEmbeddingSequence>> per_backend;
  for (std::size_t k = 0; k < ensemble.backends.size(); ++k) {
    per_backend.push_back(extract_all(*ensemble.backends[k], texts,
                                      cfg.backends[k],
                                      ensemble.fine_tune_corpus_hash,
                                      cache_dir));
  }
  out.labels = data.label_matrix();
  out.sequences.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::vector<TokenEmbeddingSequence> seqs;
    seqs.reserve(per_backend.size());
    for (auto& pb : per_backend) seqs.push_back(std::move(pb[i]));
    out.sequences.push_back(stack(seqs));
  }
  return out;
}

/// Dataset whose raw_text fields hold the cleaned text.
inline Dataset clean_dataset(const Dataset& data,
                             const PreprocessConfig& cfg) {
  std::vector<Example> cleaned;
  cleaned.reserve(data.size());
  for (const Example& ex : data.examples()) {
    Example c = ex;
    c.raw_text = pipeline(ex.raw_text, cfg).text;
    cleaned.push_back(std::move(c));
  }
  return Dataset(std::move(cleaned));
}

// ---------------------------------------------------------------------------
// train command
// ---------------------------------------------------------------------------

struct TrainOutcome {
  nlohmann::json manifest;
  std::string manifest_path;
  std::string checkpoint_path;
  EvaluationReport dev_report;
};

inline void require_backends(const RunConfig& cfg) {
  if (cfg.backends.empty()) {
    throw ConfigError("backends: missing (need at least one backend)");
  }
}

inline TrainOutcome run_train(const RunConfig& cfg) {
  require_backends(cfg);
  validate_paths_exist({{"paths.train", cfg.paths.train}});
  if (!cfg.paths.dev.empty()) {
    validate_paths_exist({{"paths.dev", cfg.paths.dev}});
  }
  if (cfg.paths.output_dir.empty()) {
    throw ConfigError("paths.output_dir: missing");
  }
  std::filesystem::create_directories(cfg.paths.output_dir);

  Dataset train_raw = load_tsv(cfg.paths.train);
  if (train_raw.empty()) throw ValidationError("training file has no rows");
  Dataset dev_raw;
  if (!cfg.paths.dev.empty()) {
    dev_raw = load_tsv(cfg.paths.dev);
  } else {
    log_info("no dev path given, splitting the training file");
    auto parts = split(train_raw, cfg.split_fractions, cfg.seed);
    train_raw = std::move(parts[0]);
    dev_raw = std::move(parts[1]);
  }
  if (dev_raw.empty()) throw ValidationError("dev set has no rows");

  const PreprocessConfig pre_cfg = cfg.preprocess.materialize();
  Dataset clean_train = clean_dataset(train_raw, pre_cfg);

  BackendEnsemble ensemble = prepare_backends(cfg, clean_train);
  EmbeddedDataset train_set = embed_dataset(train_raw, pre_cfg, ensemble, cfg);
  EmbeddedDataset dev_set = embed_dataset(dev_raw, pre_cfg, ensemble, cfg);

  const ClassDistribution dist = class_distribution(train_raw);
  TrainLossBundle bundle =
      resolve_loss_bundle(cfg.loss, dist, train_raw.label_matrix());

  const int input_width =
      static_cast<int>(train_set.sequences.front().width());
  MetaLearnerModel model = build(cfg.meta, input_width, cfg.seed);
  log_info("training meta-learner (input width " +
           std::to_string(input_width) + ", mode " + cfg.loss.mode + ")");
  TrainingState state =
      train(model, train_set, dev_set, bundle, cfg.meta, cfg.seed);

  TrainOutcome outcome;
  outcome.checkpoint_path =
      (std::filesystem::path(cfg.paths.output_dir) / "checkpoint.bin")
          .string();
  save(state.best_model, outcome.checkpoint_path);

  Eigen::MatrixXi dev_pred =
      predict(state.best_model, dev_set.sequences, cfg.meta.threshold);
  outcome.dev_report = classwise_report(dev_set.labels, dev_pred);

  nlohmann::json manifest{
      {"run", "train"},
      {"seed", cfg.seed},
      {"loss_mode", cfg.loss.mode},
      {"config", resolved_config_json(cfg)},
      {"epochs_completed", state.epochs_completed},
      {"loss_history", state.loss_history},
      {"best_epoch", state.best_epoch},
      {"best_dev_micro_f1", state.best_dev_micro_f1},
      {"dev_report", report_to_json(outcome.dev_report)},
      {"artifacts",
       {{"checkpoint",
         {{"path", outcome.checkpoint_path},
          {"fnv1a64", file_checksum_hex(outcome.checkpoint_path)}}}}},
  };
  outcome.manifest = manifest;
  outcome.manifest_path =
      (std::filesystem::path(cfg.paths.output_dir) / "manifest.json")
          .string();
  write_text_file(outcome.manifest_path, manifest.dump(2) + "\n");
  return outcome;
}

// ---------------------------------------------------------------------------
// evaluate command
// ---------------------------------------------------------------------------

struct EvaluateOutcome {
  EvaluationReport report;
  std::string json_path;
  std::string text_path;
};

inline EvaluateOutcome run_evaluate(const std::string& checkpoint_path,
                                    const std::string& test_tsv,
                                    const RunConfig& cfg) {
  require_backends(cfg);
  validate_paths_exist({{"checkpoint", checkpoint_path},
                        {"paths.test", test_tsv}});
  if (cfg.paths.output_dir.empty()) {
    throw ConfigError("paths.output_dir: missing");
  }
  std::filesystem::create_directories(cfg.paths.output_dir);

  MetaLearnerModel model = load(checkpoint_path);
  Dataset test_raw = load_tsv(test_tsv);
  if (test_raw.empty()) throw ValidationError("test file has no rows");

  const PreprocessConfig pre_cfg = cfg.preprocess.materialize();
  // Backends must match the training run; fine-tune state is reproduced from
  // the training corpus when fine_tune_epochs > 0.
  BackendEnsemble ensemble;
  bool needs_fine_tune = false;
  for (const auto& b : cfg.backends) {
    if (b.fine_tune_epochs > 0) needs_fine_tune = true;
  }
  if (needs_fine_tune) {
    validate_paths_exist({{"paths.train", cfg.paths.train}});
    Dataset train_raw = load_tsv(cfg.paths.train);
    ensemble = prepare_backends(cfg, clean_dataset(train_raw, pre_cfg));
  } else {
    ensemble = prepare_backends(cfg, Dataset(std::vector<Example>{}));
  }

  EmbeddedDataset test_set = embed_dataset(test_raw, pre_cfg, ensemble, cfg);
  const int width = static_cast<int>(test_set.sequences.front().width());
  if (width != model.input_width()) {
    throw ShapeError("checkpoint input width " +
                     std::to_string(model.input_width()) +
                     " does not match stacked embedding width " +
                     std::to_string(width));
  }

  Eigen::MatrixXi pred =
      predict(model, test_set.sequences, cfg.meta.threshold);
  EvaluateOutcome outcome;
  outcome.report = classwise_report(test_set.labels, pred);
  outcome.json_path =
      (std::filesystem::path(cfg.paths.output_dir) / "eval_report.json")
          .string();
  outcome.text_path =
      (std::filesystem::path(cfg.paths.output_dir) / "eval_report.txt")
          .string();
  write_text_file(outcome.json_path,
                  report_to_json(outcome.report).dump(2) + "\n");
  write_text_file(outcome.text_path, report_to_text(outcome.report));
  return outcome;
}

// ---------------------------------------------------------------------------
// predict command
// ---------------------------------------------------------------------------

/// Loads an unlabeled (or labeled, labels ignored) TSV with ID and Tweet
/// columns.
inline std::vector<std::pair<std::string, std::string>> load_id_tweet_tsv(
    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open TSV file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "empty file, expected header row");
  detail::strip_bom(line);
  detail::strip_cr(line);
  auto header = detail::split_tabs(line);
  if (header.size() < 2 || header[0] != "ID" || header[1] != "Tweet") {
    throw ParseError(1, "header must start with ID<TAB>Tweet");
  }
  std::vector<std::pair<std::string, std::string>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_cr(line);
    if (line.empty()) continue;
    auto fields = detail::split_tabs(line);
    if (fields.size() < 2 || fields.size() != header.size()) {
      throw ParseError(line_no, "expected " + std::to_string(header.size()) +
                                    " columns, got " +
                                    std::to_string(fields.size()));
    }
    rows.emplace_back(fields[0], fields[1]);
  }
  return rows;
}

inline void run_predict(const std::string& checkpoint_path,
                        const std::string& input_tsv,
                        const std::string& output_tsv, float threshold,
                        const RunConfig& cfg) {
  require_backends(cfg);
  validate_paths_exist({{"checkpoint", checkpoint_path},
                        {"input", input_tsv}});
  MetaLearnerModel model = load(checkpoint_path);
  auto rows = load_id_tweet_tsv(input_tsv);
  if (rows.empty()) throw ValidationError("input file has no rows");

  const PreprocessConfig pre_cfg = cfg.preprocess.materialize();
  BackendEnsemble ensemble;
  for (const BackendSpec& spec : cfg.backends) {
    if (spec.fine_tune_epochs > 0) {
      validate_paths_exist({{"paths.train", cfg.paths.train}});
      Dataset train_raw = load_tsv(cfg.paths.train);
      ensemble = prepare_backends(cfg, clean_dataset(train_raw, pre_cfg));
      break;
    }
  }
  if (ensemble.backends.empty()) {
    ensemble = prepare_backends(cfg, Dataset(std::vector<Example>{}));
  }

  std::vector<StackedEmbedding> sequences;
  sequences.reserve(rows.size());
  for (const auto& [id, tweet] : rows) {
    CleanText clean = pipeline(tweet, pre_cfg);
    std::vector<TokenEmbeddingSequence> seqs;
    for (const auto& backend : ensemble.backends) {
      seqs.push_back(backend->extract(clean));
    }
    sequences.push_back(stack(seqs));
  }
  const int width = static_cast<int>(sequences.front().width());
  if (width != model.input_width()) {
    throw ShapeError("checkpoint input width " +
                     std::to_string(model.input_width()) +
                     " does not match stacked embedding width " +
                     std::to_string(width));
  }

  Eigen::MatrixXi pred = predict(model, sequences, threshold);
  const auto& schema = EmotionLabelSet::canonical();
  std::ofstream out(output_tsv, std::ios::binary);
  if (!out) throw RuntimeError("cannot open file for writing: " + output_tsv);
  out << "ID";
  for (std::size_t c = 0; c < kNumClasses; ++c) out << '\t' << schema.label(c);
  out << '\n';
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << rows[i].first;
    for (Eigen::Index c = 0; c < pred.cols(); ++c) {
      out << '\t' << pred(static_cast<Eigen::Index>(i), c);
    }
    out << '\n';
  }
  if (!out) throw RuntimeError("write failed: " + output_tsv);
}

}  // namespace mlec
