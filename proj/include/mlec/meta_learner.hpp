#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "mlec/embeddings.hpp"
#include "mlec/error.hpp"
#include "mlec/loss.hpp"
#include "mlec/metrics.hpp"
#include "mlec/prng.hpp"
#include "mlec/schema.hpp"

namespace mlec {

struct MetaLearnerConfig {
  int lstm_units = 25;  // per direction
  float dropout = 0.3f;
  float recurrent_dropout = 0.3f;
  int dense_units = 50;
  int output_units = static_cast<int>(kNumClasses);
  int max_len = 32;
  int batch_size = 32;
  float learning_rate = 0.001f;
  int epochs = 100;
  float threshold = 0.5f;

  void validate() const {
    if (lstm_units < 1 || dense_units < 1 || output_units < 1 ||
        max_len < 1 || batch_size < 1 || epochs < 0) {
      throw ConfigError("meta-learner sizes must be positive");
    }
    if (dropout < 0.0f || dropout >= 1.0f || recurrent_dropout < 0.0f ||
        recurrent_dropout >= 1.0f) {
      throw ConfigError("dropout rates must lie in [0,1)");
    }
    if (threshold <= 0.0f || threshold >= 1.0f) {
      throw ConfigError("threshold must lie in (0,1)");
    }
    if (learning_rate <= 0.0f) {
      throw ConfigError("learning rate must be positive");
    }
  }
};

/// All trainable tensors. Shared shape between parameters, gradients and
/// optimizer moments. Gate blocks along the 4H axis are [input, forget,
/// cell, output].
struct ParamSet {
  Eigen::MatrixXf lstm_fw_w, lstm_fw_u, lstm_fw_b;
  Eigen::MatrixXf lstm_bw_w, lstm_bw_u, lstm_bw_b;
  Eigen::MatrixXf dense_w, dense_b;
  Eigen::MatrixXf out_w, out_b;

  template <typename F>
  void for_each(F&& f) {
    f("lstm_fw.w", lstm_fw_w);
    f("lstm_fw.u", lstm_fw_u);
    f("lstm_fw.b", lstm_fw_b);
    f("lstm_bw.w", lstm_bw_w);
    f("lstm_bw.u", lstm_bw_u);
    f("lstm_bw.b", lstm_bw_b);
    f("dense.w", dense_w);
    f("dense.b", dense_b);
    f("out.w", out_w);
    f("out.b", out_b);
  }

  template <typename F>
  void for_each(F&& f) const {
    const_cast<ParamSet*>(this)->for_each(
        [&](const char* name, Eigen::MatrixXf& m) {
          f(name, static_cast<const Eigen::MatrixXf&>(m));
        });
  }

  static ParamSet zeros_like(const ParamSet& shape) {
    ParamSet z = shape;
    z.for_each([](const char*, Eigen::MatrixXf& m) { m.setZero(); });
    return z;
  }
};

/// Bi-LSTM(25 per direction) -> Dense(50, ReLU) -> Dense(12, sigmoid).
/// The 50-unit dense activation is the representation h_i fed to the
/// contrastive term.
class MetaLearnerModel {
 public:
  MetaLearnerModel() = default;

  MetaLearnerModel(MetaLearnerConfig cfg, int input_width, ParamSet params)
      : cfg_(cfg), input_width_(input_width), params_(std::move(params)) {}

  const MetaLearnerConfig& config() const { return cfg_; }
  int input_width() const { return input_width_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

 private:
  MetaLearnerConfig cfg_;
  int input_width_ = 0;
  ParamSet params_;
};

namespace detail {

inline void glorot_fill(Eigen::MatrixXf& m, int fan_in, int fan_out,
                        SplitMix64& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(r, c) = static_cast<float>(rng.uniform(-limit, limit));
    }
  }
}

inline Eigen::ArrayXf sigmoidf(const Eigen::ArrayXf& z) {
  return (1.0f + (-z).exp()).inverse();
}

}  // namespace detail

/// Deterministic initialization: Glorot-uniform weights and zero biases with
/// the forget-gate block set to one.
inline MetaLearnerModel build(const MetaLearnerConfig& cfg, int input_width,
                              std::uint64_t seed) {
  cfg.validate();
  if (input_width < 1) throw ConfigError("input width must be >= 1");
  const int H = cfg.lstm_units;
  const int D = input_width;
  const int dense = cfg.dense_units;
  const int C = cfg.output_units;

  SplitMix64 rng(seed);
  ParamSet p;
  p.lstm_fw_w.resize(4 * H, D);
  p.lstm_fw_u.resize(4 * H, H);
  p.lstm_fw_b = Eigen::MatrixXf::Zero(4 * H, 1);
  p.lstm_bw_w.resize(4 * H, D);
  p.lstm_bw_u.resize(4 * H, H);
  p.lstm_bw_b = Eigen::MatrixXf::Zero(4 * H, 1);
  p.dense_w.resize(dense, 2 * H);
  p.dense_b = Eigen::MatrixXf::Zero(dense, 1);
  p.out_w.resize(C, dense);
  p.out_b = Eigen::MatrixXf::Zero(C, 1);

  detail::glorot_fill(p.lstm_fw_w, D, 4 * H, rng);
  detail::glorot_fill(p.lstm_fw_u, H, 4 * H, rng);
  detail::glorot_fill(p.lstm_bw_w, D, 4 * H, rng);
  detail::glorot_fill(p.lstm_bw_u, H, 4 * H, rng);
  detail::glorot_fill(p.dense_w, 2 * H, dense, rng);
  detail::glorot_fill(p.out_w, dense, C, rng);
  p.lstm_fw_b.block(H, 0, H, 1).setOnes();  // forget gate bias
  p.lstm_bw_b.block(H, 0, H, 1).setOnes();

  return MetaLearnerModel(cfg, input_width, std::move(p));
}

struct ForwardResult {
  Eigen::MatrixXf probs;  // B x C, entries in (0,1)
  Eigen::MatrixXf h;      // B x dense_units
};

namespace detail {

struct StepCache {
  Eigen::VectorXf x_used, h_prev_used;
  Eigen::ArrayXf gi, gf, gg, go;
  Eigen::VectorXf c_prev, c;
  bool active = false;
};

struct DirectionCache {
  std::vector<StepCache> steps;
  Eigen::VectorXf h_final;
  Eigen::VectorXf mask_x, mask_h;  // inverted-dropout scales
};

struct ExampleCache {
  DirectionCache fw, bw;
  Eigen::VectorXf concat, h1, z1;
};

inline Eigen::VectorXf dropout_mask(int n, float rate, SplitMix64* rng) {
  Eigen::VectorXf mask = Eigen::VectorXf::Ones(n);
  if (rate <= 0.0f || rng == nullptr) return mask;
  const float scale = 1.0f / (1.0f - rate);
  for (int k = 0; k < n; ++k) {
    mask(k) = rng->uniform() < rate ? 0.0f : scale;
  }
  return mask;
}

/// One LSTM direction over an example. `reversed` walks the sequence from
/// the end; padded steps carry state through unchanged.
inline void run_direction(const Eigen::MatrixXf& w, const Eigen::MatrixXf& u,
                          const Eigen::MatrixXf& b, const Eigen::MatrixXf& x,
                          const Eigen::VectorXi& mask, bool reversed,
                          DirectionCache& cache, bool keep_steps) {
  const int H = static_cast<int>(u.cols());
  const Eigen::Index L = x.rows();
  Eigen::VectorXf h = Eigen::VectorXf::Zero(H);
  Eigen::VectorXf c = Eigen::VectorXf::Zero(H);
  if (keep_steps) cache.steps.assign(static_cast<std::size_t>(L), StepCache{});
  for (Eigen::Index step = 0; step < L; ++step) {
    const Eigen::Index t = reversed ? L - 1 - step : step;
    if (mask(t) == 0) continue;
    Eigen::VectorXf xt = x.row(t).transpose().cwiseProduct(cache.mask_x);
    Eigen::VectorXf hu = h.cwiseProduct(cache.mask_h);
    Eigen::VectorXf a = w * xt + u * hu + b.col(0);
    Eigen::ArrayXf gi = sigmoidf(a.segment(0, H).array());
    Eigen::ArrayXf gf = sigmoidf(a.segment(H, H).array());
    Eigen::ArrayXf gg = a.segment(2 * H, H).array().tanh();
    Eigen::ArrayXf go = sigmoidf(a.segment(3 * H, H).array());
    Eigen::VectorXf c_new = (gf * c.array() + gi * gg).matrix();
    Eigen::VectorXf h_new = (go * c_new.array().tanh()).matrix();
    if (keep_steps) {
      StepCache& sc = cache.steps[static_cast<std::size_t>(t)];
      sc.active = true;
      sc.x_used = xt;
      sc.h_prev_used = hu;
      sc.gi = gi;
      sc.gf = gf;
      sc.gg = gg;
      sc.go = go;
      sc.c_prev = c;
      sc.c = c_new;
    }
    c = c_new;
    h = h_new;
  }
  cache.h_final = h;
}

inline void forward_example(const MetaLearnerModel& model,
                            const StackedEmbedding& x, bool train_mode,
                            SplitMix64* rng, bool keep_caches,
                            ExampleCache& cache, Eigen::VectorXf& probs_out,
                            Eigen::VectorXf& h_out) {
  const MetaLearnerConfig& cfg = model.config();
  const ParamSet& p = model.params();
  const int H = cfg.lstm_units;
  const int D = model.input_width();

  if (x.matrix.cols() != D) {
    throw ShapeError("input width " + std::to_string(x.matrix.cols()) +
                     " does not match model input width " +
                     std::to_string(D));
  }

  cache.fw.mask_x = dropout_mask(D, train_mode ? cfg.dropout : 0.0f, rng);
  cache.fw.mask_h =
      dropout_mask(H, train_mode ? cfg.recurrent_dropout : 0.0f, rng);
  cache.bw.mask_x = dropout_mask(D, train_mode ? cfg.dropout : 0.0f, rng);
  cache.bw.mask_h =
      dropout_mask(H, train_mode ? cfg.recurrent_dropout : 0.0f, rng);

  run_direction(p.lstm_fw_w, p.lstm_fw_u, p.lstm_fw_b, x.matrix, x.mask,
                /*reversed=*/false, cache.fw, keep_caches);
  run_direction(p.lstm_bw_w, p.lstm_bw_u, p.lstm_bw_b, x.matrix, x.mask,
                /*reversed=*/true, cache.bw, keep_caches);

  cache.concat.resize(2 * H);
  cache.concat << cache.fw.h_final, cache.bw.h_final;
  cache.z1 = p.dense_w * cache.concat + p.dense_b.col(0);
  cache.h1 = cache.z1.cwiseMax(0.0f);
  Eigen::VectorXf z2 = p.out_w * cache.h1 + p.out_b.col(0);
  probs_out = sigmoidf(z2.array())
                  .max(1e-7f)
                  .min(1.0f - 1e-7f)
                  .matrix();
  h_out = cache.h1;
}

}  // namespace detail

/// Batch forward pass. Dropout is active only in train mode; inference is
/// deterministic and each row is computed independently of the rest of the
/// batch.
inline ForwardResult forward(const MetaLearnerModel& model,
                             const std::vector<StackedEmbedding>& batch,
                             bool train_mode = false,
                             SplitMix64* rng = nullptr) {
  const Eigen::Index B = static_cast<Eigen::Index>(batch.size());
  if (B == 0) throw ShapeError("forward on empty batch");
  SplitMix64 fallback(0x6d6c6563u);  // used when train_mode lacks a stream
  if (train_mode && rng == nullptr) rng = &fallback;

  ForwardResult out;
  out.probs.resize(B, model.config().output_units);
  out.h.resize(B, model.config().dense_units);
  detail::ExampleCache cache;
  for (Eigen::Index b = 0; b < B; ++b) {
    Eigen::VectorXf probs, h;
    detail::forward_example(model, batch[static_cast<std::size_t>(b)],
                            train_mode, train_mode ? rng : nullptr,
                            /*keep_caches=*/false, cache, probs, h);
    out.probs.row(b) = probs.transpose();
    out.h.row(b) = h.transpose();
  }
  return out;
}

/// Thresholded multi-hot prediction; a probability equal to the threshold
/// counts as active.
inline Eigen::MatrixXi predict(const MetaLearnerModel& model,
                               const std::vector<StackedEmbedding>& batch,
                               float threshold) {
  if (threshold <= 0.0f || threshold >= 1.0f) {
    throw ConfigError("threshold must lie in (0,1)");
  }
  ForwardResult fr = forward(model, batch, /*train_mode=*/false);
  return (fr.probs.array() >= threshold).cast<int>();
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EmbeddedDataset {
  std::vector<StackedEmbedding> sequences;
  Eigen::MatrixXi labels;  // N x C

  std::size_t size() const { return sequences.size(); }
};

struct TrainLossBundle {
  HybridLossConfig loss;
  ClassWeights class_weights;
  LabelCorrelationMatrix correlation;
};

struct TrainingState {
  int epochs_completed = 0;
  std::vector<double> loss_history;  // one mean loss per epoch
  int best_epoch = -1;
  double best_dev_micro_f1 = -1.0;
  MetaLearnerModel best_model;
};

namespace detail {

struct AdamState {
  ParamSet m, v;
  long step = 0;
};

inline void adam_update(ParamSet& params, const ParamSet& grads,
                        AdamState& state, float lr) {
  constexpr float b1 = 0.9f, b2 = 0.999f, eps = 1e-8f;
  state.step += 1;
  const float bc1 = 1.0f - std::pow(b1, static_cast<float>(state.step));
  const float bc2 = 1.0f - std::pow(b2, static_cast<float>(state.step));

  auto update = [&](Eigen::MatrixXf& p, Eigen::MatrixXf& m, Eigen::MatrixXf& v,
                    const Eigen::MatrixXf& g) {
    m = b1 * m + (1.0f - b1) * g;
    v = (b2 * v.array() + (1.0f - b2) * g.array().square()).matrix();
    Eigen::ArrayXXf mhat = m.array() / bc1;
    Eigen::ArrayXXf vhat = v.array() / bc2;
    p.array() -= lr * mhat / (vhat.sqrt() + eps);
  };

  update(params.lstm_fw_w, state.m.lstm_fw_w, state.v.lstm_fw_w, grads.lstm_fw_w);
  update(params.lstm_fw_u, state.m.lstm_fw_u, state.v.lstm_fw_u, grads.lstm_fw_u);
  update(params.lstm_fw_b, state.m.lstm_fw_b, state.v.lstm_fw_b, grads.lstm_fw_b);
  update(params.lstm_bw_w, state.m.lstm_bw_w, state.v.lstm_bw_w, grads.lstm_bw_w);
  update(params.lstm_bw_u, state.m.lstm_bw_u, state.v.lstm_bw_u, grads.lstm_bw_u);
  update(params.lstm_bw_b, state.m.lstm_bw_b, state.v.lstm_bw_b, grads.lstm_bw_b);
  update(params.dense_w, state.m.dense_w, state.v.dense_w, grads.dense_w);
  update(params.dense_b, state.m.dense_b, state.v.dense_b, grads.dense_b);
  update(params.out_w, state.m.out_w, state.v.out_w, grads.out_w);
  update(params.out_b, state.m.out_b, state.v.out_b, grads.out_b);
}

/// BPTT through one LSTM direction. dh_final enters at the last processed
/// step; padded steps pass gradients through untouched (they carried state).
/// Inputs are fixed embeddings, so no gradient flows into x.
inline void backward_direction(const Eigen::MatrixXf& u,
                               const Eigen::MatrixXf& x,
                               const Eigen::VectorXi& mask, bool reversed,
                               const DirectionCache& cache,
                               const Eigen::VectorXf& dh_final,
                               Eigen::MatrixXf& dw, Eigen::MatrixXf& du,
                               Eigen::MatrixXf& db) {
  const int H = static_cast<int>(u.cols());
  const Eigen::Index L = x.rows();
  Eigen::VectorXf dh = dh_final;
  Eigen::VectorXf dc = Eigen::VectorXf::Zero(H);
  for (Eigen::Index step = L - 1; step >= 0; --step) {
    const Eigen::Index t = reversed ? L - 1 - step : step;
    if (mask(t) == 0) continue;
    const StepCache& sc = cache.steps[static_cast<std::size_t>(t)];
    Eigen::ArrayXf tanh_c = sc.c.array().tanh();
    Eigen::ArrayXf do_ = dh.array() * tanh_c;
    Eigen::ArrayXf dct = dc.array() + dh.array() * sc.go * (1.0f - tanh_c.square());
    Eigen::ArrayXf di = dct * sc.gg;
    Eigen::ArrayXf dg = dct * sc.gi;
    Eigen::ArrayXf df = dct * sc.c_prev.array();
    Eigen::VectorXf da(4 * H);
    da.segment(0, H) = (di * sc.gi * (1.0f - sc.gi)).matrix();
    da.segment(H, H) = (df * sc.gf * (1.0f - sc.gf)).matrix();
    da.segment(2 * H, H) = (dg * (1.0f - sc.gg.square())).matrix();
    da.segment(3 * H, H) = (do_ * sc.go * (1.0f - sc.go)).matrix();

    dw.noalias() += da * sc.x_used.transpose();
    du.noalias() += da * sc.h_prev_used.transpose();
    db.col(0) += da;

    dh = (u.transpose() * da).cwiseProduct(cache.mask_h);
    dc = (dct * sc.gf).matrix();
  }
}

}  // namespace detail

/// Runs the full training loop: shuffled mini-batches, hybrid loss,
/// Adam updates, per-epoch loss history and a best-dev-micro-F1 snapshot.
/// Dropout and shuffling draw from a stream derived from `seed`, so a fixed
/// seed reproduces the run exactly.
inline TrainingState train(MetaLearnerModel& model,
                           const EmbeddedDataset& train_set,
                           const EmbeddedDataset& dev_set,
                           const TrainLossBundle& bundle,
                           const MetaLearnerConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  bundle.loss.validate();
  if (train_set.size() == 0) throw ValidationError("training set is empty");
  if (dev_set.size() == 0) throw ValidationError("dev set is empty");

  TrainingState state;
  state.best_model = model;
  if (cfg.epochs == 0) return state;

  SplitMix64 rng(seed ^ 0x747261696e21ull);
  const std::size_t n = train_set.size();
  detail::AdamState adam;
  adam.m = ParamSet::zeros_like(model.params());
  adam.v = ParamSet::zeros_like(model.params());

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    deterministic_shuffle(order, rng);
    double epoch_loss = 0.0;
    std::size_t batch_count = 0;

    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end =
          std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      const Eigen::Index B = static_cast<Eigen::Index>(end - start);

      // Forward with caches.
      std::vector<detail::ExampleCache> caches(static_cast<std::size_t>(B));
      Eigen::MatrixXf probs(B, cfg.output_units);
      Eigen::MatrixXf h(B, cfg.dense_units);
      Eigen::MatrixXd y_true(B, cfg.output_units);
      for (Eigen::Index b = 0; b < B; ++b) {
        const std::size_t idx = order[start + static_cast<std::size_t>(b)];
        Eigen::VectorXf pb, hb;
        detail::forward_example(model, train_set.sequences[idx],
                                /*train_mode=*/true, &rng,
                                /*keep_caches=*/true,
                                caches[static_cast<std::size_t>(b)], pb, hb);
        probs.row(b) = pb.transpose();
        h.row(b) = hb.transpose();
        for (int c = 0; c < cfg.output_units; ++c) {
          y_true(b, c) = train_set.labels(static_cast<Eigen::Index>(idx), c);
        }
      }

      LossBatch loss_batch(y_true, probs.cast<double>(), h.cast<double>());
      HybridLossResult loss;
      try {
        loss = hybrid_loss(loss_batch, bundle.class_weights,
                           bundle.correlation, bundle.loss);
      } catch (const RuntimeError& e) {
        throw RuntimeError("non-finite loss at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(batch_count) + ": " + e.what());
      }
      if (!std::isfinite(loss.value)) {
        throw RuntimeError("non-finite loss at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(batch_count));
      }
      epoch_loss += loss.value;
      ++batch_count;

      // d loss / d logits = d loss / d p * p (1 - p), using the raw sigmoid
      // output for the derivative.
      Eigen::MatrixXf dz2 =
          (loss.grad_y_pred.array() *
           (probs.cast<double>().array() * (1.0 - probs.cast<double>().array())))
              .cast<float>()
              .matrix();
      Eigen::MatrixXf dh_extra = loss.grad_embeddings.cast<float>();

      // Backward.
      ParamSet grads = ParamSet::zeros_like(model.params());
      const ParamSet& p = model.params();
      for (Eigen::Index b = 0; b < B; ++b) {
        const detail::ExampleCache& cache =
            caches[static_cast<std::size_t>(b)];
        const std::size_t idx = order[start + static_cast<std::size_t>(b)];
        const StackedEmbedding& x = train_set.sequences[idx];

        Eigen::VectorXf dz2_b = dz2.row(b).transpose();
        grads.out_w.noalias() += dz2_b * cache.h1.transpose();
        grads.out_b.col(0) += dz2_b;
        Eigen::VectorXf dh1 =
            p.out_w.transpose() * dz2_b + dh_extra.row(b).transpose();
        Eigen::VectorXf dz1 =
            (cache.z1.array() > 0.0f).select(dh1, Eigen::VectorXf::Zero(dh1.size()));
        grads.dense_w.noalias() += dz1 * cache.concat.transpose();
        grads.dense_b.col(0) += dz1;
        Eigen::VectorXf dconcat = p.dense_w.transpose() * dz1;

        const int H = cfg.lstm_units;
        detail::backward_direction(p.lstm_fw_u, x.matrix, x.mask,
                                   /*reversed=*/false, cache.fw,
                                   dconcat.segment(0, H), grads.lstm_fw_w,
                                   grads.lstm_fw_u, grads.lstm_fw_b);
        detail::backward_direction(p.lstm_bw_u, x.matrix, x.mask,
                                   /*reversed=*/true, cache.bw,
                                   dconcat.segment(H, H), grads.lstm_bw_w,
                                   grads.lstm_bw_u, grads.lstm_bw_b);
      }

      detail::adam_update(model.params(), grads, adam, cfg.learning_rate);
    }

    state.loss_history.push_back(epoch_loss /
                                 static_cast<double>(batch_count));
    state.epochs_completed = epoch + 1;

    Eigen::MatrixXi dev_pred = predict(model, dev_set.sequences, cfg.threshold);
    const double dev_f1 = micro_f1(dev_set.labels, dev_pred);
    if (dev_f1 > state.best_dev_micro_f1) {
      state.best_dev_micro_f1 = dev_f1;
      state.best_epoch = epoch;
      state.best_model = model;
    }
  }
  return state;
}

// ---------------------------------------------------------------------------
// Checkpoint container
//
// Layout (little-endian):
//   magic    8 bytes "MLECCKP1"
//   version  u32     1
//   config   u64 length + JSON bytes (meta-learner config + input width)
//   tensors  u32 count, then per tensor:
//            u32 name length, name bytes, u32 rows, u32 cols,
//            rows*cols float32 row-major
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'M', 'L', 'E', 'C',
                                             'C', 'K', 'P', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline nlohmann::json meta_config_to_json(const MetaLearnerConfig& cfg) {
  return nlohmann::json{{"lstm_units", cfg.lstm_units},
                        {"dropout", cfg.dropout},
                        {"recurrent_dropout", cfg.recurrent_dropout},
                        {"dense_units", cfg.dense_units},
                        {"output_units", cfg.output_units},
                        {"max_len", cfg.max_len},
                        {"batch_size", cfg.batch_size},
                        {"learning_rate", cfg.learning_rate},
                        {"epochs", cfg.epochs},
                        {"threshold", cfg.threshold}};
}

inline MetaLearnerConfig meta_config_from_json(const nlohmann::json& j) {
  MetaLearnerConfig cfg;
  cfg.lstm_units = j.value("lstm_units", cfg.lstm_units);
  cfg.dropout = j.value("dropout", cfg.dropout);
  cfg.recurrent_dropout = j.value("recurrent_dropout", cfg.recurrent_dropout);
  cfg.dense_units = j.value("dense_units", cfg.dense_units);
  cfg.output_units = j.value("output_units", cfg.output_units);
  cfg.max_len = j.value("max_len", cfg.max_len);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.threshold = j.value("threshold", cfg.threshold);
  return cfg;
}

inline void save(const MetaLearnerModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot open checkpoint for writing: " + path);
  out.write(kCheckpointMagic, 8);
  auto put_u32 = [&](std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
  };
  put_u32(kCheckpointVersion);

  nlohmann::json cfg_json = meta_config_to_json(model.config());
  cfg_json["input_width"] = model.input_width();
  const std::string cfg_text = cfg_json.dump();
  const std::uint64_t cfg_len = cfg_text.size();
  out.write(reinterpret_cast<const char*>(&cfg_len), 8);
  out.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));

  std::uint32_t count = 0;
  model.params().for_each([&](const char*, const Eigen::MatrixXf&) { ++count; });
  put_u32(count);
  model.params().for_each([&](const char* name, const Eigen::MatrixXf& m) {
    const std::uint32_t name_len =
        static_cast<std::uint32_t>(std::strlen(name));
    put_u32(name_len);
    out.write(name, name_len);
    put_u32(static_cast<std::uint32_t>(m.rows()));
    put_u32(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const float v = m(r, c);
        out.write(reinterpret_cast<const char*>(&v), 4);
      }
    }
  });
  if (!out) throw RuntimeError("checkpoint write failed: " + path);
}

inline MetaLearnerModel load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot open checkpoint: " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw RuntimeError("corrupt checkpoint (bad magic): " + path);
  }
  auto get_u32 = [&]() {
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), 4)) {
      throw RuntimeError("corrupt checkpoint (truncated): " + path);
    }
    return v;
  };
  const std::uint32_t version = get_u32();
  if (version != kCheckpointVersion) {
    throw RuntimeError("unsupported checkpoint version " +
                       std::to_string(version));
  }
  std::uint64_t cfg_len = 0;
  if (!in.read(reinterpret_cast<char*>(&cfg_len), 8)) {
    throw RuntimeError("corrupt checkpoint (truncated): " + path);
  }
  std::string cfg_text(cfg_len, '\0');
  if (!in.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len))) {
    throw RuntimeError("corrupt checkpoint (truncated): " + path);
  }
  nlohmann::json cfg_json;
  try {
    cfg_json = nlohmann::json::parse(cfg_text);
  } catch (const nlohmann::json::exception&) {
    throw RuntimeError("corrupt checkpoint (bad config block): " + path);
  }
  MetaLearnerConfig cfg = meta_config_from_json(cfg_json);
  const int input_width = cfg_json.value("input_width", 0);
  MetaLearnerModel model = build(cfg, input_width, /*seed=*/0);

  const std::uint32_t count = get_u32();
  std::uint32_t loaded = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = get_u32();
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) {
      throw RuntimeError("corrupt checkpoint (truncated): " + path);
    }
    const std::uint32_t rows = get_u32();
    const std::uint32_t cols = get_u32();
    Eigen::MatrixXf values(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t c = 0; c < cols; ++c) {
        float v;
        if (!in.read(reinterpret_cast<char*>(&v), 4)) {
          throw RuntimeError("corrupt checkpoint (truncated): " + path);
        }
        values(r, c) = v;
      }
    }
    bool found = false;
    model.params().for_each([&](const char* pname, Eigen::MatrixXf& m) {
      if (name == pname) {
        if (m.rows() != values.rows() || m.cols() != values.cols()) {
          throw ShapeError("checkpoint tensor '" + name +
                           "' has shape " + std::to_string(values.rows()) +
                           "x" + std::to_string(values.cols()) +
                           ", expected " + std::to_string(m.rows()) + "x" +
                           std::to_string(m.cols()));
        }
        m = values;
        found = true;
      }
    });
    if (!found) {
      throw RuntimeError("corrupt checkpoint (unknown tensor '" + name +
                         "'): " + path);
    }
    ++loaded;
  }
  if (loaded != count) {
    throw RuntimeError("corrupt checkpoint (tensor count mismatch): " + path);
  }
  return model;
}

}  // namespace mlec
