#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>

#include <Eigen/Core>

#include "mlec/corpus.hpp"
#include "mlec/error.hpp"
#include "mlec/schema.hpp"

namespace mlec {

/// Inverse-frequency class weights, w_c = N / max(|C_c|, 1).
struct ClassWeights {
  Eigen::VectorXd w;
  std::size_t source_total = 0;
  std::array<std::size_t, kNumClasses> source_counts{};
};

inline ClassWeights compute_class_weights(const ClassDistribution& dist) {
  if (dist.total < 1) throw ValidationError("class weights need N >= 1");
  ClassWeights cw;
  cw.source_total = dist.total;
  cw.source_counts = dist.counts;
  cw.w.resize(static_cast<Eigen::Index>(kNumClasses));
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    // Zero-count guard: classes absent from a tiny split get weight N.
    cw.w(static_cast<Eigen::Index>(c)) =
        static_cast<double>(dist.total) /
        static_cast<double>(std::max<std::size_t>(dist.counts[c], 1));
  }
  return cw;
}

inline ClassWeights unit_class_weights(std::size_t total = 1) {
  ClassWeights cw;
  cw.source_total = total;
  cw.w = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(kNumClasses));
  return cw;
}

/// M = Y^T Y / N. Symmetric, entries in [0,1], diagonal = counts/N.
struct LabelCorrelationMatrix {
  Eigen::MatrixXd m;
};

inline LabelCorrelationMatrix correlation_from_labels(
    const Eigen::MatrixXi& labels) {
  if (labels.rows() < 1) {
    throw ValidationError("label correlation matrix needs N >= 1");
  }
  Eigen::MatrixXd y = labels.cast<double>();
  LabelCorrelationMatrix out;
  out.m = (y.transpose() * y) / static_cast<double>(labels.rows());
  return out;
}

inline LabelCorrelationMatrix label_correlation_matrix(const Dataset& d) {
  return correlation_from_labels(d.label_matrix());
}

enum class SimilarityRule { share_any_label, exact_vector_match };
enum class LcmMode { residual, prediction_penalty };

struct HybridLossConfig {
  double alpha = 0.3;   // contrastive coefficient
  double beta = 0.3;    // label-correlation coefficient
  double gamma = 0.4;   // class-weighted BCE coefficient
  double margin = 1.0;  // contrastive margin, compared against squared D
  double lambda_reg = 0.1;
  SimilarityRule similarity_rule = SimilarityRule::share_any_label;
  LcmMode lcm_mode = LcmMode::residual;

  /// Structural checks. The all-zero coefficient case is legal here (the
  /// loss is then identically zero); training configs additionally require
  /// alpha + beta + gamma > 0.
  void validate() const {
    if (alpha < 0 || beta < 0 || gamma < 0) {
      throw ConfigError("loss coefficients must be non-negative");
    }
    if (margin <= 0) throw ConfigError("contrastive margin must be > 0");
    if (lambda_reg < 0) throw ConfigError("lambda_reg must be >= 0");
  }
};

inline constexpr double kProbEps = 1e-7;

/// One training batch as seen by the loss: binary targets, clipped predicted
/// probabilities, and the penultimate representations h_i used by the
/// contrastive term.
struct LossBatch {
  Eigen::MatrixXd y_true;      // B x C
  Eigen::MatrixXd y_pred;      // B x C, clipped to [eps, 1-eps]
  Eigen::MatrixXd embeddings;  // B x E

  LossBatch(Eigen::MatrixXd labels, Eigen::MatrixXd probs,
            Eigen::MatrixXd h)
      : y_true(std::move(labels)),
        y_pred(std::move(probs)),
        embeddings(std::move(h)) {
    if (y_true.rows() != y_pred.rows() || y_true.cols() != y_pred.cols()) {
      throw ShapeError("loss batch: y_true/y_pred shape mismatch");
    }
    if (embeddings.rows() != y_true.rows()) {
      throw ShapeError("loss batch: embeddings row count mismatch");
    }
    if (y_true.rows() < 1) throw ShapeError("loss batch: empty batch");
    y_pred = y_pred.array().max(kProbEps).min(1.0 - kProbEps);
  }

  Eigen::Index batch_size() const { return y_true.rows(); }
  Eigen::Index num_classes() const { return y_true.cols(); }
};

// ---------------------------------------------------------------------------
// Components
// ---------------------------------------------------------------------------

inline double weighted_bce(const LossBatch& batch, const ClassWeights& cw) {
  if (cw.w.size() != batch.num_classes()) {
    throw ShapeError("class weight length mismatch");
  }
  const auto& y = batch.y_true.array();
  const auto& p = batch.y_pred.array();
  Eigen::ArrayXXd cell = y * p.log() + (1.0 - y) * (1.0 - p).log();
  Eigen::ArrayXXd weighted =
      cell.rowwise() * cw.w.transpose().array();
  return -weighted.sum() / static_cast<double>(batch.batch_size());
}

/// Eq.-style smoothness penalty: batch mean of
/// lambda * sum_ij M_ij (p_i - p_j)^2.
inline double correlation_penalty(const Eigen::MatrixXd& y_pred,
                                  const LabelCorrelationMatrix& lcm,
                                  double lambda_reg) {
  if (lambda_reg < 0) throw ConfigError("lambda_reg must be >= 0");
  if (y_pred.cols() != lcm.m.rows()) {
    throw ShapeError("correlation penalty: class count mismatch");
  }
  const Eigen::Index B = y_pred.rows();
  const Eigen::Index C = y_pred.cols();
  double total = 0.0;
  for (Eigen::Index b = 0; b < B; ++b) {
    for (Eigen::Index i = 0; i < C; ++i) {
      for (Eigen::Index j = 0; j < C; ++j) {
        const double d = y_pred(b, i) - y_pred(b, j);
        total += lcm.m(i, j) * d * d;
      }
    }
  }
  return lambda_reg * total / static_cast<double>(B);
}

/// Residual cross-term: (1/C) sum_ij M_ij <r_i, r_j> with r = y_pred - y_true
/// and the inner product batch-averaged. Indefinite, may be negative.
inline double lcm_residual_term(const LossBatch& batch,
                                const LabelCorrelationMatrix& lcm) {
  if (batch.num_classes() != lcm.m.rows()) {
    throw ShapeError("lcm residual: class count mismatch");
  }
  const Eigen::MatrixXd r = batch.y_pred - batch.y_true;
  // mean_b r_bi r_bj = (R^T R / B)_ij
  const Eigen::MatrixXd cross =
      (r.transpose() * r) / static_cast<double>(batch.batch_size());
  return (lcm.m.array() * cross.array()).sum() /
         static_cast<double>(batch.num_classes());
}

namespace detail {

inline bool pair_similar(const Eigen::MatrixXd& y, Eigen::Index i,
                         Eigen::Index j, SimilarityRule rule) {
  if (rule == SimilarityRule::exact_vector_match) {
    for (Eigen::Index c = 0; c < y.cols(); ++c) {
      if ((y(i, c) > 0.5) != (y(j, c) > 0.5)) return false;
    }
    return true;
  }
  for (Eigen::Index c = 0; c < y.cols(); ++c) {
    if (y(i, c) > 0.5 && y(j, c) > 0.5) return true;
  }
  return false;
}

}  // namespace detail

/// Pairwise margin loss over unordered pairs: similar pairs pull (contribute
/// the squared distance), dissimilar pairs push (hinge at the margin).
inline double contrastive_loss(const LossBatch& batch,
                               const HybridLossConfig& cfg) {
  const Eigen::Index B = batch.batch_size();
  if (B < 2) return 0.0;
  double s = 0.0;
  for (Eigen::Index i = 0; i < B; ++i) {
    for (Eigen::Index j = i + 1; j < B; ++j) {
      const double d =
          (batch.embeddings.row(i) - batch.embeddings.row(j)).squaredNorm();
      if (detail::pair_similar(batch.y_true, i, j, cfg.similarity_rule)) {
        s += d;
      } else {
        s += std::max(0.0, cfg.margin - d);
      }
    }
  }
  const double pairs = static_cast<double>(B) * static_cast<double>(B - 1) / 2.0;
  return s / pairs;
}

// ---------------------------------------------------------------------------
// Hybrid composition with analytic gradients
// ---------------------------------------------------------------------------

struct HybridLossResult {
  double value = 0.0;
  // Raw component values before their coefficients are applied.
  double contrastive_term = 0.0;
  double lcm_term = 0.0;
  double bce_term = 0.0;  // weighted BCE, before the 1/C normalization
  Eigen::MatrixXd grad_y_pred;     // d value / d y_pred, B x C
  Eigen::MatrixXd grad_embeddings; // d value / d embeddings, B x E
};

/// alpha*CL + beta*LCM-term + gamma*weighted-BCE/C, with gradients with
/// respect to the clipped probabilities and the embeddings.
inline HybridLossResult hybrid_loss(const LossBatch& batch,
                                    const ClassWeights& cw,
                                    const LabelCorrelationMatrix& lcm,
                                    const HybridLossConfig& cfg) {
  cfg.validate();
  const Eigen::Index B = batch.batch_size();
  const Eigen::Index C = batch.num_classes();
  const double Bd = static_cast<double>(B);
  const double Cd = static_cast<double>(C);

  HybridLossResult out;
  out.grad_y_pred = Eigen::MatrixXd::Zero(B, C);
  out.grad_embeddings =
      Eigen::MatrixXd::Zero(B, batch.embeddings.cols());

  // Class-weighted BCE, normalized by C inside the hybrid.
  out.bce_term = weighted_bce(batch, cw);
  {
    const auto& y = batch.y_true.array();
    const auto& p = batch.y_pred.array();
    Eigen::ArrayXXd g = (-y / p + (1.0 - y) / (1.0 - p));
    g.rowwise() *= cw.w.transpose().array();
    out.grad_y_pred += (cfg.gamma / (Cd * Bd)) * g.matrix();
  }

  // Label-correlation term.
  if (cfg.lcm_mode == LcmMode::residual) {
    out.lcm_term = lcm_residual_term(batch, lcm);
    const Eigen::MatrixXd r = batch.y_pred - batch.y_true;
    const Eigen::MatrixXd sym = lcm.m + lcm.m.transpose();
    out.grad_y_pred += (cfg.beta / (Cd * Bd)) * (r * sym);
  } else {
    out.lcm_term = correlation_penalty(batch.y_pred, lcm, cfg.lambda_reg);
    const Eigen::MatrixXd sym = lcm.m + lcm.m.transpose();
    const Eigen::VectorXd rowsum = sym.rowwise().sum();
    // d/dp_bk of sum_ij M_ij (p_i-p_j)^2  =  2 [p_bk * rowsum_k - (p_b sym)_k]
    Eigen::MatrixXd g =
        2.0 * (batch.y_pred.array().rowwise() *
                   rowsum.transpose().array())
                  .matrix() -
        2.0 * (batch.y_pred * sym);
    out.grad_y_pred += (cfg.beta * cfg.lambda_reg / Bd) * g;
  }

  // Contrastive term over unordered pairs.
  out.contrastive_term = contrastive_loss(batch, cfg);
  if (B >= 2 && cfg.alpha != 0.0) {
    const double pair_scale =
        cfg.alpha / (Bd * static_cast<double>(B - 1) / 2.0);
    for (Eigen::Index i = 0; i < B; ++i) {
      for (Eigen::Index j = i + 1; j < B; ++j) {
        const Eigen::RowVectorXd diff =
            batch.embeddings.row(i) - batch.embeddings.row(j);
        if (detail::pair_similar(batch.y_true, i, j, cfg.similarity_rule)) {
          out.grad_embeddings.row(i) += pair_scale * 2.0 * diff;
          out.grad_embeddings.row(j) -= pair_scale * 2.0 * diff;
        } else if (cfg.margin - diff.squaredNorm() > 0.0) {
          out.grad_embeddings.row(i) -= pair_scale * 2.0 * diff;
          out.grad_embeddings.row(j) += pair_scale * 2.0 * diff;
        }
      }
    }
  }

  out.value = cfg.alpha * out.contrastive_term + cfg.beta * out.lcm_term +
              cfg.gamma * out.bce_term / Cd;
  if (!std::isfinite(out.value)) {
    throw RuntimeError("hybrid loss is not finite");
  }
  return out;
}

}  // namespace mlec
