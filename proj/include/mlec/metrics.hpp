#pragma once

#include <cstddef>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "mlec/error.hpp"
#include "mlec/schema.hpp"

namespace mlec {

struct PerClassMetrics {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct EvaluationReport {
  double precision_micro = 0.0;
  double recall_micro = 0.0;
  double f1_micro = 0.0;
  double f1_macro = 0.0;
  double jaccard_accuracy = 0.0;
  double hamming_loss = 0.0;
  std::vector<PerClassMetrics> per_class;
};

namespace detail {

inline void check_shapes(const Eigen::MatrixXi& y_true,
                         const Eigen::MatrixXi& y_pred) {
  if (y_true.rows() != y_pred.rows() || y_true.cols() != y_pred.cols()) {
    throw ShapeError("metric inputs must share shape");
  }
  if (y_true.rows() < 1) throw ShapeError("metric inputs must be nonempty");
}

inline double safe_div(double num, double den) {
  return den > 0.0 ? num / den : 0.0;  // 0/0 -> 0 convention
}

}  // namespace detail

inline double micro_precision(const Eigen::MatrixXi& y_true,
                              const Eigen::MatrixXi& y_pred) {
  detail::check_shapes(y_true, y_pred);
  long tp = 0, fp = 0;
  for (Eigen::Index i = 0; i < y_true.rows(); ++i) {
    for (Eigen::Index j = 0; j < y_true.cols(); ++j) {
      if (y_pred(i, j) == 1) {
        (y_true(i, j) == 1 ? tp : fp) += 1;
      }
    }
  }
  return detail::safe_div(tp, tp + fp);
}

inline double micro_recall(const Eigen::MatrixXi& y_true,
                           const Eigen::MatrixXi& y_pred) {
  detail::check_shapes(y_true, y_pred);
  long tp = 0, fn = 0;
  for (Eigen::Index i = 0; i < y_true.rows(); ++i) {
    for (Eigen::Index j = 0; j < y_true.cols(); ++j) {
      if (y_true(i, j) == 1) {
        (y_pred(i, j) == 1 ? tp : fn) += 1;
      }
    }
  }
  return detail::safe_div(tp, tp + fn);
}

inline double micro_f1(const Eigen::MatrixXi& y_true,
                       const Eigen::MatrixXi& y_pred) {
  const double p = micro_precision(y_true, y_pred);
  const double r = micro_recall(y_true, y_pred);
  return detail::safe_div(2.0 * p * r, p + r);
}

inline double macro_f1(const Eigen::MatrixXi& y_true,
                       const Eigen::MatrixXi& y_pred) {
  detail::check_shapes(y_true, y_pred);
  double sum = 0.0;
  for (Eigen::Index c = 0; c < y_true.cols(); ++c) {
    long tp = 0, fp = 0, fn = 0;
    for (Eigen::Index i = 0; i < y_true.rows(); ++i) {
      if (y_pred(i, c) == 1 && y_true(i, c) == 1) ++tp;
      if (y_pred(i, c) == 1 && y_true(i, c) == 0) ++fp;
      if (y_pred(i, c) == 0 && y_true(i, c) == 1) ++fn;
    }
    const double p = detail::safe_div(tp, tp + fp);
    const double r = detail::safe_div(tp, tp + fn);
    sum += detail::safe_div(2.0 * p * r, p + r);
  }
  return sum / static_cast<double>(y_true.cols());
}

/// Mean per-instance |intersection| / |union|; both sets empty counts as 1.
inline double jaccard_accuracy(const Eigen::MatrixXi& y_true,
                               const Eigen::MatrixXi& y_pred) {
  detail::check_shapes(y_true, y_pred);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < y_true.rows(); ++i) {
    long inter = 0, uni = 0;
    for (Eigen::Index j = 0; j < y_true.cols(); ++j) {
      if (y_true(i, j) == 1 && y_pred(i, j) == 1) ++inter;
      if (y_true(i, j) == 1 || y_pred(i, j) == 1) ++uni;
    }
    sum += uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
  }
  return sum / static_cast<double>(y_true.rows());
}

inline double hamming_loss(const Eigen::MatrixXi& y_true,
                           const Eigen::MatrixXi& y_pred) {
  detail::check_shapes(y_true, y_pred);
  long wrong = 0;
  for (Eigen::Index i = 0; i < y_true.rows(); ++i) {
    for (Eigen::Index j = 0; j < y_true.cols(); ++j) {
      if (y_true(i, j) != y_pred(i, j)) ++wrong;
    }
  }
  return static_cast<double>(wrong) /
         (static_cast<double>(y_true.rows()) *
          static_cast<double>(y_true.cols()));
}

inline EvaluationReport classwise_report(const Eigen::MatrixXi& y_true,
                                         const Eigen::MatrixXi& y_pred,
                                         const EmotionLabelSet& schema =
                                             EmotionLabelSet::canonical()) {
  detail::check_shapes(y_true, y_pred);
  EvaluationReport report;
  report.precision_micro = micro_precision(y_true, y_pred);
  report.recall_micro = micro_recall(y_true, y_pred);
  report.f1_micro = micro_f1(y_true, y_pred);
  report.f1_macro = macro_f1(y_true, y_pred);
  report.jaccard_accuracy = jaccard_accuracy(y_true, y_pred);
  report.hamming_loss = hamming_loss(y_true, y_pred);
  for (Eigen::Index c = 0; c < y_true.cols(); ++c) {
    PerClassMetrics pc;
    pc.label = static_cast<std::size_t>(c) < kNumClasses
                   ? schema.label(static_cast<std::size_t>(c))
                   : "class_" + std::to_string(c);
    long tp = 0, fp = 0, fn = 0, support = 0;
    for (Eigen::Index i = 0; i < y_true.rows(); ++i) {
      if (y_true(i, c) == 1) ++support;
      if (y_pred(i, c) == 1 && y_true(i, c) == 1) ++tp;
      if (y_pred(i, c) == 1 && y_true(i, c) == 0) ++fp;
      if (y_pred(i, c) == 0 && y_true(i, c) == 1) ++fn;
    }
    pc.precision = detail::safe_div(tp, tp + fp);
    pc.recall = detail::safe_div(tp, tp + fn);
    pc.f1 = detail::safe_div(2.0 * pc.precision * pc.recall,
                             pc.precision + pc.recall);
    pc.support = static_cast<std::size_t>(support);
    report.per_class.push_back(std::move(pc));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

inline nlohmann::json report_to_json(const EvaluationReport& r) {
  nlohmann::json j{
      {"precision_micro", r.precision_micro},
      {"recall_micro", r.recall_micro},
      {"f1_micro", r.f1_micro},
      {"f1_macro", r.f1_macro},
      {"jaccard_accuracy", r.jaccard_accuracy},
      {"hamming_loss", r.hamming_loss},
  };
  j["per_class"] = nlohmann::json::array();
  for (const auto& pc : r.per_class) {
    j["per_class"].push_back({{"label", pc.label},
                              {"precision", pc.precision},
                              {"recall", pc.recall},
                              {"f1", pc.f1},
                              {"support", pc.support}});
  }
  return j;
}

inline EvaluationReport report_from_json(const nlohmann::json& j) {
  EvaluationReport r;
  r.precision_micro = j.at("precision_micro").get<double>();
  r.recall_micro = j.at("recall_micro").get<double>();
  r.f1_micro = j.at("f1_micro").get<double>();
  r.f1_macro = j.at("f1_macro").get<double>();
  r.jaccard_accuracy = j.at("jaccard_accuracy").get<double>();
  r.hamming_loss = j.at("hamming_loss").get<double>();
  for (const auto& e : j.at("per_class")) {
    PerClassMetrics pc;
    pc.label = e.at("label").get<std::string>();
    pc.precision = e.at("precision").get<double>();
    pc.recall = e.at("recall").get<double>();
    pc.f1 = e.at("f1").get<double>();
    pc.support = e.at("support").get<std::size_t>();
    r.per_class.push_back(std::move(pc));
  }
  return r;
}

inline std::string report_to_text(const EvaluationReport& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "aggregate metrics\n";
  out << "  precision_micro   " << r.precision_micro << '\n';
  out << "  recall_micro      " << r.recall_micro << '\n';
  out << "  f1_micro          " << r.f1_micro << '\n';
  out << "  f1_macro          " << r.f1_macro << '\n';
  out << "  jaccard_accuracy  " << r.jaccard_accuracy << '\n';
  out << "  hamming_loss      " << r.hamming_loss << '\n';
  out << '\n';
  out << std::left << std::setw(14) << "class" << std::right << std::setw(9)
      << "support" << std::setw(11) << "precision" << std::setw(9) << "recall"
      << std::setw(9) << "f1" << '\n';
  for (const auto& pc : r.per_class) {
    out << std::left << std::setw(14) << pc.label << std::right
        << std::setw(9) << pc.support << std::setw(11) << pc.precision
        << std::setw(9) << pc.recall << std::setw(9) << pc.f1 << '\n';
  }
  return out.str();
}

}  // namespace mlec
