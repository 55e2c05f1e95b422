#pragma once

// Independent per-element counting implementations of the evaluation
// metrics, used as the oracle for the library versions.

#include <algorithm>
#include <cstddef>
#include <vector>

namespace naive {

using BinMat = std::vector<std::vector<int>>;

struct Counts {
  long tp = 0, fp = 0, fn = 0;
};

inline Counts count_all(const BinMat& y_true, const BinMat& y_pred) {
  Counts c;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    for (std::size_t j = 0; j < y_true[i].size(); ++j) {
      if (y_pred[i][j] == 1 && y_true[i][j] == 1) ++c.tp;
      if (y_pred[i][j] == 1 && y_true[i][j] == 0) ++c.fp;
      if (y_pred[i][j] == 0 && y_true[i][j] == 1) ++c.fn;
    }
  }
  return c;
}

inline double micro_precision(const BinMat& y_true, const BinMat& y_pred) {
  Counts c = count_all(y_true, y_pred);
  return (c.tp + c.fp) == 0 ? 0.0
                            : static_cast<double>(c.tp) / (c.tp + c.fp);
}

inline double micro_recall(const BinMat& y_true, const BinMat& y_pred) {
  Counts c = count_all(y_true, y_pred);
  return (c.tp + c.fn) == 0 ? 0.0
                            : static_cast<double>(c.tp) / (c.tp + c.fn);
}

inline double micro_f1(const BinMat& y_true, const BinMat& y_pred) {
  double p = micro_precision(y_true, y_pred);
  double r = micro_recall(y_true, y_pred);
  return (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

inline double macro_f1(const BinMat& y_true, const BinMat& y_pred) {
  const std::size_t C = y_true[0].size();
  double sum = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      if (y_pred[i][c] == 1 && y_true[i][c] == 1) ++tp;
      if (y_pred[i][c] == 1 && y_true[i][c] == 0) ++fp;
      if (y_pred[i][c] == 0 && y_true[i][c] == 1) ++fn;
    }
    double p = (tp + fp) == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
    double r = (tp + fn) == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
    sum += (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }
  return sum / static_cast<double>(C);
}

inline double jaccard_accuracy(const BinMat& y_true, const BinMat& y_pred) {
  double sum = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    long inter = 0, uni = 0;
    for (std::size_t j = 0; j < y_true[i].size(); ++j) {
      if (y_true[i][j] == 1 && y_pred[i][j] == 1) ++inter;
      if (y_true[i][j] == 1 || y_pred[i][j] == 1) ++uni;
    }
    sum += uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
  }
  return sum / static_cast<double>(y_true.size());
}

inline double hamming_loss(const BinMat& y_true, const BinMat& y_pred) {
  long wrong = 0;
  long total = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    for (std::size_t j = 0; j < y_true[i].size(); ++j) {
      if (y_true[i][j] != y_pred[i][j]) ++wrong;
      ++total;
    }
  }
  return static_cast<double>(wrong) / static_cast<double>(total);
}

}  // namespace naive
