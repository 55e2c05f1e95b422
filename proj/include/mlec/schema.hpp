#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "mlec/error.hpp"

namespace mlec {

inline constexpr std::size_t kNumClasses = 12;

/// The fixed, ordered emotion label set. The order defines the column order
/// of every label vector and matrix for the lifetime of a run.
class EmotionLabelSet {
 public:
  static const EmotionLabelSet& canonical() {
    static const EmotionLabelSet instance;
    return instance;
  }

  const std::array<std::string, kNumClasses>& labels() const {
    return labels_;
  }

  const std::string& label(std::size_t c) const { return labels_.at(c); }

  /// Index of a label name, or npos when unknown.
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t index_of(std::string_view name) const {
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      if (labels_[c] == name) return c;
    }
    return npos;
  }

 private:
  EmotionLabelSet() = default;

  std::array<std::string, kNumClasses> labels_ = {
      "anger",    "anticipation", "disgust", "fear",
      "joy",      "love",         "optimism", "pessimism",
      "sadness",  "surprise",     "trust",    "neutral"};
};

}  // namespace mlec
