#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "mlec/error.hpp"
#include "mlec/prng.hpp"
#include "mlec/schema.hpp"

namespace mlec {

struct Example {
  std::string id;
  std::string raw_text;
  std::array<std::uint8_t, kNumClasses> labels{};

  bool operator==(const Example&) const = default;
};

/// An ordered collection of examples plus the derived N x 12 label matrix.
/// Read-only after construction.
class Dataset {
 public:
  Dataset() = default;

  explicit Dataset(std::vector<Example> examples)
      : examples_(std::move(examples)),
        label_matrix_(static_cast<Eigen::Index>(examples_.size()),
                      static_cast<Eigen::Index>(kNumClasses)) {
    for (std::size_t i = 0; i < examples_.size(); ++i) {
      for (std::size_t c = 0; c < kNumClasses; ++c) {
        label_matrix_(static_cast<Eigen::Index>(i),
                      static_cast<Eigen::Index>(c)) = examples_[i].labels[c];
      }
    }
  }

  const std::vector<Example>& examples() const { return examples_; }
  const Eigen::MatrixXi& label_matrix() const { return label_matrix_; }
  std::size_t size() const { return examples_.size(); }
  bool empty() const { return examples_.empty(); }

  bool operator==(const Dataset& other) const {
    return examples_ == other.examples_;
  }

 private:
  std::vector<Example> examples_;
  Eigen::MatrixXi label_matrix_{0, static_cast<Eigen::Index>(kNumClasses)};
};

struct ClassDistribution {
  std::array<std::size_t, kNumClasses> counts{};
  std::size_t total = 0;
};

namespace detail {

inline std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == '\t') {
      fields.emplace_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return fields;
}

inline void strip_bom(std::string& s) {
  if (s.size() >= 3 && static_cast<unsigned char>(s[0]) == 0xEF &&
      static_cast<unsigned char>(s[1]) == 0xBB &&
      static_cast<unsigned char>(s[2]) == 0xBF) {
    s.erase(0, 3);
  }
}

inline void strip_cr(std::string& s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
}

}  // namespace detail

/// Loads a SemEval-style TSV: header `ID<TAB>Tweet<TAB><label columns>`,
/// label cells ASCII 0/1. Files carrying only the first 11 label columns are
/// accepted; the missing `neutral` column is filled with zeros.
inline Dataset load_tsv(const std::string& path,
                        const EmotionLabelSet& schema =
                            EmotionLabelSet::canonical()) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open TSV file: " + path);

  std::string line;
  if (!std::getline(in, line)) {
    throw ParseError(1, "empty file, expected header row");
  }
  detail::strip_bom(line);
  detail::strip_cr(line);

  auto header = detail::split_tabs(line);
  if (header.size() < 2 || header[0] != "ID" || header[1] != "Tweet") {
    throw ParseError(1, "header must start with ID<TAB>Tweet");
  }
  const std::size_t n_label_cols = header.size() - 2;
  if (n_label_cols != kNumClasses && n_label_cols != kNumClasses - 1) {
    throw ParseError(1, "expected 11 or 12 label columns, got " +
                            std::to_string(n_label_cols));
  }
  for (std::size_t c = 0; c < n_label_cols; ++c) {
    if (header[2 + c] != schema.label(c)) {
      throw ParseError(1, "label column " + std::to_string(c) +
                              " is '" + header[2 + c] + "', expected '" +
                              schema.label(c) + "'");
    }
  }

  std::vector<Example> examples;
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
    Example ex;
    ex.id = fields[0];
    ex.raw_text = fields[1];
    if (ex.raw_text.empty()) {
      throw ValidationError(line_no, "empty Tweet cell");
    }
    for (std::size_t c = 0; c < n_label_cols; ++c) {
      const std::string& cell = fields[2 + c];
      if (cell == "0") {
        ex.labels[c] = 0;
      } else if (cell == "1") {
        ex.labels[c] = 1;
      } else {
        throw ValidationError(line_no, "label cell '" + cell +
                                           "' not in {0,1} (column '" +
                                           schema.label(c) + "')");
      }
    }
    // 11-column files: neutral stays 0.
    examples.push_back(std::move(ex));
  }
  return Dataset(std::move(examples));
}

/// Writes the exact TSV format load_tsv reads (always 12 label columns).
inline void save_tsv(const Dataset& d, const std::string& path,
                     const EmotionLabelSet& schema =
                         EmotionLabelSet::canonical()) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot open file for writing: " + path);
  out << "ID\tTweet";
  for (std::size_t c = 0; c < kNumClasses; ++c) out << '\t' << schema.label(c);
  out << '\n';
  for (const Example& ex : d.examples()) {
    out << ex.id << '\t' << ex.raw_text;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      out << '\t' << (ex.labels[c] ? '1' : '0');
    }
    out << '\n';
  }
  if (!out) throw RuntimeError("write failed: " + path);
}

inline ClassDistribution class_distribution(const Dataset& d) {
  if (d.empty()) throw ValidationError("class_distribution on empty dataset");
  ClassDistribution dist;
  dist.total = d.size();
  for (const Example& ex : d.examples()) {
    for (std::size_t c = 0; c < kNumClasses; ++c) dist.counts[c] += ex.labels[c];
  }
  return dist;
}

/// Deterministic shuffle-split into three parts. Sizes are
/// floor(f1*N), floor(f2*N) and the remainder.
inline std::array<Dataset, 3> split(const Dataset& d,
                                    std::array<double, 3> fractions,
                                    std::uint64_t seed) {
  double sum = fractions[0] + fractions[1] + fractions[2];
  for (double f : fractions) {
    if (f < 0.0 || f > 1.0) {
      throw ConfigError("split fraction outside [0,1]");
    }
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
  if (d.empty()) throw ValidationError("split on empty dataset");

  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  SplitMix64 rng(seed);
  deterministic_shuffle(order, rng);

  const std::size_t n = d.size();
  const std::size_t n0 = static_cast<std::size_t>(fractions[0] * n);
  const std::size_t n1 = static_cast<std::size_t>(fractions[1] * n);

  std::array<std::vector<Example>, 3> parts;
  for (std::size_t i = 0; i < n; ++i) {
    const Example& ex = d.examples()[order[i]];
    if (i < n0) {
      parts[0].push_back(ex);
    } else if (i < n0 + n1) {
      parts[1].push_back(ex);
    } else {
      parts[2].push_back(ex);
    }
  }
  return {Dataset(std::move(parts[0])), Dataset(std::move(parts[1])),
          Dataset(std::move(parts[2]))};
}

}  // namespace mlec
