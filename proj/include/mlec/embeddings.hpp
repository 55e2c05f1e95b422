#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "mlec/corpus.hpp"
#include "mlec/error.hpp"
#include "mlec/preprocess.hpp"
#include "mlec/prng.hpp"
#include "mlec/schema.hpp"

namespace mlec {

/// Per-token embedding sequence, padded/truncated to the backend's max_len.
/// Rows with mask 0 are zero padding.
struct TokenEmbeddingSequence {
  std::string backend;
  Eigen::MatrixXf matrix;  // L x d
  Eigen::VectorXi mask;    // L, entries in {0,1}
};

/// Feature-wise concatenation of several backends' sequences.
struct StackedEmbedding {
  Eigen::MatrixXf matrix;  // L x (d1+d2+...)
  Eigen::VectorXi mask;    // shared across backends
  std::vector<std::string> provenance;

  Eigen::Index width() const { return matrix.cols(); }
};

namespace detail {

/// Stream seed for one token: FNV-1a of the token bytes mixed with one
/// splitmix step of the backend seed. Tests recompute this independently.
inline std::uint64_t token_stream_seed(std::string_view token,
                                       std::uint64_t seed) {
  SplitMix64 mixer(seed);
  return fnv1a64(token) ^ mixer.next();
}

inline Eigen::VectorXf hashed_token_vector(std::string_view token,
                                           std::uint64_t seed, int dim) {
  Eigen::VectorXf v(dim);
  SplitMix64 rng(token_stream_seed(token, seed));
  for (int k = 0; k < dim; ++k) {
    v(k) = static_cast<float>(rng.uniform(-1.0, 1.0));
  }
  return v;
}

}  // namespace detail

class EmbeddingBackend {
 public:
  EmbeddingBackend(std::string name, int dim, int max_len)
      : name_(std::move(name)), dim_(dim), max_len_(max_len) {
    if (dim_ < 1) throw ConfigError("backend dim must be >= 1");
    if (max_len_ < 1) throw ConfigError("backend max_len must be >= 1");
  }
  virtual ~EmbeddingBackend() = default;

  const std::string& name() const { return name_; }
  int dim() const { return dim_; }
  int max_len() const { return max_len_; }

  virtual bool supports_training() const = 0;

  /// Task adaptation pass. epochs == 0 is a no-op for every backend.
  virtual std::shared_ptr<EmbeddingBackend> fine_tune(const Dataset& data,
                                                      int epochs) = 0;

  /// Deterministic per-token embedding extraction. Empty text yields an
  /// all-zero matrix with an all-zero mask.
  TokenEmbeddingSequence extract(const CleanText& text) const {
    TokenEmbeddingSequence seq;
    seq.backend = name_;
    seq.matrix = Eigen::MatrixXf::Zero(max_len_, dim_);
    seq.mask = Eigen::VectorXi::Zero(max_len_);
    auto tokens = detail::whitespace_tokens(text.text);
    const int n = std::min<int>(static_cast<int>(tokens.size()), max_len_);
    for (int t = 0; t < n; ++t) {
      seq.matrix.row(t) = token_vector(tokens[t]).transpose();
      seq.mask(t) = 1;
    }
    return seq;
  }

 protected:
  virtual Eigen::VectorXf token_vector(const std::string& token) const = 0;

 private:
  std::string name_;
  int dim_;
  int max_len_;
};

/// Desk-scale stand-in for a pretrained encoder: every token maps to a fixed
/// pseudo-random vector derived from (token, seed, dim). fine_tune is the
/// identity.
class ToyBackend : public EmbeddingBackend,
                   public std::enable_shared_from_this<ToyBackend> {
 public:
  ToyBackend(std::string name, int dim, std::uint64_t seed, int max_len = 32)
      : EmbeddingBackend(std::move(name), dim, max_len), seed_(seed) {}

  bool supports_training() const override { return true; }

  std::shared_ptr<EmbeddingBackend> fine_tune(const Dataset&, int) override {
    return shared_from_this();
  }

  std::uint64_t seed() const { return seed_; }

 protected:
  Eigen::VectorXf token_vector(const std::string& token) const override {
    return detail::hashed_token_vector(token, seed_, dim());
  }

 private:
  std::uint64_t seed_;
};

/// Hash-initialized embedding table plus a linear multi-label head; fine_tune
/// runs plain gradient descent on mean-pooled token vectors and writes the
/// adapted vectors back into the table. Small, deterministic, and enough to
/// exercise the fine-tune -> extract lifecycle.
class TrainableBackend
    : public EmbeddingBackend,
      public std::enable_shared_from_this<TrainableBackend> {
 public:
  TrainableBackend(std::string name, int dim, std::uint64_t seed,
                   int max_len = 32, float learning_rate = 0.05f)
      : EmbeddingBackend(std::move(name), dim, max_len),
        seed_(seed),
        lr_(learning_rate),
        head_w_(Eigen::MatrixXf::Zero(static_cast<Eigen::Index>(kNumClasses),
                                      dim)),
        head_b_(Eigen::VectorXf::Zero(static_cast<Eigen::Index>(kNumClasses))) {
  }

  bool supports_training() const override { return true; }

  std::shared_ptr<EmbeddingBackend> fine_tune(const Dataset& data,
                                              int epochs) override {
    if (epochs == 0) return shared_from_this();
    if (data.empty()) throw ValidationError("fine_tune on empty dataset");
    auto adapted = std::make_shared<TrainableBackend>(*this);
    adapted->run_epochs(data, epochs);
    return adapted;
  }

 protected:
  Eigen::VectorXf token_vector(const std::string& token) const override {
    if (auto it = table_.find(token); it != table_.end()) return it->second;
    return detail::hashed_token_vector(token, seed_, dim());
  }

 private:
  void run_epochs(const Dataset& data, int epochs) {
    const Eigen::Index C = static_cast<Eigen::Index>(kNumClasses);
    for (int e = 0; e < epochs; ++e) {
      for (const Example& ex : data.examples()) {
        auto tokens = detail::whitespace_tokens(ex.raw_text);
        if (tokens.empty()) continue;
        Eigen::VectorXf mean = Eigen::VectorXf::Zero(dim());
        for (const auto& tok : tokens) mean += lookup_or_seed(tok);
        mean /= static_cast<float>(tokens.size());

        Eigen::VectorXf z = head_w_ * mean + head_b_;
        Eigen::VectorXf p =
            (1.0f + (-z.array()).exp()).inverse().matrix();
        Eigen::VectorXf y(C);
        for (Eigen::Index c = 0; c < C; ++c) y(c) = ex.labels[c];
        Eigen::VectorXf gz = p - y;

        Eigen::VectorXf gmean =
            head_w_.transpose() * gz / static_cast<float>(tokens.size());
        head_w_.noalias() -= lr_ * gz * mean.transpose();
        head_b_ -= lr_ * gz;
        for (const auto& tok : tokens) {
          table_[tok] = lookup_or_seed(tok) - lr_ * gmean;
        }
      }
    }
  }

  Eigen::VectorXf lookup_or_seed(const std::string& token) {
    if (auto it = table_.find(token); it != table_.end()) return it->second;
    return detail::hashed_token_vector(token, seed_, dim());
  }

  std::uint64_t seed_;
  float lr_;
  std::unordered_map<std::string, Eigen::VectorXf> table_;
  Eigen::MatrixXf head_w_;
  Eigen::VectorXf head_b_;
};

/// Extraction-only backend; any fine-tune request is a capability error.
class FrozenBackend : public EmbeddingBackend,
                      public std::enable_shared_from_this<FrozenBackend> {
 public:
  FrozenBackend(std::string name, int dim, std::uint64_t seed,
                int max_len = 32)
      : EmbeddingBackend(std::move(name), dim, max_len), seed_(seed) {}

  bool supports_training() const override { return false; }

  std::shared_ptr<EmbeddingBackend> fine_tune(const Dataset&,
                                              int epochs) override {
    if (epochs == 0) return shared_from_this();
    throw CapabilityError("backend '" + name() +
                          "' does not support training");
  }

 protected:
  Eigen::VectorXf token_vector(const std::string& token) const override {
    return detail::hashed_token_vector(token, seed_, dim());
  }

 private:
  std::uint64_t seed_;
};

inline std::shared_ptr<EmbeddingBackend> fine_tune(
    const std::shared_ptr<EmbeddingBackend>& backend, const Dataset& data,
    int epochs) {
  return backend->fine_tune(data, epochs);
}

inline TokenEmbeddingSequence extract(const EmbeddingBackend& backend,
                                      const CleanText& text) {
  return backend.extract(text);
}

/// Feature-wise concatenation; all inputs must share L and the exact mask.
inline StackedEmbedding stack(const std::vector<TokenEmbeddingSequence>& seqs) {
  if (seqs.empty()) throw ValidationError("stack of zero sequences");
  const Eigen::Index L = seqs.front().matrix.rows();
  Eigen::Index total = 0;
  for (const auto& s : seqs) {
    if (s.matrix.rows() != L) {
      throw ValidationError("sequence length mismatch across backends");
    }
    if ((s.mask.array() != seqs.front().mask.array()).any()) {
      throw ValidationError("mask mismatch across backends (alignment)");
    }
    total += s.matrix.cols();
  }
  StackedEmbedding out;
  out.matrix.resize(L, total);
  out.mask = seqs.front().mask;
  Eigen::Index col = 0;
  for (const auto& s : seqs) {
    out.matrix.middleCols(col, s.matrix.cols()) = s.matrix;
    out.provenance.push_back(s.backend);
    col += s.matrix.cols();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embedding cache container
//
// Layout (little-endian):
//   magic   8 bytes  "MLECEMB1"
//   version u32      1
//   count   u64      number of sequences
//   L       u32      sequence length
//   d       u32      embedding width
//   then per sequence: L mask bytes, L*d float32 row-major
// ---------------------------------------------------------------------------

inline constexpr char kEmbeddingCacheMagic[8] = {'M', 'L', 'E', 'C',
                                                 'E', 'M', 'B', '1'};
inline constexpr std::uint32_t kEmbeddingCacheVersion = 1;

inline void write_embedding_cache(
    const std::string& path, const std::vector<TokenEmbeddingSequence>& seqs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot open cache for writing: " + path);
  out.write(kEmbeddingCacheMagic, 8);
  auto put_u32 = [&](std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
  };
  auto put_u64 = [&](std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), 8);
  };
  put_u32(kEmbeddingCacheVersion);
  put_u64(seqs.size());
  const std::uint32_t L =
      seqs.empty() ? 0 : static_cast<std::uint32_t>(seqs[0].matrix.rows());
  const std::uint32_t d =
      seqs.empty() ? 0 : static_cast<std::uint32_t>(seqs[0].matrix.cols());
  put_u32(L);
  put_u32(d);
  for (const auto& s : seqs) {
    if (s.matrix.rows() != L || s.matrix.cols() != d) {
      throw ShapeError("inhomogeneous sequences in embedding cache");
    }
    for (std::uint32_t t = 0; t < L; ++t) {
      char m = static_cast<char>(s.mask(t));
      out.write(&m, 1);
    }
    for (std::uint32_t t = 0; t < L; ++t) {
      for (std::uint32_t k = 0; k < d; ++k) {
        float v = s.matrix(t, k);
        out.write(reinterpret_cast<const char*>(&v), 4);
      }
    }
  }
  if (!out) throw RuntimeError("write failed: " + path);
}

inline std::vector<TokenEmbeddingSequence> read_embedding_cache(
    const std::string& path, const std::string& backend_name = "") {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot open cache: " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kEmbeddingCacheMagic, 8) != 0) {
    throw RuntimeError("corrupt embedding cache (bad magic): " + path);
  }
  auto get_u32 = [&]() {
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), 4)) {
      throw RuntimeError("corrupt embedding cache (truncated): " + path);
    }
    return v;
  };
  auto get_u64 = [&]() {
    std::uint64_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), 8)) {
      throw RuntimeError("corrupt embedding cache (truncated): " + path);
    }
    return v;
  };
  const std::uint32_t version = get_u32();
  if (version != kEmbeddingCacheVersion) {
    throw RuntimeError("unsupported embedding cache version " +
                       std::to_string(version));
  }
  const std::uint64_t count = get_u64();
  const std::uint32_t L = get_u32();
  const std::uint32_t d = get_u32();
  std::vector<TokenEmbeddingSequence> seqs;
  seqs.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    TokenEmbeddingSequence s;
    s.backend = backend_name;
    s.matrix.resize(L, d);
    s.mask.resize(L);
    for (std::uint32_t t = 0; t < L; ++t) {
      char m;
      if (!in.read(&m, 1)) {
        throw RuntimeError("corrupt embedding cache (truncated): " + path);
      }
      s.mask(t) = m;
    }
    for (std::uint32_t t = 0; t < L; ++t) {
      for (std::uint32_t k = 0; k < d; ++k) {
        float v;
        if (!in.read(reinterpret_cast<char*>(&v), 4)) {
          throw RuntimeError("corrupt embedding cache (truncated): " + path);
        }
        s.matrix(t, k) = v;
      }
    }
    seqs.push_back(std::move(s));
  }
  return seqs;
}

}  // namespace mlec
