#pragma once

#include <Eigen/Dense>
#include <istream>
#include <string>
#include <unordered_map>
#include <vector>

#include "lexrel/util.hpp"

namespace lexrel {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Pretrained word vectors, read-only after load. Every query yields a usable
/// vector: unknown words fall back to the mean of all loaded vectors.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(int dim, Vec unk) : dim_(dim), unk_(std::move(unk)) {}

  int dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }
  const Vec& unk() const { return unk_; }

  bool contains(const std::string& word) const {
    return vectors_.count(lowercase_ascii(word)) > 0;
  }

  void insert(const std::string& word, Vec v) {
    if (dim_ == 0) dim_ = static_cast<int>(v.size());
    if (v.size() != dim_) throw DataError("vector length mismatch for word '" + word + "'");
    vectors_.emplace(lowercase_ascii(word), std::move(v));
  }

  void set_dim(int dim) {
    if (dim_ != 0 && dim_ != dim) throw DataError("embedding dim already fixed");
    dim_ = dim;
  }

  void set_unk(Vec v) {
    if (dim_ != 0 && v.size() != dim_) throw DataError("unk vector length mismatch");
    unk_ = std::move(v);
  }

  /// Stored vector (after lowercasing), or the unk vector with was_oov set.
  /// Multiword terms average their per-word lookups; was_oov is set when any
  /// constituent was missing.
  std::pair<Vec, bool> lookup(const std::string& term) const {
    const std::string key = lowercase_ascii(term);
    if (key.find(' ') == std::string::npos) return lookup_single(key);
    Vec sum = Vec::Zero(dim_);
    bool any_oov = false;
    int n = 0;
    for (const std::string& w : split(key, ' ')) {
      if (w.empty()) continue;
      auto [v, oov] = lookup_single(w);
      sum += v;
      any_oov = any_oov || oov;
      ++n;
    }
    if (n == 0) return {unk_, true};
    return {sum / n, any_oov};
  }

 private:
  std::pair<Vec, bool> lookup_single(const std::string& word) const {
    auto it = vectors_.find(word);
    if (it == vectors_.end()) return {unk_, true};
    return {it->second, false};
  }

  int dim_ = 0;
  std::unordered_map<std::string, Vec> vectors_;
  Vec unk_;
};

/// Parses `word v1 ... vd` lines. A leading `count dim` line is detected and
/// skipped. Duplicate words keep their first occurrence.
inline EmbeddingTable load_text_embeddings(std::istream& in, int expected_dim = 0) {
  EmbeddingTable table;
  std::string line;
  long line_no = 0;
  int dim = expected_dim;
  Vec sum;
  long n_loaded = 0;
  bool first_content_line = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto fields = split_ws(line);
    if (fields.empty()) continue;
    if (first_content_line) {
      first_content_line = false;
      if (fields.size() == 2) {
        // Header only if both fields are plain non-negative integers.
        bool numeric = true;
        for (const auto& f : fields) {
          for (char c : f) {
            if (c < '0' || c > '9') {
              numeric = false;
              break;
            }
          }
        }
        if (numeric) {
          int header_dim = static_cast<int>(parse_int(fields[1], "embedding header"));
          if (dim == 0) dim = header_dim;
          if (dim != header_dim)
            throw DataError("line 1: header dim " + std::to_string(header_dim) +
                            " does not match expected dim " + std::to_string(dim));
          continue;
        }
      }
    }
    if (dim == 0) dim = static_cast<int>(fields.size()) - 1;
    if (static_cast<int>(fields.size()) - 1 != dim) {
      throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(dim) +
                      " vector components, got " + std::to_string(fields.size() - 1));
    }
    if (dim < 1) throw DataError("line " + std::to_string(line_no) + ": empty vector");
    const std::string word = lowercase_ascii(fields[0]);
    if (table.contains(word)) continue;  // keep first occurrence
    Vec v(dim);
    for (int i = 0; i < dim; ++i) {
      v[i] = parse_double(fields[static_cast<std::size_t>(i) + 1],
                          "line " + std::to_string(line_no));
    }
    if (sum.size() == 0) sum = Vec::Zero(dim);
    sum += v;
    ++n_loaded;
    table.insert(word, std::move(v));
  }
  if (dim == 0) throw DataError("embedding stream holds no vectors and no dim was given");
  table.set_dim(dim);
  table.set_unk(n_loaded > 0 ? Vec(sum / static_cast<double>(n_loaded)) : Vec(Vec::Zero(dim)));
  return table;
}

}  // namespace lexrel
