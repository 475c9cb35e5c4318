#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lexrel/conllu.hpp"
#include "lexrel/util.hpp"

namespace lexrel {

enum class EdgeDirection { Up, Root, Down };

inline const char* direction_name(EdgeDirection d) {
  switch (d) {
    case EdgeDirection::Up: return "UP";
    case EdgeDirection::Root: return "ROOT";
    case EdgeDirection::Down: return "DOWN";
  }
  return "?";
}

inline EdgeDirection parse_direction(const std::string& s) {
  if (s == "UP") return EdgeDirection::Up;
  if (s == "ROOT") return EdgeDirection::Root;
  if (s == "DOWN") return EdgeDirection::Down;
  throw DataError("unknown path direction: '" + s + "'");
}

/// One node of an encoded dependency path: the node's lemma (endpoints become
/// "X"/"Y"), POS, incoming dependency label, and position relative to the
/// path's apex.
struct PathEdge {
  std::string lemma;
  std::string pos;
  std::string dep;
  EdgeDirection direction = EdgeDirection::Root;

  auto tie() const { return std::tie(lemma, pos, dep, direction); }
  bool operator==(const PathEdge& o) const { return tie() == o.tie(); }
  bool operator<(const PathEdge& o) const { return tie() < o.tie(); }
};

struct DependencyPath {
  std::vector<PathEdge> edges;  // one per node, from the x endpoint to the y endpoint

  bool operator==(const DependencyPath& o) const { return edges == o.edges; }
  bool operator<(const DependencyPath& o) const { return edges < o.edges; }
};

namespace detail {

// The index file joins edge components with '/' and edges with ' ', so those
// characters (and '%' itself) are percent-escaped inside components.
inline std::string escape_component(const std::string& s) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  out.reserve(s.size());
  for (unsigned char c : s) {
    if (c == '%' || c == '/' || c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 0xF];
    } else {
      out += static_cast<char>(c);
    }
  }
  return out;
}

inline std::string unescape_component(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '%') {
      out += s[i];
      continue;
    }
    if (i + 2 >= s.size()) throw DataError("truncated percent escape in '" + s + "'");
    auto nib = [&](char c) -> int {
      if (c >= '0' && c <= '9') return c - '0';
      if (c >= 'A' && c <= 'F') return c - 'A' + 10;
      if (c >= 'a' && c <= 'f') return c - 'a' + 10;
      throw DataError("bad percent escape in '" + s + "'");
    };
    out += static_cast<char>(nib(s[i + 1]) * 16 + nib(s[i + 2]));
    i += 2;
  }
  return out;
}

}  // namespace detail

inline std::string path_to_string(const DependencyPath& p) {
  std::string out;
  for (std::size_t i = 0; i < p.edges.size(); ++i) {
    const PathEdge& e = p.edges[i];
    if (i) out += ' ';
    out += detail::escape_component(e.lemma);
    out += '/';
    out += detail::escape_component(e.pos);
    out += '/';
    out += detail::escape_component(e.dep);
    out += '/';
    out += direction_name(e.direction);
  }
  return out;
}

inline DependencyPath path_from_string(const std::string& s) {
  DependencyPath p;
  for (const std::string& tok : split(s, ' ')) {
    if (tok.empty()) throw DataError("empty edge in path string '" + s + "'");
    auto parts = split(tok, '/');
    if (parts.size() != 4) throw DataError("edge needs 4 '/'-separated components: '" + tok + "'");
    PathEdge e;
    e.lemma = detail::unescape_component(parts[0]);
    e.pos = detail::unescape_component(parts[1]);
    e.dep = detail::unescape_component(parts[2]);
    e.direction = parse_direction(parts[3]);
    p.edges.push_back(std::move(e));
  }
  return p;
}

/// The unique tree path from x_idx to y_idx through their lowest common
/// ancestor, as a node index sequence. Returns nullopt when the path has more
/// than max_path_len arcs.
inline std::optional<std::vector<int>> tree_path(const Sentence& s, int x_idx, int y_idx,
                                                 int max_path_len = 4) {
  const int n = s.size();
  if (x_idx < 1 || x_idx > n || y_idx < 1 || y_idx > n)
    throw std::out_of_range("token index out of range");
  if (x_idx == y_idx) throw std::invalid_argument("path endpoints must differ");

  // Ancestor chain of x (including x itself), with position along the chain.
  std::unordered_map<int, int> x_chain_pos;
  std::vector<int> x_chain;
  for (int cur = x_idx; cur != 0; cur = s.at(cur).head) {
    x_chain_pos.emplace(cur, static_cast<int>(x_chain.size()));
    x_chain.push_back(cur);
  }
  // Walk up from y until we meet it.
  std::vector<int> y_side;
  int lca = 0;
  for (int cur = y_idx; cur != 0; cur = s.at(cur).head) {
    auto it = x_chain_pos.find(cur);
    if (it != x_chain_pos.end()) {
      lca = cur;
      break;
    }
    y_side.push_back(cur);
  }
  if (lca == 0) throw NumericError("no common ancestor; sentence is not a tree");

  std::vector<int> nodes;
  for (int i = 0; i <= x_chain_pos.at(lca); ++i) nodes.push_back(x_chain[static_cast<std::size_t>(i)]);
  for (auto it = y_side.rbegin(); it != y_side.rend(); ++it) nodes.push_back(*it);
  if (static_cast<int>(nodes.size()) - 1 > max_path_len) return std::nullopt;
  return nodes;
}

/// Encodes a node path: each node contributes lemma/POS/deprel plus its
/// position relative to the apex (the LCA). Endpoint lemmas become "X"/"Y".
inline DependencyPath encode_path(const Sentence& s, const std::vector<int>& node_path, int x_idx,
                                  int y_idx) {
  // The apex is the node of minimal depth.
  auto depth = [&](int idx) {
    int d = 0;
    for (int cur = s.at(idx).head; cur != 0; cur = s.at(cur).head) ++d;
    return d;
  };
  std::size_t apex = 0;
  int best = depth(node_path.at(0));
  for (std::size_t i = 1; i < node_path.size(); ++i) {
    int d = depth(node_path[i]);
    if (d < best) {
      best = d;
      apex = i;
    }
  }
  DependencyPath p;
  for (std::size_t i = 0; i < node_path.size(); ++i) {
    const Token& t = s.at(node_path[i]);
    PathEdge e;
    if (node_path[i] == x_idx) {
      e.lemma = "X";
    } else if (node_path[i] == y_idx) {
      e.lemma = "Y";
    } else {
      e.lemma = t.lemma;
    }
    e.pos = t.pos;
    e.dep = t.deprel;
    e.direction = i < apex   ? EdgeDirection::Up
                  : i == apex ? EdgeDirection::Root
                              : EdgeDirection::Down;
    p.edges.push_back(std::move(e));
  }
  return p;
}

/// Multiset of encoded paths per term pair, with corpus occurrence counts.
/// Immutable once built except through add/merge.
class PathIndex {
 public:
  using PathCounts = std::map<DependencyPath, std::int64_t>;
  using Key = std::pair<std::string, std::string>;

  void add(const std::string& x, const std::string& y, const DependencyPath& p,
           std::int64_t count = 1) {
    entries_[{x, y}][p] += count;
  }

  const PathCounts* find(const std::string& x, const std::string& y) const {
    auto it = entries_.find({x, y});
    return it == entries_.end() ? nullptr : &it->second;
  }

  void merge_in(const PathIndex& other) {
    for (const auto& [key, counts] : other.entries_) {
      auto& mine = entries_[key];
      for (const auto& [path, count] : counts) mine[path] += count;
    }
  }

  /// Drop (pair, path) entries with count < min_count; prune empty pairs.
  void filter_min_count(std::int64_t min_count) {
    for (auto it = entries_.begin(); it != entries_.end();) {
      auto& counts = it->second;
      for (auto pit = counts.begin(); pit != counts.end();) {
        if (pit->second < min_count) {
          pit = counts.erase(pit);
        } else {
          ++pit;
        }
      }
      it = counts.empty() ? entries_.erase(it) : std::next(it);
    }
  }

  std::size_t pair_count() const { return entries_.size(); }

  std::int64_t total_count() const {
    std::int64_t total = 0;
    for (const auto& [key, counts] : entries_) {
      for (const auto& [path, count] : counts) total += count;
    }
    return total;
  }

  const std::map<Key, PathCounts>& entries() const { return entries_; }

  bool operator==(const PathIndex& o) const { return entries_ == o.entries_; }

  static constexpr const char* kHeader = "#relpath-index v1";

  void save(std::ostream& out) const {
    out << kHeader << "\n";
    for (const auto& [key, counts] : entries_) {
      // Pairs iterate lexicographically already; paths are ordered by their
      // encoded string so the output is byte-deterministic.
      std::vector<std::pair<std::string, std::int64_t>> lines;
      lines.reserve(counts.size());
      for (const auto& [path, count] : counts) lines.emplace_back(path_to_string(path), count);
      std::sort(lines.begin(), lines.end());
      for (const auto& [str, count] : lines) {
        out << key.first << '\t' << key.second << '\t' << str << '\t' << count << "\n";
      }
    }
  }

  static PathIndex load(std::istream& in) {
    PathIndex index;
    std::string line;
    long line_no = 0;
    if (!std::getline(in, line)) throw DataError("empty path index stream");
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kHeader)
      throw DataError("line 1: expected header '" + std::string(kHeader) + "', got '" + line + "'");
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      auto cols = split(line, '\t');
      if (cols.size() != 4)
        throw DataError("line " + std::to_string(line_no) + ": expected 4 columns, got " +
                        std::to_string(cols.size()));
      std::int64_t count = parse_int(cols[3], "line " + std::to_string(line_no));
      if (count < 1)
        throw DataError("line " + std::to_string(line_no) + ": count must be >= 1");
      index.add(cols[0], cols[1], path_from_string(cols[2]), count);
    }
    return index;
  }

 private:
  std::map<Key, PathCounts> entries_;
};

inline PathIndex merge_indexes(const PathIndex& a, const PathIndex& b) {
  PathIndex out = a;
  out.merge_in(b);
  return out;
}

struct ExtractionConfig {
  int max_path_len = 4;
  int max_sentence_tokens = 80;
  std::int64_t per_pair_count_cap = 0;  // 0 = unlimited; caps total occurrences per pair
};

struct ExtractionStats {
  long sentences_seen = 0;
  long sentences_skipped_long = 0;
  long pair_occurrences = 0;   // co-occurrences whose path fit the length cap
  long paths_too_long = 0;

  ExtractionStats& operator+=(const ExtractionStats& o) {
    sentences_seen += o.sentences_seen;
    sentences_skipped_long += o.sentences_skipped_long;
    pair_occurrences += o.pair_occurrences;
    paths_too_long += o.paths_too_long;
    return *this;
  }
};

/// The set of term pairs to extract paths for. Terms are matched as lowercase
/// lemmas; multiword terms are space-separated lemma sequences.
class TermPairSet {
 public:
  void add(const std::string& x, const std::string& y) {
    std::string lx = lowercase_ascii(x), ly = lowercase_ascii(y);
    pairs_.insert(lx + '\t' + ly);
    add_term(lx);
    add_term(ly);
  }

  bool contains(const std::string& x, const std::string& y) const {
    return pairs_.count(x + '\t' + y) > 0;
  }

  bool empty() const { return pairs_.empty(); }
  std::size_t size() const { return pairs_.size(); }

  const std::unordered_set<std::string>& single_terms() const { return single_terms_; }
  const std::vector<std::string>& multi_terms() const { return multi_terms_; }

 private:
  void add_term(const std::string& t) {
    if (t.find(' ') == std::string::npos) {
      single_terms_.insert(t);
    } else if (!multi_seen_.count(t)) {
      multi_seen_.insert(t);
      multi_terms_.push_back(t);
    }
  }

  std::unordered_set<std::string> pairs_;
  std::unordered_set<std::string> single_terms_;
  std::unordered_set<std::string> multi_seen_;
  std::vector<std::string> multi_terms_;
};

/// Adds every encoded path between co-occurring pairs to `index`. All
/// occurrence combinations within a sentence contribute.
inline void extract_sentence_paths(const Sentence& s, const TermPairSet& pairs,
                                   const ExtractionConfig& cfg, PathIndex& index,
                                   ExtractionStats& stats) {
  ++stats.sentences_seen;
  if (s.size() > cfg.max_sentence_tokens) {
    ++stats.sentences_skipped_long;
    return;
  }
  // Occurrence positions of every term present in this sentence.
  std::vector<std::pair<std::string, std::vector<int>>> present;
  {
    std::unordered_map<std::string, std::vector<int>> occ;
    for (const Token& t : s.tokens) {
      if (pairs.single_terms().count(t.lemma)) occ[t.lemma].push_back(t.index);
    }
    for (const std::string& term : pairs.multi_terms()) {
      auto hits = lemma_occurrences(s, term);
      if (!hits.empty()) occ.emplace(term, std::move(hits));
    }
    present.assign(occ.begin(), occ.end());
    std::sort(present.begin(), present.end());  // deterministic pair visit order
  }
  if (present.empty()) return;
  for (const auto& [x, xs] : present) {
    for (const auto& [y, ys] : present) {
      if (!pairs.contains(x, y)) continue;
      std::int64_t budget = -1;  // unlimited
      if (cfg.per_pair_count_cap > 0) {
        budget = cfg.per_pair_count_cap;
        if (const auto* counts = index.find(x, y)) {
          for (const auto& [p, c] : *counts) budget -= c;
        }
      }
      for (int xi : xs) {
        for (int yi : ys) {
          if (xi == yi || budget == 0) continue;
          auto nodes = tree_path(s, xi, yi, cfg.max_path_len);
          if (!nodes) {
            ++stats.paths_too_long;
            continue;
          }
          index.add(x, y, encode_path(s, *nodes, xi, yi));
          ++stats.pair_occurrences;
          if (budget > 0) --budget;
        }
      }
    }
  }
}

inline PathIndex extract_pair_paths(std::span<const Sentence> corpus, const TermPairSet& pairs,
                                    const ExtractionConfig& cfg = {},
                                    ExtractionStats* stats = nullptr) {
  PathIndex index;
  ExtractionStats local;
  for (const Sentence& s : corpus) extract_sentence_paths(s, pairs, cfg, index, local);
  if (stats) *stats += local;
  return index;
}

}  // namespace lexrel
