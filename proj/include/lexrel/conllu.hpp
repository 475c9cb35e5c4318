#pragma once

#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "lexrel/util.hpp"

namespace lexrel {

/// One token of a dependency-parsed sentence. Indices are 1-based; head 0
/// marks the root. Lemmas are lowercased at load.
struct Token {
  int index = 0;
  std::string surface;
  std::string lemma;
  std::string pos;
  int head = 0;
  std::string deprel;
};

struct Sentence {
  std::vector<Token> tokens;
  std::string id;  // from "# sent_id = ..." when present

  int size() const { return static_cast<int>(tokens.size()); }
  const Token& at(int index) const { return tokens.at(static_cast<std::size_t>(index - 1)); }
};

/// A sentence the parser had to drop, with the reason and source line.
struct ParseIssue {
  long line = 0;
  std::string message;
};

struct ParseDiagnostics {
  std::vector<ParseIssue> issues;
  long sentences_ok = 0;
  long sentences_rejected = 0;
};

/// Checks head indices are in range, exactly one root exists, and every token
/// is reachable from the root (i.e. the arcs form a tree).
inline std::optional<std::string> tree_violation(const Sentence& s) {
  const int n = s.size();
  int root = 0;
  for (const Token& t : s.tokens) {
    if (t.head < 0 || t.head > n) return "head index out of range: " + std::to_string(t.head);
    if (t.head == t.index) return "token " + std::to_string(t.index) + " is its own head";
    if (t.head == 0) ++root;
  }
  if (root != 1) return "expected exactly one root, found " + std::to_string(root);
  // BFS from the root over child lists.
  std::vector<std::vector<int>> children(static_cast<std::size_t>(n) + 1);
  int root_idx = 0;
  for (const Token& t : s.tokens) {
    if (t.head == 0) {
      root_idx = t.index;
    } else {
      children[static_cast<std::size_t>(t.head)].push_back(t.index);
    }
  }
  std::vector<char> seen(static_cast<std::size_t>(n) + 1, 0);
  std::vector<int> queue{root_idx};
  seen[static_cast<std::size_t>(root_idx)] = 1;
  int reached = 0;
  while (!queue.empty()) {
    int cur = queue.back();
    queue.pop_back();
    ++reached;
    for (int c : children[static_cast<std::size_t>(cur)]) {
      if (!seen[static_cast<std::size_t>(c)]) {
        seen[static_cast<std::size_t>(c)] = 1;
        queue.push_back(c);
      }
    }
  }
  if (reached != n) return "head arcs do not form a tree (cycle or disconnected token)";
  return std::nullopt;
}

namespace detail {

inline bool is_range_or_empty_id(const std::string& id) {
  return id.find('-') != std::string::npos || id.find('.') != std::string::npos;
}

inline void flush_block(std::vector<std::string>& lines, long first_line,
                        const std::string& sent_id,
                        const std::function<void(Sentence&&)>& emit,
                        ParseDiagnostics* diags) {
  if (lines.empty()) return;
  Sentence s;
  s.id = sent_id;
  long line_no = first_line;
  for (const std::string& raw : lines) {
    ++line_no;
    auto cols = split(raw, '\t');
    if (cols.size() != 10) {
      if (diags) {
        diags->issues.push_back({line_no - 1, "expected 10 tab-separated columns, got " +
                                                  std::to_string(cols.size())});
        ++diags->sentences_rejected;
      }
      lines.clear();
      return;
    }
    if (detail::is_range_or_empty_id(cols[0])) continue;  // multiword ranges, empty nodes
    Token t;
    try {
      t.index = static_cast<int>(parse_int(cols[0], "token id"));
      t.head = static_cast<int>(parse_int(cols[6], "head"));
    } catch (const DataError& e) {
      if (diags) {
        diags->issues.push_back({line_no - 1, e.what()});
        ++diags->sentences_rejected;
      }
      lines.clear();
      return;
    }
    t.surface = cols[1];
    t.lemma = lowercase_ascii(cols[2]);
    t.pos = cols[3];
    t.deprel = cols[7];
    s.tokens.push_back(std::move(t));
  }
  lines.clear();
  if (s.tokens.empty()) return;
  // Token ids must be 1..n in order.
  for (int i = 0; i < s.size(); ++i) {
    if (s.tokens[static_cast<std::size_t>(i)].index != i + 1) {
      if (diags) {
        diags->issues.push_back({first_line, "token ids are not consecutive from 1"});
        ++diags->sentences_rejected;
      }
      return;
    }
  }
  if (auto why = tree_violation(s)) {
    if (diags) {
      diags->issues.push_back({first_line, *why});
      ++diags->sentences_rejected;
    }
    return;
  }
  if (diags) ++diags->sentences_ok;
  emit(std::move(s));
}

}  // namespace detail

/// Streams sentences out of CoNLL-U text. Malformed blocks are reported
/// through diags and skipped; parsing always continues.
inline void for_each_sentence(std::istream& in, const std::function<void(Sentence&&)>& emit,
                              ParseDiagnostics* diags = nullptr) {
  std::vector<std::string> block;
  std::string sent_id;
  long line_no = 0;
  long block_start = 1;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      detail::flush_block(block, block_start, sent_id, emit, diags);
      sent_id.clear();
      block_start = line_no + 1;
      continue;
    }
    if (line[0] == '#') {
      auto eq = line.find('=');
      if (eq != std::string::npos && line.find("sent_id") != std::string::npos && eq + 1 < line.size()) {
        sent_id = trim(line.substr(eq + 1));
      }
      continue;
    }
    if (block.empty()) block_start = line_no;
    block.push_back(line);
  }
  detail::flush_block(block, block_start, sent_id, emit, diags);
}

inline std::vector<Sentence> parse_conllu(std::istream& in, ParseDiagnostics* diags = nullptr) {
  std::vector<Sentence> out;
  for_each_sentence(in, [&](Sentence&& s) { out.push_back(std::move(s)); }, diags);
  return out;
}

/// Writes the retained columns back out; the unused CoNLL-U columns are '_'.
inline void serialize_conllu(const Sentence& s, std::ostream& out) {
  if (!s.id.empty()) out << "# sent_id = " << s.id << "\n";
  for (const Token& t : s.tokens) {
    out << t.index << '\t' << t.surface << '\t' << t.lemma << '\t' << t.pos << "\t_\t_\t"
        << t.head << '\t' << t.deprel << "\t_\t_\n";
  }
  out << "\n";
}

/// Token indices where `term` occurs, ascending. Multiword terms (space
/// separated lemmas) match contiguous spans and resolve to the span token
/// whose head lies outside the span.
inline std::vector<int> lemma_occurrences(const Sentence& s, const std::string& term) {
  std::vector<int> out;
  const std::string needle = lowercase_ascii(term);
  const auto words = split(needle, ' ');
  const int n = s.size();
  if (words.size() == 1) {
    for (const Token& t : s.tokens) {
      if (t.lemma == needle) out.push_back(t.index);
    }
    return out;
  }
  const int m = static_cast<int>(words.size());
  for (int start = 1; start + m - 1 <= n; ++start) {
    bool match = true;
    for (int k = 0; k < m; ++k) {
      if (s.at(start + k).lemma != words[static_cast<std::size_t>(k)]) {
        match = false;
        break;
      }
    }
    if (!match) continue;
    for (int k = 0; k < m; ++k) {
      int head = s.at(start + k).head;
      if (head < start || head > start + m - 1) {  // head outside the span (root counts)
        out.push_back(start + k);
        break;
      }
    }
  }
  return out;
}

}  // namespace lexrel
