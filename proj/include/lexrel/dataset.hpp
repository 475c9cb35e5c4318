#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lexrel/rng.hpp"
#include "lexrel/util.hpp"

namespace lexrel {

struct LabeledPair {
  std::string x;
  std::string y;
  std::string relation;

  bool operator==(const LabeledPair&) const = default;
};

inline std::string pair_key(const std::string& x, const std::string& y) { return x + "\t" + y; }

/// Expected relation inventory plus surface-form aliases. An empty inventory
/// means "open": relations are taken as they appear (after normalization).
struct DatasetSchema {
  std::string name;
  std::vector<std::string> inventory;
  std::map<std::string, std::string> aliases;

  bool closed() const { return !inventory.empty(); }
};

/// Lowercases, trims, maps spaces/underscores to '-', then applies the
/// schema's alias table. Dataset files label the same relations with
/// inconsistent surface forms (hypo, HYPER, IsA, ...).
inline std::string normalize_relation(std::string_view raw, const DatasetSchema& schema) {
  std::string r = lowercase_ascii(trim(raw));
  for (char& ch : r) {
    if (ch == ' ' || ch == '_') ch = '-';
  }
  auto it = schema.aliases.find(r);
  return it != schema.aliases.end() ? it->second : r;
}

inline std::optional<DatasetSchema> builtin_schema(std::string_view name) {
  std::string n = lowercase_ascii(trim(name));
  if (n == "khn" || n == "k&h+n" || n == "kh+n") {
    return DatasetSchema{
        "khn",
        {"hypernym", "meronym", "co-hyponym", "random"},
        {{"hypo", "hypernym"},
         {"hyper", "hypernym"},
         {"mero", "meronym"},
         {"sibl", "co-hyponym"},
         {"coord", "co-hyponym"},
         {"false", "random"}}};
  }
  if (n == "bless") {
    return DatasetSchema{
        "bless",
        {"hypernym", "meronym", "co-hyponym", "event", "attribute", "random"},
        {{"hyper", "hypernym"},
         {"hypo", "hypernym"},
         {"mero", "meronym"},
         {"coord", "co-hyponym"},
         {"sibl", "co-hyponym"},
         {"attri", "attribute"},
         {"random-n", "random"},
         {"random-v", "random"},
         {"random-j", "random"},
         {"false", "random"}}};
  }
  if (n == "root09") {
    return DatasetSchema{"root09",
                         {"hypernym", "co-hyponym", "random"},
                         {{"hyper", "hypernym"},
                          {"hypo", "hypernym"},
                          {"coord", "co-hyponym"},
                          {"sibl", "co-hyponym"},
                          {"false", "random"}}};
  }
  if (n == "evalution") {
    return DatasetSchema{"evalution",
                         {"hypernym", "meronym", "attribute", "synonym", "antonym", "holonym",
                          "substance-meronym"},
                         {{"isa", "hypernym"},
                          {"partof", "meronym"},
                          {"hasproperty", "attribute"},
                          {"hasa", "holonym"},
                          {"madeof", "substance-meronym"}}};
  }
  return std::nullopt;
}

/// Picks a builtin schema when the file stem names one of the four benchmark
/// datasets; otherwise an open schema named after the stem.
inline DatasetSchema schema_for_path(const std::string& path) {
  std::string stem = path;
  if (auto slash = stem.find_last_of("/\\"); slash != std::string::npos) stem = stem.substr(slash + 1);
  if (auto dot = stem.find_last_of('.'); dot != std::string::npos) stem = stem.substr(0, dot);
  stem = lowercase_ascii(stem);
  for (const char* name : {"khn", "bless", "root09", "evalution"}) {
    if (stem.find(name) != std::string::npos) return *builtin_schema(name);
  }
  DatasetSchema open;
  open.name = stem.empty() ? "dataset" : stem;
  return open;
}

struct Dataset {
  std::string name;
  std::vector<std::string> inventory;
  std::vector<LabeledPair> train;
  std::vector<LabeledPair> val;
  std::vector<LabeledPair> test;

  const std::vector<LabeledPair>& split_named(std::string_view split) const {
    if (split == "train") return train;
    if (split == "val") return val;
    if (split == "test") return test;
    throw DataError("unknown split '" + std::string(split) + "' (expected train, val, or test)");
  }

  /// Enforces the structural invariants: labels drawn from the inventory,
  /// splits disjoint on (x, y), every val/test relation seen in train.
  void validate() const {
    std::set<std::string> known(inventory.begin(), inventory.end());
    std::unordered_map<std::string, std::string> owner;
    std::set<std::string> train_relations;
    for (const auto* split : {&train, &val, &test}) {
      const char* split_name = split == &train ? "train" : (split == &val ? "val" : "test");
      for (const LabeledPair& p : *split) {
        if (p.x.empty() || p.y.empty() || p.relation.empty())
          throw DataError("dataset '" + name + "': empty field in pair (" + p.x + ", " + p.y + ")");
        if (!known.count(p.relation))
          throw DataError("dataset '" + name + "': relation '" + p.relation +
                          "' missing from inventory");
        auto [it, inserted] = owner.emplace(pair_key(p.x, p.y), split_name);
        if (!inserted && it->second != split_name)
          throw DataError("dataset '" + name + "': pair (" + p.x + ", " + p.y + ") appears in both " +
                          it->second + " and " + split_name);
        if (split == &train) train_relations.insert(p.relation);
      }
    }
    for (const auto* split : {&val, &test}) {
      for (const LabeledPair& p : *split) {
        if (!train_relations.count(p.relation))
          throw DataError("dataset '" + name + "': relation '" + p.relation + "' appears in " +
                          (split == &val ? "val" : "test") + " but never in train");
      }
    }
  }
};

struct LoadResult {
  Dataset dataset;
  bool has_splits = false;
  std::vector<LabeledPair> pairs;  // file order, after deduplication
  std::int64_t duplicates_dropped = 0;
  std::vector<std::string> warnings;
};

/// Parses `x<TAB>y<TAB>relation` lines with an optional train|val|test fourth
/// column. Terms are lowercased, relations normalized through the schema.
inline LoadResult load_dataset(std::istream& in, const DatasetSchema& schema,
                               const std::string& source = "dataset") {
  LoadResult result;
  result.dataset.name = schema.name.empty() ? source : schema.name;
  std::set<std::string> known(schema.inventory.begin(), schema.inventory.end());

  std::map<std::string, int> unknown_relations;  // relation -> first line
  std::vector<std::string> conflicts;
  std::unordered_map<std::string, std::string> label_of;  // (x,y) -> relation
  std::unordered_set<std::string> seen_triples;
  std::set<std::string> open_inventory;
  int expected_cols = 0;
  int line_no = 0;
  std::string line;

  struct Row {
    LabeledPair pair;
    int split = -1;  // 0 train, 1 val, 2 test
  };
  std::vector<Row> rows;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    auto cols = split(line, '\t');
    if (cols.size() != 3 && cols.size() != 4)
      throw DataError(source + ":" + std::to_string(line_no) +
                      ": expected 3 or 4 tab-separated columns, got " +
                      std::to_string(cols.size()));
    if (expected_cols == 0) expected_cols = static_cast<int>(cols.size());
    if (static_cast<int>(cols.size()) != expected_cols)
      throw DataError(source + ":" + std::to_string(line_no) + ": mixed " +
                      std::to_string(expected_cols) + "- and " + std::to_string(cols.size()) +
                      "-column lines");

    Row row;
    row.pair.x = lowercase_ascii(trim(cols[0]));
    row.pair.y = lowercase_ascii(trim(cols[1]));
    row.pair.relation = normalize_relation(cols[2], schema);
    if (row.pair.x.empty() || row.pair.y.empty() || row.pair.relation.empty())
      throw DataError(source + ":" + std::to_string(line_no) + ": empty field");

    if (schema.closed() && !known.count(row.pair.relation))
      unknown_relations.emplace(row.pair.relation, line_no);
    if (!schema.closed()) open_inventory.insert(row.pair.relation);

    if (cols.size() == 4) {
      std::string split_name = lowercase_ascii(trim(cols[3]));
      if (split_name == "dev" || split_name == "valid" || split_name == "validation")
        split_name = "val";
      if (split_name == "train") row.split = 0;
      else if (split_name == "val") row.split = 1;
      else if (split_name == "test") row.split = 2;
      else
        throw DataError(source + ":" + std::to_string(line_no) + ": unknown split '" + split_name +
                        "' (expected train, val, or test)");
    }

    std::string key = pair_key(row.pair.x, row.pair.y);
    auto [it, inserted] = label_of.emplace(key, row.pair.relation);
    if (!inserted && it->second != row.pair.relation) {
      if (conflicts.size() < 5)
        conflicts.push_back("(" + row.pair.x + ", " + row.pair.y + "): '" + it->second +
                            "' vs '" + row.pair.relation + "' at line " + std::to_string(line_no));
      continue;
    }
    if (!seen_triples.insert(key + "\t" + row.pair.relation).second) {
      ++result.duplicates_dropped;
      continue;
    }
    rows.push_back(std::move(row));
  }

  if (!unknown_relations.empty()) {
    std::string msg = source + ": relations outside the " + schema.name + " inventory:";
    for (const auto& [rel, first_line] : unknown_relations)
      msg += " '" + rel + "' (first at line " + std::to_string(first_line) + ")";
    throw DataError(msg);
  }
  if (!conflicts.empty()) {
    std::string msg = source + ": conflicting labels for the same term pair: ";
    msg += join(conflicts, "; ");
    throw DataError(msg);
  }

  result.dataset.inventory = schema.closed()
                                 ? schema.inventory
                                 : std::vector<std::string>(open_inventory.begin(),
                                                            open_inventory.end());
  result.has_splits = expected_cols == 4;
  for (Row& row : rows) {
    result.pairs.push_back(row.pair);
    if (row.split == 0) result.dataset.train.push_back(std::move(row.pair));
    else if (row.split == 1) result.dataset.val.push_back(std::move(row.pair));
    else if (row.split == 2) result.dataset.test.push_back(std::move(row.pair));
  }
  if (result.duplicates_dropped > 0)
    result.warnings.push_back(source + ": dropped " + std::to_string(result.duplicates_dropped) +
                              " duplicate pair(s)");
  if (result.has_splits) result.dataset.validate();
  return result;
}

/// Writes `x<TAB>y<TAB>relation<TAB>split` lines, train then val then test.
inline void save_dataset(const Dataset& d, std::ostream& out) {
  for (const auto& [split, name] :
       {std::pair{&d.train, "train"}, {&d.val, "val"}, {&d.test, "test"}}) {
    for (const LabeledPair& p : *split)
      out << p.x << '\t' << p.y << '\t' << p.relation << '\t' << name << '\n';
  }
}

inline void save_pairs(const std::vector<LabeledPair>& pairs, std::ostream& out) {
  for (const LabeledPair& p : pairs) out << p.x << '\t' << p.y << '\t' << p.relation << '\n';
}

inline std::map<std::string, std::int64_t> relation_counts(const std::vector<LabeledPair>& pairs) {
  std::map<std::string, std::int64_t> counts;
  for (const LabeledPair& p : pairs) ++counts[p.relation];
  return counts;
}

struct FilterResult {
  std::vector<LabeledPair> kept;
  std::vector<std::pair<std::string, std::int64_t>> removed;  // per dropped relation, zero included
};

inline FilterResult filter_relations(const std::vector<LabeledPair>& pairs,
                                     const std::set<std::string>& drop) {
  FilterResult result;
  std::map<std::string, std::int64_t> removed;
  for (const std::string& rel : drop) removed[rel] = 0;
  for (const LabeledPair& p : pairs) {
    if (drop.count(p.relation)) ++removed[p.relation];
    else result.kept.push_back(p);
  }
  result.removed.assign(removed.begin(), removed.end());
  return result;
}

struct SplitRatios {
  double train = 0.70;
  double val = 0.05;
  double test = 0.25;
};

/// Stratified split: within each relation, pairs are shuffled with a seeded
/// generator and apportioned by largest remainder, so every split's share is
/// within one pair of its ratio.
inline Dataset make_splits(const std::vector<LabeledPair>& pairs, const SplitRatios& ratios,
                           std::uint64_t seed, const std::string& name,
                           const std::vector<std::string>& inventory = {}) {
  if (ratios.train <= 0 || ratios.val <= 0 || ratios.test <= 0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
    throw std::invalid_argument("split ratios must be positive and sum to 1");

  std::vector<std::string> relations = inventory;
  if (relations.empty()) {
    auto counts = relation_counts(pairs);
    for (const auto& [rel, n] : counts) relations.push_back(rel);
  }

  std::map<std::string, std::vector<LabeledPair>> by_relation;
  for (const LabeledPair& p : pairs) by_relation[p.relation].push_back(p);

  Dataset d;
  d.name = name;
  d.inventory = relations;
  SplitRng root(seed);
  for (const std::string& rel : relations) {
    auto it = by_relation.find(rel);
    if (it == by_relation.end()) continue;
    std::vector<LabeledPair>& group = it->second;
    if (group.size() < 3)
      throw DataError("relation '" + rel + "' has " + std::to_string(group.size()) +
                      " pair(s), fewer than the 3 splits");
    SplitRng rng = root.split("split:" + rel);
    rng.shuffle(group);

    const double n = static_cast<double>(group.size());
    const double raw[3] = {n * ratios.train, n * ratios.val, n * ratios.test};
    std::size_t take[3];
    std::size_t assigned = 0;
    for (int s = 0; s < 3; ++s) {
      take[s] = static_cast<std::size_t>(std::floor(raw[s]));
      assigned += take[s];
    }
    std::vector<int> order = {0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return raw[a] - std::floor(raw[a]) > raw[b] - std::floor(raw[b]);
    });
    for (std::size_t extra = group.size() - assigned, k = 0; k < extra; ++k) ++take[order[k % 3]];

    std::size_t pos = 0;
    for (std::size_t k = 0; k < take[0]; ++k) d.train.push_back(group[pos++]);
    for (std::size_t k = 0; k < take[1]; ++k) d.val.push_back(group[pos++]);
    for (std::size_t k = 0; k < take[2]; ++k) d.test.push_back(group[pos++]);
  }
  d.validate();
  return d;
}

/// Crosses randomly matched hypernym pairs (x1, y1), (x2, y2) with y1 != y2
/// into negatives (x1, y2), (x2, y1), skipping any pair already labeled in
/// the dataset. Defeats classifiers that memorize the label of y alone.
inline std::vector<LabeledPair> generate_switched_pairs(
    const std::vector<LabeledPair>& hypernym_pairs, const std::vector<LabeledPair>& full_dataset,
    std::uint64_t seed, const std::string& negative_label = "random") {
  for (const LabeledPair& p : hypernym_pairs) {
    if (p.relation != hypernym_pairs.front().relation)
      throw std::invalid_argument("switched-pair input must carry a single relation label");
  }
  std::set<std::string> distinct_y;
  for (const LabeledPair& p : hypernym_pairs) distinct_y.insert(p.y);
  if (distinct_y.size() < 2) return {};

  std::unordered_set<std::string> taken;
  for (const LabeledPair& p : full_dataset) taken.insert(pair_key(p.x, p.y));
  for (const LabeledPair& p : hypernym_pairs) taken.insert(pair_key(p.x, p.y));

  std::vector<std::size_t> order(hypernym_pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  SplitRng rng = SplitRng(seed).split("switched-pairs");
  rng.shuffle(order);

  std::vector<LabeledPair> out;
  for (std::size_t t = 0; t + 1 < order.size(); t += 2) {
    const LabeledPair& a = hypernym_pairs[order[t]];
    const LabeledPair& b = hypernym_pairs[order[t + 1]];
    if (a.y == b.y) continue;
    for (const auto& [x, y] : {std::pair{a.x, b.y}, {b.x, a.y}}) {
      if (x == y) continue;
      if (!taken.insert(pair_key(x, y)).second) continue;
      out.push_back({x, y, negative_label});
    }
  }
  return out;
}

}  // namespace lexrel
