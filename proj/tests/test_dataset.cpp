#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "lexrel/dataset.hpp"

using namespace lexrel;

namespace {
DatasetSchema open_schema() {
  DatasetSchema s;
  s.name = "open";
  return s;
}
}  // namespace

TEST_CASE("loads three-column pairs with normalization") {
  std::istringstream in(
      "# comment\n"
      "Cat\tAnimal\tHYPER\n"
      "wheel\tcar\tmero\n"
      "\n"
      "cat\tdog\tsibl\n");
  LoadResult r = load_dataset(in, *builtin_schema("bless"));
  CHECK_FALSE(r.has_splits);
  REQUIRE(r.pairs.size() == 3);
  CHECK(r.pairs[0] == LabeledPair{"cat", "animal", "hypernym"});
  CHECK(r.pairs[1] == LabeledPair{"wheel", "car", "meronym"});
  CHECK(r.pairs[2] == LabeledPair{"cat", "dog", "co-hyponym"});
}

TEST_CASE("four-column files carry their own splits") {
  std::istringstream in(
      "cat\tanimal\thyper\ttrain\n"
      "dog\tanimal\thyper\tdev\n"
      "owl\tbird\thyper\ttest\n");
  LoadResult r = load_dataset(in, open_schema());
  CHECK(r.has_splits);
  CHECK(r.dataset.train.size() == 1);
  CHECK(r.dataset.val.size() == 1);  // dev maps to val
  CHECK(r.dataset.test.size() == 1);
}

TEST_CASE("closed schema rejects unknown relations, naming all offenders") {
  std::istringstream in(
      "a\tb\thyper\n"
      "c\td\tmystery\n"
      "e\tf\tenigma\n");
  try {
    load_dataset(in, *builtin_schema("root09"), "file.tsv");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    std::string msg = e.what();
    CHECK(msg.find("mystery") != std::string::npos);
    CHECK(msg.find("enigma") != std::string::npos);
    CHECK(msg.find("line 2") != std::string::npos);
  }
}

TEST_CASE("exact duplicates are dropped with a warning") {
  std::istringstream in(
      "a\tb\thyper\n"
      "a\tb\thyper\n"
      "a\tc\thyper\n");
  LoadResult r = load_dataset(in, open_schema());
  CHECK(r.pairs.size() == 2);
  CHECK(r.duplicates_dropped == 1);
  REQUIRE(r.warnings.size() == 1);
  CHECK(r.warnings[0].find("1 duplicate") != std::string::npos);
}

TEST_CASE("conflicting labels for one pair are an error") {
  std::istringstream in(
      "a\tb\thyper\n"
      "a\tb\tsibl\n");
  CHECK_THROWS_AS(load_dataset(in, *builtin_schema("root09")), DataError);
}

TEST_CASE("mixed column counts are an error") {
  std::istringstream in(
      "a\tb\thyper\ttrain\n"
      "c\td\thyper\n");
  CHECK_THROWS_AS(load_dataset(in, open_schema()), DataError);
}

TEST_CASE("unknown split names are an error") {
  std::istringstream in("a\tb\thyper\theldout\n");
  CHECK_THROWS_AS(load_dataset(in, open_schema()), DataError);
}

TEST_CASE("schema_for_path matches benchmark stems, else open") {
  CHECK(schema_for_path("/data/bless.tsv").name == "bless");
  CHECK(schema_for_path("datasets/ROOT09.tsv").name == "root09");
  CHECK(schema_for_path("khn_pairs.txt").name == "khn");
  CHECK(schema_for_path("EVALution.tsv").name == "evalution");
  DatasetSchema open = schema_for_path("my_pairs.tsv");
  CHECK(open.name == "my_pairs");
  CHECK_FALSE(open.closed());
}

TEST_CASE("evalution aliases map to canonical relations") {
  DatasetSchema s = *builtin_schema("evalution");
  CHECK(normalize_relation("IsA", s) == "hypernym");
  CHECK(normalize_relation("PartOf", s) == "meronym");
  CHECK(normalize_relation("MadeOf", s) == "substance-meronym");
  CHECK(normalize_relation("HasA", s) == "holonym");
  CHECK(normalize_relation("HasProperty", s) == "attribute");
  CHECK(normalize_relation(" Antonym ", s) == "antonym");
}

TEST_CASE("validate rejects cross-split leakage and unknown relations") {
  Dataset d;
  d.name = "t";
  d.inventory = {"hypernym"};
  d.train = {{"a", "b", "hypernym"}};
  d.test = {{"a", "b", "hypernym"}};
  CHECK_THROWS_AS(d.validate(), DataError);

  d.test = {{"c", "d", "stranger"}};
  CHECK_THROWS_AS(d.validate(), DataError);

  d.inventory = {"hypernym", "random"};
  d.test = {{"c", "d", "random"}};  // random never in train
  CHECK_THROWS_AS(d.validate(), DataError);
}

TEST_CASE("filter_relations reports zero counts for absent relations") {
  std::vector<LabeledPair> pairs{{"a", "b", "hypernym"}, {"c", "d", "random"}};
  FilterResult r = filter_relations(pairs, {"random", "event"});
  CHECK(r.kept.size() == 1);
  REQUIRE(r.removed.size() == 2);
  CHECK(r.removed[0] == std::pair<std::string, std::int64_t>{"event", 0});
  CHECK(r.removed[1] == std::pair<std::string, std::int64_t>{"random", 1});
}

TEST_CASE("stratified splits honor 70/5/25 within each relation") {
  std::vector<LabeledPair> pairs;
  for (int i = 0; i < 100; ++i)
    pairs.push_back({"x" + std::to_string(i), "y" + std::to_string(i), "hypernym"});
  for (int i = 0; i < 40; ++i)
    pairs.push_back({"p" + std::to_string(i), "q" + std::to_string(i), "random"});

  Dataset d = make_splits(pairs, SplitRatios{}, 7, "t");
  auto count = [&](const std::vector<LabeledPair>& v, const std::string& rel) {
    return std::count_if(v.begin(), v.end(),
                         [&](const LabeledPair& p) { return p.relation == rel; });
  };
  CHECK(count(d.train, "hypernym") == 70);
  CHECK(count(d.val, "hypernym") == 5);
  CHECK(count(d.test, "hypernym") == 25);
  CHECK(count(d.train, "random") == 28);
  CHECK(count(d.val, "random") == 2);
  CHECK(count(d.test, "random") == 10);

  // Same seed, same splits; the split is also a partition of the input.
  Dataset d2 = make_splits(pairs, SplitRatios{}, 7, "t");
  CHECK(d2.train == d.train);
  CHECK(d2.val == d.val);
  CHECK(d2.test == d.test);
  CHECK(d.train.size() + d.val.size() + d.test.size() == pairs.size());

  Dataset d3 = make_splits(pairs, SplitRatios{}, 8, "t");
  CHECK(d3.train != d.train);
}

TEST_CASE("make_splits validates ratios and relation sizes") {
  std::vector<LabeledPair> pairs{{"a", "b", "r"}, {"c", "d", "r"}, {"e", "f", "r"}};
  CHECK_THROWS_AS(make_splits(pairs, SplitRatios{0.5, 0.5, 0.5}, 1, "t"), std::invalid_argument);
  CHECK_THROWS_AS(make_splits(pairs, SplitRatios{1.0, -0.5, 0.5}, 1, "t"), std::invalid_argument);

  std::vector<LabeledPair> tiny{{"a", "b", "rare"}, {"c", "d", "rare"}};
  try {
    make_splits(tiny, SplitRatios{}, 1, "t");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("rare") != std::string::npos);
  }

  // 3 pairs: floors give train 2, largest remainder sends the leftover to test.
  Dataset d = make_splits(pairs, SplitRatios{}, 1, "t");
  CHECK(d.train.size() == 2);
  CHECK(d.val.size() == 0);
  CHECK(d.test.size() == 1);
}

TEST_CASE("switched pairs cross the worked example") {
  std::vector<LabeledPair> hyp{{"apple", "fruit", "hypernym"}, {"cat", "animal", "hypernym"}};
  std::vector<LabeledPair> out = generate_switched_pairs(hyp, hyp, 123);
  std::set<std::pair<std::string, std::string>> got;
  for (const LabeledPair& p : out) {
    CHECK(p.relation == "random");
    got.emplace(p.x, p.y);
  }
  CHECK(got == std::set<std::pair<std::string, std::string>>{{"apple", "animal"}, {"cat", "fruit"}});
}

TEST_CASE("switched pairs never collide with existing pairs or duplicate keys") {
  std::vector<LabeledPair> hyp;
  for (int i = 0; i < 40; ++i)
    hyp.push_back({"x" + std::to_string(i), "y" + std::to_string(i % 7), "hypernym"});
  std::vector<LabeledPair> full = hyp;
  full.push_back({"x0", "y1", "meronym"});  // a crossing that must be skipped

  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    std::vector<LabeledPair> out = generate_switched_pairs(hyp, full, seed);
    CHECK_FALSE(out.empty());
    std::set<std::string> keys;
    for (const LabeledPair& p : out) {
      CHECK(keys.insert(pair_key(p.x, p.y)).second);
      for (const LabeledPair& e : full) {
        CHECK(pair_key(p.x, p.y) != pair_key(e.x, e.y));
      }
      CHECK(p.x != p.y);
    }
  }
}

TEST_CASE("switched pairs require a uniform label and two distinct ys") {
  std::vector<LabeledPair> mixed{{"a", "b", "hypernym"}, {"c", "d", "random"}};
  CHECK_THROWS_AS(generate_switched_pairs(mixed, mixed, 1), std::invalid_argument);

  std::vector<LabeledPair> one_y{{"a", "b", "hypernym"}, {"c", "b", "hypernym"}};
  CHECK(generate_switched_pairs(one_y, one_y, 1).empty());
}

TEST_CASE("dataset save/load round-trips splits") {
  Dataset d;
  d.name = "t";
  d.inventory = {"hypernym", "random"};
  d.train = {{"a", "b", "hypernym"}, {"c", "d", "random"}};
  d.val = {{"e", "f", "hypernym"}, {"g", "h", "random"}};
  d.test = {{"i", "j", "hypernym"}, {"k", "l", "random"}};

  std::ostringstream out;
  save_dataset(d, out);
  std::istringstream in(out.str());
  LoadResult r = load_dataset(in, open_schema());
  REQUIRE(r.has_splits);
  CHECK(r.dataset.train == d.train);
  CHECK(r.dataset.val == d.val);
  CHECK(r.dataset.test == d.test);
}
