#include <catch2/catch_amalgamated.hpp>

#include "lexrel/rng.hpp"
#include "lexrel/util.hpp"

using namespace lexrel;

TEST_CASE("split keeps empty fields") {
  CHECK(split("a\tb\tc", '\t') == std::vector<std::string>{"a", "b", "c"});
  CHECK(split("a\t\tc", '\t') == std::vector<std::string>{"a", "", "c"});
  CHECK(split("", '\t') == std::vector<std::string>{""});
  CHECK(split("a\t", '\t') == std::vector<std::string>{"a", ""});
}

TEST_CASE("split_ws drops empty fields") {
  CHECK(split_ws("  a \t b  ") == std::vector<std::string>{"a", "b"});
  CHECK(split_ws("").empty());
  CHECK(split_ws(" \t ").empty());
}

TEST_CASE("trim strips surrounding whitespace") {
  CHECK(trim(" \t x y \r\n") == "x y");
  CHECK(trim("") == "");
}

TEST_CASE("lowercase_ascii touches only A-Z") {
  CHECK(lowercase_ascii("MiXeD_09 Z") == "mixed_09 z");
}

TEST_CASE("format_double round-trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-17, 1234567.875, 0.0}) {
    CHECK(parse_double(format_double(v), "test") == v);
  }
}

TEST_CASE("parse_double rejects trailing junk") {
  CHECK_THROWS_AS(parse_double("1.5x", "test"), DataError);
  CHECK_THROWS_AS(parse_double("", "test"), DataError);
  CHECK_THROWS_AS(parse_int("7.5", "test"), DataError);
}

TEST_CASE("split rng streams are independent and deterministic") {
  SplitRng a(42);
  SplitRng b(42);
  CHECK(a.split("x").next_u64() == b.split("x").next_u64());
  CHECK(a.split("x").next_u64() != a.split("y").next_u64());

  // Drawing from one stream does not disturb a sibling stream.
  SplitRng root(7);
  SplitRng s1 = root.split("s");
  std::uint64_t before = SplitRng(7).split("t").next_u64();
  (void)s1.next_u64();
  CHECK(root.split("t").next_u64() == before);
}

TEST_CASE("shuffle is a permutation") {
  SplitRng rng(3);
  std::vector<int> v{1, 2, 3, 4, 5, 6, 7};
  auto sorted = v;
  rng.shuffle(v);
  std::vector<int> back = v;
  std::sort(back.begin(), back.end());
  CHECK(back == sorted);
}
