#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <random>
#include <sstream>

#include "lexrel/cli.hpp"

namespace fs = std::filesystem;
using namespace lexrel;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() /
           ("lexrel-cli-" + std::to_string(counter.fetch_add(1)) + "-" +
            std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string str(const std::string& name) const { return (path / name).generic_string(); }
};

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string fixture(const std::string& rel) {
  return std::string(LEXREL_SOURCE_DIR) + "/fixtures/" + rel;
}

CliResult extract_to(const std::string& index_path, int threads = 1) {
  return run_cli({"extract-paths", "--corpus", fixture("cli/corpus.conllu"), "--pairs",
                  fixture("cli/pairs.tsv"), "--index", index_path, "--threads",
                  std::to_string(threads)});
}

CliResult train_to(const std::string& out_dir, const std::string& variant,
                   const std::string& index_path, int seed = 1234) {
  std::vector<std::string> args{"train",        "--dataset", fixture("cli/dataset.tsv"),
                                "--variant",    variant,     "--out",
                                out_dir,        "--epochs",  "3",
                                "--lr",         "0.05",      "--dropout",
                                "0",            "--seed",    std::to_string(seed)};
  if (variant != "ds" && variant != "ds_h") {
    args.insert(args.end(), {"--index", index_path});
  }
  if (variant != "pb") {
    args.insert(args.end(), {"--embeddings", fixture("cli/embeddings.txt")});
  }
  return run_cli(args);
}

}  // namespace

TEST_CASE("help and bad invocations") {
  CliResult help = run_cli({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("extract-paths") != std::string::npos);
  CHECK(help.out.find("train") != std::string::npos);

  CliResult unknown = run_cli({"frobnicate"});
  CHECK(unknown.code == 1);
  CHECK(unknown.err.find("error:") != std::string::npos);
  CHECK(unknown.err.find("extract-paths") != std::string::npos);  // usage text follows

  CliResult none = run_cli({});
  CHECK(none.code == 1);

  CliResult missing = run_cli({"extract-paths"});
  CHECK(missing.code == 1);
  CHECK(missing.err.find("--corpus") != std::string::npos);
}

TEST_CASE("extract-paths writes the index and reports stats") {
  TempDir dir;
  CliResult r = extract_to(dir.str("paths.index"));
  REQUIRE(r.code == 0);
  CHECK(r.out.find("# lexrel extract-paths\n") == 0);
  CHECK(r.out.find("sentences\t5\n") != std::string::npos);
  CHECK(r.out.find("pairs_with_paths\t6\n") != std::string::npos);
  CHECK(r.out.find("total_path_count\t6\n") != std::string::npos);

  std::ifstream in(dir.str("paths.index"));
  PathIndex index = PathIndex::load(in);
  CHECK(index.pair_count() == 6);
  CHECK(index.total_count() == 6);
}

TEST_CASE("extract-paths shard count does not change the output bytes") {
  TempDir dir;
  REQUIRE(extract_to(dir.str("single.index"), 1).code == 0);
  REQUIRE(extract_to(dir.str("sharded.index"), 3).code == 0);
  CHECK(read_file(dir.str("single.index")) == read_file(dir.str("sharded.index")));
}

TEST_CASE("extract-paths fails cleanly on a missing corpus") {
  TempDir dir;
  CliResult r = run_cli({"extract-paths", "--corpus", dir.str("nope.conllu"), "--pairs",
                         fixture("cli/pairs.tsv"), "--index", dir.str("paths.index")});
  CHECK(r.code == 2);
  CHECK(r.err.find("error:") != std::string::npos);
}

TEST_CASE("train writes a checkpoint and a tuning report") {
  TempDir dir;
  REQUIRE(extract_to(dir.str("paths.index")).code == 0);
  CliResult r = train_to(dir.str("model"), "lexnet", dir.str("paths.index"));
  REQUIRE(r.code == 0);
  CHECK(r.out.find("variant\tlexnet\n") != std::string::npos);
  CHECK(r.out.find("train_pairs\t6\n") != std::string::npos);
  CHECK(r.out.find("val_pairs\t1\n") != std::string::npos);
  CHECK(fs::exists(dir.str("model/checkpoint.txt")));

  std::string tuning = read_file(dir.str("model/tuning.tsv"));
  CHECK(tuning.rfind("# lexrel train\n", 0) == 0);
  CHECK(tuning.find("# variant\tlexnet\n") != std::string::npos);
  CHECK(tuning.find("# seed\t1234\n") != std::string::npos);
  CHECK(tuning.find("*") != std::string::npos);
}

TEST_CASE("train validates variant and required inputs") {
  TempDir dir;
  CliResult bogus = run_cli({"train", "--dataset", fixture("cli/dataset.tsv"), "--variant", "cnn",
                             "--out", dir.str("model")});
  CHECK(bogus.code == 2);
  CHECK(bogus.err.find("unknown variant") != std::string::npos);

  CliResult no_index = run_cli({"train", "--dataset", fixture("cli/dataset.tsv"), "--variant",
                                "pb", "--out", dir.str("model")});
  CHECK(no_index.code == 2);
  CHECK(no_index.err.find("--index is required for variant pb") != std::string::npos);

  CliResult no_emb = run_cli({"train", "--dataset", fixture("cli/dataset.tsv"), "--variant", "ds",
                              "--out", dir.str("model")});
  CHECK(no_emb.code == 2);
  CHECK(no_emb.err.find("--embeddings is required for variant ds") != std::string::npos);
}

TEST_CASE("evaluate writes metrics tables, predictions, and json") {
  TempDir dir;
  REQUIRE(extract_to(dir.str("paths.index")).code == 0);
  REQUIRE(train_to(dir.str("model"), "lexnet", dir.str("paths.index")).code == 0);

  CliResult r = run_cli({"evaluate", "--checkpoint", dir.str("model/checkpoint.txt"), "--dataset",
                         fixture("cli/dataset.tsv"), "--split", "test", "--index",
                         dir.str("paths.index"), "--embeddings", fixture("cli/embeddings.txt"),
                         "--out", dir.str("eval"), "--json"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("method") != std::string::npos);
  CHECK(r.out.find("lexnet") != std::string::npos);

  std::string metrics = read_file(dir.str("eval/metrics.tsv"));
  CHECK(metrics.rfind("# lexrel evaluate\n", 0) == 0);
  CHECK(metrics.find("method\tprecision\trecall\tf1\tsupport\n") != std::string::npos);
  CHECK(metrics.find("\t2\n") != std::string::npos);  // test split has 2 pairs

  std::string preds = read_file(dir.str("eval/predictions_lexnet.tsv"));
  CHECK(preds.find("x\ty\tgold\tpredicted\n") != std::string::npos);
  CHECK(preds.find("parrot\tfork\trandom\t") != std::string::npos);
  CHECK(preds.find("spoon\tfork\tco-hyponym\t") != std::string::npos);

  std::string per_relation = read_file(dir.str("eval/per_relation.tsv"));
  for (const char* rel : {"hypernym", "co-hyponym", "random"})
    CHECK(per_relation.find(rel) != std::string::npos);

  auto doc = nlohmann::json::parse(read_file(dir.str("eval/metrics.json")));
  CHECK(doc["config"]["split"] == "test");
  double f1 = doc["methods"]["lexnet"]["f1"];
  CHECK(f1 >= 0.0);
  CHECK(f1 <= 1.0);
  CHECK(doc["methods"]["lexnet"]["support"] == 2);
  CHECK(doc["methods"]["lexnet"]["per_relation"].size() == 3);
}

TEST_CASE("evaluate rejects a checkpoint with a different inventory") {
  TempDir dir;
  REQUIRE(extract_to(dir.str("paths.index")).code == 0);
  REQUIRE(train_to(dir.str("model"), "pb", dir.str("paths.index")).code == 0);

  CliResult r = run_cli({"evaluate", "--checkpoint", dir.str("model/checkpoint.txt"), "--dataset",
                         fixture("cli/mismatch.tsv"), "--split", "test", "--index",
                         dir.str("paths.index"), "--out", dir.str("eval")});
  CHECK(r.code == 2);
  CHECK(r.err.find("does not match") != std::string::npos);
  CHECK(r.err.find("co-hyponym, hypernym, random") != std::string::npos);
  CHECK(r.err.find("hypernym, random") != std::string::npos);
}

TEST_CASE("train and evaluate are byte-deterministic for a fixed seed") {
  TempDir dir;
  REQUIRE(extract_to(dir.str("paths.index")).code == 0);
  REQUIRE(train_to(dir.str("m1"), "lexnet_h", dir.str("paths.index"), 7).code == 0);
  REQUIRE(train_to(dir.str("m2"), "lexnet_h", dir.str("paths.index"), 7).code == 0);
  CHECK(read_file(dir.str("m1/checkpoint.txt")) == read_file(dir.str("m2/checkpoint.txt")));

  // Re-running evaluate with the same resolved config overwrites the same
  // artifacts with the same bytes (the report header embeds the config, so
  // the inputs must match exactly).
  auto eval = [&]() {
    return run_cli({"evaluate", "--checkpoint", dir.str("m1/checkpoint.txt"), "--dataset",
                    fixture("cli/dataset.tsv"), "--split", "test", "--index",
                    dir.str("paths.index"), "--embeddings", fixture("cli/embeddings.txt"),
                    "--out", dir.str("e1")});
  };
  const std::vector<std::string> artifacts = {"metrics.tsv", "per_relation.tsv",
                                              "predictions_lexnet_h.tsv"};
  REQUIRE(eval().code == 0);
  std::vector<std::string> first;
  for (const std::string& name : artifacts) first.push_back(read_file(dir.str("e1/") + name));
  REQUIRE(eval().code == 0);
  for (std::size_t i = 0; i < artifacts.size(); ++i)
    CHECK(first[i] == read_file(dir.str("e1/") + artifacts[i]));

  // A different seed must actually change the checkpoint.
  REQUIRE(train_to(dir.str("m3"), "lexnet_h", dir.str("paths.index"), 8).code == 0);
  CHECK(read_file(dir.str("m1/checkpoint.txt")) != read_file(dir.str("m3/checkpoint.txt")));
}

TEST_CASE("predict labels a bare pair list") {
  TempDir dir;
  REQUIRE(extract_to(dir.str("paths.index")).code == 0);
  REQUIRE(train_to(dir.str("model"), "lexnet", dir.str("paths.index")).code == 0);

  CliResult r = run_cli({"predict", "--checkpoint", dir.str("model/checkpoint.txt"), "--pairs",
                         fixture("cli/pairs.tsv"), "--index", dir.str("paths.index"),
                         "--embeddings", fixture("cli/embeddings.txt"), "--out", dir.str("pred")});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("pairs\t6\n") != std::string::npos);

  std::string preds = read_file(dir.str("pred/predictions.tsv"));
  CHECK(preds.find("x\ty\tpredicted\n") != std::string::npos);
  std::size_t rows = 0;
  for (const std::string& line : split(preds, '\n')) {
    if (line.empty() || line.front() == '#' || line.rfind("x\t", 0) == 0) continue;
    auto cols = split(line, '\t');
    REQUIRE(cols.size() == 3);
    CHECK((cols[2] == "hypernym" || cols[2] == "co-hyponym" || cols[2] == "random"));
    ++rows;
  }
  CHECK(rows == 6);
}

TEST_CASE("analyze compares two checkpoints and reports memorization") {
  TempDir dir;
  REQUIRE(extract_to(dir.str("paths.index")).code == 0);
  REQUIRE(train_to(dir.str("pb"), "pb", dir.str("paths.index")).code == 0);
  REQUIRE(train_to(dir.str("ds"), "ds", dir.str("paths.index")).code == 0);

  CliResult r = run_cli({"analyze", "--checkpoint-a", dir.str("pb/checkpoint.txt"),
                         "--checkpoint-b", dir.str("ds/checkpoint.txt"), "--dataset",
                         fixture("cli/dataset.tsv"), "--split", "test", "--index",
                         dir.str("paths.index"), "--embeddings", fixture("cli/embeddings.txt"),
                         "--out", dir.str("cmp"), "--json"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("a_right_b_wrong\t") != std::string::npos);

  std::string analysis = read_file(dir.str("cmp/analysis.txt"));
  CHECK(analysis.find("# method_a\tpb\n") != std::string::npos);
  CHECK(analysis.find("# method_b\tds\n") != std::string::npos);
  CHECK(analysis.find("pairs_evaluated\t2\n") != std::string::npos);
  CHECK(analysis.find("b_predicted_y_majority\t") != std::string::npos);
  CHECK(analysis.find("memorization_baseline_accuracy\t") != std::string::npos);

  std::string table = read_file(dir.str("cmp/disagreements.tsv"));
  CHECK(table.find("x\ty\tgold\tpb\tds\ty_train_majority\tmemorized\n") != std::string::npos);

  auto doc = nlohmann::json::parse(read_file(dir.str("cmp/analysis.json")));
  CHECK(doc["pairs_evaluated"] == 2);
  CHECK(doc["config"]["method_a"] == "pb");
}

TEST_CASE("analyze accepts prediction files from evaluate") {
  TempDir dir;
  REQUIRE(extract_to(dir.str("paths.index")).code == 0);
  REQUIRE(train_to(dir.str("pb"), "pb", dir.str("paths.index")).code == 0);
  REQUIRE(train_to(dir.str("lex"), "lexnet", dir.str("paths.index")).code == 0);
  REQUIRE(run_cli({"evaluate", "--checkpoint", dir.str("pb/checkpoint.txt"), "--checkpoint",
                   dir.str("lex/checkpoint.txt"), "--dataset", fixture("cli/dataset.tsv"),
                   "--split", "test", "--index", dir.str("paths.index"), "--embeddings",
                   fixture("cli/embeddings.txt"), "--out", dir.str("eval")})
              .code == 0);

  CliResult r = run_cli({"analyze", "--pred-a", dir.str("eval/predictions_pb.tsv"), "--pred-b",
                         dir.str("eval/predictions_lexnet.tsv"), "--dataset",
                         fixture("cli/dataset.tsv"), "--split", "test", "--out", dir.str("cmp")});
  REQUIRE(r.code == 0);
  std::string analysis = read_file(dir.str("cmp/analysis.txt"));
  CHECK(analysis.find("# method_a\tpredictions_pb\n") != std::string::npos);
  CHECK(analysis.find("pairs_evaluated\t2\n") != std::string::npos);

  CliResult both = run_cli({"analyze", "--pred-a", dir.str("eval/predictions_pb.tsv"),
                            "--checkpoint-b", dir.str("pb/checkpoint.txt"), "--dataset",
                            fixture("cli/dataset.tsv"), "--out", dir.str("cmp2")});
  CHECK(both.code == 2);
  CHECK(both.err.find("either --pred-a/--pred-b or --checkpoint-a/--checkpoint-b") !=
        std::string::npos);
}

TEST_CASE("golden fixtures extract to their expected index bytes") {
  const std::string dir = fixture("golden");
  std::size_t checked = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".conllu") continue;
    const std::string stem = entry.path().stem().string();

    TermPairSet pairs;
    for (const auto& [x, y] : cli::load_pair_list(dir + "/" + stem + ".pairs")) pairs.add(x, y);
    std::istringstream in(read_file(entry.path().generic_string()));
    std::vector<Sentence> corpus = parse_conllu(in);
    PathIndex index = extract_pair_paths(corpus, pairs, ExtractionConfig{});

    std::ostringstream got;
    index.save(got);
    INFO(stem);
    CHECK(got.str() == read_file(dir + "/" + stem + ".expected"));
    ++checked;
  }
  CHECK(checked == 10);
}
