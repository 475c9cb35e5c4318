#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "lexrel/conllu.hpp"
#include "lexrel/dataset.hpp"
#include "lexrel/embeddings.hpp"
#include "lexrel/evaluation.hpp"
#include "lexrel/models.hpp"
#include "lexrel/paths.hpp"
#include "lexrel/util.hpp"

namespace lexrel::cli {

namespace fs = std::filesystem;

struct Options {
  std::string corpus;
  std::string pairs;
  std::string index;
  std::string embeddings;
  std::string dataset;
  std::string variant;
  std::string out;
  std::string split = "test";
  std::string schema = "auto";
  std::vector<std::string> checkpoints;
  std::string checkpoint_a, checkpoint_b;
  std::string pred_a, pred_b;
  std::uint64_t seed = 1234;
  int max_path_len = 4;
  int max_sentence_tokens = 80;
  int dim = 0;
  int epochs = 25;
  int hidden = 100;
  int threads = 1;
  std::int64_t min_count = 0;
  double lr = -1.0;       // < 0 sweeps the default grid
  double dropout = -1.0;  // < 0 sweeps the default grid
  bool json = false;
};

using ConfigItems = std::vector<std::pair<std::string, std::string>>;

/// Every report starts with the resolved configuration so a run can be
/// reproduced from any of its artifacts.
inline std::string config_block(const std::string& subcommand, const ConfigItems& items) {
  std::string out = "# lexrel " + subcommand + "\n";
  for (const auto& [key, value] : items) out += "# " + key + "\t" + value + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Shared input loading.
// ---------------------------------------------------------------------------

inline std::vector<std::string> corpus_files(const std::string& path) {
  if (!fs::exists(path)) throw DataError("corpus path does not exist: " + path);
  if (fs::is_regular_file(path)) return {path};
  if (!fs::is_directory(path)) throw DataError("corpus path is neither file nor directory: " + path);
  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(path)) {
    if (entry.is_regular_file()) files.push_back(entry.path().generic_string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("corpus directory contains no files: " + path);
  return files;
}

inline std::vector<Sentence> load_corpus(const std::string& path, ParseDiagnostics& diags) {
  std::vector<Sentence> sentences;
  for (const std::string& file : corpus_files(path)) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open corpus file: " + file);
    for_each_sentence(in, [&](Sentence&& s) { sentences.push_back(std::move(s)); }, &diags);
  }
  return sentences;
}

/// Term pairs from the first two tab-separated columns; extra columns (e.g. a
/// relation label) are allowed and ignored.
inline std::vector<std::pair<std::string, std::string>> load_pair_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open pair list: " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    auto cols = split(line, '\t');
    if (cols.size() < 2)
      throw DataError(path + ":" + std::to_string(line_no) + ": expected at least 2 columns");
    std::string x = lowercase_ascii(trim(cols[0]));
    std::string y = lowercase_ascii(trim(cols[1]));
    if (x.empty() || y.empty())
      throw DataError(path + ":" + std::to_string(line_no) + ": empty term");
    out.emplace_back(std::move(x), std::move(y));
  }
  return out;
}

inline DatasetSchema resolve_schema(const Options& opt) {
  if (opt.schema == "auto") return schema_for_path(opt.dataset);
  if (opt.schema == "open") {
    DatasetSchema open;
    open.name = fs::path(opt.dataset).stem().string();
    return open;
  }
  auto schema = builtin_schema(opt.schema);
  if (!schema)
    throw DataError("unknown schema '" + opt.schema +
                    "' (expected auto, open, khn, bless, root09, or evalution)");
  return *schema;
}

/// Keeps only relations that actually occur, preserving inventory order.
inline void prune_inventory(Dataset& d) {
  std::set<std::string> present;
  for (const auto* split : {&d.train, &d.val, &d.test})
    for (const LabeledPair& p : *split) present.insert(p.relation);
  std::vector<std::string> pruned;
  for (const std::string& r : d.inventory)
    if (present.count(r)) pruned.push_back(r);
  d.inventory = std::move(pruned);
}

/// Loads the dataset; files without a split column get deterministic
/// stratified splits from the seed.
inline Dataset load_split_dataset(const Options& opt, std::ostream& err) {
  if (opt.dataset.empty()) throw DataError("--dataset is required");
  std::ifstream in(opt.dataset);
  if (!in) throw DataError("cannot open dataset: " + opt.dataset);
  DatasetSchema schema = resolve_schema(opt);
  LoadResult loaded = load_dataset(in, schema, opt.dataset);
  for (const std::string& w : loaded.warnings) err << "warning: " << w << "\n";
  Dataset d;
  if (loaded.has_splits) {
    d = std::move(loaded.dataset);
  } else {
    d = make_splits(loaded.pairs, SplitRatios{}, opt.seed, loaded.dataset.name,
                    loaded.dataset.inventory);
  }
  prune_inventory(d);
  return d;
}

inline EmbeddingTable load_embeddings_file(const std::string& path, int expected_dim) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embeddings: " + path);
  return load_text_embeddings(in, expected_dim);
}

inline PathIndex load_index_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open path index: " + path);
  try {
    return PathIndex::load(in);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

inline void ensure_out_dir(const std::string& out) {
  if (out.empty()) throw DataError("--out is required");
  fs::create_directories(out);
}

inline std::string out_path(const Options& opt, const std::string& name) {
  return (fs::path(opt.out) / name).generic_string();
}

// ---------------------------------------------------------------------------
// extract-paths
// ---------------------------------------------------------------------------

inline int cmd_extract_paths(const Options& opt, std::ostream& out, std::ostream& err) {
  if (opt.corpus.empty()) throw DataError("--corpus is required");
  if (opt.pairs.empty()) throw DataError("--pairs is required");
  if (opt.index.empty()) throw DataError("--index (output file) is required");

  TermPairSet pairs;
  for (const auto& [x, y] : load_pair_list(opt.pairs)) pairs.add(x, y);
  if (pairs.empty()) throw DataError("pair list is empty: " + opt.pairs);

  ParseDiagnostics diags;
  std::vector<Sentence> corpus = load_corpus(opt.corpus, diags);
  for (const ParseIssue& issue : diags.issues)
    err << "warning: line " << issue.line << ": " << issue.message << "\n";

  ExtractionConfig cfg;
  cfg.max_path_len = opt.max_path_len;
  cfg.max_sentence_tokens = opt.max_sentence_tokens;

  const int workers = std::max(1, std::min<int>(opt.threads, static_cast<int>(corpus.size())));
  std::vector<PathIndex> shards(workers);
  std::vector<ExtractionStats> shard_stats(workers);
  {
    std::vector<std::thread> threads;
    const std::size_t per = (corpus.size() + workers - 1) / std::max(1, workers);
    for (int w = 0; w < workers; ++w) {
      const std::size_t begin = std::min(corpus.size(), w * per);
      const std::size_t end = std::min(corpus.size(), begin + per);
      threads.emplace_back([&, w, begin, end] {
        std::span<const Sentence> slice(corpus.data() + begin, end - begin);
        shards[w] = extract_pair_paths(slice, pairs, cfg, &shard_stats[w]);
      });
    }
    for (std::thread& t : threads) t.join();
  }
  PathIndex index;
  ExtractionStats stats;
  for (int w = 0; w < workers; ++w) {
    index.merge_in(shards[w]);
    stats += shard_stats[w];
  }
  if (opt.min_count > 1) index.filter_min_count(opt.min_count);

  std::ostringstream buffer;
  index.save(buffer);
  write_file(opt.index, buffer.str());

  out << config_block("extract-paths",
                      {{"corpus", opt.corpus},
                       {"pairs", opt.pairs},
                       {"index", opt.index},
                       {"max_path_len", std::to_string(opt.max_path_len)},
                       {"max_sentence_tokens", std::to_string(opt.max_sentence_tokens)},
                       {"min_count", std::to_string(opt.min_count)},
                       {"threads", std::to_string(opt.threads)}});
  out << "sentences\t" << stats.sentences_seen << "\n";
  out << "sentences_skipped_long\t" << stats.sentences_skipped_long << "\n";
  out << "sentences_rejected\t" << diags.sentences_rejected << "\n";
  out << "path_occurrences\t" << stats.pair_occurrences << "\n";
  out << "paths_over_length\t" << stats.paths_too_long << "\n";
  out << "pairs_with_paths\t" << index.pair_count() << "\n";
  out << "total_path_count\t" << index.total_count() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

inline ConfigItems train_config_items(const Options& opt) {
  return {{"dataset", opt.dataset},
          {"schema", opt.schema},
          {"variant", opt.variant},
          {"index", opt.index},
          {"embeddings", opt.embeddings},
          {"seed", std::to_string(opt.seed)},
          {"dim", std::to_string(opt.dim)},
          {"lr", opt.lr < 0 ? "grid" : format_double(opt.lr)},
          {"dropout", opt.dropout < 0 ? "grid" : format_double(opt.dropout)},
          {"epochs", std::to_string(opt.epochs)},
          {"hidden", std::to_string(opt.hidden)},
          {"out", opt.out}};
}

inline int cmd_train(const Options& opt, std::ostream& out, std::ostream& err) {
  if (opt.variant.empty()) throw DataError("--variant is required");
  const ModelVariant variant = parse_variant(opt.variant);
  ensure_out_dir(opt.out);

  Dataset d = load_split_dataset(opt, err);

  std::optional<PathIndex> index;
  if (uses_paths(variant)) {
    if (opt.index.empty()) throw DataError("--index is required for variant " + opt.variant);
    index = load_index_file(opt.index);
  }
  std::optional<EmbeddingTable> emb;
  if (uses_distributional(variant)) {
    if (opt.embeddings.empty())
      throw DataError("--embeddings is required for variant " + opt.variant);
    emb = load_embeddings_file(opt.embeddings, opt.dim);
  }

  Hyper hyper;
  hyper.max_epochs = opt.epochs;
  hyper.hidden_size = opt.hidden;
  if (opt.lr >= 0) hyper.lr_grid = {opt.lr};
  if (opt.dropout >= 0) hyper.dropout_grid = {opt.dropout};

  TrainResult result =
      train_model(variant, d.inventory, d.train, d.val, index ? &*index : nullptr,
                  emb ? &*emb : nullptr, hyper, opt.seed);

  {
    std::ostringstream buffer;
    result.model.save(buffer);
    write_file(out_path(opt, "checkpoint.txt"), buffer.str());
  }
  write_file(out_path(opt, "tuning.tsv"), config_block("train", train_config_items(opt)) +
                                              tuning_report_tsv(result.report, variant));

  const GridScore& best = result.report.scores.at(result.report.best);
  out << "variant\t" << variant_name(variant) << "\n";
  out << "train_pairs\t" << d.train.size() << "\n";
  out << "val_pairs\t" << d.val.size() << "\n";
  out << "best_val_f1\t" << format_metric(best.val_f1) << "\n";
  out << "checkpoint\t" << out_path(opt, "checkpoint.txt") << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

inline void check_inventories(const RelationModel& model, const Dataset& d) {
  std::set<std::string> have(model.config().inventory.begin(), model.config().inventory.end());
  std::set<std::string> want(d.inventory.begin(), d.inventory.end());
  if (have != want)
    throw DataError("checkpoint inventory {" + join({have.begin(), have.end()}, ", ") +
                    "} does not match dataset inventory {" + join({want.begin(), want.end()}, ", ") +
                    "}");
}

/// Unique method label per checkpoint (variant name, suffixed on repeats).
inline std::vector<std::string> method_labels(const std::vector<RelationModel>& models) {
  std::vector<std::string> labels;
  std::map<std::string, int> used;
  for (const RelationModel& m : models) {
    std::string base = variant_name(m.config().variant);
    int n = ++used[base];
    labels.push_back(n == 1 ? base : base + "_" + std::to_string(n));
  }
  return labels;
}

inline int cmd_evaluate(const Options& opt, std::ostream& out, std::ostream& err) {
  if (opt.checkpoints.empty()) throw DataError("--checkpoint is required (repeatable)");
  ensure_out_dir(opt.out);
  Dataset d = load_split_dataset(opt, err);
  const std::vector<LabeledPair>& pairs = d.split_named(opt.split);
  if (pairs.empty()) throw DataError("split '" + opt.split + "' is empty");

  std::vector<RelationModel> models;
  for (const std::string& path : opt.checkpoints) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    models.push_back(RelationModel::load(in, path));
    check_inventories(models.back(), d);
  }

  std::optional<PathIndex> index;
  std::optional<EmbeddingTable> emb;
  for (const RelationModel& m : models) {
    if (uses_paths(m.config().variant) && !index) {
      if (opt.index.empty()) throw DataError("--index is required by a path-based checkpoint");
      index = load_index_file(opt.index);
    }
    if (uses_distributional(m.config().variant) && !emb) {
      if (opt.embeddings.empty())
        throw DataError("--embeddings is required by a distributional checkpoint");
      emb = load_embeddings_file(opt.embeddings, opt.dim);
    }
  }

  const ConfigItems config = {{"dataset", opt.dataset}, {"schema", opt.schema},
                              {"split", opt.split},     {"index", opt.index},
                              {"embeddings", opt.embeddings}, {"seed", std::to_string(opt.seed)},
                              {"checkpoints", join(opt.checkpoints, ",")}, {"out", opt.out}};
  const std::string header = config_block("evaluate", config);
  const std::vector<std::string> labels = method_labels(models);

  std::vector<std::vector<std::string>> summary{{"method", "precision", "recall", "f1", "support"}};
  std::vector<std::vector<std::string>> by_relation{
      {"method", "relation", "precision", "recall", "f1", "support"}};
  nlohmann::ordered_json json_doc;
  for (const auto& [key, value] : config) json_doc["config"][key] = value;

  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    std::vector<Prediction> preds =
        predict_batch(models[mi], pairs, index ? &*index : nullptr, emb ? &*emb : nullptr);
    Metrics m = metrics_of(preds, pairs, models[mi].config().inventory);

    summary.push_back({labels[mi], format_metric(m.weighted_precision),
                       format_metric(m.weighted_recall), format_metric(m.weighted_f1),
                       std::to_string(m.total)});
    for (const RelationMetrics& r : m.per_relation) {
      by_relation.push_back({labels[mi], r.relation, format_metric(r.precision),
                             format_metric(r.recall), format_metric(r.f1),
                             std::to_string(r.support)});
    }

    std::string pred_lines = header + "x\ty\tgold\tpredicted\n";
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      pred_lines += pairs[i].x + "\t" + pairs[i].y + "\t" + pairs[i].relation + "\t" +
                    preds[i].relation + "\n";
    }
    write_file(out_path(opt, "predictions_" + labels[mi] + ".tsv"), pred_lines);

    nlohmann::ordered_json jm;
    jm["precision"] = m.weighted_precision;
    jm["recall"] = m.weighted_recall;
    jm["f1"] = m.weighted_f1;
    jm["accuracy"] = m.accuracy;
    jm["support"] = m.total;
    for (const RelationMetrics& r : m.per_relation) {
      nlohmann::ordered_json jr;
      jr["precision"] = r.precision;
      jr["recall"] = r.recall;
      jr["f1"] = r.f1;
      jr["support"] = r.support;
      jm["per_relation"][r.relation] = jr;
    }
    json_doc["methods"][labels[mi]] = jm;
  }

  write_file(out_path(opt, "metrics.tsv"), header + format_table_tsv(summary));
  write_file(out_path(opt, "per_relation.tsv"), header + format_table_tsv(by_relation));
  write_file(out_path(opt, "metrics.txt"),
             header + format_table_aligned(summary) + "\n" + format_table_aligned(by_relation));
  if (opt.json) write_file(out_path(opt, "metrics.json"), json_doc.dump(2) + "\n");

  out << format_table_aligned(summary);
  return 0;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

inline int cmd_predict(const Options& opt, std::ostream& out, std::ostream& err) {
  if (opt.checkpoints.size() != 1) throw DataError("predict needs exactly one --checkpoint");
  if (opt.pairs.empty()) throw DataError("--pairs is required");
  ensure_out_dir(opt.out);

  std::ifstream in(opt.checkpoints[0]);
  if (!in) throw DataError("cannot open checkpoint: " + opt.checkpoints[0]);
  RelationModel model = RelationModel::load(in, opt.checkpoints[0]);

  std::vector<LabeledPair> pairs;
  for (const auto& [x, y] : load_pair_list(opt.pairs)) pairs.push_back({x, y, "?"});

  std::optional<PathIndex> index;
  if (uses_paths(model.config().variant)) {
    if (opt.index.empty()) throw DataError("--index is required by this checkpoint");
    index = load_index_file(opt.index);
  }
  std::optional<EmbeddingTable> emb;
  if (uses_distributional(model.config().variant)) {
    if (opt.embeddings.empty()) throw DataError("--embeddings is required by this checkpoint");
    emb = load_embeddings_file(opt.embeddings, opt.dim);
  }

  std::vector<Prediction> preds =
      predict_batch(model, pairs, index ? &*index : nullptr, emb ? &*emb : nullptr);

  std::string lines = config_block("predict", {{"checkpoint", opt.checkpoints[0]},
                                               {"pairs", opt.pairs},
                                               {"index", opt.index},
                                               {"embeddings", opt.embeddings},
                                               {"out", opt.out}});
  lines += "x\ty\tpredicted\n";
  for (std::size_t i = 0; i < pairs.size(); ++i)
    lines += pairs[i].x + "\t" + pairs[i].y + "\t" + preds[i].relation + "\n";
  write_file(out_path(opt, "predictions.tsv"), lines);
  out << "pairs\t" << pairs.size() << "\n";
  out << "predictions\t" << out_path(opt, "predictions.tsv") << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

struct PredictionFile {
  std::vector<LabeledPair> pairs;  // relation = gold
  std::vector<std::string> predicted;
};

inline PredictionFile load_prediction_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open prediction file: " + path);
  PredictionFile out;
  std::string line;
  int line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    auto cols = split(line, '\t');
    if (cols.size() != 4)
      throw DataError(path + ":" + std::to_string(line_no) + ": expected 4 columns (x y gold predicted)");
    if (!saw_header && cols[0] == "x") {
      saw_header = true;
      continue;
    }
    out.pairs.push_back({lowercase_ascii(cols[0]), lowercase_ascii(cols[1]), std::string(cols[2])});
    out.predicted.emplace_back(cols[3]);
  }
  if (out.pairs.empty()) throw DataError(path + ": no predictions found");
  return out;
}

inline int cmd_analyze(const Options& opt, std::ostream& out, std::ostream& err) {
  const bool file_route = !opt.pred_a.empty() || !opt.pred_b.empty();
  const bool model_route = !opt.checkpoint_a.empty() || !opt.checkpoint_b.empty();
  if (file_route == model_route)
    throw DataError("analyze needs either --pred-a/--pred-b or --checkpoint-a/--checkpoint-b");
  ensure_out_dir(opt.out);

  Dataset d = load_split_dataset(opt, err);
  std::vector<LabeledPair> pairs;
  std::vector<std::string> pred_a, pred_b;
  std::string label_a = "a", label_b = "b";

  if (file_route) {
    if (opt.pred_a.empty() || opt.pred_b.empty())
      throw DataError("both --pred-a and --pred-b are required");
    PredictionFile fa = load_prediction_file(opt.pred_a);
    PredictionFile fb = load_prediction_file(opt.pred_b);
    if (fa.pairs.size() != fb.pairs.size())
      throw DataError("prediction files differ in length: " + std::to_string(fa.pairs.size()) +
                      " vs " + std::to_string(fb.pairs.size()));
    for (std::size_t i = 0; i < fa.pairs.size(); ++i) {
      if (!(fa.pairs[i] == fb.pairs[i]))
        throw DataError("prediction files disagree on pair " + std::to_string(i + 1) + ": (" +
                        fa.pairs[i].x + ", " + fa.pairs[i].y + ") vs (" + fb.pairs[i].x + ", " +
                        fb.pairs[i].y + ")");
    }
    pairs = std::move(fa.pairs);
    pred_a = std::move(fa.predicted);
    pred_b = std::move(fb.predicted);
    label_a = fs::path(opt.pred_a).stem().string();
    label_b = fs::path(opt.pred_b).stem().string();
  } else {
    if (opt.checkpoint_a.empty() || opt.checkpoint_b.empty())
      throw DataError("both --checkpoint-a and --checkpoint-b are required");
    pairs = d.split_named(opt.split);
    if (pairs.empty()) throw DataError("split '" + opt.split + "' is empty");
    std::optional<PathIndex> index;
    std::optional<EmbeddingTable> emb;
    std::vector<RelationModel> models;
    for (const std::string& path : {opt.checkpoint_a, opt.checkpoint_b}) {
      std::ifstream in(path);
      if (!in) throw DataError("cannot open checkpoint: " + path);
      models.push_back(RelationModel::load(in, path));
      check_inventories(models.back(), d);
      if (uses_paths(models.back().config().variant) && !index) {
        if (opt.index.empty()) throw DataError("--index is required by a path-based checkpoint");
        index = load_index_file(opt.index);
      }
      if (uses_distributional(models.back().config().variant) && !emb) {
        if (opt.embeddings.empty())
          throw DataError("--embeddings is required by a distributional checkpoint");
        emb = load_embeddings_file(opt.embeddings, opt.dim);
      }
    }
    label_a = variant_name(models[0].config().variant);
    label_b = variant_name(models[1].config().variant);
    if (label_a == label_b) {
      label_a += "_1";
      label_b += "_2";
    }
    for (const Prediction& p :
         predict_batch(models[0], pairs, index ? &*index : nullptr, emb ? &*emb : nullptr))
      pred_a.push_back(p.relation);
    for (const Prediction& p :
         predict_batch(models[1], pairs, index ? &*index : nullptr, emb ? &*emb : nullptr))
      pred_b.push_back(p.relation);
  }

  DisagreementReport report = disagreement_report(pairs, pred_a, pred_b, d.train, d.inventory);
  std::vector<std::string> baseline = memorization_baseline(d.train, pairs, d.inventory);
  std::size_t baseline_hits = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    if (baseline[i] == pairs[i].relation) ++baseline_hits;

  const ConfigItems config = {{"dataset", opt.dataset},
                              {"schema", opt.schema},
                              {"split", opt.split},
                              {"seed", std::to_string(opt.seed)},
                              {"method_a", label_a},
                              {"method_b", label_b},
                              {"out", opt.out}};
  const std::string header = config_block("analyze", config);

  std::vector<std::vector<std::string>> rows{
      {"x", "y", "gold", label_a, label_b, "y_train_majority", "memorized"}};
  for (const DisagreementRow& r : report.rows) {
    rows.push_back({r.pair.x, r.pair.y, r.pair.relation, r.pred_a, r.pred_b, r.y_train_majority,
                    r.memorization ? "yes" : "no"});
  }
  write_file(out_path(opt, "disagreements.tsv"), header + format_table_tsv(rows));

  std::ostringstream text;
  text << header;
  text << "pairs_evaluated\t" << report.evaluated << "\n";
  text << "a_right_b_wrong\t" << report.total() << "\n";
  const double pct = report.total() > 0
                         ? 100.0 * static_cast<double>(report.memorization) /
                               static_cast<double>(report.total())
                         : 0.0;
  {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%lld/%lld (%.0f%%)",
                  static_cast<long long>(report.memorization),
                  static_cast<long long>(report.total()), pct);
    text << "b_predicted_y_majority\t" << buf << "\n";
  }
  text << "memorization_baseline_accuracy\t"
       << format_metric(pairs.empty() ? 0.0
                                      : static_cast<double>(baseline_hits) /
                                            static_cast<double>(pairs.size()))
       << "\n";
  std::vector<std::vector<std::string>> breakdown{{"gold_relation", "count"}};
  for (const auto& [rel, count] : report.per_relation)
    breakdown.push_back({rel, std::to_string(count)});
  text << format_table_aligned(breakdown);
  write_file(out_path(opt, "analysis.txt"), text.str());

  if (opt.json) {
    nlohmann::ordered_json doc;
    for (const auto& [key, value] : config) doc["config"][key] = value;
    doc["pairs_evaluated"] = report.evaluated;
    doc["a_right_b_wrong"] = report.total();
    doc["b_predicted_y_majority"] = report.memorization;
    doc["baseline_accuracy"] =
        pairs.empty() ? 0.0 : static_cast<double>(baseline_hits) / static_cast<double>(pairs.size());
    for (const auto& [rel, count] : report.per_relation) doc["per_relation"][rel] = count;
    write_file(out_path(opt, "analysis.json"), doc.dump(2) + "\n");
  }

  out << "a_right_b_wrong\t" << report.total() << "\n";
  out << "b_predicted_y_majority\t" << report.memorization << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Entry point.
// ---------------------------------------------------------------------------

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options opt;
  CLI::App app{"Multiclass lexical relation classification from dependency paths and word embeddings"};
  app.require_subcommand(1);

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--seed", opt.seed, "random seed (fixed default for reproducibility)");
    cmd->add_option("--out", opt.out, "output directory");
  };

  CLI::App* extract = app.add_subcommand("extract-paths", "index dependency paths between term pairs");
  extract->add_option("--corpus", opt.corpus, "parsed corpus file or directory")->required();
  extract->add_option("--pairs", opt.pairs, "term pair list (TSV)")->required();
  extract->add_option("--index", opt.index, "output index file")->required();
  extract->add_option("--max-path-len", opt.max_path_len, "maximum path length in arcs");
  extract->add_option("--max-sentence-tokens", opt.max_sentence_tokens,
                      "skip sentences longer than this");
  extract->add_option("--min-count", opt.min_count, "drop paths seen fewer times");
  extract->add_option("--threads", opt.threads, "extraction shards");

  CLI::App* train = app.add_subcommand("train", "train a classifier variant");
  add_common(train);
  train->add_option("--dataset", opt.dataset, "labeled pair TSV")->required();
  train->add_option("--variant", opt.variant, "pb, ds, ds_h, lexnet, or lexnet_h")->required();
  train->add_option("--index", opt.index, "path index file");
  train->add_option("--embeddings", opt.embeddings, "pretrained word vectors");
  train->add_option("--schema", opt.schema, "dataset schema: auto, open, khn, bless, root09, evalution");
  train->add_option("--dim", opt.dim, "expected embedding dimension");
  train->add_option("--lr", opt.lr, "fix the learning rate instead of sweeping the grid");
  train->add_option("--dropout", opt.dropout, "fix the dropout rate instead of sweeping the grid");
  train->add_option("--epochs", opt.epochs, "maximum training epochs");
  train->add_option("--hidden", opt.hidden, "hidden layer size for ds_h / lexnet_h");

  CLI::App* evaluate = app.add_subcommand("evaluate", "score checkpoints on a dataset split");
  add_common(evaluate);
  evaluate->add_option("--checkpoint", opt.checkpoints, "model checkpoint (repeatable)")->required();
  evaluate->add_option("--dataset", opt.dataset, "labeled pair TSV")->required();
  evaluate->add_option("--split", opt.split, "train, val, or test");
  evaluate->add_option("--index", opt.index, "path index file");
  evaluate->add_option("--embeddings", opt.embeddings, "pretrained word vectors");
  evaluate->add_option("--schema", opt.schema, "dataset schema");
  evaluate->add_option("--dim", opt.dim, "expected embedding dimension");
  evaluate->add_flag("--json", opt.json, "also write metrics.json");

  CLI::App* predict = app.add_subcommand("predict", "label a pair list with a checkpoint");
  add_common(predict);
  predict->add_option("--checkpoint", opt.checkpoints, "model checkpoint")->required();
  predict->add_option("--pairs", opt.pairs, "term pair list (TSV)")->required();
  predict->add_option("--index", opt.index, "path index file");
  predict->add_option("--embeddings", opt.embeddings, "pretrained word vectors");
  predict->add_option("--dim", opt.dim, "expected embedding dimension");

  CLI::App* analyze = app.add_subcommand("analyze", "compare two methods' predictions");
  add_common(analyze);
  analyze->add_option("--dataset", opt.dataset, "labeled pair TSV")->required();
  analyze->add_option("--split", opt.split, "train, val, or test");
  analyze->add_option("--schema", opt.schema, "dataset schema");
  analyze->add_option("--checkpoint-a", opt.checkpoint_a, "first checkpoint");
  analyze->add_option("--checkpoint-b", opt.checkpoint_b, "second checkpoint");
  analyze->add_option("--pred-a", opt.pred_a, "first prediction file (from evaluate)");
  analyze->add_option("--pred-b", opt.pred_b, "second prediction file (from evaluate)");
  analyze->add_option("--index", opt.index, "path index file");
  analyze->add_option("--embeddings", opt.embeddings, "pretrained word vectors");
  analyze->add_option("--dim", opt.dim, "expected embedding dimension");
  analyze->add_flag("--json", opt.json, "also write analysis.json");

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("lexrel");
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 1;
  }

  try {
    if (extract->parsed()) return cmd_extract_paths(opt, out, err);
    if (train->parsed()) return cmd_train(opt, out, err);
    if (evaluate->parsed()) return cmd_evaluate(opt, out, err);
    if (predict->parsed()) return cmd_predict(opt, out, err);
    if (analyze->parsed()) return cmd_analyze(opt, out, err);
    err << "error: no subcommand selected\n" << app.help();
    return 1;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

inline int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace lexrel::cli
