#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lexrel/dataset.hpp"
#include "lexrel/embeddings.hpp"
#include "lexrel/evaluation.hpp"
#include "lexrel/neural.hpp"
#include "lexrel/paths.hpp"
#include "lexrel/rng.hpp"
#include "lexrel/util.hpp"

namespace lexrel {

enum class ModelVariant { PB, DS, DSh, LexNET, LexNETh };

inline const char* variant_name(ModelVariant v) {
  switch (v) {
    case ModelVariant::PB: return "pb";
    case ModelVariant::DS: return "ds";
    case ModelVariant::DSh: return "ds_h";
    case ModelVariant::LexNET: return "lexnet";
    case ModelVariant::LexNETh: return "lexnet_h";
  }
  throw NumericError("invalid model variant");
}

inline ModelVariant parse_variant(const std::string& s) {
  std::string n = lowercase_ascii(s);
  if (n == "pb") return ModelVariant::PB;
  if (n == "ds") return ModelVariant::DS;
  if (n == "ds_h") return ModelVariant::DSh;
  if (n == "lexnet") return ModelVariant::LexNET;
  if (n == "lexnet_h") return ModelVariant::LexNETh;
  throw DataError("unknown variant '" + s + "' (expected pb, ds, ds_h, lexnet, or lexnet_h)");
}

/// Path information feeds PB and the LexNET variants; distributional vectors
/// feed everything except PB.
inline bool uses_paths(ModelVariant v) {
  return v == ModelVariant::PB || v == ModelVariant::LexNET || v == ModelVariant::LexNETh;
}
inline bool uses_distributional(ModelVariant v) { return v != ModelVariant::PB; }
inline bool has_hidden_layer(ModelVariant v) {
  return v == ModelVariant::DSh || v == ModelVariant::LexNETh;
}

/// Tunable hyperparameters. Grids are swept on the validation split.
struct Hyper {
  int lemma_dim = 50;
  int pos_dim = 4;
  int dep_dim = 5;
  int dir_dim = 1;
  int cell_size = 60;
  int hidden_size = 100;
  std::vector<double> lr_grid = {0.001, 0.01, 0.1};
  std::vector<double> dropout_grid = {0.0, 0.2, 0.4};
  std::vector<double> margin_c_grid = {0.1, 1.0, 10.0};
  int max_epochs = 25;
  int patience = 3;  // epochs without val improvement before stopping
  int margin_epochs = 200;
};

/// Vocabulary of path-edge components, row 0 reserved for unknowns.
struct PathVocab {
  std::vector<std::string> lemmas{"<unk>"};
  std::vector<std::string> poses{"<unk>"};
  std::vector<std::string> deps{"<unk>"};

  static PathVocab from_index(const PathIndex& index) {
    std::set<std::string> lemma_set, pos_set, dep_set;
    for (const auto& [key, counts] : index.entries()) {
      for (const auto& [path, count] : counts) {
        for (const PathEdge& e : path.edges) {
          lemma_set.insert(e.lemma);
          pos_set.insert(e.pos);
          dep_set.insert(e.dep);
        }
      }
    }
    PathVocab v;
    v.lemmas.insert(v.lemmas.end(), lemma_set.begin(), lemma_set.end());
    v.poses.insert(v.poses.end(), pos_set.begin(), pos_set.end());
    v.deps.insert(v.deps.end(), dep_set.begin(), dep_set.end());
    return v;
  }
};

struct ModelConfig {
  ModelVariant variant = ModelVariant::LexNET;
  std::vector<std::string> inventory;
  int word_dim = 0;  // distributional vector size; 0 when unused
  int lemma_dim = 50;
  int pos_dim = 4;
  int dep_dim = 5;
  int dir_dim = 1;
  int cell_size = 60;
  int hidden_size = 100;
  double lr = 0.01;
  double dropout = 0.0;
  double margin_c = 1.0;

  int edge_dim() const { return lemma_dim + pos_dim + dep_dim + dir_dim; }

  int feature_dim() const {
    switch (variant) {
      case ModelVariant::PB: return cell_size;
      case ModelVariant::DS:
      case ModelVariant::DSh: return 2 * word_dim;
      case ModelVariant::LexNET:
      case ModelVariant::LexNETh: return 2 * word_dim + cell_size;
    }
    throw NumericError("invalid model variant");
  }
};

struct Prediction {
  Vec distribution;  // sums to 1 (one-hot for the margin classifier)
  int index = 0;
  std::string relation;
};

struct PathTrace {
  SequenceTrace seq;
  std::vector<std::array<int, 4>> ids;  // per step: lemma, pos, dep, direction rows
  double weight = 0.0;
};

struct ForwardTrace {
  std::vector<PathTrace> paths;
  bool used_nopath = false;
  Vec v_paths;
  Vec assembled_pre;  // before dropout
  Vec mask;           // empty in eval mode
  Vec assembled;
  Vec hidden;  // tanh layer output for the _h variants
  Vec probs;
};

/// One classifier over term pairs: a softmax (optionally over a tanh hidden
/// layer) on the variant's feature vector, or a one-vs-rest linear margin
/// model for DS. Holds its own path-component embeddings and recurrent
/// encoder when the variant consumes paths. Distributional vectors are
/// supplied at call time and never trained.
class RelationModel {
 public:
  RelationModel(ModelConfig cfg, PathVocab vocab, const EmbeddingTable* pretrained, SplitRng& rng)
      : cfg_(std::move(cfg)), vocab_(std::move(vocab)) {
    build_tensors();
    init_weights(pretrained, rng);
    build_lookup_maps();
  }

  const ModelConfig& config() const { return cfg_; }
  const PathVocab& vocab() const { return vocab_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  // -- forward ---------------------------------------------------------------

  /// Weighted mean of the recurrent encodings of each distinct path, weights
  /// proportional to corpus counts; the learned no-path vector when none.
  Vec encode_pair_paths(const PathIndex::PathCounts* paths, ForwardTrace* trace = nullptr) const {
    if (!uses_paths(cfg_.variant)) throw NumericError("variant carries no path encoder");
    if (!paths || paths->empty()) {
      if (trace) trace->used_nopath = true;
      return params_.at("path.nopath").value.col(0);
    }
    double total = 0.0;
    for (const auto& [path, count] : *paths) total += static_cast<double>(count);
    Vec v = Vec::Zero(cfg_.cell_size);
    const RecurrentCellParams& cell = cell_params();
    for (const auto& [path, count] : *paths) {
      PathTrace pt;
      pt.weight = static_cast<double>(count) / total;
      std::vector<Vec> inputs;
      inputs.reserve(path.edges.size());
      for (const PathEdge& e : path.edges) {
        std::array<int, 4> ids = edge_ids(e);
        if (trace) pt.ids.push_back(ids);
        inputs.push_back(embed_edge_rows(ids));
      }
      Vec o = encode_sequence(params_, cell, inputs, trace ? &pt.seq : nullptr);
      v += pt.weight * o;
      if (trace) trace->paths.push_back(std::move(pt));
    }
    return v;
  }

  /// Concatenation of the four component embedding rows for one path edge.
  Vec embed_edge(const PathEdge& e) const { return embed_edge_rows(edge_ids(e)); }

  /// Full forward pass. `dropout_rng` non-null selects train mode (inverted
  /// dropout on the assembled feature vector); eval mode otherwise.
  Prediction forward(const Vec& v_wx, const Vec& v_wy, const PathIndex::PathCounts* paths,
                     SplitRng* dropout_rng = nullptr, ForwardTrace* trace = nullptr) const {
    if (cfg_.variant == ModelVariant::DS) return margin_predict(v_wx, v_wy);

    Vec feature(cfg_.feature_dim());
    if (cfg_.variant == ModelVariant::PB) {
      feature = encode_pair_paths(paths, trace);
    } else if (uses_paths(cfg_.variant)) {
      check_word_dim(v_wx, v_wy);
      Vec vp = encode_pair_paths(paths, trace);
      feature << v_wx, vp, v_wy;
      if (trace) trace->v_paths = std::move(vp);
    } else {
      check_word_dim(v_wx, v_wy);
      feature << v_wx, v_wy;
    }
    if (trace) trace->assembled_pre = feature;

    if (dropout_rng && cfg_.dropout > 0.0) {
      Vec mask = dropout_mask(feature.size(), cfg_.dropout, *dropout_rng);
      feature = feature.cwiseProduct(mask);
      if (trace) trace->mask = std::move(mask);
    }
    if (trace) trace->assembled = feature;

    Vec logits;
    if (has_hidden_layer(cfg_.variant)) {
      Vec h = (params_.at("hidden.w").value * feature + params_.at("hidden.b").value.col(0))
                  .array()
                  .tanh()
                  .matrix();
      logits = params_.at("cls.w").value * h + params_.at("cls.b").value.col(0);
      if (trace) trace->hidden = std::move(h);
    } else {
      logits = params_.at("cls.w").value * feature;
    }
    Prediction pred;
    pred.distribution = softmax(logits);
    if (trace) trace->probs = pred.distribution;
    pred.distribution.maxCoeff(&pred.index);
    pred.relation = cfg_.inventory.at(static_cast<std::size_t>(pred.index));
    return pred;
  }

  /// Cross-entropy loss plus gradient accumulation for one training example.
  double train_example(const Vec& v_wx, const Vec& v_wy, const PathIndex::PathCounts* paths,
                       int gold, SplitRng& dropout_rng) {
    if (cfg_.variant == ModelVariant::DS)
      throw NumericError("the margin classifier trains through margin_fit, not train_example");
    ForwardTrace trace;
    forward(v_wx, v_wy, paths, &dropout_rng, &trace);
    const double loss = cross_entropy(trace.probs, gold);
    backward(trace, gold);
    return loss;
  }

  // -- margin classifier (DS) -------------------------------------------------

  Prediction margin_predict(const Vec& v_wx, const Vec& v_wy) const {
    check_word_dim(v_wx, v_wy);
    Vec f(2 * cfg_.word_dim);
    f << v_wx, v_wy;
    Vec scores = params_.at("margin.w").value * f + params_.at("margin.b").value.col(0);
    Prediction pred;
    scores.maxCoeff(&pred.index);
    pred.relation = cfg_.inventory.at(static_cast<std::size_t>(pred.index));
    pred.distribution = Vec::Zero(scores.size());
    pred.distribution[pred.index] = 1.0;
    return pred;
  }

  /// One-vs-rest L2-regularized hinge loss, minimized by deterministic
  /// full-batch subgradient descent from zero weights. Both terms of the
  /// objective are per-example means, so the decision function is invariant
  /// under duplicating the training set. The bias is unregularized, so
  /// degenerate all-zero features fall back to the majority class.
  void margin_fit(const std::vector<Vec>& features, const std::vector<int>& labels, int epochs) {
    if (cfg_.variant != ModelVariant::DS) throw NumericError("margin_fit is DS-only");
    std::set<int> distinct(labels.begin(), labels.end());
    if (distinct.size() < 2) throw DataError("margin classifier needs at least 2 classes in train");
    const std::size_t n = features.size();
    const int k = static_cast<int>(cfg_.inventory.size());
    Mat& w = params_.at("margin.w").value;
    Mat& b = params_.at("margin.b").value;
    w.setZero();
    b.setZero();
    const double lambda = 1.0 / cfg_.margin_c;
    for (int t = 1; t <= epochs; ++t) {
      const double eta = 1.0 / (1.0 + lambda * static_cast<double>(t));
      Mat gw = lambda * w;
      Vec gb = Vec::Zero(k);
      for (std::size_t i = 0; i < n; ++i) {
        Vec scores = w * features[i] + b.col(0);
        for (int r = 0; r < k; ++r) {
          const double sign = labels[i] == r ? 1.0 : -1.0;
          if (sign * scores[r] < 1.0) {
            gw.row(r) -= (sign / static_cast<double>(n)) * features[i].transpose();
            gb[r] -= sign / static_cast<double>(n);
          }
        }
      }
      w -= eta * gw;
      b.col(0) -= eta * gb;
    }
    if (!w.allFinite() || !b.allFinite()) throw NumericError("margin training diverged");
  }

  // -- checkpoints -------------------------------------------------------------

  static constexpr const char* kCheckpointHeader = "#lexrel-checkpoint v1";

  void save(std::ostream& out) const {
    out << kCheckpointHeader << '\n';
    out << "variant\t" << variant_name(cfg_.variant) << '\n';
    out << "word_dim\t" << cfg_.word_dim << '\n';
    out << "lemma_dim\t" << cfg_.lemma_dim << '\n';
    out << "pos_dim\t" << cfg_.pos_dim << '\n';
    out << "dep_dim\t" << cfg_.dep_dim << '\n';
    out << "dir_dim\t" << cfg_.dir_dim << '\n';
    out << "cell_size\t" << cfg_.cell_size << '\n';
    out << "hidden_size\t" << cfg_.hidden_size << '\n';
    out << "lr\t" << format_double(cfg_.lr) << '\n';
    out << "dropout\t" << format_double(cfg_.dropout) << '\n';
    out << "margin_c\t" << format_double(cfg_.margin_c) << '\n';
    for (const std::string& r : cfg_.inventory) out << "relation\t" << r << '\n';
    for (const std::string& s : vocab_.lemmas)
      out << "lemma\t" << lexrel::detail::escape_component(s) << '\n';
    for (const std::string& s : vocab_.poses)
      out << "pos\t" << lexrel::detail::escape_component(s) << '\n';
    for (const std::string& s : vocab_.deps)
      out << "dep\t" << lexrel::detail::escape_component(s) << '\n';
    for (const auto& [name, tensor] : params_.tensors()) {
      out << "tensor\t" << name << '\t' << tensor.value.rows() << '\t' << tensor.value.cols()
          << '\n';
      for (Eigen::Index i = 0; i < tensor.value.rows(); ++i) {
        for (Eigen::Index j = 0; j < tensor.value.cols(); ++j) {
          if (j) out << ' ';
          out << format_double(tensor.value(i, j));
        }
        out << '\n';
      }
    }
  }

  static RelationModel load(std::istream& in, const std::string& source = "checkpoint") {
    std::string line;
    if (!std::getline(in, line) || trim(line) != kCheckpointHeader)
      throw DataError(source + ": missing checkpoint header '" + kCheckpointHeader + "'");
    ModelConfig cfg;
    cfg.inventory.clear();
    PathVocab vocab;
    vocab.lemmas.clear();
    vocab.poses.clear();
    vocab.deps.clear();
    std::map<std::string, Mat> tensors;
    int line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      auto cols = split(line, '\t');
      const std::string key(cols[0]);
      auto want = [&](std::size_t n) {
        if (cols.size() != n)
          throw DataError(source + ":" + std::to_string(line_no) + ": '" + key + "' needs " +
                          std::to_string(n) + " columns");
      };
      if (key == "variant") {
        want(2);
        cfg.variant = parse_variant(std::string(cols[1]));
      } else if (key == "word_dim" || key == "lemma_dim" || key == "pos_dim" || key == "dep_dim" ||
                 key == "dir_dim" || key == "cell_size" || key == "hidden_size") {
        want(2);
        const int v = static_cast<int>(parse_int(cols[1], source + " " + key));
        if (key == "word_dim") cfg.word_dim = v;
        else if (key == "lemma_dim") cfg.lemma_dim = v;
        else if (key == "pos_dim") cfg.pos_dim = v;
        else if (key == "dep_dim") cfg.dep_dim = v;
        else if (key == "dir_dim") cfg.dir_dim = v;
        else if (key == "cell_size") cfg.cell_size = v;
        else cfg.hidden_size = v;
      } else if (key == "lr" || key == "dropout" || key == "margin_c") {
        want(2);
        const double v = parse_double(cols[1], source + " " + key);
        if (key == "lr") cfg.lr = v;
        else if (key == "dropout") cfg.dropout = v;
        else cfg.margin_c = v;
      } else if (key == "relation") {
        want(2);
        cfg.inventory.emplace_back(cols[1]);
      } else if (key == "lemma" || key == "pos" || key == "dep") {
        want(2);
        std::string value = lexrel::detail::unescape_component(std::string(cols[1]));
        if (key == "lemma") vocab.lemmas.push_back(std::move(value));
        else if (key == "pos") vocab.poses.push_back(std::move(value));
        else vocab.deps.push_back(std::move(value));
      } else if (key == "tensor") {
        want(4);
        const std::string name(cols[1]);
        const auto rows = parse_int(cols[2], source + " tensor rows");
        const auto cols_n = parse_int(cols[3], source + " tensor cols");
        Mat m(rows, cols_n);
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
          if (!std::getline(in, line))
            throw DataError(source + ": truncated tensor '" + name + "'");
          ++line_no;
          auto values = split_ws(line);
          if (static_cast<Eigen::Index>(values.size()) != m.cols())
            throw DataError(source + ":" + std::to_string(line_no) + ": tensor '" + name +
                            "' row has " + std::to_string(values.size()) + " values, expected " +
                            std::to_string(m.cols()));
          for (Eigen::Index j = 0; j < m.cols(); ++j)
            m(i, j) = parse_double(values[static_cast<std::size_t>(j)], source + " tensor " + name);
        }
        if (!tensors.emplace(name, std::move(m)).second)
          throw DataError(source + ": duplicate tensor '" + name + "'");
      } else {
        throw DataError(source + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
      }
    }
    if (cfg.inventory.empty()) throw DataError(source + ": no relations recorded");

    RelationModel model(std::move(cfg), std::move(vocab));
    for (auto& [name, tensor] : model.params_.tensors()) {
      auto it = tensors.find(name);
      if (it == tensors.end()) throw DataError(source + ": missing tensor '" + name + "'");
      if (it->second.rows() != tensor.value.rows() || it->second.cols() != tensor.value.cols())
        throw DataError(source + ": tensor '" + name + "' has shape " +
                        std::to_string(it->second.rows()) + "x" +
                        std::to_string(it->second.cols()) + ", expected " +
                        std::to_string(tensor.value.rows()) + "x" +
                        std::to_string(tensor.value.cols()));
      tensor.value = it->second;
      tensors.erase(it);
    }
    if (!tensors.empty())
      throw DataError(source + ": unexpected tensor '" + tensors.begin()->first + "'");
    return model;
  }

 private:
  // Checkpoint loading: tensors stay zero until the caller fills them.
  RelationModel(ModelConfig cfg, PathVocab vocab) : cfg_(std::move(cfg)), vocab_(std::move(vocab)) {
    build_tensors();
    build_lookup_maps();
  }

  void build_tensors() {
    if (cfg_.inventory.empty()) throw NumericError("model needs a relation inventory");
    const int k = static_cast<int>(cfg_.inventory.size());
    if (uses_distributional(cfg_.variant) && cfg_.word_dim <= 0)
      throw NumericError("variant needs distributional vectors but word_dim is not set");

    if (cfg_.variant == ModelVariant::DS) {
      params_.add("margin.w", k, 2 * cfg_.word_dim);
      params_.add("margin.b", k, 1);
      return;
    }
    if (uses_paths(cfg_.variant)) {
      params_.add("emb.lemma", static_cast<Eigen::Index>(vocab_.lemmas.size()), cfg_.lemma_dim);
      params_.add("emb.pos", static_cast<Eigen::Index>(vocab_.poses.size()), cfg_.pos_dim);
      params_.add("emb.dep", static_cast<Eigen::Index>(vocab_.deps.size()), cfg_.dep_dim);
      params_.add("emb.dir", 3, cfg_.dir_dim);
      params_.add("cell.wx", 4 * cfg_.cell_size, cfg_.edge_dim());
      params_.add("cell.wh", 4 * cfg_.cell_size, cfg_.cell_size);
      params_.add("cell.b", 4 * cfg_.cell_size, 1);
      params_.add("path.nopath", cfg_.cell_size, 1);
    }
    if (has_hidden_layer(cfg_.variant)) {
      params_.add("hidden.w", cfg_.hidden_size, cfg_.feature_dim());
      params_.add("hidden.b", cfg_.hidden_size, 1);
      params_.add("cls.w", k, cfg_.hidden_size);
      params_.add("cls.b", k, 1);
    } else {
      params_.add("cls.w", k, cfg_.feature_dim());
    }
  }

  void init_weights(const EmbeddingTable* pretrained, SplitRng& rng) {
    for (auto& [name, tensor] : params_.tensors()) {
      if (name == "cell.wx" || name == "cell.wh" || name == "cell.b") continue;  // cell inits below
      if (name.ends_with(".b") || name == "margin.w") continue;                  // zeros
      SplitRng local = rng.split("init:" + name);
      glorot_init(tensor.value, local);
    }
    if (uses_paths(cfg_.variant)) {
      // Re-create the cell tensors' contents in place (they were added above).
      SplitRng wx_rng = rng.split("init:cell.wx");
      SplitRng wh_rng = rng.split("init:cell.wh");
      glorot_init(params_.at("cell.wx").value, wx_rng);
      glorot_init(params_.at("cell.wh").value, wh_rng);
      params_.at("cell.b").value.setZero();
      params_.at("cell.b").value.block(cfg_.cell_size, 0, cfg_.cell_size, 1).setOnes();
      if (pretrained && pretrained->dim() == cfg_.lemma_dim) {
        Mat& table = params_.at("emb.lemma").value;
        for (std::size_t i = 1; i < vocab_.lemmas.size(); ++i) {
          if (!pretrained->contains(vocab_.lemmas[i])) continue;
          auto [v, oov] = pretrained->lookup(vocab_.lemmas[i]);
          table.row(static_cast<Eigen::Index>(i)) = v.transpose();
        }
      }
    }
  }

  void build_lookup_maps() {
    for (std::size_t i = 0; i < vocab_.lemmas.size(); ++i) lemma_id_.emplace(vocab_.lemmas[i], i);
    for (std::size_t i = 0; i < vocab_.poses.size(); ++i) pos_id_.emplace(vocab_.poses[i], i);
    for (std::size_t i = 0; i < vocab_.deps.size(); ++i) dep_id_.emplace(vocab_.deps[i], i);
  }

  RecurrentCellParams cell_params() const {
    RecurrentCellParams cell;
    cell.input_size = cfg_.edge_dim();
    cell.hidden_size = cfg_.cell_size;
    cell.wx = "cell.wx";
    cell.wh = "cell.wh";
    cell.b = "cell.b";
    return cell;
  }

  std::array<int, 4> edge_ids(const PathEdge& e) const {
    auto id_of = [](const std::unordered_map<std::string, int>& m, const std::string& key) {
      auto it = m.find(key);
      return it == m.end() ? 0 : it->second;
    };
    return {id_of(lemma_id_, e.lemma), id_of(pos_id_, e.pos), id_of(dep_id_, e.dep),
            static_cast<int>(e.direction)};
  }

  Vec embed_edge_rows(const std::array<int, 4>& ids) const {
    Vec v(cfg_.edge_dim());
    v << params_.at("emb.lemma").value.row(ids[0]).transpose(),
        params_.at("emb.pos").value.row(ids[1]).transpose(),
        params_.at("emb.dep").value.row(ids[2]).transpose(),
        params_.at("emb.dir").value.row(ids[3]).transpose();
    return v;
  }

  void check_word_dim(const Vec& v_wx, const Vec& v_wy) const {
    if (v_wx.size() != cfg_.word_dim || v_wy.size() != cfg_.word_dim)
      throw NumericError("distributional vectors of size " + std::to_string(v_wx.size()) + "/" +
                         std::to_string(v_wy.size()) + ", model expects " +
                         std::to_string(cfg_.word_dim));
  }

  void backward(const ForwardTrace& trace, int gold) {
    Vec dlogits = softmax_xent_grad(trace.probs, gold);
    Vec dfeature;
    if (has_hidden_layer(cfg_.variant)) {
      Tensor& cls_w = params_.at("cls.w");
      params_.at("cls.b").grad.col(0) += dlogits;
      cls_w.grad += dlogits * trace.hidden.transpose();
      Vec dh = cls_w.value.transpose() * dlogits;
      Vec da = (dh.array() * (1.0 - trace.hidden.array().square())).matrix();
      Tensor& hid_w = params_.at("hidden.w");
      params_.at("hidden.b").grad.col(0) += da;
      hid_w.grad += da * trace.assembled.transpose();
      dfeature = hid_w.value.transpose() * da;
    } else {
      Tensor& cls_w = params_.at("cls.w");
      cls_w.grad += dlogits * trace.assembled.transpose();
      dfeature = cls_w.value.transpose() * dlogits;
    }
    if (trace.mask.size() > 0) dfeature = dfeature.cwiseProduct(trace.mask);

    if (!uses_paths(cfg_.variant)) return;
    Vec d_vpaths = cfg_.variant == ModelVariant::PB
                       ? dfeature
                       : Vec(dfeature.segment(cfg_.word_dim, cfg_.cell_size));
    if (trace.used_nopath) {
      params_.at("path.nopath").grad.col(0) += d_vpaths;
      return;
    }
    const RecurrentCellParams cell = cell_params();
    Mat& g_lemma = params_.at("emb.lemma").grad;
    Mat& g_pos = params_.at("emb.pos").grad;
    Mat& g_dep = params_.at("emb.dep").grad;
    Mat& g_dir = params_.at("emb.dir").grad;
    for (const PathTrace& pt : trace.paths) {
      Vec d_o = pt.weight * d_vpaths;
      std::vector<Vec> d_inputs = encode_sequence_backward(params_, cell, pt.seq, d_o);
      for (std::size_t t = 0; t < d_inputs.size(); ++t) {
        const Vec& di = d_inputs[t];
        const auto& ids = pt.ids[t];
        int off = 0;
        g_lemma.row(ids[0]) += di.segment(off, cfg_.lemma_dim).transpose();
        off += cfg_.lemma_dim;
        g_pos.row(ids[1]) += di.segment(off, cfg_.pos_dim).transpose();
        off += cfg_.pos_dim;
        g_dep.row(ids[2]) += di.segment(off, cfg_.dep_dim).transpose();
        off += cfg_.dep_dim;
        g_dir.row(ids[3]) += di.segment(off, cfg_.dir_dim).transpose();
      }
    }
  }

  ModelConfig cfg_;
  PathVocab vocab_;
  ParamSet params_;
  std::unordered_map<std::string, int> lemma_id_;
  std::unordered_map<std::string, int> pos_id_;
  std::unordered_map<std::string, int> dep_id_;
};

// ---------------------------------------------------------------------------
// Training with validation-grid tuning.
// ---------------------------------------------------------------------------

struct GridScore {
  double lr = 0.0;
  double dropout = 0.0;
  double margin_c = 0.0;
  int epochs_ran = 0;
  double val_precision = 0.0;
  double val_recall = 0.0;
  double val_f1 = 0.0;
  double best_train_accuracy = 0.0;
};

struct TuningReport {
  std::vector<GridScore> scores;
  std::size_t best = 0;
};

struct TrainResult {
  RelationModel model;
  TuningReport report;
};

namespace detail {

/// Distributional vectors resolved once per distinct term; OOV handled by
/// the table's unk policy.
class TermVectors {
 public:
  explicit TermVectors(const EmbeddingTable* table) : table_(table) {}

  const Vec& get(const std::string& term) {
    auto it = cache_.find(term);
    if (it != cache_.end()) return it->second;
    if (!table_) {
      static const Vec empty = Vec::Zero(0);
      return empty;
    }
    auto [v, oov] = table_->lookup(term);
    return cache_.emplace(term, std::move(v)).first->second;
  }

 private:
  const EmbeddingTable* table_;
  std::unordered_map<std::string, Vec> cache_;
};

}  // namespace detail

inline std::vector<Prediction> predict_batch(const RelationModel& model,
                                             const std::vector<LabeledPair>& pairs,
                                             const PathIndex* index, const EmbeddingTable* emb) {
  const ModelConfig& cfg = model.config();
  if (uses_distributional(cfg.variant) && !emb)
    throw DataError(std::string(variant_name(cfg.variant)) + " needs an embedding table");
  if (uses_distributional(cfg.variant) && emb->dim() != cfg.word_dim)
    throw DataError("embedding dimension " + std::to_string(emb->dim()) +
                    " does not match the checkpoint's word_dim " + std::to_string(cfg.word_dim));
  detail::TermVectors vectors(uses_distributional(cfg.variant) ? emb : nullptr);
  const Vec none = Vec::Zero(cfg.word_dim > 0 ? cfg.word_dim : 0);
  std::vector<Prediction> out;
  out.reserve(pairs.size());
  for (const LabeledPair& p : pairs) {
    const PathIndex::PathCounts* paths =
        uses_paths(cfg.variant) && index ? index->find(p.x, p.y) : nullptr;
    const Vec& vx = uses_distributional(cfg.variant) ? vectors.get(p.x) : none;
    const Vec& vy = uses_distributional(cfg.variant) ? vectors.get(p.y) : none;
    out.push_back(model.forward(vx, vy, paths));
  }
  return out;
}

inline double accuracy_of(const std::vector<Prediction>& preds,
                          const std::vector<LabeledPair>& pairs) {
  if (pairs.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    if (preds[i].relation == pairs[i].relation) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

inline Metrics metrics_of(const std::vector<Prediction>& preds,
                          const std::vector<LabeledPair>& pairs,
                          const std::vector<std::string>& inventory) {
  std::vector<std::string> gold, pred;
  gold.reserve(pairs.size());
  pred.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    gold.push_back(pairs[i].relation);
    pred.push_back(preds[i].relation);
  }
  return weighted_prf(confusion(gold, pred, inventory));
}

/// Sweeps the hyperparameter grid, trains each point with early stopping on
/// validation weighted F1, and returns the best model plus all grid scores.
/// When the validation split is empty, scoring falls back to the train set.
inline TrainResult train_model(ModelVariant variant, const std::vector<std::string>& inventory,
                               const std::vector<LabeledPair>& train,
                               const std::vector<LabeledPair>& val, const PathIndex* index,
                               const EmbeddingTable* emb, const Hyper& hyper, std::uint64_t seed) {
  if (train.empty()) throw DataError("empty train set");
  if (inventory.empty()) throw DataError("empty relation inventory");
  {
    std::set<std::string> seen;
    for (const LabeledPair& p : train) seen.insert(p.relation);
    std::vector<std::string> missing;
    for (const std::string& r : inventory)
      if (!seen.count(r)) missing.push_back(r);
    if (!missing.empty())
      throw DataError("relation(s) with zero train instances: " + join(missing, ", "));
  }
  if (uses_paths(variant) && !index)
    throw DataError(std::string(variant_name(variant)) + " needs a path index (--index)");
  if (uses_distributional(variant) && !emb)
    throw DataError(std::string(variant_name(variant)) + " needs embeddings (--embeddings)");
  if (hyper.max_epochs < 1 || hyper.lr_grid.empty() || hyper.dropout_grid.empty() ||
      hyper.margin_c_grid.empty())
    throw std::invalid_argument("hyperparameter grids must be non-empty and max_epochs >= 1");

  std::unordered_map<std::string, int> rel_id;
  for (std::size_t i = 0; i < inventory.size(); ++i) rel_id.emplace(inventory[i], i);
  for (const LabeledPair& p : train) {
    if (!rel_id.count(p.relation))
      throw DataError("train relation '" + p.relation + "' missing from inventory");
  }
  const std::vector<LabeledPair>& score_set = val.empty() ? train : val;

  ModelConfig base;
  base.variant = variant;
  base.inventory = inventory;
  base.word_dim = uses_distributional(variant) ? emb->dim() : 0;
  base.lemma_dim = hyper.lemma_dim;
  base.pos_dim = hyper.pos_dim;
  base.dep_dim = hyper.dep_dim;
  base.dir_dim = hyper.dir_dim;
  base.cell_size = hyper.cell_size;
  base.hidden_size = hyper.hidden_size;
  PathVocab vocab = uses_paths(variant) ? PathVocab::from_index(*index) : PathVocab{};

  detail::TermVectors vectors(uses_distributional(variant) ? emb : nullptr);
  const Vec none = Vec::Zero(0);
  auto vec_of = [&](const std::string& term) -> const Vec& {
    return uses_distributional(variant) ? vectors.get(term) : none;
  };
  auto paths_of = [&](const LabeledPair& p) -> const PathIndex::PathCounts* {
    return uses_paths(variant) && index ? index->find(p.x, p.y) : nullptr;
  };

  SplitRng root(seed);
  TuningReport report;
  std::optional<RelationModel> best_model;
  double best_f1 = -1.0;

  if (variant == ModelVariant::DS) {
    std::vector<Vec> features;
    std::vector<int> labels;
    features.reserve(train.size());
    for (const LabeledPair& p : train) {
      Vec f(2 * base.word_dim);
      f << vec_of(p.x), vec_of(p.y);
      features.push_back(std::move(f));
      labels.push_back(rel_id.at(p.relation));
    }
    for (std::size_t gi = 0; gi < hyper.margin_c_grid.size(); ++gi) {
      ModelConfig cfg = base;
      cfg.margin_c = hyper.margin_c_grid[gi];
      SplitRng rng = root.split("grid:" + std::to_string(gi));
      RelationModel model(cfg, vocab, nullptr, rng);
      model.margin_fit(features, labels, hyper.margin_epochs);
      Metrics m = metrics_of(predict_batch(model, score_set, index, emb), score_set, inventory);
      GridScore score;
      score.margin_c = cfg.margin_c;
      score.epochs_ran = hyper.margin_epochs;
      score.val_precision = m.weighted_precision;
      score.val_recall = m.weighted_recall;
      score.val_f1 = m.weighted_f1;
      score.best_train_accuracy =
          accuracy_of(predict_batch(model, train, index, emb), train);
      report.scores.push_back(score);
      if (score.val_f1 > best_f1 + 1e-12) {
        best_f1 = score.val_f1;
        report.best = report.scores.size() - 1;
        best_model.emplace(std::move(model));
      }
    }
    return {std::move(*best_model), std::move(report)};
  }

  std::size_t gi = 0;
  for (double lr : hyper.lr_grid) {
    for (double dropout : hyper.dropout_grid) {
      ModelConfig cfg = base;
      cfg.lr = lr;
      cfg.dropout = dropout;
      SplitRng grid_rng = root.split("grid:" + std::to_string(gi));
      SplitRng init_rng = grid_rng.split("init");
      RelationModel model(cfg, vocab, emb, init_rng);

      std::vector<std::size_t> order(train.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

      GridScore score;
      score.lr = lr;
      score.dropout = dropout;
      double grid_best_f1 = -1.0;
      std::optional<RelationModel> snapshot;
      int since_improvement = 0;
      const AdamConfig adam{lr};

      for (int epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
        SplitRng epoch_rng = grid_rng.split("epoch:" + std::to_string(epoch));
        epoch_rng.shuffle(order);
        for (std::size_t i : order) {
          const LabeledPair& p = train[i];
          model.train_example(vec_of(p.x), vec_of(p.y), paths_of(p), rel_id.at(p.relation),
                              epoch_rng);
          model.params().adam_step(adam);
        }
        score.epochs_ran = epoch;
        const double train_acc = accuracy_of(predict_batch(model, train, index, emb), train);
        score.best_train_accuracy = std::max(score.best_train_accuracy, train_acc);
        Metrics m = metrics_of(predict_batch(model, score_set, index, emb), score_set, inventory);
        if (m.weighted_f1 > grid_best_f1 + 1e-12) {
          grid_best_f1 = m.weighted_f1;
          score.val_precision = m.weighted_precision;
          score.val_recall = m.weighted_recall;
          score.val_f1 = m.weighted_f1;
          snapshot.emplace(model);
          since_improvement = 0;
        } else if (++since_improvement >= hyper.patience) {
          break;
        }
      }
      report.scores.push_back(score);
      if (score.val_f1 > best_f1 + 1e-12) {
        best_f1 = score.val_f1;
        report.best = report.scores.size() - 1;
        best_model.emplace(std::move(*snapshot));
      }
      ++gi;
    }
  }
  return {std::move(*best_model), std::move(report)};
}

/// Grid scores as a tab-separated table, best row marked.
inline std::string tuning_report_tsv(const TuningReport& report, ModelVariant variant) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"variant", "grid", "lr", "dropout", "margin_c", "epochs", "val_precision",
                  "val_recall", "val_f1", "train_accuracy", "selected"});
  for (std::size_t i = 0; i < report.scores.size(); ++i) {
    const GridScore& s = report.scores[i];
    rows.push_back({variant_name(variant), std::to_string(i), format_metric(s.lr),
                    format_metric(s.dropout), format_metric(s.margin_c),
                    std::to_string(s.epochs_ran), format_metric(s.val_precision),
                    format_metric(s.val_recall), format_metric(s.val_f1),
                    format_metric(s.best_train_accuracy), i == report.best ? "*" : ""});
  }
  return format_table_tsv(rows);
}

}  // namespace lexrel
