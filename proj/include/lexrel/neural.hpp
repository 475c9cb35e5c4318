#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "lexrel/rng.hpp"
#include "lexrel/util.hpp"

namespace lexrel {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// One named parameter tensor with its gradient accumulator and the adaptive
/// optimizer moments. Vectors are stored as n-by-1 matrices.
struct Tensor {
  Mat value;
  Mat grad;
  Mat m1;
  Mat m2;

  Tensor() = default;
  Tensor(Eigen::Index rows, Eigen::Index cols)
      : value(Mat::Zero(rows, cols)),
        grad(Mat::Zero(rows, cols)),
        m1(Mat::Zero(rows, cols)),
        m2(Mat::Zero(rows, cols)) {}
};

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// All trainable parameters of a model, keyed by name. Iteration order is the
/// name order, which keeps every update and serialization deterministic.
class ParamSet {
 public:
  Tensor& add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    auto [it, inserted] = tensors_.emplace(name, Tensor(rows, cols));
    if (!inserted) throw NumericError("duplicate parameter tensor: " + name);
    return it->second;
  }

  bool contains(const std::string& name) const { return tensors_.count(name) > 0; }

  Tensor& at(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw NumericError("unknown parameter tensor: " + name);
    return it->second;
  }
  const Tensor& at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw NumericError("unknown parameter tensor: " + name);
    return it->second;
  }

  std::map<std::string, Tensor>& tensors() { return tensors_; }
  const std::map<std::string, Tensor>& tensors() const { return tensors_; }

  void zero_grads() {
    for (auto& [name, t] : tensors_) t.grad.setZero();
  }

  std::int64_t step_count() const { return step_; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : tensors_) n += static_cast<std::size_t>(t.value.size());
    return n;
  }

  /// Adam update with bias correction over every tensor, then clears grads.
  void adam_step(const AdamConfig& cfg) {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
    for (auto& [name, t] : tensors_) {
      t.m1 = cfg.beta1 * t.m1 + (1.0 - cfg.beta1) * t.grad;
      t.m2 = (cfg.beta2 * t.m2.array() + (1.0 - cfg.beta2) * t.grad.array().square()).matrix();
      t.value.array() -=
          cfg.lr * (t.m1.array() / bc1) / ((t.m2.array() / bc2).sqrt() + cfg.eps);
      t.grad.setZero();
      if (!t.value.allFinite())
        throw NumericError("non-finite values in tensor '" + name + "' after update");
    }
  }

 private:
  std::map<std::string, Tensor> tensors_;
  std::int64_t step_ = 0;
};

/// Uniform(-a, +a) with a = sqrt(6 / (fan_in + fan_out)). Fill order is fixed
/// so results do not depend on the storage layout.
inline void glorot_init(Mat& m, SplitRng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-limit, limit);
  }
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Vec affine(const Mat& w, const Vec& b, const Vec& x) {
  if (w.cols() != x.size() || w.rows() != b.size())
    throw NumericError("affine shape mismatch: W is " + std::to_string(w.rows()) + "x" +
                       std::to_string(w.cols()) + ", b " + std::to_string(b.size()) + ", x " +
                       std::to_string(x.size()));
  return w * x + b;
}

inline Vec softmax(const Vec& z) {
  if (z.size() == 0) throw NumericError("softmax of empty vector");
  Vec e = (z.array() - z.maxCoeff()).exp().matrix();
  return e / e.sum();
}

inline double cross_entropy(const Vec& probs, int gold) {
  if (gold < 0 || gold >= probs.size()) throw NumericError("gold class out of range");
  return -std::log(probs[gold]);
}

/// Gradient of cross_entropy(softmax(z), gold) with respect to z.
inline Vec softmax_xent_grad(const Vec& probs, int gold) {
  Vec d = probs;
  d[gold] -= 1.0;
  return d;
}

// ---------------------------------------------------------------------------
// Gated recurrent cell (LSTM). Gates are fused into one 4H block in the order
// input, forget, output, candidate.
// ---------------------------------------------------------------------------

/// Names and sizes of one cell's tensors inside a ParamSet.
struct RecurrentCellParams {
  int input_size = 0;
  int hidden_size = 0;
  std::string wx;  // 4H x input
  std::string wh;  // 4H x H
  std::string b;   // 4H x 1

  static RecurrentCellParams create(ParamSet& params, const std::string& prefix, int input_size,
                                    int hidden_size, SplitRng& rng) {
    RecurrentCellParams cell;
    cell.input_size = input_size;
    cell.hidden_size = hidden_size;
    cell.wx = prefix + ".wx";
    cell.wh = prefix + ".wh";
    cell.b = prefix + ".b";
    auto& wx = params.add(cell.wx, 4 * hidden_size, input_size);
    auto& wh = params.add(cell.wh, 4 * hidden_size, hidden_size);
    auto& b = params.add(cell.b, 4 * hidden_size, 1);
    SplitRng wx_rng = rng.split(cell.wx);
    SplitRng wh_rng = rng.split(cell.wh);
    glorot_init(wx.value, wx_rng);
    glorot_init(wh.value, wh_rng);
    b.value.block(hidden_size, 0, hidden_size, 1).setOnes();  // forget gate bias +1
    return cell;
  }
};

struct CellStepTrace {
  Vec x, h_prev, c_prev;
  Vec i, f, o, g, c, tanh_c;
};

/// h, c = gated recurrence over one input. i/f/o are logistic gates, g the
/// tanh candidate; c = f*c_prev + i*g, h = o*tanh(c).
inline std::pair<Vec, Vec> cell_step(const ParamSet& params, const RecurrentCellParams& cell,
                                     const Vec& x, const Vec& h_prev, const Vec& c_prev,
                                     CellStepTrace* trace = nullptr) {
  const int h_size = cell.hidden_size;
  if (x.size() != cell.input_size || h_prev.size() != h_size || c_prev.size() != h_size)
    throw NumericError("cell_step shape mismatch");
  const Mat& wx = params.at(cell.wx).value;
  const Mat& wh = params.at(cell.wh).value;
  const Mat& b = params.at(cell.b).value;
  Vec a = wx * x + wh * h_prev + b.col(0);
  Vec i = a.segment(0, h_size).unaryExpr([](double v) { return logistic(v); });
  Vec f = a.segment(h_size, h_size).unaryExpr([](double v) { return logistic(v); });
  Vec o = a.segment(2 * h_size, h_size).unaryExpr([](double v) { return logistic(v); });
  Vec g = a.segment(3 * h_size, h_size).array().tanh().matrix();
  Vec c = f.cwiseProduct(c_prev) + i.cwiseProduct(g);
  Vec tanh_c = c.array().tanh().matrix();
  Vec h = o.cwiseProduct(tanh_c);
  if (trace) {
    trace->x = x;
    trace->h_prev = h_prev;
    trace->c_prev = c_prev;
    trace->i = std::move(i);
    trace->f = std::move(f);
    trace->o = std::move(o);
    trace->g = std::move(g);
    trace->c = c;
    trace->tanh_c = std::move(tanh_c);
  }
  return {std::move(h), std::move(c)};
}

struct SequenceTrace {
  std::vector<CellStepTrace> steps;
};

/// Final hidden state after folding cell_step over the inputs from a zero
/// initial state.
inline Vec encode_sequence(const ParamSet& params, const RecurrentCellParams& cell,
                           const std::vector<Vec>& inputs, SequenceTrace* trace = nullptr) {
  if (inputs.empty()) throw NumericError("encode_sequence needs at least one input");
  Vec h = Vec::Zero(cell.hidden_size);
  Vec c = Vec::Zero(cell.hidden_size);
  if (trace) trace->steps.resize(inputs.size());
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto [nh, nc] = cell_step(params, cell, inputs[t], h, c, trace ? &trace->steps[t] : nullptr);
    h = std::move(nh);
    c = std::move(nc);
  }
  return h;
}

/// Backpropagates d(final h) through a recorded sequence, accumulating cell
/// gradients and returning the gradient for each input vector.
inline std::vector<Vec> encode_sequence_backward(ParamSet& params, const RecurrentCellParams& cell,
                                                 const SequenceTrace& trace, const Vec& d_final) {
  const int h_size = cell.hidden_size;
  Mat& g_wx = params.at(cell.wx).grad;
  Mat& g_wh = params.at(cell.wh).grad;
  Mat& g_b = params.at(cell.b).grad;
  const Mat& wx = params.at(cell.wx).value;
  const Mat& wh = params.at(cell.wh).value;

  std::vector<Vec> d_inputs(trace.steps.size());
  Vec dh = d_final;
  Vec dc = Vec::Zero(h_size);
  for (std::size_t t = trace.steps.size(); t-- > 0;) {
    const CellStepTrace& s = trace.steps[t];
    dc.array() += dh.array() * s.o.array() * (1.0 - s.tanh_c.array().square());
    Vec da(4 * h_size);
    da.segment(0, h_size) =
        (dc.array() * s.g.array() * s.i.array() * (1.0 - s.i.array())).matrix();  // input gate
    da.segment(h_size, h_size) =
        (dc.array() * s.c_prev.array() * s.f.array() * (1.0 - s.f.array())).matrix();  // forget
    da.segment(2 * h_size, h_size) =
        (dh.array() * s.tanh_c.array() * s.o.array() * (1.0 - s.o.array())).matrix();  // output
    da.segment(3 * h_size, h_size) =
        (dc.array() * s.i.array() * (1.0 - s.g.array().square())).matrix();  // candidate
    g_wx += da * s.x.transpose();
    g_wh += da * s.h_prev.transpose();
    g_b.col(0) += da;
    d_inputs[t] = wx.transpose() * da;
    dh = wh.transpose() * da;
    dc = dc.cwiseProduct(s.f);
  }
  return d_inputs;
}

/// Inverted dropout: zeroes entries with probability p and scales the kept
/// ones by 1/(1-p). Returns the applied mask for the backward pass.
inline Vec dropout_mask(Eigen::Index size, double p, SplitRng& rng) {
  Vec mask(size);
  const double scale = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < size; ++i) mask[i] = rng.bernoulli(p) ? 0.0 : scale;
  return mask;
}

/// Compares analytic gradients against central finite differences for every
/// scalar parameter. `loss_with_grads` must run a deterministic forward pass
/// (dropout disabled), fill params' grads, and return the loss.
inline double grad_check(ParamSet& params, const std::function<double()>& loss_with_grads,
                         double eps = 1e-5) {
  params.zero_grads();
  const double base = loss_with_grads();
  if (!std::isfinite(base)) throw NumericError("grad_check: non-finite loss");
  std::map<std::string, Mat> analytic;
  for (const auto& [name, t] : params.tensors()) analytic.emplace(name, t.grad);

  double max_rel = 0.0;
  for (auto& [name, t] : params.tensors()) {
    Mat& v = t.value;
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      for (Eigen::Index j = 0; j < v.cols(); ++j) {
        const double orig = v(i, j);
        v(i, j) = orig + eps;
        params.zero_grads();
        const double lp = loss_with_grads();
        v(i, j) = orig - eps;
        params.zero_grads();
        const double lm = loss_with_grads();
        v(i, j) = orig;
        if (!std::isfinite(lp) || !std::isfinite(lm))
          throw NumericError("grad_check: non-finite loss while perturbing " + name);
        const double numeric = (lp - lm) / (2.0 * eps);
        const double ana = analytic.at(name)(i, j);
        const double scale = std::max(std::abs(numeric), std::abs(ana));
        if (scale < 1e-8) continue;  // both sides numerically zero
        max_rel = std::max(max_rel, std::abs(numeric - ana) / scale);
      }
    }
  }
  params.zero_grads();
  return max_rel;
}

}  // namespace lexrel
