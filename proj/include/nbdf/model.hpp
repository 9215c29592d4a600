#pragma once

// The frequency-shared sequence model: two stacked (bi)LSTM layers, a dense
// head and a target-dependent output activation. One parameter set serves
// every frequency bin. Forward pass, exact backpropagation through time and
// parameter bookkeeping live here.
//
// Sequences are batched column-wise: a batch of B sequences of T frames is a
// (dim x T*B) matrix whose column t*B + b holds frame t of sequence b.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nbdf/targets.hpp"

namespace nbdf {

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using RowMatrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

struct Architecture {
  int channels = 4;
  bool bidirectional = true;
  int hidden1 = 256;
  int hidden2 = 128;
  TargetKind target = TargetKind::kSf;

  int input_dim() const { return 2 * channels; }
  int output_dim() const { return nbdf::output_dim(target, channels); }
  int directions() const { return bidirectional ? 2 : 1; }
  int hidden(int layer) const { return layer == 0 ? hidden1 : hidden2; }
  int layer_input(int layer) const {
    return layer == 0 ? input_dim() : directions() * hidden1;
  }
  int dense_input() const { return directions() * hidden2; }

  void validate() const {
    if (channels < 1 || hidden1 < 1 || hidden2 < 1)
      throw std::invalid_argument("architecture sizes must be positive");
  }

  bool operator==(const Architecture&) const = default;
};

/// Exact parameter count: 4*(in + hidden + 1)*hidden per layer and direction,
/// plus (dense_in + 1)*out for the head.
inline long long count_parameters(const Architecture& a) {
  a.validate();
  long long n = 0;
  for (int l = 0; l < 2; ++l) {
    const long long in = a.layer_input(l), h = a.hidden(l);
    n += a.directions() * 4 * (in + h + 1) * h;
  }
  n += static_cast<long long>(a.dense_input() + 1) * a.output_dim();
  return n;
}

struct ParamBlock {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

/// Ordered block list. LSTM blocks stack the four gates row-wise in the order
/// input, forget, cell, output.
inline std::vector<ParamBlock> parameter_layout(const Architecture& a) {
  a.validate();
  std::vector<ParamBlock> out;
  std::size_t off = 0;
  auto add = [&](std::string name, int r, int c) {
    out.push_back({std::move(name), r, c, off});
    off += static_cast<std::size_t>(r) * c;
  };
  const char* dir_names[2] = {"fwd", "bwd"};
  for (int l = 0; l < 2; ++l) {
    for (int d = 0; d < a.directions(); ++d) {
      const std::string p = "layer" + std::to_string(l + 1) + "." + dir_names[d] + ".";
      const int h = a.hidden(l);
      add(p + "input_weights", 4 * h, a.layer_input(l));
      add(p + "recurrent_weights", 4 * h, h);
      add(p + "bias", 4 * h, 1);
    }
  }
  add("dense.weights", a.output_dim(), a.dense_input());
  add("dense.bias", a.output_dim(), 1);
  return out;
}

template <typename S>
class ModelParameters {
 public:
  ModelParameters() = default;
  explicit ModelParameters(const Architecture& arch)
      : arch_(arch), layout_(parameter_layout(arch)) {
    values_.assign(layout_.back().offset + layout_.back().size(), S(0));
  }

  const Architecture& arch() const { return arch_; }
  const std::vector<ParamBlock>& layout() const { return layout_; }
  std::size_t size() const { return values_.size(); }

  std::span<const S> values() const { return values_; }
  /// Mutable access invalidates forward caches built from earlier values.
  std::span<S> mutable_values() {
    ++revision_;
    return values_;
  }
  std::uint64_t revision() const { return revision_; }

  Eigen::Map<const RowMatrix<S>> block(std::size_t i) const {
    const auto& b = layout_.at(i);
    return {values_.data() + b.offset, b.rows, b.cols};
  }
  Eigen::Map<RowMatrix<S>> mutable_block(std::size_t i) {
    ++revision_;
    const auto& b = layout_.at(i);
    return {values_.data() + b.offset, b.rows, b.cols};
  }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < layout_.size(); ++i)
      if (layout_[i].name == name) return i;
    throw std::out_of_range("no parameter block named " + name);
  }

  /// First of the three blocks (input, recurrent, bias) of an LSTM layer direction.
  std::size_t lstm_block(int layer, int dir) const {
    return static_cast<std::size_t>((layer * arch_.directions() + dir) * 3);
  }
  std::size_t dense_block() const { return layout_.size() - 2; }

  void set_zero() {
    ++revision_;
    std::fill(values_.begin(), values_.end(), S(0));
  }

  template <typename T>
  ModelParameters<T> cast() const {
    ModelParameters<T> out(arch_);
    auto dst = out.mutable_values();
    for (std::size_t i = 0; i < values_.size(); ++i) dst[i] = static_cast<T>(values_[i]);
    return out;
  }

 private:
  Architecture arch_;
  std::vector<ParamBlock> layout_;
  std::vector<S> values_;
  std::uint64_t revision_ = 0;
};

/// Uniform in [0, 1) from the top 53 bits; identical on every platform.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Glorot-uniform weights per gate matrix, zero biases except forget gate = 1.
template <typename S>
ModelParameters<S> init_params(const Architecture& arch, std::uint64_t seed) {
  ModelParameters<S> p(arch);
  std::mt19937_64 rng(seed);
  auto fill = [&](std::size_t idx, int fan_in, int fan_out) {
    const double lim = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    auto m = p.mutable_block(idx);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        m(r, c) = static_cast<S>((2.0 * uniform01(rng) - 1.0) * lim);
  };
  for (int l = 0; l < 2; ++l) {
    const int h = arch.hidden(l);
    for (int d = 0; d < arch.directions(); ++d) {
      const std::size_t b = p.lstm_block(l, d);
      fill(b, arch.layer_input(l), h);
      fill(b + 1, h, h);
      p.mutable_block(b + 2).middleRows(h, h).setConstant(S(1));
    }
  }
  fill(p.dense_block(), arch.dense_input(), arch.output_dim());
  return p;
}

template <typename S>
struct LstmWeights {
  Eigen::Map<const RowMatrix<S>> input;      // 4H x in
  Eigen::Map<const RowMatrix<S>> recurrent;  // 4H x H
  Eigen::Map<const RowMatrix<S>> bias;       // 4H x 1
  int hidden() const { return static_cast<int>(recurrent.cols()); }
};

template <typename S>
LstmWeights<S> lstm_weights(const ModelParameters<S>& p, int layer, int dir) {
  const std::size_t b = p.lstm_block(layer, dir);
  return {p.block(b), p.block(b + 1), p.block(b + 2)};
}

/// One LSTM step: i, f, o = sigmoid, g = tanh, c = f*c_prev + i*g, h = o*tanh(c).
template <typename S>
void lstm_cell_step(const LstmWeights<S>& w, const Vector<S>& x, const Vector<S>& h_prev,
                    const Vector<S>& c_prev, Vector<S>& h, Vector<S>& c) {
  const int H = w.hidden();
  if (x.size() != w.input.cols() || h_prev.size() != H || c_prev.size() != H)
    throw std::invalid_argument("lstm_cell_step: shape mismatch");
  Vector<S> z = w.input * x + w.recurrent * h_prev + w.bias.col(0);
  const auto i = z.head(H).array().logistic();
  const auto f = z.segment(H, H).array().logistic();
  const auto g = z.segment(2 * H, H).array().tanh();
  const auto o = z.tail(H).array().logistic();
  c = (f * c_prev.array() + i * g).matrix();
  h = (o * c.array().tanh()).matrix();
}

template <typename S>
struct SequenceBatch {
  Matrix<S> x;  // dim x (frames * batch)
  int frames = 0;
  int batch = 0;
  std::vector<int> lengths;  // valid frames per sequence

  int dim() const { return static_cast<int>(x.rows()); }
  auto frame(int t) const { return x.middleCols(static_cast<Eigen::Index>(t) * batch, batch); }

  /// Packs frame-major sequences (frames * dim each) into a batch.
  static SequenceBatch from_frame_major(const std::vector<std::span<const S>>& seqs, int frames,
                                        int dim, const std::vector<int>& lengths) {
    SequenceBatch b;
    b.frames = frames;
    b.batch = static_cast<int>(seqs.size());
    b.lengths = lengths;
    b.x.resize(dim, static_cast<Eigen::Index>(frames) * b.batch);
    for (int s = 0; s < b.batch; ++s) {
      if (seqs[static_cast<std::size_t>(s)].size() != static_cast<std::size_t>(frames) * dim)
        throw std::invalid_argument("sequence has the wrong size for the batch");
      for (int t = 0; t < frames; ++t)
        for (int j = 0; j < dim; ++j)
          b.x(j, static_cast<Eigen::Index>(t) * b.batch + s) =
              seqs[static_cast<std::size_t>(s)][static_cast<std::size_t>(t) * dim + j];
    }
    return b;
  }
};

template <typename S>
struct DirectionTrace {
  Matrix<S> gates;      // 4H x TB, activated
  Matrix<S> cell;       // H x TB, after masking
  Matrix<S> tanh_cell;  // H x TB
  Matrix<S> hidden;     // H x TB, after masking
};

template <typename S>
struct LayerTrace {
  DirectionTrace<S> dir[2];
  Matrix<S> output;  // directions*H x TB
};

template <typename S>
struct ForwardCache {
  int frames = 0;
  int batch = 0;
  std::vector<int> lengths;
  Matrix<S> input;
  LayerTrace<S> layer[2];
  Matrix<S> output;  // out_dim x TB, after the activation
  const void* owner = nullptr;
  std::uint64_t revision = 0;

  /// Frame-major copy of sequence b's outputs.
  std::vector<S> sequence_output(int b) const {
    const auto od = output.rows();
    std::vector<S> out(static_cast<std::size_t>(frames * od));
    for (int t = 0; t < frames; ++t)
      for (Eigen::Index j = 0; j < od; ++j)
        out[static_cast<std::size_t>(t * od + j)] =
            output(j, static_cast<Eigen::Index>(t) * batch + b);
    return out;
  }
};

namespace detail {

inline bool any_padding(const std::vector<int>& lengths, int frames) {
  for (int len : lengths)
    if (len < frames) return true;
  return false;
}

template <typename S>
void run_direction(const LstmWeights<S>& w, const Matrix<S>& in, int T, int B,
                   const std::vector<int>& lengths, bool reverse, DirectionTrace<S>& tr) {
  const int H = w.hidden();
  const Eigen::Index TB = static_cast<Eigen::Index>(T) * B;
  tr.gates.noalias() = w.input * in;
  tr.gates.colwise() += w.bias.col(0);
  tr.cell.resize(H, TB);
  tr.tanh_cell.resize(H, TB);
  tr.hidden.resize(H, TB);
  const bool masked = any_padding(lengths, T);
  for (int s = 0; s < T; ++s) {
    const int t = reverse ? T - 1 - s : s;
    const int tp = reverse ? t + 1 : t - 1;
    const Eigen::Index col = static_cast<Eigen::Index>(t) * B;
    auto G = tr.gates.middleCols(col, B);
    if (s > 0)
      G.noalias() += w.recurrent * tr.hidden.middleCols(static_cast<Eigen::Index>(tp) * B, B);
    G.topRows(2 * H) = G.topRows(2 * H).array().logistic().matrix();
    G.middleRows(2 * H, H) = G.middleRows(2 * H, H).array().tanh().matrix();
    G.bottomRows(H) = G.bottomRows(H).array().logistic().matrix();
    auto c = tr.cell.middleCols(col, B);
    if (s > 0)
      c = (G.middleRows(H, H).array() *
               tr.cell.middleCols(static_cast<Eigen::Index>(tp) * B, B).array() +
           G.topRows(H).array() * G.middleRows(2 * H, H).array())
              .matrix();
    else
      c = (G.topRows(H).array() * G.middleRows(2 * H, H).array()).matrix();
    auto tc = tr.tanh_cell.middleCols(col, B);
    tc = c.array().tanh().matrix();
    auto h = tr.hidden.middleCols(col, B);
    h = (G.bottomRows(H).array() * tc.array()).matrix();
    if (masked) {
      for (int b = 0; b < B; ++b) {
        if (t >= lengths[static_cast<std::size_t>(b)]) {
          c.col(b).setZero();
          h.col(b).setZero();
        }
      }
    }
  }
}

template <typename S>
struct LstmGradients {
  Eigen::Map<RowMatrix<S>> input;
  Eigen::Map<RowMatrix<S>> recurrent;
  Eigen::Map<RowMatrix<S>> bias;
};

template <typename S>
void backprop_direction(const LstmWeights<S>& w, const Matrix<S>& in, const DirectionTrace<S>& tr,
                        const Matrix<S>& d_hidden, int T, int B, const std::vector<int>& lengths,
                        bool reverse, LstmGradients<S>& g, Matrix<S>& d_in) {
  const int H = w.hidden();
  const Eigen::Index TB = static_cast<Eigen::Index>(T) * B;
  Matrix<S> d_pre(4 * H, TB);
  Matrix<S> dh_next = Matrix<S>::Zero(H, B);
  Matrix<S> dc_next = Matrix<S>::Zero(H, B);
  Matrix<S> dh(H, B), dc(H, B);
  const bool masked = any_padding(lengths, T);
  for (int s = T - 1; s >= 0; --s) {
    const int t = reverse ? T - 1 - s : s;
    const int tp = reverse ? t + 1 : t - 1;
    const Eigen::Index col = static_cast<Eigen::Index>(t) * B;
    dh = d_hidden.middleCols(col, B) + dh_next;
    dc = dc_next;
    if (masked) {
      for (int b = 0; b < B; ++b) {
        if (t >= lengths[static_cast<std::size_t>(b)]) {
          dh.col(b).setZero();
          dc.col(b).setZero();
        }
      }
    }
    const auto G = tr.gates.middleCols(col, B);
    const auto gi = G.topRows(H).array();
    const auto gf = G.middleRows(H, H).array();
    const auto gg = G.middleRows(2 * H, H).array();
    const auto go = G.bottomRows(H).array();
    const auto tc = tr.tanh_cell.middleCols(col, B).array();
    dc.array() += dh.array() * go * (S(1) - tc.square());
    auto dP = d_pre.middleCols(col, B);
    dP.bottomRows(H) = (dh.array() * tc * go * (S(1) - go)).matrix();
    dP.topRows(H) = (dc.array() * gg * gi * (S(1) - gi)).matrix();
    dP.middleRows(2 * H, H) = (dc.array() * gi * (S(1) - gg.square())).matrix();
    if (s > 0) {
      const auto c_prev = tr.cell.middleCols(static_cast<Eigen::Index>(tp) * B, B).array();
      dP.middleRows(H, H) = (dc.array() * c_prev * gf * (S(1) - gf)).matrix();
      g.recurrent.noalias() +=
          dP * tr.hidden.middleCols(static_cast<Eigen::Index>(tp) * B, B).transpose();
    } else {
      dP.middleRows(H, H).setZero();
    }
    dc_next = (dc.array() * gf).matrix();
    dh_next.noalias() = w.recurrent.transpose() * dP;
  }
  g.input.noalias() += d_pre * in.transpose();
  g.bias.col(0) += d_pre.rowwise().sum();
  d_in.noalias() += w.input.transpose() * d_pre;
}

}  // namespace detail

/// Runs the model on a batch and keeps every activation needed for backprop.
template <typename S>
ForwardCache<S> model_forward(const SequenceBatch<S>& batch, const ModelParameters<S>& p) {
  const Architecture& a = p.arch();
  if (batch.dim() != a.input_dim())
    throw std::invalid_argument("input dimension " + std::to_string(batch.dim()) +
                                " does not match model input " + std::to_string(a.input_dim()));
  if (static_cast<int>(batch.lengths.size()) != batch.batch)
    throw std::invalid_argument("batch lengths do not match batch size");
  ForwardCache<S> cache;
  cache.frames = batch.frames;
  cache.batch = batch.batch;
  cache.lengths = batch.lengths;
  cache.input = batch.x;
  cache.owner = &p;
  cache.revision = p.revision();
  const int T = batch.frames, B = batch.batch;
  const Eigen::Index TB = static_cast<Eigen::Index>(T) * B;

  const Matrix<S>* in = &cache.input;
  for (int l = 0; l < 2; ++l) {
    auto& lt = cache.layer[l];
    const int H = a.hidden(l);
    lt.output.resize(a.directions() * H, TB);
    for (int d = 0; d < a.directions(); ++d) {
      detail::run_direction(lstm_weights(p, l, d), *in, T, B, batch.lengths, d == 1, lt.dir[d]);
      lt.output.middleRows(d * H, H) = lt.dir[d].hidden;
    }
    in = &lt.output;
  }
  const auto V = p.block(p.dense_block());
  const auto c = p.block(p.dense_block() + 1);
  cache.output.noalias() = V * cache.layer[1].output;
  cache.output.colwise() += c.col(0);
  switch (activation_for(a.target)) {
    case Activation::kSigmoid: cache.output = cache.output.array().logistic().matrix(); break;
    case Activation::kTanh: cache.output = cache.output.array().tanh().matrix(); break;
    case Activation::kIdentity: break;
  }
  return cache;
}

/// Accumulates dL/dparams into grads given dL/d(outputs) (out_dim x TB).
template <typename S>
void model_backward(const ForwardCache<S>& cache, const Matrix<S>& d_output,
                    const ModelParameters<S>& p, ModelParameters<S>& grads) {
  if (cache.owner != &p || cache.revision != p.revision())
    throw std::logic_error("forward cache is stale: parameters changed since the forward pass");
  if (d_output.rows() != cache.output.rows() || d_output.cols() != cache.output.cols())
    throw std::invalid_argument("output gradient has the wrong shape");
  if (!(grads.arch() == p.arch())) throw std::invalid_argument("gradient architecture mismatch");
  const Architecture& a = p.arch();
  const int T = cache.frames, B = cache.batch;

  Matrix<S> d_pre;
  switch (activation_for(a.target)) {
    case Activation::kSigmoid:
      d_pre = (d_output.array() * cache.output.array() * (S(1) - cache.output.array())).matrix();
      break;
    case Activation::kTanh:
      d_pre = (d_output.array() * (S(1) - cache.output.array().square())).matrix();
      break;
    case Activation::kIdentity: d_pre = d_output; break;
  }
  auto gV = grads.mutable_block(p.dense_block());
  auto gc = grads.mutable_block(p.dense_block() + 1);
  gV.noalias() += d_pre * cache.layer[1].output.transpose();
  gc.col(0) += d_pre.rowwise().sum();
  Matrix<S> d_layer = p.block(p.dense_block()).transpose() * d_pre;

  for (int l = 1; l >= 0; --l) {
    const Matrix<S>& in = l == 0 ? cache.input : cache.layer[0].output;
    Matrix<S> d_in = Matrix<S>::Zero(in.rows(), in.cols());
    const int H = a.hidden(l);
    for (int d = 0; d < a.directions(); ++d) {
      const std::size_t b = p.lstm_block(l, d);
      detail::LstmGradients<S> g{grads.mutable_block(b), grads.mutable_block(b + 1),
                                 grads.mutable_block(b + 2)};
      const Matrix<S> d_hidden = d_layer.middleRows(d * H, H);
      detail::backprop_direction(lstm_weights(p, l, d), in, cache.layer[l].dir[d], d_hidden, T, B,
                                 cache.lengths, d == 1, g, d_in);
    }
    d_layer = std::move(d_in);
  }
}

/// Convenience wrapper for one unbatched, fully valid sequence (frames * 2I,
/// frame-major). Returns frames * out_dim, frame-major.
template <typename S>
std::vector<S> predict_sequence(const ModelParameters<S>& p, std::span<const S> values,
                                int frames) {
  const auto batch = SequenceBatch<S>::from_frame_major({values}, frames, p.arch().input_dim(),
                                                        {frames});
  return model_forward(batch, p).sequence_output(0);
}

/// Frame-by-frame inference for unidirectional models: output t is available
/// right after input t is consumed.
template <typename S>
class StreamingModel {
 public:
  explicit StreamingModel(const ModelParameters<S>& p) : p_(p) {
    if (p.arch().bidirectional)
      throw std::invalid_argument("streaming inference requires a unidirectional model");
    reset();
  }

  void reset() {
    for (int l = 0; l < 2; ++l) {
      h_[l] = Vector<S>::Zero(p_.arch().hidden(l));
      c_[l] = Vector<S>::Zero(p_.arch().hidden(l));
    }
  }

  Vector<S> step(const Vector<S>& x) {
    Vector<S> in = x, h, c;
    for (int l = 0; l < 2; ++l) {
      lstm_cell_step(lstm_weights(p_, l, 0), in, h_[l], c_[l], h, c);
      h_[l] = h;
      c_[l] = c;
      in = h;
    }
    Vector<S> y = p_.block(p_.dense_block()) * in + p_.block(p_.dense_block() + 1).col(0);
    switch (activation_for(p_.arch().target)) {
      case Activation::kSigmoid: return y.array().logistic().matrix();
      case Activation::kTanh: return y.array().tanh().matrix();
      case Activation::kIdentity: return y;
    }
    return y;
  }

 private:
  const ModelParameters<S>& p_;
  Vector<S> h_[2], c_[2];
};

}  // namespace nbdf
