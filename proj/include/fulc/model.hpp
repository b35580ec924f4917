#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fulc/cells.hpp"
#include "fulc/dsp.hpp"
#include "fulc/model_config.hpp"
#include "fulc/weights.hpp"

namespace fulc {

// ---------------------------------------------------------------------------------------------
// Layer primitives. Feature maps are positions x channels; every convolution runs along the
// frequency (position) axis only, with zero "same" padding.

namespace layers {

template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& x) {
  return x.cwiseMax(typename Derived::Scalar(0));
}

template <typename Scalar>
Mat<Scalar> depthwise_conv(const Mat<Scalar>& x, const Mat<Scalar>& kernel) {
  const Index P = x.rows(), C = x.cols(), K = kernel.rows(), half = K / 2;
  Mat<Scalar> y = Mat<Scalar>::Zero(P, C);
  for (Index j = 0; j < K; ++j) {
    const Index shift = j - half;
    const Index lo = std::max<Index>(0, -shift), hi = std::min(P, P - shift);
    if (hi <= lo) continue;
    y.middleRows(lo, hi - lo).array() +=
        x.middleRows(lo + shift, hi - lo).array().rowwise() * kernel.row(j).array();
  }
  return y;
}

// Rows become [x(p - K/2) ... x(p + K/2)] concatenated over channels.
template <typename Scalar>
Mat<Scalar> im2col(const Mat<Scalar>& x, Index K) {
  const Index P = x.rows(), C = x.cols(), half = K / 2;
  Mat<Scalar> cols = Mat<Scalar>::Zero(P, K * C);
  for (Index j = 0; j < K; ++j) {
    const Index shift = j - half;
    const Index lo = std::max<Index>(0, -shift), hi = std::min(P, P - shift);
    if (hi > lo) cols.block(lo, j * C, hi - lo, C) = x.middleRows(lo + shift, hi - lo);
  }
  return cols;
}

template <typename Scalar>
Mat<Scalar> max_pool2(const Mat<Scalar>& x) {
  Mat<Scalar> y(x.rows() / 2, x.cols());
  for (Index p = 0; p < y.rows(); ++p) y.row(p) = x.row(2 * p).cwiseMax(x.row(2 * p + 1));
  return y;
}

// Applies a per-frame function to each block of `rows` rows of a stacked feature map.
template <typename Scalar, typename F>
Mat<Scalar> per_frame(const Mat<Scalar>& stacked, Index rows, Index out_rows, Index out_cols, F&& f) {
  const Index frames = stacked.rows() / rows;
  Mat<Scalar> out(frames * out_rows, out_cols);
  for (Index t = 0; t < frames; ++t) out.middleRows(t * out_rows, out_rows) = f(Mat<Scalar>(stacked.middleRows(t * rows, rows)));
  return out;
}

template <typename Scalar>
struct SeparableConv {
  Mat<Scalar> depthwise;  // K x C_in
  Mat<Scalar> pointwise;  // C_in x C_out
  Vec<Scalar> bias;       // C_out
  bool pool = false;

  Mat<Scalar> forward(const Mat<Scalar>& x) const {
    Mat<Scalar> y = depthwise_conv(x, depthwise) * pointwise;
    y = relu(y.rowwise() + bias.transpose());
    return pool ? max_pool2(y) : y;
  }

  // x stacks `frames` maps of `positions` rows each.
  Mat<Scalar> forward_stacked(const Mat<Scalar>& x, Index positions) const {
    const Mat<Scalar> dw = per_frame(x, positions, positions, x.cols(),
                                     [&](const Mat<Scalar>& f) { return depthwise_conv(f, depthwise); });
    Mat<Scalar> y = relu((dw * pointwise).rowwise() + bias.transpose());
    return pool ? max_pool2(y) : y;  // pairs never straddle frames since positions is even
  }

  template <typename F>
  void visit(F&& f) {
    f("depthwise", tensor_view(depthwise), 2);
    f("pointwise", tensor_view(pointwise), 2);
    f("bias", tensor_view(bias), 1);
  }
  template <typename F>
  void visit(F&& f) const {
    f("depthwise", tensor_view(depthwise), 2);
    f("pointwise", tensor_view(pointwise), 2);
    f("bias", tensor_view(bias), 1);
  }
};

template <typename Scalar>
struct Conv1d {
  Mat<Scalar> kernel;  // (K * C_in) x C_out, row j * C_in + c
  Vec<Scalar> bias;
  Index width = 1;
  bool relu_out = true;

  Mat<Scalar> forward(const Mat<Scalar>& x) const {
    Mat<Scalar> y = (width == 1 ? x : im2col(x, width)) * kernel;
    y.rowwise() += bias.transpose();
    return relu_out ? Mat<Scalar>(relu(y)) : y;
  }

  Mat<Scalar> forward_stacked(const Mat<Scalar>& x, Index positions) const {
    const Mat<Scalar> cols = width == 1 ? x
                                        : per_frame(x, positions, positions, width * x.cols(),
                                                    [&](const Mat<Scalar>& f) { return im2col(f, width); });
    Mat<Scalar> y = cols * kernel;
    y.rowwise() += bias.transpose();
    return relu_out ? Mat<Scalar>(relu(y)) : y;
  }

  template <typename F>
  void visit(F&& f) {
    f("kernel", tensor_view(kernel), 2);
    f("bias", tensor_view(bias), 1);
  }
  template <typename F>
  void visit(F&& f) const {
    f("kernel", tensor_view(kernel), 2);
    f("bias", tensor_view(bias), 1);
  }
};

enum class Activation { Relu, Logistic };

template <typename Scalar>
struct Dense {
  Mat<Scalar> weight;  // out x in
  Vec<Scalar> bias;
  Activation activation = Activation::Relu;

  // Columns of x are independent inputs.
  Mat<Scalar> forward(const Mat<Scalar>& x) const {
    Mat<Scalar> y = weight * x;
    y.colwise() += bias;
    if (activation == Activation::Relu) return relu(y);
    return logistic(y);
  }

  template <typename F>
  void visit(F&& f) {
    f("weight", tensor_view(weight), 2);
    f("bias", tensor_view(bias), 1);
  }
  template <typename F>
  void visit(F&& f) const {
    f("weight", tensor_view(weight), 2);
    f("bias", tensor_view(bias), 1);
  }
};

}  // namespace layers

// ---------------------------------------------------------------------------------------------

// Recurrent state carried between frames: one vector per temporal subband cell. The
// frequency-axis cell restarts from zero every frame and is not stored.
template <typename Scalar>
struct StreamState {
  std::vector<std::vector<Vec<Scalar>>> subband;  // [block][layer]

  void reset() {
    for (auto& block : subband)
      for (auto& h : block) h.setZero();
  }
  double mean() const { return stat([](Scalar v) { return double(v); }); }
  double mean_abs() const { return stat([](Scalar v) { return std::abs(double(v)); }); }

 private:
  template <typename F>
  double stat(F f) const {
    double sum = 0.0;
    Index n = 0;
    for (const auto& block : subband)
      for (const auto& h : block) {
        for (Index i = 0; i < h.size(); ++i) sum += f(h[i]);
        n += h.size();
      }
    return n ? sum / double(n) : 0.0;
  }
};

template <typename Scalar>
struct FrameOutput {
  CVec<Scalar> enhanced;
  Vec<Scalar> magnitude_mask;  // n_bins, in [0, 1]
  CVec<Scalar> complex_mask;
  double state_mean = 0.0;      // over all temporal hidden entries after this frame
  double state_mean_abs = 0.0;
};

template <typename Scalar>
struct BatchOutput {
  ComplexSpectrogram<Scalar> enhanced;
  Mat<Scalar> magnitude_masks;  // n_bins x T
  CMat<Scalar> complex_masks;   // T x n_bins
};

template <typename Scalar>
class Model {
 public:
  // Graph for `config` with fan-in uniform weights, zero biases, and the cell defaults.
  static Model build(const ModelConfig& config, std::uint64_t seed = 0) {
    Model m(config);
    std::mt19937_64 rng(seed);
    m.initialise(rng);
    return m;
  }

  static Model from_weights(const ModelConfig& config, const ModelWeights& weights) {
    Model m = build(config, 0);
    WeightBinder binder(weights);
    m.visit([&](const std::string& name, auto view, int rank) { binder.bind(name, view, rank); });
    binder.finish();
    return m;
  }

  ModelWeights export_weights() const {
    ModelWeights out;
    visit([&](const std::string& name, auto view, int rank) { out.add(name, to_tensor(view, rank)); });
    return out;
  }

  const ModelConfig& config() const { return config_; }
  const LayerPlan& plan() const { return plan_; }

  // Fully qualified tensor names, in graph order.
  template <typename F>
  void visit(F&& f) {
    visit_all(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_all(*this, f);
  }

  // Stage-2 output forced to the unit complex mask, making the graph an identity on the spectrum.
  void set_identity_mask() {
    stage2_pointwise_.kernel.setZero();
    stage2_pointwise_.bias << Scalar(1), Scalar(0);
  }

  StreamState<Scalar> make_state() const {
    StreamState<Scalar> s;
    s.subband.resize(subband_.size());
    for (std::size_t b = 0; b < subband_.size(); ++b)
      for (const auto& cell : subband_[b]) s.subband[b].push_back(Vec<Scalar>::Zero(hidden_dim(cell)));
    return s;
  }

  // One streaming step for one STFT frame of the uncompressed noisy spectrum.
  FrameOutput<Scalar> process_frame(StreamState<Scalar>& state, const CVec<Scalar>& noisy) const {
    require_dim(noisy.size(), plan_.n_bins, "process_frame bins");
    check_finite(noisy, "input");
    const CVec<Scalar> compressed = power_compress(noisy, Scalar(config_.compression_beta));

    Mat<Scalar> x = reorient(compressed, config_.reorient);
    for (std::size_t i = 0; i < conv_.size(); ++i) {
      x = conv_[i].forward(x);
      check_finite(x, conv_name(i));
    }

    // Frequency-axis bidirectional pass over positions, restarted each frame.
    const Index P = x.rows();
    const Index fh = hidden_dim(freq_fwd_);
    Mat<Scalar> freq_out(P, 2 * fh);
    Vec<Scalar> h = Vec<Scalar>::Zero(fh);
    for (Index p = 0; p < P; ++p) {
      h = step(freq_fwd_, x.row(p).transpose(), h);
      freq_out.row(p).head(fh) = h.transpose();
    }
    h.setZero();
    for (Index p = P - 1; p >= 0; --p) {
      h = step(freq_bwd_, x.row(p).transpose(), h);
      freq_out.row(p).tail(fh) = h.transpose();
    }
    check_finite(freq_out, "freq_rnn");
    const Mat<Scalar> pw = freq_pointwise_.forward(freq_out);
    check_finite(pw, "freq_pointwise");

    Vec<Scalar> fc_in(plan_.fc_input_dim);
    const Index group = plan_.subband_group;
    for (std::size_t b = 0; b < subband_.size(); ++b) {
      Vec<Scalar> v = flatten_group(pw, Index(b) * group, group);
      for (std::size_t l = 0; l < subband_[b].size(); ++l) {
        state.subband[b][l] = step(subband_[b][l], v, state.subband[b][l]);
        v = state.subband[b][l];
      }
      check_finite(v, "subband." + std::to_string(b));
      fc_in.segment(Index(b) * v.size(), v.size()) = v;
    }

    FrameOutput<Scalar> out;
    Mat<Scalar> y = fc_in;
    for (std::size_t i = 0; i < fc_.size(); ++i) {
      y = fc_[i].forward(y);
      check_finite(y, "fc." + std::to_string(i));
    }
    out.magnitude_mask = y.col(0);

    Mat<Scalar> s2(plan_.n_bins, 2);
    s2.col(0) = out.magnitude_mask.cwiseProduct(compressed.real());
    s2.col(1) = out.magnitude_mask.cwiseProduct(compressed.imag());
    for (std::size_t i = 0; i < stage2_.size(); ++i) {
      s2 = stage2_[i].forward(s2);
      check_finite(s2, "stage2.conv." + std::to_string(i));
    }
    s2 = stage2_pointwise_.forward(s2);
    check_finite(s2, "stage2.pointwise");

    out.complex_mask.resize(plan_.n_bins);
    out.complex_mask.real() = s2.col(0);
    out.complex_mask.imag() = s2.col(1);
    out.enhanced = apply_crm(noisy, out.complex_mask);
    out.state_mean = state.mean();
    out.state_mean_abs = state.mean_abs();
    return out;
  }

  // Same graph evaluated layer by layer over the whole utterance: frame-independent layers as
  // single stacked products, temporal cells as full-sequence passes.
  BatchOutput<Scalar> process_batch(const ComplexSpectrogram<Scalar>& noisy) const {
    const Index T = noisy.num_frames();
    require_dim(noisy.n_bins(), plan_.n_bins, "process_batch bins");
    check_finite(noisy.frames, "input");
    const CMat<Scalar> compressed = power_compress(noisy.frames, Scalar(config_.compression_beta));

    Index positions = plan_.input_positions;
    Mat<Scalar> x(T * positions, plan_.input_channels);
    for (Index t = 0; t < T; ++t) {
      x.middleRows(t * positions, positions) = reorient(compressed.row(t).transpose(), config_.reorient);
    }
    for (std::size_t i = 0; i < conv_.size(); ++i) {
      x = conv_[i].forward_stacked(x, positions);
      if (conv_[i].pool) positions /= 2;
      check_finite(x, conv_name(i));
    }

    const Index P = positions;
    const Index fh = hidden_dim(freq_fwd_);
    Mat<Scalar> freq_out(T * P, 2 * fh);
    const Vec<Scalar> h0 = Vec<Scalar>::Zero(fh);
    for (Index t = 0; t < T; ++t) {
      const Mat<Scalar> seq = x.middleRows(t * P, P).transpose();
      const Mat<Scalar> fwd = run_sequence(freq_fwd_, seq, h0);
      const Mat<Scalar> bwd = run_sequence(freq_bwd_, Mat<Scalar>(seq.rowwise().reverse()), h0);
      freq_out.block(t * P, 0, P, fh) = fwd.transpose();
      freq_out.block(t * P, fh, P, fh) = bwd.rowwise().reverse().transpose();
    }
    check_finite(freq_out, "freq_rnn");
    const Mat<Scalar> pw = freq_pointwise_.forward_stacked(freq_out, P);
    check_finite(pw, "freq_pointwise");

    Mat<Scalar> fc_in(plan_.fc_input_dim, T);
    const Index group = plan_.subband_group;
    for (std::size_t b = 0; b < subband_.size(); ++b) {
      Mat<Scalar> seq(plan_.subband_input_dim, T);
      for (Index t = 0; t < T; ++t) {
        seq.col(t) = flatten_group(Mat<Scalar>(pw.middleRows(t * P, P)), Index(b) * group, group);
      }
      for (const auto& cell : subband_[b]) seq = run_sequence(cell, seq, Vec<Scalar>::Zero(hidden_dim(cell)));
      check_finite(seq, "subband." + std::to_string(b));
      fc_in.middleRows(Index(b) * seq.rows(), seq.rows()) = seq;
    }

    Mat<Scalar> y = fc_in;
    for (std::size_t i = 0; i < fc_.size(); ++i) {
      y = fc_[i].forward(y);
      check_finite(y, "fc." + std::to_string(i));
    }

    BatchOutput<Scalar> out;
    out.magnitude_masks = y;
    const Index F = plan_.n_bins;
    Mat<Scalar> s2(T * F, 2);
    for (Index t = 0; t < T; ++t) {
      s2.block(t * F, 0, F, 1) = y.col(t).cwiseProduct(compressed.row(t).real().transpose());
      s2.block(t * F, 1, F, 1) = y.col(t).cwiseProduct(compressed.row(t).imag().transpose());
    }
    for (std::size_t i = 0; i < stage2_.size(); ++i) {
      s2 = stage2_[i].forward_stacked(s2, F);
      check_finite(s2, "stage2.conv." + std::to_string(i));
    }
    s2 = stage2_pointwise_.forward_stacked(s2, F);
    check_finite(s2, "stage2.pointwise");

    out.complex_masks.resize(T, F);
    for (Index t = 0; t < T; ++t) {
      out.complex_masks.row(t).real() = s2.block(t * F, 0, F, 1).transpose();
      out.complex_masks.row(t).imag() = s2.block(t * F, 1, F, 1).transpose();
    }
    out.enhanced = apply_crm(noisy, out.complex_masks);
    return out;
  }

  // stft -> per-frame streaming inference -> istft. Output has the input's length. When
  // `trace` is given it receives the temporal state statistics after every frame.
  std::vector<Scalar> enhance_utterance(std::span<const Scalar> samples, DriftTrace* trace = nullptr) const {
    ComplexSpectrogram<Scalar> spec = stft(samples, config_.stft);
    StreamState<Scalar> state = make_state();
    for (Index t = 0; t < spec.num_frames(); ++t) {
      const FrameOutput<Scalar> out = process_frame(state, spec.frames.row(t).transpose());
      spec.frames.row(t) = out.enhanced.transpose();
      if (trace) trace->record(out.state_mean, out.state_mean_abs);
    }
    return istft(spec);
  }

  // Mutable access for experiments that plant specific cell parameters.
  AnyCell<Scalar>& subband_cell(std::size_t block, std::size_t layer) { return subband_.at(block).at(layer); }
  AnyCell<Scalar>& freq_cell(bool backward) { return backward ? freq_bwd_ : freq_fwd_; }

 private:
  explicit Model(const ModelConfig& config) : config_(config), plan_(LayerPlan::from(config)) {}

  template <typename Rng>
  void initialise(Rng& rng) {
    auto uniform = [&](Index rows, Index cols, Index fan_in) {
      Mat<Scalar> m(rows, cols);
      detail::fill_uniform<Scalar>(m, std::sqrt(1.0 / double(fan_in)), rng);
      return m;
    };
    const Index K = config_.conv_kernel;
    for (std::size_t i = 0; i < config_.conv_filters.size(); ++i) {
      const Index cin = plan_.conv_in_channels[i], cout = config_.conv_filters[i];
      layers::SeparableConv<Scalar> c;
      c.depthwise = uniform(K, cin, K);
      c.pointwise = uniform(cin, cout, cin);
      c.bias = Vec<Scalar>::Zero(cout);
      c.pool = config_.pool_after[i];
      conv_.push_back(std::move(c));
    }
    const Index fd = plan_.freq_input_dim, fh = config_.freq_rnn_units;
    freq_fwd_ = make_cell<Scalar>(config_.cell_kind, fd, fh, rng);
    freq_bwd_ = make_cell<Scalar>(config_.cell_kind, fd, fh, rng);
    freq_pointwise_ = {uniform(2 * fh, config_.post_freq_pointwise_filters, 2 * fh),
                       Vec<Scalar>::Zero(config_.post_freq_pointwise_filters), 1, true};
    subband_.resize(config_.subband_blocks);
    for (auto& block : subband_) {
      Index in = plan_.subband_input_dim;
      for (int l = 0; l < config_.subband_layers_per_block; ++l) {
        block.push_back(make_cell<Scalar>(config_.cell_kind, in, config_.subband_units, rng));
        in = config_.subband_units;
      }
    }
    Index in = plan_.fc_input_dim;
    for (std::size_t i = 0; i < config_.fc_units.size(); ++i) {
      const Index out = config_.fc_units[i];
      const bool last = i + 1 == config_.fc_units.size();
      fc_.push_back({uniform(out, in, in), Vec<Scalar>::Zero(out),
                     last ? layers::Activation::Logistic : layers::Activation::Relu});
      in = out;
    }
    const Index SK = config_.stage2_kernel;
    Index s_in = 2;
    for (int filters : config_.stage2_filters) {
      stage2_.push_back({uniform(SK * s_in, filters, SK * s_in), Vec<Scalar>::Zero(filters), SK, true});
      s_in = filters;
    }
    stage2_pointwise_ = {uniform(s_in, 2, s_in), Vec<Scalar>::Zero(2), 1, false};
  }

  template <typename Self, typename F>
  static void visit_all(Self& self, F& f) {
    auto under = [&](std::string prefix) {
      return [&f, prefix = std::move(prefix)](std::string_view name, auto view, int rank) {
        f(prefix + std::string(name), view, rank);
      };
    };
    for (std::size_t i = 0; i < self.conv_.size(); ++i) self.conv_[i].visit(under(conv_name(i) + "."));
    auto visit_cell = [&](auto& cell, const std::string& prefix) {
      std::visit([&](auto& p) { p.visit(under(prefix)); }, cell);
    };
    visit_cell(self.freq_fwd_, "freq_rnn.fwd.");
    visit_cell(self.freq_bwd_, "freq_rnn.bwd.");
    self.freq_pointwise_.visit(under("freq_pointwise."));
    for (std::size_t b = 0; b < self.subband_.size(); ++b)
      for (std::size_t l = 0; l < self.subband_[b].size(); ++l)
        visit_cell(self.subband_[b][l], "subband." + std::to_string(b) + "." + std::to_string(l) + ".");
    for (std::size_t i = 0; i < self.fc_.size(); ++i) self.fc_[i].visit(under("fc." + std::to_string(i) + "."));
    for (std::size_t i = 0; i < self.stage2_.size(); ++i)
      self.stage2_[i].visit(under("stage2.conv." + std::to_string(i) + "."));
    self.stage2_pointwise_.visit(under("stage2.pointwise."));
  }

  static std::string conv_name(std::size_t i) { return "conv_block." + std::to_string(i); }

  // Positions [first, first + count) of a positions x channels map, flattened position-major.
  static Vec<Scalar> flatten_group(const Mat<Scalar>& map, Index first, Index count) {
    const Index C = map.cols();
    Vec<Scalar> v(count * C);
    for (Index p = 0; p < count; ++p) v.segment(p * C, C) = map.row(first + p).transpose();
    return v;
  }

  template <typename Derived>
  static void check_finite(const Eigen::MatrixBase<Derived>& x, const std::string& layer) {
    if (!x.allFinite()) throw NumericError("non-finite activation in layer " + layer);
  }

  ModelConfig config_;
  LayerPlan plan_;
  std::vector<layers::SeparableConv<Scalar>> conv_;
  AnyCell<Scalar> freq_fwd_, freq_bwd_;
  layers::Conv1d<Scalar> freq_pointwise_;
  std::vector<std::vector<AnyCell<Scalar>>> subband_;
  std::vector<layers::Dense<Scalar>> fc_;
  std::vector<layers::Conv1d<Scalar>> stage2_;
  layers::Conv1d<Scalar> stage2_pointwise_;
};

template <typename Scalar>
std::int64_t count_params(const Model<Scalar>& model) {
  return model.plan().total_params();
}

template <typename Scalar>
std::int64_t count_macs(const Model<Scalar>& model) {
  return model.plan().total_macs();
}

}  // namespace fulc
