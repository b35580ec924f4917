#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fulc/cells.hpp"
#include "fulc/dsp.hpp"
#include "fulc/weights.hpp"

namespace fulc {

// ---------------------------------------------------------------------------------------------
// Spectral L1 loss: mean over bins of | |S| - |S_hat| | + |S - S_hat|.

struct LossValue {
  double total = 0.0;
  double mag_term = 0.0;
  double complex_term = 0.0;
};

template <typename Derived, typename Derived2>
LossValue loss(const Eigen::MatrixBase<Derived>& clean, const Eigen::MatrixBase<Derived2>& pred) {
  if (clean.rows() != pred.rows() || clean.cols() != pred.cols()) throw ShapeError("loss: spectrogram shapes differ");
  if (clean.size() == 0) throw ShapeError("loss: empty spectrogram");
  double mag = 0.0, cplx = 0.0;
  for (Index r = 0; r < clean.rows(); ++r) {
    for (Index c = 0; c < clean.cols(); ++c) {
      const std::complex<double> s(clean(r, c)), p(pred(r, c));
      mag += std::abs(std::abs(s) - std::abs(p));
      cplx += std::abs(s - p);
    }
  }
  const double n = double(clean.size());
  return {(mag + cplx) / n, mag / n, cplx / n};
}

template <typename Scalar>
LossValue loss(const ComplexSpectrogram<Scalar>& clean, const ComplexSpectrogram<Scalar>& pred) {
  return loss(clean.frames, pred.frames);
}

// Gradient of the total loss with respect to the prediction, packed as dRe + i dIm. At the L1
// kinks (|S| = |S_hat|, S = S_hat, or S_hat = 0 for the magnitude term) the subgradient is 0.
template <typename Scalar>
CMat<Scalar> loss_grad(const CMat<Scalar>& clean, const CMat<Scalar>& pred) {
  if (clean.rows() != pred.rows() || clean.cols() != pred.cols()) throw ShapeError("loss_grad: spectrogram shapes differ");
  using C = std::complex<Scalar>;
  const Scalar inv_n = Scalar(1) / Scalar(clean.size());
  CMat<Scalar> g(clean.rows(), clean.cols());
  for (Index r = 0; r < clean.rows(); ++r) {
    for (Index c = 0; c < clean.cols(); ++c) {
      const C s = clean(r, c), p = pred(r, c);
      C d(0);
      const Scalar mp = std::abs(p), ms = std::abs(s);
      if (mp > Scalar(0) && mp != ms) d += (mp > ms ? Scalar(1) : Scalar(-1)) * p / mp;
      const C diff = p - s;
      const Scalar md = std::abs(diff);
      if (md > Scalar(0)) d += diff / md;
      g(r, c) = d * inv_n;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------------------------
// Optimisation

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double clip_norm = 3.0;
  int plateau_patience = 3;
  double plateau_factor = 0.5;
  int early_stop_patience = 5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

template <typename Params>
double global_norm(const Params& grads) {
  double sq = 0.0;
  grads.visit([&](std::string_view, auto view, int) { sq += double(view.squaredNorm()); });
  return std::sqrt(sq);
}

// Rescales the whole bundle to `max_norm` when its global L2 norm exceeds it. Returns the norm
// before clipping.
template <typename Params>
double clip_global_norm(Params& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    grads.visit([&](std::string_view, auto view, int) { view *= typename decltype(view)::Scalar(scale); });
  }
  return norm;
}

// Adam with bias correction over any visitable parameter set. Gradients are clipped to the
// configured global norm before the moment update. An all-zero gradient bundle is a no-op step:
// neither the moments nor the step counter advance.
template <typename Scalar>
class Adam {
 public:
  explicit Adam(const OptimizerConfig& cfg) : cfg_(cfg) { cfg_.validate(); }

  template <typename Params>
  void step(Params& params, Params grads, double learning_rate) {
    const double norm = clip_global_norm(grads, cfg_.clip_norm);
    if (norm == 0.0) return;
    std::vector<Eigen::Map<Mat<Scalar>>> g;
    grads.visit([&](std::string_view, Eigen::Map<Mat<Scalar>> view, int) { g.push_back(view); });
    if (m_.empty()) {
      for (const auto& v : g) {
        m_.push_back(Mat<Scalar>::Zero(v.rows(), v.cols()));
        v_.push_back(Mat<Scalar>::Zero(v.rows(), v.cols()));
      }
    }
    if (m_.size() != g.size()) throw ShapeError("Adam: parameter set changed between steps");
    ++t_;
    const Scalar b1 = Scalar(cfg_.beta1), b2 = Scalar(cfg_.beta2);
    const Scalar c1 = Scalar(1) - Scalar(std::pow(cfg_.beta1, t_));
    const Scalar c2 = Scalar(1) - Scalar(std::pow(cfg_.beta2, t_));
    const Scalar lr = Scalar(learning_rate), eps = Scalar(cfg_.eps);
    std::size_t i = 0;
    params.visit([&](std::string_view, Eigen::Map<Mat<Scalar>> w, int) {
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * g[i];
      v_[i] = b2 * v_[i] + (Scalar(1) - b2) * g[i].cwiseProduct(g[i]);
      w.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
      ++i;
    });
  }

  long steps_taken() const { return t_; }

 private:
  OptimizerConfig cfg_;
  std::vector<Mat<Scalar>> m_, v_;
  long t_ = 0;
};

// Learning rate to use after the epochs in `history`: multiplied by plateau_factor each time
// plateau_patience consecutive epochs fail to improve on the best loss so far (the wait counter
// restarts after every reduction).
double plateau_schedule(std::span<const double> history, const OptimizerConfig& cfg);

struct EarlyStopDecision {
  bool stop = false;
  std::size_t best_epoch = 0;
};

// Stops once early_stop_patience consecutive epochs fail to improve on the best loss.
EarlyStopDecision early_stop(std::span<const double> history, const OptimizerConfig& cfg);

// ---------------------------------------------------------------------------------------------
// Gradient checking against central finite differences.

inline constexpr double kFiniteDifferenceStep = 1e-5;
// Relative error denominator: max(|analytic|, |numeric|, kRelErrorFloor). Gradients below the
// floor are compared in absolute terms.
inline constexpr double kRelErrorFloor = 1e-3;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_coordinate;
  std::size_t coordinates = 0;
};

namespace detail {

template <typename Params>
double probe_loss(const Params& p, const Mat<double>& inputs, const Vec<double>& h0, const Mat<double>& coeffs) {
  return forward_sequence(p, inputs, h0).outputs().cwiseProduct(coeffs).sum();
}

inline void track(GradCheckReport& r, double analytic, double numeric, const std::string& where) {
  const double err = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kRelErrorFloor});
  ++r.coordinates;
  if (err > r.max_rel_error) {
    r.max_rel_error = err;
    r.worst_coordinate = where;
  }
}

}  // namespace detail

// Compares `analytic` (gradients of sum(coeffs .* outputs)) with central differences over every
// parameter coordinate, every initial-state entry and every input entry.
template <typename Params>
GradCheckReport check_gradients(const Params& params, const Mat<double>& inputs, const Vec<double>& h0,
                                const Mat<double>& coeffs, const GradientBundle<Params>& analytic) {
  constexpr double h = kFiniteDifferenceStep;
  GradCheckReport report;
  Params probe = params;
  std::vector<Eigen::Map<const Mat<double>>> grads;
  analytic.params.visit([&](std::string_view, auto view, int) { grads.push_back(view); });
  std::size_t k = 0;
  probe.visit([&](std::string_view name, Eigen::Map<Mat<double>> w, int) {
    for (Index i = 0; i < w.size(); ++i) {
      const double saved = w.data()[i];
      w.data()[i] = saved + h;
      const double up = detail::probe_loss(probe, inputs, h0, coeffs);
      w.data()[i] = saved - h;
      const double down = detail::probe_loss(probe, inputs, h0, coeffs);
      w.data()[i] = saved;
      detail::track(report, grads[k].data()[i], (up - down) / (2 * h), std::string(name) + "[" + std::to_string(i) + "]");
    }
    ++k;
  });
  Vec<double> h0p = h0;
  for (Index i = 0; i < h0.size(); ++i) {
    h0p[i] = h0[i] + h;
    const double up = detail::probe_loss(params, inputs, h0p, coeffs);
    h0p[i] = h0[i] - h;
    const double down = detail::probe_loss(params, inputs, h0p, coeffs);
    h0p[i] = h0[i];
    detail::track(report, analytic.h0[i], (up - down) / (2 * h), "h0[" + std::to_string(i) + "]");
  }
  Mat<double> xp = inputs;
  for (Index i = 0; i < inputs.size(); ++i) {
    xp.data()[i] = inputs.data()[i] + h;
    const double up = detail::probe_loss(params, xp, h0, coeffs);
    xp.data()[i] = inputs.data()[i] - h;
    const double down = detail::probe_loss(params, xp, h0, coeffs);
    xp.data()[i] = inputs.data()[i];
    detail::track(report, analytic.inputs.data()[i], (up - down) / (2 * h), "x[" + std::to_string(i) + "]");
  }
  return report;
}

// Random cell plus inputs and a loss probe for gradient checking.
template <typename Params>
struct GradCheckCase {
  Params params;
  Mat<double> inputs;
  Vec<double> h0;
  Mat<double> coeffs;
};

GradCheckCase<FastGrnnParams<double>> fastgrnn_check_case(int d, int h, int T, std::uint64_t seed);
GradCheckCase<ComfiParams<double>> comfi_check_case(int d, int h, int T, std::uint64_t seed);
GradCheckCase<GruParams<double>> gru_check_case(int d, int h, int T, std::uint64_t seed);

// BPTT against finite differences for one configuration.
GradCheckReport grad_check(CellKind kind, int d, int h, int T, std::uint64_t seed);

struct GradCheckDims {
  int d, h, T;
};
// Dimensions drawn from seed: d, h in [1, 6], T in [1, 10].
GradCheckDims random_check_dims(std::uint64_t seed);

// ---------------------------------------------------------------------------------------------
// Toy denoising task for training single cells with a linear readout.

struct ToyTaskConfig {
  int input_dim = 8;
  int hidden_dim = 16;
  int seq_len = 64;
  int steps_per_epoch = 200;
  int max_epochs = 40;
  int val_sequences = 8;
  double noise_std = 0.3;
  std::uint64_t seed = 1;
};

struct ToySequence {
  Mat<double> noisy;  // d x T
  Mat<double> clean;
};

// Per-feature sinusoids with random slow frequencies and phases, plus white Gaussian noise.
ToySequence make_toy_sequence(const ToyTaskConfig& cfg, std::uint64_t stream, int length);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double learning_rate = 0.0;
};

struct ToyTrainResult {
  CellKind kind = CellKind::FastGrnn;
  AnyCell<double> cell;
  Mat<double> readout;  // d x h
  Vec<double> readout_bias;
  std::vector<EpochRecord> curve;
  double initial_loss = 0.0;  // validation MAE before training
  double final_loss = 0.0;    // validation MAE of the selected (best) epoch
  std::size_t best_epoch = 0;
  bool early_stopped = false;

  // epoch,train_loss,val_loss,learning_rate
  void write_curve_csv(std::ostream& out) const;
  // Tensors under "toy.cell.*" and "toy.readout.*", plus "toy.meta" = [kind, d, h].
  ModelWeights to_weights() const;
  static ToyTrainResult from_weights(const ModelWeights& weights);
};

ToyTrainResult train_cell_toy(CellKind kind, const ToyTaskConfig& task, const OptimizerConfig& opt);

// Validation MAE of a cell + readout on the task's fixed validation sequences.
double toy_validation_loss(const ToyTrainResult& model, const ToyTaskConfig& task);

}  // namespace fulc
