#pragma once

#include <cstdint>
#include <ostream>
#include <random>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fulc/core.hpp"

namespace fulc {

enum class CellKind { Gru, FastGrnn, Comfi };

inline constexpr std::string_view cell_kind_name(CellKind kind) {
  switch (kind) {
    case CellKind::Gru: return "gru";
    case CellKind::FastGrnn: return "fastgrnn";
    case CellKind::Comfi: return "comfi";
  }
  return "?";
}

inline CellKind parse_cell_kind(std::string_view name) {
  if (name == "gru") return CellKind::Gru;
  if (name == "fastgrnn") return CellKind::FastGrnn;
  if (name == "comfi") return CellKind::Comfi;
  throw ConfigError("unknown cell kind '" + std::string(name) + "' (expected gru, fastgrnn or comfi)");
}

// Tensor views handed to parameter visitors: f(name, map, rank). Scalars are 1x1 with rank 0,
// vectors n x 1 with rank 1.
template <typename Scalar>
Eigen::Map<Mat<Scalar>> tensor_view(Mat<Scalar>& m) {
  return {m.data(), m.rows(), m.cols()};
}
template <typename Scalar>
Eigen::Map<const Mat<Scalar>> tensor_view(const Mat<Scalar>& m) {
  return {m.data(), m.rows(), m.cols()};
}
template <typename Scalar>
Eigen::Map<Mat<Scalar>> tensor_view(Vec<Scalar>& v) {
  return {v.data(), v.size(), 1};
}
template <typename Scalar>
Eigen::Map<const Mat<Scalar>> tensor_view(const Vec<Scalar>& v) {
  return {v.data(), v.size(), 1};
}
template <typename Scalar>
Eigen::Map<Mat<Scalar>> scalar_view(Scalar& s) {
  return {&s, 1, 1};
}
template <typename Scalar>
Eigen::Map<const Mat<Scalar>> scalar_view(const Scalar& s) {
  return {&s, 1, 1};
}

namespace detail {
template <typename Scalar, typename Rng>
void fill_uniform(Eigen::DenseBase<Mat<Scalar>>& m, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Index i = 0; i < m.size(); ++i) m.derived().data()[i] = Scalar(dist(rng));
}
}  // namespace detail

// Raw values whose logistic gives zeta ~ 0.99 and nu ~ 0.01.
inline constexpr double kZetaRawInit = 4.6;
inline constexpr double kNuRawInit = -4.6;
inline constexpr double kGammaInit = 0.999;
inline constexpr double kLambdaInit = 0.0;

template <typename Scalar>
struct FastGrnnParams {
  using scalar_type = Scalar;

  Mat<Scalar> W;  // hidden x input
  Mat<Scalar> U;  // hidden x hidden
  Vec<Scalar> b_z;
  Vec<Scalar> b_h;
  Scalar zeta_raw = 0;
  Scalar nu_raw = 0;

  Index input_dim() const { return W.cols(); }
  Index hidden_dim() const { return W.rows(); }
  Scalar zeta() const { return logistic(zeta_raw); }
  Scalar nu() const { return logistic(nu_raw); }

  static FastGrnnParams zeros(Index input_dim, Index hidden_dim) {
    FastGrnnParams p;
    p.W = Mat<Scalar>::Zero(hidden_dim, input_dim);
    p.U = Mat<Scalar>::Zero(hidden_dim, hidden_dim);
    p.b_z = Vec<Scalar>::Zero(hidden_dim);
    p.b_h = Vec<Scalar>::Zero(hidden_dim);
    return p;
  }

  template <typename Rng>
  static FastGrnnParams init(Index input_dim, Index hidden_dim, Rng& rng) {
    FastGrnnParams p = zeros(input_dim, hidden_dim);
    detail::fill_uniform<Scalar>(p.W, std::sqrt(1.0 / input_dim), rng);
    detail::fill_uniform<Scalar>(p.U, std::sqrt(1.0 / hidden_dim), rng);
    p.zeta_raw = Scalar(kZetaRawInit);
    p.nu_raw = Scalar(kNuRawInit);
    return p;
  }

  template <typename F>
  void visit(F&& f) {
    visit_each(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_each(*this, f);
  }

 private:
  template <typename Self, typename F>
  static void visit_each(Self& self, F& f) {
    f("W", tensor_view(self.W), 2);
    f("U", tensor_view(self.U), 2);
    f("b_z", tensor_view(self.b_z), 1);
    f("b_h", tensor_view(self.b_h), 1);
    f("zeta_raw", scalar_view(self.zeta_raw), 0);
    f("nu_raw", scalar_view(self.nu_raw), 0);
  }
};

template <typename Scalar>
struct ComfiParams {
  using scalar_type = Scalar;

  FastGrnnParams<Scalar> base;
  Scalar gamma = Scalar(kGammaInit);
  Scalar lambda = Scalar(kLambdaInit);

  Index input_dim() const { return base.input_dim(); }
  Index hidden_dim() const { return base.hidden_dim(); }

  static ComfiParams zeros(Index input_dim, Index hidden_dim) {
    return {FastGrnnParams<Scalar>::zeros(input_dim, hidden_dim), Scalar(0), Scalar(0)};
  }

  template <typename Rng>
  static ComfiParams init(Index input_dim, Index hidden_dim, Rng& rng) {
    return {FastGrnnParams<Scalar>::init(input_dim, hidden_dim, rng), Scalar(kGammaInit), Scalar(kLambdaInit)};
  }

  template <typename F>
  void visit(F&& f) {
    visit_each(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_each(*this, f);
  }

 private:
  template <typename Self, typename F>
  static void visit_each(Self& self, F& f) {
    self.base.visit(f);
    f("gamma", scalar_view(self.gamma), 0);
    f("lambda", scalar_view(self.lambda), 0);
  }
};

template <typename Scalar>
struct GruParams {
  using scalar_type = Scalar;

  Mat<Scalar> W_z, W_r, W_h;  // hidden x input
  Mat<Scalar> U_z, U_r, U_h;  // hidden x hidden
  Vec<Scalar> b_z, b_r, b_h;

  Index input_dim() const { return W_z.cols(); }
  Index hidden_dim() const { return W_z.rows(); }

  static GruParams zeros(Index input_dim, Index hidden_dim) {
    GruParams p;
    for (Mat<Scalar>* w : {&p.W_z, &p.W_r, &p.W_h}) *w = Mat<Scalar>::Zero(hidden_dim, input_dim);
    for (Mat<Scalar>* u : {&p.U_z, &p.U_r, &p.U_h}) *u = Mat<Scalar>::Zero(hidden_dim, hidden_dim);
    for (Vec<Scalar>* b : {&p.b_z, &p.b_r, &p.b_h}) *b = Vec<Scalar>::Zero(hidden_dim);
    return p;
  }

  template <typename Rng>
  static GruParams init(Index input_dim, Index hidden_dim, Rng& rng) {
    GruParams p = zeros(input_dim, hidden_dim);
    for (Mat<Scalar>* w : {&p.W_z, &p.W_r, &p.W_h}) detail::fill_uniform<Scalar>(*w, std::sqrt(1.0 / input_dim), rng);
    for (Mat<Scalar>* u : {&p.U_z, &p.U_r, &p.U_h}) detail::fill_uniform<Scalar>(*u, std::sqrt(1.0 / hidden_dim), rng);
    return p;
  }

  template <typename F>
  void visit(F&& f) {
    visit_each(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_each(*this, f);
  }

 private:
  template <typename Self, typename F>
  static void visit_each(Self& self, F& f) {
    f("W_z", tensor_view(self.W_z), 2);
    f("W_r", tensor_view(self.W_r), 2);
    f("W_h", tensor_view(self.W_h), 2);
    f("U_z", tensor_view(self.U_z), 2);
    f("U_r", tensor_view(self.U_r), 2);
    f("U_h", tensor_view(self.U_h), 2);
    f("b_z", tensor_view(self.b_z), 1);
    f("b_r", tensor_view(self.b_r), 1);
    f("b_h", tensor_view(self.b_h), 1);
  }
};

template <typename Scalar>
using CellState = Vec<Scalar>;

template <typename Params>
struct GradientBundle {
  using Scalar = typename Params::scalar_type;
  Params params;
  Vec<Scalar> h0;
  Mat<Scalar> inputs;  // d x T
};

// ---------------------------------------------------------------------------------------------
// Forward steps

namespace detail {

template <typename Scalar>
void check_step_dims(Index input_dim, Index hidden_dim, Index x_dim, Index h_dim) {
  require_dim(x_dim, input_dim, "cell input");
  require_dim(h_dim, hidden_dim, "cell state");
}

// FastGRNN update from the shared pre-activation a = W x + U h_prev.
template <typename Scalar>
Vec<Scalar> fastgrnn_update(const FastGrnnParams<Scalar>& p, const Vec<Scalar>& a,
                            const VecIn<Scalar>& h_prev, Vec<Scalar>* z_out = nullptr,
                            Vec<Scalar>* htilde_out = nullptr) {
  const Scalar zeta = p.zeta();
  const Scalar nu = p.nu();
  const Vec<Scalar> z = logistic(a + p.b_z);
  const Vec<Scalar> htilde = (a + p.b_h).array().tanh().matrix();
  Vec<Scalar> h = ((zeta * (Scalar(1) - z.array()) + nu) * htilde.array() + z.array() * h_prev.array()).matrix();
  if (z_out) *z_out = z;
  if (htilde_out) *htilde_out = htilde;
  return h;
}

}  // namespace detail

template <typename Scalar>
CellState<Scalar> fastgrnn_step(const FastGrnnParams<Scalar>& p, const VecIn<Scalar>& x,
                                const VecIn<Scalar>& h_prev) {
  detail::check_step_dims<Scalar>(p.input_dim(), p.hidden_dim(), x.size(), h_prev.size());
  Vec<Scalar> a = p.W * x;
  a.noalias() += p.U * h_prev;
  return detail::fastgrnn_update(p, a, h_prev);
}

// Complementary filter on the FastGRNN state. The filtered state is both the output and the
// next recurrent state.
template <typename Scalar>
CellState<Scalar> comfi_step(const ComfiParams<Scalar>& p, const VecIn<Scalar>& x,
                             const VecIn<Scalar>& h_prev) {
  const Vec<Scalar> h = fastgrnn_step(p.base, x, h_prev);
  return (p.gamma * h.array() + (Scalar(1) - p.gamma) * p.lambda).matrix();
}

template <typename Scalar>
CellState<Scalar> gru_step(const GruParams<Scalar>& p, const VecIn<Scalar>& x,
                           const VecIn<Scalar>& h_prev) {
  detail::check_step_dims<Scalar>(p.input_dim(), p.hidden_dim(), x.size(), h_prev.size());
  Vec<Scalar> az = p.W_z * x + p.b_z;
  az.noalias() += p.U_z * h_prev;
  Vec<Scalar> ar = p.W_r * x + p.b_r;
  ar.noalias() += p.U_r * h_prev;
  const Vec<Scalar> z = logistic(az);
  const Vec<Scalar> r = logistic(ar);
  const Vec<Scalar> rh = r.cwiseProduct(h_prev);
  Vec<Scalar> an = p.W_h * x + p.b_h;
  an.noalias() += p.U_h * rh;
  const Vec<Scalar> n = an.array().tanh().matrix();
  return ((Scalar(1) - z.array()) * n.array() + z.array() * h_prev.array()).matrix();
}

template <typename Scalar>
CellState<Scalar> step(const FastGrnnParams<Scalar>& p, const VecIn<Scalar>& x,
                       const VecIn<Scalar>& h) {
  return fastgrnn_step(p, x, h);
}
template <typename Scalar>
CellState<Scalar> step(const ComfiParams<Scalar>& p, const VecIn<Scalar>& x,
                       const VecIn<Scalar>& h) {
  return comfi_step(p, x, h);
}
template <typename Scalar>
CellState<Scalar> step(const GruParams<Scalar>& p, const VecIn<Scalar>& x,
                       const VecIn<Scalar>& h) {
  return gru_step(p, x, h);
}

// ---------------------------------------------------------------------------------------------
// Sequence forward passes with cached activations (columns are timesteps).

template <typename Scalar>
struct FastGrnnTape {
  Mat<Scalar> inputs;  // d x T
  Vec<Scalar> h0;
  Mat<Scalar> h_prev;  // state fed into step t
  Mat<Scalar> z;
  Mat<Scalar> htilde;
  Mat<Scalar> h;  // unfiltered FastGRNN output of step t

  Index steps() const { return inputs.cols(); }
  const Mat<Scalar>& outputs() const { return h; }
};

template <typename Scalar>
struct ComfiTape {
  FastGrnnTape<Scalar> base;
  Mat<Scalar> out;  // filtered state

  Index steps() const { return base.steps(); }
  const Mat<Scalar>& outputs() const { return out; }
};

template <typename Scalar>
struct GruTape {
  Mat<Scalar> inputs;
  Vec<Scalar> h0;
  Mat<Scalar> h_prev, z, r, n, h;

  Index steps() const { return inputs.cols(); }
  const Mat<Scalar>& outputs() const { return h; }
};

namespace detail {

template <typename Scalar>
void init_fastgrnn_tape(FastGrnnTape<Scalar>& tape, const FastGrnnParams<Scalar>& p,
                        const MatIn<Scalar>& inputs, const VecIn<Scalar>& h0) {
  require_dim(inputs.rows(), p.input_dim(), "sequence input");
  require_dim(h0.size(), p.hidden_dim(), "initial state");
  const Index h = p.hidden_dim(), T = inputs.cols();
  tape.inputs = inputs;
  tape.h0 = h0;
  tape.h_prev.resize(h, T);
  tape.z.resize(h, T);
  tape.htilde.resize(h, T);
  tape.h.resize(h, T);
}

// One FastGRNN step inside a sequence, with the input projection precomputed.
template <typename Scalar>
void fastgrnn_tape_step(FastGrnnTape<Scalar>& tape, const FastGrnnParams<Scalar>& p, const Mat<Scalar>& wx,
                        Index t, const Vec<Scalar>& h_prev) {
  Vec<Scalar> a = wx.col(t);
  a.noalias() += p.U * h_prev;
  Vec<Scalar> z, htilde;
  tape.h.col(t) = fastgrnn_update(p, a, h_prev, &z, &htilde);
  tape.h_prev.col(t) = h_prev;
  tape.z.col(t) = z;
  tape.htilde.col(t) = htilde;
}

}  // namespace detail

template <typename Scalar>
FastGrnnTape<Scalar> forward_sequence(const FastGrnnParams<Scalar>& p, const MatIn<Scalar>& inputs,
                                      const VecIn<Scalar>& h0) {
  FastGrnnTape<Scalar> tape;
  detail::init_fastgrnn_tape(tape, p, inputs, h0);
  const Mat<Scalar> wx = p.W * inputs;
  Vec<Scalar> h = h0;
  for (Index t = 0; t < inputs.cols(); ++t) {
    detail::fastgrnn_tape_step(tape, p, wx, t, h);
    h = tape.h.col(t);
  }
  return tape;
}

template <typename Scalar>
ComfiTape<Scalar> forward_sequence(const ComfiParams<Scalar>& p, const MatIn<Scalar>& inputs,
                                   const VecIn<Scalar>& h0) {
  ComfiTape<Scalar> tape;
  detail::init_fastgrnn_tape(tape.base, p.base, inputs, h0);
  tape.out.resize(p.hidden_dim(), inputs.cols());
  const Mat<Scalar> wx = p.base.W * inputs;
  Vec<Scalar> h = h0;
  for (Index t = 0; t < inputs.cols(); ++t) {
    detail::fastgrnn_tape_step(tape.base, p.base, wx, t, h);
    h = (p.gamma * tape.base.h.col(t).array() + (Scalar(1) - p.gamma) * p.lambda).matrix();
    tape.out.col(t) = h;
  }
  return tape;
}

template <typename Scalar>
GruTape<Scalar> forward_sequence(const GruParams<Scalar>& p, const MatIn<Scalar>& inputs,
                                 const VecIn<Scalar>& h0) {
  require_dim(inputs.rows(), p.input_dim(), "sequence input");
  require_dim(h0.size(), p.hidden_dim(), "initial state");
  const Index hd = p.hidden_dim(), T = inputs.cols();
  GruTape<Scalar> tape;
  tape.inputs = inputs;
  tape.h0 = h0;
  for (Mat<Scalar>* m : {&tape.h_prev, &tape.z, &tape.r, &tape.n, &tape.h}) m->resize(hd, T);
  const Mat<Scalar> wz = (p.W_z * inputs).colwise() + p.b_z;
  const Mat<Scalar> wr = (p.W_r * inputs).colwise() + p.b_r;
  const Mat<Scalar> wh = (p.W_h * inputs).colwise() + p.b_h;
  Vec<Scalar> h = h0;
  for (Index t = 0; t < T; ++t) {
    Vec<Scalar> az = wz.col(t);
    az.noalias() += p.U_z * h;
    Vec<Scalar> ar = wr.col(t);
    ar.noalias() += p.U_r * h;
    const Vec<Scalar> z = logistic(az);
    const Vec<Scalar> r = logistic(ar);
    const Vec<Scalar> rh = r.cwiseProduct(h);
    Vec<Scalar> an = wh.col(t);
    an.noalias() += p.U_h * rh;
    const Vec<Scalar> n = an.array().tanh().matrix();
    tape.h_prev.col(t) = h;
    tape.z.col(t) = z;
    tape.r.col(t) = r;
    tape.n.col(t) = n;
    h = ((Scalar(1) - z.array()) * n.array() + z.array() * h.array()).matrix();
    tape.h.col(t) = h;
  }
  return tape;
}

// ---------------------------------------------------------------------------------------------
// Backpropagation through time. d_outputs(:, t) is dL/d(output_t); the result carries exact
// gradients for every parameter, the initial state and each input.

namespace detail {

// Accumulates the FastGRNN step gradients for all t given dL/dh_t (unfiltered output) and
// returns dL/dh_prev via `carry`. `through_filter` maps (t, upstream) -> dL/dh_t.
template <typename Scalar, typename FilterBack>
GradientBundle<FastGrnnParams<Scalar>> fastgrnn_backward(const FastGrnnParams<Scalar>& p,
                                                         const FastGrnnTape<Scalar>& tape,
                                                         const MatIn<Scalar>& d_outputs,
                                                         FilterBack&& through_filter) {
  const Index hd = p.hidden_dim(), T = tape.steps();
  require_dim(d_outputs.cols(), T, "bptt upstream length");
  require_dim(d_outputs.rows(), hd, "bptt upstream width");
  if (T < 1) throw ShapeError("bptt needs at least one timestep");
  const Scalar zeta = p.zeta(), nu = p.nu();

  Mat<Scalar> da(hd, T);
  Mat<Scalar> daz(hd, T);
  Scalar d_zeta = 0, d_nu = 0;
  Vec<Scalar> carry = Vec<Scalar>::Zero(hd);
  for (Index t = T - 1; t >= 0; --t) {
    const Vec<Scalar> upstream = d_outputs.col(t) + carry;
    const Vec<Scalar> dh = through_filter(t, upstream);
    const auto z = tape.z.col(t).array();
    const auto ht = tape.htilde.col(t).array();
    const auto hp = tape.h_prev.col(t).array();
    const auto g = dh.array();
    const Eigen::Array<Scalar, Eigen::Dynamic, 1> dht = g * (zeta * (Scalar(1) - z) + nu);
    const Eigen::Array<Scalar, Eigen::Dynamic, 1> dz = g * (hp - zeta * ht);
    d_zeta += (g * (Scalar(1) - z) * ht).sum();
    d_nu += (g * ht).sum();
    daz.col(t) = (dz * z * (Scalar(1) - z)).matrix();
    da.col(t) = daz.col(t) + (dht * (Scalar(1) - ht * ht)).matrix();
    carry = (g * z).matrix();
    carry.noalias() += p.U.transpose() * da.col(t);
  }

  GradientBundle<FastGrnnParams<Scalar>> out;
  out.params.W = da * tape.inputs.transpose();
  out.params.U = da * tape.h_prev.transpose();
  out.params.b_z = daz.rowwise().sum();
  out.params.b_h = (da - daz).rowwise().sum();
  out.params.zeta_raw = d_zeta * zeta * (Scalar(1) - zeta);
  out.params.nu_raw = d_nu * nu * (Scalar(1) - nu);
  out.h0 = carry;
  out.inputs = p.W.transpose() * da;
  return out;
}

}  // namespace detail

template <typename Scalar>
GradientBundle<FastGrnnParams<Scalar>> bptt(const FastGrnnParams<Scalar>& p, const FastGrnnTape<Scalar>& tape,
                                            const MatIn<Scalar>& d_outputs) {
  return detail::fastgrnn_backward(p, tape, d_outputs, [](Index, const Vec<Scalar>& g) { return g; });
}

template <typename Scalar>
GradientBundle<ComfiParams<Scalar>> bptt(const ComfiParams<Scalar>& p, const ComfiTape<Scalar>& tape,
                                         const MatIn<Scalar>& d_outputs) {
  Scalar d_gamma = 0, d_lambda = 0;
  auto through_filter = [&](Index t, const Vec<Scalar>& g) -> Vec<Scalar> {
    d_gamma += (g.array() * (tape.base.h.col(t).array() - p.lambda)).sum();
    d_lambda += (Scalar(1) - p.gamma) * g.sum();
    return p.gamma * g;
  };
  auto base = detail::fastgrnn_backward(p.base, tape.base, d_outputs, through_filter);
  GradientBundle<ComfiParams<Scalar>> out;
  out.params.base = std::move(base.params);
  out.params.gamma = d_gamma;
  out.params.lambda = d_lambda;
  out.h0 = std::move(base.h0);
  out.inputs = std::move(base.inputs);
  return out;
}

template <typename Scalar>
GradientBundle<GruParams<Scalar>> bptt(const GruParams<Scalar>& p, const GruTape<Scalar>& tape,
                                       const MatIn<Scalar>& d_outputs) {
  const Index hd = p.hidden_dim(), T = tape.steps();
  require_dim(d_outputs.cols(), T, "bptt upstream length");
  require_dim(d_outputs.rows(), hd, "bptt upstream width");
  if (T < 1) throw ShapeError("bptt needs at least one timestep");

  Mat<Scalar> daz(hd, T), dar(hd, T), dan(hd, T);
  Mat<Scalar> rh = tape.r.cwiseProduct(tape.h_prev);
  Vec<Scalar> carry = Vec<Scalar>::Zero(hd);
  for (Index t = T - 1; t >= 0; --t) {
    const Eigen::Array<Scalar, Eigen::Dynamic, 1> g = (d_outputs.col(t) + carry).array();
    const auto z = tape.z.col(t).array();
    const auto r = tape.r.col(t).array();
    const auto n = tape.n.col(t).array();
    const auto hp = tape.h_prev.col(t).array();
    dan.col(t) = (g * (Scalar(1) - z) * (Scalar(1) - n * n)).matrix();
    daz.col(t) = (g * (hp - n) * z * (Scalar(1) - z)).matrix();
    const Vec<Scalar> d_rh = p.U_h.transpose() * dan.col(t);
    dar.col(t) = (d_rh.array() * hp * r * (Scalar(1) - r)).matrix();
    carry = (g * z + d_rh.array() * r).matrix();
    carry.noalias() += p.U_z.transpose() * daz.col(t);
    carry.noalias() += p.U_r.transpose() * dar.col(t);
  }

  GradientBundle<GruParams<Scalar>> out;
  out.params.W_z = daz * tape.inputs.transpose();
  out.params.W_r = dar * tape.inputs.transpose();
  out.params.W_h = dan * tape.inputs.transpose();
  out.params.U_z = daz * tape.h_prev.transpose();
  out.params.U_r = dar * tape.h_prev.transpose();
  out.params.U_h = dan * rh.transpose();
  out.params.b_z = daz.rowwise().sum();
  out.params.b_r = dar.rowwise().sum();
  out.params.b_h = dan.rowwise().sum();
  out.h0 = carry;
  out.inputs = p.W_z.transpose() * daz + p.W_r.transpose() * dar + p.W_h.transpose() * dan;
  return out;
}

// ---------------------------------------------------------------------------------------------
// Drift instrumentation

struct DriftTrace {
  std::vector<double> mean_h;
  std::vector<double> mean_abs_h;

  std::size_t size() const { return mean_h.size(); }
  void record(double mean, double mean_abs) {
    mean_h.push_back(mean);
    mean_abs_h.push_back(mean_abs);
  }
  // step,mean_h,mean_abs_h with steps counted from 1.
  void write_csv(std::ostream& out) const {
    out << "step,mean_h,mean_abs_h\n";
    out.precision(10);
    for (std::size_t t = 0; t < size(); ++t) out << t + 1 << ',' << mean_h[t] << ',' << mean_abs_h[t] << '\n';
  }
};

template <typename Params, typename Scalar = typename Params::scalar_type>
DriftTrace drift_trace(const Params& p, const MatIn<Scalar>& inputs, const VecIn<Scalar>& h0) {
  DriftTrace trace;
  trace.mean_h.reserve(inputs.cols());
  trace.mean_abs_h.reserve(inputs.cols());
  Vec<Scalar> h = h0;
  for (Index t = 0; t < inputs.cols(); ++t) {
    h = step(p, inputs.col(t), h);
    trace.record(double(h.mean()), double(h.cwiseAbs().mean()));
  }
  return trace;
}

// ---------------------------------------------------------------------------------------------
// Closed-form complexity. Only matrix-vector products count as MACs; gate nonlinearities and
// elementwise products are excluded.

inline constexpr std::int64_t cell_param_count(CellKind kind, std::int64_t d, std::int64_t h) {
  switch (kind) {
    case CellKind::Gru: return 3 * (h * d + h * h + h);
    case CellKind::FastGrnn: return h * d + h * h + 2 * h + 2;
    case CellKind::Comfi: return h * d + h * h + 2 * h + 2 + 2;
  }
  return 0;
}

inline constexpr std::int64_t cell_mac_count(CellKind kind, std::int64_t d, std::int64_t h) {
  return kind == CellKind::Gru ? 3 * (h * d + h * h) : h * d + h * h;
}

// ---------------------------------------------------------------------------------------------
// Type-erased cell used by the model graph.

template <typename Scalar>
using AnyCell = std::variant<GruParams<Scalar>, FastGrnnParams<Scalar>, ComfiParams<Scalar>>;

template <typename Scalar, typename Rng>
AnyCell<Scalar> make_cell(CellKind kind, Index input_dim, Index hidden_dim, Rng& rng) {
  switch (kind) {
    case CellKind::Gru: return GruParams<Scalar>::init(input_dim, hidden_dim, rng);
    case CellKind::FastGrnn: return FastGrnnParams<Scalar>::init(input_dim, hidden_dim, rng);
    case CellKind::Comfi: return ComfiParams<Scalar>::init(input_dim, hidden_dim, rng);
  }
  throw ConfigError("unknown cell kind");
}

template <typename Scalar>
CellKind cell_kind(const AnyCell<Scalar>& cell) {
  return static_cast<CellKind>(cell.index());
}

template <typename Scalar>
Index hidden_dim(const AnyCell<Scalar>& cell) {
  return std::visit([](const auto& p) { return p.hidden_dim(); }, cell);
}

template <typename Scalar>
Index input_dim(const AnyCell<Scalar>& cell) {
  return std::visit([](const auto& p) { return p.input_dim(); }, cell);
}

template <typename Scalar>
CellState<Scalar> step(const AnyCell<Scalar>& cell, const VecIn<Scalar>& x,
                       const VecIn<Scalar>& h) {
  return std::visit([&](const auto& p) { return step(p, x, h); }, cell);
}

// Sequence outputs (hidden x T) for any cell kind.
template <typename Scalar>
Mat<Scalar> run_sequence(const AnyCell<Scalar>& cell, const MatIn<Scalar>& inputs,
                         const VecIn<Scalar>& h0) {
  return std::visit([&](const auto& p) -> Mat<Scalar> { return forward_sequence(p, inputs, h0).outputs(); }, cell);
}

}  // namespace fulc
