#include "fulc/train.hpp"

#include <limits>
#include <numbers>
#include <random>

namespace fulc {

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0) || !(clip_norm > 0) || !(plateau_factor > 0)) {
    throw ConfigError("optimizer: rates and clip norm must be positive");
  }
  if (plateau_patience < 1 || early_stop_patience < 1) throw ConfigError("optimizer: patience must be at least 1");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(eps > 0)) {
    throw ConfigError("optimizer: Adam decay rates must lie in [0, 1) and eps must be positive");
  }
}

double plateau_schedule(std::span<const double> history, const OptimizerConfig& cfg) {
  double lr = cfg.learning_rate;
  double best = std::numeric_limits<double>::infinity();
  int wait = 0;
  for (double v : history) {
    if (v < best) {
      best = v;
      wait = 0;
    } else if (++wait >= cfg.plateau_patience) {
      lr *= cfg.plateau_factor;
      wait = 0;
    }
  }
  return lr;
}

EarlyStopDecision early_stop(std::span<const double> history, const OptimizerConfig& cfg) {
  EarlyStopDecision d;
  double best = std::numeric_limits<double>::infinity();
  int wait = 0;
  for (std::size_t e = 0; e < history.size(); ++e) {
    if (history[e] < best) {
      best = history[e];
      d.best_epoch = e;
      wait = 0;
    } else if (++wait >= cfg.early_stop_patience) {
      d.stop = true;
      return d;
    }
  }
  return d;
}

// ---------------------------------------------------------------------------------------------

namespace {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finaliser over the pair
  std::uint64_t z = a * 0x9E3779B97F4A7C15ull + b + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

template <typename Rng>
Mat<double> uniform_mat(Index rows, Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Mat<double> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

template <typename Rng>
Vec<double> uniform_vec(Index n, double bound, Rng& rng) {
  return uniform_mat(n, 1, bound, rng);
}

template <typename Params, typename Rng>
GradCheckCase<Params> finish_case(Params params, int d, int h, int T, Rng& rng) {
  GradCheckCase<Params> c;
  c.params = std::move(params);
  std::normal_distribution<double> n01(0.0, 1.0);
  c.inputs.resize(d, T);
  for (Index i = 0; i < c.inputs.size(); ++i) c.inputs.data()[i] = n01(rng);
  c.h0 = uniform_vec(h, 0.5, rng);
  c.coeffs = uniform_mat(h, T, 1.0, rng);
  return c;
}

FastGrnnParams<double> random_fastgrnn(int d, int h, std::mt19937_64& rng) {
  FastGrnnParams<double> p;
  p.W = uniform_mat(h, d, 0.8, rng);
  p.U = uniform_mat(h, h, 0.8, rng);
  p.b_z = uniform_vec(h, 0.5, rng);
  p.b_h = uniform_vec(h, 0.5, rng);
  std::uniform_real_distribution<double> raw(-2.0, 2.0);
  p.zeta_raw = raw(rng);
  p.nu_raw = raw(rng);
  return p;
}

}  // namespace

GradCheckCase<FastGrnnParams<double>> fastgrnn_check_case(int d, int h, int T, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 1));
  auto p = random_fastgrnn(d, h, rng);
  return finish_case(std::move(p), d, h, T, rng);
}

GradCheckCase<ComfiParams<double>> comfi_check_case(int d, int h, int T, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 2));
  ComfiParams<double> p;
  p.base = random_fastgrnn(d, h, rng);
  p.gamma = std::uniform_real_distribution<double>(0.5, 1.1)(rng);
  p.lambda = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
  return finish_case(std::move(p), d, h, T, rng);
}

GradCheckCase<GruParams<double>> gru_check_case(int d, int h, int T, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 3));
  GruParams<double> p;
  for (Mat<double>* w : {&p.W_z, &p.W_r, &p.W_h}) *w = uniform_mat(h, d, 0.8, rng);
  for (Mat<double>* u : {&p.U_z, &p.U_r, &p.U_h}) *u = uniform_mat(h, h, 0.8, rng);
  for (Vec<double>* b : {&p.b_z, &p.b_r, &p.b_h}) *b = uniform_vec(h, 0.5, rng);
  return finish_case(std::move(p), d, h, T, rng);
}

namespace {

template <typename Params>
GradCheckReport run_check(const GradCheckCase<Params>& c) {
  const auto tape = forward_sequence(c.params, c.inputs, c.h0);
  const auto grads = bptt(c.params, tape, c.coeffs);
  return check_gradients(c.params, c.inputs, c.h0, c.coeffs, grads);
}

}  // namespace

GradCheckReport grad_check(CellKind kind, int d, int h, int T, std::uint64_t seed) {
  if (d < 1 || h < 1 || T < 1) throw ConfigError("grad_check: dimensions and length must be at least 1");
  switch (kind) {
    case CellKind::FastGrnn: return run_check(fastgrnn_check_case(d, h, T, seed));
    case CellKind::Comfi: return run_check(comfi_check_case(d, h, T, seed));
    case CellKind::Gru: return run_check(gru_check_case(d, h, T, seed));
  }
  throw ConfigError("grad_check: unknown cell kind");
}

GradCheckDims random_check_dims(std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 99));
  std::uniform_int_distribution<int> dim(1, 6), len(1, 10);
  const int d = dim(rng), h = dim(rng), T = len(rng);
  return {d, h, T};
}

// ---------------------------------------------------------------------------------------------
// Toy denoising

ToySequence make_toy_sequence(const ToyTaskConfig& cfg, std::uint64_t stream, int length) {
  std::mt19937_64 rng(mix_seed(cfg.seed, stream));
  std::uniform_real_distribution<double> freq(0.005, 0.04), phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, cfg.noise_std);
  ToySequence s;
  s.clean.resize(cfg.input_dim, length);
  s.noisy.resize(cfg.input_dim, length);
  for (int k = 0; k < cfg.input_dim; ++k) {
    const double f = freq(rng), ph = phase(rng);
    for (int t = 0; t < length; ++t) s.clean(k, t) = std::sin(2.0 * std::numbers::pi * f * t + ph);
  }
  for (Index i = 0; i < s.noisy.size(); ++i) s.noisy.data()[i] = s.clean.data()[i] + noise(rng);
  return s;
}

namespace {

constexpr std::uint64_t kValidationStream = 1u << 30;

template <typename Params>
struct ToyNet {
  using scalar_type = double;
  Params cell;
  Mat<double> readout;
  Vec<double> bias;

  template <typename F>
  void visit(F&& f) {
    cell.visit(f);
    f("readout.weight", tensor_view(readout), 2);
    f("readout.bias", tensor_view(bias), 1);
  }
  template <typename F>
  void visit(F&& f) const {
    cell.visit(f);
    f("readout.weight", tensor_view(readout), 2);
    f("readout.bias", tensor_view(bias), 1);
  }
};

template <typename Params>
double sequence_loss(const ToyNet<Params>& net, const ToySequence& seq, ToyNet<Params>* grads) {
  const Vec<double> h0 = Vec<double>::Zero(net.cell.hidden_dim());
  const auto tape = forward_sequence(net.cell, seq.noisy, h0);
  const Mat<double>& H = tape.outputs();
  const Mat<double> err = ((net.readout * H).colwise() + net.bias) - seq.clean;
  const double value = err.cwiseAbs().mean();
  if (!std::isfinite(value)) throw NumericError("toy training produced a non-finite loss");
  if (grads) {
    const Mat<double> dy = err.unaryExpr([](double e) { return e > 0 ? 1.0 : (e < 0 ? -1.0 : 0.0); }) / double(err.size());
    grads->readout = dy * H.transpose();
    grads->bias = dy.rowwise().sum();
    grads->cell = bptt(net.cell, tape, net.readout.transpose() * dy).params;
  }
  return value;
}

template <typename Params>
double validation_loss(const ToyNet<Params>& net, const ToyTaskConfig& task) {
  double total = 0.0;
  for (int i = 0; i < task.val_sequences; ++i) {
    total += sequence_loss(net, make_toy_sequence(task, kValidationStream + i, task.seq_len), static_cast<ToyNet<Params>*>(nullptr));
  }
  return total / task.val_sequences;
}

template <typename Params>
ToyTrainResult train_impl(Params cell, CellKind kind, const ToyTaskConfig& task, const OptimizerConfig& opt,
                          std::mt19937_64& rng) {
  ToyNet<Params> net{std::move(cell), uniform_mat(task.input_dim, task.hidden_dim, std::sqrt(1.0 / task.hidden_dim), rng),
                     Vec<double>::Zero(task.input_dim)};
  Adam<double> adam(opt);
  ToyTrainResult result;
  result.kind = kind;
  result.initial_loss = validation_loss(net, task);

  ToyNet<Params> best = net;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<double> history;
  double lr = opt.learning_rate;
  for (int epoch = 0; epoch < task.max_epochs; ++epoch) {
    double train_total = 0.0;
    for (int s = 0; s < task.steps_per_epoch; ++s) {
      const auto seq = make_toy_sequence(task, std::uint64_t(epoch) * task.steps_per_epoch + s, task.seq_len);
      ToyNet<Params> grads = net;
      train_total += sequence_loss(net, seq, &grads);
      adam.step(net, std::move(grads), lr);
    }
    const double val = validation_loss(net, task);
    history.push_back(val);
    result.curve.push_back({epoch, train_total / task.steps_per_epoch, val, lr});
    if (val < best_val) {
      best_val = val;
      best = net;
    }
    lr = plateau_schedule(history, opt);
    const auto stop = early_stop(history, opt);
    result.best_epoch = stop.best_epoch;
    if (stop.stop) {
      result.early_stopped = true;
      break;
    }
  }
  result.cell = std::move(best.cell);
  result.readout = std::move(best.readout);
  result.readout_bias = std::move(best.bias);
  result.final_loss = best_val;
  return result;
}

}  // namespace

ToyTrainResult train_cell_toy(CellKind kind, const ToyTaskConfig& task, const OptimizerConfig& opt) {
  opt.validate();
  if (task.input_dim < 1 || task.hidden_dim < 1 || task.seq_len < 1 || task.steps_per_epoch < 1 ||
      task.max_epochs < 1 || task.val_sequences < 1) {
    throw ConfigError("toy task: all sizes must be at least 1");
  }
  std::mt19937_64 rng(mix_seed(task.seed, 7));
  switch (kind) {
    case CellKind::FastGrnn:
      return train_impl(FastGrnnParams<double>::init(task.input_dim, task.hidden_dim, rng), kind, task, opt, rng);
    case CellKind::Comfi:
      return train_impl(ComfiParams<double>::init(task.input_dim, task.hidden_dim, rng), kind, task, opt, rng);
    case CellKind::Gru:
      return train_impl(GruParams<double>::init(task.input_dim, task.hidden_dim, rng), kind, task, opt, rng);
  }
  throw ConfigError("toy task: unknown cell kind");
}

double toy_validation_loss(const ToyTrainResult& model, const ToyTaskConfig& task) {
  return std::visit(
      [&](const auto& cell) {
        using P = std::decay_t<decltype(cell)>;
        return validation_loss(ToyNet<P>{cell, model.readout, model.readout_bias}, task);
      },
      model.cell);
}

void ToyTrainResult::write_curve_csv(std::ostream& out) const {
  out << "epoch,train_loss,val_loss,learning_rate\n";
  out.precision(10);
  for (const auto& r : curve) out << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',' << r.learning_rate << '\n';
}

ModelWeights ToyTrainResult::to_weights() const {
  ModelWeights w;
  const auto h = hidden_dim(cell);
  const auto d = input_dim(cell);
  w.add("toy.meta", Tensor{{3}, {float(static_cast<int>(kind)), float(d), float(h)}});
  std::visit([&](const auto& p) { export_tensors(p, "toy.cell.", w); }, cell);
  w.add("toy.readout.weight", to_tensor(readout, 2));
  w.add("toy.readout.bias", to_tensor(readout_bias, 1));
  return w;
}

ToyTrainResult ToyTrainResult::from_weights(const ModelWeights& weights) {
  const Tensor* meta = weights.find("toy.meta");
  if (!meta || meta->data.size() != 3) throw ParseError("toy weights: missing or malformed toy.meta");
  const int kind = int(meta->data[0]), d = int(meta->data[1]), h = int(meta->data[2]);
  if (kind < 0 || kind > 2 || d < 1 || h < 1) throw ParseError("toy weights: invalid toy.meta");
  ToyTrainResult r;
  r.kind = static_cast<CellKind>(kind);
  switch (r.kind) {
    case CellKind::Gru: r.cell = GruParams<double>::zeros(d, h); break;
    case CellKind::FastGrnn: r.cell = FastGrnnParams<double>::zeros(d, h); break;
    case CellKind::Comfi: r.cell = ComfiParams<double>::zeros(d, h); break;
  }
  r.readout = Mat<double>::Zero(d, h);
  r.readout_bias = Vec<double>::Zero(d);
  WeightBinder binder(weights);
  Vec<double> meta_values(3);
  binder.bind("toy.meta", tensor_view(meta_values), 1);
  std::visit([&](auto& p) { import_tensors(p, "toy.cell.", binder); }, r.cell);
  binder.bind("toy.readout.weight", tensor_view(r.readout), 2);
  binder.bind("toy.readout.bias", tensor_view(r.readout_bias), 1);
  binder.finish();
  return r;
}

}  // namespace fulc
