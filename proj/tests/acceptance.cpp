// One PASS/FAIL line per acceptance criterion; exit status 1 if any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "fulc/bench.hpp"
#include "fulc/drift.hpp"
#include "fulc/model.hpp"
#include "fulc/train.hpp"

using namespace fulc;

namespace {

struct Verdict {
  bool pass;
  std::string detail;
};

const CellKind kAllKinds[] = {CellKind::Gru, CellKind::FastGrnn, CellKind::Comfi};

std::vector<double> noise(std::size_t n, std::uint64_t seed, double std_dev) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, std_dev);
  std::vector<double> x(n);
  for (auto& v : x) v = d(rng);
  return x;
}

Verdict params() {
  const double fast = double(LayerPlan::from(ModelConfig::fast_ulcnet()).total_params());
  const double ulc = double(LayerPlan::from(ModelConfig::ulcnet()).total_params());
  const double ratio = fast / ulc;
  const bool pass = std::abs(fast / 0.338e6 - 1) <= 0.05 && std::abs(ulc / 0.685e6 - 1) <= 0.05 && ratio < 0.55;
  std::ostringstream s;
  s << "Fast-ULCNet " << fast << " (" << 100 * (fast / 0.338e6 - 1) << "%), ULCNet " << ulc << " ("
    << 100 * (ulc / 0.685e6 - 1) << "%), ratio " << ratio;
  return {pass, s.str()};
}

Verdict macs() {
  const double fast = double(LayerPlan::from(ModelConfig::fast_ulcnet()).total_macs());
  const double ulc = double(LayerPlan::from(ModelConfig::ulcnet()).total_macs());
  const bool pass = std::abs(fast / 1.691e6 - 1) <= 0.15 && std::abs(ulc / 2.057e6 - 1) <= 0.15 && fast < ulc;
  std::ostringstream s;
  s << "per frame: Fast-ULCNet " << fast << " (" << 100 * (fast / 1.691e6 - 1) << "%), ULCNet " << ulc << " ("
    << 100 * (ulc / 2.057e6 - 1) << "%)";
  return {pass, s.str()};
}

Verdict latency() {
  constexpr int kIters = 2000;
  const auto fast = Model<float>::build(ModelConfig::fast_ulcnet(), 1);
  const auto gru = Model<float>::build(ModelConfig::ulcnet(), 1);
  const BenchResult rf = rtf_bench(fast, kIters);
  const BenchResult rg = rtf_bench(gru, kIters);
  std::ostringstream s;
  s << "RTF Fast-ULCNet " << rf.rtf << ", ULCNet " << rg.rtf << " over " << kIters << " single-thread frames ("
    << 100 * (1 - rf.rtf / rg.rtf) << "% faster, gap size not asserted)";
  return {rf.rtf < rg.rtf, s.str()};
}

Verdict drift() {
  const AdversarialCell adv;
  const DriftTrace fast = drift_trace(adv.fastgrnn(), Mat<double>::Zero(1, 10000), Vec<double>::Zero(1));
  const double bound = adv.comfi_bound(0.99);
  const DriftTrace comfi = drift_trace(adv.comfi(0.99), Mat<double>::Zero(1, 100000), Vec<double>::Zero(1));
  const double peak = max_abs(comfi.mean_h);
  std::ostringstream s;
  s << "FastGRNN mean_abs_h at step 10000 = " << fast.mean_abs_h.back() << " (> 100); Comfi max |h| over 100000 = "
    << peak << " <= bound " << bound;
  return {fast.mean_abs_h.back() > 100.0 && peak <= bound, s.str()};
}

Verdict gradients() {
  double worst = 0;
  std::string where;
  for (CellKind kind : kAllKinds) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto dims = random_check_dims(seed);
      const auto r = grad_check(kind, dims.d, dims.h, dims.T, seed);
      if (r.max_rel_error > worst) {
        worst = r.max_rel_error;
        where = std::string(cell_kind_name(kind)) + " " + r.worst_coordinate + " seed " + std::to_string(seed);
      }
    }
  }
  // largest allowed comfi configuration
  const auto c = comfi_check_case(6, 6, 10, 12345);
  const auto g = bptt(c.params, forward_sequence(c.params, c.inputs, c.h0), c.coeffs);
  const auto r = check_gradients(c.params, c.inputs, c.h0, c.coeffs, g);
  worst = std::max(worst, r.max_rel_error);
  std::ostringstream s;
  s << "max relative error " << worst << " over 3 x 100 configurations (worst: " << where << ")";
  return {worst < 1e-6, s.str()};
}

Verdict reduction() {
  bool identical = true;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    ComfiParams<double> p{FastGrnnParams<double>::init(4, 8, rng), 1.0, 0.3};
    std::normal_distribution<double> d;
    Mat<double> x(4, 200);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = d(rng);
    const Vec<double> h0 = Vec<double>::Zero(8);
    identical = identical && forward_sequence(p, x, h0).outputs() == forward_sequence(p.base, x, h0).outputs();
  }
  return {identical, "Comfi(gamma=1) vs FastGRNN on 10 sequences of 200 steps: " +
                         std::string(identical ? "elementwise identical" : "differ")};
}

Verdict streaming() {
  double worst = 0;
  for (CellKind kind : kAllKinds) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto m = Model<float>::build(ModelConfig::for_cell(kind), seed);
      std::mt19937_64 rng(500 + seed);
      std::normal_distribution<float> d;
      ComplexSpectrogram<float> spec;
      spec.frames.resize(50, 257);
      for (Index i = 0; i < spec.frames.size(); ++i) spec.frames.data()[i] = {d(rng), d(rng)};
      spec.signal_length = 49 * 256 + 512;
      const auto batch = m.process_batch(spec);
      auto state = m.make_state();
      for (Index t = 0; t < 50; ++t) {
        const auto f = m.process_frame(state, spec.frames.row(t).transpose());
        worst = std::max(worst, double((f.enhanced.transpose() - batch.enhanced.frames.row(t)).cwiseAbs().maxCoeff()));
      }
    }
  }
  std::ostringstream s;
  s << "max |frame-by-frame - batch| = " << worst << " over 3 cell kinds x 10 seeds x 50 frames";
  return {worst < 1e-5, s.str()};
}

Verdict dsp() {
  const auto x = noise(16000, 1, 0.3);
  const auto y = istft(stft<double>(x));
  double sig = 0, err = 0;
  for (std::size_t n = 512; n + 512 < x.size(); ++n) {
    sig += x[n] * x[n];
    err += (x[n] - y[n]) * (x[n] - y[n]);
  }
  const double snr = 10 * std::log10(sig / err);

  std::mt19937_64 rng(2);
  std::normal_distribution<double> d;
  CMat<double> c(30, 257);
  for (Index i = 0; i < c.size(); ++i) c.data()[i] = {d(rng), d(rng)};
  double comp_err = 0;
  for (double beta : {0.1, 0.3, 0.5, 1.0}) {
    const CMat<double> back = power_decompress(power_compress(c, beta), beta);
    comp_err = std::max(comp_err, ((back - c).cwiseAbs().array() / c.cwiseAbs().array()).maxCoeff());
  }

  const bool unit = apply_crm(c, CMat<double>::Constant(30, 257, {1.0, 0.0})) == c;

  const auto s = noise(8000, 3, 1.0);
  auto est = s;
  const auto n = noise(8000, 4, 0.5);
  for (std::size_t i = 0; i < est.size(); ++i) est[i] += n[i];
  const double base = si_sdr<double>(s, est).value();
  double drift = 0;
  for (double a : {1e-3, 0.5, 2.0, 1e3}) {
    auto scaled = est;
    for (auto& v : scaled) v *= a;
    drift = std::max(drift, std::abs(si_sdr<double>(s, scaled).value() - base));
  }
  std::ostringstream o;
  o << "round-trip SNR " << snr << " dB; compression rel error " << comp_err << "; unit CRM "
    << (unit ? "bit-identical" : "differs") << "; SI-SDR scale drift " << drift << " dB";
  return {snr > 50 && comp_err < 1e-6 && unit && drift < 1e-9, o.str()};
}

Verdict losses() {
  auto one = [](std::complex<double> v) { return CMat<double>::Constant(1, 1, v); };
  const double l0 = loss(one({0.4, -1.0}), one({0.4, -1.0})).total;
  const double l2 = loss(one({1, 0}), one({0, 0})).total;
  const double lr2 = loss(one({1, 0}), one({0, 1})).total;
  const bool hand = std::abs(l0) <= 1e-12 && std::abs(l2 - 2) <= 1e-12 && std::abs(lr2 - std::sqrt(2.0)) <= 1e-12;

  std::mt19937_64 rng(9);
  std::normal_distribution<double> d;
  CMat<double> s(4, 8), p(4, 8);
  for (Index i = 0; i < s.size(); ++i) {
    s.data()[i] = {d(rng), d(rng)};
    p.data()[i] = {d(rng), d(rng)};
  }
  const CMat<double> g = loss_grad(s, p);
  double worst = 0;
  const double h = 1e-6;
  for (Index i = 0; i < p.size(); ++i) {
    for (std::complex<double> step : {std::complex<double>(h, 0), std::complex<double>(0, h)}) {
      CMat<double> up = p, down = p;
      up.data()[i] += step;
      down.data()[i] -= step;
      const double fd = (loss(s, up).total - loss(s, down).total) / (2 * h);
      const double an = step.real() != 0 ? g.data()[i].real() : g.data()[i].imag();
      worst = std::max(worst, std::abs(fd - an));
    }
  }
  std::ostringstream o;
  o << "hand cases " << l0 << ", " << l2 << ", " << lr2 << "; loss_grad vs finite differences " << worst;
  return {hand && worst < 1e-6, o.str()};
}

Verdict training() {
  const OptimizerConfig opt;
  bool converged = true, schedule = true;
  std::ostringstream o;
  for (CellKind kind : kAllKinds) {
    const ToyTrainResult r = train_cell_toy(kind, ToyTaskConfig{}, opt);
    converged = converged && r.final_loss <= 0.5 * r.initial_loss;
    // the recorded learning rates must follow the plateau rule and stopping the early-stop rule
    std::vector<double> history;
    for (std::size_t e = 0; e < r.curve.size(); ++e) {
      const double expected = plateau_schedule(history, opt);
      schedule = schedule && r.curve[e].learning_rate == expected;
      history.push_back(r.curve[e].val_loss);
      const bool should_stop = early_stop(history, opt).stop;
      const bool last = e + 1 == r.curve.size();
      schedule = schedule && (should_stop == (last && r.early_stopped));
    }
    o << cell_kind_name(kind) << " " << r.initial_loss << " -> " << r.final_loss << " (" << r.curve.size()
      << " epochs" << (r.early_stopped ? ", early stop" : "") << "); ";
  }
  const std::vector<double> three{1.0, 1.2, 1.1, 1.3};
  const std::vector<double> five{1.0, 1.2, 1.1, 1.3, 1.4, 1.5};
  const std::vector<double> four{1.0, 1.2, 1.1, 1.3, 1.4};
  const auto stop5 = early_stop(five, opt);
  schedule = schedule && plateau_schedule(three, opt) == opt.learning_rate / 2 &&
             plateau_schedule(std::span(three).first(3), opt) == opt.learning_rate && stop5.stop &&
             stop5.best_epoch == 0 && !early_stop(four, opt).stop;
  o << "LR halving after 3 and stop after 5 non-improving epochs " << (schedule ? "verified" : "violated");
  return {converged && schedule, o.str()};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Verdict()>> criteria[] = {
      {"parameter counts", params},           {"MACs per frame", macs},
      {"relative latency", latency},          {"drift and comfi bound", drift},
      {"BPTT gradients", gradients},          {"comfi gamma=1 reduction", reduction},
      {"streaming/batch equivalence", streaming}, {"DSP suite", dsp},
      {"loss correctness", losses},           {"toy training convergence", training},
  };
  int failures = 0;
  int index = 1;
  for (const auto& [name, check] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
    std::printf("%s %2d %-28s %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", index++, name, v.detail.c_str(), took.count());
    std::fflush(stdout);
    failures += v.pass ? 0 : 1;
  }
  std::printf("%d/10 criteria passed\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}
