#include "fulc/bench.hpp"

#include <chrono>
#include <random>

namespace fulc {

BenchResult rtf_bench(const Model<float>& model, int n_iters, int warmup, std::uint64_t seed) {
  if (n_iters < 1) throw ConfigError("rtf_bench: n_iters must be at least 1");
  if (warmup < 0) throw ConfigError("rtf_bench: warmup must be non-negative");
  Eigen::setNbThreads(1);

  const ModelConfig& cfg = model.config();
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n01(0.0f, 1.0f);
  constexpr int kDistinctFrames = 32;
  std::vector<CVec<float>> frames;
  for (int i = 0; i < kDistinctFrames; ++i) {
    CVec<float> f(cfg.stft.n_bins());
    for (Index k = 0; k < f.size(); ++k) f[k] = {n01(rng), n01(rng)};
    frames.push_back(std::move(f));
  }

  StreamState<float> state = model.make_state();
  float sink = 0.0f;
  for (int i = 0; i < warmup; ++i) sink += model.process_frame(state, frames[i % kDistinctFrames]).enhanced[0].real();

  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  for (int i = 0; i < n_iters; ++i) sink += model.process_frame(state, frames[i % kDistinctFrames]).enhanced[0].real();
  const std::chrono::duration<double> elapsed = clock::now() - start;
  volatile float observed = sink;
  (void)observed;

  BenchResult r;
  r.iterations = n_iters;
  r.warmup = warmup;
  r.mean_frame_seconds = elapsed.count() / n_iters;
  r.rtf = r.mean_frame_seconds / cfg.stft.hop_seconds();
  return r;
}

}  // namespace fulc
