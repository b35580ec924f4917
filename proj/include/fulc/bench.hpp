#pragma once

#include <cstdint>

#include "fulc/model.hpp"

namespace fulc {

// Frames processed before timing starts; never counted in the mean.
inline constexpr int kBenchWarmupFrames = 100;

struct BenchResult {
  int iterations = 0;
  int warmup = 0;
  double mean_frame_seconds = 0.0;
  // mean per-frame wall time divided by the hop duration
  double rtf = 0.0;
};

// Single-threaded streaming throughput of process_frame over n_iters frames of random noisy
// spectra.
BenchResult rtf_bench(const Model<float>& model, int n_iters, int warmup = kBenchWarmupFrames, std::uint64_t seed = 0);

}  // namespace fulc
