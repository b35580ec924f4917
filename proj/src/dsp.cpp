#include "fulc/dsp.hpp"

#include <string>

namespace fulc {

void StftConfig::validate() const {
  if (sample_rate <= 0 || window_len <= 0 || hop_len <= 0 || fft_len <= 0) {
    throw ConfigError("stft: sizes must be positive");
  }
  if (hop_len > window_len) throw ConfigError("stft: hop_len exceeds window_len");
  if (window_len > fft_len) throw ConfigError("stft: window_len exceeds fft_len");
  if (fft_len % 2 != 0) throw ConfigError("stft: fft_len must be even");
}

ReorientConfig ReorientConfig::from_resolution(double resolution_hz, double overlap, const StftConfig& stft) {
  ReorientConfig cfg;
  cfg.band_width = static_cast<int>(std::lround(resolution_hz / stft.bin_hz()));
  cfg.band_hop = static_cast<int>(std::lround(cfg.band_width * (1.0 - overlap)));
  cfg.validate(stft.n_bins());
  return cfg;
}

int ReorientConfig::n_bands(int n_bins) const {
  const int span = n_bins - band_width;
  return (span + band_hop - 1) / band_hop + 1;
}

void ReorientConfig::validate(int n_bins) const {
  if (band_hop <= 0 || band_hop > band_width || band_width > n_bins) {
    throw ConfigError("reorient: need 0 < band_hop <= band_width <= n_bins (got hop " + std::to_string(band_hop) +
                      ", width " + std::to_string(band_width) + ", bins " + std::to_string(n_bins) + ")");
  }
}

}  // namespace fulc
