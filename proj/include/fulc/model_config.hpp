#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fulc/cells.hpp"
#include "fulc/dsp.hpp"

namespace fulc {

struct ModelConfig {
  CellKind cell_kind = CellKind::FastGrnn;
  StftConfig stft;
  ReorientConfig reorient;
  std::vector<int> conv_filters{32, 64, 96, 128};
  int conv_kernel = 3;
  std::vector<bool> pool_after{false, true, true, true};
  int freq_rnn_units = 64;
  int post_freq_pointwise_filters = 64;
  int subband_blocks = 2;
  int subband_layers_per_block = 2;
  int subband_units = 128;
  std::vector<int> fc_units{257, 257};
  std::vector<int> stage2_filters{32, 32};
  int stage2_kernel = 3;
  int stage2_pointwise_out = 2;
  double compression_beta = 0.3;

  static ModelConfig fast_ulcnet() { return {}; }
  static ModelConfig ulcnet() {
    ModelConfig cfg;
    cfg.cell_kind = CellKind::Gru;
    return cfg;
  }
  static ModelConfig for_cell(CellKind kind) {
    ModelConfig cfg;
    cfg.cell_kind = kind;
    return cfg;
  }
};

// Parameter and per-frame MAC totals for one layer of the graph.
struct LayerInfo {
  std::string name;
  std::int64_t params = 0;
  std::int64_t macs = 0;
  int cell_instances = 0;
};

// Resolved tensor shapes of the whole graph. Construction validates the shape chain and throws
// ConfigError naming the first layer that does not fit.
struct LayerPlan {
  int n_bins = 0;
  int n_bands = 0;
  int input_positions = 0;  // band width
  int input_channels = 0;   // real/imag per band
  std::vector<int> conv_in_channels;
  std::vector<int> conv_positions;  // positions each conv layer is evaluated at (before pooling)
  int freq_positions = 0;
  int freq_input_dim = 0;
  int subband_group = 0;  // frequency positions per subband
  int subband_input_dim = 0;
  int fc_input_dim = 0;
  std::vector<LayerInfo> layers;

  static LayerPlan from(const ModelConfig& cfg);
  std::int64_t total_params() const;
  std::int64_t total_macs() const;
  int total_cell_instances() const;
};

// Closed-form layer complexity. Convolution MACs are per output position times positions;
// biases count as parameters but not as MACs.
inline constexpr std::int64_t separable_conv_params(std::int64_t c_in, std::int64_t c_out, std::int64_t k, bool bias) {
  return c_in * k + c_in * c_out + (bias ? c_out : 0);
}
inline constexpr std::int64_t separable_conv_macs(std::int64_t c_in, std::int64_t c_out, std::int64_t k,
                                                  std::int64_t positions) {
  return (c_in * k + c_in * c_out) * positions;
}
inline constexpr std::int64_t conv_params(std::int64_t c_in, std::int64_t c_out, std::int64_t k, bool bias) {
  return c_in * c_out * k + (bias ? c_out : 0);
}
inline constexpr std::int64_t conv_macs(std::int64_t c_in, std::int64_t c_out, std::int64_t k, std::int64_t positions) {
  return c_in * c_out * k * positions;
}
inline constexpr std::int64_t dense_params(std::int64_t in, std::int64_t out, bool bias) {
  return in * out + (bias ? out : 0);
}
inline constexpr std::int64_t dense_macs(std::int64_t in, std::int64_t out) { return in * out; }

}  // namespace fulc
