#include "fulc/model_config.hpp"

#include <numeric>

namespace fulc {
namespace {

[[noreturn]] void fail(const std::string& layer, const std::string& why) {
  throw ConfigError("layer " + layer + ": " + why);
}

void require_positive(int v, const std::string& layer, const char* what) {
  if (v <= 0) fail(layer, std::string(what) + " must be positive, got " + std::to_string(v));
}

}  // namespace

LayerPlan LayerPlan::from(const ModelConfig& cfg) {
  try {
    cfg.stft.validate();
  } catch (const ConfigError& e) {
    fail("stft", e.what());
  }
  if (!(cfg.compression_beta > 0.0 && cfg.compression_beta <= 1.0)) fail("compress", "beta must lie in (0, 1]");

  LayerPlan plan;
  plan.n_bins = cfg.stft.n_bins();
  try {
    cfg.reorient.validate(plan.n_bins);
  } catch (const ConfigError& e) {
    fail("reorient", e.what());
  }
  plan.n_bands = cfg.reorient.n_bands(plan.n_bins);
  plan.input_positions = cfg.reorient.band_width;
  plan.input_channels = 2 * plan.n_bands;

  if (cfg.conv_filters.empty()) fail("conv_block", "needs at least one layer");
  if (cfg.pool_after.size() != cfg.conv_filters.size()) fail("conv_block", "pool_after must match conv_filters");
  if (cfg.conv_kernel <= 0 || cfg.conv_kernel % 2 == 0) fail("conv_block", "kernel must be odd and positive");

  int channels = plan.input_channels;
  int positions = plan.input_positions;
  for (std::size_t i = 0; i < cfg.conv_filters.size(); ++i) {
    const std::string name = "conv_block." + std::to_string(i);
    require_positive(cfg.conv_filters[i], name, "filters");
    plan.conv_in_channels.push_back(channels);
    plan.conv_positions.push_back(positions);
    plan.layers.push_back({name, separable_conv_params(channels, cfg.conv_filters[i], cfg.conv_kernel, true),
                           separable_conv_macs(channels, cfg.conv_filters[i], cfg.conv_kernel, positions), 0});
    channels = cfg.conv_filters[i];
    if (cfg.pool_after[i]) {
      if (positions % 2 != 0) fail(name, "cannot max-pool " + std::to_string(positions) + " positions by 2");
      positions /= 2;
    }
  }
  plan.freq_positions = positions;
  plan.freq_input_dim = channels;

  require_positive(cfg.freq_rnn_units, "freq_rnn", "units");
  const int fh = cfg.freq_rnn_units;
  plan.layers.push_back({"freq_rnn", 2 * cell_param_count(cfg.cell_kind, channels, fh),
                         2 * positions * cell_mac_count(cfg.cell_kind, channels, fh), 2});

  require_positive(cfg.post_freq_pointwise_filters, "freq_pointwise", "filters");
  const int pw = cfg.post_freq_pointwise_filters;
  plan.layers.push_back({"freq_pointwise", conv_params(2 * fh, pw, 1, true), conv_macs(2 * fh, pw, 1, positions), 0});

  require_positive(cfg.subband_blocks, "subband", "blocks");
  require_positive(cfg.subband_layers_per_block, "subband", "layers per block");
  require_positive(cfg.subband_units, "subband", "units");
  if (positions % cfg.subband_blocks != 0) {
    fail("subband", "cannot split " + std::to_string(positions) + " frequency positions into " +
                        std::to_string(cfg.subband_blocks) + " equal subbands");
  }
  plan.subband_group = positions / cfg.subband_blocks;
  plan.subband_input_dim = plan.subband_group * pw;
  for (int b = 0; b < cfg.subband_blocks; ++b) {
    int in = plan.subband_input_dim;
    for (int l = 0; l < cfg.subband_layers_per_block; ++l) {
      plan.layers.push_back({"subband." + std::to_string(b) + "." + std::to_string(l),
                             cell_param_count(cfg.cell_kind, in, cfg.subband_units),
                             cell_mac_count(cfg.cell_kind, in, cfg.subband_units), 1});
      in = cfg.subband_units;
    }
  }

  if (cfg.fc_units.empty()) fail("fc", "needs at least one layer");
  plan.fc_input_dim = cfg.subband_blocks * cfg.subband_units;
  int in = plan.fc_input_dim;
  for (std::size_t i = 0; i < cfg.fc_units.size(); ++i) {
    const std::string name = "fc." + std::to_string(i);
    require_positive(cfg.fc_units[i], name, "units");
    plan.layers.push_back({name, dense_params(in, cfg.fc_units[i], true), dense_macs(in, cfg.fc_units[i]), 0});
    in = cfg.fc_units[i];
  }
  if (in != plan.n_bins) {
    fail("fc." + std::to_string(cfg.fc_units.size() - 1),
         "mask width " + std::to_string(in) + " must equal n_bins " + std::to_string(plan.n_bins));
  }

  if (cfg.stage2_kernel <= 0 || cfg.stage2_kernel % 2 == 0) fail("stage2", "kernel must be odd and positive");
  int s_in = 2;
  for (std::size_t i = 0; i < cfg.stage2_filters.size(); ++i) {
    const std::string name = "stage2.conv." + std::to_string(i);
    require_positive(cfg.stage2_filters[i], name, "filters");
    plan.layers.push_back({name, conv_params(s_in, cfg.stage2_filters[i], cfg.stage2_kernel, true),
                           conv_macs(s_in, cfg.stage2_filters[i], cfg.stage2_kernel, plan.n_bins), 0});
    s_in = cfg.stage2_filters[i];
  }
  if (cfg.stage2_pointwise_out != 2) fail("stage2.pointwise", "must emit 2 channels (real, imaginary mask)");
  plan.layers.push_back({"stage2.pointwise", conv_params(s_in, 2, 1, true), conv_macs(s_in, 2, 1, plan.n_bins), 0});
  return plan;
}

std::int64_t LayerPlan::total_params() const {
  return std::accumulate(layers.begin(), layers.end(), std::int64_t{0},
                         [](std::int64_t acc, const LayerInfo& l) { return acc + l.params; });
}

std::int64_t LayerPlan::total_macs() const {
  return std::accumulate(layers.begin(), layers.end(), std::int64_t{0},
                         [](std::int64_t acc, const LayerInfo& l) { return acc + l.macs; });
}

int LayerPlan::total_cell_instances() const {
  return std::accumulate(layers.begin(), layers.end(), 0,
                         [](int acc, const LayerInfo& l) { return acc + l.cell_instances; });
}

}  // namespace fulc
