#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "fulc/core.hpp"

namespace fulc {

struct StftConfig {
  int sample_rate = 16000;
  int window_len = 512;
  int hop_len = 256;
  int fft_len = 512;

  int n_bins() const { return fft_len / 2 + 1; }
  double bin_hz() const { return double(sample_rate) / fft_len; }
  double hop_seconds() const { return double(hop_len) / sample_rate; }
  void validate() const;

  // Number of analysis frames for a signal of `length` samples. A signal shorter than one
  // window still yields a single zero-padded frame.
  Index frame_count(Index length) const {
    if (length <= 0) return 0;
    if (length < window_len) return 1;
    return (length - window_len) / hop_len + 1;
  }
};

struct ReorientConfig {
  int band_width = 48;
  int band_hop = 32;

  // Band layout from a frequency resolution and an overlap factor, rounded to whole bins.
  static ReorientConfig from_resolution(double resolution_hz, double overlap, const StftConfig& stft);
  int n_bands(int n_bins) const;
  void validate(int n_bins) const;
};

template <typename Scalar>
struct ComplexSpectrogram {
  CMat<Scalar> frames;  // T x n_bins
  StftConfig config;
  Index signal_length = 0;  // samples of the analysed signal, restored by istft

  Index num_frames() const { return frames.rows(); }
  Index n_bins() const { return frames.cols(); }
};

// Periodic Hann window.
template <typename Scalar>
Vec<Scalar> hann_window(int length) {
  Vec<Scalar> w(length);
  for (int n = 0; n < length; ++n) {
    w[n] = Scalar(0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / length));
  }
  return w;
}

template <typename Scalar>
ComplexSpectrogram<Scalar> stft(std::span<const Scalar> samples, const StftConfig& cfg = {}) {
  cfg.validate();
  const Index length = static_cast<Index>(samples.size());
  const Index n_frames = cfg.frame_count(length);
  ComplexSpectrogram<Scalar> out;
  out.config = cfg;
  out.signal_length = length;
  out.frames.resize(n_frames, cfg.n_bins());

  const Vec<Scalar> window = hann_window<Scalar>(cfg.window_len);
  Eigen::FFT<Scalar> fft;
  fft.SetFlag(Eigen::FFT<Scalar>::HalfSpectrum);
  std::vector<Scalar> buffer(cfg.fft_len);
  std::vector<std::complex<Scalar>> bins;
  for (Index t = 0; t < n_frames; ++t) {
    std::fill(buffer.begin(), buffer.end(), Scalar(0));
    const Index start = t * cfg.hop_len;
    for (int n = 0; n < cfg.window_len && start + n < length; ++n) {
      buffer[n] = samples[start + n] * window[n];
    }
    fft.fwd(bins, buffer);
    for (int k = 0; k < cfg.n_bins(); ++k) out.frames(t, k) = bins[k];
  }
  return out;
}

// Overlap-add synthesis normalised by the summed squared window. Samples whose window sum
// falls below a small threshold (only the outermost edges) are set to zero.
template <typename Scalar>
std::vector<Scalar> istft(const ComplexSpectrogram<Scalar>& spec) {
  const StftConfig& cfg = spec.config;
  cfg.validate();
  require_dim(spec.n_bins(), cfg.n_bins(), "istft bins");
  const Index n_frames = spec.num_frames();
  const Index span_len = n_frames == 0 ? 0 : (n_frames - 1) * cfg.hop_len + cfg.window_len;
  const Index out_len = std::max(span_len, spec.signal_length);
  std::vector<double> acc(out_len, 0.0);
  std::vector<double> norm(out_len, 0.0);

  const Vec<Scalar> window = hann_window<Scalar>(cfg.window_len);
  Eigen::FFT<Scalar> fft;
  fft.SetFlag(Eigen::FFT<Scalar>::HalfSpectrum);
  std::vector<std::complex<Scalar>> bins(cfg.n_bins());
  std::vector<Scalar> frame;
  for (Index t = 0; t < n_frames; ++t) {
    for (int k = 0; k < cfg.n_bins(); ++k) bins[k] = spec.frames(t, k);
    fft.inv(frame, bins, cfg.fft_len);
    const Index start = t * cfg.hop_len;
    for (int n = 0; n < cfg.window_len; ++n) {
      acc[start + n] += double(window[n]) * double(frame[n]);
      norm[start + n] += double(window[n]) * double(window[n]);
    }
  }
  constexpr double kMinWindowSum = 1e-6;
  std::vector<Scalar> out(spec.signal_length, Scalar(0));
  for (Index n = 0; n < spec.signal_length; ++n) {
    if (norm[n] > kMinWindowSum) out[n] = Scalar(acc[n] / norm[n]);
  }
  return out;
}

// m e^{i theta} -> m^beta e^{i theta}; zero stays zero.
template <typename Derived>
auto power_compress(const Eigen::MatrixBase<Derived>& x, typename Derived::RealScalar beta) {
  using C = typename Derived::Scalar;
  using R = typename Derived::RealScalar;
  return x.unaryExpr([beta](const C& c) {
            const R m = std::abs(c);
            return m > R(0) ? c * std::pow(m, beta - R(1)) : C(0);
          })
      .eval();
}

template <typename Derived>
auto power_decompress(const Eigen::MatrixBase<Derived>& x, typename Derived::RealScalar beta) {
  using R = typename Derived::RealScalar;
  return power_compress(x, R(1) / beta);
}

inline void require_beta(double beta) {
  if (!(beta > 0.0 && beta <= 1.0)) throw ConfigError("compression exponent must lie in (0, 1]");
}

template <typename Scalar>
ComplexSpectrogram<Scalar> power_compress(const ComplexSpectrogram<Scalar>& spec, Scalar beta) {
  require_beta(beta);
  ComplexSpectrogram<Scalar> out = spec;
  out.frames = power_compress(spec.frames, beta);
  return out;
}

template <typename Scalar>
ComplexSpectrogram<Scalar> power_decompress(const ComplexSpectrogram<Scalar>& spec, Scalar beta) {
  require_beta(beta);
  ComplexSpectrogram<Scalar> out = spec;
  out.frames = power_decompress(spec.frames, beta);
  return out;
}

// Slices one frame into overlapping bands. The result is band_width x (2 * n_bands):
// column 2k holds the real part of band k, column 2k+1 its imaginary part, row j is bin
// k * band_hop + j. Bins past the end of the frame are zero.
template <typename Derived>
Mat<typename Derived::RealScalar> reorient(const Eigen::MatrixBase<Derived>& frame, const ReorientConfig& cfg) {
  using R = typename Derived::RealScalar;
  const int n_bins = static_cast<int>(frame.size());
  cfg.validate(n_bins);
  const int n_bands = cfg.n_bands(n_bins);
  Mat<R> out = Mat<R>::Zero(cfg.band_width, 2 * n_bands);
  for (int k = 0; k < n_bands; ++k) {
    const int start = k * cfg.band_hop;
    for (int j = 0; j < cfg.band_width && start + j < n_bins; ++j) {
      out(j, 2 * k) = frame(start + j).real();
      out(j, 2 * k + 1) = frame(start + j).imag();
    }
  }
  return out;
}

template <typename Derived, typename MaskDerived>
auto apply_crm(const Eigen::MatrixBase<Derived>& noisy, const Eigen::MatrixBase<MaskDerived>& mask) {
  if (noisy.rows() != mask.rows() || noisy.cols() != mask.cols()) {
    throw ShapeError("complex ratio mask shape " + std::to_string(mask.rows()) + "x" + std::to_string(mask.cols()) +
                     " does not match spectrogram " + std::to_string(noisy.rows()) + "x" +
                     std::to_string(noisy.cols()));
  }
  return noisy.cwiseProduct(mask).eval();
}

template <typename Scalar>
ComplexSpectrogram<Scalar> apply_crm(const ComplexSpectrogram<Scalar>& noisy, const CMat<Scalar>& mask) {
  ComplexSpectrogram<Scalar> out = noisy;
  out.frames = apply_crm(noisy.frames, mask);
  return out;
}

// Reported in place of +inf when the estimate is an exact scaled copy of the reference.
inline constexpr double kSiSdrCapDb = 100.0;

// Scale-invariant SDR in dB, capped at kSiSdrCapDb. Empty optional when the reference or the
// estimate is identically zero.
template <typename Scalar>
std::optional<double> si_sdr(std::span<const Scalar> reference, std::span<const Scalar> estimate) {
  if (reference.size() != estimate.size() || reference.empty()) {
    throw ShapeError("si_sdr needs two signals of equal nonzero length");
  }
  double ref_energy = 0.0, est_energy = 0.0, dot = 0.0;
  for (std::size_t n = 0; n < reference.size(); ++n) {
    const double s = reference[n], e = estimate[n];
    ref_energy += s * s;
    est_energy += e * e;
    dot += s * e;
  }
  if (ref_energy == 0.0 || est_energy == 0.0) return std::nullopt;
  const double alpha = dot / ref_energy;
  double target = 0.0, noise = 0.0;
  for (std::size_t n = 0; n < reference.size(); ++n) {
    const double t = alpha * reference[n];
    const double d = t - estimate[n];
    target += t * t;
    noise += d * d;
  }
  if (noise == 0.0) return kSiSdrCapDb;
  if (target == 0.0) return -kSiSdrCapDb;
  return std::clamp(10.0 * std::log10(target / noise), -kSiSdrCapDb, kSiSdrCapDb);
}

}  // namespace fulc
