#include <doctest.h>

#include <random>

#include "fulc/dsp.hpp"
#include "oracles.hpp"

using namespace fulc;

namespace {

std::vector<double> noise(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 0.3);
  std::vector<double> x(n);
  for (auto& v : x) v = d(rng);
  return x;
}

std::vector<double> sine(std::size_t n, double hz, double rate = 16000.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(2.0 * std::numbers::pi * hz * double(i) / rate);
  return x;
}

}  // namespace

TEST_CASE("stft config defaults") {
  StftConfig cfg;
  CHECK(cfg.n_bins() == 257);
  CHECK(cfg.bin_hz() == doctest::Approx(31.25));
  CHECK(cfg.hop_seconds() == doctest::Approx(0.016));
  CHECK(cfg.frame_count(16000) == 61);
  CHECK(cfg.frame_count(512) == 1);
  CHECK(cfg.frame_count(0) == 0);
  cfg.hop_len = 600;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("stft of zeros and empty input") {
  const std::vector<double> z(512, 0.0);
  const auto spec = stft<double>(z);
  REQUIRE(spec.num_frames() == 1);
  CHECK(spec.n_bins() == 257);
  CHECK(spec.frames.cwiseAbs().maxCoeff() == 0.0);
  CHECK(stft<double>(std::vector<double>{}).num_frames() == 0);
  CHECK(istft(stft<double>(std::vector<double>{})).empty());
}

TEST_CASE("stft frame matches direct DFT of the windowed segment") {
  const auto x = noise(2000, 3);
  const auto spec = stft<double>(x);
  for (Index t : {Index(0), Index(3), spec.num_frames() - 1}) {
    std::vector<double> seg(512, 0.0);
    for (std::size_t n = 0; n < 512; ++n) {
      const std::size_t i = std::size_t(t) * 256 + n;
      if (i < x.size()) seg[n] = x[i] * oracle::hann(n, 512);
    }
    const auto ref = oracle::dft_half(seg);
    double err = 0;
    for (std::size_t k = 0; k < ref.size(); ++k) err = std::max(err, std::abs(ref[k] - spec.frames(t, Index(k))));
    CHECK(err < 1e-9);
  }
}

TEST_CASE("1 kHz sine peaks at bin 32") {
  const auto spec = stft<double>(sine(16000, 1000.0));
  CHECK(spec.num_frames() == 61);
  for (Index t = 0; t < spec.num_frames(); ++t) {
    Index peak;
    spec.frames.row(t).cwiseAbs().maxCoeff(&peak);
    CHECK(peak == 32);
  }
}

TEST_CASE("istft round trip exceeds 50 dB") {
  const auto x = noise(16000, 11);
  const auto y = istft(stft<double>(x));
  REQUIRE(y.size() == x.size());
  double sig = 0, err = 0;
  for (std::size_t n = 512; n + 512 < x.size(); ++n) {
    sig += x[n] * x[n];
    err += (x[n] - y[n]) * (x[n] - y[n]);
  }
  CHECK(10 * std::log10(sig / err) > 50.0);
}

TEST_CASE("istft of zeros and of a single windowed frame") {
  ComplexSpectrogram<double> spec;
  spec.frames = CMat<double>::Zero(5, 257);
  spec.signal_length = 1536;
  const auto y = istft(spec);
  CHECK(y.size() == 1536);
  CHECK(std::all_of(y.begin(), y.end(), [](double v) { return v == 0.0; }));

  const auto s = sine(512, 440.0);
  std::vector<double> windowed(512);
  for (std::size_t n = 0; n < 512; ++n) windowed[n] = s[n] * oracle::hann(n, 512);
  const auto X = oracle::dft_half(windowed);
  ComplexSpectrogram<double> one;
  one.frames.resize(1, 257);
  for (Index k = 0; k < 257; ++k) one.frames(0, k) = X[std::size_t(k)];
  one.signal_length = 512;
  const auto back = oracle::idft_half(X, 512);
  const auto got = istft(one);
  // with one frame the window sum is w^2, so synthesis returns the unwindowed segment
  for (std::size_t n = 16; n + 16 < 512; ++n) {
    CHECK(got[n] == doctest::Approx(back[n] / oracle::hann(n, 512)).epsilon(1e-8));
    CHECK(got[n] == doctest::Approx(s[n]).epsilon(1e-8));
  }
}

TEST_CASE("power compression hand values and round trip") {
  CMat<double> c(1, 3);
  c << std::complex<double>(4, 0), std::complex<double>(0, 0), std::complex<double>(-3, 4);
  const CMat<double> half = power_compress(c, 0.5);
  CHECK(half(0, 0).real() == doctest::Approx(2.0));
  CHECK(half(0, 0).imag() == 0.0);
  CHECK(half(0, 1) == std::complex<double>(0, 0));
  CHECK(std::abs(half(0, 2)) == doctest::Approx(std::sqrt(5.0)));
  CMat<double> two(1, 1);
  two << std::complex<double>(2, 0);
  CHECK(power_decompress(two, 0.5)(0, 0).real() == doctest::Approx(4.0));
  CHECK((power_compress(c, 1.0) - c).cwiseAbs().maxCoeff() < 1e-15);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> d(0.0, 2.0);
  CMat<double> r(20, 257);
  for (Index i = 0; i < r.size(); ++i) r.data()[i] = {d(rng), d(rng)};
  for (double beta : {0.1, 0.3, 0.5, 0.77, 1.0}) {
    const CMat<double> comp = power_compress(r, beta);
    const CMat<double> back = power_decompress(comp, beta);
    CHECK(((back - r).cwiseAbs().array() / r.cwiseAbs().array()).maxCoeff() < 1e-6);
    double phase_err = 0;
    for (Index i = 0; i < r.size(); ++i) phase_err = std::max(phase_err, std::abs(std::arg(comp.data()[i]) - std::arg(r.data()[i])));
    CHECK(phase_err < 1e-9);
  }
  ComplexSpectrogram<double> spec{r, {}, 0};
  CHECK_THROWS_AS(power_compress(spec, 0.0), ConfigError);
  CHECK_THROWS_AS(power_compress(spec, 1.5), ConfigError);
}

TEST_CASE("reorient band layout") {
  ReorientConfig cfg;
  CHECK(cfg.n_bands(257) == 8);
  const auto derived = ReorientConfig::from_resolution(1500.0, 0.33, StftConfig{});
  CHECK(derived.band_width == 48);
  CHECK(derived.band_hop == 32);

  CVec<double> frame(257);
  for (Index k = 0; k < 257; ++k) frame[k] = {double(k + 1), -double(k + 1)};
  const Mat<double> bands = reorient(frame, cfg);
  REQUIRE(bands.rows() == 48);
  REQUIRE(bands.cols() == 16);
  std::vector<int> covered(257, 0);
  for (int b = 0; b < 8; ++b) {
    CHECK(bands(0, 2 * b) == double(b * 32 + 1));
    for (int j = 0; j < 48; ++j) {
      const int bin = b * 32 + j;
      if (bin < 257) {
        ++covered[bin];
        CHECK(bands(j, 2 * b) == frame[bin].real());
        CHECK(bands(j, 2 * b + 1) == frame[bin].imag());
      }
    }
  }
  CHECK(std::all_of(covered.begin(), covered.end(), [](int c) { return c >= 1; }));
  // last band: bins 224..256 real, 15 zero-padded rows
  CHECK(bands.block(33, 14, 15, 2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(bands(32, 14) != 0.0);

  ReorientConfig whole{257, 257};
  const Mat<double> single = reorient(frame, whole);
  CHECK(single.cols() == 2);
  CHECK(single.col(0) == frame.real());
  CHECK(reorient(CVec<double>::Zero(257).eval(), cfg).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(reorient(frame, ReorientConfig{48, 0}), ConfigError);
  CHECK_THROWS_AS(reorient(frame, ReorientConfig{300, 32}), ConfigError);
  CHECK_THROWS_AS(reorient(frame, ReorientConfig{32, 48}), ConfigError);
}

TEST_CASE("complex ratio mask") {
  CMat<double> noisy(2, 3);
  noisy << std::complex<double>(1, 1), std::complex<double>(0.3, -2), std::complex<double>(1e-9, 7),
      std::complex<double>(-5, 0.25), std::complex<double>(0, 0), std::complex<double>(3, 3);
  const CMat<double> unit = CMat<double>::Constant(2, 3, {1.0, 0.0});
  CHECK(apply_crm(noisy, unit) == noisy);
  CHECK(apply_crm(noisy, CMat<double>::Zero(2, 3)).cwiseAbs().maxCoeff() == 0.0);
  CMat<double> m = unit;
  m(0, 0) = {0.5, -0.5};
  const CMat<double> out = apply_crm(noisy, m);
  CHECK(out(0, 0) == std::complex<double>(1, 0));
  CHECK_THROWS_AS(apply_crm(noisy, CMat<double>::Zero(3, 2)), ShapeError);
}

TEST_CASE("si_sdr") {
  const std::vector<double> ref{1.0, 0.0};
  const std::vector<double> est{1.0, 1.0};
  CHECK(si_sdr<double>(ref, est).value() == doctest::Approx(0.0).epsilon(1e-12));

  const auto s = noise(4000, 2);
  CHECK(si_sdr<double>(s, s).value() == kSiSdrCapDb);
  std::vector<double> doubled(s);
  for (auto& v : doubled) v *= 2.0;
  CHECK(si_sdr<double>(s, doubled).value() == kSiSdrCapDb);

  auto noisy = s;
  const auto n = noise(4000, 9);
  for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] += 0.5 * n[i];
  const double base = si_sdr<double>(s, noisy).value();
  for (double a : {0.01, 0.5, 3.0, 1e4}) {
    auto scaled = noisy;
    for (auto& v : scaled) v *= a;
    CHECK(std::abs(si_sdr<double>(s, scaled).value() - base) < 1e-9);
  }
  const std::vector<double> zeros(4000, 0.0);
  CHECK_FALSE(si_sdr<double>(zeros, s).has_value());
  CHECK_FALSE(si_sdr<double>(s, zeros).has_value());
  CHECK_THROWS_AS(si_sdr<double>(s, ref), ShapeError);
}
