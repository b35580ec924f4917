#pragma once

#include <string>
#include <vector>

#include "fulc/core.hpp"

namespace fulc {

struct WavError : Error {
  using Error::Error;
};

struct WavData {
  int sample_rate = 16000;
  std::vector<float> samples;  // normalised to [-1, 1)
};

// Reads a 16-bit PCM mono RIFF/WAVE file. Anything else (other bit depths, channel counts,
// compressed formats, or a rate other than expected_rate) is rejected with WavError.
WavData read_wav(const std::string& path, int expected_rate = 16000);
WavData parse_wav(const std::vector<unsigned char>& bytes, int expected_rate = 16000);

// Writes 16-bit PCM mono. Samples are clipped to [-1, 1] and rounded.
void write_wav(const std::string& path, const std::vector<float>& samples, int sample_rate = 16000);
std::vector<unsigned char> encode_wav(const std::vector<float>& samples, int sample_rate = 16000);

}  // namespace fulc
