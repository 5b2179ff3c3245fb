#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pcaudio {

struct WavData {
  std::vector<double> samples;  // mono, [-1, 1]
  std::uint32_t sample_rate = 0;
};

// Reads 16-bit PCM or 32-bit float RIFF/WAVE. Multichannel input is
// averaged to mono.
WavData read_wav(const std::string& path);

// Writes mono 16-bit PCM.
void write_wav(const std::string& path, const std::vector<double>& samples,
               std::uint32_t sample_rate);

}  // namespace pcaudio
