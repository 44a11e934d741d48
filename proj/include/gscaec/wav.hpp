#pragma once

#include <filesystem>
#include <vector>

namespace gscaec {

struct WavData {
  int sample_rate = 0;
  std::vector<double> samples;  // scaled to [-1, 1)
};

/// Reads a mono 16-bit little-endian PCM RIFF/WAVE file. Anything else
/// (stereo, float, 24-bit, compressed) is rejected with ConfigError.
WavData read_wav_pcm16(const std::filesystem::path& path);

/// Writes mono 16-bit PCM; samples are clipped to [-1, 1].
void write_wav_pcm16(const std::filesystem::path& path, const std::vector<double>& samples,
                     int sample_rate);

}  // namespace gscaec
