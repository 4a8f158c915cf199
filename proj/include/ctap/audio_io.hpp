#ifndef CTAP_AUDIO_IO_HPP
#define CTAP_AUDIO_IO_HPP

#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

namespace ctap {

struct Waveform {
  std::vector<float> samples;  // in [-1, 1]
  int sample_rate = 0;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 16-bit PCM mono RIFF/WAVE. Samples are clipped to [-1, 1] and rounded.
void write_wav(const std::filesystem::path& path, std::span<const float> samples, int sample_rate);
Waveform read_wav(const std::filesystem::path& path);

// Round-trips a sample through 16-bit quantization.
float quantize_pcm16(float x);

}  // namespace ctap

#endif  // CTAP_AUDIO_IO_HPP
