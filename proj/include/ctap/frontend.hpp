#ifndef CTAP_FRONTEND_HPP
#define CTAP_FRONTEND_HPP

// Signal processing: log-mel extraction, autocorrelation pitch, prompt clipping.

#include "ctap/autodiff.hpp"
#include "ctap/types.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace ctap {

inline constexpr double kLogFloor = 1e-5;
inline constexpr double kMelMaxHz = 12000.0;
inline constexpr double kVoicingThreshold = 0.3;
inline constexpr double kMinPitchHz = 50.0;
inline constexpr double kMaxPitchHz = 600.0;

struct MelSpectrogram {
  Matrix<float> frames;  // T x 40, natural-log mel magnitudes
  int hop = kHop;
  int sample_rate = kSampleRate;
  // Frames [0, valid_frames) are real; the rest is log-floor padding.
  int valid_frames = 0;

  int num_frames() const { return static_cast<int>(frames.rows()); }
};

struct PitchContour {
  std::vector<double> f0;  // Hz per frame, 0 where unvoiced
};

struct PromptClip {
  MelSpectrogram mel;  // exactly kPromptFrames rows
  int start = 0;
};

// Log value of an all-silent frame.
inline float log_floor_value() { return static_cast<float>(std::log(kLogFloor)); }

// 40 x (kFrameSize/2 + 1) triangular filters on the HTK mel scale spanning
// 0-12 kHz, each scaled to unit area in Hz (2 / (f_hi - f_lo)).
const Matrix<double>& mel_filterbank();

// ceil(len / 240) frames; frame t is a Hann-windowed 960-sample window
// centred on sample t*240 + 120 (zero padded at the edges).
MelSpectrogram mel_spectrogram(std::span<const float> waveform, int sample_rate = kSampleRate);

// Normalized autocorrelation over 960-sample windows on the mel frame grid.
PitchContour extract_pitch(std::span<const float> waveform, int sample_rate = kSampleRate);

// Contiguous kPromptFrames window with a uniformly drawn start; shorter
// inputs are right-padded with the log floor.
// Waveform estimate from a log-mel spectrogram: pseudo-inverse of the
// filterbank to a magnitude spectrogram, then Griffin-Lim phase recovery.
// Output length is T * kHop samples.
std::vector<float> griffin_lim(const MelSpectrogram& mel, int iterations = 32, std::uint64_t seed = 0);

// Griffin-Lim from a (kFrameSize/2 + 1) x T linear magnitude spectrogram.
std::vector<float> griffin_lim(const Matrix<double>& magnitude, int iterations = 32, std::uint64_t seed = 0);

// Linear STFT magnitude, (kFrameSize/2 + 1) x T, same framing as the mel.
Matrix<double> stft_magnitude(std::span<const float> waveform);

// Non-negative least-squares inverse of the filterbank applied to exp(mel).
Matrix<double> mel_to_magnitude(const MelSpectrogram& mel);

PromptClip random_prompt_clip(const MelSpectrogram& mel, std::mt19937_64& rng);
PromptClip random_prompt_clip(const MelSpectrogram& mel, std::uint64_t seed);

}  // namespace ctap

#endif  // CTAP_FRONTEND_HPP
