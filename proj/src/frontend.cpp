#include "ctap/frontend.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

namespace ctap {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

void check_input(std::span<const float> waveform, int sample_rate) {
  if (sample_rate != kSampleRate) {
    throw std::invalid_argument("expected " + std::to_string(kSampleRate) + " Hz audio, got " +
                                std::to_string(sample_rate));
  }
  if (waveform.empty()) throw std::invalid_argument("empty waveform");
}

int frame_count(std::size_t samples) { return static_cast<int>((samples + kHop - 1) / kHop); }

// Copies the analysis window of frame t (zero outside the signal).
void fill_window(std::span<const float> x, int t, std::vector<double>& out) {
  out.assign(kFrameSize, 0.0);
  const long start = static_cast<long>(t) * kHop + kHop / 2 - kFrameSize / 2;
  for (int n = 0; n < kFrameSize; ++n) {
    const long i = start + n;
    if (i >= 0 && i < static_cast<long>(x.size())) out[static_cast<std::size_t>(n)] = x[static_cast<std::size_t>(i)];
  }
}

const std::vector<double>& hann_window() {
  static const std::vector<double> w = [] {
    std::vector<double> v(kFrameSize);
    for (int n = 0; n < kFrameSize; ++n) v[n] = 0.5 - 0.5 * std::cos(2.0 * M_PI * n / kFrameSize);
    return v;
  }();
  return w;
}

}  // namespace

const Matrix<double>& mel_filterbank() {
  static const Matrix<double> fb = [] {
    const int bins = kFrameSize / 2 + 1;
    Matrix<double> w = Matrix<double>::Zero(kMelBands, bins);
    const double lo = hz_to_mel(0.0);
    const double hi = hz_to_mel(kMelMaxHz);
    std::vector<double> edges(kMelBands + 2);
    for (int i = 0; i < kMelBands + 2; ++i) edges[i] = mel_to_hz(lo + (hi - lo) * i / (kMelBands + 1));
    for (int m = 0; m < kMelBands; ++m) {
      const double f0 = edges[m];
      const double f1 = edges[m + 1];
      const double f2 = edges[m + 2];
      const double area = 2.0 / (f2 - f0);
      for (int k = 0; k < bins; ++k) {
        const double f = static_cast<double>(k) * kSampleRate / kFrameSize;
        double v = 0.0;
        if (f > f0 && f < f1) {
          v = (f - f0) / (f1 - f0);
        } else if (f >= f1 && f < f2) {
          v = (f2 - f) / (f2 - f1);
        }
        w(m, k) = v * area;
      }
    }
    return w;
  }();
  return fb;
}

MelSpectrogram mel_spectrogram(std::span<const float> waveform, int sample_rate) {
  check_input(waveform, sample_rate);
  const std::vector<double>& hann = hann_window();
  const Matrix<double>& fb = mel_filterbank();
  const int T = frame_count(waveform.size());
  MelSpectrogram mel;
  mel.frames.resize(T, kMelBands);
  mel.valid_frames = T;

  Eigen::FFT<double> fft;
  std::vector<double> frame;
  std::vector<std::complex<double>> spec;
  Eigen::VectorXd mag(kFrameSize / 2 + 1);
  for (int t = 0; t < T; ++t) {
    fill_window(waveform, t, frame);
    for (int n = 0; n < kFrameSize; ++n) frame[n] *= hann[n];
    fft.fwd(spec, frame);
    for (int k = 0; k <= kFrameSize / 2; ++k) mag(k) = std::abs(spec[static_cast<std::size_t>(k)]);
    const Eigen::VectorXd m = fb * mag;
    for (int b = 0; b < kMelBands; ++b) mel.frames(t, b) = static_cast<float>(std::log(std::max(m(b), kLogFloor)));
  }
  return mel;
}

PitchContour extract_pitch(std::span<const float> waveform, int sample_rate) {
  check_input(waveform, sample_rate);
  const int T = frame_count(waveform.size());
  const int min_lag = static_cast<int>(std::ceil(sample_rate / kMaxPitchHz));
  const int max_lag = static_cast<int>(std::floor(sample_rate / kMinPitchHz));
  PitchContour out;
  out.f0.assign(static_cast<std::size_t>(T), 0.0);
  std::vector<double> x;
  std::vector<double> r(static_cast<std::size_t>(max_lag + 2), 0.0);
  for (int t = 0; t < T; ++t) {
    fill_window(waveform, t, x);
    double energy = 0.0;
    for (double v : x) energy += v * v;
    if (energy < 1e-8) continue;

    double best = -1.0;
    for (int lag = min_lag - 1; lag <= max_lag + 1; ++lag) {
      double num = 0.0;
      double e0 = 0.0;
      double e1 = 0.0;
      for (int n = 0; n + lag < kFrameSize; ++n) {
        num += x[n] * x[n + lag];
        e0 += x[n] * x[n];
        e1 += x[n + lag] * x[n + lag];
      }
      const double den = std::sqrt(e0 * e1);
      r[static_cast<std::size_t>(lag)] = den > 1e-12 ? num / den : 0.0;
      if (lag >= min_lag && lag <= max_lag) best = std::max(best, r[static_cast<std::size_t>(lag)]);
    }
    if (best < kVoicingThreshold) continue;

    // Earliest local peak close to the global maximum avoids sub-octave picks.
    int lag = -1;
    for (int l = min_lag; l <= max_lag; ++l) {
      const double v = r[static_cast<std::size_t>(l)];
      if (v >= 0.9 * best && v >= r[static_cast<std::size_t>(l - 1)] && v >= r[static_cast<std::size_t>(l + 1)]) {
        lag = l;
        break;
      }
    }
    if (lag < 0) continue;
    const double a = r[static_cast<std::size_t>(lag - 1)];
    const double b = r[static_cast<std::size_t>(lag)];
    const double c = r[static_cast<std::size_t>(lag + 1)];
    const double den = a - 2.0 * b + c;
    const double offset = std::abs(den) > 1e-12 ? std::clamp(0.5 * (a - c) / den, -0.5, 0.5) : 0.0;
    const double f0 = sample_rate / (lag + offset);
    out.f0[static_cast<std::size_t>(t)] = std::clamp(f0, kMinPitchHz, kMaxPitchHz);
  }
  return out;
}

Matrix<double> stft_magnitude(std::span<const float> waveform) {
  if (waveform.empty()) throw std::invalid_argument("empty waveform");
  const int T = frame_count(waveform.size());
  Matrix<double> mag(kFrameSize / 2 + 1, T);
  Eigen::FFT<double> fft;
  std::vector<double> frame;
  std::vector<std::complex<double>> spec;
  for (int t = 0; t < T; ++t) {
    fill_window(waveform, t, frame);
    for (int n = 0; n < kFrameSize; ++n) frame[n] *= hann_window()[n];
    fft.fwd(spec, frame);
    for (int k = 0; k <= kFrameSize / 2; ++k) mag(k, t) = std::abs(spec[static_cast<std::size_t>(k)]);
  }
  return mag;
}

Matrix<double> mel_to_magnitude(const MelSpectrogram& mel) {
  // Non-negative least squares by multiplicative updates.
  const Matrix<double>& fb = mel_filterbank();
  const Matrix<double> target = mel.frames.cast<double>().array().exp().matrix().transpose();
  const Matrix<double> gram = fb.transpose() * fb;
  const Matrix<double> rhs = fb.transpose() * target;
  Matrix<double> mag = rhs.cwiseMax(1e-12);
  for (int i = 0; i < 200; ++i) mag = mag.cwiseProduct(rhs.cwiseQuotient((gram * mag).cwiseMax(1e-30)));
  return mag;
}

std::vector<float> griffin_lim(const MelSpectrogram& mel, int iterations, std::uint64_t seed) {
  return griffin_lim(mel_to_magnitude(mel), iterations, seed);
}

std::vector<float> griffin_lim(const Matrix<double>& mag, int iterations, std::uint64_t seed) {
  const int T = static_cast<int>(mag.cols());
  if (T == 0) return {};
  const int bins = kFrameSize / 2 + 1;
  if (mag.rows() != bins) throw std::invalid_argument("griffin_lim: magnitude must have kFrameSize/2+1 rows");

  const std::vector<double>& hann = hann_window();
  const long length = static_cast<long>(T) * kHop;
  std::vector<double> norm(static_cast<std::size_t>(length), 0.0);
  for (int t = 0; t < T; ++t) {
    const long start = static_cast<long>(t) * kHop + kHop / 2 - kFrameSize / 2;
    for (int n = 0; n < kFrameSize; ++n) {
      const long i = start + n;
      if (i >= 0 && i < length) norm[static_cast<std::size_t>(i)] += hann[n] * hann[n];
    }
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase_dist(-M_PI, M_PI);
  std::vector<std::vector<std::complex<double>>> phase(static_cast<std::size_t>(T),
                                                       std::vector<std::complex<double>>(bins));
  for (auto& frame : phase) {
    for (auto& p : frame) p = std::polar(1.0, phase_dist(rng));
  }

  Eigen::FFT<double> fft;
  std::vector<double> signal(static_cast<std::size_t>(length));
  std::vector<std::complex<double>> spec(kFrameSize);
  std::vector<double> frame;
  std::vector<float> x(static_cast<std::size_t>(length));
  for (int it = 0; it <= iterations; ++it) {
    std::fill(signal.begin(), signal.end(), 0.0);
    for (int t = 0; t < T; ++t) {
      for (int k = 0; k < bins; ++k) spec[static_cast<std::size_t>(k)] = mag(k, t) * phase[static_cast<std::size_t>(t)][k];
      for (int k = bins; k < kFrameSize; ++k) spec[static_cast<std::size_t>(k)] = std::conj(spec[static_cast<std::size_t>(kFrameSize - k)]);
      fft.inv(frame, spec);
      const long start = static_cast<long>(t) * kHop + kHop / 2 - kFrameSize / 2;
      for (int n = 0; n < kFrameSize; ++n) {
        const long i = start + n;
        if (i >= 0 && i < length) signal[static_cast<std::size_t>(i)] += frame[static_cast<std::size_t>(n)] * hann[n];
      }
    }
    for (long i = 0; i < length; ++i) {
      const double w = norm[static_cast<std::size_t>(i)];
      x[static_cast<std::size_t>(i)] = static_cast<float>(w > 1e-8 ? signal[static_cast<std::size_t>(i)] / w : 0.0);
    }
    if (it == iterations) break;
    std::vector<double> windowed;
    for (int t = 0; t < T; ++t) {
      fill_window(x, t, windowed);
      for (int n = 0; n < kFrameSize; ++n) windowed[static_cast<std::size_t>(n)] *= hann[n];
      fft.fwd(spec, windowed);
      for (int k = 0; k < bins; ++k) {
        const double a = std::abs(spec[static_cast<std::size_t>(k)]);
        phase[static_cast<std::size_t>(t)][k] = a > 1e-12 ? spec[static_cast<std::size_t>(k)] / a : std::complex<double>(1.0, 0.0);
      }
    }
  }
  return x;
}

PromptClip random_prompt_clip(const MelSpectrogram& mel, std::mt19937_64& rng) {
  const int T = mel.num_frames();
  PromptClip clip;
  clip.mel.hop = mel.hop;
  clip.mel.sample_rate = mel.sample_rate;
  clip.mel.frames = Matrix<float>::Constant(kPromptFrames, kMelBands, log_floor_value());
  if (T > kPromptFrames) {
    std::uniform_int_distribution<int> pick(0, T - kPromptFrames);
    clip.start = pick(rng);
  }
  const int real = std::min(kPromptFrames, std::max(0, std::min(T, mel.valid_frames > 0 ? mel.valid_frames : T) - clip.start));
  if (real > 0) clip.mel.frames.topRows(real) = mel.frames.middleRows(clip.start, real);
  clip.mel.valid_frames = real;
  return clip;
}

PromptClip random_prompt_clip(const MelSpectrogram& mel, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return random_prompt_clip(mel, rng);
}

}  // namespace ctap
