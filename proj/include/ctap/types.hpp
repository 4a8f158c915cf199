#ifndef CTAP_TYPES_HPP
#define CTAP_TYPES_HPP

#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctap {

inline constexpr int kSampleRate = 24000;
inline constexpr int kHop = 240;
inline constexpr int kFrameSize = 960;
inline constexpr int kMelBands = 40;
// 3 s of frames at 24 kHz with a 240-sample hop.
inline constexpr int kPromptFrames = 3 * kSampleRate / kHop;

// Phoneme ids with per-phoneme frame durations.
struct PhonemeSequence {
  std::vector<int> ids;
  std::vector<int> durations;

  int total_frames() const { return std::accumulate(durations.begin(), durations.end(), 0); }

  // Throws unless ids/durations have equal length and all durations >= 1.
  void validate() const {
    if (ids.size() != durations.size()) throw std::invalid_argument("phoneme ids and durations differ in length");
    for (int d : durations) {
      if (d < 1) throw std::invalid_argument("phoneme durations must be >= 1");
    }
  }

  // Phoneme id of every frame.
  std::vector<int> frame_targets() const {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(total_frames()));
    for (std::size_t i = 0; i < ids.size(); ++i) out.insert(out.end(), static_cast<std::size_t>(durations[i]), ids[i]);
    return out;
  }

  bool operator==(const PhonemeSequence&) const = default;
};

// Run-length encodes per-frame ids: [1,1,2,2,2] -> ids [1,2], durations [2,3].
inline PhonemeSequence collapse_runs(const std::vector<int>& frames) {
  PhonemeSequence out;
  for (int id : frames) {
    if (!out.ids.empty() && out.ids.back() == id) {
      ++out.durations.back();
    } else {
      out.ids.push_back(id);
      out.durations.push_back(1);
    }
  }
  return out;
}

}  // namespace ctap

#endif  // CTAP_TYPES_HPP
