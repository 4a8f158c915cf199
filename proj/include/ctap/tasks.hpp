#ifndef CTAP_TASKS_HPP
#define CTAP_TASKS_HPP

// Inference pipelines over a frozen checkpoint: TTS, VC and ASR.

#include "ctap/audio_io.hpp"
#include "ctap/checkpoint.hpp"
#include "ctap/corpus.hpp"
#include "ctap/frontend.hpp"
#include "ctap/types.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace ctap {

struct TtsRequest {
  PhonemeSequence phonemes;  // durations supplied by the caller
  Waveform prompt_wav;
};

struct VcRequest {
  Waveform source_wav;
  Waveform prompt_wav;
};

// Deterministic inference prompt: the first kPromptFrames frames (padded).
PromptClip inference_prompt(const MelSpectrogram& mel);

// Phoneme embeddings + prompt latent mean -> decoder. T = sum of durations.
MelSpectrogram tts_infer(const Checkpoint& ckpt, const TtsRequest& request);

// Speech embeddings of the source + prompt latent mean -> decoder. T = source T_s.
MelSpectrogram vc_infer(const Checkpoint& ckpt, const VcRequest& request);

// Frame argmax of the phoneme head, collapsed into runs.
PhonemeSequence asr_infer(const Checkpoint& ckpt, const Waveform& waveform);
PhonemeSequence asr_infer_mel(const Checkpoint& ckpt, const MelSpectrogram& mel);
std::vector<int> asr_frame_predictions(const Checkpoint& ckpt, const MelSpectrogram& mel);

// Demo-only duration source: per-phoneme mean duration over a corpus. Not a
// substitute for a trained duration model.
class MeanDurationPredictor {
 public:
  static MeanDurationPredictor fit(const CorpusManifest& manifest);
  PhonemeSequence apply(const std::vector<int>& ids) const;

 private:
  std::map<int, int> mean_;
  int fallback_ = 1;
};

// Mel container: "CTAPMEL1", u32 rows, u32 cols, rows*cols f32 row-major,
// little-endian.
void write_mel(const std::filesystem::path& path, const Matrix<float>& mel);
Matrix<float> read_mel(const std::filesystem::path& path);

struct InferenceRequest {
  std::string id;
  std::string task;  // tts | vc | asr
  PhonemeSequence phonemes;
  std::string prompt_wav;
  std::string source_wav;
};

// Batch request file (JSON, "ctap-requests" version 1). Relative paths are
// resolved against the file's directory.
std::vector<InferenceRequest> load_requests(const std::filesystem::path& path);

}  // namespace ctap

#endif  // CTAP_TASKS_HPP
