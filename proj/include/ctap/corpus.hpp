#ifndef CTAP_CORPUS_HPP
#define CTAP_CORPUS_HPP

// Synthetic paired speech/phoneme corpus. Phoneme identity decides the
// spectral envelope (formant peaks); the speaker decides pitch, formant
// scaling and gain, so content and speaker factors are independent by
// construction.

#include "ctap/audio_io.hpp"
#include "ctap/types.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace ctap {

inline constexpr int kManifestVersion = 1;

struct PhonemeInventory {
  std::vector<std::string> symbols;  // symbols[0] is silence

  int size() const { return static_cast<int>(symbols.size()); }
  void validate() const;
  static PhonemeInventory make(int size);
};

struct SpeakerSpec {
  std::string speaker_id;
  double base_f0 = 120.0;       // Hz, in [60, 400]
  double formant_shift = 1.0;   // in [0.7, 1.4]
  double amplitude = 0.5;       // linear gain

  void validate() const;
  bool operator==(const SpeakerSpec&) const = default;
};

enum class Partition { kUnassigned, kPretrain, kFinetuneLabeled, kSpeechOnly, kTest };

std::string to_string(Partition p);
Partition parse_partition(const std::string& name);

struct Utterance {
  std::string id;
  SpeakerSpec speaker;
  PhonemeSequence phonemes;
  std::string waveform_path;  // relative to the manifest directory
  int sample_rate = kSampleRate;
  Partition partition = Partition::kUnassigned;

  bool operator==(const Utterance&) const = default;
};

struct CorpusManifest {
  int version = kManifestVersion;
  PhonemeInventory inventory;
  std::vector<SpeakerSpec> speakers;
  std::vector<Utterance> utterances;
  std::filesystem::path root;  // directory that relative paths resolve against; not serialized

  std::filesystem::path wav_path(const Utterance& u) const { return root / u.waveform_path; }
  std::vector<const Utterance*> partition(Partition p) const;
};

struct CorpusConfig {
  int n_speakers = 2;
  int n_utterances = 10;
  int inventory_size = 6;
  int min_duration = 3;
  int max_duration = 10;
  int min_phonemes = 4;
  int max_phonemes = 6;
  bool edge_silence = true;
  std::uint64_t seed = 1;
};

// Deterministic render of one utterance: exactly total_frames() * hop samples.
std::vector<float> render_utterance(const SpeakerSpec& speaker, const PhonemeSequence& phonemes, int inventory_size,
                                    int sample_rate = kSampleRate, int hop = kHop);

// Writes WAV files plus manifest.json into out_dir. Identical seeds give
// byte-identical output.
CorpusManifest synth_corpus(const CorpusConfig& config, const std::filesystem::path& out_dir);

// Disjoint utterance-level assignment. Fractions must lie in [0, 1] and sum
// to 1; counts are floor(fraction * N) with leftovers handed out by largest
// remainder.
CorpusManifest split_corpus(const CorpusManifest& manifest, const std::map<Partition, double>& ratios,
                            std::uint64_t seed);

std::string manifest_to_json(const CorpusManifest& manifest);
CorpusManifest manifest_from_json(const std::string& text);

void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& path);
// Loads and validates; root becomes the manifest's directory. With
// check_files, every referenced WAV must exist.
CorpusManifest load_manifest(const std::filesystem::path& path, bool check_files = true);

Waveform load_waveform(const CorpusManifest& manifest, const Utterance& u);

}  // namespace ctap

#endif  // CTAP_CORPUS_HPP
