#include "ctap/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cstdio>
#include <mutex>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace ctap {

using nlohmann::json;

namespace {

struct Formant {
  double freq;
  double gain;
  double bandwidth;
};

double frac(double x) { return x - std::floor(x); }

// Spectral envelope of a non-silence phoneme: three resonances whose
// positions are spread by low-discrepancy sequences.
std::array<Formant, 3> phoneme_formants(int id) {
  const double p = static_cast<double>(id);
  return {{
      {250.0 + 600.0 * frac(p * 0.6180339887), 1.0, 90.0},
      {900.0 + 1600.0 * frac(p * 0.4142135624 + 0.3), 0.7, 130.0},
      {2500.0 + 1200.0 * frac(p * 0.7320508076 + 0.1), 0.45, 180.0},
  }};
}

const std::vector<std::string>& base_symbols() {
  static const std::vector<std::string> s = {"sil", "a", "i", "u", "e", "o", "m", "n", "s",
                                             "t", "k", "p", "l", "r", "f", "h", "y", "w"};
  return s;
}

}  // namespace

void PhonemeInventory::validate() const {
  if (symbols.size() < 2) throw std::invalid_argument("phoneme inventory needs at least 2 symbols");
  std::set<std::string> seen(symbols.begin(), symbols.end());
  if (seen.size() != symbols.size()) throw std::invalid_argument("phoneme inventory labels must be unique");
  if (symbols.front() != "sil") throw std::invalid_argument("phoneme inventory index 0 must be silence");
}

PhonemeInventory PhonemeInventory::make(int size) {
  if (size < 2) throw std::invalid_argument("phoneme inventory size must be >= 2");
  PhonemeInventory inv;
  for (int i = 0; i < size; ++i) {
    inv.symbols.push_back(i < static_cast<int>(base_symbols().size()) ? base_symbols()[static_cast<std::size_t>(i)]
                                                                       : "p" + std::to_string(i));
  }
  return inv;
}

void SpeakerSpec::validate() const {
  if (!(base_f0 >= 60.0 && base_f0 <= 400.0)) throw std::invalid_argument("speaker base_f0 must be in [60, 400] Hz");
  if (!(formant_shift >= 0.7 && formant_shift <= 1.4)) {
    throw std::invalid_argument("speaker formant_shift must be in [0.7, 1.4]");
  }
  if (!(amplitude > 0.0)) throw std::invalid_argument("speaker amplitude must be positive");
}

std::string to_string(Partition p) {
  switch (p) {
    case Partition::kUnassigned:
      return "unassigned";
    case Partition::kPretrain:
      return "pretrain";
    case Partition::kFinetuneLabeled:
      return "finetune_labeled";
    case Partition::kSpeechOnly:
      return "speech_only";
    case Partition::kTest:
      return "test";
  }
  return "unassigned";
}

Partition parse_partition(const std::string& name) {
  for (Partition p : {Partition::kUnassigned, Partition::kPretrain, Partition::kFinetuneLabeled,
                      Partition::kSpeechOnly, Partition::kTest}) {
    if (to_string(p) == name) return p;
  }
  throw std::invalid_argument("unknown partition '" + name + "'");
}

std::vector<const Utterance*> CorpusManifest::partition(Partition p) const {
  std::vector<const Utterance*> out;
  for (const auto& u : utterances) {
    if (u.partition == p) out.push_back(&u);
  }
  return out;
}

std::vector<float> render_utterance(const SpeakerSpec& speaker, const PhonemeSequence& phonemes, int inventory_size,
                                    int sample_rate, int hop) {
  phonemes.validate();
  speaker.validate();
  for (int id : phonemes.ids) {
    if (id < 0 || id >= inventory_size) throw std::out_of_range("phoneme id outside inventory");
  }
  const std::size_t n = static_cast<std::size_t>(phonemes.total_frames()) * static_cast<std::size_t>(hop);
  std::vector<float> out(n, 0.0f);
  const double nyquist_guard = 0.48 * sample_rate;
  double phase = 0.0;
  std::size_t at = 0;
  std::vector<double> amps;
  for (std::size_t seg = 0; seg < phonemes.ids.size(); ++seg) {
    const int id = phonemes.ids[seg];
    const std::size_t len = static_cast<std::size_t>(phonemes.durations[seg]) * static_cast<std::size_t>(hop);
    const auto formants = phoneme_formants(id);
    for (std::size_t i = 0; i < len; ++i, ++at) {
      const double t = static_cast<double>(at) / sample_rate;
      const double f0 = speaker.base_f0 * (1.0 + 0.03 * std::sin(2.0 * M_PI * 1.5 * t));
      phase += 2.0 * M_PI * f0 / sample_rate;
      if (phase > 2.0 * M_PI) phase -= 2.0 * M_PI;
      if (id == 0) continue;
      const int harmonics = static_cast<int>(nyquist_guard / f0);
      amps.assign(static_cast<std::size_t>(harmonics), 0.0);
      double energy = 0.0;
      for (int h = 1; h <= harmonics; ++h) {
        double a = 0.0;
        for (const auto& f : formants) {
          const double centre = f.freq * speaker.formant_shift;
          const double bw = f.bandwidth * speaker.formant_shift;
          const double dist = h * f0 - centre;
          a += f.gain * std::exp(-dist * dist / (2.0 * bw * bw));
        }
        amps[static_cast<std::size_t>(h - 1)] = a;
        energy += a * a;
      }
      const double norm = 0.2 * speaker.amplitude / std::sqrt(std::max(energy, 1e-12));
      double v = 0.0;
      for (int h = 1; h <= harmonics; ++h) v += amps[static_cast<std::size_t>(h - 1)] * std::sin(h * phase);
      out[at] = static_cast<float>(v * norm);
    }
  }
  return out;
}

CorpusManifest synth_corpus(const CorpusConfig& config, const std::filesystem::path& out_dir) {
  if (config.n_speakers < 1) throw std::invalid_argument("n_speakers must be >= 1");
  if (config.n_utterances < 1) throw std::invalid_argument("n_utterances must be >= 1");
  if (config.inventory_size < 2) throw std::invalid_argument("phoneme inventory size must be >= 2");
  if (config.min_duration < 1 || config.max_duration < config.min_duration) {
    throw std::invalid_argument("invalid duration range");
  }
  if (config.min_phonemes < 1 || config.max_phonemes < config.min_phonemes) {
    throw std::invalid_argument("invalid phoneme count range");
  }

  CorpusManifest m;
  m.inventory = PhonemeInventory::make(config.inventory_size);
  m.root = out_dir;
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int s = 0; s < config.n_speakers; ++s) {
    SpeakerSpec spk;
    char name[32];
    std::snprintf(name, sizeof(name), "spk%02d", s);
    spk.speaker_id = name;
    spk.base_f0 = 90.0 + 170.0 * (s + unit(rng)) / config.n_speakers;
    spk.formant_shift = 0.85 + 0.35 * frac(s * 0.6180339887 + 0.5 * unit(rng));
    spk.amplitude = 0.6 + 0.4 * unit(rng);
    m.speakers.push_back(spk);
  }

  const bool has_speech_ids = config.inventory_size > 2;
  std::uniform_int_distribution<int> pick_len(config.min_phonemes, config.max_phonemes);
  std::uniform_int_distribution<int> pick_dur(config.min_duration, config.max_duration);
  std::uniform_int_distribution<int> pick_id(1, config.inventory_size - 1);
  std::set<std::vector<int>> seen;
  for (int u = 0; u < config.n_utterances; ++u) {
    Utterance utt;
    char name[32];
    std::snprintf(name, sizeof(name), "utt%04d", u);
    utt.id = name;
    utt.speaker = m.speakers[static_cast<std::size_t>(u % config.n_speakers)];
    utt.waveform_path = "wavs/" + utt.id + ".wav";
    // Distinct content per utterance where the inventory allows it.
    for (int attempt = 0; attempt < 1000; ++attempt) {
      PhonemeSequence seq;
      if (config.edge_silence) seq.ids.push_back(0);
      const int len = pick_len(rng);
      for (int i = 0; i < len; ++i) {
        int id = pick_id(rng);
        while (has_speech_ids && !seq.ids.empty() && seq.ids.back() == id) id = pick_id(rng);
        seq.ids.push_back(id);
      }
      if (config.edge_silence) seq.ids.push_back(0);
      for (std::size_t i = 0; i < seq.ids.size(); ++i) seq.durations.push_back(pick_dur(rng));
      utt.phonemes = seq;
      if (seen.insert(seq.ids).second) break;
    }
    m.utterances.push_back(utt);
  }

  std::filesystem::create_directories(out_dir / "wavs");
  // Rendering is a pure function of the utterance, so any schedule yields
  // the same bytes.
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < m.utterances.size(); i = next++) {
      try {
        const auto& utt = m.utterances[i];
        const auto wav = render_utterance(utt.speaker, utt.phonemes, config.inventory_size);
        write_wav(m.wav_path(utt), wav, kSampleRate);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned n_threads = std::max(1u, std::min(std::thread::hardware_concurrency(), 8u));
  std::vector<std::thread> threads;
  for (unsigned i = 1; i < n_threads; ++i) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);

  save_manifest(m, out_dir / "manifest.json");
  return m;
}

CorpusManifest split_corpus(const CorpusManifest& manifest, const std::map<Partition, double>& ratios,
                            std::uint64_t seed) {
  double sum = 0.0;
  for (const auto& [p, f] : ratios) {
    if (!(f >= 0.0 && f <= 1.0)) throw std::invalid_argument("partition fraction outside [0, 1]");
    if (p == Partition::kUnassigned) throw std::invalid_argument("cannot assign to the unassigned partition");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("partition fractions must sum to 1");

  const std::size_t n = manifest.utterances.size();
  std::vector<std::pair<Partition, std::size_t>> counts;
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (const auto& [p, f] : ratios) {
    const double exact = f * static_cast<double>(n);
    const auto whole = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainders.emplace_back(-(exact - static_cast<double>(whole)), counts.size());
    counts.emplace_back(p, whole);
    assigned += whole;
  }
  std::stable_sort(remainders.begin(), remainders.end());
  for (std::size_t i = 0; assigned < n && i < remainders.size(); ++i, ++assigned) ++counts[remainders[i].second].second;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  CorpusManifest out = manifest;
  std::size_t at = 0;
  for (const auto& [p, c] : counts) {
    for (std::size_t k = 0; k < c && at < n; ++k) out.utterances[order[at++]].partition = p;
  }
  return out;
}

std::string manifest_to_json(const CorpusManifest& m) {
  json j;
  j["format"] = "ctap-corpus-manifest";
  j["version"] = m.version;
  j["sample_rate"] = kSampleRate;
  j["hop"] = kHop;
  j["inventory"] = m.inventory.symbols;
  j["speakers"] = json::array();
  for (const auto& s : m.speakers) {
    j["speakers"].push_back(
        {{"id", s.speaker_id}, {"base_f0", s.base_f0}, {"formant_shift", s.formant_shift}, {"amplitude", s.amplitude}});
  }
  j["utterances"] = json::array();
  for (const auto& u : m.utterances) {
    j["utterances"].push_back({{"id", u.id},
                               {"speaker", u.speaker.speaker_id},
                               {"wav", u.waveform_path},
                               {"sample_rate", u.sample_rate},
                               {"phonemes", u.phonemes.ids},
                               {"durations", u.phonemes.durations},
                               {"partition", to_string(u.partition)}});
  }
  return j.dump(2) + "\n";
}

CorpusManifest manifest_from_json(const std::string& text) {
  CorpusManifest m;
  try {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != "ctap-corpus-manifest") throw std::invalid_argument("not a corpus manifest");
    m.version = j.at("version").get<int>();
    if (m.version != kManifestVersion) throw std::invalid_argument("unsupported manifest version");
    m.inventory.symbols = j.at("inventory").get<std::vector<std::string>>();
    m.inventory.validate();
    std::map<std::string, SpeakerSpec> by_id;
    for (const auto& s : j.at("speakers")) {
      SpeakerSpec spk;
      spk.speaker_id = s.at("id").get<std::string>();
      spk.base_f0 = s.at("base_f0").get<double>();
      spk.formant_shift = s.at("formant_shift").get<double>();
      spk.amplitude = s.at("amplitude").get<double>();
      spk.validate();
      by_id[spk.speaker_id] = spk;
      m.speakers.push_back(spk);
    }
    std::set<std::string> ids;
    for (const auto& ju : j.at("utterances")) {
      Utterance u;
      u.id = ju.at("id").get<std::string>();
      if (!ids.insert(u.id).second) throw std::invalid_argument("duplicate utterance id " + u.id);
      const auto spk = by_id.find(ju.at("speaker").get<std::string>());
      if (spk == by_id.end()) throw std::invalid_argument("utterance " + u.id + " references an unknown speaker");
      u.speaker = spk->second;
      u.waveform_path = ju.at("wav").get<std::string>();
      u.sample_rate = ju.at("sample_rate").get<int>();
      u.phonemes.ids = ju.at("phonemes").get<std::vector<int>>();
      u.phonemes.durations = ju.at("durations").get<std::vector<int>>();
      u.phonemes.validate();
      for (int id : u.phonemes.ids) {
        if (id < 0 || id >= m.inventory.size()) throw std::invalid_argument("utterance " + u.id + ": phoneme id out of range");
      }
      u.partition = parse_partition(ju.at("partition").get<std::string>());
      m.utterances.push_back(std::move(u));
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << manifest_to_json(manifest);
}

CorpusManifest load_manifest(const std::filesystem::path& path, bool check_files) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  CorpusManifest m = manifest_from_json(ss.str());
  m.root = path.parent_path();
  if (check_files) {
    for (const auto& u : m.utterances) {
      if (!std::filesystem::exists(m.wav_path(u))) throw IoError("missing waveform " + m.wav_path(u).string());
    }
  }
  return m;
}

Waveform load_waveform(const CorpusManifest& manifest, const Utterance& u) {
  Waveform w = read_wav(manifest.wav_path(u));
  if (w.sample_rate != u.sample_rate) throw IoError(u.id + ": sample rate differs from manifest");
  return w;
}

}  // namespace ctap
