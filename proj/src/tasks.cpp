#include "ctap/tasks.hpp"

#include "ctap/model.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <sstream>

namespace ctap {

namespace {

MelSpectrogram checked_mel(const Waveform& w, const char* what) {
  if (w.samples.empty()) throw std::invalid_argument(std::string(what) + " waveform is empty");
  return mel_spectrogram(w.samples, w.sample_rate);
}

}  // namespace

PromptClip inference_prompt(const MelSpectrogram& mel) {
  PromptClip clip;
  clip.mel.frames = Matrix<float>::Constant(kPromptFrames, kMelBands, log_floor_value());
  const int real = std::min(kPromptFrames, mel.valid_frames > 0 ? mel.valid_frames : mel.num_frames());
  clip.mel.frames.topRows(real) = mel.frames.topRows(real);
  clip.mel.valid_frames = real;
  return clip;
}

MelSpectrogram tts_infer(const Checkpoint& ckpt, const TtsRequest& request) {
  request.phonemes.validate();
  const auto clip = inference_prompt(checked_mel(request.prompt_wav, "prompt"));
  const auto latent = encode_prompt(clip.mel, ckpt.params, ckpt.model, Mode::kInfer, 0);
  const auto p = encode_phonemes(request.phonemes, ckpt.params, ckpt.model);
  return decode(p, latent.g, ckpt.params, ckpt.model);
}

MelSpectrogram vc_infer(const Checkpoint& ckpt, const VcRequest& request) {
  const auto source = checked_mel(request.source_wav, "source");
  const auto clip = inference_prompt(checked_mel(request.prompt_wav, "prompt"));
  const auto latent = encode_prompt(clip.mel, ckpt.params, ckpt.model, Mode::kInfer, 0);
  return decode(encode_speech(source, ckpt.params, ckpt.model), latent.g, ckpt.params, ckpt.model);
}

std::vector<int> asr_frame_predictions(const Checkpoint& ckpt, const MelSpectrogram& mel) {
  const Matrix<float> logits = decode_phonemes(encode_speech(mel, ckpt.params, ckpt.model), ckpt.params, ckpt.model);
  std::vector<int> frames(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    Eigen::Index best = 0;
    logits.row(t).maxCoeff(&best);
    frames[static_cast<std::size_t>(t)] = static_cast<int>(best);
  }
  return frames;
}

PhonemeSequence asr_infer_mel(const Checkpoint& ckpt, const MelSpectrogram& mel) {
  return collapse_runs(asr_frame_predictions(ckpt, mel));
}

PhonemeSequence asr_infer(const Checkpoint& ckpt, const Waveform& waveform) {
  return asr_infer_mel(ckpt, checked_mel(waveform, "input"));
}

MeanDurationPredictor MeanDurationPredictor::fit(const CorpusManifest& manifest) {
  std::map<int, std::pair<long, long>> acc;
  long total = 0;
  long count = 0;
  for (const auto& u : manifest.utterances) {
    for (std::size_t i = 0; i < u.phonemes.ids.size(); ++i) {
      acc[u.phonemes.ids[i]].first += u.phonemes.durations[i];
      acc[u.phonemes.ids[i]].second += 1;
      total += u.phonemes.durations[i];
      ++count;
    }
  }
  MeanDurationPredictor p;
  for (const auto& [id, sc] : acc) p.mean_[id] = static_cast<int>(std::lround(double(sc.first) / double(sc.second)));
  if (count > 0) p.fallback_ = std::max(1, static_cast<int>(std::lround(double(total) / double(count))));
  return p;
}

PhonemeSequence MeanDurationPredictor::apply(const std::vector<int>& ids) const {
  PhonemeSequence seq;
  seq.ids = ids;
  for (int id : ids) {
    const auto it = mean_.find(id);
    seq.durations.push_back(std::max(1, it == mean_.end() ? fallback_ : it->second));
  }
  return seq;
}

void write_mel(const std::filesystem::path& path, const Matrix<float>& mel) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write("CTAPMEL1", 8);
  const std::uint32_t dims[2] = {static_cast<std::uint32_t>(mel.rows()), static_cast<std::uint32_t>(mel.cols())};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  for (Eigen::Index r = 0; r < mel.rows(); ++r) {
    for (Eigen::Index c = 0; c < mel.cols(); ++c) {
      const float v = mel(r, c);
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
  if (!out) throw IoError("short write to " + path.string());
}

Matrix<float> read_mel(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[8];
  std::uint32_t dims[2];
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in || std::memcmp(magic, "CTAPMEL1", 8) != 0) throw IoError(path.string() + ": not a mel container");
  Matrix<float> mel(dims[0], dims[1]);
  for (Eigen::Index r = 0; r < mel.rows(); ++r) {
    for (Eigen::Index c = 0; c < mel.cols(); ++c) in.read(reinterpret_cast<char*>(&mel(r, c)), sizeof(float));
  }
  if (!in) throw IoError(path.string() + ": truncated mel container");
  return mel;
}

std::vector<InferenceRequest> load_requests(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open request file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  std::vector<InferenceRequest> out;
  const auto base = path.parent_path();
  auto resolve = [&base](const std::string& p) {
    if (p.empty()) return p;
    const std::filesystem::path fp(p);
    return fp.is_absolute() ? p : (base / fp).string();
  };
  try {
    const auto j = nlohmann::json::parse(ss.str());
    if (j.at("format").get<std::string>() != "ctap-requests" || j.at("version").get<int>() != 1) {
      throw std::invalid_argument("unsupported request file");
    }
    for (const auto& r : j.at("requests")) {
      InferenceRequest req;
      req.id = r.at("id").get<std::string>();
      req.task = r.at("task").get<std::string>();
      if (r.contains("phonemes")) req.phonemes.ids = r.at("phonemes").get<std::vector<int>>();
      if (r.contains("durations")) req.phonemes.durations = r.at("durations").get<std::vector<int>>();
      req.prompt_wav = resolve(r.value("prompt_wav", ""));
      req.source_wav = resolve(r.value("source_wav", r.value("wav", "")));
      out.push_back(std::move(req));
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed request file: ") + e.what());
  }
  return out;
}

}  // namespace ctap
