#include "ctap/tasks.hpp"
#include "ctap/trainer.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <fstream>

using namespace ctap;
using ctap::test::TempDir;

namespace {

Checkpoint tiny_checkpoint() {
  Checkpoint ck;
  ck.model.d = 4;
  ck.model.hidden = 8;
  ck.model.heads = 2;
  ck.model.phoneme_dim = 8;
  ck.model.prompt_dim = 4;
  ck.model.inventory_size = 4;
  ck.params = init_model<float>(ck.model, 2);
  return ck;
}

SpeakerSpec speaker() {
  SpeakerSpec s;
  s.speaker_id = "s";
  s.base_f0 = 150;
  return s;
}

Waveform render(const PhonemeSequence& seq) { return {render_utterance(speaker(), seq, 4), kSampleRate}; }

}  // namespace

TEST_CASE("tts output length is the duration sum") {
  const auto ck = tiny_checkpoint();
  const auto prompt = render({{1, 2}, {20, 20}});
  const auto mel = tts_infer(ck, {{{0, 1, 3, 0}, {3, 7, 5, 2}}, prompt});
  CHECK(mel.frames.rows() == 17);
  CHECK(mel.frames.cols() == kMelBands);
  CHECK(mel.frames.allFinite());
  CHECK(tts_infer(ck, {{{0, 1, 3, 0}, {3, 7, 5, 2}}, prompt}).frames == mel.frames);
  CHECK_THROWS_AS(tts_infer(ck, {{{1, 2}, {3}}, prompt}), std::invalid_argument);
  CHECK_THROWS_AS(tts_infer(ck, {{{1}, {3}}, Waveform{}}), std::invalid_argument);
}

TEST_CASE("vc output length follows the source") {
  const auto ck = tiny_checkpoint();
  const Waveform source{std::vector<float>(100 * kHop, 0.01f), kSampleRate};
  const auto mel = vc_infer(ck, {source, render({{3}, {40}})});
  CHECK(mel.frames.rows() == 100);
  CHECK(mel.frames.cols() == kMelBands);
  CHECK_THROWS_AS(vc_infer(ck, {Waveform{}, source}), std::invalid_argument);
}

TEST_CASE("inference prompt takes the leading frames") {
  MelSpectrogram mel;
  mel.frames = Matrix<float>::Random(420, kMelBands);
  mel.valid_frames = 420;
  const auto clip = inference_prompt(mel);
  CHECK(clip.start == 0);
  CHECK(clip.mel.valid_frames == kPromptFrames);
  CHECK(clip.mel.frames == mel.frames.topRows(kPromptFrames));

  mel.frames = Matrix<float>::Random(50, kMelBands);
  mel.valid_frames = 50;
  const auto short_clip = inference_prompt(mel);
  CHECK(short_clip.mel.frames.rows() == kPromptFrames);
  CHECK(short_clip.mel.valid_frames == 50);
  CHECK(short_clip.mel.frames.topRows(50) == mel.frames);
  CHECK((short_clip.mel.frames.bottomRows(250).array() == log_floor_value()).all());
}

TEST_CASE("asr decoding collapses frame runs") {
  CHECK(collapse_runs({1, 1, 2, 2, 2}) == PhonemeSequence{{1, 2}, {2, 3}});
  CHECK(collapse_runs({}) == PhonemeSequence{});
  CHECK(collapse_runs({4}) == PhonemeSequence{{4}, {1}});
  CHECK(collapse_runs({1, 2, 1}) == PhonemeSequence{{1, 2, 1}, {1, 1, 1}});

  const auto ck = tiny_checkpoint();
  const auto wav = render({{0, 1, 0}, {3, 4, 3}});
  const auto frames = asr_frame_predictions(ck, mel_spectrogram(wav.samples));
  CHECK(frames.size() == 10);
  const auto runs = asr_infer(ck, wav);
  CHECK(runs.total_frames() == 10);
  CHECK(runs == collapse_runs(frames));
  CHECK_THROWS_AS(asr_infer(ck, Waveform{}), std::invalid_argument);
}

namespace {

std::vector<UtteranceData> asr_data() {
  std::vector<UtteranceData> data;
  for (const PhonemeSequence& seq :
       {PhonemeSequence{{0, 1, 2, 0}, {4, 5, 5, 4}}, PhonemeSequence{{0, 3, 1, 0}, {5, 4, 6, 3}}}) {
    UtteranceData u;
    u.id = "u" + std::to_string(data.size());
    u.phonemes = seq;
    u.mel = mel_spectrogram(render(seq).samples);
    data.push_back(u);
  }
  return data;
}

TrainConfig asr_config() {
  TrainConfig cfg;
  cfg.lr = 3e-3;
  cfg.max_steps = 400;
  cfg.eval_every = 0;
  return cfg;
}

}  // namespace

TEST_CASE("a trained head recovers the phonemes of a training utterance") {
  auto ck = tiny_checkpoint();
  const auto data = asr_data();
  train_asr_head(ck, data, asr_config());
  const auto seen = asr_infer_mel(ck, data[0].mel);
  CHECK(seen.ids == data[0].phonemes.ids);
}

TEST_CASE("a head trained with silence clips maps silence to one silence run") {
  auto ck = tiny_checkpoint();
  auto cfg = asr_config();
  cfg.silence_clips = 2;
  train_asr_head(ck, asr_data(), cfg);
  const auto silence = asr_infer(ck, Waveform{std::vector<float>(30 * kHop, 0.0f), kSampleRate});
  CHECK(silence.ids == std::vector<int>{0});
  CHECK(silence.total_frames() == 30);
}

TEST_CASE("mel container round-trips") {
  TempDir dir("mel");
  Matrix<float> mel = Matrix<float>::Random(13, kMelBands);
  write_mel(dir.path() / "sub" / "a.mel", mel);
  CHECK(read_mel(dir.path() / "sub" / "a.mel") == mel);
  CHECK(std::filesystem::file_size(dir.path() / "sub" / "a.mel") == 16 + 13 * 40 * 4);

  std::ifstream in(dir.path() / "sub" / "a.mel", std::ios::binary);
  char head[16];
  in.read(head, 16);
  CHECK(std::string(head, 8) == "CTAPMEL1");
  std::uint32_t rows = 0;
  std::memcpy(&rows, head + 8, 4);
  CHECK(rows == 13);

  std::ofstream(dir.path() / "bad.mel", std::ios::binary) << "NOTAMEL0xxxxxxxx";
  CHECK_THROWS_AS(read_mel(dir.path() / "bad.mel"), IoError);
  {
    std::ifstream src(dir.path() / "sub" / "a.mel", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(src)), {});
    std::ofstream(dir.path() / "cut.mel", std::ios::binary) << bytes.substr(0, 100);
  }
  CHECK_THROWS_AS(read_mel(dir.path() / "cut.mel"), IoError);
  CHECK_THROWS_AS(read_mel(dir.path() / "none.mel"), IoError);
}

TEST_CASE("request files") {
  TempDir dir("requests");
  {
    std::ofstream f(dir.path() / "req.json");
    f << R"({"format": "ctap-requests", "version": 1, "requests": [
      {"id": "a", "task": "tts", "phonemes": [0, 2, 0], "durations": [3, 4, 3], "prompt_wav": "p.wav"},
      {"id": "b", "task": "vc", "source_wav": "/abs/s.wav", "prompt_wav": "p.wav"},
      {"id": "c", "task": "asr", "wav": "x.wav"}]})";
  }
  const auto reqs = load_requests(dir.path() / "req.json");
  REQUIRE(reqs.size() == 3);
  CHECK(reqs[0].phonemes == PhonemeSequence{{0, 2, 0}, {3, 4, 3}});
  CHECK(reqs[0].prompt_wav == (dir.path() / "p.wav").string());
  CHECK(reqs[1].source_wav == "/abs/s.wav");
  CHECK(reqs[2].task == "asr");
  CHECK(reqs[2].source_wav == (dir.path() / "x.wav").string());

  std::ofstream(dir.path() / "v2.json") << R"({"format": "ctap-requests", "version": 2, "requests": []})";
  CHECK_THROWS_AS(load_requests(dir.path() / "v2.json"), std::invalid_argument);
  std::ofstream(dir.path() / "noid.json") << R"({"format": "ctap-requests", "version": 1, "requests": [{"task": "asr"}]})";
  CHECK_THROWS_AS(load_requests(dir.path() / "noid.json"), std::invalid_argument);
  CHECK_THROWS_AS(load_requests(dir.path() / "missing.json"), IoError);
}

TEST_CASE("mean duration predictor") {
  CorpusManifest m;
  Utterance a;
  a.phonemes = {{0, 1, 2}, {2, 4, 9}};
  Utterance b;
  b.phonemes = {{1, 0}, {6, 4}};
  m.utterances = {a, b};
  const auto p = MeanDurationPredictor::fit(m);
  CHECK(p.apply({1, 0, 2, 5}) == PhonemeSequence{{1, 0, 2, 5}, {5, 3, 9, 5}});
  CHECK(MeanDurationPredictor::fit(CorpusManifest{}).apply({3}).durations == std::vector<int>{1});
}
