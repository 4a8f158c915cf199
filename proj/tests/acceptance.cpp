// End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include "ctap/checkpoint.hpp"
#include "ctap/corpus.hpp"
#include "ctap/eval.hpp"
#include "ctap/losses.hpp"
#include "ctap/model.hpp"
#include "ctap/tasks.hpp"
#include "ctap/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

using namespace ctap;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void progress(const std::string& msg) { std::cerr << "[acceptance] " << msg << std::endl; }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

class TempDir {
 public:
  TempDir() {
    std::string pattern = (fs::temp_directory_path() / "ctap-acceptance-XXXXXX").string();
    if (!mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

Matrix<double> gaussian(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// ---------------------------------------------------------------------------
// Criterion 1: contrastive loss against an entry-by-entry reference.

double reference_contrastive(const std::vector<Matrix<double>>& s, const std::vector<Matrix<double>>& p, double tau) {
  std::vector<std::vector<double>> a;
  std::vector<std::vector<double>> b;
  for (std::size_t u = 0; u < s.size(); ++u) {
    for (Eigen::Index t = 0; t < s[u].rows(); ++t) {
      std::vector<double> x;
      std::vector<double> y;
      double nx = 0;
      double ny = 0;
      for (Eigen::Index k = 0; k < s[u].cols(); ++k) {
        x.push_back(s[u](t, k));
        y.push_back(p[u](t, k));
        nx += x.back() * x.back();
        ny += y.back() * y.back();
      }
      for (auto& v : x) v /= std::sqrt(nx);
      for (auto& v : y) v /= std::sqrt(ny);
      a.push_back(x);
      b.push_back(y);
    }
  }
  const std::size_t n = a.size();
  auto logit = [&](std::size_t i, std::size_t j) {
    double dot = 0;
    for (std::size_t k = 0; k < a[i].size(); ++k) dot += a[i][k] * b[j][k];
    return tau * dot;
  };
  double rows = 0;
  double cols = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double zr = 0;
    double zc = 0;
    for (std::size_t j = 0; j < n; ++j) {
      zr += std::exp(logit(i, j));
      zc += std::exp(logit(j, i));
    }
    rows -= std::log(std::exp(logit(i, i)) / zr);
    cols -= std::log(std::exp(logit(i, i)) / zc);
  }
  return 0.5 * (rows + cols) / static_cast<double>(n);
}

Outcome loss_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> batch(1, 2);
  std::uniform_int_distribution<int> dim(1, 4);
  std::uniform_real_distribution<double> taus(0.5, 30.0);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int b = batch(rng);
    const int d = dim(rng);
    const double tau = taus(rng);
    std::vector<Matrix<double>> s;
    std::vector<Matrix<double>> p;
    for (int i = 0; i < b; ++i) {
      const int t = dim(rng);
      s.push_back(gaussian(t, d, rng));
      p.push_back(gaussian(t, d, rng));
    }
    const double want = reference_contrastive(s, p, tau);
    const double plain = contrastive_loss(similarity_matrix(s, p, tau, true).logits);

    Tape<double> tape;
    std::vector<Matrix<double>> ns;
    std::vector<Matrix<double>> np;
    for (int i = 0; i < b; ++i) {
      ns.push_back(l2_normalized_rows(s[static_cast<std::size_t>(i)]));
      np.push_back(l2_normalized_rows(p[static_cast<std::size_t>(i)]));
    }
    Matrix<double> sa(0, d);
    Matrix<double> pa(0, d);
    for (int i = 0; i < b; ++i) {
      Matrix<double> tmp(sa.rows() + ns[static_cast<std::size_t>(i)].rows(), d);
      tmp << sa, ns[static_cast<std::size_t>(i)];
      sa = tmp;
      Matrix<double> tmq(pa.rows() + np[static_cast<std::size_t>(i)].rows(), d);
      tmq << pa, np[static_cast<std::size_t>(i)];
      pa = tmq;
    }
    const double taped = ad::contrastive_loss(ad::similarity(tape.leaf(sa), tape.leaf(pa),
                                                             tape.constant(Matrix<double>::Constant(1, 1, tau)), true))
                             .value()(0, 0);
    worst = std::max({worst, std::abs(plain - want), std::abs(taped - want)});
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-9 && secs < 10.0, "100 cases, max |diff| " + fmt(worst, 3) + ", " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------------------
// Criterion 2: closed-form values.

Outcome analytic_cases() {
  Matrix<double> id = Matrix<double>::Identity(2, 2);
  const double two = contrastive_loss(id);
  const double want_two = std::log(1.0 + std::exp(-1.0));
  Matrix<double> one(1, 1);
  one << 3.7;
  const double single = contrastive_loss(one);
  RowVector<double> mu(1);
  RowVector<double> sigma(1);
  mu << 1.0;
  sigma << 1.0;
  const double kl0 = kl_margin_loss(mu, sigma, 0.0);
  const double kl1 = kl_margin_loss(mu, sigma, 1.0);
  const bool ok = std::abs(two - want_two) <= 1e-9 && std::abs(single) <= 1e-9 && std::abs(kl0 - 0.5) <= 1e-12 &&
                  kl1 == 0.0;
  return {ok, "identity 2x2 " + fmt(two, 12) + " (want " + fmt(want_two, 12) + "), 1x1 " + fmt(single) +
                  ", kl margin 0 -> " + fmt(kl0, 12) + ", margin 1 -> " + fmt(kl1)};
}

// ---------------------------------------------------------------------------
// Criterion 3: finite differences through the full objective.

ModelConfig tiny_model() {
  ModelConfig c;
  c.d = 4;
  c.hidden = 8;
  c.heads = 2;
  c.phoneme_dim = 8;
  c.prompt_dim = 4;
  c.inventory_size = 6;
  c.dropout = 0.0;
  return c;
}

Outcome gradient_check() {
  const auto t0 = Clock::now();
  const ModelConfig cfg = tiny_model();
  Parameters<double> params = init_model<double>(cfg, 5);
  // Jitter every weight, including zero- and one-initialised tensors.
  std::mt19937_64 rng(6);
  std::normal_distribution<double> jitter(0.0, 0.05);
  for (auto& [_, m] : params.tensors) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += jitter(rng);
  }

  SpeakerSpec spk;
  spk.speaker_id = "g";
  spk.base_f0 = 160;
  std::vector<TrainingExample<double>> batch;
  for (const PhonemeSequence& seq : {PhonemeSequence{{0, 2, 5}, {2, 2, 2}}, PhonemeSequence{{1, 3}, {4, 2}}}) {
    TrainingExample<double> ex;
    const auto mel = mel_spectrogram(render_utterance(spk, seq, cfg.inventory_size));
    ex.mel = mel.frames.cast<double>();
    ex.phonemes = seq;
    const auto clip = inference_prompt(mel);
    ex.prompt = clip.mel.frames.cast<double>();
    ex.prompt_valid = clip.mel.valid_frames;
    batch.push_back(ex);
  }
  LossConfig loss;
  const std::uint64_t graph_seed = 99;
  auto evaluate = [&](const Parameters<double>& p) {
    Graph<double> g(p, Mode::kTrain, graph_seed);
    return batch_loss(g, cfg, loss, batch).total.value()(0, 0);
  };

  Graph<double> g(params, Mode::kTrain, graph_seed, [](const std::string&) { return true; });
  auto out = batch_loss(g, cfg, loss, batch);
  g.tape().backward(out.total);
  const auto grads = g.gradients();

  const double h = 1e-6;
  std::size_t checked = 0;
  std::size_t passed = 0;
  std::size_t tiny = 0;
  double worst = 0;
  for (const auto& [name, grad] : grads) {
    Matrix<double>& w = params.tensors.at(name);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double orig = w.data()[i];
      w.data()[i] = orig + h;
      const double up = evaluate(params);
      w.data()[i] = orig - h;
      const double down = evaluate(params);
      w.data()[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double analytic = grad.data()[i];
      const double diff = std::abs(numeric - analytic);
      const double scale = std::max(std::abs(numeric), std::abs(analytic));
      // Relative tolerance, with an absolute floor at round-off level.
      const bool ok = diff <= 1e-3 * scale || diff <= 1e-8;
      if (scale > 1e-8) worst = std::max(worst, diff / scale);
      ++checked;
      if (ok) ++passed;
      if (ok && diff > 1e-3 * scale) ++tiny;
    }
  }
  const double secs = seconds_since(t0);
  const double frac = static_cast<double>(passed) / static_cast<double>(checked);
  return {frac >= 0.99 && secs < 300.0, std::to_string(passed) + "/" + std::to_string(checked) +
                                            " parameters within rel 1e-3 (" + fmt(100 * frac, 5) +
                                            "%, " + std::to_string(tiny) + " of them below 1e-8 absolute), worst rel " + fmt(worst, 3) + ", " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------------------
// Shared toy-corpus state for criteria 4 to 8.

constexpr int kTrainUtterances = 8;
constexpr int kHeldOutUtterances = 8;
constexpr int kMinPhonemes = 8;
constexpr int kMaxPhonemes = 12;
constexpr double kCropFraction = 0.5;
constexpr std::int64_t kPretrainSteps = 3000;
constexpr std::int64_t kFinetuneStage1 = 500;
constexpr std::int64_t kFinetuneStage2 = 500;
constexpr std::int64_t kAsrSteps = 1000;
constexpr std::int64_t kFreshDecoderSteps = 500;

struct Toy {
  CorpusManifest manifest;
  std::vector<UtteranceData> train;
  std::vector<UtteranceData> held_out;
  ModelConfig model;
  TrainConfig pretrain_cfg;
};

Toy make_toy(const fs::path& dir) {
  CorpusConfig cc;
  cc.n_speakers = 2;
  cc.inventory_size = 6;
  cc.n_utterances = kTrainUtterances + kHeldOutUtterances;
  cc.min_phonemes = kMinPhonemes;
  cc.max_phonemes = kMaxPhonemes;
  cc.seed = 1;
  const auto full = synth_corpus(cc, dir / "corpus");
  const double n = cc.n_utterances;
  Toy toy;
  toy.manifest = split_corpus(full, {{Partition::kPretrain, kTrainUtterances / n}, {Partition::kTest, kHeldOutUtterances / n}},
                              1);
  toy.train = load_utterances(toy.manifest, toy.manifest.partition(Partition::kPretrain));
  toy.held_out = load_utterances(toy.manifest, toy.manifest.partition(Partition::kTest));
  toy.model = ModelConfig::toy();
  toy.model.inventory_size = cc.inventory_size;
  toy.pretrain_cfg.max_steps = kPretrainSteps;
  toy.pretrain_cfg.eval_every = 0;
  toy.pretrain_cfg.checkpoint_every = 0;
  toy.pretrain_cfg.seed = 1;
  toy.pretrain_cfg.crop_fraction = kCropFraction;
  return toy;
}

Checkpoint fresh(const Toy& toy) {
  Checkpoint ck;
  ck.model = toy.model;
  ck.params = init_model<float>(toy.model, 7);
  return ck;
}

std::map<std::string, std::uint64_t> prefix_hashes(const Checkpoint& ck) {
  std::map<std::string, std::uint64_t> out;
  for (const auto& p : {kSpeechEncoder, kPhonemeEncoder, kPromptEncoder, kDecoder, kPhonemeDecoder, kLossParams}) {
    out[p] = parameter_hash(ck.params, p);
  }
  return out;
}

// Names of the sub-networks whose bytes changed.
std::set<std::string> changed(const std::map<std::string, std::uint64_t>& before, const Checkpoint& after) {
  std::set<std::string> out;
  for (const auto& [prefix, hash] : prefix_hashes(after)) {
    if (hash != before.at(prefix)) out.insert(prefix);
  }
  return out;
}

std::string join(const std::set<std::string>& s) {
  std::string out;
  for (const auto& x : s) out += (out.empty() ? "" : ",") + x;
  return out.empty() ? "none" : out;
}

double mean_tts_mse(const Checkpoint& ck, const std::vector<UtteranceData>& data, const CorpusManifest& m) {
  double total = 0;
  for (const auto& u : data) {
    const Utterance* src = nullptr;
    for (const auto& x : m.utterances) {
      if (x.id == u.id) src = &x;
    }
    const auto prompt = load_waveform(m, *src);
    total += mel_mse(tts_infer(ck, {u.phonemes, prompt}).frames, u.mel.frames);
  }
  return total / static_cast<double>(data.size());
}

// Reconstruction from the speech embedding through the decoder.
double mean_reconstruction_mse(const Checkpoint& ck, const std::vector<UtteranceData>& data) {
  double total = 0;
  for (const auto& u : data) {
    const auto s = encode_speech(u.mel, ck.params, ck.model);
    const auto clip = inference_prompt(u.mel);
    const auto latent = encode_prompt(clip.mel, ck.params, ck.model, Mode::kInfer, 0);
    total += mel_mse(decode(s, latent.g, ck.params, ck.model).frames, u.mel.frames);
  }
  return total / static_cast<double>(data.size());
}

double mean_asr_accuracy(const Checkpoint& ck, const std::vector<UtteranceData>& data, std::string* per = nullptr) {
  double total = 0;
  for (const auto& u : data) {
    const double acc = phoneme_accuracy(asr_infer_mel(ck, u.mel), u.phonemes);
    if (per) *per += (per->empty() ? "" : " ") + fmt(acc, 3);
    total += acc;
  }
  return total / static_cast<double>(data.size());
}

Outcome fail(const std::exception& e) { return {false, std::string("exception: ") + e.what()}; }

}  // namespace

// Optional arguments select criteria by number; default is all of them.
int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8};
  std::map<int, Outcome> results;
  auto run = [&](int id, const std::function<Outcome()>& f) {
    if (!selected.count(id)) return;
    progress("criterion " + std::to_string(id));
    try {
      results[id] = f();
    } catch (const std::exception& e) {
      results[id] = fail(e);
    }
  };

  run(1, loss_oracle);
  run(2, analytic_cases);
  run(3, gradient_check);

  TempDir dir;
  std::optional<Toy> toy;
  if (selected.lower_bound(4) != selected.end()) {
    try {
      toy = make_toy(dir.path());
    } catch (const std::exception& e) {
      for (int id = 4; id <= 8; ++id) results[id] = fail(e);
    }
  }

  if (toy) {
    Checkpoint base = fresh(*toy);
    const Checkpoint init = base;
    std::optional<RetrievalAccuracy> init_retrieval;
    double pretrain_secs = 0;
    bool pretrained = false;
    try {
      progress("pretraining (full variant, " + std::to_string(kPretrainSteps) + " steps)");
      init_retrieval = training_retrieval(init, toy->train, toy->pretrain_cfg.loss);
      const auto t0 = Clock::now();
      pretrain(base, toy->train, toy->pretrain_cfg);
      pretrain_secs = seconds_since(t0);
      pretrained = true;
    } catch (const std::exception& e) {
      for (int id = 4; id <= 8; ++id) results[id] = fail(e);
    }

    // Fine-tunes for criterion 6, hashed for criterion 4.
    Checkpoint tts = base;
    Checkpoint vc = base;
    Checkpoint asr = base;
    std::vector<std::string> freeze_report;
    bool frozen_ok = pretrained;
    Outcome tts_outcome{false, "not run"};
    Outcome asr_outcome{false, "not run"};
    if (pretrained) {
      try {
        progress("finetune-tts");
        FinetuneConfig f;
        f.train.lr = 1e-3;
        f.train.eval_every = 0;
        f.train.checkpoint_every = 0;
        f.stage1_steps = kFinetuneStage1;
        f.stage2_steps = kFinetuneStage2;
        const double before_mse = mean_tts_mse(base, toy->train, toy->manifest);
        auto h = prefix_hashes(tts);
        finetune_tts(tts, toy->train, toy->train, f);
        auto moved = changed(h, tts);
        frozen_ok &= moved == std::set<std::string>{kPromptEncoder, kDecoder};
        freeze_report.push_back("tts updated " + join(moved));
        const double after_mse = mean_tts_mse(tts, toy->train, toy->manifest);
        const double gain = 1.0 - after_mse / before_mse;
        tts_outcome = {gain >= 0.5, "tts mel mse " + fmt(before_mse) + " -> " + fmt(after_mse) + " (" +
                                        fmt(100 * gain, 3) + "% better)"};

        progress("finetune-vc");
        std::vector<UtteranceData> target;
        for (auto u : toy->train) {
          if (u.speaker_id != toy->train.front().speaker_id) continue;
          u.phonemes = {};
          target.push_back(u);
        }
        h = prefix_hashes(vc);
        finetune_vc(vc, target, f);
        moved = changed(h, vc);
        frozen_ok &= moved == std::set<std::string>{kPromptEncoder, kDecoder};
        freeze_report.push_back("vc updated " + join(moved));

        progress("train-asr");
        TrainConfig a;
        a.lr = 1e-3;
        a.max_steps = kAsrSteps;
        a.silence_clips = kTrainUtterances;
        a.eval_every = 0;
        a.checkpoint_every = 0;
        h = prefix_hashes(asr);
        train_asr_head(asr, toy->train, a);
        moved = changed(h, asr);
        frozen_ok &= moved == std::set<std::string>{kPhonemeDecoder};
        freeze_report.push_back("asr updated " + join(moved));

        const double train_acc = mean_asr_accuracy(asr, toy->train);
        std::string per;
        const double held_acc = mean_asr_accuracy(asr, toy->held_out, &per);
        const auto silence = asr_infer(asr, Waveform{std::vector<float>(100 * kHop, 0.0f), kSampleRate});
        const bool silent = silence.ids == std::vector<int>{0};
        asr_outcome = {train_acc >= 0.9 && held_acc >= 0.7 && silent,
                       "asr accuracy train " + fmt(train_acc, 3) + ", held-out mean " + fmt(held_acc, 3) + " [" + per +
                           "], silence -> " + std::to_string(silence.ids.size()) + " run(s)" +
                           (silent ? " of silence" : "")};
      } catch (const std::exception& e) {
        frozen_ok = false;
        tts_outcome = fail(e);
        asr_outcome = fail(e);
      }
    }

    if (pretrained) {
      run(4, [&] {
        const ModelConfig& mc = toy->model;
        const Parameters<float>& p = base.params;
        bool time_ok = true;
        std::mt19937_64 rng(8);
        for (int frames : {1, 7, 100, 301}) {
          MelSpectrogram mel;
          mel.frames = Matrix<float>::Random(frames, kMelBands).array() - 5.0f;
          mel.valid_frames = frames;
          const auto s = encode_speech(mel, p, mc);
          std::vector<int> ids(static_cast<std::size_t>(frames));
          for (int& x : ids) x = static_cast<int>(rng() % 6);
          const auto seq = collapse_runs(ids);
          const auto ph = encode_phonemes(seq, p, mc);
          const auto latent = encode_prompt(inference_prompt(mel).mel, p, mc, Mode::kInfer, 0);
          time_ok &= s.vectors.rows() == frames && ph.vectors.rows() == frames &&
                     decode(s, latent.g, p, mc).frames.rows() == frames &&
                     decode(ph, latent.g, p, mc).frames.rows() == frames &&
                     decode_phonemes(s, p, mc).rows() == frames;
        }
        bool lr_ok = true;
        std::uniform_int_distribution<int> count(1, 12);
        std::uniform_int_distribution<int> dur(1, 9);
        for (int trial = 0; trial < 1000; ++trial) {
          const int n = count(rng);
          std::vector<int> d(static_cast<std::size_t>(n));
          int sum = 0;
          for (int& x : d) sum += (x = dur(rng));
          lr_ok &= length_regulate(Matrix<float>(Matrix<float>::Random(n, 3)), d).rows() == sum;
        }
        std::string detail = std::string("time preserved: ") + (time_ok ? "yes" : "no") +
                             ", length regulator 1000/1000: " + (lr_ok ? "yes" : "no") + ", fine-tunes: ";
        for (std::size_t i = 0; i < freeze_report.size(); ++i) detail += (i ? "; " : "") + freeze_report[i];
        return Outcome{time_ok && lr_ok && frozen_ok && freeze_report.size() == 3, detail};
      });

      run(5, [&] {
        const auto r = training_retrieval(base, toy->train, toy->pretrain_cfg.loss);
        int frames = 0;
        for (const auto& u : toy->train) frames += u.mel.num_frames();
        const double chance = 1.0 / frames;
        const bool ok = r.speech_to_phoneme >= 0.9 && r.phoneme_to_speech >= 0.9 && chance < 0.02 &&
                        pretrain_secs < 1800.0;
        return Outcome{ok, "retrieval s->p " + fmt(r.speech_to_phoneme, 3) + ", p->s " + fmt(r.phoneme_to_speech, 3) +
                               " after " + std::to_string(kPretrainSteps) + " steps (" + fmt(pretrain_secs, 3) +
                               " s); at init " + fmt(init_retrieval->speech_to_phoneme, 3) + "/" +
                               fmt(init_retrieval->phoneme_to_speech, 3) + ", chance 1/" + std::to_string(frames)};
      });

      run(6, [&] {
        return Outcome{tts_outcome.pass && asr_outcome.pass, tts_outcome.detail + "; " + asr_outcome.detail};
      });

      run(7, [&] {
        progress("pretraining (no_decoder variant)");
        Checkpoint ablated = fresh(*toy);
        TrainConfig cfg = toy->pretrain_cfg;
        cfg.loss.variant = LossVariant::kNoDecoder;
        pretrain(ablated, toy->train, cfg);

        progress("fresh decoders");
        FinetuneConfig f;
        f.train.lr = 1e-3;
        f.train.eval_every = 0;
        f.train.checkpoint_every = 0;
        f.stage1_steps = kFreshDecoderSteps;
        auto refit = [&](Checkpoint ck) {
          reinitialize(ck, {kPromptEncoder, kDecoder}, 11);
          finetune_vc(ck, toy->train, f);
          return mean_reconstruction_mse(ck, toy->train);
        };
        const double full_mse = refit(base);
        const double ablated_mse = refit(ablated);
        const auto rf = training_retrieval(base, toy->train, cfg.loss);
        const auto ra = training_retrieval(ablated, toy->train, cfg.loss);
        const bool close = std::abs(rf.speech_to_phoneme - ra.speech_to_phoneme) <= 0.05 &&
                           std::abs(rf.phoneme_to_speech - ra.phoneme_to_speech) <= 0.05;
        return Outcome{ablated_mse > full_mse && close,
                       "fresh-decoder reconstruction mse full " + fmt(full_mse) + " vs no_decoder " + fmt(ablated_mse) +
                           "; retrieval full " + fmt(rf.speech_to_phoneme, 3) + "/" + fmt(rf.phoneme_to_speech, 3) +
                           " vs no_decoder " + fmt(ra.speech_to_phoneme, 3) + "/" + fmt(ra.phoneme_to_speech, 3)};
      });

      run(8, [&] {
        progress("determinism: repeated run");
        Checkpoint again = fresh(*toy);
        pretrain(again, toy->train, toy->pretrain_cfg);
        progress("determinism: interrupted run");
        Checkpoint first = fresh(*toy);
        TrainConfig half = toy->pretrain_cfg;
        half.max_steps = kPretrainSteps / 2;
        pretrain(first, toy->train, half);
        save_checkpoint(first, dir.path() / "mid.ckpt");
        Checkpoint resumed = load_checkpoint(dir.path() / "mid.ckpt");
        pretrain(resumed, toy->train, toy->pretrain_cfg);
        const auto h0 = checkpoint_hash(base);
        const auto h1 = checkpoint_hash(again);
        const auto h2 = checkpoint_hash(resumed);
        std::ostringstream os;
        os << std::hex << "hashes " << h0 << " / repeat " << h1 << " / resumed at step " << std::dec
           << kPretrainSteps / 2 << " " << std::hex << h2;
        return Outcome{h0 == h1 && h0 == h2, os.str()};
      });
    }
  }

  int failures = 0;
  for (int id : selected) {
    const auto it = results.find(id);
    const Outcome o = it == results.end() ? Outcome{false, "not run"} : it->second;
    if (!o.pass) ++failures;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << "\n";
  }
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed")) << "\n";
  return failures ? 1 : 0;
}
