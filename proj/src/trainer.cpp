#include "ctap/trainer.hpp"

#include "ctap/eval.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace ctap {

namespace {

enum class Stage : std::uint32_t { kPretrain = 0, kTtsSpeech = 1, kTtsLabeled = 2, kVc = 3, kAsr = 4 };

std::mt19937_64 step_rng(std::uint64_t seed, Stage stage, std::int64_t step) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stage), static_cast<std::uint32_t>(step),
                    static_cast<std::uint32_t>(static_cast<std::uint64_t>(step) >> 32)};
  return std::mt19937_64(seq);
}

std::vector<std::size_t> sample_batch(std::size_t n, int batch_size, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (static_cast<std::size_t>(batch_size) >= n) return idx;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(batch_size));
  return idx;
}

bool under_any(const std::string& name, const std::set<std::string>& prefixes) {
  for (const auto& p : prefixes) {
    if (has_prefix(name, p)) return true;
  }
  return false;
}

struct StepResult {
  Var<float> total;
  LossBreakdown breakdown;
};

using StepFn = std::function<StepResult(Graph<float>&, std::mt19937_64&)>;

void dump_nan(const TrainConfig& cfg, const std::string& stage, std::int64_t step, const LossBreakdown& b,
              const Parameters<float>& params) {
  nlohmann::json j;
  j["stage"] = stage;
  j["step"] = step;
  j["contrastive"] = b.contrastive;
  j["mse"] = b.mse;
  j["kl"] = b.kl;
  j["total"] = b.total;
  for (const auto& [name, m] : params.tensors) j["param_norms"][name] = m.norm();
  std::filesystem::path path = cfg.checkpoint_path.empty() ? std::filesystem::path("nan-dump.json")
                                                           : std::filesystem::path(cfg.checkpoint_path.string() + ".nan-dump.json");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream(path) << j.dump(2) << "\n";
}

bool all_finite(const std::map<std::string, Matrix<float>>& grads) {
  for (const auto& [_, g] : grads) {
    if (!g.allFinite()) return false;
  }
  return true;
}

// Shared optimisation loop. steps [first, last) with RNG stage tag; adam_t0
// is the Adam step count before `first`.
TrainLog run_loop(Checkpoint& ckpt, const std::string& stage_name, Stage stage, std::int64_t first, std::int64_t last,
                  std::int64_t adam_t0, const TrainConfig& cfg, const Graph<float>::Trainable& trainable,
                  const StepFn& step_fn, const std::function<void(StepRecord&)>& snapshot, bool count_global_step) {
  TrainLog log;
  for (std::int64_t step = first; step < last; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    auto rng = step_rng(cfg.seed, stage, step);
    Graph<float> g(ckpt.params, Mode::kTrain, rng(), trainable, ckpt.model.dropout);
    StepResult r = step_fn(g, rng);
    const double total = r.total.value()(0, 0);
    if (!std::isfinite(total)) {
      dump_nan(cfg, stage_name, step, r.breakdown, ckpt.params);
      throw TrainingError(stage_name + ": non-finite loss at step " + std::to_string(step));
    }
    g.tape().backward(r.total);
    auto grads = g.gradients();
    if (!all_finite(grads)) {
      dump_nan(cfg, stage_name, step, r.breakdown, ckpt.params);
      throw TrainingError(stage_name + ": non-finite gradient at step " + std::to_string(step));
    }
    StepRecord rec;
    rec.stage = stage_name;
    rec.step = step + 1;
    rec.loss = r.breakdown;
    rec.grad_norm = clip_gradients(grads, cfg.grad_clip_norm);
    double sq = 0;
    for (const auto& [_, gm] : grads) sq += static_cast<double>(gm.squaredNorm());
    rec.clipped_norm = std::sqrt(sq);
    const std::int64_t t = adam_t0 + (step - first) + 1;
    rec.lr = cfg.warmup_steps > 0 ? cfg.lr * std::min(1.0, static_cast<double>(t) / cfg.warmup_steps) : cfg.lr;
    adam_update(ckpt.params, ckpt.adam, grads, rec.lr, cfg, t);
    if (count_global_step) {
      ckpt.params.step = step + 1;
    } else {
      ++ckpt.params.step;
    }
    if (snapshot && cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0) snapshot(rec);
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (!cfg.log_path.empty()) append_log(cfg.log_path, rec);
    log.records.push_back(rec);
    if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) {
      ckpt.run_config = cfg.run_config;
      save_checkpoint(ckpt, cfg.checkpoint_path);
    }
  }
  if (!cfg.checkpoint_path.empty()) {
    ckpt.run_config = cfg.run_config;
    save_checkpoint(ckpt, cfg.checkpoint_path);
  }
  return log;
}

std::vector<Matrix<float>> cached_embeddings(const Checkpoint& ckpt, const std::vector<UtteranceData>& data,
                                             EmbeddingSource source) {
  std::vector<Matrix<float>> out;
  for (const auto& u : data) {
    out.push_back(source == EmbeddingSource::kSpeech ? encode_speech(u.mel, ckpt.params, ckpt.model).vectors
                                                     : encode_phonemes(u.phonemes, ckpt.params, ckpt.model).vectors);
  }
  return out;
}

// Reconstruction through frozen embeddings: mean MSE of decode(E_b, g_b)
// against the mel, plus (optionally) the mean KL hinge.
StepResult reconstruction_step(Graph<float>& g, const Checkpoint& ckpt, const std::vector<UtteranceData>& data,
                               const std::vector<Matrix<float>>& embeddings, int batch_size, bool with_kl,
                               std::mt19937_64& rng) {
  const auto idx = sample_batch(data.size(), batch_size, rng);
  std::vector<Var<float>> preds;
  std::vector<Var<float>> targets;
  std::vector<Var<float>> kls;
  for (std::size_t i : idx) {
    const auto clip = random_prompt_clip(data[i].mel, rng);
    const auto prompt = prompt_encoder(g, ckpt.model, clip.mel.frames, clip.mel.valid_frames);
    preds.push_back(decoder(g, ckpt.model, g.constant(embeddings[i]), prompt.g));
    targets.push_back(g.constant(data[i].mel.frames));
    if (with_kl) kls.push_back(ad::kl_margin_loss(prompt.mu, prompt.sigma, float(ckpt.model.kl_margin)));
  }
  StepResult r;
  Var<float> mse = ad::mean_squared_error(ad::concat_rows(preds), ad::concat_rows(targets));
  r.breakdown.mse = mse.value()(0, 0);
  if (with_kl) {
    Var<float> kl = ad::scale(ad::sum_scalars(kls), 1.0f / float(kls.size()));
    r.breakdown.kl = kl.value()(0, 0);
    r.total = ad::add(mse, kl);
  } else {
    r.total = mse;
  }
  r.breakdown.total = r.breakdown.mse + r.breakdown.kl;
  return r;
}

Graph<float>::Trainable only(std::set<std::string> prefixes) {
  return [prefixes = std::move(prefixes)](const std::string& name) { return under_any(name, prefixes); };
}

}  // namespace

std::vector<UtteranceData> load_utterances(const CorpusManifest& manifest, const std::vector<const Utterance*>& utts) {
  std::vector<UtteranceData> out;
  for (const Utterance* u : utts) {
    const Waveform w = load_waveform(manifest, *u);
    UtteranceData d;
    d.id = u->id;
    d.speaker_id = u->speaker.speaker_id;
    d.mel = mel_spectrogram(w.samples, w.sample_rate);
    d.phonemes = u->phonemes;
    if (d.phonemes.total_frames() != d.mel.num_frames()) {
      throw std::invalid_argument(u->id + ": durations sum to " + std::to_string(d.phonemes.total_frames()) +
                                  " frames but the mel has " + std::to_string(d.mel.num_frames()));
    }
    out.push_back(std::move(d));
  }
  return out;
}

double clip_gradients(std::map<std::string, Matrix<float>>& grads, double max_norm) {
  double sq = 0;
  for (const auto& [_, g] : grads) sq += static_cast<double>(g.cast<double>().squaredNorm());
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const float s = static_cast<float>(max_norm / (norm + 1e-6));
    for (auto& [_, g] : grads) g *= s;
  }
  return norm;
}

void adam_update(Parameters<float>& params, AdamState& state, const std::map<std::string, Matrix<float>>& grads,
                 double lr, const TrainConfig& cfg, std::int64_t step) {
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  const float b1 = static_cast<float>(cfg.beta1);
  const float b2 = static_cast<float>(cfg.beta2);
  const float step_size = static_cast<float>(lr / bc1);
  const float inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const float eps = static_cast<float>(cfg.eps);
  for (const auto& [name, g] : grads) {
    Matrix<float>& p = params.tensors.at(name);
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() == 0) m = Matrix<float>::Zero(p.rows(), p.cols());
    if (v.size() == 0) v = Matrix<float>::Zero(p.rows(), p.cols());
    m = b1 * m + (1.0f - b1) * g;
    v = b2 * v + (1.0f - b2) * g.cwiseProduct(g);
    p.array() -= step_size * m.array() / (v.array().sqrt() * inv_sqrt_bc2 + eps);
  }
}

TrainLog pretrain(Checkpoint& ckpt, const std::vector<UtteranceData>& data, const TrainConfig& cfg) {
  if (data.empty()) throw TrainingError("pretrain: empty training partition");
  if (cfg.batch_size < 1) throw TrainingError("batch_size must be >= 1");
  if (!(cfg.lr > 0)) throw TrainingError("learning rate must be positive");
  for (const auto& u : data) {
    if (u.phonemes.total_frames() != u.mel.num_frames()) {
      throw std::invalid_argument(u.id + ": phoneme durations do not sum to the mel length");
    }
  }
  const VariantTerms terms = terms_for(cfg.loss.variant);
  std::set<std::string> active = {kSpeechEncoder, kPhonemeEncoder};
  if (terms.reconstruction) active.insert({kPromptEncoder, kDecoder});
  if (terms.phoneme_ce) active.insert(kPhonemeDecoder);
  if (cfg.loss.learn_tau) active.insert(kLossParams);
  for (const auto& f : cfg.freeze) active.erase(f);
  const auto trainable = only(active);
  const ModelConfig& model = ckpt.model;

  auto step_fn = [&](Graph<float>& g, std::mt19937_64& rng) {
    const auto idx = sample_batch(data.size(), cfg.batch_size, rng);
    std::vector<TrainingExample<float>> batch;
    for (std::size_t i : idx) {
      TrainingExample<float> ex;
      const PhonemeSequence& seq = data[i].phonemes;
      std::size_t first = 0;
      std::size_t count = seq.ids.size();
      if (cfg.crop_fraction < 1.0 && count > 1) {
        const auto shortest = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(cfg.crop_fraction * count)));
        count = std::uniform_int_distribution<std::size_t>(shortest, count)(rng);
        first = std::uniform_int_distribution<std::size_t>(0, seq.ids.size() - count)(rng);
      }
      const int offset = std::accumulate(seq.durations.begin(), seq.durations.begin() + first, 0);
      ex.phonemes.ids.assign(seq.ids.begin() + first, seq.ids.begin() + first + count);
      ex.phonemes.durations.assign(seq.durations.begin() + first, seq.durations.begin() + first + count);
      ex.mel = data[i].mel.frames.middleRows(offset, ex.phonemes.total_frames());
      const auto clip = random_prompt_clip(data[i].mel, rng);
      ex.prompt = clip.mel.frames;
      ex.prompt_valid = clip.mel.valid_frames;
      batch.push_back(std::move(ex));
    }
    auto loss = batch_loss(g, model, cfg.loss, batch);
    return StepResult{loss.total, loss.breakdown};
  };
  auto snapshot = [&](StepRecord& rec) {
    const auto r = training_retrieval(ckpt, data, cfg.loss);
    rec.retrieval_s2p = r.speech_to_phoneme;
    rec.retrieval_p2s = r.phoneme_to_speech;
  };
  ckpt.trained.insert(active.begin(), active.end());
  return run_loop(ckpt, "pretrain", Stage::kPretrain, ckpt.params.step, cfg.max_steps, ckpt.params.step, cfg,
                  trainable, step_fn, snapshot, true);
}

TrainLog finetune_tts(Checkpoint& ckpt, const std::vector<UtteranceData>& speech_only,
                      const std::vector<UtteranceData>& labeled, const FinetuneConfig& cfg) {
  if (speech_only.empty()) throw TrainingError("finetune-tts: empty speech-only partition");
  if (labeled.empty()) throw TrainingError("finetune-tts: empty labeled partition");
  TrainLog log = finetune_vc(ckpt, speech_only, cfg);

  const auto phon = cached_embeddings(ckpt, labeled, EmbeddingSource::kPhoneme);
  ckpt.adam = {};
  auto step_fn = [&](Graph<float>& g, std::mt19937_64& rng) {
    return reconstruction_step(g, ckpt, labeled, phon, cfg.train.batch_size, false, rng);
  };
  TrainLog stage2 = run_loop(ckpt, "finetune_tts_labeled", Stage::kTtsLabeled, 0, cfg.stage2_steps, 0, cfg.train,
                             only({kDecoder}), step_fn, {}, false);
  log.records.insert(log.records.end(), stage2.records.begin(), stage2.records.end());
  return log;
}

TrainLog finetune_vc(Checkpoint& ckpt, const std::vector<UtteranceData>& speech_only, const FinetuneConfig& cfg) {
  if (speech_only.empty()) throw TrainingError("fine-tune: empty speech-only partition");
  // Only waveforms are consulted here: the cached embeddings come from mels.
  const auto speech = cached_embeddings(ckpt, speech_only, EmbeddingSource::kSpeech);
  ckpt.adam = {};
  auto step_fn = [&](Graph<float>& g, std::mt19937_64& rng) {
    return reconstruction_step(g, ckpt, speech_only, speech, cfg.train.batch_size, true, rng);
  };
  ckpt.trained.insert({kDecoder, kPromptEncoder});
  return run_loop(ckpt, "finetune_speech", Stage::kTtsSpeech, 0, cfg.stage1_steps, 0, cfg.train,
                  only({kDecoder, kPromptEncoder}), step_fn, {}, false);
}

TrainLog train_asr_head(Checkpoint& ckpt, const std::vector<UtteranceData>& labeled, const TrainConfig& cfg) {
  if (labeled.empty()) throw TrainingError("train-asr: empty labeled partition");
  if (cfg.silence_clips < 0) throw TrainingError("train-asr: negative silence clip count");
  std::vector<UtteranceData> examples = labeled;
  for (int k = 0; k < cfg.silence_clips; ++k) {
    const auto frames = labeled[static_cast<std::size_t>(k) % labeled.size()].mel.frames.rows();
    UtteranceData u;
    u.id = "silence" + std::to_string(k);
    u.mel.frames = Matrix<float>::Constant(frames, kMelBands, log_floor_value());
    u.mel.valid_frames = static_cast<int>(frames);
    u.phonemes = {{0}, {static_cast<int>(frames)}};
    examples.push_back(std::move(u));
  }
  std::vector<std::vector<int>> targets;
  for (const auto& u : examples) {
    if (u.phonemes.ids.empty()) throw TrainingError("train-asr: utterance " + u.id + " has no phoneme labels");
    targets.push_back(u.phonemes.frame_targets());
  }
  const auto speech = cached_embeddings(ckpt, examples, EmbeddingSource::kSpeech);
  ckpt.adam = {};
  auto step_fn = [&](Graph<float>& g, std::mt19937_64& rng) {
    const auto idx = sample_batch(examples.size(), cfg.batch_size, rng);
    std::vector<Var<float>> logits;
    std::vector<int> frame_targets;
    for (std::size_t i : idx) {
      const Eigen::Index frames = speech[i].rows();
      Eigen::Index start = 0;
      Eigen::Index length = frames;
      if (cfg.crop_fraction < 1.0) {
        const auto shortest = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::ceil(cfg.crop_fraction * frames)));
        length = std::uniform_int_distribution<Eigen::Index>(shortest, frames)(rng);
        start = std::uniform_int_distribution<Eigen::Index>(0, frames - length)(rng);
      }
      logits.push_back(phoneme_decoder(g, ckpt.model, g.constant(speech[i].middleRows(start, length))));
      frame_targets.insert(frame_targets.end(), targets[i].begin() + start, targets[i].begin() + start + length);
    }
    StepResult r;
    r.total = ad::cross_entropy(ad::concat_rows(logits), frame_targets);
    r.breakdown.phoneme_ce = r.total.value()(0, 0);
    r.breakdown.total = *r.breakdown.phoneme_ce;
    return r;
  };
  ckpt.trained.insert(kPhonemeDecoder);
  return run_loop(ckpt, "asr_head", Stage::kAsr, 0, cfg.max_steps, 0, cfg, only({kPhonemeDecoder}), step_fn, {},
                  false);
}

void reinitialize(Checkpoint& ckpt, const std::vector<std::string>& prefixes, std::uint64_t seed) {
  const auto fresh = init_model<float>(ckpt.model, seed);
  for (auto& [name, m] : ckpt.params.tensors) {
    for (const auto& p : prefixes) {
      if (has_prefix(name, p)) m = fresh.at(name);
    }
  }
  for (const auto& p : prefixes) {
    ckpt.trained.erase(p);
    ckpt.adam.m.clear();
    ckpt.adam.v.clear();
  }
}

RetrievalAccuracy training_retrieval(const Checkpoint& ckpt, const std::vector<UtteranceData>& data,
                                     const LossConfig& loss) {
  std::vector<Matrix<float>> s = cached_embeddings(ckpt, data, EmbeddingSource::kSpeech);
  std::vector<Matrix<float>> p = cached_embeddings(ckpt, data, EmbeddingSource::kPhoneme);
  const auto scores = frame_retrieval_accuracy(flatten_frames(s), flatten_frames(p), loss.l2_normalize);
  return {scores.speech_to_phoneme, scores.phoneme_to_speech};
}

void append_log(const std::filesystem::path& path, const StepRecord& r) {
  nlohmann::json j;
  j["stage"] = r.stage;
  j["step"] = r.step;
  j["lr"] = r.lr;
  j["contrastive"] = r.loss.contrastive;
  j["mse"] = r.loss.mse;
  j["kl"] = r.loss.kl;
  if (r.loss.embed_mse) j["embed_mse"] = *r.loss.embed_mse;
  if (r.loss.phoneme_ce) j["phoneme_ce"] = *r.loss.phoneme_ce;
  j["total"] = r.loss.total;
  j["grad_norm"] = r.grad_norm;
  j["clipped_grad_norm"] = r.clipped_norm;
  if (r.retrieval_s2p) j["retrieval_s2p"] = *r.retrieval_s2p;
  if (r.retrieval_p2s) j["retrieval_p2s"] = *r.retrieval_p2s;
  j["wall_ms"] = r.wall_ms;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to " + path.string());
  out << j.dump() << "\n";
}

}  // namespace ctap
