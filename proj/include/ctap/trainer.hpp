#ifndef CTAP_TRAINER_HPP
#define CTAP_TRAINER_HPP

// Pretraining and the three fine-tuning schedules.

#include "ctap/checkpoint.hpp"
#include "ctap/corpus.hpp"
#include "ctap/frontend.hpp"
#include "ctap/losses.hpp"
#include "ctap/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctap {

struct LossConfig {
  LossVariant variant = LossVariant::kFull;
  bool l2_normalize = true;
  bool learn_tau = true;
};

// One utterance with everything the batch builder needs precomputed.
struct UtteranceData {
  std::string id;
  std::string speaker_id;
  MelSpectrogram mel;
  PhonemeSequence phonemes;
};

// Loads the WAVs of the listed utterances and extracts their mels.
std::vector<UtteranceData> load_utterances(const CorpusManifest& manifest, const std::vector<const Utterance*>& utts);

template <typename Scalar>
struct TrainingExample {
  Matrix<Scalar> mel;  // T x 40
  PhonemeSequence phonemes;
  Matrix<Scalar> prompt;  // kPromptFrames x 40
  int prompt_valid = 0;
};

template <typename Scalar>
struct BatchLoss {
  Var<Scalar> total;
  LossComponents components;
  LossBreakdown breakdown;
};

// Forward pass of all networks over a batch and the variant's total loss.
template <typename Scalar>
BatchLoss<Scalar> batch_loss(Graph<Scalar>& g, const ModelConfig& model, const LossConfig& loss,
                             const std::vector<TrainingExample<Scalar>>& batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const VariantTerms terms = terms_for(loss.variant);
  std::vector<Var<Scalar>> speech;
  std::vector<Var<Scalar>> phoneme;
  for (const auto& ex : batch) {
    if (ex.phonemes.total_frames() != ex.mel.rows()) {
      throw std::invalid_argument("phoneme durations do not sum to the mel length");
    }
    speech.push_back(speech_encoder(g, model, ex.mel));
    phoneme.push_back(phoneme_encoder(g, model, ex.phonemes));
  }
  Var<Scalar> s_all = ad::concat_rows(speech);
  Var<Scalar> p_all = ad::concat_rows(phoneme);
  Var<Scalar> tau = loss.learn_tau ? temperature(g, kMaxTemperature)
                                   : g.constant(Matrix<Scalar>::Constant(1, 1, Scalar(model.tau_init)));
  Var<Scalar> contrastive = ad::contrastive_loss(ad::similarity(s_all, p_all, tau, loss.l2_normalize));

  BatchLoss<Scalar> out;
  std::vector<Var<Scalar>> parts{contrastive};
  out.components.contrastive = contrastive.value()(0, 0);

  if (terms.reconstruction) {
    std::vector<Var<Scalar>> mel_s;
    std::vector<Var<Scalar>> mel_p;
    std::vector<Var<Scalar>> gt;
    std::vector<Var<Scalar>> kls;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto prompt = prompt_encoder(g, model, batch[b].prompt, batch[b].prompt_valid);
      mel_s.push_back(decoder(g, model, speech[b], prompt.g));
      mel_p.push_back(decoder(g, model, phoneme[b], prompt.g));
      gt.push_back(g.constant(batch[b].mel));
      kls.push_back(ad::kl_margin_loss(prompt.mu, prompt.sigma, Scalar(model.kl_margin)));
    }
    Var<Scalar> target = ad::concat_rows(gt);
    Var<Scalar> mse = ad::scale(ad::add(ad::mean_squared_error(ad::concat_rows(mel_s), target),
                                        ad::mean_squared_error(ad::concat_rows(mel_p), target)),
                                Scalar(0.5));
    Var<Scalar> kl = ad::scale(ad::sum_scalars(kls), Scalar(1) / Scalar(batch.size()));
    parts.push_back(mse);
    parts.push_back(kl);
    out.components.mse = mse.value()(0, 0);
    out.components.kl = kl.value()(0, 0);
  }
  if (terms.embed_mse) {
    Var<Scalar> e = ad::mean_squared_error(s_all, p_all);
    parts.push_back(e);
    out.components.embed_mse = e.value()(0, 0);
  }
  if (terms.phoneme_ce) {
    std::vector<int> targets;
    for (const auto& ex : batch) {
      const auto t = ex.phonemes.frame_targets();
      targets.insert(targets.end(), t.begin(), t.end());
    }
    std::vector<Var<Scalar>> logits_s;
    std::vector<Var<Scalar>> logits_p;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      logits_s.push_back(phoneme_decoder(g, model, speech[b]));
      logits_p.push_back(phoneme_decoder(g, model, phoneme[b]));
    }
    Var<Scalar> ce = ad::add(ad::cross_entropy(ad::concat_rows(logits_s), targets),
                             ad::cross_entropy(ad::concat_rows(logits_p), targets));
    parts.push_back(ce);
    out.components.phoneme_ce = ce.value()(0, 0);
  }
  out.total = ad::sum_scalars(parts);
  out.breakdown = total_loss(out.components, loss.variant);
  return out;
}

struct TrainConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int warmup_steps = 0;
  int batch_size = 8;
  std::int64_t max_steps = 2000;
  std::uint64_t seed = 1;
  double grad_clip_norm = 1.0;
  // Each example is a random contiguous window covering at least this
  // fraction of its phonemes (pretraining) or frames (ASR head); 1 disables
  // cropping.
  double crop_fraction = 1.0;
  // ASR head only: all-silence clips added to the labeled set, clip k as
  // long as labeled utterance k.
  int silence_clips = 0;
  std::int64_t checkpoint_every = 500;
  std::int64_t eval_every = 100;
  LossConfig loss;
  std::set<std::string> freeze;  // sub-network prefixes
  std::filesystem::path checkpoint_path;  // empty: no periodic checkpoints
  std::filesystem::path log_path;         // empty: no log file
  std::string run_config;                 // echoed into checkpoints
};

struct StepRecord {
  std::string stage;
  std::int64_t step = 0;
  double lr = 0;
  LossBreakdown loss;
  double grad_norm = 0;     // before clipping
  double clipped_norm = 0;  // after clipping
  std::optional<double> retrieval_s2p;
  std::optional<double> retrieval_p2s;
  double wall_ms = 0;
};

struct TrainLog {
  std::vector<StepRecord> records;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Global L2 norm over a set of gradients; scales them in place so the norm is
// at most max_norm. Returns the norm before clipping.
double clip_gradients(std::map<std::string, Matrix<float>>& grads, double max_norm);

// In-place Adam step over the given gradients; step is 1-based.
void adam_update(Parameters<float>& params, AdamState& state, const std::map<std::string, Matrix<float>>& grads,
                 double lr, const TrainConfig& cfg, std::int64_t step);

// Trains from ckpt.params.step up to cfg.max_steps. Per-step randomness is
// derived from (cfg.seed, step), so stopping and resuming from a saved
// checkpoint reproduces the uninterrupted trajectory.
TrainLog pretrain(Checkpoint& ckpt, const std::vector<UtteranceData>& data, const TrainConfig& cfg);

struct FinetuneConfig {
  TrainConfig train;              // optimizer settings, seed, logging
  std::int64_t stage1_steps = 500;
  std::int64_t stage2_steps = 500;
};

// Stage 1 (speech only): encoders frozen, decoder + prompt encoder trained on
// MSE(decode(S, g)) + KL. Stage 2 (labeled pairs): decoder trained on
// MSE(decode(P, g)).
TrainLog finetune_tts(Checkpoint& ckpt, const std::vector<UtteranceData>& speech_only,
                      const std::vector<UtteranceData>& labeled, const FinetuneConfig& cfg);

// Stage 1 only, on the target speaker's speech. Phoneme labels are never read.
TrainLog finetune_vc(Checkpoint& ckpt, const std::vector<UtteranceData>& speech_only, const FinetuneConfig& cfg);

// Phoneme-decoder head on frozen speech embeddings with frame-level targets.
TrainLog train_asr_head(Checkpoint& ckpt, const std::vector<UtteranceData>& labeled, const TrainConfig& cfg);

// Fresh, seed-determined initialization of the named sub-networks.
void reinitialize(Checkpoint& ckpt, const std::vector<std::string>& prefixes, std::uint64_t seed);

// Frame retrieval over a set of utterances with the checkpoint's encoders.
struct RetrievalAccuracy {
  double speech_to_phoneme = 0;
  double phoneme_to_speech = 0;
};
RetrievalAccuracy training_retrieval(const Checkpoint& ckpt, const std::vector<UtteranceData>& data,
                                     const LossConfig& loss);

void append_log(const std::filesystem::path& path, const StepRecord& r);

}  // namespace ctap

#endif  // CTAP_TRAINER_HPP
