#ifndef CTAP_EVAL_HPP
#define CTAP_EVAL_HPP

// Objective metrics and the evaluation report.

#include "ctap/checkpoint.hpp"
#include "ctap/corpus.hpp"
#include "ctap/frontend.hpp"
#include "ctap/types.hpp"

#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace ctap {

struct RetrievalScores {
  double speech_to_phoneme = 0;  // rows of C whose argmax is the diagonal
  double phoneme_to_speech = 0;  // columns of C whose argmax is the diagonal
};

// s and p are flattened (N x d) frame embeddings; with l2_normalize the
// comparison uses cosine similarity. Ties count as misses.
RetrievalScores frame_retrieval_accuracy(const Matrix<float>& s, const Matrix<float>& p, bool l2_normalize = true);

// Mean squared f0 difference over frames voiced in both contours (Hz^2).
// Throws when no frame is voiced in both.
double msep(const PitchContour& pred, const PitchContour& gt);

// Levenshtein distance between id sequences.
std::size_t edit_distance(const std::vector<int>& a, const std::vector<int>& b);

// 1 - edit_distance(runs(pred), runs(gt)) / |runs(gt)|, clamped to [0, 1].
// Throws on an empty ground truth.
double phoneme_accuracy(const PhonemeSequence& pred, const PhonemeSequence& gt);

double mel_mse(const Matrix<float>& pred, const Matrix<float>& gt);

struct EvalOptions {
  // Frame retrieval is always reported; "retrieval" alone selects nothing else.
  std::set<std::string> tasks = {"tts", "vc", "asr"};
  std::filesystem::path out_dir = "report";
  std::filesystem::path train_log;  // optional: plotted as a loss curve
  bool l2_normalize = true;
};

// Runs the selected pipelines over the utterances, writes report.json plus
// PGM/PPM plots into out_dir and returns the report text.
std::string eval_report(const Checkpoint& ckpt, const CorpusManifest& manifest,
                        const std::vector<const Utterance*>& utterances, const EvalOptions& options);

}  // namespace ctap

#endif  // CTAP_EVAL_HPP
