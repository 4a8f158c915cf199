#include "ctap/eval.hpp"

#include "ctap/losses.hpp"
#include "ctap/model.hpp"
#include "ctap/plot.hpp"
#include "ctap/tasks.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ctap {

RetrievalScores frame_retrieval_accuracy(const Matrix<float>& s, const Matrix<float>& p, bool l2_normalize) {
  if (s.rows() != p.rows() || s.cols() != p.cols()) throw std::invalid_argument("retrieval: shape mismatch");
  RetrievalScores out;
  const Eigen::Index n = s.rows();
  if (n == 0) return out;
  Matrix<double> a = s.cast<double>();
  Matrix<double> b = p.cast<double>();
  if (l2_normalize) {
    a = l2_normalized_rows(a);
    b = l2_normalized_rows(b);
  }
  const Matrix<double> c = a * b.transpose();
  long rows_ok = 0;
  long cols_ok = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = c(i, i);
    bool row_best = true;
    bool col_best = true;
    for (Eigen::Index j = 0; j < n && (row_best || col_best); ++j) {
      if (j == i) continue;
      if (c(i, j) >= d) row_best = false;
      if (c(j, i) >= d) col_best = false;
    }
    rows_ok += row_best;
    cols_ok += col_best;
  }
  out.speech_to_phoneme = double(rows_ok) / double(n);
  out.phoneme_to_speech = double(cols_ok) / double(n);
  return out;
}

double msep(const PitchContour& pred, const PitchContour& gt) {
  const std::size_t n = std::min(pred.f0.size(), gt.f0.size());
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < n; ++t) {
    if (pred.f0[t] > 0.0 && gt.f0[t] > 0.0) {
      const double d = pred.f0[t] - gt.f0[t];
      sum += d * d;
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("msep: no frame is voiced in both contours");
  return sum / double(count);
}

std::size_t edit_distance(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<std::size_t> prev(b.size() + 1);
  std::vector<std::size_t> cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double phoneme_accuracy(const PhonemeSequence& pred, const PhonemeSequence& gt) {
  const auto p = collapse_runs(pred.ids).ids;
  const auto g = collapse_runs(gt.ids).ids;
  if (g.empty()) throw std::invalid_argument("phoneme_accuracy: empty ground truth");
  return std::clamp(1.0 - double(edit_distance(p, g)) / double(g.size()), 0.0, 1.0);
}

double mel_mse(const Matrix<float>& pred, const Matrix<float>& gt) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) throw std::invalid_argument("mel_mse: shape mismatch");
  if (pred.size() == 0) return 0.0;
  return (pred.cast<double>() - gt.cast<double>()).squaredNorm() / double(pred.size());
}

namespace {

void require_trained(const Checkpoint& ckpt, const std::string& task, const std::vector<std::string>& parts) {
  for (const auto& p : parts) {
    if (!ckpt.trained.count(p)) {
      throw std::invalid_argument("task '" + task + "' needs a trained " + p + " but the checkpoint has none");
    }
  }
}

std::vector<double> read_loss_curve(const std::filesystem::path& path) {
  std::vector<double> out;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open training log " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("total")) continue;
    out.push_back(j["total"].get<double>());
  }
  return out;
}

Matrix<float> stack_for_plot(const Matrix<float>& gt, const Matrix<float>& pred) {
  // bands on the vertical axis, time horizontal; ground truth above prediction
  Matrix<float> out(gt.cols() * 2, gt.rows());
  out.topRows(gt.cols()) = gt.transpose().colwise().reverse();
  out.bottomRows(gt.cols()) = pred.transpose().colwise().reverse();
  return out;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  std::size_t n = 0;
  for (double x : v) {
    if (std::isfinite(x)) {
      s += x;
      ++n;
    }
  }
  return n ? s / double(n) : std::nan("");
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

std::string eval_report(const Checkpoint& ckpt, const CorpusManifest& manifest,
                        const std::vector<const Utterance*>& utterances, const EvalOptions& options) {
  for (const auto& t : options.tasks) {
    if (t != "retrieval" && t != "tts" && t != "vc" && t != "asr") throw std::invalid_argument("unknown eval task '" + t + "'");
  }
  require_trained(ckpt, "retrieval", {kSpeechEncoder, kPhonemeEncoder});
  if (options.tasks.count("tts")) require_trained(ckpt, "tts", {kPromptEncoder, kDecoder});
  if (options.tasks.count("vc")) require_trained(ckpt, "vc", {kPromptEncoder, kDecoder});
  if (options.tasks.count("asr")) require_trained(ckpt, "asr", {kPhonemeDecoder});
  if (utterances.empty()) throw std::invalid_argument("no utterances to evaluate");

  std::filesystem::create_directories(options.out_dir);
  nlohmann::json report;
  report["format"] = "ctap-eval-report";
  report["version"] = 1;
  report["step"] = ckpt.params.step;
  report["utterances"] = utterances.size();

  std::vector<Matrix<float>> speech;
  std::vector<Matrix<float>> phoneme;
  Eigen::Index frames = 0;
  std::vector<double> tts_mse, tts_msep, vc_mse, vc_msep, asr_acc, floor_msep;
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    const Utterance& u = *utterances[i];
    const Waveform wav = load_waveform(manifest, u);
    const MelSpectrogram mel = mel_spectrogram(wav.samples, wav.sample_rate);
    speech.push_back(encode_speech(mel, ckpt.params, ckpt.model).vectors);
    phoneme.push_back(encode_phonemes(u.phonemes, ckpt.params, ckpt.model).vectors);
    frames += mel.num_frames();

    nlohmann::json row;
    row["id"] = u.id;
    row["speaker_id"] = u.speaker.speaker_id;
    std::optional<PitchContour> gt_pitch;
    auto pitch_error = [&](const MelSpectrogram& pred) {
      if (!gt_pitch) gt_pitch = extract_pitch(wav.samples, wav.sample_rate);
      const auto audio = griffin_lim(pred);
      try {
        return msep(extract_pitch(audio, kSampleRate), *gt_pitch);
      } catch (const std::invalid_argument&) {
        return std::nan("");
      }
    };
    if (options.tasks.count("tts") || options.tasks.count("vc")) {
      // Same pitch path applied to the ground-truth mel: the floor set by
      // phase reconstruction from 40 bands.
      const double f = pitch_error(mel);
      row["msep_resynthesis_floor"] = number_or_null(f);
      floor_msep.push_back(f);
    }
    if (options.tasks.count("tts")) {
      const auto pred = tts_infer(ckpt, TtsRequest{u.phonemes, wav});
      const double e = mel_mse(pred.frames, mel.frames);
      const double p = pitch_error(pred);
      row["tts_mel_mse"] = e;
      row["tts_msep"] = number_or_null(p);
      tts_mse.push_back(e);
      tts_msep.push_back(p);
      if (i == 0) write_heatmap_pgm(options.out_dir / "mel_tts.pgm", stack_for_plot(mel.frames, pred.frames), 2);
    }
    if (options.tasks.count("vc")) {
      const auto pred = vc_infer(ckpt, VcRequest{wav, wav});
      const double e = mel_mse(pred.frames, mel.frames);
      const double p = pitch_error(pred);
      row["vc_mel_mse"] = e;
      row["vc_msep"] = number_or_null(p);
      vc_mse.push_back(e);
      vc_msep.push_back(p);
      if (i == 0) write_heatmap_pgm(options.out_dir / "mel_vc.pgm", stack_for_plot(mel.frames, pred.frames), 2);
    }
    if (options.tasks.count("asr")) {
      const auto pred = asr_infer_mel(ckpt, mel);
      const double a = phoneme_accuracy(pred, u.phonemes);
      row["asr_accuracy"] = a;
      row["asr_prediction"] = pred.ids;
      asr_acc.push_back(a);
    }
    rows.push_back(row);
  }

  Matrix<float> s_all(frames, ckpt.model.d);
  Matrix<float> p_all(frames, ckpt.model.d);
  for (std::size_t i = 0, r = 0; i < speech.size(); r += static_cast<std::size_t>(speech[i].rows()), ++i) {
    s_all.middleRows(static_cast<Eigen::Index>(r), speech[i].rows()) = speech[i];
    p_all.middleRows(static_cast<Eigen::Index>(r), phoneme[i].rows()) = phoneme[i];
  }
  const auto retrieval = frame_retrieval_accuracy(s_all, p_all, options.l2_normalize);
  report["retrieval"] = {{"speech_to_phoneme", retrieval.speech_to_phoneme},
                         {"phoneme_to_speech", retrieval.phoneme_to_speech},
                         {"frames", frames}};
  {
    Matrix<double> a = s_all.cast<double>();
    Matrix<double> b = p_all.cast<double>();
    if (options.l2_normalize) {
      a = l2_normalized_rows(a);
      b = l2_normalized_rows(b);
    }
    write_heatmap_pgm(options.out_dir / "similarity.pgm", (a * b.transpose()).cast<float>(),
                      frames < 200 ? 4 : 1);
  }

  nlohmann::json summary;
  if (!floor_msep.empty()) summary["msep_resynthesis_floor"] = number_or_null(mean_of(floor_msep));
  if (options.tasks.count("tts")) summary["tts"] = {{"mel_mse", mean_of(tts_mse)}, {"msep", number_or_null(mean_of(tts_msep))}};
  if (options.tasks.count("vc")) summary["vc"] = {{"mel_mse", mean_of(vc_mse)}, {"msep", number_or_null(mean_of(vc_msep))}};
  if (options.tasks.count("asr")) summary["asr"] = {{"phoneme_accuracy", mean_of(asr_acc)}};
  report["summary"] = summary;
  report["per_utterance"] = rows;

  if (!options.train_log.empty()) {
    const auto curve = read_loss_curve(options.train_log);
    write_line_plot_ppm(options.out_dir / "loss_curve.ppm", {Series{"total", curve, 200, 30, 30}});
    report["loss_curve_points"] = curve.size();
  }

  const std::string text = report.dump(2);
  std::ofstream out(options.out_dir / "report.json", std::ios::trunc);
  if (!out) throw IoError("cannot write report into " + options.out_dir.string());
  out << text << "\n";
  return text;
}

}  // namespace ctap
