#include "ctap/config.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace ctap {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::map<std::string, std::string>& Config::defaults() {
  static const std::map<std::string, std::string> d = {
      // Corpus synthesis.
      {"corpus.dir", "corpus"},
      {"corpus.n_speakers", "2"},
      {"corpus.n_utterances", "10"},
      {"corpus.inventory_size", "6"},
      {"corpus.min_duration", "3"},
      {"corpus.max_duration", "10"},
      {"corpus.min_phonemes", "4"},
      {"corpus.max_phonemes", "6"},
      {"corpus.edge_silence", "true"},
      {"corpus.seed", "1"},
      // Partition fractions.
      {"split.pretrain", "0.8"},
      {"split.finetune_labeled", "0.0"},
      {"split.speech_only", "0.0"},
      {"split.test", "0.2"},
      {"split.seed", "1"},
      // Network.
      {"model.scale", "toy"},
      {"model.d", "16"},
      {"model.hidden", "32"},
      {"model.phoneme_dim", "64"},
      {"model.prompt_dim", "32"},
      {"model.heads", "4"},
      {"model.ffn_ratio", "4"},
      {"model.kernel", "3"},
      {"model.dropout", "0.1"},
      {"model.mel_mean", "-5"},
      {"model.mel_std", "4"},
      {"model.seed", "7"},
      // Objectives.
      {"loss.variant", "full"},
      {"loss.l2_normalize", "true"},
      {"loss.learn_tau", "true"},
      {"loss.tau_init", "14.285714285714286"},
      {"loss.kl_margin", "0.5"},
      // Pretraining.
      {"train.lr", "0.0002"},
      {"train.beta1", "0.9"},
      {"train.beta2", "0.999"},
      {"train.eps", "1e-8"},
      {"train.warmup_steps", "0"},
      {"train.batch_size", "8"},
      {"train.crop_fraction", "1"},
      {"train.max_steps", "2000"},
      {"train.seed", "1"},
      {"train.grad_clip_norm", "1.0"},
      {"train.checkpoint_every", "500"},
      {"train.eval_every", "100"},
      {"train.partition", "pretrain"},
      {"train.out", "runs/pretrain.ckpt"},
      {"train.log", "runs/pretrain.log.jsonl"},
      {"train.resume", ""},
      // Fine-tuning (TTS / VC).
      {"finetune.checkpoint", "runs/pretrain.ckpt"},
      {"finetune.lr", "0.001"},
      {"finetune.stage1_steps", "500"},
      {"finetune.stage2_steps", "500"},
      {"finetune.speech_partition", "pretrain"},
      {"finetune.labeled_partition", "pretrain"},
      {"finetune.target_speaker", ""},
      {"finetune.out", "runs/finetune.ckpt"},
      {"finetune.log", "runs/finetune.log.jsonl"},
      // ASR head.
      {"asr.checkpoint", "runs/pretrain.ckpt"},
      {"asr.lr", "0.001"},
      {"asr.steps", "1000"},
      {"asr.crop_fraction", "1"},
      {"asr.silence_clips", "8"},
      {"asr.partition", "pretrain"},
      {"asr.out", "runs/asr.ckpt"},
      {"asr.log", "runs/asr.log.jsonl"},
      // Inference and evaluation.
      {"infer.checkpoint", "runs/finetune.ckpt"},
      {"infer.requests", "requests.json"},
      {"infer.out_dir", "out"},
      {"infer.plots", "false"},
      {"eval.checkpoint", "runs/asr.ckpt"},
      {"eval.partition", "test"},
      {"eval.tasks", "tts,vc,asr"},
      {"eval.out_dir", "report"},
      {"eval.train_log", ""},
  };
  return d;
}

Config::Config() : values_(defaults()) {}

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

Config Config::parse(const std::string& text) {
  Config c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      c.set(line);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

void Config::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::set(const std::string& key, const std::string& value) {
  if (!defaults().count(key)) throw ConfigError("unknown config key '" + key + "'");
  values_[key] = value;
}

const std::string& Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

int Config::get_int(const std::string& key) const {
  const long long v = get_int64(key);
  if (v < INT32_MIN || v > INT32_MAX) throw ConfigError(key + ": value out of int range");
  return static_cast<int>(v);
}

long long Config::get_int64(const std::string& key) const {
  const std::string& s = get(key);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError(key + ": expected integer, got '" + s + "'");
  return v;
}

double Config::get_double(const std::string& key) const {
  const std::string& s = get(key);
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw ConfigError(key + ": expected number, got '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError(key + ": expected number, got '" + s + "'");
  }
}

bool Config::get_bool(const std::string& key) const {
  const std::string& s = get(key);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(key + ": expected boolean, got '" + s + "'");
}

std::string Config::dump() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

}  // namespace ctap
