// Command-line entry point for the whole workflow.

#include "ctap/audio_io.hpp"
#include "ctap/checkpoint.hpp"
#include "ctap/config.hpp"
#include "ctap/corpus.hpp"
#include "ctap/eval.hpp"
#include "ctap/model.hpp"
#include "ctap/plot.hpp"
#include "ctap/tasks.hpp"
#include "ctap/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace ctap;

namespace {

enum class Level { kError = 0, kInfo = 1, kDebug = 2 };

Level log_level() {
  const char* env = std::getenv("CTAP_LOG_LEVEL");
  if (!env) return Level::kInfo;
  const std::string v = env;
  if (v == "error") return Level::kError;
  if (v == "debug") return Level::kDebug;
  return Level::kInfo;
}

void log(Level level, const std::string& msg) {
  static const Level threshold = log_level();
  if (level > threshold) return;
  static const char* names[] = {"error", "info", "debug"};
  std::cerr << "[" << names[static_cast<int>(level)] << "] " << msg << "\n";
}

struct Context {
  Config config;
  fs::path workdir = ".";

  fs::path path(const std::string& key) const { return resolve(config.get(key)); }
  fs::path resolve(const std::string& p) const {
    if (p.empty()) return {};
    const fs::path fp(p);
    return fp.is_absolute() ? fp : workdir / fp;
  }
  fs::path manifest() const { return path("corpus.dir") / "manifest.json"; }
};

// Writes the effective configuration as the first record of a run log.
void start_run_log(const fs::path& log_path, const Context& ctx, const std::string& command) {
  if (log_path.empty()) return;
  if (log_path.has_parent_path()) fs::create_directories(log_path.parent_path());
  std::ofstream out(log_path, std::ios::trunc);
  nlohmann::json j;
  j["event"] = "config";
  j["command"] = command;
  j["effective_config"] = ctx.config.values();
  out << j.dump() << "\n";
}

ModelConfig model_config(const Config& c, int inventory_size) {
  ModelConfig m = c.get("model.scale") == "toy" ? ModelConfig::toy() : ModelConfig::full();
  if (c.get("model.scale") != "toy" && c.get("model.scale") != "full") {
    throw ConfigError("model.scale must be toy or full");
  }
  const auto& def = Config::defaults();
  auto override_int = [&](const char* key, int& field) {
    if (c.get(key) != def.at(key)) field = c.get_int(key);
  };
  override_int("model.d", m.d);
  override_int("model.hidden", m.hidden);
  override_int("model.phoneme_dim", m.phoneme_dim);
  override_int("model.prompt_dim", m.prompt_dim);
  override_int("model.heads", m.heads);
  override_int("model.ffn_ratio", m.ffn_ratio);
  override_int("model.kernel", m.kernel);
  m.dropout = c.get_double("model.dropout");
  m.mel_mean = c.get_double("model.mel_mean");
  m.mel_std = c.get_double("model.mel_std");
  m.kl_margin = c.get_double("loss.kl_margin");
  m.tau_init = c.get_double("loss.tau_init");
  m.inventory_size = inventory_size;
  m.validate();
  return m;
}

LossConfig loss_config(const Config& c) {
  LossConfig l;
  l.variant = parse_loss_variant(c.get("loss.variant"));
  l.l2_normalize = c.get_bool("loss.l2_normalize");
  l.learn_tau = c.get_bool("loss.learn_tau");
  return l;
}

TrainConfig train_config(const Context& ctx) {
  const Config& c = ctx.config;
  TrainConfig t;
  t.lr = c.get_double("train.lr");
  t.beta1 = c.get_double("train.beta1");
  t.beta2 = c.get_double("train.beta2");
  t.eps = c.get_double("train.eps");
  t.warmup_steps = c.get_int("train.warmup_steps");
  t.batch_size = c.get_int("train.batch_size");
  t.max_steps = c.get_int64("train.max_steps");
  t.crop_fraction = c.get_double("train.crop_fraction");
  t.seed = static_cast<std::uint64_t>(c.get_int64("train.seed"));
  t.grad_clip_norm = c.get_double("train.grad_clip_norm");
  t.checkpoint_every = c.get_int64("train.checkpoint_every");
  t.eval_every = c.get_int64("train.eval_every");
  t.loss = loss_config(c);
  t.run_config = c.dump();
  return t;
}

std::vector<UtteranceData> partition_data(const CorpusManifest& m, const std::string& partition,
                                          const std::string& speaker = "") {
  std::vector<const Utterance*> utts;
  for (const Utterance* u : m.partition(parse_partition(partition))) {
    if (speaker.empty() || u->speaker.speaker_id == speaker) utts.push_back(u);
  }
  return load_utterances(m, utts);
}

int cmd_synth(const Context& ctx) {
  const Config& c = ctx.config;
  CorpusConfig cc;
  cc.n_speakers = c.get_int("corpus.n_speakers");
  cc.n_utterances = c.get_int("corpus.n_utterances");
  cc.inventory_size = c.get_int("corpus.inventory_size");
  cc.min_duration = c.get_int("corpus.min_duration");
  cc.max_duration = c.get_int("corpus.max_duration");
  cc.min_phonemes = c.get_int("corpus.min_phonemes");
  cc.max_phonemes = c.get_int("corpus.max_phonemes");
  cc.edge_silence = c.get_bool("corpus.edge_silence");
  cc.seed = static_cast<std::uint64_t>(c.get_int64("corpus.seed"));
  const auto m = synth_corpus(cc, ctx.path("corpus.dir"));
  log(Level::kInfo, "wrote " + std::to_string(m.utterances.size()) + " utterances to " + ctx.path("corpus.dir").string());
  return 0;
}

int cmd_split(const Context& ctx) {
  const Config& c = ctx.config;
  const auto m = load_manifest(ctx.manifest());
  std::map<Partition, double> ratios = {
      {Partition::kPretrain, c.get_double("split.pretrain")},
      {Partition::kFinetuneLabeled, c.get_double("split.finetune_labeled")},
      {Partition::kSpeechOnly, c.get_double("split.speech_only")},
      {Partition::kTest, c.get_double("split.test")},
  };
  const auto out = split_corpus(m, ratios, static_cast<std::uint64_t>(c.get_int64("split.seed")));
  save_manifest(out, ctx.manifest());
  for (const auto& [p, _] : ratios) {
    log(Level::kInfo, to_string(p) + ": " + std::to_string(out.partition(p).size()) + " utterances");
  }
  return 0;
}

void log_records(const TrainLog& log_out) {
  for (const auto& r : log_out.records) {
    std::ostringstream os;
    os << r.stage << " step " << r.step << " loss " << r.loss.total;
    if (r.retrieval_s2p) os << " retrieval " << *r.retrieval_s2p << "/" << *r.retrieval_p2s;
    log(Level::kDebug, os.str());
  }
  if (!log_out.records.empty()) {
    const auto& r = log_out.records.back();
    log(Level::kInfo, r.stage + " finished at step " + std::to_string(r.step) + ", loss " + std::to_string(r.loss.total));
  }
}

int cmd_pretrain(const Context& ctx) {
  const auto m = load_manifest(ctx.manifest());
  const auto data = partition_data(m, ctx.config.get("train.partition"));
  TrainConfig t = train_config(ctx);
  t.checkpoint_path = ctx.path("train.out");
  t.log_path = ctx.path("train.log");
  Checkpoint ckpt;
  const fs::path resume = ctx.path("train.resume");
  if (!resume.empty()) {
    ckpt = load_checkpoint(resume);
    log(Level::kInfo, "resuming from step " + std::to_string(ckpt.params.step));
  } else {
    ckpt.model = model_config(ctx.config, m.inventory.size());
    ckpt.params = init_model<float>(ckpt.model, static_cast<std::uint64_t>(ctx.config.get_int64("model.seed")));
  }
  if (resume.empty() || t.log_path != resume) start_run_log(t.log_path, ctx, "pretrain");
  log_records(pretrain(ckpt, data, t));
  log(Level::kInfo, "checkpoint written to " + t.checkpoint_path.string());
  return 0;
}

FinetuneConfig finetune_config(const Context& ctx) {
  FinetuneConfig f;
  f.train = train_config(ctx);
  f.train.lr = ctx.config.get_double("finetune.lr");
  f.train.checkpoint_path = ctx.path("finetune.out");
  f.train.log_path = ctx.path("finetune.log");
  f.stage1_steps = ctx.config.get_int64("finetune.stage1_steps");
  f.stage2_steps = ctx.config.get_int64("finetune.stage2_steps");
  return f;
}

int cmd_finetune(const Context& ctx, bool tts) {
  const auto m = load_manifest(ctx.manifest());
  Checkpoint ckpt = load_checkpoint(ctx.path("finetune.checkpoint"));
  const auto f = finetune_config(ctx);
  start_run_log(f.train.log_path, ctx, tts ? "finetune-tts" : "finetune-vc");
  const std::string speaker = ctx.config.get("finetune.target_speaker");
  const auto speech = partition_data(m, ctx.config.get("finetune.speech_partition"), tts ? "" : speaker);
  if (tts) {
    const auto labeled = partition_data(m, ctx.config.get("finetune.labeled_partition"));
    log_records(finetune_tts(ckpt, speech, labeled, f));
  } else {
    log_records(finetune_vc(ckpt, speech, f));
  }
  log(Level::kInfo, "checkpoint written to " + f.train.checkpoint_path.string());
  return 0;
}

int cmd_train_asr(const Context& ctx) {
  const auto m = load_manifest(ctx.manifest());
  Checkpoint ckpt = load_checkpoint(ctx.path("asr.checkpoint"));
  TrainConfig t = train_config(ctx);
  t.lr = ctx.config.get_double("asr.lr");
  t.max_steps = ctx.config.get_int64("asr.steps");
  t.crop_fraction = ctx.config.get_double("asr.crop_fraction");
  t.silence_clips = ctx.config.get_int("asr.silence_clips");
  t.checkpoint_path = ctx.path("asr.out");
  t.log_path = ctx.path("asr.log");
  start_run_log(t.log_path, ctx, "train-asr");
  log_records(train_asr_head(ckpt, partition_data(m, ctx.config.get("asr.partition")), t));
  log(Level::kInfo, "checkpoint written to " + t.checkpoint_path.string());
  return 0;
}

int cmd_infer(const Context& ctx, const std::string& task) {
  const Checkpoint ckpt = load_checkpoint(ctx.path("infer.checkpoint"));
  const auto requests = load_requests(ctx.path("infer.requests"));
  const fs::path out_dir = ctx.path("infer.out_dir");
  const bool plots = ctx.config.get_bool("infer.plots");
  fs::create_directories(out_dir);
  nlohmann::json results = nlohmann::json::array();
  int handled = 0;
  for (const auto& r : requests) {
    if (r.task != task) continue;
    ++handled;
    nlohmann::json row;
    row["id"] = r.id;
    if (task == "asr") {
      const auto pred = asr_infer(ckpt, read_wav(r.source_wav));
      row["phonemes"] = pred.ids;
      row["durations"] = pred.durations;
    } else {
      const MelSpectrogram mel = task == "tts" ? tts_infer(ckpt, TtsRequest{r.phonemes, read_wav(r.prompt_wav)})
                                               : vc_infer(ckpt, VcRequest{read_wav(r.source_wav), read_wav(r.prompt_wav)});
      const fs::path mel_path = out_dir / (r.id + ".mel");
      write_mel(mel_path, mel.frames);
      row["mel"] = mel_path.filename().string();
      row["frames"] = mel.num_frames();
      if (plots) write_heatmap_pgm(out_dir / (r.id + ".pgm"), mel.frames.transpose().colwise().reverse(), 2);
    }
    results.push_back(row);
    log(Level::kDebug, task + " request " + r.id + " done");
  }
  std::ofstream(out_dir / (task + "_results.json")) << results.dump(2) << "\n";
  log(Level::kInfo, std::to_string(handled) + " " + task + " requests written to " + out_dir.string());
  return 0;
}

int cmd_eval(const Context& ctx) {
  const auto m = load_manifest(ctx.manifest());
  const Checkpoint ckpt = load_checkpoint(ctx.path("eval.checkpoint"));
  EvalOptions o;
  o.tasks.clear();
  std::stringstream ss(ctx.config.get("eval.tasks"));
  for (std::string t; std::getline(ss, t, ',');) {
    if (!t.empty()) o.tasks.insert(t);
  }
  o.out_dir = ctx.path("eval.out_dir");
  o.train_log = ctx.path("eval.train_log");
  o.l2_normalize = ctx.config.get_bool("loss.l2_normalize");
  std::cout << eval_report(ckpt, m, m.partition(parse_partition(ctx.config.get("eval.partition"))), o) << "\n";
  return 0;
}

int cmd_inspect(const fs::path& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  std::cout << "step = " << ckpt.params.step << "\n";
  std::cout << "hash = " << std::hex << checkpoint_hash(ckpt) << std::dec << "\n";
  std::cout << "trained =";
  for (const auto& t : ckpt.trained) std::cout << " " << t;
  std::cout << "\n\n# model\n" << ckpt.model.serialize();
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& [name, m] : ckpt.params.tensors) {
    counts[name.substr(0, name.find('.'))] += static_cast<std::size_t>(m.size());
    total += static_cast<std::size_t>(m.size());
  }
  std::cout << "\n# parameters\n";
  for (const auto& [prefix, n] : counts) std::cout << prefix << " = " << n << "\n";
  std::cout << "total = " << total << "\n";
  if (!ckpt.run_config.empty()) std::cout << "\n# run config\n" << ckpt.run_config;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive speech/phoneme pretraining toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> overrides;
  std::string workdir = ".";
  std::string inspect_path;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"synth-corpus", "Render the synthetic corpus and its manifest"},
      {"split", "Assign utterances to partitions"},
      {"pretrain", "Contrastive pretraining"},
      {"finetune-tts", "Two-stage decoder fine-tuning for TTS"},
      {"finetune-vc", "Speech-only decoder fine-tuning for VC"},
      {"train-asr", "Train the phoneme decoder head"},
      {"infer-tts", "Synthesize mels from phoneme requests"},
      {"infer-vc", "Convert source speech to the prompt's voice"},
      {"infer-asr", "Recognize phonemes from speech"},
      {"eval", "Objective metrics and plots"},
      {"inspect-checkpoint", "Print a checkpoint summary"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    if (name == "inspect-checkpoint") {
      sub->add_option("checkpoint", inspect_path, "Checkpoint file")->required();
    } else {
      sub->add_option("--config", config_path, "Config file (key = value lines)");
      sub->add_option("--set", overrides, "Override one key: --set key=value");
      sub->add_option("--workdir", workdir, "Base directory for relative paths");
    }
    subs[name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  }

  Context ctx;
  try {
    if (!config_path.empty()) ctx.config = Config::from_file(config_path);
    for (const auto& o : overrides) ctx.config.set(o);
    ctx.workdir = workdir;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  }

  try {
    const auto is = [&](const char* n) { return subs.at(n)->parsed(); };
    if (is("inspect-checkpoint")) return cmd_inspect(inspect_path);
    log(Level::kDebug, "effective config:\n" + ctx.config.dump());
    if (is("synth-corpus")) return cmd_synth(ctx);
    if (is("split")) return cmd_split(ctx);
    if (is("pretrain")) return cmd_pretrain(ctx);
    if (is("finetune-tts")) return cmd_finetune(ctx, true);
    if (is("finetune-vc")) return cmd_finetune(ctx, false);
    if (is("train-asr")) return cmd_train_asr(ctx);
    if (is("infer-tts")) return cmd_infer(ctx, "tts");
    if (is("infer-vc")) return cmd_infer(ctx, "vc");
    if (is("infer-asr")) return cmd_infer(ctx, "asr");
    if (is("eval")) return cmd_eval(ctx);
  } catch (const ConfigError& e) {
    log(Level::kError, std::string("config error: ") + e.what());
    return 1;
  } catch (const std::exception& e) {
    log(Level::kError, e.what());
    return 2;
  }
  return 1;
}
