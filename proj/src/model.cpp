#include "ctap/model.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

namespace ctap {

ModelConfig ModelConfig::toy() { return ModelConfig{}; }

ModelConfig ModelConfig::full() {
  ModelConfig c;
  c.d = 512;
  c.hidden = 512;
  c.phoneme_dim = 256;
  c.prompt_dim = 128;
  c.heads = 8;
  c.toy_scale = false;
  return c;
}

void ModelConfig::validate() const {
  if (d < 2) throw ModelConfigError("model.d must be >= 2");
  if (hidden < d) throw ModelConfigError("model.hidden must be >= model.d");
  if (phoneme_dim < 1 || prompt_dim < 1 || heads < 1 || ffn_ratio < 1) {
    throw ModelConfigError("model widths and counts must be >= 1");
  }
  if (hidden % heads != 0) throw ModelConfigError("model.hidden must be divisible by model.heads");
  if (kernel < 1 || kernel % 2 == 0) throw ModelConfigError("model.kernel must be odd");
  if (n_mels != kMelBands) throw ModelConfigError("model expects 40 mel bands");
  if (inventory_size < 2) throw ModelConfigError("inventory size must be >= 2");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ModelConfigError("model.dropout must be in [0, 1)");
  if (!(kl_margin >= 0.0)) throw ModelConfigError("kl margin must be >= 0");
  if (!(tau_init > 0.0)) throw ModelConfigError("tau_init must be positive");
  if (!(mel_std > 0.0)) throw ModelConfigError("model.mel_std must be positive");
}

std::string ModelConfig::serialize() const {
  std::ostringstream os;
  os.precision(17);
  os << "model.d = " << d << "\n"
     << "model.hidden = " << hidden << "\n"
     << "model.phoneme_dim = " << phoneme_dim << "\n"
     << "model.prompt_dim = " << prompt_dim << "\n"
     << "model.n_mels = " << n_mels << "\n"
     << "model.inventory_size = " << inventory_size << "\n"
     << "model.heads = " << heads << "\n"
     << "model.ffn_ratio = " << ffn_ratio << "\n"
     << "model.kernel = " << kernel << "\n"
     << "model.dropout = " << dropout << "\n"
     << "model.mel_mean = " << mel_mean << "\n"
     << "model.mel_std = " << mel_std << "\n"
     << "model.scale = " << (toy_scale ? "toy" : "full") << "\n"
     << "loss.kl_margin = " << kl_margin << "\n"
     << "loss.tau_init = " << tau_init << "\n";
  return os.str();
}

ModelConfig ModelConfig::deserialize(const std::string& text) {
  ModelConfig c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    const std::string k = trim(line.substr(0, eq));
    const std::string v = trim(line.substr(eq + 1));
    if (k == "model.d") c.d = std::stoi(v);
    else if (k == "model.hidden") c.hidden = std::stoi(v);
    else if (k == "model.phoneme_dim") c.phoneme_dim = std::stoi(v);
    else if (k == "model.prompt_dim") c.prompt_dim = std::stoi(v);
    else if (k == "model.n_mels") c.n_mels = std::stoi(v);
    else if (k == "model.inventory_size") c.inventory_size = std::stoi(v);
    else if (k == "model.heads") c.heads = std::stoi(v);
    else if (k == "model.ffn_ratio") c.ffn_ratio = std::stoi(v);
    else if (k == "model.kernel") c.kernel = std::stoi(v);
    else if (k == "model.dropout") c.dropout = std::stod(v);
    else if (k == "model.mel_mean") c.mel_mean = std::stod(v);
    else if (k == "model.mel_std") c.mel_std = std::stod(v);
    else if (k == "model.scale") c.toy_scale = v != "full";
    else if (k == "loss.kl_margin") c.kl_margin = std::stod(v);
    else if (k == "loss.tau_init") c.tau_init = std::stod(v);
    else throw ModelConfigError("unknown model config key '" + k + "'");
  }
  c.validate();
  return c;
}

namespace {

using Init = ParamSpec::Init;

void add_linear(std::vector<ParamSpec>& out, const std::string& name, Eigen::Index in, Eigen::Index outw,
                double std_scale = 1.0) {
  out.push_back({name + ".weight", in, outw, Init::kNormal, std_scale / std::sqrt(static_cast<double>(in))});
  out.push_back({name + ".bias", 1, outw, Init::kZero, 0.0});
}

void add_conv(std::vector<ParamSpec>& out, const std::string& name, int kernel, Eigen::Index in, Eigen::Index outw) {
  add_linear(out, name, kernel * in, outw);
}

void add_norm(std::vector<ParamSpec>& out, const std::string& name, Eigen::Index width) {
  out.push_back({name + ".gamma", 1, width, Init::kOne, 0.0});
  out.push_back({name + ".beta", 1, width, Init::kZero, 0.0});
}

void add_stack(std::vector<ParamSpec>& out, const ModelConfig& c, const std::string& prefix, int count) {
  const Eigen::Index h = c.hidden;
  for (int i = 0; i < count; ++i) {
    const std::string l = prefix + ".layers." + std::to_string(i);
    add_norm(out, l + ".ln1", h);
    for (const char* proj : {".q", ".k", ".v", ".out"}) add_linear(out, l + ".attn" + proj, h, h);
    add_norm(out, l + ".ln2", h);
    add_linear(out, l + ".ffn1", h, h * c.ffn_ratio);
    add_linear(out, l + ".ffn2", h * c.ffn_ratio, h);
  }
  add_norm(out, prefix + ".ln_post", h);
}

}  // namespace

std::vector<ParamSpec> parameter_specs(const ModelConfig& c) {
  c.validate();
  std::vector<ParamSpec> s;
  const Eigen::Index h = c.hidden;

  add_conv(s, kSpeechEncoder + ".conv1", c.kernel, c.n_mels, h);
  add_conv(s, kSpeechEncoder + ".conv2", c.kernel, h, h);
  add_stack(s, c, kSpeechEncoder, kSpeechTransformerLayers);
  add_linear(s, kSpeechEncoder + ".proj", h, c.d);

  s.push_back({kPhonemeEncoder + ".embedding", c.inventory_size, c.phoneme_dim, Init::kNormal, 1.0});
  add_conv(s, kPhonemeEncoder + ".conv", c.kernel, c.phoneme_dim, h);
  add_stack(s, c, kPhonemeEncoder, kPhonemeTransformerLayers);
  add_linear(s, kPhonemeEncoder + ".proj", h, c.d);

  for (int i = 0; i < kPromptConvLayers; ++i) {
    add_conv(s, kPromptEncoder + ".conv" + std::to_string(i), c.kernel, i == 0 ? c.n_mels : h, h);
  }
  const Eigen::Index squeeze = std::max<Eigen::Index>(1, h / 4);
  add_linear(s, kPromptEncoder + ".se.fc1", h, squeeze);
  add_linear(s, kPromptEncoder + ".se.fc2", squeeze, h);
  add_linear(s, kPromptEncoder + ".mu", h, c.prompt_dim, 0.1);
  s.push_back({kPromptEncoder + ".sigma.weight", h, c.prompt_dim, Init::kNormal, 0.1 / std::sqrt(double(h))});
  // softplus(log(e - 1)) = 1: the posterior starts at the prior scale.
  s.push_back({kPromptEncoder + ".sigma.bias", 1, c.prompt_dim, Init::kConstant, std::log(std::exp(1.0) - 1.0)});

  add_linear(s, kDecoder + ".in", c.d, h);
  add_linear(s, kDecoder + ".cond", c.prompt_dim, h);
  add_stack(s, c, kDecoder, kDecoderTransformerLayers);
  for (int i = 0; i < kDecoderConvLayers; ++i) add_conv(s, kDecoder + ".conv" + std::to_string(i), c.kernel, h, h);
  add_linear(s, kDecoder + ".out", h, c.n_mels);

  add_linear(s, kPhonemeDecoder + ".in", c.d, h);
  add_stack(s, c, kPhonemeDecoder, kPhonemeDecoderLayers);
  s.push_back({kPhonemeDecoder + ".out.weight", h, c.inventory_size, Init::kZero, 0.0});
  s.push_back({kPhonemeDecoder + ".out.bias", 1, c.inventory_size, Init::kZero, 0.0});

  s.push_back({kLossParams + ".log_tau", 1, 1, Init::kConstant, std::log(c.tau_init)});

  std::sort(s.begin(), s.end(), [](const ParamSpec& a, const ParamSpec& b) { return a.name < b.name; });
  return s;
}

std::uint64_t parameter_hash(const Parameters<float>& params, const std::string& prefix) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [name, m] : params.tensors) {
    if (!prefix.empty() && !has_prefix(name, prefix)) continue;
    mix(name.data(), name.size());
    const std::int64_t shape[2] = {m.rows(), m.cols()};
    mix(shape, sizeof(shape));
    mix(m.data(), sizeof(float) * static_cast<std::size_t>(m.size()));
  }
  return h;
}

JointEmbedding encode_speech(const MelSpectrogram& mel, const Parameters<float>& params, const ModelConfig& config) {
  Graph<float> g(params, Mode::kInfer, 0);
  return {speech_encoder(g, config, mel.frames).value(), EmbeddingSource::kSpeech};
}

JointEmbedding encode_phonemes(const PhonemeSequence& seq, const Parameters<float>& params, const ModelConfig& config) {
  Graph<float> g(params, Mode::kInfer, 0);
  return {phoneme_encoder(g, config, seq).value(), EmbeddingSource::kPhoneme};
}

PromptLatent encode_prompt(const MelSpectrogram& clip, const Parameters<float>& params, const ModelConfig& config,
                           Mode mode, std::uint64_t seed) {
  Graph<float> g(params, mode, seed);
  const auto out = prompt_encoder(g, config, clip.frames, clip.valid_frames);
  return {out.mu.value(), out.sigma.value(), out.g.value()};
}

MelSpectrogram decode(const JointEmbedding& embedding, const RowVector<float>& latent, const Parameters<float>& params,
                      const ModelConfig& config) {
  Graph<float> g(params, Mode::kInfer, 0);
  MelSpectrogram out;
  out.frames = decoder(g, config, g.constant(embedding.vectors), g.constant(Matrix<float>(latent))).value();
  out.valid_frames = out.num_frames();
  return out;
}

Matrix<float> decode_phonemes(const JointEmbedding& embedding, const Parameters<float>& params,
                              const ModelConfig& config) {
  Graph<float> g(params, Mode::kInfer, 0);
  return phoneme_decoder(g, config, g.constant(embedding.vectors)).value();
}

}  // namespace ctap
