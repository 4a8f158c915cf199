#ifndef CTAP_MODEL_HPP
#define CTAP_MODEL_HPP

// The four jointly trained networks (speech encoder, phoneme encoder, prompt
// encoder, decoder), the length regulator and the phoneme-decoder head.
//
// Everything is templated on the scalar type: training runs in float, the
// gradient checks in double. All sub-networks preserve the number of frames.

#include "ctap/autodiff.hpp"
#include "ctap/frontend.hpp"
#include "ctap/types.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace ctap {

// Layer counts are part of the architecture, not the configuration.
inline constexpr int kSpeechConvLayers = 2;
inline constexpr int kSpeechTransformerLayers = 6;
inline constexpr int kPhonemeTransformerLayers = 4;
inline constexpr int kPromptConvLayers = 6;
inline constexpr int kDecoderTransformerLayers = 6;
inline constexpr int kDecoderConvLayers = 5;
inline constexpr int kPhonemeDecoderLayers = 6;

class ModelConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ModelConfig {
  int d = 16;               // joint embedding width
  int hidden = 32;          // transformer / conv width
  int phoneme_dim = 64;     // phoneme lookup width
  int prompt_dim = 32;      // prompt latent width
  int n_mels = kMelBands;
  int inventory_size = 6;
  int heads = 4;
  int ffn_ratio = 4;
  int kernel = 3;
  double dropout = 0.1;
  double kl_margin = 0.5;   // nats
  double tau_init = 1.0 / 0.07;
  // Fixed affine normalization applied to log-mels entering the networks
  // and undone on decoder output.
  double mel_mean = -5.0;
  double mel_std = 4.0;
  bool toy_scale = true;

  static ModelConfig toy();
  static ModelConfig full();

  void validate() const;

  // key=value lines, the same syntax as the run configuration.
  std::string serialize() const;
  static ModelConfig deserialize(const std::string& text);

  bool operator==(const ModelConfig&) const = default;
};

struct ParamSpec {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  enum class Init { kZero, kOne, kNormal, kConstant } init = Init::kNormal;
  double value = 0.0;  // std for kNormal, fill for kConstant
};

// Every parameter with its shape and initializer, sorted by name.
std::vector<ParamSpec> parameter_specs(const ModelConfig& config);

template <typename Scalar>
struct Parameters {
  std::map<std::string, Matrix<Scalar>> tensors;
  std::int64_t step = 0;

  const Matrix<Scalar>& at(const std::string& name) const {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw std::out_of_range("no parameter named " + name);
    return it->second;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [_, m] : tensors) n += static_cast<std::size_t>(m.size());
    return n;
  }

  template <typename To>
  Parameters<To> cast() const {
    Parameters<To> out;
    out.step = step;
    for (const auto& [k, m] : tensors) out.tensors[k] = m.template cast<To>();
    return out;
  }
};

// Deterministic initialization: one RNG stream consumed in name order.
template <typename Scalar>
Parameters<Scalar> init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Parameters<Scalar> p;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& spec : parameter_specs(config)) {
    Matrix<double> m(spec.rows, spec.cols);
    switch (spec.init) {
      case ParamSpec::Init::kZero:
        m.setZero();
        break;
      case ParamSpec::Init::kOne:
        m.setOnes();
        break;
      case ParamSpec::Init::kConstant:
        m.setConstant(spec.value);
        break;
      case ParamSpec::Init::kNormal:
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = spec.value * normal(rng);
        break;
    }
    p.tensors.emplace(spec.name, m.cast<Scalar>());
  }
  return p;
}

// FNV-1a over names, shapes and float32 bytes of the selected parameters.
std::uint64_t parameter_hash(const Parameters<float>& params, const std::string& prefix = "");

enum class Mode { kTrain, kInfer };

// Sub-network name prefixes.
inline const std::string kSpeechEncoder = "speech_encoder";
inline const std::string kPhonemeEncoder = "phoneme_encoder";
inline const std::string kPromptEncoder = "prompt_encoder";
inline const std::string kDecoder = "decoder";
inline const std::string kPhonemeDecoder = "phoneme_decoder";
inline const std::string kLossParams = "loss";

inline bool has_prefix(const std::string& name, const std::string& prefix) {
  return name.size() > prefix.size() && name.compare(0, prefix.size(), prefix) == 0 && name[prefix.size()] == '.';
}

// One forward pass: binds parameters onto a fresh tape and owns the RNG
// stream used for dropout and latent sampling.
template <typename Scalar>
class Graph {
 public:
  using Trainable = std::function<bool(const std::string&)>;

  Graph(const Parameters<Scalar>& params, Mode mode, std::uint64_t seed, Trainable trainable = {},
        double dropout = 0.0)
      : params_(&params), mode_(mode), rng_(seed), trainable_(std::move(trainable)), dropout_(dropout) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Tape<Scalar>& tape() { return tape_; }
  bool training() const { return mode_ == Mode::kTrain; }
  std::mt19937_64& rng() { return rng_; }

  Var<Scalar> param(const std::string& name) {
    const auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    const Matrix<Scalar>& value = params_->at(name);
    Var<Scalar> v = (trainable_ && trainable_(name)) ? tape_.leaf(value) : tape_.constant(value);
    bound_.emplace(name, v);
    return v;
  }

  Var<Scalar> constant(Matrix<Scalar> m) { return tape_.constant(std::move(m)); }

  // Inverted dropout, active only in training mode.
  Var<Scalar> dropout(Var<Scalar> x) {
    if (!training() || dropout_ <= 0.0) return x;
    std::bernoulli_distribution keep(1.0 - dropout_);
    const Scalar s = Scalar(1.0 / (1.0 - dropout_));
    Matrix<Scalar> mask(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng_) ? s : Scalar(0);
    return ad::apply_mask(x, std::move(mask));
  }

  // Gradients of every bound trainable parameter after tape().backward().
  std::map<std::string, Matrix<Scalar>> gradients() const {
    std::map<std::string, Matrix<Scalar>> out;
    for (const auto& [name, v] : bound_) {
      if (!v.requires_grad()) continue;
      const Matrix<Scalar>& g = tape_.grad(v);
      out[name] = g.size() ? g : Matrix<Scalar>::Zero(v.rows(), v.cols());
    }
    return out;
  }

 private:
  Tape<Scalar> tape_;
  const Parameters<Scalar>* params_;
  Mode mode_;
  std::mt19937_64 rng_;
  Trainable trainable_;
  double dropout_;
  std::unordered_map<std::string, Var<Scalar>> bound_;
};

template <typename Scalar>
Matrix<Scalar> sinusoidal_positions(Eigen::Index frames, Eigen::Index width) {
  Matrix<Scalar> pe(frames, width);
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (Eigen::Index i = 0; i < width; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
      const double a = static_cast<double>(t) * rate;
      pe(t, i) = static_cast<Scalar>(i % 2 == 0 ? std::sin(a) : std::cos(a));
    }
  }
  return pe;
}

// Repeats row i durations[i] times, preserving order.
template <typename Scalar>
Var<Scalar> length_regulate(Var<Scalar> rows, const std::vector<int>& durations) {
  if (static_cast<Eigen::Index>(durations.size()) != rows.rows()) {
    throw std::invalid_argument("length_regulate: durations do not match the number of rows");
  }
  std::vector<Eigen::Index> index;
  for (std::size_t i = 0; i < durations.size(); ++i) {
    if (durations[i] <= 0) throw std::invalid_argument("length_regulate: durations must be >= 1");
    index.insert(index.end(), static_cast<std::size_t>(durations[i]), static_cast<Eigen::Index>(i));
  }
  return ad::gather_rows(rows, std::move(index));
}

template <typename Scalar>
Matrix<Scalar> length_regulate(const Matrix<Scalar>& rows, const std::vector<int>& durations) {
  Tape<Scalar> tape;
  return length_regulate(tape.constant(rows), durations).value();
}

namespace layers {

template <typename Scalar>
Var<Scalar> linear(Graph<Scalar>& g, const std::string& prefix, Var<Scalar> x) {
  return ad::add_row(ad::matmul(x, g.param(prefix + ".weight")), g.param(prefix + ".bias"));
}

template <typename Scalar>
Var<Scalar> conv(Graph<Scalar>& g, const ModelConfig& c, const std::string& prefix, Var<Scalar> x) {
  return ad::conv1d(x, g.param(prefix + ".weight"), g.param(prefix + ".bias"), c.kernel);
}

template <typename Scalar>
Var<Scalar> norm(Graph<Scalar>& g, const std::string& prefix, Var<Scalar> x) {
  Var<Scalar> gamma = g.param(prefix + ".gamma");
  Var<Scalar> beta = g.param(prefix + ".beta");
  return ad::layer_norm(x, &gamma, &beta);
}

template <typename Scalar>
Var<Scalar> add_positions(Graph<Scalar>& g, Var<Scalar> x) {
  return ad::add(x, g.constant(sinusoidal_positions<Scalar>(x.rows(), x.cols())));
}

template <typename Scalar>
Var<Scalar> self_attention(Graph<Scalar>& g, const ModelConfig& c, const std::string& prefix, Var<Scalar> x) {
  const Eigen::Index head_dim = c.hidden / c.heads;
  Var<Scalar> q = linear(g, prefix + ".q", x);
  Var<Scalar> k = linear(g, prefix + ".k", x);
  Var<Scalar> v = linear(g, prefix + ".v", x);
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(head_dim));
  std::vector<Var<Scalar>> heads;
  for (int h = 0; h < c.heads; ++h) {
    Var<Scalar> qh = ad::slice_cols(q, h * head_dim, head_dim);
    Var<Scalar> kh = ad::slice_cols(k, h * head_dim, head_dim);
    Var<Scalar> vh = ad::slice_cols(v, h * head_dim, head_dim);
    Var<Scalar> weights = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), scale));
    heads.push_back(ad::matmul(weights, vh));
  }
  return linear(g, prefix + ".out", c.heads == 1 ? heads.front() : ad::concat_cols(heads));
}

// Pre-norm transformer block: x + Attn(LN(x)), then x + FFN(LN(x)).
template <typename Scalar>
Var<Scalar> transformer(Graph<Scalar>& g, const ModelConfig& c, const std::string& prefix, Var<Scalar> x) {
  Var<Scalar> a = self_attention(g, c, prefix + ".attn", norm(g, prefix + ".ln1", x));
  x = ad::add(x, g.dropout(a));
  Var<Scalar> f = linear(g, prefix + ".ffn2", ad::gelu(linear(g, prefix + ".ffn1", norm(g, prefix + ".ln2", x))));
  return ad::add(x, g.dropout(f));
}

template <typename Scalar>
Var<Scalar> transformer_stack(Graph<Scalar>& g, const ModelConfig& c, const std::string& prefix, int count,
                              Var<Scalar> x) {
  x = g.dropout(add_positions(g, x));
  for (int i = 0; i < count; ++i) x = transformer(g, c, prefix + ".layers." + std::to_string(i), x);
  return norm(g, prefix + ".ln_post", x);
}

template <typename Scalar>
Var<Scalar> normalize_mel(Graph<Scalar>& g, const ModelConfig& c, const Matrix<Scalar>& mel) {
  if (mel.cols() != c.n_mels) throw std::invalid_argument("expected " + std::to_string(c.n_mels) + " mel bands");
  if (mel.rows() < 1) throw std::invalid_argument("mel has no frames");
  return g.constant(((mel.array() - Scalar(c.mel_mean)) / Scalar(c.mel_std)).matrix());
}

}  // namespace layers

// Mel (T x n_mels, natural-log units) -> T x d layer-normalized rows.
template <typename Scalar>
Var<Scalar> speech_encoder(Graph<Scalar>& g, const ModelConfig& c, const Matrix<Scalar>& mel) {
  const std::string& p = kSpeechEncoder;
  Var<Scalar> x = layers::normalize_mel(g, c, mel);
  x = layers::conv(g, c, p + ".conv1", x);
  x = ad::gelu(x);
  x = layers::conv(g, c, p + ".conv2", x);
  x = layers::transformer_stack(g, c, p, kSpeechTransformerLayers, x);
  return ad::layer_norm(layers::linear(g, p + ".proj", x));
}

// Phoneme ids -> lookup -> length regulator -> T x d layer-normalized rows.
template <typename Scalar>
Var<Scalar> phoneme_encoder(Graph<Scalar>& g, const ModelConfig& c, const PhonemeSequence& seq) {
  seq.validate();
  if (seq.ids.empty()) throw std::invalid_argument("empty phoneme sequence");
  std::vector<Eigen::Index> ids;
  for (int id : seq.ids) {
    if (id < 0 || id >= c.inventory_size) throw std::out_of_range("phoneme id " + std::to_string(id) + " outside inventory");
    ids.push_back(id);
  }
  const std::string& p = kPhonemeEncoder;
  Var<Scalar> x = ad::gather_rows(g.param(p + ".embedding"), std::move(ids));
  x = length_regulate(x, seq.durations);
  x = ad::relu(layers::conv(g, c, p + ".conv", x));
  x = layers::transformer_stack(g, c, p, kPhonemeTransformerLayers, x);
  return ad::layer_norm(layers::linear(g, p + ".proj", x));
}

template <typename Scalar>
struct PromptVars {
  Var<Scalar> mu;     // 1 x prompt_dim
  Var<Scalar> sigma;  // 1 x prompt_dim, > 0
  Var<Scalar> g;      // mu + sigma * eps in training, mu at inference
};

inline constexpr double kSigmaFloor = 1e-4;

// kPromptFrames x n_mels clip whose first valid_frames rows are real.
template <typename Scalar>
PromptVars<Scalar> prompt_encoder(Graph<Scalar>& g, const ModelConfig& c, const Matrix<Scalar>& clip,
                                  int valid_frames) {
  if (clip.rows() != kPromptFrames) {
    throw std::invalid_argument("prompt clip must have exactly " + std::to_string(kPromptFrames) + " frames");
  }
  const std::string& p = kPromptEncoder;
  Var<Scalar> x = layers::normalize_mel(g, c, clip);
  for (int i = 0; i < kPromptConvLayers; ++i) x = ad::relu(layers::conv(g, c, p + ".conv" + std::to_string(i), x));

  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> w = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(kPromptFrames);
  const int real = valid_frames > 0 ? std::min(valid_frames, kPromptFrames) : kPromptFrames;
  w.head(real).setOnes();

  // Squeeze-and-excitation residual block over channels.
  Var<Scalar> squeeze = ad::weighted_mean_rows(x, w);
  Var<Scalar> excite = ad::sigmoid(layers::linear(g, p + ".se.fc2", ad::relu(layers::linear(g, p + ".se.fc1", squeeze))));
  x = ad::relu(ad::add(x, ad::mul_row(x, excite)));

  Var<Scalar> pooled = ad::weighted_mean_rows(x, w);
  PromptVars<Scalar> out;
  out.mu = layers::linear(g, p + ".mu", pooled);
  out.sigma = ad::add_constant(ad::softplus(layers::linear(g, p + ".sigma", pooled)), Scalar(kSigmaFloor));
  if (g.training()) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix<Scalar> eps(1, c.prompt_dim);
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = static_cast<Scalar>(normal(g.rng()));
    out.g = ad::add(out.mu, ad::mul(out.sigma, g.constant(std::move(eps))));
  } else {
    out.g = out.mu;
  }
  return out;
}

// Shared decoder: (T x d embedding, 1 x prompt_dim latent) -> T x n_mels log-mel.
template <typename Scalar>
Var<Scalar> decoder(Graph<Scalar>& g, const ModelConfig& c, Var<Scalar> embedding, Var<Scalar> latent) {
  if (embedding.cols() != c.d) throw std::invalid_argument("decoder: embedding width must equal d");
  if (latent.rows() != 1 || latent.cols() != c.prompt_dim) throw std::invalid_argument("decoder: latent must be 1 x prompt_dim");
  const std::string& p = kDecoder;
  Var<Scalar> x = layers::linear(g, p + ".in", embedding);
  x = ad::add_row(x, layers::linear(g, p + ".cond", latent));
  x = layers::transformer_stack(g, c, p, kDecoderTransformerLayers, x);
  Var<Scalar> y = x;
  for (int i = 0; i < kDecoderConvLayers; ++i) {
    y = layers::conv(g, c, p + ".conv" + std::to_string(i), y);
    if (i + 1 < kDecoderConvLayers) y = ad::tanh(y);
  }
  x = ad::add(x, y);
  Var<Scalar> out = layers::linear(g, p + ".out", x);
  return ad::add_constant(ad::scale(out, Scalar(c.mel_std)), Scalar(c.mel_mean));
}

// Per-frame phoneme logits from a joint embedding.
template <typename Scalar>
Var<Scalar> phoneme_decoder(Graph<Scalar>& g, const ModelConfig& c, Var<Scalar> embedding) {
  if (embedding.cols() != c.d) throw std::invalid_argument("phoneme decoder: embedding width must equal d");
  const std::string& p = kPhonemeDecoder;
  Var<Scalar> x = layers::linear(g, p + ".in", embedding);
  x = layers::transformer_stack(g, c, p, kPhonemeDecoderLayers, x);
  return layers::linear(g, p + ".out", x);
}

// Learned temperature: min(exp(log_tau), kMaxTemperature) as 1x1.
template <typename Scalar>
Var<Scalar> temperature(Graph<Scalar>& g, double max_tau) {
  return ad::exp_clamped(g.param(kLossParams + ".log_tau"), Scalar(max_tau));
}

// Value-level entry points (inference graphs, no gradients).

enum class EmbeddingSource { kSpeech, kPhoneme };

struct JointEmbedding {
  Matrix<float> vectors;  // T x d
  EmbeddingSource source = EmbeddingSource::kSpeech;
};

struct PromptLatent {
  RowVector<float> mu;
  RowVector<float> sigma;
  RowVector<float> g;
};

JointEmbedding encode_speech(const MelSpectrogram& mel, const Parameters<float>& params, const ModelConfig& config);
JointEmbedding encode_phonemes(const PhonemeSequence& seq, const Parameters<float>& params, const ModelConfig& config);
PromptLatent encode_prompt(const MelSpectrogram& clip, const Parameters<float>& params, const ModelConfig& config,
                           Mode mode, std::uint64_t seed);
MelSpectrogram decode(const JointEmbedding& embedding, const RowVector<float>& g, const Parameters<float>& params,
                      const ModelConfig& config);
Matrix<float> decode_phonemes(const JointEmbedding& embedding, const Parameters<float>& params,
                              const ModelConfig& config);

}  // namespace ctap

#endif  // CTAP_MODEL_HPP
