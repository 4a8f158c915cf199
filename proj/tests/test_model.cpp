#include "ctap/losses.hpp"
#include "ctap/model.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

using namespace ctap;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.d = 4;
  c.hidden = 8;
  c.heads = 2;
  c.phoneme_dim = 8;
  c.prompt_dim = 4;
  c.dropout = 0.0;
  return c;
}

MelSpectrogram random_mel(int frames, std::mt19937_64& rng) {
  MelSpectrogram m;
  m.frames = (test::random_matrix(frames, kMelBands, rng, 2.0).array() - 6.0).matrix().cast<float>();
  m.valid_frames = frames;
  return m;
}

MelSpectrogram prompt_from(const MelSpectrogram& mel) {
  MelSpectrogram clip;
  clip.frames = Matrix<float>::Constant(kPromptFrames, kMelBands, log_floor_value());
  const int n = std::min(mel.num_frames(), kPromptFrames);
  clip.frames.topRows(n) = mel.frames.topRows(n);
  clip.valid_frames = n;
  return clip;
}

void check_layer_normalized(const Matrix<float>& x) {
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mean = x.row(i).cast<double>().mean();
    const double var = (x.row(i).cast<double>().array() - mean).square().mean();
    CHECK(std::abs(mean) < 1e-4);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
  }
}

}  // namespace

TEST_CASE("configuration validation") {
  CHECK_NOTHROW(ModelConfig::toy().validate());
  CHECK_NOTHROW(ModelConfig::full().validate());
  CHECK(ModelConfig::full().d == 512);
  auto c = tiny();
  c.d = 16;
  c.hidden = 8;
  CHECK_THROWS_AS(c.validate(), ModelConfigError);
  c = tiny();
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), ModelConfigError);
  c = tiny();
  c.kernel = 2;
  CHECK_THROWS_AS(c.validate(), ModelConfigError);
  c = tiny();
  c.inventory_size = 1;
  CHECK_THROWS_AS(c.validate(), ModelConfigError);
  c = tiny();
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), ModelConfigError);
  CHECK_THROWS_AS(init_model<float>(ModelConfig{.d = 64, .hidden = 32}, 1), ModelConfigError);
}

TEST_CASE("configuration round-trips through text") {
  auto c = tiny();
  c.mel_mean = -4.25;
  c.dropout = 0.3;
  c.toy_scale = false;
  CHECK(ModelConfig::deserialize(c.serialize()) == c);
  CHECK(ModelConfig::deserialize(ModelConfig::full().serialize()) == ModelConfig::full());
  CHECK_THROWS_AS(ModelConfig::deserialize("model.width = 3\n"), ModelConfigError);
}

TEST_CASE("initialization is seed-deterministic and covers every spec") {
  const auto c = tiny();
  const auto a = init_model<float>(c, 7);
  const auto b = init_model<float>(c, 7);
  const auto other = init_model<float>(c, 8);
  CHECK(parameter_hash(a) == parameter_hash(b));
  CHECK(parameter_hash(a) != parameter_hash(other));
  const auto specs = parameter_specs(c);
  CHECK(a.tensors.size() == specs.size());
  for (const auto& s : specs) {
    REQUIRE(a.tensors.count(s.name) == 1);
    CHECK(a.at(s.name).rows() == s.rows);
    CHECK(a.at(s.name).cols() == s.cols);
  }
  CHECK(a.at(kLossParams + ".log_tau")(0, 0) == doctest::Approx(std::log(1.0 / 0.07)));
  CHECK(a.at(kPhonemeDecoder + ".out.weight").isZero());
  CHECK_THROWS_AS(a.at("nope"), std::out_of_range);

  std::set<std::string> prefixes;
  for (const auto& s : specs) prefixes.insert(s.name.substr(0, s.name.find('.')));
  CHECK(prefixes == std::set<std::string>{kSpeechEncoder, kPhonemeEncoder, kPromptEncoder, kDecoder, kPhonemeDecoder,
                                          kLossParams});
  CHECK(parameter_hash(a, kDecoder) != parameter_hash(a, kSpeechEncoder));
}

TEST_CASE("layer counts follow the architecture") {
  const auto specs = parameter_specs(tiny());
  auto count = [&](const std::string& needle) {
    int n = 0;
    for (const auto& s : specs) n += s.name.rfind(needle, 0) == 0;
    return n;
  };
  CHECK(count(kSpeechEncoder + ".layers.") == 6 * 16);
  CHECK(count(kPhonemeEncoder + ".layers.") == 4 * 16);
  CHECK(count(kDecoder + ".layers.") == 6 * 16);
  CHECK(count(kPhonemeDecoder + ".layers.") == 6 * 16);
  CHECK(count(kDecoder + ".conv") == 5 * 2);
  CHECK(count(kPromptEncoder + ".conv") == 6 * 2);
}

TEST_CASE("encoders preserve time and emit layer-normalized rows") {
  const auto c = tiny();
  const auto params = init_model<float>(c, 3);
  std::mt19937_64 rng(1);
  for (int frames : {1, 7, 31}) {
    const auto s = encode_speech(random_mel(frames, rng), params, c);
    CHECK(s.vectors.rows() == frames);
    CHECK(s.vectors.cols() == c.d);
    check_layer_normalized(s.vectors);
  }
  const PhonemeSequence seq{{0, 3, 1, 5, 0}, {3, 4, 2, 6, 1}};
  const auto p = encode_phonemes(seq, params, c);
  CHECK(p.vectors.rows() == 16);
  CHECK(p.vectors.cols() == c.d);
  check_layer_normalized(p.vectors);

  CHECK_THROWS_AS(encode_phonemes({{0, 6}, {1, 1}}, params, c), std::out_of_range);
  CHECK_THROWS_AS(encode_phonemes({{0, 1}, {1}}, params, c), std::invalid_argument);
  CHECK_THROWS_AS(encode_phonemes({{}, {}}, params, c), std::invalid_argument);
  MelSpectrogram narrow;
  narrow.frames = Matrix<float>::Zero(5, 20);
  CHECK_THROWS_AS(encode_speech(narrow, params, c), std::invalid_argument);
}

TEST_CASE("decoders preserve time") {
  const auto c = tiny();
  const auto params = init_model<float>(c, 3);
  std::mt19937_64 rng(2);
  JointEmbedding e{test::random_matrix(100, c.d, rng).cast<float>(), EmbeddingSource::kSpeech};
  const RowVector<float> latent = test::random_matrix(1, c.prompt_dim, rng).cast<float>();
  const auto mel = decode(e, latent, params, c);
  CHECK(mel.frames.rows() == 100);
  CHECK(mel.frames.cols() == kMelBands);
  const auto logits = decode_phonemes(e, params, c);
  CHECK(logits.rows() == 100);
  CHECK(logits.cols() == c.inventory_size);

  JointEmbedding wrong{Matrix<float>::Zero(3, c.d + 1), EmbeddingSource::kSpeech};
  CHECK_THROWS_AS(decode(wrong, latent, params, c), std::invalid_argument);
  CHECK_THROWS_AS(decode_phonemes(wrong, params, c), std::invalid_argument);
  CHECK_THROWS_AS(decode(e, RowVector<float>::Zero(c.prompt_dim + 1), params, c), std::invalid_argument);
}

TEST_CASE("fresh phoneme head is uniform") {
  const auto c = tiny();
  const auto params = init_model<float>(c, 5);
  std::mt19937_64 rng(3);
  const auto mel = random_mel(8, rng);
  const auto logits = decode_phonemes(encode_speech(mel, params, c), params, c);
  CHECK(logits.rows() == 8);
  CHECK(phoneme_ce_loss(Matrix<double>(logits.cast<double>()), {0, 1, 2, 3, 4, 5, 0, 1}) ==
        doctest::Approx(std::log(static_cast<double>(c.inventory_size))));

  MelSpectrogram silent;
  silent.frames = Matrix<float>::Constant(8, kMelBands, log_floor_value());
  auto trained = params;
  trained.tensors[kPhonemeDecoder + ".out.weight"].setRandom();
  CHECK(decode_phonemes(encode_speech(silent, trained, c), trained, c).allFinite());
}

TEST_CASE("forward passes are pure") {
  const auto c = tiny();
  const auto params = init_model<float>(c, 9);
  std::mt19937_64 rng(4);
  const auto mel = random_mel(12, rng);
  CHECK(encode_speech(mel, params, c).vectors == encode_speech(mel, params, c).vectors);
  const auto clip = prompt_from(mel);
  CHECK(encode_prompt(clip, params, c, Mode::kTrain, 3).g == encode_prompt(clip, params, c, Mode::kTrain, 3).g);
  CHECK(encode_prompt(clip, params, c, Mode::kTrain, 3).g != encode_prompt(clip, params, c, Mode::kTrain, 4).g);
}

TEST_CASE("prompt encoder: inference uses the mean and sigma stays positive") {
  const auto c = tiny();
  auto params = init_model<float>(c, 1);
  std::mt19937_64 rng(5);
  const auto clip = prompt_from(random_mel(120, rng));
  const auto infer = encode_prompt(clip, params, c, Mode::kInfer, 0);
  CHECK(infer.mu.cols() == c.prompt_dim);
  CHECK(infer.g == infer.mu);
  CHECK((infer.sigma.array() > 0).all());
  const auto train = encode_prompt(clip, params, c, Mode::kTrain, 0);
  CHECK(train.mu == infer.mu);
  CHECK(train.g != train.mu);

  params.tensors[kPromptEncoder + ".sigma.bias"].setConstant(-200.0f);
  const auto squashed = encode_prompt(clip, params, c, Mode::kInfer, 0);
  CHECK((squashed.sigma.array() >= static_cast<float>(kSigmaFloor) * 0.999f).all());

  MelSpectrogram wrong;
  wrong.frames = Matrix<float>::Zero(10, kMelBands);
  CHECK_THROWS_AS(encode_prompt(wrong, params, c, Mode::kInfer, 0), std::invalid_argument);
}

TEST_CASE("prompt pooling ignores padding frames") {
  const auto c = tiny();
  const auto params = init_model<float>(c, 2);
  std::mt19937_64 rng(6);
  auto clip = prompt_from(random_mel(100, rng));
  REQUIRE(clip.valid_frames == 100);
  const auto a = encode_prompt(clip, params, c, Mode::kInfer, 0);
  clip.frames.bottomRows(150).setConstant(3.0f);
  const auto b = encode_prompt(clip, params, c, Mode::kInfer, 0);
  CHECK(a.mu.isApprox(b.mu, 1e-5f));
}

TEST_CASE("both decoder paths share one set of weights") {
  const auto c = tiny();
  const auto params = init_model<double>(c, 4);
  std::mt19937_64 rng(7);
  const Matrix<double> s = test::random_matrix(6, c.d, rng);
  const Matrix<double> p = test::random_matrix(6, c.d, rng);
  const Matrix<double> z = test::random_matrix(1, c.prompt_dim, rng);
  auto decoder_grads = [&](bool use_s, bool use_p) {
    Graph<double> g(params, Mode::kInfer, 0, [](const std::string& n) { return has_prefix(n, kDecoder); });
    std::vector<Var<double>> outs;
    if (use_s) outs.push_back(decoder(g, c, g.constant(s), g.constant(z)));
    if (use_p) outs.push_back(decoder(g, c, g.constant(p), g.constant(z)));
    std::vector<Var<double>> sums;
    for (auto& o : outs) sums.push_back(ad::mean_squared_error(o, g.constant(Matrix<double>::Zero(6, kMelBands))));
    g.tape().backward(ad::sum_scalars(sums));
    return g.gradients();
  };
  const auto both = decoder_grads(true, true);
  const auto only_s = decoder_grads(true, false);
  const auto only_p = decoder_grads(false, true);
  REQUIRE(both.size() == only_s.size());
  for (const auto& [name, grad] : both) {
    CHECK(has_prefix(name, kDecoder));
    CHECK(grad.isApprox(only_s.at(name) + only_p.at(name), 1e-10));
  }
}

TEST_CASE("length regulator examples") {
  Matrix<double> rows(2, 2);
  rows << 1, 2, 3, 4;
  const auto out = length_regulate(rows, {2, 3});
  Matrix<double> expect(5, 2);
  expect << 1, 2, 1, 2, 3, 4, 3, 4, 3, 4;
  CHECK(out == expect);
  CHECK(length_regulate(rows, {1, 1}) == rows);
  CHECK_THROWS_AS(length_regulate(rows, {1}), std::invalid_argument);
  CHECK_THROWS_AS(length_regulate(rows, {1, 0}), std::invalid_argument);
  CHECK_THROWS_AS(length_regulate(rows, {-1, 2}), std::invalid_argument);
}

TEST_CASE("length regulator output length is the duration sum") {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> count(1, 12);
  std::uniform_int_distribution<int> dur(1, 20);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = count(rng);
    std::vector<int> d(static_cast<std::size_t>(n));
    int total = 0;
    for (int& x : d) total += (x = dur(rng));
    Matrix<double> rows = test::random_matrix(n, 3, rng);
    const auto out = length_regulate(rows, d);
    REQUIRE(out.rows() == total);
    int at = 0;
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < d[static_cast<std::size_t>(i)]; ++k) REQUIRE(out.row(at++) == rows.row(i));
    }
  }
}

TEST_CASE("length regulator routes gradients back to the source rows") {
  std::mt19937_64 rng(9);
  CHECK(test::gradient_error({test::random_matrix(3, 2, rng)}, [](Tape<double>& t, std::vector<Var<double>>& x) {
          Var<double> y = length_regulate(x[0], {2, 1, 3});
          return ad::mean_squared_error(y, t.constant(Matrix<double>::Ones(6, 2)));
        }) < 1e-6);
}

TEST_CASE("sinusoidal positions") {
  const auto pe = sinusoidal_positions<double>(4, 6);
  CHECK(pe(0, 0) == 0.0);
  CHECK(pe(0, 1) == 1.0);
  CHECK(pe(2, 0) == doctest::Approx(std::sin(2.0)));
  CHECK(pe(3, 3) == doctest::Approx(std::cos(3.0 * std::pow(10000.0, -2.0 / 6.0))));
}

TEST_CASE("prefix matching is per path component") {
  CHECK(has_prefix("decoder.out.weight", kDecoder));
  CHECK_FALSE(has_prefix("decoder_extra.weight", kDecoder));
  CHECK_FALSE(has_prefix("decoder", kDecoder));
  CHECK_FALSE(has_prefix("phoneme_decoder.out.weight", kDecoder));
}

TEST_CASE("dropout only acts in training mode") {
  auto c = tiny();
  const auto params = init_model<float>(c, 1);
  std::mt19937_64 rng(10);
  const auto mel = random_mel(10, rng);
  Graph<float> infer(params, Mode::kInfer, 1, {}, 0.5);
  Graph<float> infer2(params, Mode::kInfer, 2, {}, 0.5);
  CHECK(speech_encoder(infer, c, mel.frames).value() == speech_encoder(infer2, c, mel.frames).value());
  Graph<float> train(params, Mode::kTrain, 1, {}, 0.5);
  CHECK(speech_encoder(train, c, mel.frames).value() != speech_encoder(infer, c, mel.frames).value());
}
