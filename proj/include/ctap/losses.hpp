#ifndef CTAP_LOSSES_HPP
#define CTAP_LOSSES_HPP

// Training objectives. Each loss exists twice: a value-level function over
// plain matrices (used by evaluation and tests) and a tape-level function in
// namespace ad that records its gradient.

#include "ctap/autodiff.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ctap {

// Maximum value of the temperature multiplier on similarity logits.
inline constexpr double kMaxTemperature = 100.0;

template <typename Scalar>
struct SimilarityMatrix {
  Matrix<Scalar> logits;
  Scalar tau = Scalar(1);
  // (batch index, frame index) of every row/column, in flattening order.
  std::vector<std::pair<int, int>> frames;
};

using FrameMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Flattens a batch of T x d sequences into (sum of valid frames) x d rows,
// batch-major then time (row k = (b, t) with k = b*T + t when nothing is
// masked). mask(b, t) == false drops that frame.
template <typename Scalar>
Matrix<Scalar> flatten_frames(const std::vector<Matrix<Scalar>>& seqs, const FrameMask* mask = nullptr,
                              std::vector<std::pair<int, int>>* frames = nullptr) {
  if (seqs.empty()) throw std::invalid_argument("flatten_frames: empty batch");
  const Eigen::Index d = seqs.front().cols();
  Eigen::Index n = 0;
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    if (seqs[b].cols() != d) throw std::invalid_argument("flatten_frames: width mismatch");
    if (mask && (mask->rows() != static_cast<Eigen::Index>(seqs.size()) || mask->cols() < seqs[b].rows())) {
      throw std::invalid_argument("flatten_frames: mask shape mismatch");
    }
    for (Eigen::Index t = 0; t < seqs[b].rows(); ++t) {
      if (!mask || (*mask)(static_cast<Eigen::Index>(b), t)) ++n;
    }
  }
  Matrix<Scalar> out(n, d);
  if (frames) frames->clear();
  Eigen::Index k = 0;
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    for (Eigen::Index t = 0; t < seqs[b].rows(); ++t) {
      if (mask && !(*mask)(static_cast<Eigen::Index>(b), t)) continue;
      out.row(k++) = seqs[b].row(t);
      if (frames) frames->emplace_back(static_cast<int>(b), static_cast<int>(t));
    }
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> l2_normalized_rows(const Matrix<Scalar>& x, Scalar eps = Scalar(1e-12)) {
  Matrix<Scalar> y = x;
  for (Eigen::Index i = 0; i < y.rows(); ++i) y.row(i) /= std::max(y.row(i).norm(), eps);
  return y;
}

// C = tau * S_re * P_re^T over the valid frames of the batch.
template <typename Scalar>
SimilarityMatrix<Scalar> similarity_matrix(const std::vector<Matrix<Scalar>>& speech,
                                           const std::vector<Matrix<Scalar>>& phoneme, Scalar tau,
                                           bool l2_normalize, const FrameMask* mask = nullptr) {
  if (speech.size() != phoneme.size()) throw std::invalid_argument("similarity_matrix: batch size mismatch");
  for (std::size_t b = 0; b < speech.size(); ++b) {
    if (speech[b].rows() != phoneme[b].rows() || speech[b].cols() != phoneme[b].cols()) {
      throw std::invalid_argument("similarity_matrix: shape mismatch");
    }
  }
  if (!(tau > Scalar(0))) throw std::invalid_argument("similarity_matrix: tau must be positive");
  SimilarityMatrix<Scalar> out;
  out.tau = tau;
  Matrix<Scalar> s = flatten_frames(speech, mask, &out.frames);
  Matrix<Scalar> p = flatten_frames(phoneme, mask);
  if (l2_normalize) {
    s = l2_normalized_rows(s);
    p = l2_normalized_rows(p);
  }
  out.logits = tau * (s * p.transpose());
  return out;
}

namespace detail {

template <typename Scalar>
Scalar log_sum_exp(const Eigen::Ref<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>& v) {
  const Scalar m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace detail

// Symmetric cross-entropy with diagonal positives:
// 0.5 * (mean_i -log softmax(C_i.)_i + mean_j -log softmax(C_.j)_j).
template <typename Scalar>
Scalar contrastive_loss(const Matrix<Scalar>& c) {
  if (c.rows() != c.cols()) throw std::invalid_argument("contrastive_loss: matrix must be square");
  const Eigen::Index n = c.rows();
  if (n < 1) throw std::invalid_argument("contrastive_loss: empty matrix");
  Scalar speech = 0;
  Scalar phoneme = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    speech += ctap::detail::log_sum_exp<Scalar>(c.row(i)) - c(i, i);
    phoneme += ctap::detail::log_sum_exp<Scalar>(c.col(i).transpose()) - c(i, i);
  }
  return Scalar(0.5) * (speech / Scalar(n) + phoneme / Scalar(n));
}

template <typename Scalar>
Scalar mean_squared_error(const Matrix<Scalar>& a, const Matrix<Scalar>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("mean_squared_error: shape mismatch");
  if (a.size() == 0) throw std::invalid_argument("mean_squared_error: empty input");
  return (a - b).squaredNorm() / Scalar(a.size());
}

// 0.5 * (MSE(mel_s, gt) + MSE(mel_p, gt)).
template <typename Scalar>
Scalar mse_loss(const Matrix<Scalar>& mel_s, const Matrix<Scalar>& mel_p, const Matrix<Scalar>& gt) {
  return Scalar(0.5) * (mean_squared_error(mel_s, gt) + mean_squared_error(mel_p, gt));
}

// KL(N(mu, sigma^2) || N(0, I)) summed over dimensions.
template <typename Scalar>
Scalar gaussian_kl(const RowVector<Scalar>& mu, const RowVector<Scalar>& sigma) {
  if (mu.size() != sigma.size()) throw std::invalid_argument("gaussian_kl: size mismatch");
  if ((sigma.array() <= Scalar(0)).any()) throw std::invalid_argument("gaussian_kl: sigma must be positive");
  const auto s2 = sigma.array().square();
  return Scalar(0.5) * (mu.array().square() + s2 - Scalar(1) - s2.log()).sum();
}

template <typename Scalar>
Scalar kl_margin_loss(const RowVector<Scalar>& mu, const RowVector<Scalar>& sigma, Scalar delta) {
  if (delta < Scalar(0)) throw std::invalid_argument("kl_margin_loss: margin must be non-negative");
  return std::max(Scalar(0), gaussian_kl(mu, sigma) - delta);
}

template <typename Scalar>
Scalar embedding_mse_loss(const Matrix<Scalar>& s, const Matrix<Scalar>& p) {
  return mean_squared_error(s, p);
}

// Mean per-frame cross-entropy of row-wise logits against target ids.
template <typename Scalar>
Scalar phoneme_ce_loss(const Matrix<Scalar>& logits, const std::vector<int>& targets) {
  if (static_cast<Eigen::Index>(targets.size()) != logits.rows()) {
    throw std::invalid_argument("phoneme_ce_loss: target length mismatch");
  }
  if (targets.empty()) throw std::invalid_argument("phoneme_ce_loss: empty input");
  Scalar total = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = targets[static_cast<std::size_t>(i)];
    if (y < 0 || y >= logits.cols()) throw std::out_of_range("phoneme_ce_loss: target id out of range");
    total += ctap::detail::log_sum_exp<Scalar>(logits.row(i)) - logits(i, y);
  }
  return total / Scalar(logits.rows());
}

enum class LossVariant { kFull, kNoDecoder, kPlusEmbedMse, kPlusPhonemeDecoder };

LossVariant parse_loss_variant(const std::string& name);
std::string to_string(LossVariant v);

// Which components a variant trains on.
struct VariantTerms {
  bool reconstruction = true;  // mse + kl
  bool embed_mse = false;
  bool phoneme_ce = false;
};

inline VariantTerms terms_for(LossVariant v) {
  switch (v) {
    case LossVariant::kFull:
      return {true, false, false};
    case LossVariant::kNoDecoder:
      return {false, false, false};
    case LossVariant::kPlusEmbedMse:
      return {true, true, false};
    case LossVariant::kPlusPhonemeDecoder:
      return {true, false, true};
  }
  return {};
}

struct LossComponents {
  std::optional<double> contrastive;
  std::optional<double> mse;
  std::optional<double> kl;
  std::optional<double> embed_mse;
  std::optional<double> phoneme_ce;
};

struct LossBreakdown {
  double contrastive = 0;
  double mse = 0;
  double kl = 0;
  std::optional<double> embed_mse;
  std::optional<double> phoneme_ce;
  double total = 0;
};

// Combines components per variant; throws if one the variant needs is absent.
LossBreakdown total_loss(const LossComponents& c, LossVariant variant);

namespace ad {

// tau * l2n(S) * l2n(P)^T where s and p are already flattened frame rows and
// tau is 1x1.
template <typename Scalar>
Var<Scalar> similarity(Var<Scalar> s, Var<Scalar> p, Var<Scalar> tau, bool l2_normalize) {
  check_same_shape(s, p, "similarity");
  if (!(tau.value()(0, 0) > Scalar(0))) throw std::invalid_argument("similarity: tau must be positive");
  if (l2_normalize) {
    s = l2_normalize_rows(s);
    p = l2_normalize_rows(p);
  }
  return scale_by(matmul_nt(s, p), tau);
}

template <typename Scalar>
Var<Scalar> contrastive_loss(Var<Scalar> c) {
  const Matrix<Scalar>& x = c.value();
  if (x.rows() != x.cols()) throw std::invalid_argument("contrastive_loss: matrix must be square");
  const Eigen::Index n = x.rows();
  Matrix<Scalar> row_sm(n, n);
  Matrix<Scalar> col_sm(n, n);
  Scalar speech = 0;
  Scalar phoneme = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar lr = ctap::detail::log_sum_exp<Scalar>(x.row(i));
    row_sm.row(i) = (x.row(i).array() - lr).exp();
    speech += lr - x(i, i);
    const Scalar lc = ctap::detail::log_sum_exp<Scalar>(x.col(i).transpose());
    col_sm.col(i) = (x.col(i).array() - lc).exp();
    phoneme += lc - x(i, i);
  }
  Matrix<Scalar> out(1, 1);
  out(0, 0) = Scalar(0.5) * (speech + phoneme) / Scalar(n);
  return c.tape->push(std::move(out), c.requires_grad(), [c, row_sm, col_sm, n](Tape<Scalar>& t) {
    const Scalar g = t.upstream()(0, 0) * Scalar(0.5) / Scalar(n);
    Matrix<Scalar> d = row_sm + col_sm;
    d.diagonal().array() -= Scalar(2);
    t.accumulate(c, d * g);
  });
}

template <typename Scalar>
Var<Scalar> mean_squared_error(Var<Scalar> a, Var<Scalar> b) {
  check_same_shape(a, b, "mean_squared_error");
  Matrix<Scalar> diff = a.value() - b.value();
  const Scalar n = Scalar(diff.size());
  Matrix<Scalar> out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  return a.tape->push(std::move(out), any_grad({a, b}), [a, b, diff, n](Tape<Scalar>& t) {
    const Scalar g = t.upstream()(0, 0) * Scalar(2) / n;
    t.accumulate(a, diff * g);
    t.accumulate(b, diff * (-g));
  });
}

// max(0, KL(N(mu, sigma^2) || N(0, I)) - delta), mu and sigma 1 x D.
template <typename Scalar>
Var<Scalar> kl_margin_loss(Var<Scalar> mu, Var<Scalar> sigma, Scalar delta) {
  check_same_shape(mu, sigma, "kl_margin_loss");
  const RowVector<Scalar> m = mu.value();
  const RowVector<Scalar> s = sigma.value();
  const Scalar kl = gaussian_kl(m, s);
  const bool active = kl - delta > Scalar(0);
  Matrix<Scalar> out(1, 1);
  out(0, 0) = active ? kl - delta : Scalar(0);
  return mu.tape->push(std::move(out), any_grad({mu, sigma}), [mu, sigma, m, s, active](Tape<Scalar>& t) {
    if (!active) return;
    const Scalar g = t.upstream()(0, 0);
    t.accumulate(mu, m * g);
    t.accumulate(sigma, (s.array() - s.array().inverse()).matrix() * g);
  });
}

template <typename Scalar>
Var<Scalar> cross_entropy(Var<Scalar> logits, const std::vector<int>& targets) {
  const Matrix<Scalar>& x = logits.value();
  if (static_cast<Eigen::Index>(targets.size()) != x.rows()) {
    throw std::invalid_argument("cross_entropy: target length mismatch");
  }
  const Eigen::Index n = x.rows();
  Matrix<Scalar> probs(n, x.cols());
  Scalar total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = targets[static_cast<std::size_t>(i)];
    if (y < 0 || y >= x.cols()) throw std::out_of_range("cross_entropy: target id out of range");
    const Scalar lse = ctap::detail::log_sum_exp<Scalar>(x.row(i));
    probs.row(i) = (x.row(i).array() - lse).exp();
    total += lse - x(i, y);
  }
  Matrix<Scalar> out(1, 1);
  out(0, 0) = total / Scalar(n);
  return logits.tape->push(std::move(out), logits.requires_grad(), [logits, probs, targets, n](Tape<Scalar>& t) {
    Matrix<Scalar> d = probs;
    for (Eigen::Index i = 0; i < n; ++i) d(i, targets[static_cast<std::size_t>(i)]) -= Scalar(1);
    t.accumulate(logits, d * (t.upstream()(0, 0) / Scalar(n)));
  });
}

}  // namespace ad
}  // namespace ctap

#endif  // CTAP_LOSSES_HPP
