#include "ctap/losses.hpp"

namespace ctap {

LossVariant parse_loss_variant(const std::string& name) {
  if (name == "full") return LossVariant::kFull;
  if (name == "no_decoder") return LossVariant::kNoDecoder;
  if (name == "plus_embed_mse") return LossVariant::kPlusEmbedMse;
  if (name == "plus_phoneme_decoder") return LossVariant::kPlusPhonemeDecoder;
  throw std::invalid_argument("unknown loss variant '" + name + "'");
}

std::string to_string(LossVariant v) {
  switch (v) {
    case LossVariant::kFull:
      return "full";
    case LossVariant::kNoDecoder:
      return "no_decoder";
    case LossVariant::kPlusEmbedMse:
      return "plus_embed_mse";
    case LossVariant::kPlusPhonemeDecoder:
      return "plus_phoneme_decoder";
  }
  return "full";
}

LossBreakdown total_loss(const LossComponents& c, LossVariant variant) {
  auto need = [variant](const std::optional<double>& v, const char* what) {
    if (!v) throw std::invalid_argument("loss variant " + to_string(variant) + " requires the " + what + " component");
    return *v;
  };
  const VariantTerms terms = terms_for(variant);
  LossBreakdown b;
  b.contrastive = need(c.contrastive, "contrastive");
  b.total = b.contrastive;
  if (terms.reconstruction) {
    b.mse = need(c.mse, "mse");
    b.kl = need(c.kl, "kl");
    b.total = b.contrastive + b.mse + b.kl;
  }
  if (terms.embed_mse) {
    b.embed_mse = need(c.embed_mse, "embed_mse");
    b.total += *b.embed_mse;
  }
  if (terms.phoneme_ce) {
    b.phoneme_ce = need(c.phoneme_ce, "phoneme_ce");
    b.total += *b.phoneme_ce;
  }
  return b;
}

}  // namespace ctap
