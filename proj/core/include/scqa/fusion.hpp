#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "scqa/attention.hpp"
#include "scqa/random.hpp"
#include "scqa/tensor.hpp"

namespace scqa {

enum class Modality { speech, text };
const char* to_string(Modality m);

inline constexpr std::size_t kSegments = 3;

/// Small trainable encoder for one modality: token, learned position and
/// segment embeddings, then two residual attention blocks
/// x <- x + Attention(x, x, x). Query and key projections start out equal.
struct EncoderParams {
  Modality modality = Modality::text;
  Tensor embedding;  // vocab × d
  Tensor position;   // max_len × d
  Tensor segment;    // kSegments × d
  std::vector<AttentionParams> layers;

  std::size_t vocab() const { return embedding.rows(); }
  std::size_t max_len() const { return position.rows(); }
  std::size_t model_dim() const { return embedding.cols(); }

  static EncoderParams init(Modality modality, std::size_t vocab, std::size_t max_len,
                            std::size_t d, std::size_t heads, std::size_t d_ff, Rng& rng);
  NamedTensors named(const std::string& prefix) const;
};

/// Throws InputError for an empty sequence, an id outside [0, vocab) or a
/// sequence longer than max_len. Segment ids default to 0. Returns len × d.
Tensor encode(std::span<const int> tokens, const EncoderParams& params,
              std::span<const int> segments = {});

enum class FusionMechanism { dual_attention, con_fusion, speech_only, text_only };
const char* to_string(FusionMechanism f);
FusionMechanism parse_fusion(const std::string& s);

/// Dual Attention weights. With shared_w1 the same W1 projects both
/// modalities; otherwise w1_text projects the text branch.
struct FusionParams {
  AttentionParams cross_speech;  // speech rows query text
  AttentionParams cross_text;    // text rows query speech
  Tensor w1;                     // d × d
  Tensor w1_text;                // d × d, only when !shared_w1
  Tensor w2;                     // d × d
  AttentionParams self;
  bool shared_w1 = true;

  static FusionParams init(std::size_t d, std::size_t heads, std::size_t d_ff, bool shared_w1,
                           Rng& rng);
  NamedTensors named(const std::string& prefix) const;
};

/// (relu(Es·W1ᵀ) ⊙ relu(Et·W1ᵀ))·W2ᵀ.
Tensor contextualized_attention(const Tensor& es_cross, const Tensor& et_cross, const Tensor& w1,
                                const Tensor& w2);
/// Variant with a separate projection per modality.
Tensor contextualized_attention(const Tensor& es_cross, const Tensor& et_cross, const Tensor& w1_s,
                                const Tensor& w1_t, const Tensor& w2);

/// Cross attention both ways, contextualized attention, then self attention.
/// Both inputs must already be padded to the same row count (ContractError).
Tensor dual_attention(const Tensor& es, const Tensor& et, const FusionParams& params);

/// [Es ; Et] row-wise; DimensionError on a row mismatch.
Tensor con_fusion(const Tensor& es, const Tensor& et);

/// The selected modality embedding, unchanged.
Tensor unimodal(const Tensor& e, FusionMechanism which);

/// [Et ; E_fused] row-wise.
Tensor encoding_layer(const Tensor& et, const Tensor& fused);

}  // namespace scqa
