#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "scqa/random.hpp"
#include "scqa/tensor.hpp"

namespace scqa {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// Weights of one Attention(Q, K, V) = FFN(MHA(Q, K, V)) block.
///
/// Head h projects with w_q[h], w_k[h], w_v[h] (each d × d/heads); the
/// concatenated heads go through w_o (d × d). The FFN is
/// relu(x·ff1 + b1)·ff2 + b2 with ff1: d × d_ff and ff2: d_ff × d.
struct AttentionParams {
  std::size_t heads = 0;
  std::vector<Tensor> w_q, w_k, w_v;
  Tensor w_o;
  Tensor ff1, b1, ff2, b2;

  std::size_t model_dim() const { return w_o.rows(); }
  std::size_t head_dim() const { return model_dim() / heads; }
  std::size_t ffn_dim() const { return ff1.cols(); }

  /// Xavier-uniform weights, zero biases.
  static AttentionParams init(std::size_t d, std::size_t heads, std::size_t d_ff, Rng& rng);
  /// All weights and biases zero.
  static AttentionParams zeros(std::size_t d, std::size_t heads, std::size_t d_ff);

  /// Throws DimensionError if shapes disagree with heads / d / d_ff.
  void validate() const;
  /// Stable, prefix-qualified names (w_q.0, ..., b2).
  NamedTensors named(const std::string& prefix) const;
};

struct MhaResult {
  Tensor output;                // n_q × d
  std::vector<Tensor> weights;  // per head, n_q × n_k; rows are distributions
};

Tensor mha(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionParams& p);
MhaResult mha_with_weights(const Tensor& q, const Tensor& k, const Tensor& v,
                           const AttentionParams& p);

/// relu(x·ff1 + b1)·ff2 + b2, applied row-wise.
Tensor ffn(const Tensor& x, const AttentionParams& p);

/// FFN(MHA(Q, K, V)); no residual, no normalization.
Tensor attention_block(const Tensor& q, const Tensor& k, const Tensor& v,
                       const AttentionParams& p);

/// attention_block(f1, f2, f2): rows of f1 query the other modality f2.
Tensor cross_attention(const Tensor& f1, const Tensor& f2, const AttentionParams& p);

/// attention_block(h, h, h).
Tensor self_attention(const Tensor& h, const AttentionParams& p);

}  // namespace scqa
