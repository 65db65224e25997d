#include "scqa/fusion.hpp"

#include <cmath>

#include "scqa/error.hpp"

namespace scqa {

const char* to_string(Modality m) { return m == Modality::speech ? "speech" : "text"; }

const char* to_string(FusionMechanism f) {
  switch (f) {
    case FusionMechanism::dual_attention: return "dual_attention";
    case FusionMechanism::con_fusion: return "con_fusion";
    case FusionMechanism::speech_only: return "speech_only";
    case FusionMechanism::text_only: return "text_only";
  }
  return "?";
}

FusionMechanism parse_fusion(const std::string& s) {
  for (auto f : {FusionMechanism::dual_attention, FusionMechanism::con_fusion,
                 FusionMechanism::speech_only, FusionMechanism::text_only})
    if (s == to_string(f)) return f;
  throw InputError("unknown fusion mechanism '" + s +
                   "' (expected dual_attention, con_fusion, speech_only or text_only)");
}

namespace {

Tensor uniform_matrix(std::size_t rows, std::size_t cols, double limit, Rng& rng) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = dist(rng);
  return Tensor::matrix(rows, cols, std::move(v), true);
}

Tensor xavier(std::size_t rows, std::size_t cols, Rng& rng) {
  return uniform_matrix(rows, cols, std::sqrt(6.0 / static_cast<double>(rows + cols)), rng);
}

void append(NamedTensors& out, NamedTensors more) {
  for (auto& m : more) out.push_back(std::move(m));
}

}  // namespace

EncoderParams EncoderParams::init(Modality modality, std::size_t vocab, std::size_t max_len,
                                  std::size_t d, std::size_t heads, std::size_t d_ff, Rng& rng) {
  if (vocab == 0 || max_len == 0 || d == 0) throw InputError("encoder: sizes must be positive");
  EncoderParams p;
  p.modality = modality;
  p.embedding = uniform_matrix(vocab, d, std::sqrt(3.0), rng);
  p.position = uniform_matrix(max_len, d, 0.2, rng);
  p.segment = uniform_matrix(kSegments, d, 0.5, rng);
  for (int l = 0; l < 2; ++l) {
    auto layer = AttentionParams::init(d, heads, d_ff, rng);
    for (std::size_t h = 0; h < heads; ++h) layer.w_k[h] = layer.w_q[h].clone();
    p.layers.push_back(std::move(layer));
  }
  return p;
}

NamedTensors EncoderParams::named(const std::string& prefix) const {
  NamedTensors out{{prefix + ".embedding", embedding},
                   {prefix + ".position", position},
                   {prefix + ".segment", segment}};
  for (std::size_t l = 0; l < layers.size(); ++l)
    append(out, layers[l].named(prefix + ".layer" + std::to_string(l)));
  return out;
}

Tensor encode(std::span<const int> tokens, const EncoderParams& params,
              std::span<const int> segments) {
  const char* name = to_string(params.modality);
  if (tokens.empty()) throw InputError(std::string(name) + " encoder: empty token sequence");
  if (tokens.size() > params.max_len())
    throw InputError(std::string(name) + " encoder: " + std::to_string(tokens.size()) +
                     " tokens exceed max_len " + std::to_string(params.max_len()));
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i] < 0 || static_cast<std::size_t>(tokens[i]) >= params.vocab())
      throw InputError(std::string(name) + " encoder: token id " + std::to_string(tokens[i]) +
                       " at position " + std::to_string(i) + " outside vocabulary of " +
                       std::to_string(params.vocab()));
  if (!segments.empty() && segments.size() != tokens.size())
    throw InputError(std::string(name) + " encoder: " + std::to_string(segments.size()) +
                     " segment ids for " + std::to_string(tokens.size()) + " tokens");
  for (int s : segments)
    if (s < 0 || static_cast<std::size_t>(s) >= kSegments)
      throw InputError(std::string(name) + " encoder: segment id " + std::to_string(s) + " outside 0.." +
                       std::to_string(kSegments - 1));
  const std::vector<int> zeros(segments.empty() ? tokens.size() : 0, 0);
  Tensor x = add(gather_rows(params.embedding, tokens), slice_rows(params.position, 0, tokens.size()));
  x = add(x, gather_rows(params.segment, segments.empty() ? std::span<const int>(zeros) : segments));
  for (const auto& layer : params.layers) x = add(x, attention_block(x, x, x, layer));
  return x;
}

FusionParams FusionParams::init(std::size_t d, std::size_t heads, std::size_t d_ff, bool shared_w1,
                                Rng& rng) {
  FusionParams p;
  p.cross_speech = AttentionParams::init(d, heads, d_ff, rng);
  p.cross_text = AttentionParams::init(d, heads, d_ff, rng);
  p.w1 = xavier(d, d, rng);
  p.shared_w1 = shared_w1;
  if (!shared_w1) p.w1_text = xavier(d, d, rng);
  p.w2 = xavier(d, d, rng);
  p.self = AttentionParams::init(d, heads, d_ff, rng);
  return p;
}

NamedTensors FusionParams::named(const std::string& prefix) const {
  NamedTensors out = cross_speech.named(prefix + ".cross_speech");
  append(out, cross_text.named(prefix + ".cross_text"));
  out.emplace_back(prefix + ".w1", w1);
  if (!shared_w1) out.emplace_back(prefix + ".w1_text", w1_text);
  out.emplace_back(prefix + ".w2", w2);
  append(out, self.named(prefix + ".self"));
  return out;
}

Tensor contextualized_attention(const Tensor& es_cross, const Tensor& et_cross, const Tensor& w1,
                                const Tensor& w2) {
  return contextualized_attention(es_cross, et_cross, w1, w1, w2);
}

Tensor contextualized_attention(const Tensor& es_cross, const Tensor& et_cross, const Tensor& w1_s,
                                const Tensor& w1_t, const Tensor& w2) {
  if (es_cross.shape() != et_cross.shape())
    throw DimensionError("contextualized attention: speech " + to_string(es_cross.shape()) +
                         " and text " + to_string(et_cross.shape()) + " differ");
  const Tensor a = relu(matmul(es_cross, transpose(w1_s)));
  const Tensor b = relu(matmul(et_cross, transpose(w1_t)));
  return matmul(mul(a, b), transpose(w2));
}

Tensor dual_attention(const Tensor& es, const Tensor& et, const FusionParams& params) {
  if (es.rank() != 2 || et.rank() != 2 || es.rows() != et.rows())
    throw ContractError("dual attention: speech " + to_string(es.shape()) + " and text " +
                        to_string(et.shape()) + " must be padded to equal length");
  const Tensor s_cross = cross_attention(es, et, params.cross_speech);
  const Tensor t_cross = cross_attention(et, es, params.cross_text);
  const Tensor h = params.shared_w1
                       ? contextualized_attention(s_cross, t_cross, params.w1, params.w2)
                       : contextualized_attention(s_cross, t_cross, params.w1, params.w1_text, params.w2);
  return self_attention(h, params.self);
}

Tensor con_fusion(const Tensor& es, const Tensor& et) {
  if (es.rank() != 2 || et.rank() != 2 || es.rows() != et.rows())
    throw DimensionError("con fusion: speech " + to_string(es.shape()) + " and text " +
                         to_string(et.shape()) + " need equal row counts");
  return concat_last_axis(es, et);
}

Tensor unimodal(const Tensor& e, FusionMechanism which) {
  if (which != FusionMechanism::speech_only && which != FusionMechanism::text_only)
    throw ContractError(std::string("unimodal: ") + to_string(which) + " is not a unimodal mechanism");
  return e;
}

Tensor encoding_layer(const Tensor& et, const Tensor& fused) {
  if (et.rank() != 2 || fused.rank() != 2 || et.rows() != fused.rows())
    throw DimensionError("encoding layer: text " + to_string(et.shape()) + " and fused " +
                         to_string(fused.shape()) + " need equal row counts");
  return concat_last_axis(et, fused);
}

}  // namespace scqa
