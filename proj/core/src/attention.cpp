#include "scqa/attention.hpp"

#include <cmath>

namespace scqa {

namespace {

Tensor xavier(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = dist(rng);
  return Tensor::matrix(rows, cols, std::move(v), true);
}

void expect_shape(const Tensor& t, const Shape& want, const std::string& name) {
  if (!t.defined() || t.shape() != want)
    throw DimensionError("attention params: " + name + " should be " + to_string(want) + ", is " +
                         (t.defined() ? to_string(t.shape()) : std::string("undefined")));
}

void check_inputs(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionParams& p) {
  for (const auto* t : {&q, &k, &v})
    if (t->rank() != 2)
      throw DimensionError("attention inputs must be matrices, got " + to_string(t->shape()));
  if (k.rows() != v.rows())
    throw DimensionError("attention: K has " + std::to_string(k.rows()) + " rows but V has " +
                         std::to_string(v.rows()));
  const std::size_t d = p.model_dim();
  if (q.cols() != d || k.cols() != d || v.cols() != d)
    throw DimensionError("attention: feature width must be " + std::to_string(d) + ", got Q " +
                         to_string(q.shape()) + ", K " + to_string(k.shape()) + ", V " +
                         to_string(v.shape()));
}

}  // namespace

AttentionParams AttentionParams::init(std::size_t d, std::size_t heads, std::size_t d_ff, Rng& rng) {
  if (heads == 0 || d % heads != 0)
    throw DimensionError("model width " + std::to_string(d) + " is not divisible by " +
                         std::to_string(heads) + " heads");
  AttentionParams p;
  p.heads = heads;
  const std::size_t dh = d / heads;
  for (std::size_t h = 0; h < heads; ++h) {
    p.w_q.push_back(xavier(d, dh, rng));
    p.w_k.push_back(xavier(d, dh, rng));
    p.w_v.push_back(xavier(d, dh, rng));
  }
  p.w_o = xavier(d, d, rng);
  p.ff1 = xavier(d, d_ff, rng);
  p.b1 = Tensor::zeros({d_ff}, true);
  p.ff2 = xavier(d_ff, d, rng);
  p.b2 = Tensor::zeros({d}, true);
  return p;
}

AttentionParams AttentionParams::zeros(std::size_t d, std::size_t heads, std::size_t d_ff) {
  if (heads == 0 || d % heads != 0)
    throw DimensionError("model width " + std::to_string(d) + " is not divisible by " +
                         std::to_string(heads) + " heads");
  AttentionParams p;
  p.heads = heads;
  const std::size_t dh = d / heads;
  for (std::size_t h = 0; h < heads; ++h) {
    p.w_q.push_back(Tensor::zeros({d, dh}, true));
    p.w_k.push_back(Tensor::zeros({d, dh}, true));
    p.w_v.push_back(Tensor::zeros({d, dh}, true));
  }
  p.w_o = Tensor::zeros({d, d}, true);
  p.ff1 = Tensor::zeros({d, d_ff}, true);
  p.b1 = Tensor::zeros({d_ff}, true);
  p.ff2 = Tensor::zeros({d_ff, d}, true);
  p.b2 = Tensor::zeros({d}, true);
  return p;
}

void AttentionParams::validate() const {
  if (heads == 0) throw DimensionError("attention params: heads must be positive");
  if (!w_o.defined() || w_o.rank() != 2)
    throw DimensionError("attention params: output projection missing");
  const std::size_t d = w_o.rows();
  if (d % heads != 0)
    throw DimensionError("attention params: width " + std::to_string(d) +
                         " not divisible by heads " + std::to_string(heads));
  if (w_q.size() != heads || w_k.size() != heads || w_v.size() != heads)
    throw DimensionError("attention params: expected " + std::to_string(heads) +
                         " per-head projections");
  const std::size_t dh = d / heads;
  for (std::size_t h = 0; h < heads; ++h) {
    expect_shape(w_q[h], {d, dh}, "w_q." + std::to_string(h));
    expect_shape(w_k[h], {d, dh}, "w_k." + std::to_string(h));
    expect_shape(w_v[h], {d, dh}, "w_v." + std::to_string(h));
  }
  expect_shape(w_o, {d, d}, "w_o");
  if (!ff1.defined() || ff1.rank() != 2) throw DimensionError("attention params: ff1 missing");
  const std::size_t dff = ff1.cols();
  expect_shape(ff1, {d, dff}, "ff1");
  expect_shape(b1, {dff}, "b1");
  expect_shape(ff2, {dff, d}, "ff2");
  expect_shape(b2, {d}, "b2");
}

NamedTensors AttentionParams::named(const std::string& prefix_) const {
  const std::string prefix = prefix_.empty() ? prefix_ : prefix_ + ".";
  NamedTensors out;
  for (std::size_t h = 0; h < heads; ++h) {
    const auto s = std::to_string(h);
    out.emplace_back(prefix + "w_q." + s, w_q[h]);
    out.emplace_back(prefix + "w_k." + s, w_k[h]);
    out.emplace_back(prefix + "w_v." + s, w_v[h]);
  }
  out.emplace_back(prefix + "w_o", w_o);
  out.emplace_back(prefix + "ff1", ff1);
  out.emplace_back(prefix + "b1", b1);
  out.emplace_back(prefix + "ff2", ff2);
  out.emplace_back(prefix + "b2", b2);
  return out;
}

MhaResult mha_with_weights(const Tensor& q, const Tensor& k, const Tensor& v,
                           const AttentionParams& p) {
  check_inputs(q, k, v, p);
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(p.head_dim()));
  MhaResult result;
  std::vector<Tensor> heads;
  heads.reserve(p.heads);
  for (std::size_t h = 0; h < p.heads; ++h) {
    const Tensor qh = matmul(q, p.w_q[h]);
    const Tensor kh = matmul(k, p.w_k[h]);
    const Tensor vh = matmul(v, p.w_v[h]);
    const Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dh);
    Tensor weights = softmax_rows(scores, 1.0);
    heads.push_back(matmul(weights, vh));
    result.weights.push_back(std::move(weights));
  }
  const Tensor joined = heads.size() == 1 ? heads[0] : concat_last_axis(heads);
  result.output = matmul(joined, p.w_o);
  return result;
}

Tensor mha(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionParams& p) {
  return mha_with_weights(q, k, v, p).output;
}

Tensor ffn(const Tensor& x, const AttentionParams& p) {
  return add_bias(matmul(relu(add_bias(matmul(x, p.ff1), p.b1)), p.ff2), p.b2);
}

Tensor attention_block(const Tensor& q, const Tensor& k, const Tensor& v,
                       const AttentionParams& p) {
  return ffn(mha(q, k, v, p), p);
}

Tensor cross_attention(const Tensor& f1, const Tensor& f2, const AttentionParams& p) {
  if (f1.rank() != 2 || f2.rank() != 2 || f1.cols() != f2.cols())
    throw DimensionError("cross_attention: feature widths differ, " + to_string(f1.shape()) +
                         " vs " + to_string(f2.shape()));
  return attention_block(f1, f2, f2, p);
}

Tensor self_attention(const Tensor& h, const AttentionParams& p) {
  return attention_block(h, h, h, p);
}

}  // namespace scqa
