#include "stvg/nn.hpp"

#include <cmath>

#include "stvg/errors.hpp"

namespace stvg::nn {

namespace op = stvg::ops;

namespace {

Tensor weight(std::size_t in, std::size_t out, Rng& rng, bool trainable) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Tensor t = Tensor::uniform({in, out}, rng, -bound, bound);
  t.set_requires_grad(trainable);
  return t;
}

Tensor small_bias(std::size_t n, Rng& rng, bool trainable) {
  Tensor t = Tensor::uniform({n}, rng, -0.01, 0.01);
  t.set_requires_grad(trainable);
  return t;
}

}  // namespace

LinearW init_linear(std::size_t in, std::size_t out, Rng& rng, bool trainable) {
  return {weight(in, out, rng, trainable), small_bias(out, rng, trainable)};
}

LayerNormW init_layer_norm(std::size_t d, Rng& rng, bool trainable) {
  Tensor gamma = Tensor::uniform({d}, rng, 0.98, 1.02);
  Tensor beta = Tensor::uniform({d}, rng, -0.02, 0.02);
  gamma.set_requires_grad(trainable);
  beta.set_requires_grad(trainable);
  return {gamma, beta};
}

AttentionW init_attention(std::size_t d, Rng& rng, bool trainable) {
  AttentionW p;
  p.wq = weight(d, d, rng, trainable);
  p.bq = small_bias(d, rng, trainable);
  p.wk = weight(d, d, rng, trainable);
  p.bk = small_bias(d, rng, trainable);
  p.wv = weight(d, d, rng, trainable);
  p.bv = small_bias(d, rng, trainable);
  p.wo = weight(d, d, rng, trainable);
  p.bo = small_bias(d, rng, trainable);
  return p;
}

FfnW init_ffn(std::size_t d, std::size_t hidden, Rng& rng, bool trainable) {
  FfnW p;
  p.w1 = weight(d, hidden, rng, trainable);
  p.b1 = small_bias(hidden, rng, trainable);
  p.w2 = weight(hidden, d, rng, trainable);
  p.b2 = small_bias(d, rng, trainable);
  return p;
}

Tensor linear(const Tensor& x, const LinearW& p) {
  return op::add_bias(op::matmul(x, p.w), p.b);
}

Tensor layer_norm(const Tensor& x, const LayerNormW& p) {
  return op::layer_norm(x, p.gamma, p.beta);
}

Tensor ffn(const Tensor& x, const FfnW& p) {
  return op::add_bias(op::matmul(op::gelu(op::add_bias(op::matmul(x, p.w1), p.b1)), p.w2),
                      p.b2);
}

Tensor mha(const Tensor& q_in, const Tensor& kv_in, const AttentionW& p,
           std::size_t n_heads, const Tensor* logit_bias) {
  if (q_in.rank() != 2 || kv_in.rank() != 2 || q_in.dim(1) != kv_in.dim(1)) {
    throw DimensionError("mha: expected [N×d] and [M×d], got " + shape_str(q_in.shape()) +
                         " and " + shape_str(kv_in.shape()));
  }
  const std::size_t d = q_in.dim(1);
  if (n_heads == 0 || d % n_heads != 0) {
    throw ConfigError("mha: width " + std::to_string(d) + " not divisible by " +
                      std::to_string(n_heads) + " heads");
  }
  const std::size_t dh = d / n_heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor q = op::add_bias(op::matmul(q_in, p.wq), p.bq);
  Tensor k = op::add_bias(op::matmul(kv_in, p.wk), p.bk);
  Tensor v = op::add_bias(op::matmul(kv_in, p.wv), p.bv);

  std::vector<Tensor> heads;
  heads.reserve(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h) {
    Tensor qh = op::slice_last(q, h * dh, (h + 1) * dh);
    Tensor kh = op::slice_last(k, h * dh, (h + 1) * dh);
    Tensor vh = op::slice_last(v, h * dh, (h + 1) * dh);
    Tensor logits = op::scale(op::matmul(qh, op::transpose(kh)), inv_scale);
    if (logit_bias != nullptr) logits = op::add(logits, *logit_bias);
    Tensor attn = op::softmax(logits, 1);
    heads.push_back(op::matmul(attn, vh));
  }
  Tensor cat = op::concat(heads, 1);
  return op::add_bias(op::matmul(cat, p.wo), p.bo);
}

void collect(const LinearW& p, const std::string& prefix, std::vector<NamedParam>& out) {
  out.push_back({prefix + ".w", p.w.requires_grad(), p.w});
  out.push_back({prefix + ".b", p.b.requires_grad(), p.b});
}

void collect(const LayerNormW& p, const std::string& prefix, std::vector<NamedParam>& out) {
  out.push_back({prefix + ".gamma", p.gamma.requires_grad(), p.gamma});
  out.push_back({prefix + ".beta", p.beta.requires_grad(), p.beta});
}

void collect(const AttentionW& p, const std::string& prefix, std::vector<NamedParam>& out) {
  out.push_back({prefix + ".wq", p.wq.requires_grad(), p.wq});
  out.push_back({prefix + ".bq", p.bq.requires_grad(), p.bq});
  out.push_back({prefix + ".wk", p.wk.requires_grad(), p.wk});
  out.push_back({prefix + ".bk", p.bk.requires_grad(), p.bk});
  out.push_back({prefix + ".wv", p.wv.requires_grad(), p.wv});
  out.push_back({prefix + ".bv", p.bv.requires_grad(), p.bv});
  out.push_back({prefix + ".wo", p.wo.requires_grad(), p.wo});
  out.push_back({prefix + ".bo", p.bo.requires_grad(), p.bo});
}

void collect(const FfnW& p, const std::string& prefix, std::vector<NamedParam>& out) {
  out.push_back({prefix + ".w1", p.w1.requires_grad(), p.w1});
  out.push_back({prefix + ".b1", p.b1.requires_grad(), p.b1});
  out.push_back({prefix + ".w2", p.w2.requires_grad(), p.w2});
  out.push_back({prefix + ".b2", p.b2.requires_grad(), p.b2});
}

}  // namespace stvg::nn
