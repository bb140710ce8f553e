#pragma once

#include <string>
#include <vector>

#include "stvg/ops.hpp"
#include "stvg/tensor.hpp"

// Small parameterized blocks shared by the frozen stub and the trainable
// heads: linear, layer norm, feed-forward, multi-head attention.
namespace stvg::nn {

struct LinearW {
  Tensor w, b;  // y = x·w + b
};

struct LayerNormW {
  Tensor gamma, beta;
};

struct AttentionW {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct FfnW {
  Tensor w1, b1, w2, b2;  // x·w1 + b1 -> gelu -> ·w2 + b2
};

LinearW init_linear(std::size_t in, std::size_t out, Rng& rng, bool trainable);
LayerNormW init_layer_norm(std::size_t d, Rng& rng, bool trainable);
AttentionW init_attention(std::size_t d, Rng& rng, bool trainable);
FfnW init_ffn(std::size_t d, std::size_t hidden, Rng& rng, bool trainable);

Tensor linear(const Tensor& x, const LinearW& p);
Tensor layer_norm(const Tensor& x, const LayerNormW& p);
Tensor ffn(const Tensor& x, const FfnW& p);

// q_in: [N×d], kv_in: [M×d]. logit_bias, when given, is a [N×M] tensor added
// to the attention logits of every head.
Tensor mha(const Tensor& q_in, const Tensor& kv_in, const AttentionW& p,
           std::size_t n_heads, const Tensor* logit_bias = nullptr);

void collect(const LinearW& p, const std::string& prefix, std::vector<NamedParam>& out);
void collect(const LayerNormW& p, const std::string& prefix, std::vector<NamedParam>& out);
void collect(const AttentionW& p, const std::string& prefix, std::vector<NamedParam>& out);
void collect(const FfnW& p, const std::string& prefix, std::vector<NamedParam>& out);

}  // namespace stvg::nn
