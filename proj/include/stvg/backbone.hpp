#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "stvg/adapters.hpp"
#include "stvg/config.hpp"
#include "stvg/nn.hpp"
#include "stvg/tensor.hpp"

// A frozen, seed-deterministic stand-in for the pre-trained grounding model:
// two visual encoder stages, a text encoder block, one bi-attention fusion
// block, and a small cross-modality query decoder. Every weight is built from
// the seed with requires_grad off; the hook points where adapters attach are
// function parameters so fresh (identity) adapters leave the stub untouched.
namespace stvg::backbone {

struct FrameBatch {
  Tensor video;  // [T×H×W×C]
  Tensor text;   // [L×d_text]

  std::size_t frames() const { return video.dim(0); }
  std::size_t tokens() const { return text.dim(0); }
  void validate() const;
};

struct FrozenBackbone {
  ModelConfig cfg;
  std::uint64_t seed = 0;

  std::array<nn::LinearW, 2> vis_proj;  // c_in -> d/2 -> d

  nn::LinearW txt_proj;  // d_text -> d; its weight is the LoRA target
  nn::AttentionW txt_attn;
  nn::LayerNormW txt_ln1, txt_ln2;
  nn::FfnW txt_ffn;

  nn::AttentionW bi_v2t, bi_t2v;
  nn::LayerNormW bi_ln_v1, bi_ln_t1, bi_ln_v2, bi_ln_t2;
  nn::FfnW bi_ffn_v, bi_ffn_t;

  struct DecoderLayer {
    nn::AttentionW self_attn, cross_attn;
    nn::FfnW ffn;
    nn::LayerNormW ln1, ln2, ln3;
  };
  std::vector<DecoderLayer> layers;

  static FrozenBackbone build(const ModelConfig& cfg, std::uint64_t seed);
  std::vector<NamedParam> named(const std::string& prefix) const;
};

// Adapter hook points around the bi-attention fusion.
struct FusionAdapters {
  const adapters::AdapterParams* temporal = nullptr;
  const adapters::AdapterParams* diff_pre = nullptr;
  const adapters::AdapterParams* diff_post = nullptr;
};

// Per-decoder-layer temporal adapters plus the difference adapter that runs
// after the final layer.
struct DecoderAdapters {
  std::vector<const adapters::AdapterParams*> temporal;  // one per layer
  const adapters::AdapterParams* diff_post = nullptr;
};

// Two stages of linear projection + GELU + 2x2 mean downsample, each followed
// by one spatio-temporal adapter. Returns [T×H/4×W/4×d].
Tensor encode_frames(const FrameBatch& b, const FrozenBackbone& fb,
                     std::span<const adapters::AdapterParams> st_adapters);

// Frozen projection (wrapped by LoRA) + one self-attention block. Returns the
// per-token features [L×d] and their mean as the clip-level text vector.
std::pair<Tensor, Tensor> encode_text(const FrameBatch& b, const FrozenBackbone& fb,
                                      const adapters::LoRAParams& lora);

// vis: [T×N_v×d], txt: [L×d]. Temporal adapter per token position, difference
// adapter, frozen bi-attention both ways, difference adapter again.
std::pair<Tensor, Tensor> multimodal_fuse(const Tensor& vis, const Tensor& txt,
                                          const FrozenBackbone& fb, const FusionAdapters& ad);

// Per frame, scores every visual token by its best dot product against the
// text tokens and keeps the n_q highest (ties to the lower index, descending
// score order).
std::vector<std::vector<std::size_t>> language_guided_select(const Tensor& mem_vision,
                                                             const Tensor& mem_text,
                                                             std::size_t n_q);

// Gathers the selected tokens into the decoder's query tensor [T×N_q×d].
Tensor gather_selected(const Tensor& mem_vision,
                       const std::vector<std::vector<std::size_t>>& indices);

// Stack of decoder layers: temporal adapter over T per query slot, frozen
// self-attention within each frame, frozen cross-attention to the text
// memory, frozen feed-forward; one difference adapter after the stack.
Tensor decode_queries(const Tensor& selected, const Tensor& mem_text,
                      const FrozenBackbone& fb, const DecoderAdapters& ad);

}  // namespace stvg::backbone
