#include "stvg/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stvg/errors.hpp"
#include "stvg/ops.hpp"

namespace stvg {

void ModelConfig::validate() const {
  if (d == 0 || d % 2 != 0 || d % n_heads != 0) {
    throw ConfigError("config: width d=" + std::to_string(d) +
                      " must be even and divisible by n_heads=" + std::to_string(n_heads));
  }
  if (adapter_ratio == 0 || (d / 2) % adapter_ratio != 0) {
    throw ConfigError("config: adapter ratio " + std::to_string(adapter_ratio) +
                      " must divide both stage widths (d/2=" + std::to_string(d / 2) + ")");
  }
  if (adapter_kernel % 2 == 0) {
    throw ConfigError("config: adapter kernel must be odd");
  }
  if (n_q == 0 || k_sel == 0 || k_sel > n_q) {
    throw ConfigError("config: need 1 <= k_sel <= n_q, got k_sel=" + std::to_string(k_sel) +
                      ", n_q=" + std::to_string(n_q));
  }
  if (lora_rank == 0 || lora_rank >= d_text) {
    throw ConfigError("config: lora rank must lie in [1, d_text)");
  }
  if (c_in == 0 || d_text == 0 || n_dec_layers == 0 || n_tdec_layers == 0 || t_max == 0) {
    throw ConfigError("config: widths, depths and t_max must be positive");
  }
}

}  // namespace stvg

namespace stvg::backbone {

namespace op = stvg::ops;
using adapters::AdapterParams;

void FrameBatch::validate() const {
  if (!video.defined() || !text.defined() || video.rank() != 4 || text.rank() != 2) {
    throw ValidationError("frame batch: expected video [T×H×W×C] and text [L×d_text]");
  }
  if (video.dim(0) < 1 || text.dim(0) < 1) {
    throw ValidationError("frame batch: need at least one frame and one token");
  }
  for (double v : video.value()) {
    if (!std::isfinite(v)) throw ValidationError("frame batch: non-finite video feature");
  }
  for (double v : text.value()) {
    if (!std::isfinite(v)) throw ValidationError("frame batch: non-finite text feature");
  }
}

FrozenBackbone FrozenBackbone::build(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  FrozenBackbone fb;
  fb.cfg = cfg;
  fb.seed = seed;
  Rng rng(Rng::mix(seed, 0x0f));

  fb.vis_proj[0] = nn::init_linear(cfg.c_in, cfg.stage_channels(0), rng, false);
  fb.vis_proj[1] = nn::init_linear(cfg.stage_channels(0), cfg.stage_channels(1), rng, false);

  fb.txt_proj = nn::init_linear(cfg.d_text, cfg.d, rng, false);
  fb.txt_attn = nn::init_attention(cfg.d, rng, false);
  fb.txt_ln1 = nn::init_layer_norm(cfg.d, rng, false);
  fb.txt_ln2 = nn::init_layer_norm(cfg.d, rng, false);
  fb.txt_ffn = nn::init_ffn(cfg.d, cfg.frozen_ffn_hidden, rng, false);

  fb.bi_v2t = nn::init_attention(cfg.d, rng, false);
  fb.bi_t2v = nn::init_attention(cfg.d, rng, false);
  fb.bi_ln_v1 = nn::init_layer_norm(cfg.d, rng, false);
  fb.bi_ln_t1 = nn::init_layer_norm(cfg.d, rng, false);
  fb.bi_ln_v2 = nn::init_layer_norm(cfg.d, rng, false);
  fb.bi_ln_t2 = nn::init_layer_norm(cfg.d, rng, false);
  fb.bi_ffn_v = nn::init_ffn(cfg.d, cfg.frozen_ffn_hidden, rng, false);
  fb.bi_ffn_t = nn::init_ffn(cfg.d, cfg.frozen_ffn_hidden, rng, false);

  fb.layers.resize(cfg.n_dec_layers);
  for (auto& layer : fb.layers) {
    layer.self_attn = nn::init_attention(cfg.d, rng, false);
    layer.cross_attn = nn::init_attention(cfg.d, rng, false);
    layer.ffn = nn::init_ffn(cfg.d, cfg.frozen_ffn_hidden, rng, false);
    layer.ln1 = nn::init_layer_norm(cfg.d, rng, false);
    layer.ln2 = nn::init_layer_norm(cfg.d, rng, false);
    layer.ln3 = nn::init_layer_norm(cfg.d, rng, false);
  }
  return fb;
}

std::vector<NamedParam> FrozenBackbone::named(const std::string& prefix) const {
  std::vector<NamedParam> out;
  nn::collect(vis_proj[0], prefix + "vis.stage0", out);
  nn::collect(vis_proj[1], prefix + "vis.stage1", out);
  nn::collect(txt_proj, prefix + "txt.proj", out);
  nn::collect(txt_attn, prefix + "txt.attn", out);
  nn::collect(txt_ln1, prefix + "txt.ln1", out);
  nn::collect(txt_ln2, prefix + "txt.ln2", out);
  nn::collect(txt_ffn, prefix + "txt.ffn", out);
  nn::collect(bi_v2t, prefix + "fuse.v2t", out);
  nn::collect(bi_t2v, prefix + "fuse.t2v", out);
  nn::collect(bi_ln_v1, prefix + "fuse.ln_v1", out);
  nn::collect(bi_ln_t1, prefix + "fuse.ln_t1", out);
  nn::collect(bi_ln_v2, prefix + "fuse.ln_v2", out);
  nn::collect(bi_ln_t2, prefix + "fuse.ln_t2", out);
  nn::collect(bi_ffn_v, prefix + "fuse.ffn_v", out);
  nn::collect(bi_ffn_t, prefix + "fuse.ffn_t", out);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string lp = prefix + "dec.layer" + std::to_string(l);
    nn::collect(layers[l].self_attn, lp + ".self", out);
    nn::collect(layers[l].cross_attn, lp + ".cross", out);
    nn::collect(layers[l].ffn, lp + ".ffn", out);
    nn::collect(layers[l].ln1, lp + ".ln1", out);
    nn::collect(layers[l].ln2, lp + ".ln2", out);
    nn::collect(layers[l].ln3, lp + ".ln3", out);
  }
  return out;
}

namespace {

// Applies a temporal(-difference) adapter along T independently for every
// token position of a [T×P×d] tensor; weights are shared across positions.
Tensor adapt_per_position(const Tensor& x, const AdapterParams& p, bool diff) {
  const std::size_t positions = x.dim(1);
  Tensor xt = op::transpose01(x);  // [P×T×d]
  std::vector<Tensor> rows;
  rows.reserve(positions);
  for (std::size_t n = 0; n < positions; ++n) {
    Tensor seq = op::select0(xt, n);
    rows.push_back(diff ? adapters::temporal_diff_adapter(seq, p)
                        : adapters::temporal_adapter(seq, p));
  }
  return op::transpose01(op::stack0(rows));
}

Tensor downsample_frames(const Tensor& x) {
  const std::size_t T = x.dim(0);
  std::vector<Tensor> frames;
  frames.reserve(T);
  for (std::size_t t = 0; t < T; ++t) frames.push_back(op::avg_pool2x2(op::select0(x, t)));
  return op::stack0(frames);
}

}  // namespace

Tensor encode_frames(const FrameBatch& b, const FrozenBackbone& fb,
                     std::span<const AdapterParams> st_adapters) {
  b.validate();
  if (st_adapters.size() != fb.vis_proj.size()) {
    throw ConfigError("encode_frames: expected one spatio-temporal adapter per stage");
  }
  Tensor x = b.video;
  if (x.dim(3) != fb.cfg.c_in) {
    throw ConfigError("encode_frames: video channels " + std::to_string(x.dim(3)) +
                      " do not match the configured " + std::to_string(fb.cfg.c_in));
  }
  if (x.dim(1) % 4 != 0 || x.dim(2) % 4 != 0) {
    throw ConfigError("encode_frames: grid " + std::to_string(x.dim(1)) + "x" +
                      std::to_string(x.dim(2)) + " must be divisible by 4 for two stages");
  }
  for (std::size_t s = 0; s < fb.vis_proj.size(); ++s) {
    const std::size_t T = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const std::size_t c_out = fb.cfg.stage_channels(s);
    Tensor flat = op::reshape(x, {T * H * W, C});
    Tensor projected = op::gelu(nn::linear(flat, fb.vis_proj[s]));
    x = downsample_frames(op::reshape(projected, {T, H, W, c_out}));
    if (st_adapters[s].channels != c_out) {
      throw ConfigError("encode_frames: stage " + std::to_string(s) + " emits " +
                        std::to_string(c_out) + " channels but its adapter expects " +
                        std::to_string(st_adapters[s].channels));
    }
    x = adapters::st_adapter(x, st_adapters[s]);
  }
  return x;
}

std::pair<Tensor, Tensor> encode_text(const FrameBatch& b, const FrozenBackbone& fb,
                                      const adapters::LoRAParams& lora) {
  Tensor x = adapters::lora_linear(b.text, fb.txt_proj.w, lora);
  x = op::add_bias(x, fb.txt_proj.b);
  x = nn::layer_norm(op::add(x, nn::mha(x, x, fb.txt_attn, fb.cfg.n_heads)), fb.txt_ln1);
  x = nn::layer_norm(op::add(x, nn::ffn(x, fb.txt_ffn)), fb.txt_ln2);
  Tensor cls = op::mean_axis(x, 0);
  return {x, cls};
}

std::pair<Tensor, Tensor> multimodal_fuse(const Tensor& vis, const Tensor& txt,
                                          const FrozenBackbone& fb, const FusionAdapters& ad) {
  if (vis.rank() != 3 || txt.rank() != 2 || vis.dim(2) != fb.cfg.d || txt.dim(1) != fb.cfg.d) {
    throw ConfigError("multimodal_fuse: expected vis [T×N_v×d] and txt [L×d] at d=" +
                      std::to_string(fb.cfg.d) + ", got " + shape_str(vis.shape()) + " and " +
                      shape_str(txt.shape()));
  }
  const std::size_t T = vis.dim(0), n_v = vis.dim(1), d = vis.dim(2);

  Tensor v = adapt_per_position(vis, *ad.temporal, /*diff=*/false);
  v = adapt_per_position(v, *ad.diff_pre, /*diff=*/true);

  Tensor vflat = op::reshape(v, {T * n_v, d});
  Tensor v_att = nn::mha(vflat, txt, fb.bi_v2t, fb.cfg.n_heads);
  Tensor t_att = nn::mha(txt, vflat, fb.bi_t2v, fb.cfg.n_heads);
  Tensor mem_v = nn::layer_norm(op::add(vflat, v_att), fb.bi_ln_v1);
  Tensor mem_t = nn::layer_norm(op::add(txt, t_att), fb.bi_ln_t1);
  mem_v = nn::layer_norm(op::add(mem_v, nn::ffn(mem_v, fb.bi_ffn_v)), fb.bi_ln_v2);
  mem_t = nn::layer_norm(op::add(mem_t, nn::ffn(mem_t, fb.bi_ffn_t)), fb.bi_ln_t2);

  Tensor mem_v3 = adapt_per_position(op::reshape(mem_v, {T, n_v, d}), *ad.diff_post,
                                     /*diff=*/true);
  return {mem_v3, mem_t};
}

std::vector<std::vector<std::size_t>> language_guided_select(const Tensor& mem_vision,
                                                             const Tensor& mem_text,
                                                             std::size_t n_q) {
  const std::size_t T = mem_vision.dim(0), n_v = mem_vision.dim(1), d = mem_vision.dim(2);
  const std::size_t L = mem_text.dim(0);
  if (n_q > n_v) {
    throw ConfigError("language_guided_select: cannot keep " + std::to_string(n_q) +
                      " queries out of " + std::to_string(n_v) + " visual tokens");
  }
  const auto vv = mem_vision.value();
  const auto tv = mem_text.value();
  std::vector<std::vector<std::size_t>> indices(T);
  std::vector<std::pair<double, std::size_t>> scored(n_v);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t n = 0; n < n_v; ++n) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < L; ++l) {
        double dot = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          dot += vv[(t * n_v + n) * d + i] * tv[l * d + i];
        }
        best = std::max(best, dot);
      }
      scored[n] = {best, n};
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    indices[t].resize(n_q);
    for (std::size_t k = 0; k < n_q; ++k) indices[t][k] = scored[k].second;
  }
  return indices;
}

Tensor gather_selected(const Tensor& mem_vision,
                       const std::vector<std::vector<std::size_t>>& indices) {
  const std::size_t T = mem_vision.dim(0);
  std::vector<Tensor> frames;
  frames.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    frames.push_back(op::gather_rows(op::select0(mem_vision, t), indices[t]));
  }
  return op::stack0(frames);
}

Tensor decode_queries(const Tensor& selected, const Tensor& mem_text,
                      const FrozenBackbone& fb, const DecoderAdapters& ad) {
  if (selected.rank() != 3 || selected.dim(2) != fb.cfg.d) {
    throw ConfigError("decode_queries: expected [T×N_q×d] queries, got " +
                      shape_str(selected.shape()));
  }
  if (ad.temporal.size() != fb.layers.size()) {
    throw ConfigError("decode_queries: expected one temporal adapter per decoder layer");
  }
  const std::size_t T = selected.dim(0);
  Tensor x = selected;
  for (std::size_t l = 0; l < fb.layers.size(); ++l) {
    const auto& layer = fb.layers[l];
    x = adapt_per_position(x, *ad.temporal[l], /*diff=*/false);
    std::vector<Tensor> frames;
    frames.reserve(T);
    for (std::size_t t = 0; t < T; ++t) {
      Tensor q = op::select0(x, t);
      q = nn::layer_norm(op::add(q, nn::mha(q, q, layer.self_attn, fb.cfg.n_heads)), layer.ln1);
      q = nn::layer_norm(op::add(q, nn::mha(q, mem_text, layer.cross_attn, fb.cfg.n_heads)),
                         layer.ln2);
      q = nn::layer_norm(op::add(q, nn::ffn(q, layer.ffn)), layer.ln3);
      frames.push_back(q);
    }
    x = op::stack0(frames);
  }
  return adapt_per_position(x, *ad.diff_post, /*diff=*/true);
}

}  // namespace stvg::backbone
