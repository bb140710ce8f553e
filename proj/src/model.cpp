#include "stvg/model.hpp"

#include "stvg/errors.hpp"
#include "stvg/ops.hpp"

namespace stvg {

namespace op = stvg::ops;
using adapters::AdapterKind;

Model Model::build(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  m.seed = seed;
  m.frozen = backbone::FrozenBackbone::build(cfg, seed);

  Rng rng(Rng::mix(seed, 0xa1));
  m.st.push_back(adapters::init_adapter(AdapterKind::SpatioTemporal, cfg.stage_channels(0),
                                        cfg.adapter_ratio, cfg.adapter_kernel, rng));
  m.st.push_back(adapters::init_adapter(AdapterKind::SpatioTemporal, cfg.stage_channels(1),
                                        cfg.adapter_ratio, cfg.adapter_kernel, rng));
  m.fuse_temporal = adapters::init_adapter(AdapterKind::Temporal, cfg.d, cfg.adapter_ratio,
                                           cfg.adapter_kernel, rng);
  m.fuse_diff_pre = adapters::init_adapter(AdapterKind::TemporalDiff, cfg.d, cfg.adapter_ratio,
                                           cfg.adapter_kernel, rng);
  m.fuse_diff_post = adapters::init_adapter(AdapterKind::TemporalDiff, cfg.d,
                                            cfg.adapter_ratio, cfg.adapter_kernel, rng);
  for (std::size_t l = 0; l < cfg.n_dec_layers; ++l) {
    m.dec_temporal.push_back(adapters::init_adapter(AdapterKind::Temporal, cfg.d,
                                                    cfg.adapter_ratio, cfg.adapter_kernel, rng));
  }
  m.dec_diff_post = adapters::init_adapter(AdapterKind::TemporalDiff, cfg.d, cfg.adapter_ratio,
                                           cfg.adapter_kernel, rng);
  m.lora = adapters::init_lora(cfg.d_text, cfg.d, cfg.lora_rank, cfg.lora_alpha, rng);

  m.fuse_proj = nn::init_linear(2 * cfg.d, cfg.d, rng, true);
  m.tdec = heads::init_temporal_decoder(cfg, rng);
  m.bheads = heads::init_boundary_heads(cfg.d, rng);
  m.box_head = heads::init_box_head(cfg.d, cfg.box_head_hidden, rng);
  return m;
}

ModelOutput Model::forward(const backbone::FrameBatch& batch) const {
  if (batch.text.dim(1) != cfg.d_text) {
    throw ConfigError("forward: text width " + std::to_string(batch.text.dim(1)) +
                      " does not match the configured " + std::to_string(cfg.d_text));
  }
  Tensor vis4 = backbone::encode_frames(batch, frozen, st);
  auto [tokens, cls] = backbone::encode_text(batch, frozen, lora);
  (void)cls;  // the clip-level text vector is taken after fusion

  const std::size_t T = vis4.dim(0);
  const std::size_t n_v = vis4.dim(1) * vis4.dim(2);
  Tensor vis = op::reshape(vis4, {T, n_v, cfg.d});

  backbone::FusionAdapters fuse_hooks{&fuse_temporal, &fuse_diff_pre, &fuse_diff_post};
  auto [mem_v, mem_t] = backbone::multimodal_fuse(vis, tokens, frozen, fuse_hooks);

  auto selected_idx = backbone::language_guided_select(mem_v, mem_t, cfg.n_q);
  Tensor selected = backbone::gather_selected(mem_v, selected_idx);

  backbone::DecoderAdapters dec_hooks;
  for (const auto& a : dec_temporal) dec_hooks.temporal.push_back(&a);
  dec_hooks.diff_post = &dec_diff_post;
  Tensor v = backbone::decode_queries(selected, mem_t, frozen, dec_hooks);

  Tensor text_query = op::mean_axis(mem_t, 0);  // fused clip-level text vector
  Tensor scores = heads::relevance_scores(v, text_query);
  auto top_k = heads::top_k_select(scores, cfg.k_sel);
  Tensor f_agg = heads::aggregate_queries(v, scores, top_k);
  Tensor f_fused = heads::fuse_global_local(f_agg, mem_v, fuse_proj);
  Tensor h = heads::temporal_decode(f_fused, tdec);

  ModelOutput out;
  out.prediction = heads::predict_boundaries(h, bheads);
  out.prediction.boxes = heads::predict_boxes(v, scores, box_head);
  out.queries = v;
  out.scores = scores;
  out.selected = std::move(selected_idx);
  out.top_k = std::move(top_k);
  return out;
}

std::vector<NamedParam> Model::named_params() const {
  std::vector<NamedParam> out = frozen.named("backbone.");
  for (std::size_t s = 0; s < st.size(); ++s) {
    auto a = st[s].named("adapters.vis.stage" + std::to_string(s));
    out.insert(out.end(), a.begin(), a.end());
  }
  const std::pair<const char*, const adapters::AdapterParams*> fuse_hooks[] = {
      {"adapters.fuse.temporal", &fuse_temporal},
      {"adapters.fuse.diff_pre", &fuse_diff_pre},
      {"adapters.fuse.diff_post", &fuse_diff_post},
  };
  for (const auto& [name, adapter] : fuse_hooks) {
    auto a = adapter->named(name);
    out.insert(out.end(), a.begin(), a.end());
  }
  for (std::size_t l = 0; l < dec_temporal.size(); ++l) {
    auto a = dec_temporal[l].named("adapters.dec.layer" + std::to_string(l) + ".temporal");
    out.insert(out.end(), a.begin(), a.end());
  }
  {
    auto a = dec_diff_post.named("adapters.dec.diff_post");
    out.insert(out.end(), a.begin(), a.end());
  }
  {
    auto a = lora.named("lora.txt");
    out.insert(out.end(), a.begin(), a.end());
  }
  nn::collect(fuse_proj, "heads.fuse_proj", out);
  {
    auto a = tdec.named("heads.tdec");
    out.insert(out.end(), a.begin(), a.end());
  }
  {
    auto a = bheads.named("heads.boundary");
    out.insert(out.end(), a.begin(), a.end());
  }
  {
    auto a = box_head.named("heads.box");
    out.insert(out.end(), a.begin(), a.end());
  }
  return out;
}

std::vector<NamedParam> Model::trainable_params() const {
  std::vector<NamedParam> out;
  for (auto& p : named_params()) {
    if (p.trainable) out.push_back(std::move(p));
  }
  return out;
}

std::vector<NamedParam> Model::frozen_params() const {
  std::vector<NamedParam> out;
  for (auto& p : named_params()) {
    if (!p.trainable) out.push_back(std::move(p));
  }
  return out;
}

void Model::zero_grads() const {
  for (const auto& p : named_params()) p.tensor.zero_grad();
}

LossBreakdown sample_loss(const ModelOutput& out, const GroundTruthTube& gt,
                          const losses::LossWeights& w, double sigma) {
  LossBreakdown lb;
  lb.temporal = losses::temporal_loss(out.prediction, gt, w, sigma);
  lb.spatial = losses::spatial_loss(out.prediction.boxes, gt, w);
  std::vector<std::pair<Tensor, Tensor>> queries{{lb.temporal, lb.spatial}};
  lb.total = losses::total_loss(queries);
  return lb;
}

}  // namespace stvg
