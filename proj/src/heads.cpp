#include "stvg/heads.hpp"

#include <algorithm>
#include <cmath>

#include "stvg/errors.hpp"
#include "stvg/ops.hpp"

namespace stvg::heads {

namespace op = stvg::ops;

Tensor relevance_scores(const Tensor& v, const Tensor& c) {
  if (v.rank() != 3 || c.rank() != 1 || v.dim(2) != c.dim(0)) {
    throw DimensionError("relevance_scores: expected v [T×N_q×d] and c [d], got " +
                         shape_str(v.shape()) + " and " + shape_str(c.shape()));
  }
  bool c_zero = true;
  for (double x : c.value()) c_zero = c_zero && x == 0.0;
  if (c_zero) {
    throw ValidationError("relevance_scores: text vector is all zero");
  }
  const std::size_t T = v.dim(0), n_q = v.dim(1), d = v.dim(2);
  Tensor v2 = op::reshape(v, {T * n_q, d});
  Tensor dots = op::reshape(op::matmul(v2, op::reshape(c, {d, 1})), {T * n_q});
  Tensor v_norm = op::sqrt(op::clamp_min(op::sum_axis(op::mul(v2, v2), 1), 1e-24));
  Tensor c_norm = op::sqrt(op::sum(op::mul(c, c)));
  Tensor s = op::div(dots, op::mul_bscalar(v_norm, c_norm));
  return op::reshape(s, {T, n_q});
}

std::vector<std::vector<std::size_t>> top_k_select(const Tensor& scores, std::size_t k) {
  if (scores.rank() != 2) {
    throw DimensionError("top_k_select: expected [T×N_q], got " + shape_str(scores.shape()));
  }
  const std::size_t T = scores.dim(0), n_q = scores.dim(1);
  if (k < 1 || k > n_q) {
    throw ConfigError("top_k_select: k=" + std::to_string(k) + " out of range [1, " +
                      std::to_string(n_q) + "]");
  }
  const auto sv = scores.value();
  std::vector<std::vector<std::size_t>> out(T);
  std::vector<std::pair<double, std::size_t>> row(n_q);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < n_q; ++j) row[j] = {sv[t * n_q + j], j};
    std::sort(row.begin(), row.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    out[t].resize(k);
    for (std::size_t j = 0; j < k; ++j) out[t][j] = row[j].second;
  }
  return out;
}

Tensor aggregate_queries(const Tensor& v, const Tensor& scores,
                         const std::vector<std::vector<std::size_t>>& indices) {
  const std::size_t T = v.dim(0), d = v.dim(2);
  if (indices.size() != T) {
    throw DimensionError("aggregate_queries: need one index set per frame");
  }
  std::vector<Tensor> rows;
  rows.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    const auto& idx = indices[t];
    Tensor selected_scores = op::gather_rows(op::select0(scores, t), idx);  // [K]
    Tensor weights = op::softmax(selected_scores, 0);
    Tensor queries = op::gather_rows(op::select0(v, t), idx);  // [K×d]
    rows.push_back(op::matmul(op::reshape(weights, {1, idx.size()}), queries));
  }
  return op::reshape(op::concat(rows, 0), {T, d});
}

Tensor fuse_global_local(const Tensor& f_agg, const Tensor& mem_vision,
                         const nn::LinearW& proj) {
  if (f_agg.rank() != 2 || mem_vision.rank() != 3 || f_agg.dim(0) != mem_vision.dim(0) ||
      f_agg.dim(1) != mem_vision.dim(2)) {
    throw DimensionError("fuse_global_local: shapes " + shape_str(f_agg.shape()) + " and " +
                         shape_str(mem_vision.shape()) + " disagree");
  }
  Tensor f_global = op::mean_axis(mem_vision, 1);  // [T×d]
  std::vector<Tensor> parts{f_agg, f_global};
  return nn::linear(op::concat(parts, 1), proj);
}

TemporalDecoder init_temporal_decoder(const ModelConfig& cfg, Rng& rng) {
  TemporalDecoder dec;
  dec.t_max = cfg.t_max;
  dec.n_heads = cfg.n_heads;
  dec.layers.resize(cfg.n_tdec_layers);
  for (auto& layer : dec.layers) {
    layer.attn = nn::init_attention(cfg.d, rng, true);
    layer.rel_bias = Tensor::zeros({2 * cfg.t_max + 1});
    layer.rel_bias.set_requires_grad(true);
    layer.ln1 = nn::init_layer_norm(cfg.d, rng, true);
    layer.ln2 = nn::init_layer_norm(cfg.d, rng, true);
    layer.ffn = nn::init_ffn(cfg.d, cfg.tdec_ffn_hidden, rng, true);
  }
  return dec;
}

std::vector<NamedParam> TemporalDecoder::named(const std::string& prefix) const {
  std::vector<NamedParam> out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string lp = prefix + ".layer" + std::to_string(l);
    nn::collect(layers[l].attn, lp + ".attn", out);
    out.push_back({lp + ".rel_bias", layers[l].rel_bias.requires_grad(), layers[l].rel_bias});
    nn::collect(layers[l].ln1, lp + ".ln1", out);
    nn::collect(layers[l].ln2, lp + ".ln2", out);
    nn::collect(layers[l].ffn, lp + ".ffn", out);
  }
  return out;
}

std::vector<std::size_t> relative_bias_indices(std::size_t t, std::size_t t_max) {
  std::vector<std::size_t> idx(t * t);
  const std::ptrdiff_t clamp = static_cast<std::ptrdiff_t>(t_max);
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < t; ++j) {
      std::ptrdiff_t delta = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(j);
      delta = std::max(-clamp, std::min(clamp, delta));
      idx[i * t + j] = static_cast<std::size_t>(delta + clamp);
    }
  }
  return idx;
}

Tensor temporal_decode(const Tensor& f_fused, const TemporalDecoder& dec) {
  if (f_fused.rank() != 2) {
    throw DimensionError("temporal_decode: expected [T×d], got " + shape_str(f_fused.shape()));
  }
  const std::size_t T = f_fused.dim(0);
  const auto idx = relative_bias_indices(T, dec.t_max);
  Tensor x = f_fused;
  for (const auto& layer : dec.layers) {
    Tensor bias = op::reshape(op::gather_rows(layer.rel_bias, idx), {T, T});
    Tensor attn = nn::mha(x, x, layer.attn, dec.n_heads, &bias);
    x = nn::layer_norm(op::add(x, attn), layer.ln1);
    x = nn::layer_norm(op::add(x, nn::ffn(x, layer.ffn)), layer.ln2);
  }
  return x;
}

BoundaryHeads init_boundary_heads(std::size_t d, Rng& rng) {
  return {nn::init_linear(d, 1, rng, true), nn::init_linear(d, 1, rng, true),
          nn::init_linear(d, 1, rng, true)};
}

std::vector<NamedParam> BoundaryHeads::named(const std::string& prefix) const {
  std::vector<NamedParam> out;
  nn::collect(start, prefix + ".start", out);
  nn::collect(end, prefix + ".end", out);
  nn::collect(conf, prefix + ".conf", out);
  return out;
}

BoundaryPrediction predict_boundaries(const Tensor& h, const BoundaryHeads& heads) {
  const std::size_t T = h.dim(0);
  BoundaryPrediction p;
  p.start_dist = op::softmax(op::reshape(nn::linear(h, heads.start), {T}), 0);
  p.end_dist = op::softmax(op::reshape(nn::linear(h, heads.end), {T}), 0);
  p.temporal_conf = op::sigmoid(op::reshape(nn::linear(h, heads.conf), {T}));
  return p;
}

BoxHead init_box_head(std::size_t d, std::size_t hidden, Rng& rng) {
  return {nn::init_linear(d, hidden, rng, true), nn::init_linear(hidden, 4, rng, true)};
}

std::vector<NamedParam> BoxHead::named(const std::string& prefix) const {
  std::vector<NamedParam> named;
  nn::collect(hidden, prefix + ".hidden", named);
  nn::collect(out, prefix + ".out", named);
  return named;
}

Tensor predict_boxes(const Tensor& v, const Tensor& scores, const BoxHead& head) {
  const std::size_t T = v.dim(0), n_q = v.dim(1);
  const auto sv = scores.value();
  std::vector<Tensor> rows;
  rows.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < n_q; ++j) {
      if (sv[t * n_q + j] > sv[t * n_q + best]) best = j;
    }
    Tensor q = op::gather_rows(op::select0(v, t), {best});  // [1×d]
    rows.push_back(nn::linear(op::gelu(nn::linear(q, head.hidden)), head.out));
  }
  return op::sigmoid(op::concat(rows, 0));
}

PredictedTube extract_tube(const BoundaryPrediction& p) {
  const std::size_t T = p.start_dist.dim(0);
  const auto sv = p.start_dist.value();
  const auto ev = p.end_dist.value();
  std::size_t best_s = 0, best_e = 0;
  double best = -1.0;
  for (std::size_t s = 0; s < T; ++s) {
    for (std::size_t e = s; e < T; ++e) {
      const double joint = sv[s] * ev[e];
      if (joint > best) {
        best = joint;
        best_s = s;
        best_e = e;
      }
    }
  }
  PredictedTube tube;
  tube.t_s = best_s;
  tube.t_e = best_e;
  tube.boxes = ops::slice0(p.boxes, best_s, best_e + 1);
  return tube;
}

}  // namespace stvg::heads
