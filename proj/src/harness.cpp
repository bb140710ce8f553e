#include "stvg/harness.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <ostream>

#include "stvg/errors.hpp"
#include "stvg/ops.hpp"
#include "stvg/tape.hpp"

namespace stvg::harness {

using ordered_json = nlohmann::ordered_json;

void TrainConfig::validate() const {
  model.validate();
  dataset.validate();
  weights.validate();
  if (dataset.channels != model.c_in) {
    throw ConfigError("config: C=" + std::to_string(dataset.channels) +
                      " must equal the model input width " + std::to_string(model.c_in));
  }
  if (dataset.d_text != model.d_text) {
    throw ConfigError("config: dataset and model disagree on d_text");
  }
  if (dataset.height % 4 != 0 || dataset.width % 4 != 0) {
    throw ConfigError("config: H and W must be divisible by 4 (two 2x2 downsamples)");
  }
  const std::size_t n_v = (dataset.height / 4) * (dataset.width / 4);
  if (model.n_q > n_v) {
    throw ConfigError("config: n_q=" + std::to_string(model.n_q) + " exceeds the " +
                      std::to_string(n_v) + " visual tokens left after the encoder");
  }
  if (!(sigma > 0.0) || !(lr > 0.0)) {
    throw ConfigError("config: sigma and lr must be positive");
  }
  if (lr_final < 0.0 || lr_final > lr || clip_norm < 0.0) {
    throw ConfigError("config: need 0 <= lr_final <= lr and clip_norm >= 0");
  }
  if (steps < 1 || batch_size < 1 || n_train < 1 || n_val < 1 || log_every < 1) {
    throw ConfigError("config: steps, batch size and dataset sizes must be positive");
  }
}

namespace {

struct Field {
  const char* key;
  enum class Kind { U64, Size, Double } kind;
  void* ptr;
};

std::vector<Field> fields(TrainConfig& c) {
  using K = Field::Kind;
  return {
      {"seed", K::U64, &c.seed},
      {"T", K::Size, &c.dataset.t_frames},
      {"H", K::Size, &c.dataset.height},
      {"W", K::Size, &c.dataset.width},
      {"C", K::Size, &c.dataset.channels},
      {"L", K::Size, &c.dataset.tokens},
      {"d_text", K::Size, &c.dataset.d_text},
      {"n_patterns", K::Size, &c.dataset.n_patterns},
      {"min_len", K::Size, &c.dataset.min_len},
      {"noise", K::Double, &c.dataset.noise},
      {"target_gain", K::Double, &c.dataset.target_gain},
      {"distractor_gain", K::Double, &c.dataset.distractor_gain},
      {"text_noise", K::Double, &c.dataset.text_noise},
      {"d", K::Size, &c.model.d},
      {"n_q", K::Size, &c.model.n_q},
      {"k", K::Size, &c.model.k_sel},
      {"n_heads", K::Size, &c.model.n_heads},
      {"n_dec_layers", K::Size, &c.model.n_dec_layers},
      {"n_tdec_layers", K::Size, &c.model.n_tdec_layers},
      {"adapter_ratio", K::Size, &c.model.adapter_ratio},
      {"adapter_kernel", K::Size, &c.model.adapter_kernel},
      {"lora_rank", K::Size, &c.model.lora_rank},
      {"lora_alpha", K::Double, &c.model.lora_alpha},
      {"t_max", K::Size, &c.model.t_max},
      {"frozen_ffn_hidden", K::Size, &c.model.frozen_ffn_hidden},
      {"tdec_ffn_hidden", K::Size, &c.model.tdec_ffn_hidden},
      {"box_head_hidden", K::Size, &c.model.box_head_hidden},
      {"lambda_s", K::Double, &c.weights.lambda_s},
      {"lambda_e", K::Double, &c.weights.lambda_e},
      {"lambda_t", K::Double, &c.weights.lambda_t},
      {"lambda_box", K::Double, &c.weights.lambda_box},
      {"lambda_giou", K::Double, &c.weights.lambda_giou},
      {"sigma", K::Double, &c.sigma},
      {"lr", K::Double, &c.lr},
      {"lr_final", K::Double, &c.lr_final},
      {"clip_norm", K::Double, &c.clip_norm},
      {"steps", K::Size, &c.steps},
      {"batch_size", K::Size, &c.batch_size},
      {"n_train", K::Size, &c.n_train},
      {"n_val", K::Size, &c.n_val},
      {"log_every", K::Size, &c.log_every},
  };
}

}  // namespace

TrainConfig config_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  TrainConfig cfg;
  auto table = fields(cfg);
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (auto& f : table) {
      if (key != f.key) continue;
      known = true;
      try {
        switch (f.kind) {
          case Field::Kind::U64:
            *static_cast<std::uint64_t*>(f.ptr) = value.get<std::uint64_t>();
            break;
          case Field::Kind::Size:
            *static_cast<std::size_t*>(f.ptr) = value.get<std::size_t>();
            break;
          case Field::Kind::Double:
            *static_cast<double*>(f.ptr) = value.get<double>();
            break;
        }
      } catch (const std::exception& e) {
        throw ConfigError("config: bad value for '" + key + "': " + e.what());
      }
      break;
    }
    if (!known) throw ConfigError("config: unknown key '" + key + "'");
  }
  // dataset channels mirror the model input; keep single-source keys in sync
  cfg.model.c_in = cfg.dataset.channels;
  cfg.model.d_text = cfg.dataset.d_text;
  cfg.validate();
  return cfg;
}

std::string config_to_json(const TrainConfig& cfg) {
  TrainConfig copy = cfg;
  ordered_json j;
  for (const auto& f : fields(copy)) {
    switch (f.kind) {
      case Field::Kind::U64:
        j[f.key] = *static_cast<const std::uint64_t*>(f.ptr);
        break;
      case Field::Kind::Size:
        j[f.key] = *static_cast<const std::size_t*>(f.ptr);
        break;
      case Field::Kind::Double:
        j[f.key] = *static_cast<const double*>(f.ptr);
        break;
    }
  }
  return j.dump(2);
}

TrainConfig load_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open config " + path);
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return config_from_json(text);
}

Adam::Adam(std::vector<NamedParam> params, double lr) : lr_(lr) {
  slots_.reserve(params.size());
  for (auto& p : params) {
    Slot s;
    s.m.assign(p.tensor.numel(), 0.0);
    s.v.assign(p.tensor.numel(), 0.0);
    s.param = std::move(p);
    slots_.push_back(std::move(s));
  }
}

void Adam::step() {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  ++t_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (auto& s : slots_) {
    auto value = s.param.tensor.mutable_value();
    const auto grad = s.param.tensor.grad();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      s.m[i] = kBeta1 * s.m[i] + (1.0 - kBeta1) * g;
      s.v[i] = kBeta2 * s.v[i] + (1.0 - kBeta2) * g * g;
      const double mhat = s.m[i] / c1;
      const double vhat = s.v[i] / c2;
      value[i] -= lr_ * mhat / (std::sqrt(vhat) + kEps);
    }
  }
}

namespace {

struct BatchLoss {
  Tensor loss;
  double temporal = 0, spatial = 0;
};

BatchLoss batch_loss(const Model& model, std::span<const data::SyntheticSample> samples,
                     std::span<const std::size_t> batch, const TrainConfig& cfg) {
  BatchLoss out;
  Tensor acc;
  for (std::size_t idx : batch) {
    const auto& sample = samples[idx];
    ModelOutput mo = model.forward(sample.batch);
    LossBreakdown lb = sample_loss(mo, sample.gt, cfg.weights, cfg.sigma);
    acc = acc.defined() ? ops::add(acc, lb.total) : lb.total;
    out.temporal += lb.temporal.item();
    out.spatial += lb.spatial.item();
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss = ops::scale(acc, inv);
  out.temporal *= inv;
  out.spatial *= inv;
  return out;
}

void shuffle(std::vector<std::size_t>& order, Rng& rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
}

void clip_gradients(std::span<const NamedParam> params, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double scale = max_norm / norm;
  for (const auto& p : params) {
    auto* impl = p.tensor.impl();
    for (auto& g : impl->grad) g *= scale;
  }
}

// Cosine decay from lr to lr_final across the run.
double lr_at(const TrainConfig& cfg, std::size_t step) {
  if (cfg.steps <= 1) return cfg.lr;
  const double progress =
      static_cast<double>(step - 1) / static_cast<double>(cfg.steps - 1);
  const double cosine = 0.5 * (1.0 + std::cos(progress * 3.14159265358979323846));
  return cfg.lr_final + (cfg.lr - cfg.lr_final) * cosine;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, std::span<const data::SyntheticSample> train_set,
                  std::span<const data::SyntheticSample> val_set, std::ostream* log) {
  cfg.validate();
  if (train_set.empty()) throw ValidationError("train: empty training set");

  TrainResult result{Model::build(cfg.model, cfg.seed), {}, 0, 0};
  Model& model = result.model;
  auto trainables = model.trainable_params();
  Adam opt(trainables, cfg.lr);

  Rng order_rng(Rng::mix(cfg.seed, 0x0d));
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle(order, order_rng);
  std::size_t cursor = 0;

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    std::vector<std::size_t> batch;
    batch.reserve(cfg.batch_size);
    while (batch.size() < cfg.batch_size) {
      if (cursor == order.size()) {
        shuffle(order, order_rng);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }

    double total = 0;
    BatchLoss bl;
    try {
      Tape tape;
      bl = batch_loss(model, train_set, batch, cfg);
      total = bl.loss.item();
      tape.backward(bl.loss);
    } catch (const NumericError& e) {
      throw NumericError("train: aborted at step " + std::to_string(step) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError("train: aborted at step " + std::to_string(step) + ": " + e.what());
    }
    clip_gradients(trainables, cfg.clip_norm);
    opt.set_lr(lr_at(cfg, step));
    opt.step();
    model.zero_grads();

    if (step == 1) result.initial_loss = total;
    result.final_loss = total;

    if (step % cfg.log_every == 0 || step == 1 || step == cfg.steps) {
      StepLog entry{step, total, bl.temporal, bl.spatial, std::nullopt};
      if (!val_set.empty()) {
        entry.val = evaluate(model, val_set).metrics;
      }
      if (log != nullptr) {
        (*log) << "step " << entry.step << " loss " << entry.total << " (temporal "
               << entry.temporal << ", spatial " << entry.spatial << ")";
        if (entry.val) {
          (*log) << " val m_tIoU " << entry.val->m_tiou << " m_vIoU " << entry.val->m_viou;
        }
        (*log) << "\n";
      }
      result.history.push_back(std::move(entry));
    }
  }
  return result;
}

PredictedTube predict_tube(const Model& model, const data::SyntheticSample& s) {
  ModelOutput out = model.forward(s.batch);
  return heads::extract_tube(out.prediction);
}

EvalReport evaluate(const Model& model, std::span<const data::SyntheticSample> samples) {
  if (samples.empty()) throw ValidationError("evaluate: empty dataset");
  std::vector<std::pair<PredictedTube, GroundTruthTube>> pairs;
  pairs.reserve(samples.size());
  for (const auto& s : samples) {
    pairs.push_back({predict_tube(model, s), s.gt});
  }
  EvalReport r;
  r.metrics = metrics::dataset_metrics(pairs);
  const auto params = model.named_params();
  r.tp_trainable = metrics::count_trainable_params(params);
  r.tp_total = metrics::count_total_params(params);
  return r;
}

std::string report_to_json(const EvalReport& r) {
  ordered_json j;
  j["m_tiou"] = r.metrics.m_tiou;
  j["m_viou"] = r.metrics.m_viou;
  j["viou_at_03"] = r.metrics.viou_at_03;
  j["viou_at_05"] = r.metrics.viou_at_05;
  j["tp_trainable"] = r.tp_trainable;
  j["tp_total"] = r.tp_total;
  j["n_samples"] = r.metrics.n_samples;
  return j.dump(2);
}

void write_report(const std::string& path, const EvalReport& r) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << report_to_json(r) << "\n";
  if (!os) throw IoError("failed writing " + path);
}

}  // namespace stvg::harness
