#include "stvg/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <json.hpp>

#include "stvg/errors.hpp"
#include "stvg/metrics.hpp"

namespace stvg::data {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kPatternSalt = 0x7a11e7;
constexpr std::uint64_t kTextSalt = 0x7e47;

Tensor unit_vector(Shape shape, Rng& rng) {
  Tensor t = Tensor::normal(std::move(shape), rng, 1.0);
  auto v = t.mutable_value();
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return t;
}

// Fraction of the grid cell (row i, col j) covered by the box.
double cell_overlap(const BoxCorners& box, std::size_t i, std::size_t j, std::size_t h,
                    std::size_t w) {
  const double cx0 = static_cast<double>(j) / static_cast<double>(w);
  const double cx1 = static_cast<double>(j + 1) / static_cast<double>(w);
  const double cy0 = static_cast<double>(i) / static_cast<double>(h);
  const double cy1 = static_cast<double>(i + 1) / static_cast<double>(h);
  const double ox = std::max(0.0, std::min(box.x1, cx1) - std::max(box.x0, cx0));
  const double oy = std::max(0.0, std::min(box.y1, cy1) - std::max(box.y0, cy0));
  return ox * oy / ((cx1 - cx0) * (cy1 - cy0));
}

struct Trajectory {
  std::size_t t_s, t_e;
  std::vector<double> boxes;  // cxcywh per in-segment frame
};

Trajectory draw_trajectory(const DatasetSpec& spec, Rng& rng) {
  Trajectory tr;
  const std::size_t t = spec.t_frames;
  const std::size_t min_len = std::min(spec.min_len, t);
  const std::size_t len = min_len + rng.below(t - min_len + 1);
  tr.t_s = rng.below(t - len + 1);
  tr.t_e = tr.t_s + len - 1;

  const double w = rng.uniform(0.45, 0.7);
  const double h = rng.uniform(0.45, 0.7);
  auto center = [&rng](double extent) {
    return rng.uniform(extent / 2 + 0.02, 1.0 - extent / 2 - 0.02);
  };
  auto drift = [&rng](double c, double extent) {
    const double lo = extent / 2 + 0.02, hi = 1.0 - extent / 2 - 0.02;
    return std::clamp(c + rng.uniform(-0.2, 0.2), lo, hi);
  };
  const double cx0 = center(w), cy0 = center(h);
  const double cx1 = drift(cx0, w), cy1 = drift(cy0, h);

  for (std::size_t f = 0; f < len; ++f) {
    const double a = len == 1 ? 0.0 : static_cast<double>(f) / static_cast<double>(len - 1);
    tr.boxes.push_back(cx0 + a * (cx1 - cx0));
    tr.boxes.push_back(cy0 + a * (cy1 - cy0));
    tr.boxes.push_back(w);
    tr.boxes.push_back(h);
  }
  return tr;
}

void inject(std::vector<double>& video, const DatasetSpec& spec, const Trajectory& tr,
            const Tensor& pattern, double gain) {
  const std::size_t h = spec.height, w = spec.width, c = spec.channels;
  const auto pv = pattern.value();
  for (std::size_t t = tr.t_s; t <= tr.t_e; ++t) {
    const std::size_t row = t - tr.t_s;
    const BoxCorners box = corners_from_cxcywh(tr.boxes[row * 4], tr.boxes[row * 4 + 1],
                                               tr.boxes[row * 4 + 2], tr.boxes[row * 4 + 3]);
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        const double ov = cell_overlap(box, i, j, h, w);
        if (ov <= 0.0) continue;
        const std::size_t base = ((t * h + i) * w + j) * c;
        for (std::size_t ch = 0; ch < c; ++ch) video[base + ch] += gain * ov * pv[ch];
      }
    }
  }
}

}  // namespace

void DatasetSpec::validate() const {
  if (t_frames < 2) {
    throw ConfigError("dataset: need at least two frames, got " + std::to_string(t_frames));
  }
  if (height < 1 || width < 1 || channels < 1 || tokens < 1 || d_text < 1) {
    throw ConfigError("dataset: degenerate dimensions");
  }
  if (n_patterns < 2) {
    throw ConfigError("dataset: need at least two patterns for a distractor");
  }
  if (min_len < 1 || min_len > t_frames) {
    throw ConfigError("dataset: min segment length out of range");
  }
}

Tensor pattern_vector(std::size_t id, std::size_t channels) {
  Rng rng(Rng::mix(kPatternSalt, id));
  return unit_vector({channels}, rng);
}

Tensor text_pattern_embedding(std::size_t id, std::size_t d_text) {
  Rng rng(Rng::mix(kTextSalt, id));
  return unit_vector({d_text}, rng);
}

std::vector<SyntheticSample> generate_dataset(const DatasetSpec& spec, std::size_t n_samples,
                                              std::uint64_t seed) {
  spec.validate();
  if (n_samples < 1) {
    throw ConfigError("generate_dataset: need at least one sample");
  }
  std::vector<SyntheticSample> out;
  out.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    SyntheticSample s;
    s.id = i;
    s.seed = Rng::mix(seed, i);
    Rng rng(s.seed);

    s.pattern_id = rng.below(spec.n_patterns);
    const std::size_t distractor =
        (s.pattern_id + 1 + rng.below(spec.n_patterns - 1)) % spec.n_patterns;

    Trajectory target = draw_trajectory(spec, rng);
    Trajectory decoy = draw_trajectory(spec, rng);

    std::vector<double> video(spec.t_frames * spec.height * spec.width * spec.channels);
    for (auto& x : video) x = spec.noise * rng.normal();
    inject(video, spec, target, pattern_vector(s.pattern_id, spec.channels), spec.target_gain);
    inject(video, spec, decoy, pattern_vector(distractor, spec.channels),
           spec.distractor_gain);

    std::vector<double> text(spec.tokens * spec.d_text);
    const Tensor content = text_pattern_embedding(s.pattern_id, spec.d_text);
    for (std::size_t l = 0; l < spec.tokens; ++l) {
      for (std::size_t k = 0; k < spec.d_text; ++k) {
        const double noise = (l == 0 ? spec.text_noise : 0.5) * rng.normal();
        text[l * spec.d_text + k] = (l == 0 ? content.value()[k] : 0.0) + noise;
      }
    }

    s.batch.video =
        Tensor::from(std::move(video), {spec.t_frames, spec.height, spec.width, spec.channels});
    s.batch.text = Tensor::from(std::move(text), {spec.tokens, spec.d_text});
    s.gt.t_s = target.t_s;
    s.gt.t_e = target.t_e;
    s.gt.boxes = Tensor::from(target.boxes, {target.t_e - target.t_s + 1, 4});
    s.gt.validate(spec.t_frames);
    out.push_back(std::move(s));
  }
  return out;
}

void write_jsonl(const std::string& path, std::span<const SyntheticSample> samples) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  for (const auto& s : samples) {
    ordered_json j;
    j["id"] = s.id;
    j["seed"] = s.seed;
    j["T"] = s.batch.video.dim(0);
    j["H"] = s.batch.video.dim(1);
    j["W"] = s.batch.video.dim(2);
    j["C"] = s.batch.video.dim(3);
    j["L"] = s.batch.text.dim(0);
    j["video_features"] = std::vector<double>(s.batch.video.value().begin(),
                                              s.batch.video.value().end());
    j["text_tokens"] =
        std::vector<double>(s.batch.text.value().begin(), s.batch.text.value().end());
    j["t_s"] = s.gt.t_s;
    j["t_e"] = s.gt.t_e;
    std::vector<std::vector<double>> boxes;
    const auto bv = s.gt.boxes.value();
    for (std::size_t r = 0; r < s.gt.boxes.dim(0); ++r) {
      boxes.push_back({bv[r * 4], bv[r * 4 + 1], bv[r * 4 + 2], bv[r * 4 + 3]});
    }
    j["boxes"] = boxes;
    os << j.dump() << "\n";
  }
  if (!os) throw IoError("failed writing " + path);
}

std::vector<SyntheticSample> read_jsonl(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::vector<SyntheticSample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const std::exception& e) {
      throw IoError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    SyntheticSample s;
    s.id = j.at("id").get<std::size_t>();
    s.seed = j.at("seed").get<std::uint64_t>();
    const auto t = j.at("T").get<std::size_t>();
    const auto h = j.at("H").get<std::size_t>();
    const auto w = j.at("W").get<std::size_t>();
    const auto c = j.at("C").get<std::size_t>();
    const auto l = j.at("L").get<std::size_t>();
    auto video = j.at("video_features").get<std::vector<double>>();
    auto text = j.at("text_tokens").get<std::vector<double>>();
    if (video.size() != t * h * w * c || l == 0 || text.size() % l != 0) {
      throw IoError(path + ":" + std::to_string(line_no) + ": inconsistent feature sizes");
    }
    s.batch.video = Tensor::from(std::move(video), {t, h, w, c});
    s.batch.text = Tensor::from(std::move(text), {l, text.size() / l});
    s.gt.t_s = j.at("t_s").get<std::size_t>();
    s.gt.t_e = j.at("t_e").get<std::size_t>();
    auto boxes = j.at("boxes").get<std::vector<std::vector<double>>>();
    std::vector<double> flat;
    for (const auto& b : boxes) {
      if (b.size() != 4) {
        throw IoError(path + ":" + std::to_string(line_no) + ": box is not cxcywh");
      }
      flat.insert(flat.end(), b.begin(), b.end());
    }
    s.gt.boxes = Tensor::from(std::move(flat), {boxes.size(), 4});
    s.gt.validate(t);
    s.batch.validate();
    s.pattern_id = static_cast<std::size_t>(-1);  // unknown after a round trip
    out.push_back(std::move(s));
  }
  return out;
}

double matched_filter_tiou(const SyntheticSample& s, const DatasetSpec& spec) {
  const std::size_t t_frames = s.batch.video.dim(0);
  const std::size_t h = s.batch.video.dim(1), w = s.batch.video.dim(2),
                    c = s.batch.video.dim(3);
  const Tensor pattern = pattern_vector(s.pattern_id, c);
  const auto pv = pattern.value();
  const auto vv = s.batch.video.value();

  std::vector<double> response(t_frames, 0.0);
  for (std::size_t t = 0; t < t_frames; ++t) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t cell = 0; cell < h * w; ++cell) {
      double dot = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) dot += vv[(t * h * w + cell) * c + ch] * pv[ch];
      best = std::max(best, dot);
    }
    response[t] = best;
  }
  // The filter knows the injected amplitude; the most-covered cell of an
  // in-segment frame responds near the full gain.
  const double thr = 0.5 * spec.target_gain;
  const std::size_t peak =
      static_cast<std::size_t>(std::max_element(response.begin(), response.end()) -
                               response.begin());
  std::size_t a = peak, b = peak;
  while (a > 0 && response[a - 1] > thr) --a;
  while (b + 1 < t_frames && response[b + 1] > thr) ++b;
  return metrics::t_iou({a, b}, {s.gt.t_s, s.gt.t_e});
}

}  // namespace stvg::data
