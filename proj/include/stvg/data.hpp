#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stvg/backbone.hpp"
#include "stvg/tensor.hpp"
#include "stvg/tubes.hpp"

// Seeded synthetic clips: a target pattern vector is written into the video
// features wherever the ground-truth box overlaps a grid cell, over the
// ground-truth segment; a distractor pattern does the same elsewhere; the
// text tokens carry the target pattern's embedding. Everything derives from
// (spec, seed), so datasets regenerate bit for bit.
namespace stvg::data {

struct DatasetSpec {
  std::size_t t_frames = 8;
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t channels = 16;
  std::size_t tokens = 6;
  std::size_t d_text = 32;
  std::size_t n_patterns = 4;
  std::size_t min_len = 2;        // shortest generated segment
  double noise = 0.25;            // background feature noise
  double target_gain = 2.5;       // injected target amplitude
  double distractor_gain = 1.2;   // injected distractor amplitude
  double text_noise = 0.1;

  void validate() const;
};

struct SyntheticSample {
  std::size_t id = 0;
  std::uint64_t seed = 0;
  backbone::FrameBatch batch;
  GroundTruthTube gt;
  // Known at generation time; regenerable from the seed, never serialized.
  std::size_t pattern_id = 0;
};

// The pattern vocabularies are fixed constants (independent of the dataset
// seed) so every dataset shares the same text-to-appearance mapping.
Tensor pattern_vector(std::size_t id, std::size_t channels);
Tensor text_pattern_embedding(std::size_t id, std::size_t d_text);

std::vector<SyntheticSample> generate_dataset(const DatasetSpec& spec, std::size_t n_samples,
                                              std::uint64_t seed);

void write_jsonl(const std::string& path, std::span<const SyntheticSample> samples);
std::vector<SyntheticSample> read_jsonl(const std::string& path);

// Projects each frame onto the sample's target pattern, thresholds the
// response at half the injected amplitude, and grows a segment around the
// peak frame; returns the temporal IoU against the ground truth. A detector
// this simple reaching high IoU confirms the generated task is solvable.
double matched_filter_tiou(const SyntheticSample& s, const DatasetSpec& spec);

}  // namespace stvg::data
