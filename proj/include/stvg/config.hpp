#pragma once

#include <cstddef>

namespace stvg {

// Static shape of the model. Data dimensions (clip length, grid size, token
// count) live in the training config; the model itself only fixes widths.
struct ModelConfig {
  std::size_t c_in = 16;    // video feature channels entering the first stage
  std::size_t d = 64;       // model width; the two stages run at d/2 and d
  std::size_t d_text = 32;  // raw text token embedding width
  std::size_t n_q = 4;      // queries kept by language-guided selection
  std::size_t k_sel = 2;    // top-K queries aggregated per frame
  std::size_t n_heads = 4;
  std::size_t n_dec_layers = 2;
  std::size_t n_tdec_layers = 2;
  std::size_t adapter_ratio = 4;
  std::size_t adapter_kernel = 3;
  std::size_t lora_rank = 4;
  double lora_alpha = 8.0;
  std::size_t t_max = 32;  // relative-position clamp in the temporal decoder
  std::size_t frozen_ffn_hidden = 1536;
  std::size_t tdec_ffn_hidden = 64;
  std::size_t box_head_hidden = 32;

  std::size_t stage_channels(std::size_t stage) const {
    return stage == 0 ? d / 2 : d;
  }

  void validate() const;  // throws ConfigError
};

}  // namespace stvg
