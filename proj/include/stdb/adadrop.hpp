#pragma once

#include <cstddef>
#include <vector>

#include "stdb/rng.hpp"
#include "stdb/tensor.hpp"

namespace stdb {

enum class MapPool { Mean, Max };

// Per-position saliency over channels: N x C x H x W -> N x 1 x H x W.
// Mean pooling is the default; Max is a configuration toggle.
Tensor attention_map(const Tensor& f, MapPool pool = MapPool::Mean);

// Binary mask over spatial positions. Entries are exactly 0 or 1 and the
// tensor carries no tape: thresholding is not differentiable and gradients
// only flow through the surviving feature elements.
struct DropMask {
  Tensor values;  // N x 1 x H x W, entries in {0, 1}
  double alpha = 0.0;
};

// Per sample: x = max of the attention map, threshold y = alpha * x, and
// positions with value strictly greater than y are dropped (set to 0).
DropMask drop_mask(const Tensor& attn, double alpha);

// Alternative mode: drops exactly the top-q fraction of positions per sample
// (ties broken by flat index, round-to-nearest count).
DropMask drop_mask_quantile(const Tensor& attn, double q);

// Zeroes every channel at masked positions; broadcast multiply along C.
Tensor apply_drop(const Tensor& f, const DropMask& mask);

// Baseline eraser: one contiguous round(ratio_h*H) x round(ratio_w*W) block
// at a uniformly random valid offset, shared across the batch.
Tensor random_block_drop(const Tensor& f, double ratio_h, double ratio_w,
                         Rng& rng);

// Fraction of dropped (zero) positions per sample.
std::vector<double> drop_fraction(const DropMask& mask);

}  // namespace stdb
