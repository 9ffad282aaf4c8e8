#include "stdb/adadrop.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stdb {

Tensor attention_map(const Tensor& f, MapPool pool) {
  if (f.rank() != 4) throw DimError("attention_map: input must be rank 4");
  return pool == MapPool::Mean ? channel_avg(f) : channel_max(f);
}

namespace {

void check_map(const Tensor& attn) {
  if (attn.rank() != 4 || attn.extent(1) != 1) {
    throw DimError("drop mask: attention map must be N x 1 x H x W");
  }
}

}  // namespace

DropMask drop_mask(const Tensor& attn, double alpha) {
  check_map(attn);
  if (alpha <= 0.0) throw ContractError("drop_mask: alpha must be positive");
  const std::size_t n = attn.extent(0);
  const std::size_t hw = attn.extent(2) * attn.extent(3);
  const auto a = attn.data();
  std::vector<double> mask(n * hw, 1.0);
  for (std::size_t s = 0; s < n; ++s) {
    double mx = a[s * hw];
    for (std::size_t i = 1; i < hw; ++i) mx = std::max(mx, a[s * hw + i]);
    const double threshold = alpha * mx;
    for (std::size_t i = 0; i < hw; ++i) {
      if (a[s * hw + i] > threshold) mask[s * hw + i] = 0.0;
    }
  }
  DropMask out;
  out.values = Tensor::from_data(attn.shape(), std::move(mask));
  out.alpha = alpha;
  return out;
}

DropMask drop_mask_quantile(const Tensor& attn, double q) {
  check_map(attn);
  if (q < 0.0 || q > 1.0) throw ContractError("drop_mask_quantile: q must be in [0,1]");
  const std::size_t n = attn.extent(0);
  const std::size_t hw = attn.extent(2) * attn.extent(3);
  const auto a = attn.data();
  const std::size_t k = static_cast<std::size_t>(
      std::llround(q * static_cast<double>(hw)));
  std::vector<double> mask(n * hw, 1.0);
  std::vector<std::size_t> order(hw);
  for (std::size_t s = 0; s < n; ++s) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    const double* base = a.data() + s * hw;
    std::sort(order.begin(), order.end(), [base](std::size_t x, std::size_t y) {
      if (base[x] != base[y]) return base[x] > base[y];
      return x < y;
    });
    for (std::size_t i = 0; i < k; ++i) mask[s * hw + order[i]] = 0.0;
  }
  DropMask out;
  out.values = Tensor::from_data(attn.shape(), std::move(mask));
  out.alpha = q;
  return out;
}

Tensor apply_drop(const Tensor& f, const DropMask& mask) {
  if (f.rank() != 4) throw DimError("apply_drop: feature must be rank 4");
  const Shape& ms = mask.values.shape();
  if (ms[0] != f.extent(0) || ms[2] != f.extent(2) || ms[3] != f.extent(3)) {
    throw DimError("apply_drop: mask " + shape_to_string(ms) +
                   " does not match feature " + shape_to_string(f.shape()));
  }
  return broadcast_mul(f, mask.values);
}

Tensor random_block_drop(const Tensor& f, double ratio_h, double ratio_w,
                         Rng& rng) {
  if (f.rank() != 4) throw DimError("random_block_drop: feature must be rank 4");
  if (ratio_h <= 0.0 || ratio_h > 1.0 || ratio_w <= 0.0 || ratio_w > 1.0) {
    throw ContractError("random_block_drop: ratios must be in (0, 1]");
  }
  const std::size_t n = f.extent(0);
  const std::size_t h = f.extent(2), w = f.extent(3);
  const std::size_t bh = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(ratio_h * static_cast<double>(h))));
  const std::size_t bw = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(ratio_w * static_cast<double>(w))));
  const std::size_t oh = rng.uniform_index(h - bh + 1);
  const std::size_t ow = rng.uniform_index(w - bw + 1);

  std::vector<double> mask(n * h * w, 1.0);
  for (std::size_t s = 0; s < n; ++s) {  // same block in every sample
    for (std::size_t i = oh; i < oh + bh; ++i) {
      for (std::size_t j = ow; j < ow + bw; ++j) {
        mask[(s * h + i) * w + j] = 0.0;
      }
    }
  }
  return broadcast_mul(f, Tensor::from_data({n, 1, h, w}, std::move(mask)));
}

std::vector<double> drop_fraction(const DropMask& mask) {
  const std::size_t n = mask.values.extent(0);
  const std::size_t hw = mask.values.extent(2) * mask.values.extent(3);
  const auto m = mask.values.data();
  std::vector<double> out(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < hw; ++i) {
      if (m[s * hw + i] == 0.0) ++zeros;
    }
    out[s] = static_cast<double>(zeros) / static_cast<double>(hw);
  }
  return out;
}

}  // namespace stdb
