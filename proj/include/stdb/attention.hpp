#pragma once

#include <cstddef>

#include "stdb/rng.hpp"
#include "stdb/tensor.hpp"

namespace stdb {

// Shared two-layer MLP of the channel gate. The same weights score both the
// average-pooled and the max-pooled channel descriptor; relu sits between the
// layers and there are no biases.
struct ChannelAttentionParams {
  Tensor w1;  // hidden x C
  Tensor w2;  // C x hidden
  std::size_t channels = 0;
  std::size_t reduction = 1;  // effective ratio after clamping

  // Clamps `reduction` so the hidden width C/r stays >= 1; the clamped value
  // must divide C.
  static ChannelAttentionParams init(std::size_t channels,
                                     std::size_t reduction, Rng& rng);

  std::size_t hidden() const { return channels / reduction; }
};

// Spatial gate: one shared k x k kernel (k odd), applied to the channel-avg
// and channel-max maps separately with padding (k-1)/2; the two responses are
// summed before the sigmoid.
struct SpatialAttentionParams {
  Tensor kernel;  // 1 x 1 x k x k
  std::size_t kernel_size = 7;

  static SpatialAttentionParams init(std::size_t kernel_size, Rng& rng);
};

struct ChannelAttentionOut {
  Tensor map;       // Mc: N x C x 1 x 1, strictly in (0,1)
  Tensor attended;  // Fc = Mc (*) F
};

struct SpatialAttentionOut {
  Tensor map;       // Ms: N x 1 x H x W, strictly in (0,1)
  Tensor attended;  // Fsc = Ms (*) Fc
};

ChannelAttentionOut channel_attention(const Tensor& f,
                                      const ChannelAttentionParams& params);

SpatialAttentionOut spatial_attention(const Tensor& fc,
                                      const SpatialAttentionParams& params);

// Channel gate then spatial gate.
Tensor cbam(const Tensor& f, const ChannelAttentionParams& cp,
            const SpatialAttentionParams& sp);

}  // namespace stdb
