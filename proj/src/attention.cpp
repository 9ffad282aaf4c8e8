#include "stdb/attention.hpp"

#include <cmath>
#include <string>

namespace stdb {

namespace {

Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  std::vector<double> data(shape_numel(shape));
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& v : data) v = stddev * rng.normal();
  return Tensor::from_data(std::move(shape), std::move(data), true);
}

}  // namespace

ChannelAttentionParams ChannelAttentionParams::init(std::size_t channels,
                                                    std::size_t reduction,
                                                    Rng& rng) {
  if (channels == 0) throw ContractError("channel attention: channels must be positive");
  if (reduction == 0) throw ContractError("channel attention: reduction must be positive");
  const std::size_t r = std::min(reduction, channels);
  if (channels % r != 0) {
    throw ContractError("channel attention: reduction " + std::to_string(r) +
                        " does not divide " + std::to_string(channels) +
                        " channels");
  }
  ChannelAttentionParams p;
  p.channels = channels;
  p.reduction = r;
  const std::size_t hidden = channels / r;
  p.w1 = he_normal({hidden, channels}, channels, rng);
  p.w2 = he_normal({channels, hidden}, hidden, rng);
  return p;
}

SpatialAttentionParams SpatialAttentionParams::init(std::size_t kernel_size,
                                                    Rng& rng) {
  if (kernel_size == 0 || kernel_size % 2 == 0) {
    throw ContractError("spatial attention: kernel size must be odd");
  }
  SpatialAttentionParams p;
  p.kernel_size = kernel_size;
  p.kernel = he_normal({1, 1, kernel_size, kernel_size},
                       kernel_size * kernel_size, rng);
  return p;
}

ChannelAttentionOut channel_attention(const Tensor& f,
                                      const ChannelAttentionParams& params) {
  if (f.rank() != 4) throw DimError("channel_attention: input must be rank 4");
  const std::size_t n = f.extent(0), c = f.extent(1);
  if (c != params.channels) {
    throw DimError("channel_attention: expected " +
                   std::to_string(params.channels) + " channels, got " +
                   std::to_string(c));
  }
  auto mlp = [&params](const Tensor& x) {
    return linear(relu(linear(x, params.w1)), params.w2);
  };
  Tensor pooled_avg = reshape(gap(f), {n, c});
  Tensor pooled_max = reshape(gmp(f), {n, c});
  Tensor mc = sigmoid(add(mlp(pooled_avg), mlp(pooled_max)));
  ChannelAttentionOut out;
  out.map = reshape(mc, {n, c, 1, 1});
  out.attended = broadcast_mul(f, out.map);
  return out;
}

SpatialAttentionOut spatial_attention(const Tensor& fc,
                                      const SpatialAttentionParams& params) {
  if (fc.rank() != 4) throw DimError("spatial_attention: input must be rank 4");
  const std::size_t pad = (params.kernel_size - 1) / 2;
  Tensor avg_response = conv2d(channel_avg(fc), params.kernel, 1, pad);
  Tensor max_response = conv2d(channel_max(fc), params.kernel, 1, pad);
  SpatialAttentionOut out;
  out.map = sigmoid(add(avg_response, max_response));
  out.attended = broadcast_mul(fc, out.map);
  return out;
}

Tensor cbam(const Tensor& f, const ChannelAttentionParams& cp,
            const SpatialAttentionParams& sp) {
  return spatial_attention(channel_attention(f, cp).attended, sp).attended;
}

}  // namespace stdb
