#include <cmath>
#include <vector>

#include "doctest.h"
#include "stdb/attention.hpp"
#include "support/test_util.hpp"

using namespace stdb;
using testutil::max_abs_diff;
using testutil::random_tensor;

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

ChannelAttentionParams zero_channel_params(std::size_t c, std::size_t r) {
  Rng rng(1);
  ChannelAttentionParams p = ChannelAttentionParams::init(c, r, rng);
  for (double& v : p.w1.mutable_data()) v = 0.0;
  for (double& v : p.w2.mutable_data()) v = 0.0;
  return p;
}

SpatialAttentionParams zero_spatial_params(std::size_t k) {
  Rng rng(1);
  SpatialAttentionParams p = SpatialAttentionParams::init(k, rng);
  for (double& v : p.kernel.mutable_data()) v = 0.0;
  return p;
}

}  // namespace

TEST_CASE("zero MLP weights gate every channel at one half") {
  Rng rng(71);
  Tensor f = random_tensor({2, 4, 3, 3}, rng);
  auto out = channel_attention(f, zero_channel_params(4, 2));
  for (double v : out.map.data()) CHECK(v == 0.5);
  for (std::size_t i = 0; i < f.size(); ++i) {
    CHECK(out.attended.at(i) == doctest::Approx(0.5 * f.at(i)).epsilon(1e-15));
  }
}

TEST_CASE("constant channels make avg and max pooling coincide") {
  // F constant per channel: Mc = sigmoid(2 * MLP(pooled)).
  Rng rng(73);
  std::vector<double> data;
  const double channel_value[2] = {0.7, -0.3};
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < 4; ++i) data.push_back(channel_value[c]);
  }
  Tensor f = Tensor::from_data({1, 2, 2, 2}, data);
  ChannelAttentionParams p = ChannelAttentionParams::init(2, 2, rng);
  auto out = channel_attention(f, p);

  // hand evaluation with one shared MLP applied to the (identical) descriptors
  const auto w1 = p.w1.data();  // 1 x 2
  const auto w2 = p.w2.data();  // 2 x 1
  const double hidden = std::max(
      0.0, w1[0] * channel_value[0] + w1[1] * channel_value[1]);
  for (std::size_t c = 0; c < 2; ++c) {
    const double want = logistic(2.0 * w2[c] * hidden);
    CHECK(out.map.at(c) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("channel attention matches a hand-evaluated composition") {
  Rng rng(79);
  Tensor f = random_tensor({1, 2, 2, 2}, rng);
  ChannelAttentionParams p = ChannelAttentionParams::init(2, 1, rng);
  auto out = channel_attention(f, p);

  const std::size_t c = 2, hw = 4, hidden_n = 2;
  std::vector<double> avg(c, 0.0), mx(c, 0.0);
  for (std::size_t ci = 0; ci < c; ++ci) {
    mx[ci] = f.at(ci * hw);
    for (std::size_t i = 0; i < hw; ++i) {
      avg[ci] += f.at(ci * hw + i) / static_cast<double>(hw);
      mx[ci] = std::max(mx[ci], f.at(ci * hw + i));
    }
  }
  auto mlp = [&](const std::vector<double>& x, std::size_t out_i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < hidden_n; ++j) {
      double h = 0.0;
      for (std::size_t ci = 0; ci < c; ++ci) h += p.w1.at(j * c + ci) * x[ci];
      acc += p.w2.at(out_i * hidden_n + j) * std::max(0.0, h);
    }
    return acc;
  };
  for (std::size_t ci = 0; ci < c; ++ci) {
    const double want = logistic(mlp(avg, ci) + mlp(mx, ci));
    CHECK(out.map.at(ci) == doctest::Approx(want).epsilon(1e-12));
    for (std::size_t i = 0; i < hw; ++i) {
      CHECK(out.attended.at(ci * hw + i) ==
            doctest::Approx(want * f.at(ci * hw + i)).epsilon(1e-12));
    }
  }
}

TEST_CASE("channel attention rejects mismatched channel counts") {
  Tensor f = Tensor::zeros({1, 3, 2, 2});
  CHECK_THROWS_AS(channel_attention(f, zero_channel_params(4, 2)), DimError);
}

TEST_CASE("reduction clamps at the channel count and must divide it") {
  Rng rng(3);
  ChannelAttentionParams p = ChannelAttentionParams::init(4, 16, rng);
  CHECK(p.reduction == 4);
  CHECK(p.hidden() == 1);
  CHECK_THROWS_AS(ChannelAttentionParams::init(6, 4, rng), ContractError);
}

TEST_CASE("zero spatial kernel gates every position at one half") {
  Rng rng(83);
  Tensor fc = random_tensor({2, 3, 4, 4}, rng);
  auto out = spatial_attention(fc, zero_spatial_params(3));
  for (double v : out.map.data()) CHECK(v == 0.5);
  for (std::size_t i = 0; i < fc.size(); ++i) {
    CHECK(out.attended.at(i) == doctest::Approx(0.5 * fc.at(i)).epsilon(1e-15));
  }
}

TEST_CASE("single-channel input doubles the shared conv response") {
  // channel_avg == channel_max, so Ms = sigmoid(2 * conv(Fc)).
  Rng rng(89);
  Tensor fc = random_tensor({1, 1, 4, 4}, rng);
  SpatialAttentionParams p = SpatialAttentionParams::init(3, rng);
  auto out = spatial_attention(fc, p);

  const std::size_t h = 4, w = 4;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double conv = 0.0;
      for (std::size_t ki = 0; ki < 3; ++ki) {
        for (std::size_t kj = 0; kj < 3; ++kj) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ki) - 1;
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + kj) - 1;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
          conv += fc.at(static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) *
                  p.kernel.at(ki * 3 + kj);
        }
      }
      CHECK(out.map.at(y * w + x) ==
            doctest::Approx(logistic(2.0 * conv)).epsilon(1e-12));
    }
  }
}

TEST_CASE("spatial attention matches the naive loop oracle") {
  Rng rng(97);
  Tensor fc = random_tensor({1, 2, 3, 3}, rng);
  SpatialAttentionParams p = SpatialAttentionParams::init(3, rng);
  auto out = spatial_attention(fc, p);

  const std::size_t c = 2, h = 3, w = 3;
  std::vector<double> avg(h * w, 0.0), mx(h * w, 0.0);
  for (std::size_t pos = 0; pos < h * w; ++pos) {
    mx[pos] = fc.at(pos);
    for (std::size_t ci = 0; ci < c; ++ci) {
      avg[pos] += fc.at(ci * h * w + pos) / static_cast<double>(c);
      mx[pos] = std::max(mx[pos], fc.at(ci * h * w + pos));
    }
  }
  auto conv_at = [&](const std::vector<double>& in, std::size_t y, std::size_t x) {
    double acc = 0.0;
    for (std::size_t ki = 0; ki < 3; ++ki) {
      for (std::size_t kj = 0; kj < 3; ++kj) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ki) - 1;
        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + kj) - 1;
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
        acc += in[static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)] *
               p.kernel.at(ki * 3 + kj);
      }
    }
    return acc;
  };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double want = logistic(conv_at(avg, y, x) + conv_at(mx, y, x));
      CHECK(out.map.at(y * w + x) == doctest::Approx(want).epsilon(1e-12));
      for (std::size_t ci = 0; ci < c; ++ci) {
        CHECK(out.attended.at(ci * h * w + y * w + x) ==
              doctest::Approx(want * fc.at(ci * h * w + y * w + x)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("cbam with zero gates is a quarter of the input") {
  Rng rng(101);
  Tensor f = random_tensor({2, 4, 3, 3}, rng);
  Tensor out = cbam(f, zero_channel_params(4, 2), zero_spatial_params(3));
  for (std::size_t i = 0; i < f.size(); ++i) {
    CHECK(out.at(i) == doctest::Approx(0.25 * f.at(i)).epsilon(1e-15));
  }
}

TEST_CASE("cbam of a zero input is zero") {
  Rng rng(103);
  Tensor f = Tensor::zeros({1, 4, 2, 2});
  ChannelAttentionParams cp = ChannelAttentionParams::init(4, 2, rng);
  SpatialAttentionParams sp = SpatialAttentionParams::init(3, rng);
  Tensor out = cbam(f, cp, sp);
  for (double v : out.data()) CHECK(v == 0.0);
}

TEST_CASE("cbam equals manual two-step application") {
  Rng rng(107);
  Tensor f = random_tensor({2, 4, 3, 3}, rng);
  ChannelAttentionParams cp = ChannelAttentionParams::init(4, 2, rng);
  SpatialAttentionParams sp = SpatialAttentionParams::init(3, rng);
  Tensor composed = cbam(f, cp, sp);
  Tensor manual = spatial_attention(channel_attention(f, cp).attended, sp).attended;
  CHECK(max_abs_diff(composed.data(), manual.data()) == 0.0);
}

TEST_CASE("attention maps stay strictly inside (0,1) and gates attenuate") {
  Rng rng(109);
  for (int i = 0; i < 5; ++i) {
    Tensor f = random_tensor({2, 4, 3, 3}, rng, -50.0, 50.0);
    ChannelAttentionParams cp = ChannelAttentionParams::init(4, 2, rng);
    SpatialAttentionParams sp = SpatialAttentionParams::init(3, rng);
    auto ca = channel_attention(f, cp);
    for (double v : ca.map.data()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
    auto sa = spatial_attention(ca.attended, sp);
    for (double v : sa.map.data()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
    for (std::size_t j = 0; j < f.size(); ++j) {
      CHECK(std::abs(sa.attended.at(j)) <= std::abs(f.at(j)));
    }
  }
}

TEST_CASE("attention gradients pass finite differences") {
  Rng rng(113);
  for (int i = 0; i < 10; ++i) {
    Tensor f = random_tensor({1, 4, 3, 3}, rng);
    ChannelAttentionParams cp = ChannelAttentionParams::init(4, 2, rng);
    SpatialAttentionParams sp = SpatialAttentionParams::init(3, rng);
    Tensor probe = random_tensor({1, 4, 3, 3}, rng);

    auto by_input = [&](const Tensor& t) {
      return sum(mul(cbam(t, cp, sp), probe));
    };
    CHECK(grad_check(by_input, f, 1e-5) < 1e-4);

    auto by_w1 = [&](const Tensor& t) {
      ChannelAttentionParams cp2 = cp;
      cp2.w1 = t;
      return sum(mul(cbam(f, cp2, sp), probe));
    };
    CHECK(grad_check(by_w1, cp.w1, 1e-5) < 1e-4);

    auto by_w2 = [&](const Tensor& t) {
      ChannelAttentionParams cp2 = cp;
      cp2.w2 = t;
      return sum(mul(cbam(f, cp2, sp), probe));
    };
    CHECK(grad_check(by_w2, cp.w2, 1e-5) < 1e-4);

    auto by_kernel = [&](const Tensor& t) {
      SpatialAttentionParams sp2 = sp;
      sp2.kernel = t;
      return sum(mul(cbam(f, cp, sp2), probe));
    };
    CHECK(grad_check(by_kernel, sp.kernel, 1e-5) < 1e-4);
  }
}
