#include "stdb/kernels.hpp"

#include <algorithm>
#include <cstdint>
#include <vector>

namespace stdb::kernels {

// Every kernel parallelizes over disjoint output blocks and keeps a fixed
// accumulation order inside each block, so results are bit-identical for any
// thread count. Valid kernel-tap ranges are hoisted out of the inner loops;
// the MAC loops run branch-free.

namespace {

// Skip the parallel region for tiny work items.
constexpr std::int64_t kGrain = 4096;

inline std::int64_t i64(std::size_t v) { return static_cast<std::int64_t>(v); }

// Range of kernel taps k for which `out * stride + k - pad` lands in [0, n).
inline void tap_range(std::size_t out, std::size_t stride, std::size_t pad,
                      std::size_t k, std::size_t n, std::size_t& lo,
                      std::size_t& hi) {
  const std::int64_t base = i64(out) * i64(stride) - i64(pad);
  lo = base < 0 ? static_cast<std::size_t>(-base) : 0;
  const std::int64_t room = i64(n) - base;
  hi = room <= 0 ? 0 : std::min(k, static_cast<std::size_t>(room));
}

}  // namespace

void conv2d_forward(const double* x, const double* w, const double* b,
                    double* y, const Conv2dDims& d) {
  const std::int64_t blocks = i64(d.n * d.cout);
  const std::int64_t inner = i64(d.hout * d.wout * d.cin * d.kh * d.kw);
#pragma omp parallel for schedule(static) if (blocks * inner > kGrain)
  for (std::int64_t block = 0; block < blocks; ++block) {
    const std::size_t co = static_cast<std::size_t>(block) % d.cout;
    const std::size_t n = static_cast<std::size_t>(block) / d.cout;
    double* yrow = y + static_cast<std::size_t>(block) * d.hout * d.wout;
    const double bias = b ? b[co] : 0.0;
    for (std::size_t oh = 0; oh < d.hout; ++oh) {
      std::size_t ki_lo, ki_hi;
      tap_range(oh, d.stride, d.pad, d.kh, d.h, ki_lo, ki_hi);
      for (std::size_t ow = 0; ow < d.wout; ++ow) {
        std::size_t kj_lo, kj_hi;
        tap_range(ow, d.stride, d.pad, d.kw, d.w, kj_lo, kj_hi);
        const std::size_t iw0 = ow * d.stride - d.pad + kj_lo;  // in range
        double acc = bias;
        for (std::size_t ci = 0; ci < d.cin; ++ci) {
          const double* xc = x + (n * d.cin + ci) * d.h * d.w;
          const double* wc = w + (co * d.cin + ci) * d.kh * d.kw;
          for (std::size_t ki = ki_lo; ki < ki_hi; ++ki) {
            const std::size_t ih = oh * d.stride - d.pad + ki;
            const double* xp = xc + ih * d.w + iw0;
            const double* wp = wc + ki * d.kw + kj_lo;
            for (std::size_t kj = 0; kj < kj_hi - kj_lo; ++kj) {
              acc += xp[kj] * wp[kj];
            }
          }
        }
        yrow[oh * d.wout + ow] = acc;
      }
    }
  }
}

void conv2d_backward_input(const double* gy, const double* w, double* gx,
                           const Conv2dDims& d) {
  // One thread owns the full gx slice of a (sample, input channel) pair.
  const std::int64_t blocks = i64(d.n * d.cin);
  const std::int64_t inner = i64(d.cout * d.hout * d.wout * d.kh * d.kw);
#pragma omp parallel for schedule(static) if (blocks * inner > kGrain)
  for (std::int64_t block = 0; block < blocks; ++block) {
    const std::size_t ci = static_cast<std::size_t>(block) % d.cin;
    const std::size_t n = static_cast<std::size_t>(block) / d.cin;
    double* gxs = gx + static_cast<std::size_t>(block) * d.h * d.w;
    for (std::size_t co = 0; co < d.cout; ++co) {
      const double* gyr = gy + (n * d.cout + co) * d.hout * d.wout;
      const double* wc = w + (co * d.cin + ci) * d.kh * d.kw;
      for (std::size_t oh = 0; oh < d.hout; ++oh) {
        std::size_t ki_lo, ki_hi;
        tap_range(oh, d.stride, d.pad, d.kh, d.h, ki_lo, ki_hi);
        for (std::size_t ow = 0; ow < d.wout; ++ow) {
          std::size_t kj_lo, kj_hi;
          tap_range(ow, d.stride, d.pad, d.kw, d.w, kj_lo, kj_hi);
          const double g = gyr[oh * d.wout + ow];
          if (g == 0.0) continue;
          const std::size_t iw0 = ow * d.stride - d.pad + kj_lo;
          for (std::size_t ki = ki_lo; ki < ki_hi; ++ki) {
            const std::size_t ih = oh * d.stride - d.pad + ki;
            double* gxp = gxs + ih * d.w + iw0;
            const double* wp = wc + ki * d.kw + kj_lo;
            for (std::size_t kj = 0; kj < kj_hi - kj_lo; ++kj) {
              gxp[kj] += g * wp[kj];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_weight(const double* gy, const double* x, double* gw,
                            const Conv2dDims& d) {
  // One thread owns the gw slice of an (output channel, input channel) pair.
  const std::int64_t blocks = i64(d.cout * d.cin);
  const std::int64_t inner = i64(d.n * d.hout * d.wout * d.kh * d.kw);
#pragma omp parallel for schedule(static) if (blocks * inner > kGrain)
  for (std::int64_t block = 0; block < blocks; ++block) {
    const std::size_t ci = static_cast<std::size_t>(block) % d.cin;
    const std::size_t co = static_cast<std::size_t>(block) / d.cin;
    double* gws = gw + static_cast<std::size_t>(block) * d.kh * d.kw;
    for (std::size_t n = 0; n < d.n; ++n) {
      const double* gyr = gy + (n * d.cout + co) * d.hout * d.wout;
      const double* xc = x + (n * d.cin + ci) * d.h * d.w;
      for (std::size_t oh = 0; oh < d.hout; ++oh) {
        std::size_t ki_lo, ki_hi;
        tap_range(oh, d.stride, d.pad, d.kh, d.h, ki_lo, ki_hi);
        for (std::size_t ow = 0; ow < d.wout; ++ow) {
          std::size_t kj_lo, kj_hi;
          tap_range(ow, d.stride, d.pad, d.kw, d.w, kj_lo, kj_hi);
          const double g = gyr[oh * d.wout + ow];
          if (g == 0.0) continue;
          const std::size_t iw0 = ow * d.stride - d.pad + kj_lo;
          for (std::size_t ki = ki_lo; ki < ki_hi; ++ki) {
            const std::size_t ih = oh * d.stride - d.pad + ki;
            const double* xp = xc + ih * d.w + iw0;
            double* gwp = gws + ki * d.kw + kj_lo;
            for (std::size_t kj = 0; kj < kj_hi - kj_lo; ++kj) {
              gwp[kj] += g * xp[kj];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_bias(const double* gy, double* gb, const Conv2dDims& d) {
  const std::int64_t blocks = i64(d.cout);
#pragma omp parallel for schedule(static) if (blocks * i64(d.n * d.hout * d.wout) > kGrain)
  for (std::int64_t co = 0; co < blocks; ++co) {
    double acc = 0.0;
    for (std::size_t n = 0; n < d.n; ++n) {
      const double* base =
          gy + (n * d.cout + static_cast<std::size_t>(co)) * d.hout * d.wout;
      for (std::size_t i = 0; i < d.hout * d.wout; ++i) acc += base[i];
    }
    gb[co] += acc;
  }
}

void linear_forward(const double* x, const double* w, const double* b,
                    double* y, std::size_t n, std::size_t din,
                    std::size_t dout) {
  const std::int64_t total = i64(n * dout);
#pragma omp parallel for schedule(static) if (total * i64(din) > kGrain)
  for (std::int64_t idx = 0; idx < total; ++idx) {
    const std::size_t j = static_cast<std::size_t>(idx) % dout;
    const std::size_t row = static_cast<std::size_t>(idx) / dout;
    double acc = b ? b[j] : 0.0;
    const double* xr = x + row * din;
    const double* wr = w + j * din;
    for (std::size_t i = 0; i < din; ++i) acc += wr[i] * xr[i];
    y[idx] = acc;
  }
}

void linear_backward_input(const double* gy, const double* w, double* gx,
                           std::size_t n, std::size_t din, std::size_t dout) {
  const std::int64_t blocks = i64(n);
#pragma omp parallel for schedule(static) if (blocks * i64(din * dout) > kGrain)
  for (std::int64_t row = 0; row < blocks; ++row) {
    double* gxr = gx + static_cast<std::size_t>(row) * din;
    const double* gyr = gy + static_cast<std::size_t>(row) * dout;
    for (std::size_t j = 0; j < dout; ++j) {
      const double g = gyr[j];
      if (g == 0.0) continue;
      const double* wr = w + j * din;
      for (std::size_t i = 0; i < din; ++i) gxr[i] += g * wr[i];
    }
  }
}

void linear_backward_weight(const double* gy, const double* x, double* gw,
                            std::size_t n, std::size_t din, std::size_t dout) {
  const std::int64_t blocks = i64(dout);
#pragma omp parallel for schedule(static) if (blocks * i64(n * din) > kGrain)
  for (std::int64_t j = 0; j < blocks; ++j) {
    double* gwr = gw + static_cast<std::size_t>(j) * din;
    for (std::size_t row = 0; row < n; ++row) {
      const double g = gy[row * dout + static_cast<std::size_t>(j)];
      if (g == 0.0) continue;
      const double* xr = x + row * din;
      for (std::size_t i = 0; i < din; ++i) gwr[i] += g * xr[i];
    }
  }
}

void linear_backward_bias(const double* gy, double* gb, std::size_t n,
                          std::size_t dout) {
  for (std::size_t row = 0; row < n; ++row) {
    const double* gyr = gy + row * dout;
    for (std::size_t j = 0; j < dout; ++j) gb[j] += gyr[j];
  }
}

void gap_forward(const double* x, double* y, std::size_t n, std::size_t c,
                 std::size_t h, std::size_t w) {
  const std::size_t hw = h * w;
  const std::int64_t blocks = i64(n * c);
#pragma omp parallel for schedule(static) if (blocks * i64(hw) > kGrain)
  for (std::int64_t k = 0; k < blocks; ++k) {
    const double* base = x + static_cast<std::size_t>(k) * hw;
    double acc = 0.0;
    for (std::size_t i = 0; i < hw; ++i) acc += base[i];
    y[k] = acc / static_cast<double>(hw);
  }
}

void gap_backward(const double* gy, double* gx, std::size_t n, std::size_t c,
                  std::size_t h, std::size_t w) {
  const std::size_t hw = h * w;
  const std::int64_t blocks = i64(n * c);
#pragma omp parallel for schedule(static) if (blocks * i64(hw) > kGrain)
  for (std::int64_t k = 0; k < blocks; ++k) {
    const double g = gy[k] / static_cast<double>(hw);
    double* base = gx + static_cast<std::size_t>(k) * hw;
    for (std::size_t i = 0; i < hw; ++i) base[i] += g;
  }
}

void gmp_forward(const double* x, double* y, std::size_t* argmax,
                 std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  const std::size_t hw = h * w;
  const std::int64_t blocks = i64(n * c);
#pragma omp parallel for schedule(static) if (blocks * i64(hw) > kGrain)
  for (std::int64_t k = 0; k < blocks; ++k) {
    const double* base = x + static_cast<std::size_t>(k) * hw;
    double best = base[0];
    std::size_t best_i = 0;
    for (std::size_t i = 1; i < hw; ++i) {
      if (base[i] > best) {  // strict: first occurrence wins ties
        best = base[i];
        best_i = i;
      }
    }
    y[k] = best;
    argmax[k] = best_i;
  }
}

void gmp_backward(const double* gy, const std::size_t* argmax, double* gx,
                  std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  const std::size_t hw = h * w;
  const std::int64_t blocks = i64(n * c);
#pragma omp parallel for schedule(static) if (blocks > kGrain)
  for (std::int64_t k = 0; k < blocks; ++k) {
    gx[static_cast<std::size_t>(k) * hw + argmax[k]] += gy[k];
  }
}

void channel_avg_forward(const double* x, double* y, std::size_t n,
                         std::size_t c, std::size_t h, std::size_t w) {
  const std::size_t hw = h * w;
  const std::int64_t blocks = i64(n);
  const double inv = 1.0 / static_cast<double>(c);
#pragma omp parallel for schedule(static) if (blocks * i64(c * hw) > kGrain)
  for (std::int64_t nn = 0; nn < blocks; ++nn) {
    const double* xs = x + static_cast<std::size_t>(nn) * c * hw;
    double* ys = y + static_cast<std::size_t>(nn) * hw;
    for (std::size_t pos = 0; pos < hw; ++pos) ys[pos] = xs[pos];
    for (std::size_t ci = 1; ci < c; ++ci) {
      const double* xc = xs + ci * hw;
      for (std::size_t pos = 0; pos < hw; ++pos) ys[pos] += xc[pos];
    }
    for (std::size_t pos = 0; pos < hw; ++pos) ys[pos] *= inv;
  }
}

void channel_avg_backward(const double* gy, double* gx, std::size_t n,
                          std::size_t c, std::size_t h, std::size_t w) {
  const std::size_t hw = h * w;
  const std::int64_t blocks = i64(n * c);
  const double inv = 1.0 / static_cast<double>(c);
#pragma omp parallel for schedule(static) if (blocks * i64(hw) > kGrain)
  for (std::int64_t block = 0; block < blocks; ++block) {
    const std::size_t nn = static_cast<std::size_t>(block) / c;
    const double* gys = gy + nn * hw;
    double* gxs = gx + static_cast<std::size_t>(block) * hw;
    for (std::size_t pos = 0; pos < hw; ++pos) gxs[pos] += gys[pos] * inv;
  }
}

void channel_max_forward(const double* x, double* y, std::size_t* argmax,
                         std::size_t n, std::size_t c, std::size_t h,
                         std::size_t w) {
  const std::size_t hw = h * w;
  const std::int64_t blocks = i64(n);
#pragma omp parallel for schedule(static) if (blocks * i64(c * hw) > kGrain)
  for (std::int64_t nn = 0; nn < blocks; ++nn) {
    const double* xs = x + static_cast<std::size_t>(nn) * c * hw;
    double* ys = y + static_cast<std::size_t>(nn) * hw;
    std::size_t* as = argmax + static_cast<std::size_t>(nn) * hw;
    for (std::size_t pos = 0; pos < hw; ++pos) {
      ys[pos] = xs[pos];
      as[pos] = 0;
    }
    for (std::size_t ci = 1; ci < c; ++ci) {
      const double* xc = xs + ci * hw;
      for (std::size_t pos = 0; pos < hw; ++pos) {
        if (xc[pos] > ys[pos]) {
          ys[pos] = xc[pos];
          as[pos] = ci;
        }
      }
    }
  }
}

void channel_max_backward(const double* gy, const std::size_t* argmax,
                          double* gx, std::size_t n, std::size_t c,
                          std::size_t h, std::size_t w) {
  const std::size_t hw = h * w;
  const std::int64_t blocks = i64(n);
#pragma omp parallel for schedule(static) if (blocks * i64(hw) > kGrain)
  for (std::int64_t nn = 0; nn < blocks; ++nn) {
    const double* gys = gy + static_cast<std::size_t>(nn) * hw;
    const std::size_t* as = argmax + static_cast<std::size_t>(nn) * hw;
    double* gxs = gx + static_cast<std::size_t>(nn) * c * hw;
    for (std::size_t pos = 0; pos < hw; ++pos) {
      gxs[as[pos] * hw + pos] += gys[pos];
    }
  }
}

void bcast_mul_channel_forward(const double* f, const double* m, double* y,
                               std::size_t n, std::size_t c, std::size_t h,
                               std::size_t w) {
  const std::size_t hw = h * w;
  const std::int64_t blocks = i64(n * c);
#pragma omp parallel for schedule(static) if (blocks * i64(hw) > kGrain)
  for (std::int64_t k = 0; k < blocks; ++k) {
    const double gate = m[k];
    const double* fs = f + static_cast<std::size_t>(k) * hw;
    double* ys = y + static_cast<std::size_t>(k) * hw;
    for (std::size_t i = 0; i < hw; ++i) ys[i] = fs[i] * gate;
  }
}

void bcast_mul_channel_backward(const double* gy, const double* f,
                                const double* m, double* gf, double* gm,
                                std::size_t n, std::size_t c, std::size_t h,
                                std::size_t w) {
  const std::size_t hw = h * w;
  const std::int64_t blocks = i64(n * c);
  if (gf) {
#pragma omp parallel for schedule(static) if (blocks * i64(hw) > kGrain)
    for (std::int64_t k = 0; k < blocks; ++k) {
      const double gate = m[k];
      const double* gys = gy + static_cast<std::size_t>(k) * hw;
      double* gfs = gf + static_cast<std::size_t>(k) * hw;
      for (std::size_t i = 0; i < hw; ++i) gfs[i] += gys[i] * gate;
    }
  }
  if (gm) {
#pragma omp parallel for schedule(static) if (blocks * i64(hw) > kGrain)
    for (std::int64_t k = 0; k < blocks; ++k) {
      const double* gys = gy + static_cast<std::size_t>(k) * hw;
      const double* fs = f + static_cast<std::size_t>(k) * hw;
      double acc = 0.0;
      for (std::size_t i = 0; i < hw; ++i) acc += gys[i] * fs[i];
      gm[k] += acc;
    }
  }
}

void bcast_mul_spatial_forward(const double* f, const double* m, double* y,
                               std::size_t n, std::size_t c, std::size_t h,
                               std::size_t w) {
  const std::size_t hw = h * w;
  const std::int64_t blocks = i64(n * c);
#pragma omp parallel for schedule(static) if (blocks * i64(hw) > kGrain)
  for (std::int64_t k = 0; k < blocks; ++k) {
    const std::size_t nn = static_cast<std::size_t>(k) / c;
    const double* gate = m + nn * hw;
    const double* fs = f + static_cast<std::size_t>(k) * hw;
    double* ys = y + static_cast<std::size_t>(k) * hw;
    for (std::size_t i = 0; i < hw; ++i) ys[i] = fs[i] * gate[i];
  }
}

void bcast_mul_spatial_backward(const double* gy, const double* f,
                                const double* m, double* gf, double* gm,
                                std::size_t n, std::size_t c, std::size_t h,
                                std::size_t w) {
  const std::size_t hw = h * w;
  if (gf) {
    const std::int64_t blocks = i64(n * c);
#pragma omp parallel for schedule(static) if (blocks * i64(hw) > kGrain)
    for (std::int64_t k = 0; k < blocks; ++k) {
      const std::size_t nn = static_cast<std::size_t>(k) / c;
      const double* gate = m + nn * hw;
      const double* gys = gy + static_cast<std::size_t>(k) * hw;
      double* gfs = gf + static_cast<std::size_t>(k) * hw;
      for (std::size_t i = 0; i < hw; ++i) gfs[i] += gys[i] * gate[i];
    }
  }
  if (gm) {
    // one thread owns the gm slice of a sample
    const std::int64_t blocks = i64(n);
#pragma omp parallel for schedule(static) if (blocks * i64(c * hw) > kGrain)
    for (std::int64_t nn = 0; nn < blocks; ++nn) {
      double* gms = gm + static_cast<std::size_t>(nn) * hw;
      for (std::size_t ci = 0; ci < c; ++ci) {
        const std::size_t base = (static_cast<std::size_t>(nn) * c + ci) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          gms[i] += gy[base + i] * f[base + i];
        }
      }
    }
  }
}

}  // namespace stdb::kernels
