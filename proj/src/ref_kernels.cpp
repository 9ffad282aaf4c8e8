#include "stdb/ref_kernels.hpp"

#include <algorithm>
#include <vector>

namespace stdb::ref {

using kernels::Conv2dDims;

namespace {

// Explicitly zero-padded copy of the input; the naive loops below then need
// no boundary conditions.
std::vector<double> pad_input(const double* x, const Conv2dDims& d) {
  const std::size_t ph = d.h + 2 * d.pad;
  const std::size_t pw = d.w + 2 * d.pad;
  std::vector<double> padded(d.n * d.cin * ph * pw, 0.0);
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t c = 0; c < d.cin; ++c)
      for (std::size_t i = 0; i < d.h; ++i)
        for (std::size_t j = 0; j < d.w; ++j)
          padded[((n * d.cin + c) * ph + i + d.pad) * pw + j + d.pad] =
              x[((n * d.cin + c) * d.h + i) * d.w + j];
  return padded;
}

}  // namespace

void conv2d_forward(const double* x, const double* w, const double* b,
                    double* y, const Conv2dDims& d) {
  const std::vector<double> padded = pad_input(x, d);
  const std::size_t ph = d.h + 2 * d.pad;
  const std::size_t pw = d.w + 2 * d.pad;
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t co = 0; co < d.cout; ++co)
      for (std::size_t oh = 0; oh < d.hout; ++oh)
        for (std::size_t ow = 0; ow < d.wout; ++ow) {
          double acc = b ? b[co] : 0.0;
          for (std::size_t ci = 0; ci < d.cin; ++ci)
            for (std::size_t ki = 0; ki < d.kh; ++ki)
              for (std::size_t kj = 0; kj < d.kw; ++kj)
                acc += padded[((n * d.cin + ci) * ph + oh * d.stride + ki) * pw +
                              ow * d.stride + kj] *
                       w[((co * d.cin + ci) * d.kh + ki) * d.kw + kj];
          y[((n * d.cout + co) * d.hout + oh) * d.wout + ow] = acc;
        }
}

void conv2d_backward_input(const double* gy, const double* w, double* gx,
                           const Conv2dDims& d) {
  // Scatter form over the padded grid, then crop.
  const std::size_t ph = d.h + 2 * d.pad;
  const std::size_t pw = d.w + 2 * d.pad;
  std::vector<double> gpad(d.n * d.cin * ph * pw, 0.0);
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t co = 0; co < d.cout; ++co)
      for (std::size_t oh = 0; oh < d.hout; ++oh)
        for (std::size_t ow = 0; ow < d.wout; ++ow) {
          const double g = gy[((n * d.cout + co) * d.hout + oh) * d.wout + ow];
          for (std::size_t ci = 0; ci < d.cin; ++ci)
            for (std::size_t ki = 0; ki < d.kh; ++ki)
              for (std::size_t kj = 0; kj < d.kw; ++kj)
                gpad[((n * d.cin + ci) * ph + oh * d.stride + ki) * pw +
                     ow * d.stride + kj] +=
                    g * w[((co * d.cin + ci) * d.kh + ki) * d.kw + kj];
        }
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t c = 0; c < d.cin; ++c)
      for (std::size_t i = 0; i < d.h; ++i)
        for (std::size_t j = 0; j < d.w; ++j)
          gx[((n * d.cin + c) * d.h + i) * d.w + j] +=
              gpad[((n * d.cin + c) * ph + i + d.pad) * pw + j + d.pad];
}

void conv2d_backward_weight(const double* gy, const double* x, double* gw,
                            const Conv2dDims& d) {
  const std::vector<double> padded = pad_input(x, d);
  const std::size_t ph = d.h + 2 * d.pad;
  const std::size_t pw = d.w + 2 * d.pad;
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t co = 0; co < d.cout; ++co)
      for (std::size_t oh = 0; oh < d.hout; ++oh)
        for (std::size_t ow = 0; ow < d.wout; ++ow) {
          const double g = gy[((n * d.cout + co) * d.hout + oh) * d.wout + ow];
          for (std::size_t ci = 0; ci < d.cin; ++ci)
            for (std::size_t ki = 0; ki < d.kh; ++ki)
              for (std::size_t kj = 0; kj < d.kw; ++kj)
                gw[((co * d.cin + ci) * d.kh + ki) * d.kw + kj] +=
                    g * padded[((n * d.cin + ci) * ph + oh * d.stride + ki) * pw +
                               ow * d.stride + kj];
        }
}

void conv2d_backward_bias(const double* gy, double* gb, const Conv2dDims& d) {
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t co = 0; co < d.cout; ++co)
      for (std::size_t i = 0; i < d.hout * d.wout; ++i)
        gb[co] += gy[(n * d.cout + co) * d.hout * d.wout + i];
}

void linear_forward(const double* x, const double* w, const double* b,
                    double* y, std::size_t n, std::size_t din,
                    std::size_t dout) {
  for (std::size_t row = 0; row < n; ++row)
    for (std::size_t j = 0; j < dout; ++j) {
      double acc = b ? b[j] : 0.0;
      for (std::size_t i = 0; i < din; ++i) acc += w[j * din + i] * x[row * din + i];
      y[row * dout + j] = acc;
    }
}

void gap_forward(const double* x, double* y, std::size_t n, std::size_t c,
                 std::size_t h, std::size_t w) {
  for (std::size_t k = 0; k < n * c; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < h * w; ++i) acc += x[k * h * w + i];
    y[k] = acc / static_cast<double>(h * w);
  }
}

void gmp_forward(const double* x, double* y, std::size_t n, std::size_t c,
                 std::size_t h, std::size_t w) {
  for (std::size_t k = 0; k < n * c; ++k) {
    y[k] = *std::max_element(x + k * h * w, x + (k + 1) * h * w);
  }
}

void channel_avg_forward(const double* x, double* y, std::size_t n,
                         std::size_t c, std::size_t h, std::size_t w) {
  const std::size_t hw = h * w;
  for (std::size_t nn = 0; nn < n; ++nn)
    for (std::size_t pos = 0; pos < hw; ++pos) {
      double acc = 0.0;
      for (std::size_t ci = 0; ci < c; ++ci) acc += x[(nn * c + ci) * hw + pos];
      y[nn * hw + pos] = acc / static_cast<double>(c);
    }
}

void channel_max_forward(const double* x, double* y, std::size_t n,
                         std::size_t c, std::size_t h, std::size_t w) {
  const std::size_t hw = h * w;
  for (std::size_t nn = 0; nn < n; ++nn)
    for (std::size_t pos = 0; pos < hw; ++pos) {
      double best = x[nn * c * hw + pos];
      for (std::size_t ci = 1; ci < c; ++ci)
        best = std::max(best, x[(nn * c + ci) * hw + pos]);
      y[nn * hw + pos] = best;
    }
}

void bcast_mul_channel_forward(const double* f, const double* m, double* y,
                               std::size_t n, std::size_t c, std::size_t h,
                               std::size_t w) {
  const std::size_t hw = h * w;
  for (std::size_t nn = 0; nn < n; ++nn)
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t pos = 0; pos < hw; ++pos)
        y[(nn * c + ci) * hw + pos] = f[(nn * c + ci) * hw + pos] * m[nn * c + ci];
}

void bcast_mul_spatial_forward(const double* f, const double* m, double* y,
                               std::size_t n, std::size_t c, std::size_t h,
                               std::size_t w) {
  const std::size_t hw = h * w;
  for (std::size_t nn = 0; nn < n; ++nn)
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t pos = 0; pos < hw; ++pos)
        y[(nn * c + ci) * hw + pos] = f[(nn * c + ci) * hw + pos] * m[nn * hw + pos];
}

}  // namespace stdb::ref
