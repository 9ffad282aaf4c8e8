#pragma once

#include <cstddef>

namespace stdb::kernels {

// OpenMP-parallel inner loops behind the tensor ops. Every kernel is written
// gather-style: each output element is owned by exactly one iteration and the
// accumulation order inside an element is fixed, so results are bit-identical
// for any thread count. Backward kernels accumulate (+=) into their output
// buffers; callers zero-initialize.

struct Conv2dDims {
  std::size_t n, cin, h, w;        // input
  std::size_t cout, kh, kw;        // kernel
  std::size_t stride, pad;
  std::size_t hout, wout;          // output
};

void conv2d_forward(const double* x, const double* w, const double* b,
                    double* y, const Conv2dDims& d);
void conv2d_backward_input(const double* gy, const double* w, double* gx,
                           const Conv2dDims& d);
void conv2d_backward_weight(const double* gy, const double* x, double* gw,
                            const Conv2dDims& d);
void conv2d_backward_bias(const double* gy, double* gb, const Conv2dDims& d);

void linear_forward(const double* x, const double* w, const double* b,
                    double* y, std::size_t n, std::size_t din,
                    std::size_t dout);
void linear_backward_input(const double* gy, const double* w, double* gx,
                           std::size_t n, std::size_t din, std::size_t dout);
void linear_backward_weight(const double* gy, const double* x, double* gw,
                            std::size_t n, std::size_t din, std::size_t dout);
void linear_backward_bias(const double* gy, double* gb, std::size_t n,
                          std::size_t dout);

// gap/gmp: N x C x H x W -> N x C x 1 x 1.
// channel_avg/channel_max: N x C x H x W -> N x 1 x H x W.
// Max kernels record the flat argmax (first occurrence on ties) for backward.
void gap_forward(const double* x, double* y, std::size_t n, std::size_t c,
                 std::size_t h, std::size_t w);
void gap_backward(const double* gy, double* gx, std::size_t n, std::size_t c,
                  std::size_t h, std::size_t w);
void gmp_forward(const double* x, double* y, std::size_t* argmax,
                 std::size_t n, std::size_t c, std::size_t h, std::size_t w);
void gmp_backward(const double* gy, const std::size_t* argmax, double* gx,
                  std::size_t n, std::size_t c, std::size_t h, std::size_t w);
void channel_avg_forward(const double* x, double* y, std::size_t n,
                         std::size_t c, std::size_t h, std::size_t w);
void channel_avg_backward(const double* gy, double* gx, std::size_t n,
                          std::size_t c, std::size_t h, std::size_t w);
void channel_max_forward(const double* x, double* y, std::size_t* argmax,
                         std::size_t n, std::size_t c, std::size_t h,
                         std::size_t w);
void channel_max_backward(const double* gy, const std::size_t* argmax,
                          double* gx, std::size_t n, std::size_t c,
                          std::size_t h, std::size_t w);

// map N x C x 1 x 1 copied along space, or N x 1 x H x W copied along channels.
void bcast_mul_channel_forward(const double* f, const double* m, double* y,
                               std::size_t n, std::size_t c, std::size_t h,
                               std::size_t w);
void bcast_mul_channel_backward(const double* gy, const double* f,
                                const double* m, double* gf, double* gm,
                                std::size_t n, std::size_t c, std::size_t h,
                                std::size_t w);
void bcast_mul_spatial_forward(const double* f, const double* m, double* y,
                               std::size_t n, std::size_t c, std::size_t h,
                               std::size_t w);
void bcast_mul_spatial_backward(const double* gy, const double* f,
                                const double* m, double* gf, double* gm,
                                std::size_t n, std::size_t c, std::size_t h,
                                std::size_t w);

}  // namespace stdb::kernels
