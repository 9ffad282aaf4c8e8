#pragma once

#include <cstddef>

#include "stdb/kernels.hpp"

namespace stdb::ref {

// Serial reference kernels: straight nested loops, no pragmas, written
// independently of stdb::kernels. Tests treat them as the naive-loop oracle
// and the benchmark tool compares against them. Nothing in the production
// path calls these.

void conv2d_forward(const double* x, const double* w, const double* b,
                    double* y, const kernels::Conv2dDims& d);
void conv2d_backward_input(const double* gy, const double* w, double* gx,
                           const kernels::Conv2dDims& d);
void conv2d_backward_weight(const double* gy, const double* x, double* gw,
                            const kernels::Conv2dDims& d);
void conv2d_backward_bias(const double* gy, double* gb,
                          const kernels::Conv2dDims& d);

void linear_forward(const double* x, const double* w, const double* b,
                    double* y, std::size_t n, std::size_t din,
                    std::size_t dout);

void gap_forward(const double* x, double* y, std::size_t n, std::size_t c,
                 std::size_t h, std::size_t w);
void gmp_forward(const double* x, double* y, std::size_t n, std::size_t c,
                 std::size_t h, std::size_t w);
void channel_avg_forward(const double* x, double* y, std::size_t n,
                         std::size_t c, std::size_t h, std::size_t w);
void channel_max_forward(const double* x, double* y, std::size_t n,
                         std::size_t c, std::size_t h, std::size_t w);

void bcast_mul_channel_forward(const double* f, const double* m, double* y,
                               std::size_t n, std::size_t c, std::size_t h,
                               std::size_t w);
void bcast_mul_spatial_forward(const double* f, const double* m, double* y,
                               std::size_t n, std::size_t c, std::size_t h,
                               std::size_t w);

}  // namespace stdb::ref
