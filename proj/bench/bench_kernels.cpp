// Compares the OpenMP kernels against the serial reference implementations.
// Times are medians over --reps runs; speedup is serial / parallel.

#include <omp.h>

#include <algorithm>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "stdb/kernels.hpp"
#include "stdb/ref_kernels.hpp"
#include "stdb/rng.hpp"

using stdb::kernels::Conv2dDims;

namespace {

std::vector<double> random_buffer(std::size_t n, stdb::Rng& rng) {
  std::vector<double> out(n);
  for (double& v : out) v = rng.uniform(-1.0, 1.0);
  return out;
}

double time_median(const std::function<void()>& fn, int reps) {
  std::vector<double> times;
  times.reserve(reps);
  fn();  // warm up
  for (int i = 0; i < reps; ++i) {
    const double start = omp_get_wtime();
    fn();
    times.push_back(omp_get_wtime() - start);
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

void row(const std::string& name, double serial, double parallel) {
  std::printf("%-28s %10.3f ms %10.3f ms %8.2fx\n", name.c_str(),
              serial * 1e3, parallel * 1e3, serial / parallel);
}

void bench_conv2d(int reps, stdb::Rng& rng) {
  Conv2dDims d;
  d.n = 32;
  d.cin = 32;
  d.h = 16;
  d.w = 8;
  d.cout = 64;
  d.kh = 3;
  d.kw = 3;
  d.stride = 1;
  d.pad = 1;
  d.hout = 16;
  d.wout = 8;
  const auto x = random_buffer(d.n * d.cin * d.h * d.w, rng);
  const auto w = random_buffer(d.cout * d.cin * d.kh * d.kw, rng);
  const auto b = random_buffer(d.cout, rng);
  std::vector<double> y(d.n * d.cout * d.hout * d.wout);

  row("conv2d forward",
      time_median([&] { stdb::ref::conv2d_forward(x.data(), w.data(), b.data(), y.data(), d); }, reps),
      time_median([&] { stdb::kernels::conv2d_forward(x.data(), w.data(), b.data(), y.data(), d); }, reps));

  const auto gy = random_buffer(y.size(), rng);
  std::vector<double> gx(x.size());
  row("conv2d backward input",
      time_median([&] { std::fill(gx.begin(), gx.end(), 0.0);
                        stdb::ref::conv2d_backward_input(gy.data(), w.data(), gx.data(), d); }, reps),
      time_median([&] { std::fill(gx.begin(), gx.end(), 0.0);
                        stdb::kernels::conv2d_backward_input(gy.data(), w.data(), gx.data(), d); }, reps));

  std::vector<double> gw(w.size());
  row("conv2d backward weight",
      time_median([&] { std::fill(gw.begin(), gw.end(), 0.0);
                        stdb::ref::conv2d_backward_weight(gy.data(), x.data(), gw.data(), d); }, reps),
      time_median([&] { std::fill(gw.begin(), gw.end(), 0.0);
                        stdb::kernels::conv2d_backward_weight(gy.data(), x.data(), gw.data(), d); }, reps));
}

void bench_linear(int reps, stdb::Rng& rng) {
  const std::size_t n = 128, din = 2048, dout = 512;
  const auto x = random_buffer(n * din, rng);
  const auto w = random_buffer(dout * din, rng);
  const auto b = random_buffer(dout, rng);
  std::vector<double> y(n * dout);
  row("linear forward",
      time_median([&] { stdb::ref::linear_forward(x.data(), w.data(), b.data(), y.data(), n, din, dout); }, reps),
      time_median([&] { stdb::kernels::linear_forward(x.data(), w.data(), b.data(), y.data(), n, din, dout); }, reps));
}

void bench_pools(int reps, stdb::Rng& rng) {
  const std::size_t n = 64, c = 64, h = 32, w = 16;
  const auto x = random_buffer(n * c * h * w, rng);
  std::vector<double> y(n * c);
  std::vector<std::size_t> argmax(n * c);
  row("gap forward",
      time_median([&] { stdb::ref::gap_forward(x.data(), y.data(), n, c, h, w); }, reps),
      time_median([&] { stdb::kernels::gap_forward(x.data(), y.data(), n, c, h, w); }, reps));
  row("gmp forward",
      time_median([&] { stdb::ref::gmp_forward(x.data(), y.data(), n, c, h, w); }, reps),
      time_median([&] { stdb::kernels::gmp_forward(x.data(), y.data(), argmax.data(), n, c, h, w); }, reps));

  std::vector<double> spatial(n * h * w);
  row("channel_avg forward",
      time_median([&] { stdb::ref::channel_avg_forward(x.data(), spatial.data(), n, c, h, w); }, reps),
      time_median([&] { stdb::kernels::channel_avg_forward(x.data(), spatial.data(), n, c, h, w); }, reps));

  const auto m = random_buffer(n * c, rng);
  std::vector<double> gated(x.size());
  row("broadcast_mul channel",
      time_median([&] { stdb::ref::bcast_mul_channel_forward(x.data(), m.data(), gated.data(), n, c, h, w); }, reps),
      time_median([&] { stdb::kernels::bcast_mul_channel_forward(x.data(), m.data(), gated.data(), n, c, h, w); }, reps));
}

}  // namespace

int main(int argc, char** argv) {
  int reps = 9;
  CLI::App app{"kernel benchmark: serial reference vs OpenMP"};
  app.add_option("--reps", reps, "runs per measurement (median reported)");
  CLI11_PARSE(app, argc, argv);

  std::printf("threads: %d\n", omp_get_max_threads());
  std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "parallel", "speedup");
  stdb::Rng rng(4027);
  bench_conv2d(reps, rng);
  bench_linear(reps, rng);
  bench_pools(reps, rng);
  return 0;
}
