#include "stdb/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "stdb/error.hpp"

namespace stdb {

std::vector<unsigned char> render_heatmap(const std::vector<double>& map,
                                          std::size_t h, std::size_t w,
                                          std::size_t out_h, std::size_t out_w) {
  if (map.size() != h * w || h == 0 || w == 0) {
    throw ContractError("render_heatmap: map size does not match extents");
  }
  for (double v : map) {
    if (!std::isfinite(v)) throw ContractError("render_heatmap: non-finite value");
  }
  if (out_h == 0) out_h = h;
  if (out_w == 0) out_w = w;

  const auto [lo_it, hi_it] = std::minmax_element(map.begin(), map.end());
  const double lo = *lo_it, hi = *hi_it;
  const double span = hi - lo;

  const std::string header = "P6\n" + std::to_string(out_w) + " " +
                             std::to_string(out_h) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(out.size() + 3 * out_h * out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const std::size_t sy = y * h / out_h;
    for (std::size_t x = 0; x < out_w; ++x) {
      const std::size_t sx = x * w / out_w;
      const double v = map[sy * w + sx];
      const double t = span == 0.0 ? 0.5 : (v - lo) / span;
      out.push_back(static_cast<unsigned char>(std::llround(255.0 * t)));
      out.push_back(0);
      out.push_back(static_cast<unsigned char>(std::llround(255.0 * (1.0 - t))));
    }
  }
  return out;
}

void export_heatmap(const std::vector<double>& map, std::size_t h,
                    std::size_t w, const std::string& path, std::size_t out_h,
                    std::size_t out_w) {
  const std::vector<unsigned char> bytes = render_heatmap(map, h, w, out_h, out_w);
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot open " + path + " for writing");
  file.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
  if (!file) throw IoError("short write to " + path);
}

void export_heatmap(const Tensor& maps, std::size_t n, const std::string& path,
                    std::size_t out_h, std::size_t out_w) {
  if (maps.rank() != 4 || maps.extent(1) != 1) {
    throw DimError("export_heatmap: maps must be N x 1 x H x W");
  }
  if (n >= maps.extent(0)) throw ContractError("export_heatmap: sample out of range");
  const std::size_t h = maps.extent(2), w = maps.extent(3);
  const auto data = maps.data();
  std::vector<double> slice(data.begin() + static_cast<std::ptrdiff_t>(n * h * w),
                            data.begin() + static_cast<std::ptrdiff_t>((n + 1) * h * w));
  export_heatmap(slice, h, w, path, out_h, out_w);
}

}  // namespace stdb
