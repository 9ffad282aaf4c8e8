#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "stdb/tensor.hpp"

namespace stdb {

// Colormapped P6 bytes of one saliency map. Values are min-max normalized per
// map (a constant map renders at 0.5), colored along the blue -> red line
// (0,0,255) .. (128,0,128) .. (255,0,0), and upscaled to out_h x out_w with
// nearest-neighbor sampling. Passing 0 for the output extents keeps h x w.
std::vector<unsigned char> render_heatmap(const std::vector<double>& map,
                                          std::size_t h, std::size_t w,
                                          std::size_t out_h = 0,
                                          std::size_t out_w = 0);

void export_heatmap(const std::vector<double>& map, std::size_t h,
                    std::size_t w, const std::string& path,
                    std::size_t out_h = 0, std::size_t out_w = 0);

// Convenience: slices sample `n` out of an N x 1 x H x W map tensor.
void export_heatmap(const Tensor& maps, std::size_t n, const std::string& path,
                    std::size_t out_h = 0, std::size_t out_w = 0);

}  // namespace stdb
