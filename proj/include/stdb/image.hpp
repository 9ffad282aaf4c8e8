#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "stdb/error.hpp"

namespace stdb {

// 8-bit RGB image held as planar channels (3 x H x W) normalized to [0, 1].
struct Image {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<double> rgb;  // channel-major

  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return rgb[(c * h + y) * w + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return rgb[(c * h + y) * w + x];
  }
};

// Binary PPM (P6, maxval 255). Reading accepts header comments; values come
// back as v / 255.
Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& image);

// Serialized P6 bytes of the image (what write_ppm puts on disk).
std::vector<unsigned char> encode_ppm(const Image& image);
Image decode_ppm(const std::vector<unsigned char>& bytes,
                 const std::string& name);

}  // namespace stdb
