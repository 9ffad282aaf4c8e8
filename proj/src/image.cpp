#include "stdb/image.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>

namespace stdb {

namespace {

inline unsigned char quantize(double v) {
  const double clamped = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  return static_cast<unsigned char>(std::llround(clamped * 255.0));
}

// PPM token reader: skips whitespace and '#' comments.
class TokenReader {
 public:
  TokenReader(const std::vector<unsigned char>& bytes, const std::string& name)
      : bytes_(bytes), name_(name) {}

  std::string next_token() {
    skip_separators();
    if (pos_ >= bytes_.size()) {
      throw IngestError(name_ + ": truncated header");
    }
    std::string token;
    while (pos_ < bytes_.size() && !is_space(bytes_[pos_])) {
      token.push_back(static_cast<char>(bytes_[pos_++]));
    }
    return token;
  }

  std::size_t next_number() {
    const std::string token = next_token();
    std::size_t value = 0;
    if (token.empty()) throw IngestError(name_ + ": malformed header");
    for (char c : token) {
      if (c < '0' || c > '9') {
        throw IngestError(name_ + ": expected a number in header, got '" + token + "'");
      }
      value = value * 10 + static_cast<std::size_t>(c - '0');
    }
    return value;
  }

  // One whitespace byte separates the header from the raster.
  std::size_t raster_offset() {
    if (pos_ >= bytes_.size() || !is_space(bytes_[pos_])) {
      throw IngestError(name_ + ": missing raster separator");
    }
    return pos_ + 1;
  }

 private:
  static bool is_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r';
  }

  void skip_separators() {
    while (pos_ < bytes_.size()) {
      if (is_space(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<unsigned char>& bytes_;
  const std::string& name_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> encode_ppm(const Image& image) {
  const std::string header = "P6\n" + std::to_string(image.w) + " " +
                             std::to_string(image.h) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(out.size() + 3 * image.h * image.w);
  for (std::size_t y = 0; y < image.h; ++y) {
    for (std::size_t x = 0; x < image.w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        out.push_back(quantize(image.at(c, y, x)));
      }
    }
  }
  return out;
}

Image decode_ppm(const std::vector<unsigned char>& bytes,
                 const std::string& name) {
  TokenReader reader(bytes, name);
  const std::string magic = reader.next_token();
  if (magic != "P6") {
    throw IngestError(name + ": not a binary P6 file (magic '" + magic + "')");
  }
  const std::size_t w = reader.next_number();
  const std::size_t h = reader.next_number();
  const std::size_t maxval = reader.next_number();
  if (w == 0 || h == 0) throw IngestError(name + ": zero image extent");
  if (maxval != 255) {
    throw IngestError(name + ": expected maxval 255, got " + std::to_string(maxval));
  }
  const std::size_t offset = reader.raster_offset();
  if (bytes.size() < offset + 3 * w * h) {
    throw IngestError(name + ": truncated raster");
  }
  Image image;
  image.h = h;
  image.w = w;
  image.rgb.resize(3 * h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const unsigned char v = bytes[offset + (y * w + x) * 3 + c];
        image.at(c, y, x) = static_cast<double>(v) / 255.0;
      }
    }
  }
  return image;
}

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError(path + ": cannot open file");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return decode_ppm(bytes, path);
}

void write_ppm(const std::string& path, const Image& image) {
  const std::vector<unsigned char> bytes = encode_ppm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path);
}

}  // namespace stdb
