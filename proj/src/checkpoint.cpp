#include "stdb/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>

namespace stdb {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  const std::size_t at = out.size();
  out.resize(at + 4);
  std::memcpy(out.data() + at, &v, 4);
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  const std::size_t at = out.size();
  out.resize(at + 8);
  std::memcpy(out.data() + at, &v, 8);
}

void put_bytes(std::vector<unsigned char>& out, const void* data,
               std::size_t size) {
  const std::size_t at = out.size();
  out.resize(at + size);
  std::memcpy(out.data() + at, data, size);
}

std::uint32_t crc_of(const unsigned char* data, std::size_t size) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, static_cast<const Bytef*>(data), static_cast<uInt>(size)));
}

class Cursor {
 public:
  Cursor(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v;
    std::memcpy(&v, bytes_.data() + pos_, 8);
    pos_ += 8;
    return v;
  }

  std::string str(std::size_t len) {
    need(len);
    std::string v(reinterpret_cast<const char*>(bytes_.data() + pos_), len);
    pos_ += len;
    return v;
  }

  std::vector<double> doubles(std::size_t count) {
    need(count * 8);
    std::vector<double> v(count);
    std::memcpy(v.data(), bytes_.data() + pos_, count * 8);
    pos_ += count * 8;
    return v;
  }

  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size()) {
      throw PersistError(PersistError::Kind::Truncated, "checkpoint is truncated");
    }
  }

  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void checkpoint_save(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& tensors,
                     const std::string& config_text) {
  std::vector<unsigned char> out;
  put_bytes(out, kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(config_text.size()));
  put_bytes(out, config_text.data(), config_text.size());
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    put_bytes(out, name.data(), name.size());
    const Shape& shape = tensor.shape();
    put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t e : shape) put_u64(out, e);
    put_bytes(out, tensor.data().data(), tensor.size() * sizeof(double));
  }
  put_u32(out, crc_of(out.data(), out.size()));

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) {
    throw PersistError(PersistError::Kind::Io, "cannot open " + path + " for writing");
  }
  file.write(reinterpret_cast<const char*>(out.data()),
             static_cast<std::streamsize>(out.size()));
  if (!file) {
    throw PersistError(PersistError::Kind::Io, "short write to " + path);
  }
}

CheckpointData checkpoint_load(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) {
    throw PersistError(PersistError::Kind::Io, "cannot open " + path);
  }
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(file)),
                                   std::istreambuf_iterator<char>());

  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw PersistError(PersistError::Kind::BadMagic,
                       path + " is not a checkpoint (bad magic)");
  }
  if (bytes.size() < 8 + 4) {
    throw PersistError(PersistError::Kind::Truncated, "checkpoint is truncated");
  }
  // CRC over everything except the trailing checksum.
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
  if (crc_of(bytes.data(), bytes.size() - 4) != stored_crc) {
    throw PersistError(PersistError::Kind::BadCrc, path + ": CRC mismatch");
  }

  Cursor cursor(bytes);
  cursor.str(4);  // magic, already verified
  CheckpointData data;
  data.version = cursor.u32();
  if (data.version != kCheckpointVersion) {
    throw PersistError(PersistError::Kind::BadVersion,
                       path + ": unsupported version " + std::to_string(data.version));
  }
  const std::uint32_t config_len = cursor.u32();
  data.config_text = cursor.str(config_len);
  const std::uint32_t count = cursor.u32();
  data.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = cursor.u32();
    std::string name = cursor.str(name_len);
    const std::uint32_t rank = cursor.u32();
    Shape shape(rank);
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape[d] = static_cast<std::size_t>(cursor.u64());
      if (shape[d] == 0) {
        throw PersistError(PersistError::Kind::BadPayload,
                           path + ": zero extent in tensor " + name);
      }
      numel *= shape[d];
    }
    std::vector<double> values = cursor.doubles(numel);
    data.tensors.emplace_back(std::move(name),
                              Tensor::from_data(std::move(shape), std::move(values)));
  }
  if (cursor.pos() != bytes.size() - 4) {
    throw PersistError(PersistError::Kind::BadPayload,
                       path + ": trailing bytes after tensor table");
  }
  return data;
}

}  // namespace stdb
