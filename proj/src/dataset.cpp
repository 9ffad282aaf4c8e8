#include "stdb/dataset.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>

#include "stdb/rng.hpp"

namespace stdb {

namespace fs = std::filesystem;

std::vector<int> DatasetIndex::identities() const {
  std::vector<int> out;
  out.reserve(items.size());
  for (const DatasetItem& item : items) out.push_back(item.identity);
  return out;
}

namespace {

struct IdentityParams {
  double torso[3];
  double legs[3];
  int offset;  // horizontal shift in pixels
};

void fill_rect(Image& image, std::size_t y0, std::size_t y1, std::size_t x0,
               std::size_t x1, const double rgb[3]) {
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = y0; y < y1 && y < image.h; ++y) {
      for (std::size_t x = x0; x < x1 && x < image.w; ++x) {
        image.at(c, y, x) = rgb[c];
      }
    }
  }
}

std::size_t shifted(std::size_t x, int offset, std::size_t w) {
  const long v = static_cast<long>(x) + offset;
  if (v < 0) return 0;
  if (v >= static_cast<long>(w)) return w - 1;
  return static_cast<std::size_t>(v);
}

Image render_identity(const IdentityParams& id, std::size_t h, std::size_t w) {
  Image image;
  image.h = h;
  image.w = w;
  image.rgb.assign(3 * h * w, 0.45);  // flat background

  const double head[3] = {0.80, 0.65, 0.55};
  const int off = id.offset;
  // head
  fill_rect(image, h / 16, h * 3 / 16, shifted(w * 3 / 8, off, w),
            shifted(w * 5 / 8, off, w), head);
  // torso
  fill_rect(image, h * 7 / 32, h * 19 / 32, shifted(w / 5, off, w),
            shifted(w * 4 / 5, off, w), id.torso);
  // legs
  fill_rect(image, h * 5 / 8, h * 31 / 32, shifted(w * 3 / 10, off, w),
            shifted(w * 7 / 10, off, w), id.legs);
  return image;
}

}  // namespace

DatasetIndex generate_synthetic_dataset(std::size_t n_ids, std::size_t per_id,
                                        std::size_t n_cams, std::uint64_t seed,
                                        std::size_t h, std::size_t w) {
  if (n_ids < 2 || per_id < 2 || n_cams < 2) {
    throw ContractError("synthetic dataset: need n_ids, per_id, n_cams >= 2");
  }
  Rng rng(seed);

  std::vector<IdentityParams> ids(n_ids);
  const int max_offset = static_cast<int>(w / 8);
  for (IdentityParams& id : ids) {
    for (double& v : id.torso) v = rng.uniform(0.15, 0.85);
    for (double& v : id.legs) v = rng.uniform(0.15, 0.85);
    id.offset = static_cast<int>(rng.uniform_index(2 * max_offset + 1)) - max_offset;
  }

  std::vector<std::array<double, 3>> tints(n_cams);
  for (auto& tint : tints) {
    for (double& v : tint) v = rng.uniform(0.78, 1.22);
  }

  DatasetIndex index;
  index.items.reserve(n_ids * per_id);
  for (std::size_t id = 0; id < n_ids; ++id) {
    const Image base = render_identity(ids[id], h, w);
    for (std::size_t inst = 0; inst < per_id; ++inst) {
      const std::size_t cam = inst % n_cams;
      DatasetItem item;
      item.identity = static_cast<int>(id);
      item.camera = static_cast<int>(cam);
      item.instance = static_cast<int>(inst);
      item.image = base;
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t p = 0; p < h * w; ++p) {
          double v = item.image.rgb[c * h * w + p] * tints[cam][c];
          v += rng.uniform(-0.05, 0.05);
          item.image.rgb[c * h * w + p] = std::clamp(v, 0.0, 1.0);
        }
      }
      index.items.push_back(std::move(item));
    }
  }
  return index;
}

DatasetIndex split_of(const DatasetIndex& full, Split split) {
  std::map<int, int> per_id;
  for (const DatasetItem& item : full.items) {
    per_id[item.identity] = std::max(per_id[item.identity], item.instance + 1);
  }
  DatasetIndex out;
  for (const DatasetItem& item : full.items) {
    const int half = per_id[item.identity] / 2;
    Split where;
    if (item.instance < half) {
      where = Split::Train;
    } else {
      where = (item.instance - half) % 2 == 0 ? Split::Query : Split::Gallery;
    }
    if (where == split) out.items.push_back(item);
  }
  return out;
}

DatasetIndex load_dataset(const std::string& dir, std::size_t expect_h,
                          std::size_t expect_w) {
  if (!fs::is_directory(dir)) {
    throw IngestError(dir + ": not a directory");
  }
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") {
      names.push_back(entry.path().filename().string());
    }
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) throw IngestError(dir + ": no .ppm files");

  DatasetIndex index;
  index.items.reserve(names.size());
  for (const std::string& name : names) {
    // <id>_c<cam>_<idx>.ppm
    int id = 0, cam = 0, inst = 0;
    int consumed = 0;
    const int matched =
        std::sscanf(name.c_str(), "%d_c%d_%d.ppm%n", &id, &cam, &inst, &consumed);
    if (matched != 3 || consumed != static_cast<int>(name.size()) || id < 0 ||
        cam < 0 || inst < 0) {
      throw IngestError(name + ": filename does not match <id>_c<cam>_<idx>.ppm");
    }
    DatasetItem item;
    item.identity = id;
    item.camera = cam;
    item.instance = inst;
    item.image = read_ppm((fs::path(dir) / name).string());
    if (item.image.h != expect_h || item.image.w != expect_w) {
      throw IngestError(name + ": expected " + std::to_string(expect_w) + "x" +
                        std::to_string(expect_h) + ", got " +
                        std::to_string(item.image.w) + "x" +
                        std::to_string(item.image.h));
    }
    index.items.push_back(std::move(item));
  }
  return index;
}

void write_dataset(const DatasetIndex& index, const std::string& dir) {
  fs::create_directories(dir);
  char name[64];
  for (const DatasetItem& item : index.items) {
    std::snprintf(name, sizeof(name), "%04d_c%d_%02d.ppm", item.identity,
                  item.camera, item.instance);
    write_ppm((fs::path(dir) / name).string(), item.image);
  }
}

LabelMap build_label_map(const DatasetIndex& index) {
  LabelMap map;
  for (const DatasetItem& item : index.items) {
    map.to_class.emplace(item.identity, 0);
  }
  int next = 0;
  for (auto& [identity, cls] : map.to_class) {
    cls = next++;
    map.to_identity.push_back(identity);
  }
  return map;
}

Tensor images_tensor(const DatasetIndex& index,
                     const std::vector<std::size_t>& item_indices) {
  if (item_indices.empty()) throw ContractError("images_tensor: empty index list");
  const Image& first = index.items.at(item_indices[0]).image;
  const std::size_t h = first.h, w = first.w;
  std::vector<double> data;
  data.reserve(item_indices.size() * 3 * h * w);
  for (std::size_t idx : item_indices) {
    const Image& image = index.items.at(idx).image;
    if (image.h != h || image.w != w) {
      throw DimError("images_tensor: inconsistent image sizes");
    }
    data.insert(data.end(), image.rgb.begin(), image.rgb.end());
  }
  return Tensor::from_data({item_indices.size(), 3, h, w}, std::move(data));
}

Batch make_batch(const DatasetIndex& index,
                 const std::vector<std::size_t>& item_indices,
                 const LabelMap& labels) {
  Batch batch;
  batch.images = images_tensor(index, item_indices);
  batch.labels.reserve(item_indices.size());
  batch.cameras.reserve(item_indices.size());
  for (std::size_t idx : item_indices) {
    const DatasetItem& item = index.items.at(idx);
    batch.labels.push_back(labels.to_class.at(item.identity));
    batch.cameras.push_back(item.camera);
  }
  return batch;
}

}  // namespace stdb
