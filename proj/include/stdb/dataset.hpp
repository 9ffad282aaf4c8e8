#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stdb/image.hpp"
#include "stdb/net.hpp"

namespace stdb {

enum class Split { Train, Query, Gallery };

struct DatasetItem {
  Image image;
  int identity = 0;
  int camera = 0;
  int instance = 0;  // per-identity index, drives the split rule
};

struct DatasetIndex {
  std::vector<DatasetItem> items;

  std::size_t size() const { return items.size(); }
  std::vector<int> identities() const;
};

// Deterministic synthetic person-like images: each identity is a parameter
// vector (torso color, leg color, horizontal offset) rendered at h x w; each
// instance gets its camera's global tint plus additive noise. Instance i of
// every identity uses camera i % n_cams.
DatasetIndex generate_synthetic_dataset(std::size_t n_ids, std::size_t per_id,
                                        std::size_t n_cams, std::uint64_t seed,
                                        std::size_t h = 64, std::size_t w = 32);

// Split rule over instance indices: the first half of every identity's
// instances train; the second half alternates query, gallery, query, ...
DatasetIndex split_of(const DatasetIndex& full, Split split);

// Reads <id>_c<cam>_<idx>.ppm files (binary P6 at the expected size) from a
// directory, sorted by filename.
DatasetIndex load_dataset(const std::string& dir, std::size_t expect_h,
                          std::size_t expect_w);

// Writes items as <id>_c<cam>_<idx>.ppm into the directory.
void write_dataset(const DatasetIndex& index, const std::string& dir);

// Identity -> contiguous class index [0, K), in sorted identity order.
struct LabelMap {
  std::map<int, int> to_class;
  std::vector<int> to_identity;

  std::size_t num_classes() const { return to_identity.size(); }
};

LabelMap build_label_map(const DatasetIndex& index);

// Assembles images/labels/cameras for the given item indices. Labels are
// classifier classes via the map.
Batch make_batch(const DatasetIndex& index,
                 const std::vector<std::size_t>& item_indices,
                 const LabelMap& labels);

// N x 3 x H x W tensor of all items (evaluation embedding input).
Tensor images_tensor(const DatasetIndex& index,
                     const std::vector<std::size_t>& item_indices);

}  // namespace stdb
