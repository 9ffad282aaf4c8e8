#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "stdb/error.hpp"

namespace stdb {

enum class DropMode { Threshold, Quantile };
enum class DropPool { Gmp, Gap };
enum class AttnMapPool { Mean, Max };
enum class BranchSet { Full, GlobalOnly, GlobalDrop, GlobalAttention };

// Flat key = value configuration. Every field has a working default; the
// parser rejects unknown keys, duplicate keys and out-of-range values with
// the offending line number.
struct Config {
  double alpha = 0.8;               // drop threshold scale, > 0
  double rho = 0.25;                // P(drop branch) when both are enabled
  std::size_t reduction = 16;       // channel-attention bottleneck ratio
  std::size_t p = 8;                // identities per batch
  std::size_t n_per = 4;            // instances per identity
  std::size_t image_h = 64;
  std::size_t image_w = 32;
  std::size_t dim_hidden = 128;     // global head hidden width
  std::size_t dim_embed = 64;       // embedding width of every branch
  std::size_t epochs = 50;
  std::size_t iters_per_epoch = 0;  // 0: ceil(dataset / batch)
  std::uint64_t seed = 42;
  DropMode drop_mode = DropMode::Threshold;
  double drop_quantile = 0.2;
  double base_lr = 1e-4;
  std::size_t spatial_kernel = 7;   // odd
  std::size_t checkpoint_interval = 10;  // epochs; 0: final only
  DropPool drop_pool = DropPool::Gmp;
  AttnMapPool attn_map_pool = AttnMapPool::Mean;
  BranchSet branches = BranchSet::Full;

  std::size_t batch_size() const { return p * n_per; }
};

// Parses the key = value text ('#' starts a comment). Unknown keys, duplicate
// keys, malformed values and out-of-range values raise ConfigError naming the
// line.
Config parse_config(const std::string& text);

Config load_config(const std::string& path);

// Canonical serialization; parse_config(config_to_text(c)) reproduces every
// field exactly.
std::string config_to_text(const Config& config);

const char* to_string(DropMode mode);
const char* to_string(DropPool pool);
const char* to_string(AttnMapPool pool);
const char* to_string(BranchSet branches);

}  // namespace stdb
