#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "stdb/config.hpp"
#include "stdb/dataset.hpp"
#include "stdb/eval.hpp"
#include "stdb/net.hpp"

namespace stdb {

struct TrainOutput {
  ModelParams params;
  Config config;
  LabelMap label_map;
  std::vector<std::string> log_lines;  // one JSON object per epoch
};

// Runs the training loop: per iteration, a PK-sampled batch goes through
// train_forward, backward and one Adam step at the scheduled rate. Fully
// deterministic for a given config + dataset. When checkpoint_dir is
// non-empty, checkpoints land there every checkpoint_interval epochs plus a
// final one; when log_stream is given, each epoch line is written and
// flushed as it is produced.
TrainOutput run_training(const Config& config, const DatasetIndex& train_set,
                         const std::string& checkpoint_dir = "",
                         std::ostream* log_stream = nullptr);

// Embeds every item with inference_embedding, in index order.
std::vector<GalleryItem> embed_dataset(const DatasetIndex& items,
                                       const ModelParams& params,
                                       const Config& config,
                                       std::size_t batch_size = 32);

}  // namespace stdb
