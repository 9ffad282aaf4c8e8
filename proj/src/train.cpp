#include "stdb/train.hpp"

#include <cstdio>
#include <filesystem>

#include "json.hpp"
#include "stdb/checkpoint.hpp"
#include "stdb/schedule.hpp"

namespace stdb {

namespace fs = std::filesystem;

TrainOutput run_training(const Config& config, const DatasetIndex& train_set,
                         const std::string& checkpoint_dir,
                         std::ostream* log_stream) {
  if (train_set.size() < config.batch_size()) {
    throw ConfigError("batch size " + std::to_string(config.batch_size()) +
                      " exceeds dataset size " + std::to_string(train_set.size()));
  }
  LabelMap label_map = build_label_map(train_set);
  if (label_map.num_classes() < config.p) {
    throw ConfigError("dataset has " + std::to_string(label_map.num_classes()) +
                      " identities, batches need p = " + std::to_string(config.p));
  }

  Rng rng(config.seed);
  ModelParams params = ModelParams::init(config, label_map.num_classes(), rng);
  std::vector<Tensor> all_params = params.all();
  AdamState adam(all_params);

  std::vector<int> class_labels;
  class_labels.reserve(train_set.size());
  for (const DatasetItem& item : train_set.items) {
    class_labels.push_back(label_map.to_class.at(item.identity));
  }

  const std::size_t iters =
      config.iters_per_epoch > 0
          ? config.iters_per_epoch
          : (train_set.size() + config.batch_size() - 1) / config.batch_size();
  const PKBatchSpec spec(config.p, config.n_per);

  if (!checkpoint_dir.empty()) fs::create_directories(checkpoint_dir);
  const std::string config_text = config_to_text(config);

  TrainOutput out;
  out.config = config;
  out.label_map = label_map;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, config.base_lr);
    double loss_sum = 0.0, ce_sum = 0.0, triplet_sum = 0.0;
    std::size_t drop_iters = 0, attention_iters = 0;

    for (std::size_t it = 0; it < iters; ++it) {
      const std::vector<std::size_t> indices = pk_sample(class_labels, spec, rng);
      const Batch batch = make_batch(train_set, indices, label_map);
      params.zero_grads();
      TrainStepResult step = train_forward(batch, params, config, rng);
      backward(step.loss);
      adam_step(all_params, adam, lr);

      loss_sum += step.loss.item();
      ce_sum += step.global_ce + step.aux_ce;
      triplet_sum += step.global_triplet + step.aux_triplet;
      if (step.has_aux) {
        (step.aux == Branch::Drop ? drop_iters : attention_iters) += 1;
      }
    }

    nlohmann::json line{
        {"epoch", epoch},
        {"lr", lr},
        {"loss", loss_sum / static_cast<double>(iters)},
        {"ce", ce_sum / static_cast<double>(iters)},
        {"triplet", triplet_sum / static_cast<double>(iters)},
        {"drop_iters", drop_iters},
        {"attention_iters", attention_iters},
    };
    out.log_lines.push_back(line.dump());
    if (log_stream) {
      (*log_stream) << out.log_lines.back() << "\n";
      log_stream->flush();
    }

    if (!checkpoint_dir.empty() && config.checkpoint_interval > 0 &&
        (epoch + 1) % config.checkpoint_interval == 0 &&
        epoch + 1 < config.epochs) {
      char name[48];
      std::snprintf(name, sizeof(name), "checkpoint_%04zu.stdb", epoch + 1);
      checkpoint_save((fs::path(checkpoint_dir) / name).string(), params.named(),
                      config_text);
    }
  }

  if (!checkpoint_dir.empty()) {
    checkpoint_save((fs::path(checkpoint_dir) / "checkpoint_final.stdb").string(),
                    params.named(), config_text);
  }

  out.params = std::move(params);
  return out;
}

std::vector<GalleryItem> embed_dataset(const DatasetIndex& items,
                                       const ModelParams& params,
                                       const Config& config,
                                       std::size_t batch_size) {
  if (batch_size == 0) throw ContractError("embed_dataset: zero batch size");
  std::vector<GalleryItem> out;
  out.reserve(items.size());
  for (std::size_t start = 0; start < items.size(); start += batch_size) {
    const std::size_t stop = std::min(items.size(), start + batch_size);
    std::vector<std::size_t> indices;
    indices.reserve(stop - start);
    for (std::size_t i = start; i < stop; ++i) indices.push_back(i);
    Tensor emb = inference_embedding(images_tensor(items, indices), params, config);
    const std::size_t width = emb.extent(1);
    for (std::size_t row = 0; row < indices.size(); ++row) {
      GalleryItem item;
      item.identity = items.items[indices[row]].identity;
      item.camera = items.items[indices[row]].camera;
      item.embedding.assign(emb.data().begin() + static_cast<std::ptrdiff_t>(row * width),
                            emb.data().begin() + static_cast<std::ptrdiff_t>((row + 1) * width));
      out.push_back(std::move(item));
    }
  }
  return out;
}

}  // namespace stdb
