#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "stdb/attention.hpp"
#include "stdb/config.hpp"
#include "stdb/loss.hpp"
#include "stdb/rng.hpp"
#include "stdb/tensor.hpp"

namespace stdb {

enum class Branch { Global, Attention, Drop };

const char* to_string(Branch branch);

// One training batch: images plus identity labels in [0, K) and camera ids.
struct Batch {
  Tensor images;  // N x 3 x H x W
  std::vector<int> labels;
  std::vector<int> cameras;
};

struct ConvStage {
  Tensor weight;  // Cout x Cin x 3 x 3
  Tensor bias;    // Cout
  std::size_t stride = 1;
};

// All learnable weights: a four-stage backbone whose last stage keeps
// stride 1 so the final map stays at higher resolution, a two-FC global head,
// the attention gates with their own head, and the drop head. Every branch
// owns a separate classifier.
struct ModelParams {
  std::vector<ConvStage> backbone;

  Tensor g_fc1_w, g_fc1_b;  // dim_hidden x C, dim_hidden
  Tensor g_fc2_w, g_fc2_b;  // dim_embed x dim_hidden, dim_embed
  Tensor g_cls_w, g_cls_b;  // K x dim_embed, K

  ChannelAttentionParams channel_gate;
  SpatialAttentionParams spatial_gate;
  Tensor a_fc_w, a_fc_b;    // dim_embed x C
  Tensor a_cls_w, a_cls_b;

  Tensor d_fc_w, d_fc_b;    // dim_embed x C
  Tensor d_cls_w, d_cls_b;

  static ModelParams init(const Config& config, std::size_t num_classes,
                          Rng& rng);

  // Rebuilds the model from checkpoint tensors (names as produced by
  // named()); every tensor becomes a requires-grad leaf.
  static ModelParams from_named(
      const std::vector<std::pair<std::string, Tensor>>& tensors);

  // Stable name -> tensor listing (checkpoint order).
  std::vector<std::pair<std::string, Tensor>> named() const;
  std::vector<Tensor> all() const;
  void zero_grads() const;
  std::size_t num_classes() const { return g_cls_w.extent(0); }
  std::size_t feat_channels() const { return backbone.back().weight.extent(0); }
};

struct BranchOutput {
  Tensor embedding;  // N x dim_embed
  Tensor logits;     // N x K
  Branch branch = Branch::Global;
};

// Backbone feature map, N x C x H' x W'; three stride-2 stages and one
// stride-1 stage, relu after every convolution.
Tensor backbone_forward(const Tensor& images, const ModelParams& params);

// mask_source overrides the tensor the drop branch derives its mask from;
// by default the mask comes from the feature map itself.
BranchOutput branch_forward(const Tensor& featmap, Branch kind,
                            const ModelParams& params, const Config& config,
                            const Tensor* mask_source = nullptr);

// Drop with probability rho, attention otherwise; consumes one uniform draw.
Branch select_branch(double rho, Rng& rng);

struct TrainStepResult {
  Tensor loss;          // scalar, on the tape
  bool has_aux = false;
  Branch aux = Branch::Attention;
  double global_ce = 0.0;
  double global_triplet = 0.0;
  double aux_ce = 0.0;
  double aux_triplet = 0.0;
};

// Global branch always; exactly one auxiliary branch when the variant has
// any. Loss is the sum over active branches of cross-entropy + soft-margin
// batch-hard triplet.
TrainStepResult train_forward(const Batch& batch, const ModelParams& params,
                              const Config& config, Rng& rng);

// Test-time embedding: [global || attention], or global alone for variants
// without the attention branch. Consumes no randomness and records no tape.
Tensor inference_embedding(const Tensor& images, const ModelParams& params,
                           const Config& config);

}  // namespace stdb
