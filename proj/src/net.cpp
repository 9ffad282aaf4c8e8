#include "stdb/net.hpp"

#include <cmath>
#include <unordered_map>

#include "stdb/adadrop.hpp"

namespace stdb {

namespace {

constexpr std::size_t kStageChannels[] = {16, 32, 64, 64};
constexpr std::size_t kStageStrides[] = {2, 2, 2, 1};
constexpr std::size_t kNumStages = 4;
constexpr std::size_t kInputChannels = 3;

Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  std::vector<double> data(shape_numel(shape));
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& v : data) v = stddev * rng.normal();
  return Tensor::from_data(std::move(shape), std::move(data), true);
}

}  // namespace

const char* to_string(Branch branch) {
  switch (branch) {
    case Branch::Global: return "global";
    case Branch::Attention: return "attention";
    case Branch::Drop: return "drop";
  }
  return "global";
}

ModelParams ModelParams::init(const Config& config, std::size_t num_classes,
                              Rng& rng) {
  if (num_classes < 2) throw ContractError("model: need at least two classes");
  ModelParams p;
  std::size_t cin = kInputChannels;
  for (std::size_t s = 0; s < kNumStages; ++s) {
    ConvStage stage;
    stage.weight = he_normal({kStageChannels[s], cin, 3, 3}, cin * 9, rng);
    stage.bias = Tensor::zeros({kStageChannels[s]}, true);
    stage.stride = kStageStrides[s];
    p.backbone.push_back(std::move(stage));
    cin = kStageChannels[s];
  }
  const std::size_t feat = cin;

  p.g_fc1_w = he_normal({config.dim_hidden, feat}, feat, rng);
  p.g_fc1_b = Tensor::zeros({config.dim_hidden}, true);
  p.g_fc2_w = he_normal({config.dim_embed, config.dim_hidden}, config.dim_hidden, rng);
  p.g_fc2_b = Tensor::zeros({config.dim_embed}, true);
  p.g_cls_w = he_normal({num_classes, config.dim_embed}, config.dim_embed, rng);
  p.g_cls_b = Tensor::zeros({num_classes}, true);

  p.channel_gate = ChannelAttentionParams::init(feat, config.reduction, rng);
  p.spatial_gate = SpatialAttentionParams::init(config.spatial_kernel, rng);
  p.a_fc_w = he_normal({config.dim_embed, feat}, feat, rng);
  p.a_fc_b = Tensor::zeros({config.dim_embed}, true);
  p.a_cls_w = he_normal({num_classes, config.dim_embed}, config.dim_embed, rng);
  p.a_cls_b = Tensor::zeros({num_classes}, true);

  p.d_fc_w = he_normal({config.dim_embed, feat}, feat, rng);
  p.d_fc_b = Tensor::zeros({config.dim_embed}, true);
  p.d_cls_w = he_normal({num_classes, config.dim_embed}, config.dim_embed, rng);
  p.d_cls_b = Tensor::zeros({num_classes}, true);
  return p;
}

ModelParams ModelParams::from_named(
    const std::vector<std::pair<std::string, Tensor>>& tensors) {
  std::unordered_map<std::string, Tensor> by_name;
  for (const auto& [name, tensor] : tensors) by_name.emplace(name, tensor);

  auto take = [&by_name](const std::string& name) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw PersistError(PersistError::Kind::BadPayload,
                         "checkpoint misses tensor '" + name + "'");
    }
    Tensor t = it->second;
    t.set_requires_grad(true);
    return t;
  };

  ModelParams p;
  for (std::size_t s = 0; s < kNumStages; ++s) {
    ConvStage stage;
    stage.weight = take("backbone." + std::to_string(s) + ".weight");
    stage.bias = take("backbone." + std::to_string(s) + ".bias");
    stage.stride = kStageStrides[s];
    p.backbone.push_back(std::move(stage));
  }
  p.g_fc1_w = take("global.fc1.weight");
  p.g_fc1_b = take("global.fc1.bias");
  p.g_fc2_w = take("global.fc2.weight");
  p.g_fc2_b = take("global.fc2.bias");
  p.g_cls_w = take("global.cls.weight");
  p.g_cls_b = take("global.cls.bias");

  p.channel_gate.w1 = take("attention.channel.w1");
  p.channel_gate.w2 = take("attention.channel.w2");
  if (p.channel_gate.w1.rank() != 2 || p.channel_gate.w1.extent(0) == 0) {
    throw PersistError(PersistError::Kind::BadPayload,
                       "checkpoint channel gate weights have a bad shape");
  }
  p.channel_gate.channels = p.channel_gate.w1.extent(1);
  p.channel_gate.reduction =
      p.channel_gate.channels / p.channel_gate.w1.extent(0);
  p.spatial_gate.kernel = take("attention.spatial.kernel");
  if (p.spatial_gate.kernel.rank() != 4) {
    throw PersistError(PersistError::Kind::BadPayload,
                       "checkpoint spatial kernel has a bad shape");
  }
  p.spatial_gate.kernel_size = p.spatial_gate.kernel.extent(3);

  p.a_fc_w = take("attention.fc.weight");
  p.a_fc_b = take("attention.fc.bias");
  p.a_cls_w = take("attention.cls.weight");
  p.a_cls_b = take("attention.cls.bias");
  p.d_fc_w = take("drop.fc.weight");
  p.d_fc_b = take("drop.fc.bias");
  p.d_cls_w = take("drop.cls.weight");
  p.d_cls_b = take("drop.cls.bias");
  return p;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t s = 0; s < backbone.size(); ++s) {
    out.emplace_back("backbone." + std::to_string(s) + ".weight", backbone[s].weight);
    out.emplace_back("backbone." + std::to_string(s) + ".bias", backbone[s].bias);
  }
  out.emplace_back("global.fc1.weight", g_fc1_w);
  out.emplace_back("global.fc1.bias", g_fc1_b);
  out.emplace_back("global.fc2.weight", g_fc2_w);
  out.emplace_back("global.fc2.bias", g_fc2_b);
  out.emplace_back("global.cls.weight", g_cls_w);
  out.emplace_back("global.cls.bias", g_cls_b);
  out.emplace_back("attention.channel.w1", channel_gate.w1);
  out.emplace_back("attention.channel.w2", channel_gate.w2);
  out.emplace_back("attention.spatial.kernel", spatial_gate.kernel);
  out.emplace_back("attention.fc.weight", a_fc_w);
  out.emplace_back("attention.fc.bias", a_fc_b);
  out.emplace_back("attention.cls.weight", a_cls_w);
  out.emplace_back("attention.cls.bias", a_cls_b);
  out.emplace_back("drop.fc.weight", d_fc_w);
  out.emplace_back("drop.fc.bias", d_fc_b);
  out.emplace_back("drop.cls.weight", d_cls_w);
  out.emplace_back("drop.cls.bias", d_cls_b);
  return out;
}

std::vector<Tensor> ModelParams::all() const {
  std::vector<Tensor> out;
  for (auto& [name, tensor] : named()) out.push_back(tensor);
  return out;
}

void ModelParams::zero_grads() const {
  for (Tensor t : all()) t.zero_grad();
}

Tensor backbone_forward(const Tensor& images, const ModelParams& params) {
  if (images.rank() != 4) throw DimError("backbone: images must be N x 3 x H x W");
  if (images.extent(1) != kInputChannels) {
    throw DimError("backbone: expected " + std::to_string(kInputChannels) +
                   " image channels, got " + std::to_string(images.extent(1)));
  }
  Tensor x = images;
  for (const ConvStage& stage : params.backbone) {
    x = relu(conv2d(x, stage.weight, stage.bias, stage.stride, 1));
  }
  return x;
}

namespace {

Tensor head_embedding(const Tensor& pooled, const Tensor& w, const Tensor& b) {
  const std::size_t n = pooled.extent(0), c = pooled.extent(1);
  return linear(reshape(pooled, {n, c}), w, b);
}

}  // namespace

BranchOutput branch_forward(const Tensor& featmap, Branch kind,
                            const ModelParams& params, const Config& config,
                            const Tensor* mask_source) {
  if (featmap.rank() != 4) throw DimError("branch: feature map must be rank 4");
  const std::size_t n = featmap.extent(0);
  BranchOutput out;
  out.branch = kind;
  switch (kind) {
    case Branch::Global: {
      Tensor pooled = reshape(gap(featmap), {n, featmap.extent(1)});
      Tensor hidden = relu(linear(pooled, params.g_fc1_w, params.g_fc1_b));
      out.embedding = linear(hidden, params.g_fc2_w, params.g_fc2_b);
      out.logits = linear(out.embedding, params.g_cls_w, params.g_cls_b);
      return out;
    }
    case Branch::Attention: {
      Tensor attended = cbam(featmap, params.channel_gate, params.spatial_gate);
      out.embedding = head_embedding(gap(attended), params.a_fc_w, params.a_fc_b);
      out.logits = linear(out.embedding, params.a_cls_w, params.a_cls_b);
      return out;
    }
    case Branch::Drop: {
      const Tensor& source = mask_source ? *mask_source : featmap;
      DropMask mask;
      {
        NoGradGuard guard;  // the mask is a constant in backward
        const MapPool map_pool = config.attn_map_pool == AttnMapPool::Mean
                                     ? MapPool::Mean
                                     : MapPool::Max;
        Tensor saliency = attention_map(source, map_pool);
        mask = config.drop_mode == DropMode::Threshold
                   ? drop_mask(saliency, config.alpha)
                   : drop_mask_quantile(saliency, config.drop_quantile);
      }
      Tensor dropped = apply_drop(featmap, mask);
      Tensor pooled = config.drop_pool == DropPool::Gmp ? gmp(dropped) : gap(dropped);
      out.embedding = head_embedding(pooled, params.d_fc_w, params.d_fc_b);
      out.logits = linear(out.embedding, params.d_cls_w, params.d_cls_b);
      return out;
    }
  }
  throw ContractError("branch: unknown branch kind");
}

Branch select_branch(double rho, Rng& rng) {
  if (rho < 0.0 || rho > 1.0) {
    throw ContractError("select_branch: rho must be in [0, 1]");
  }
  return rng.uniform() < rho ? Branch::Drop : Branch::Attention;
}

namespace {

struct BranchLoss {
  Tensor loss;
  double ce = 0.0;
  double triplet = 0.0;
};

BranchLoss branch_loss(const BranchOutput& out, const std::vector<int>& labels) {
  BranchLoss result;
  Tensor ce = cross_entropy(out.logits, labels);
  HardPairs pairs = batch_hard(pairwise_distances(out.embedding), labels);
  Tensor triplet = soft_margin_triplet(pairs);
  result.ce = ce.item();
  result.triplet = triplet.item();
  result.loss = total_loss(ce, triplet);
  return result;
}

}  // namespace

TrainStepResult train_forward(const Batch& batch, const ModelParams& params,
                              const Config& config, Rng& rng) {
  Tensor featmap = backbone_forward(batch.images, params);
  TrainStepResult result;

  BranchLoss global = branch_loss(
      branch_forward(featmap, Branch::Global, params, config), batch.labels);
  result.global_ce = global.ce;
  result.global_triplet = global.triplet;
  result.loss = global.loss;

  switch (config.branches) {
    case BranchSet::GlobalOnly:
      return result;
    case BranchSet::GlobalDrop:
      result.aux = Branch::Drop;
      break;
    case BranchSet::GlobalAttention:
      result.aux = Branch::Attention;
      break;
    case BranchSet::Full:
      result.aux = select_branch(config.rho, rng);
      break;
  }
  result.has_aux = true;
  BranchLoss aux = branch_loss(
      branch_forward(featmap, result.aux, params, config), batch.labels);
  result.aux_ce = aux.ce;
  result.aux_triplet = aux.triplet;
  result.loss = add(result.loss, aux.loss);
  return result;
}

Tensor inference_embedding(const Tensor& images, const ModelParams& params,
                           const Config& config) {
  NoGradGuard guard;
  Tensor featmap = backbone_forward(images, params);
  Tensor global = branch_forward(featmap, Branch::Global, params, config).embedding;
  if (config.branches == BranchSet::GlobalOnly ||
      config.branches == BranchSet::GlobalDrop) {
    return global;  // no attention branch in these variants
  }
  Tensor attention =
      branch_forward(featmap, Branch::Attention, params, config).embedding;
  return concat_cols(global, attention);
}

}  // namespace stdb
