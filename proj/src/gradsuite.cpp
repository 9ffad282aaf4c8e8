#include "stdb/gradsuite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "stdb/adadrop.hpp"
#include "stdb/attention.hpp"
#include "stdb/loss.hpp"
#include "stdb/net.hpp"
#include "stdb/rng.hpp"
#include "stdb/tensor.hpp"

namespace stdb {

namespace {

constexpr std::size_t kInstances = 10;

Tensor uniform_tensor(const Shape& shape, Rng& rng, double lo, double hi) {
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) v = rng.uniform(lo, hi);
  return Tensor::from_data(shape, std::move(data));
}

// Values with pairwise gaps, for max-pool checks.
Tensor spread_tensor(const Shape& shape, Rng& rng) {
  const std::size_t n = shape_numel(shape);
  std::vector<double> data(n);
  const double step = 2.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    data[i] = -1.0 + step * (static_cast<double>(i) + 0.25 + 0.5 * rng.uniform());
  }
  rng.shuffle(data);
  return Tensor::from_data(shape, std::move(data));
}

Tensor nonzero_tensor(const Shape& shape, Rng& rng) {
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) {
    const double mag = rng.uniform(0.1, 1.0);
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  return Tensor::from_data(shape, std::move(data));
}

class SuiteRunner {
 public:
  SuiteRunner(std::uint64_t seed, double eps) : rng_(seed), eps_(eps) {}

  // Each call of `make` returns (fn, input) for one random instance.
  void check(const std::string& name,
             const std::function<std::pair<std::function<Tensor(const Tensor&)>,
                                           Tensor>(Rng&)>& make) {
    GradCheckEntry entry;
    entry.name = name;
    for (std::size_t i = 0; i < kInstances; ++i) {
      auto [fn, input] = make(rng_);
      entry.max_error = std::max(entry.max_error, grad_check(fn, input, eps_));
      ++entry.instances;
    }
    entries_.push_back(std::move(entry));
  }

  std::vector<GradCheckEntry> take() { return std::move(entries_); }

 private:
  Rng rng_;
  double eps_;
  std::vector<GradCheckEntry> entries_;
};

Config suite_config() {
  Config cfg;
  cfg.image_h = 16;
  cfg.image_w = 8;
  cfg.dim_hidden = 24;
  cfg.dim_embed = 12;
  cfg.reduction = 16;
  cfg.spatial_kernel = 3;
  cfg.p = 2;
  cfg.n_per = 2;
  return cfg;
}

Batch suite_batch(const Config& cfg, Rng& rng) {
  Batch batch;
  batch.images = uniform_tensor({4, 3, cfg.image_h, cfg.image_w}, rng, 0.0, 1.0);
  batch.labels = {0, 0, 1, 1};
  batch.cameras = {0, 1, 0, 1};
  return batch;
}

// Finite differences cross a kink when a batch-hard selection sits within the
// probe's reach of its runner-up; require a clear margin on every anchor.
bool hard_pairs_clear(const Tensor& embedding, const std::vector<int>& labels,
                      double margin) {
  Tensor d = pairwise_distances(embedding);
  HardPairs pairs = batch_hard(d, labels);
  const std::size_t n = labels.size();
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j == q || j == pairs.positive_index[q] || j == pairs.negative_index[q]) {
        continue;
      }
      const double v = d.at(q * n + j);
      if (labels[j] == labels[q] && std::abs(v - pairs.hp.at(q)) < margin) {
        return false;
      }
      if (labels[j] != labels[q] && std::abs(v - pairs.hn.at(q)) < margin) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace

GradSuiteResult run_gradient_suite(std::uint64_t seed, double tolerance,
                                   double eps) {
  SuiteRunner runner(seed, eps);

  // --- tensor primitives -------------------------------------------------
  runner.check("conv2d/input", [](Rng& rng) {
    Tensor w = uniform_tensor({3, 2, 3, 3}, rng, -1.0, 1.0);
    Tensor b = uniform_tensor({3}, rng, -1.0, 1.0);
    auto fn = [w, b](const Tensor& t) { return sum(conv2d(t, w, b, 1, 1)); };
    return std::make_pair(std::function<Tensor(const Tensor&)>(fn),
                          uniform_tensor({2, 2, 4, 4}, rng, -1.0, 1.0));
  });
  runner.check("conv2d/weight", [](Rng& rng) {
    Tensor x = uniform_tensor({2, 2, 5, 5}, rng, -1.0, 1.0);
    Tensor b = uniform_tensor({3}, rng, -1.0, 1.0);
    auto fn = [x, b](const Tensor& t) { return sum(conv2d(x, t, b, 2, 1)); };
    return std::make_pair(std::function<Tensor(const Tensor&)>(fn),
                          uniform_tensor({3, 2, 3, 3}, rng, -1.0, 1.0));
  });
  runner.check("conv2d/bias", [](Rng& rng) {
    Tensor x = uniform_tensor({2, 2, 4, 4}, rng, -1.0, 1.0);
    Tensor w = uniform_tensor({3, 2, 3, 3}, rng, -1.0, 1.0);
    auto fn = [x, w](const Tensor& t) { return sum(conv2d(x, w, t, 1, 0)); };
    return std::make_pair(std::function<Tensor(const Tensor&)>(fn),
                          uniform_tensor({3}, rng, -1.0, 1.0));
  });
  runner.check("linear/input", [](Rng& rng) {
    Tensor w = uniform_tensor({3, 6}, rng, -1.0, 1.0);
    Tensor b = uniform_tensor({3}, rng, -1.0, 1.0);
    auto fn = [w, b](const Tensor& t) { return sum(sigmoid(linear(t, w, b))); };
    return std::make_pair(std::function<Tensor(const Tensor&)>(fn),
                          uniform_tensor({4, 6}, rng, -1.0, 1.0));
  });
  runner.check("linear/weight", [](Rng& rng) {
    Tensor x = uniform_tensor({4, 6}, rng, -1.0, 1.0);
    Tensor b = uniform_tensor({3}, rng, -1.0, 1.0);
    auto fn = [x, b](const Tensor& t) { return sum(sigmoid(linear(x, t, b))); };
    return std::make_pair(std::function<Tensor(const Tensor&)>(fn),
                          uniform_tensor({3, 6}, rng, -1.0, 1.0));
  });
  runner.check("linear/bias", [](Rng& rng) {
    Tensor x = uniform_tensor({4, 6}, rng, -1.0, 1.0);
    Tensor w = uniform_tensor({3, 6}, rng, -1.0, 1.0);
    auto fn = [x, w](const Tensor& t) { return sum(sigmoid(linear(x, w, t))); };
    return std::make_pair(std::function<Tensor(const Tensor&)>(fn),
                          uniform_tensor({3}, rng, -1.0, 1.0));
  });
  runner.check("activation/sigmoid", [](Rng& rng) {
    auto fn = [](const Tensor& t) { return sum(sigmoid(t)); };
    return std::make_pair(std::function<Tensor(const Tensor&)>(fn),
                          uniform_tensor({10}, rng, -3.0, 3.0));
  });
  runner.check("activation/relu", [](Rng& rng) {
    auto fn = [](const Tensor& t) { return sum(relu(t)); };
    return std::make_pair(std::function<Tensor(const Tensor&)>(fn),
                          nonzero_tensor({10}, rng));
  });
  runner.check("activation/softmax_rows", [](Rng& rng) {
    Tensor v = uniform_tensor({3, 4}, rng, -1.0, 1.0);
    auto fn = [v](const Tensor& t) { return sum(mul(softmax_rows(t), v)); };
    return std::make_pair(std::function<Tensor(const Tensor&)>(fn),
                          uniform_tensor({3, 4}, rng, -2.0, 2.0));
  });
  runner.check("pool/gap", [](Rng& rng) {
    Tensor v = uniform_tensor({2, 3, 1, 1}, rng, -1.0, 1.0);
    auto fn = [v](const Tensor& t) { return sum(mul(gap(t), v)); };
    return std::make_pair(std::function<Tensor(const Tensor&)>(fn),
                          uniform_tensor({2, 3, 3, 3}, rng, -1.0, 1.0));
  });
  runner.check("pool/gmp", [](Rng& rng) {
    Tensor v = uniform_tensor({2, 3, 1, 1}, rng, -1.0, 1.0);
    auto fn = [v](const Tensor& t) { return sum(mul(gmp(t), v)); };
    return std::make_pair(std::function<Tensor(const Tensor&)>(fn),
                          spread_tensor({2, 3, 3, 3}, rng));
  });
  runner.check("pool/channel_avg", [](Rng& rng) {
    Tensor v = uniform_tensor({2, 1, 3, 3}, rng, -1.0, 1.0);
    auto fn = [v](const Tensor& t) { return sum(mul(channel_avg(t), v)); };
    return std::make_pair(std::function<Tensor(const Tensor&)>(fn),
                          uniform_tensor({2, 3, 3, 3}, rng, -1.0, 1.0));
  });
  runner.check("pool/channel_max", [](Rng& rng) {
    Tensor v = uniform_tensor({2, 1, 3, 3}, rng, -1.0, 1.0);
    auto fn = [v](const Tensor& t) { return sum(mul(channel_max(t), v)); };
    return std::make_pair(std::function<Tensor(const Tensor&)>(fn),
                          spread_tensor({2, 3, 3, 3}, rng));
  });
  runner.check("broadcast_mul/feature", [](Rng& rng) {
    Tensor m = uniform_tensor({2, 3, 1, 1}, rng, -1.0, 1.0);
    auto fn = [m](const Tensor& t) { return sum(broadcast_mul(t, m)); };
    return std::make_pair(std::function<Tensor(const Tensor&)>(fn),
                          uniform_tensor({2, 3, 2, 2}, rng, -1.0, 1.0));
  });
  runner.check("broadcast_mul/channel_map", [](Rng& rng) {
    Tensor f = uniform_tensor({2, 3, 2, 2}, rng, -1.0, 1.0);
    auto fn = [f](const Tensor& t) { return sum(broadcast_mul(f, t)); };
    return std::make_pair(std::function<Tensor(const Tensor&)>(fn),
                          uniform_tensor({2, 3, 1, 1}, rng, -1.0, 1.0));
  });
  runner.check("broadcast_mul/spatial_map", [](Rng& rng) {
    Tensor f = uniform_tensor({2, 3, 2, 2}, rng, -1.0, 1.0);
    auto fn = [f](const Tensor& t) { return sum(broadcast_mul(f, t)); };
    return std::make_pair(std::function<Tensor(const Tensor&)>(fn),
                          uniform_tensor({2, 1, 2, 2}, rng, -1.0, 1.0));
  });

  // --- attention stages ---------------------------------------------------
  runner.check("attention/channel/input", [](Rng& rng) {
    ChannelAttentionParams cp = ChannelAttentionParams::init(4, 2, rng);
    Tensor v = uniform_tensor({1, 4, 3, 3}, rng, -1.0, 1.0);
    auto fn = [cp, v](const Tensor& t) {
      return sum(mul(channel_attention(t, cp).attended, v));
    };
    return std::make_pair(std::function<Tensor(const Tensor&)>(fn),
                          uniform_tensor({1, 4, 3, 3}, rng, -1.0, 1.0));
  });
  runner.check("attention/channel/mlp", [](Rng& rng) {
    ChannelAttentionParams cp = ChannelAttentionParams::init(4, 2, rng);
    Tensor f = uniform_tensor({1, 4, 3, 3}, rng, -1.0, 1.0);
    Tensor v = uniform_tensor({1, 4, 3, 3}, rng, -1.0, 1.0);
    auto fn = [cp, f, v](const Tensor& t) {
      ChannelAttentionParams probe = cp;
      probe.w1 = t;
      return sum(mul(channel_attention(f, probe).attended, v));
    };
    return std::make_pair(std::function<Tensor(const Tensor&)>(fn), cp.w1);
  });
  runner.check("attention/spatial/kernel", [](Rng& rng) {
    SpatialAttentionParams sp = SpatialAttentionParams::init(3, rng);
    Tensor f = uniform_tensor({1, 4, 3, 3}, rng, -1.0, 1.0);
    Tensor v = uniform_tensor({1, 4, 3, 3}, rng, -1.0, 1.0);
    auto fn = [sp, f, v](const Tensor& t) {
      SpatialAttentionParams probe = sp;
      probe.kernel = t;
      return sum(mul(spatial_attention(f, probe).attended, v));
    };
    return std::make_pair(std::function<Tensor(const Tensor&)>(fn), sp.kernel);
  });
  runner.check("attention/cbam/input", [](Rng& rng) {
    ChannelAttentionParams cp = ChannelAttentionParams::init(4, 2, rng);
    SpatialAttentionParams sp = SpatialAttentionParams::init(3, rng);
    Tensor v = uniform_tensor({1, 4, 3, 3}, rng, -1.0, 1.0);
    auto fn = [cp, sp, v](const Tensor& t) {
      return sum(mul(cbam(t, cp, sp), v));
    };
    return std::make_pair(std::function<Tensor(const Tensor&)>(fn),
                          uniform_tensor({1, 4, 3, 3}, rng, -1.0, 1.0));
  });

  // --- losses ---------------------------------------------------------------
  runner.check("loss/cross_entropy", [](Rng& rng) {
    std::vector<int> labels{2, 0, 1};
    auto fn = [labels](const Tensor& t) { return cross_entropy(t, labels); };
    return std::make_pair(std::function<Tensor(const Tensor&)>(fn),
                          uniform_tensor({3, 4}, rng, -2.0, 2.0));
  });
  runner.check("loss/triplet_chain", [](Rng& rng) {
    const std::vector<int> labels{0, 0, 1, 1, 2, 2};
    auto fn = [labels](const Tensor& emb) {
      return soft_margin_triplet(batch_hard(pairwise_distances(emb), labels));
    };
    // redraw until hardest pairs are clear of runner-up ties
    while (true) {
      Tensor emb = uniform_tensor({6, 3}, rng, -1.0, 1.0);
      Tensor d = pairwise_distances(emb);
      HardPairs pairs = batch_hard(d, labels);
      bool safe = true;
      for (std::size_t q = 0; q < 6 && safe; ++q) {
        for (std::size_t j = 0; j < 6; ++j) {
          if (j == q || j == pairs.positive_index[q] ||
              j == pairs.negative_index[q]) {
            continue;
          }
          const double v = d.at(q * 6 + j);
          if (labels[j] == labels[q] && std::abs(v - pairs.hp.at(q)) < 1e-3) safe = false;
          if (labels[j] != labels[q] && std::abs(v - pairs.hn.at(q)) < 1e-3) safe = false;
        }
      }
      if (safe) {
        return std::make_pair(std::function<Tensor(const Tensor&)>(fn), emb);
      }
    }
  });

  // --- full model -----------------------------------------------------------
  const Config base_cfg = suite_config();

  runner.check("net/drop_branch/fixed_mask", [&base_cfg](Rng& rng) {
    Config cfg = base_cfg;
    Rng init(rng.next_u64());
    ModelParams params = ModelParams::init(cfg, 2, init);
    Tensor source = uniform_tensor({2, params.feat_channels(), 4, 2}, rng, 0.0, 1.0);
    Tensor v = uniform_tensor({2, cfg.dim_embed}, rng, -1.0, 1.0);
    auto fn = [params, cfg, source, v](const Tensor& t) {
      BranchOutput out = branch_forward(t, Branch::Drop, params, cfg, &source);
      return sum(mul(out.embedding, v));
    };
    return std::make_pair(std::function<Tensor(const Tensor&)>(fn),
                          spread_tensor({2, params.feat_channels(), 4, 2}, rng));
  });

  runner.check("net/train_forward/attention", [&base_cfg](Rng& rng) {
    Config cfg = base_cfg;
    cfg.branches = BranchSet::GlobalAttention;
    while (true) {
      Rng init(rng.next_u64());
      ModelParams params = ModelParams::init(cfg, 2, init);
      Batch batch = suite_batch(cfg, rng);
      {
        NoGradGuard guard;
        Tensor featmap = backbone_forward(batch.images, params);
        if (!hard_pairs_clear(
                branch_forward(featmap, Branch::Global, params, cfg).embedding,
                batch.labels, 1e-2) ||
            !hard_pairs_clear(
                branch_forward(featmap, Branch::Attention, params, cfg).embedding,
                batch.labels, 1e-2)) {
          continue;
        }
      }
      auto fn = [params, cfg, batch](const Tensor& t) {
        ModelParams probe = params;
        probe.backbone[0].weight = t;
        Rng step(1);
        return train_forward(batch, probe, cfg, step).loss;
      };
      return std::make_pair(std::function<Tensor(const Tensor&)>(fn),
                            params.backbone[0].weight);
    }
  });

  runner.check("net/train_forward/drop", [&base_cfg](Rng& rng) {
    Config cfg = base_cfg;
    cfg.branches = BranchSet::GlobalDrop;
    cfg.alpha = 1.0;  // all-ones mask keeps finite differences off the threshold
    while (true) {
      Rng init(rng.next_u64());
      ModelParams params = ModelParams::init(cfg, 2, init);
      Batch batch = suite_batch(cfg, rng);
      {
        // the probe below only moves the global embedding; its hard pairs
        // must be clear of ties
        NoGradGuard guard;
        Tensor featmap = backbone_forward(batch.images, params);
        if (!hard_pairs_clear(
                branch_forward(featmap, Branch::Global, params, cfg).embedding,
                batch.labels, 1e-2)) {
          continue;
        }
      }
      auto fn = [params, cfg, batch](const Tensor& t) {
        ModelParams probe = params;
        probe.g_fc2_w = t;
        Rng step(1);
        return train_forward(batch, probe, cfg, step).loss;
      };
      return std::make_pair(std::function<Tensor(const Tensor&)>(fn),
                            params.g_fc2_w);
    }
  });

  GradSuiteResult result;
  result.tolerance = tolerance;
  result.entries = runner.take();
  for (const GradCheckEntry& entry : result.entries) {
    result.max_error = std::max(result.max_error, entry.max_error);
  }
  return result;
}

}  // namespace stdb
