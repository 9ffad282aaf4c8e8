#pragma once

#include <cstddef>
#include <vector>

#include "stdb/rng.hpp"
#include "stdb/tensor.hpp"

namespace stdb {

enum class Reduction { Mean, Sum };

// Batches of P identities with N_per instances each; both must be >= 2 so
// every anchor has a positive and a negative.
struct PKBatchSpec {
  std::size_t p = 8;
  std::size_t n_per = 4;

  PKBatchSpec() = default;
  PKBatchSpec(std::size_t p_, std::size_t n_per_);

  std::size_t batch_size() const { return p * n_per; }
};

// -mean_n log softmax(logits)[n, label_n], computed through log-sum-exp.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                     Reduction reduction = Reduction::Mean);

// Euclidean distance matrix, symmetric with an exactly-zero diagonal. A tiny
// epsilon inside the square root keeps the gradient finite at coincident
// points off the diagonal.
Tensor pairwise_distances(const Tensor& embeddings);

// Per-anchor hardest positive (max distance, same label, self included) and
// hardest negative (min distance, different label). Ties resolve to the
// lowest index. Gradients route through the selected matrix entries.
struct HardPairs {
  Tensor hp;  // length N
  Tensor hn;  // length N
  std::vector<std::size_t> positive_index;
  std::vector<std::size_t> negative_index;
};

HardPairs batch_hard(const Tensor& distances, const std::vector<int>& labels);

// Sum over anchors of softplus(hp - hn), with the overflow-stable identity
// softplus(x) = max(x, 0) + log1p(exp(-|x|)).
Tensor soft_margin_triplet(const Tensor& hp, const Tensor& hn);
Tensor soft_margin_triplet(const HardPairs& pairs);

// L = L_lp + L_ml, unweighted.
Tensor total_loss(const Tensor& label_loss, const Tensor& metric_loss);

// Samples P distinct identities with N_per instances each. Identities with
// fewer than N_per images are resampled with replacement. Deterministic for
// a given rng state.
std::vector<std::size_t> pk_sample(const std::vector<int>& labels,
                                   const PKBatchSpec& spec, Rng& rng);

}  // namespace stdb
