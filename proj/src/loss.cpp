#include "stdb/loss.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace stdb {

namespace {

constexpr double kDistanceEps = 1e-12;

inline double softplus_stable(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace

PKBatchSpec::PKBatchSpec(std::size_t p_, std::size_t n_per_) : p(p_), n_per(n_per_) {
  if (p < 2 || n_per < 2) {
    throw ContractError("pk batch: need P >= 2 and N_per >= 2");
  }
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                     Reduction reduction) {
  if (logits.rank() != 2) throw DimError("cross_entropy: logits must be N x K");
  const std::size_t n = logits.extent(0), k = logits.extent(1);
  if (labels.size() != n) {
    throw ContractError("cross_entropy: " + std::to_string(labels.size()) +
                        " labels for " + std::to_string(n) + " rows");
  }
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw ContractError("cross_entropy: label " + std::to_string(label) +
                          " outside [0, " + std::to_string(k) + ")");
    }
  }
  const auto z = logits.data();
  std::vector<double> softmax(n * k);
  double acc = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    double mx = z[r * k];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, z[r * k + j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      softmax[r * k + j] = std::exp(z[r * k + j] - mx);
      denom += softmax[r * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) softmax[r * k + j] /= denom;
    // -log p[label] = logsumexp - z[label]
    acc += std::log(denom) - (z[r * k + static_cast<std::size_t>(labels[r])] - mx);
  }
  const double scale_out =
      reduction == Reduction::Mean ? 1.0 / static_cast<double>(n) : 1.0;

  auto li = logits.impl();
  return make_op(
      "cross_entropy", {logits}, {1}, {acc * scale_out},
      [li, labels, n, k, scale_out, softmax = std::move(softmax)](
          std::span<const double> g, GradSink& sink) {
        if (!sink.wants(li)) return;
        auto gl = sink.grad(li);
        const double up = g[0] * scale_out;
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t j = 0; j < k; ++j) {
            const double onehot =
                j == static_cast<std::size_t>(labels[r]) ? 1.0 : 0.0;
            gl[r * k + j] += up * (softmax[r * k + j] - onehot);
          }
        }
      });
}

Tensor pairwise_distances(const Tensor& embeddings) {
  if (embeddings.rank() != 2) {
    throw DimError("pairwise_distances: embeddings must be N x D");
  }
  const std::size_t n = embeddings.extent(0), d = embeddings.extent(1);
  const auto e = embeddings.data();
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double sq = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double delta = e[i * d + c] - e[j * d + c];
        sq += delta * delta;
      }
      // exact zeros stay exact; epsilon only guards the gradient of
      // near-coincident pairs
      const double v = sq == 0.0 ? 0.0 : std::sqrt(sq + kDistanceEps);
      dist[i * n + j] = v;
      dist[j * n + i] = v;
    }
  }
  auto ei = embeddings.impl();
  std::vector<double> saved = dist;
  return make_op(
      "pairwise_distances", {embeddings}, {n, n}, std::move(dist),
      [ei, n, d, saved = std::move(saved)](std::span<const double> g,
                                           GradSink& sink) {
        if (!sink.wants(ei)) return;
        auto ge = sink.grad(ei);
        const auto e = std::span<const double>(ei->data);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            if (saved[i * n + j] == 0.0) continue;  // diagonal and coincident pairs
            const double gd = g[i * n + j];
            if (gd == 0.0) continue;
            const double inv = 1.0 / saved[i * n + j];
            for (std::size_t c = 0; c < d; ++c) {
              const double delta = e[i * d + c] - e[j * d + c];
              ge[i * d + c] += gd * delta * inv;
              ge[j * d + c] -= gd * delta * inv;
            }
          }
        }
      });
}

namespace {

// Differentiable row gather: out[q] = D[q, index[q]].
Tensor gather_row_entries(const char* op, const Tensor& distances,
                          std::vector<std::size_t> index) {
  const std::size_t n = distances.extent(0);
  std::vector<double> out(n);
  for (std::size_t q = 0; q < n; ++q) out[q] = distances.at(q * n + index[q]);
  auto di = distances.impl();
  return make_op(op, {distances}, {n}, std::move(out),
                 [di, n, index = std::move(index)](std::span<const double> g,
                                                   GradSink& sink) {
                   if (!sink.wants(di)) return;
                   auto gd = sink.grad(di);
                   for (std::size_t q = 0; q < n; ++q) gd[q * n + index[q]] += g[q];
                 });
}

}  // namespace

HardPairs batch_hard(const Tensor& distances, const std::vector<int>& labels) {
  if (distances.rank() != 2 || distances.extent(0) != distances.extent(1)) {
    throw DimError("batch_hard: distance matrix must be square");
  }
  const std::size_t n = distances.extent(0);
  if (labels.size() != n) {
    throw ContractError("batch_hard: label count does not match matrix");
  }
  std::map<int, std::size_t> counts;
  for (int label : labels) ++counts[label];
  if (counts.size() < 2) {
    throw ContractError("batch_hard: batch holds a single class");
  }
  for (const auto& [label, count] : counts) {
    if (count < 2) {
      throw ContractError("batch_hard: label " + std::to_string(label) +
                          " has a single sample");
    }
  }

  const auto dist = distances.data();
  HardPairs pairs;
  pairs.positive_index.resize(n);
  pairs.negative_index.resize(n);
  for (std::size_t q = 0; q < n; ++q) {
    double hardest_pos = -1.0;
    double hardest_neg = 0.0;
    std::size_t pos_idx = n, neg_idx = n;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = dist[q * n + j];
      if (labels[j] == labels[q]) {  // self included; D(q,q)=0 never wins
        if (v > hardest_pos) {
          hardest_pos = v;
          pos_idx = j;
        }
      } else if (neg_idx == n || v < hardest_neg) {
        hardest_neg = v;
        neg_idx = j;
      }
    }
    pairs.positive_index[q] = pos_idx;
    pairs.negative_index[q] = neg_idx;
  }
  pairs.hp = gather_row_entries("batch_hard_hp", distances, pairs.positive_index);
  pairs.hn = gather_row_entries("batch_hard_hn", distances, pairs.negative_index);
  return pairs;
}

Tensor soft_margin_triplet(const Tensor& hp, const Tensor& hn) {
  if (hp.shape() != hn.shape()) {
    throw DimError("soft_margin_triplet: hp and hn must have equal length");
  }
  const std::size_t n = hp.size();
  const auto p = hp.data(), q = hn.data();
  double acc = 0.0;
  std::vector<double> gate(n);  // sigmoid of the margin, reused in backward
  for (std::size_t i = 0; i < n; ++i) {
    const double margin = p[i] - q[i];
    acc += softplus_stable(margin);
    gate[i] = margin >= 0.0 ? 1.0 / (1.0 + std::exp(-margin))
                            : std::exp(margin) / (1.0 + std::exp(margin));
  }
  auto pi = hp.impl(), qi = hn.impl();
  return make_op("soft_margin_triplet", {hp, hn}, {1}, {acc},
                 [pi, qi, gate = std::move(gate)](std::span<const double> g,
                                                  GradSink& sink) {
                   if (sink.wants(pi)) {
                     auto gp = sink.grad(pi);
                     for (std::size_t i = 0; i < gp.size(); ++i)
                       gp[i] += g[0] * gate[i];
                   }
                   if (sink.wants(qi)) {
                     auto gq = sink.grad(qi);
                     for (std::size_t i = 0; i < gq.size(); ++i)
                       gq[i] -= g[0] * gate[i];
                   }
                 });
}

Tensor soft_margin_triplet(const HardPairs& pairs) {
  return soft_margin_triplet(pairs.hp, pairs.hn);
}

Tensor total_loss(const Tensor& label_loss, const Tensor& metric_loss) {
  return add(label_loss, metric_loss);
}

std::vector<std::size_t> pk_sample(const std::vector<int>& labels,
                                   const PKBatchSpec& spec, Rng& rng) {
  if (spec.p < 2 || spec.n_per < 2) {
    throw ContractError("pk_sample: need P >= 2 and N_per >= 2");
  }
  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    by_label[labels[i]].push_back(i);
  }
  if (by_label.size() < spec.p) {
    throw ContractError("pk_sample: dataset has " +
                        std::to_string(by_label.size()) +
                        " identities, batch needs " + std::to_string(spec.p));
  }
  std::vector<int> identities;
  identities.reserve(by_label.size());
  for (const auto& [label, indices] : by_label) identities.push_back(label);
  rng.shuffle(identities);

  std::vector<std::size_t> batch;
  batch.reserve(spec.batch_size());
  for (std::size_t i = 0; i < spec.p; ++i) {
    const std::vector<std::size_t>& pool = by_label[identities[i]];
    if (pool.size() >= spec.n_per) {
      std::vector<std::size_t> picks = pool;
      rng.shuffle(picks);
      batch.insert(batch.end(), picks.begin(), picks.begin() + spec.n_per);
    } else {
      for (std::size_t j = 0; j < spec.n_per; ++j) {
        batch.push_back(pool[rng.uniform_index(pool.size())]);
      }
    }
  }
  return batch;
}

}  // namespace stdb
