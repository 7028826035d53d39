#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_set>
#include <vector>

#include "kgrl/param.hpp"
#include "kgrl/rng.hpp"
#include "kgrl/tensor.hpp"

namespace kgrl {

// Bilinear compatibility between an encoder output and a raw-embedding copy.
struct DensityParams {
  NamedParam W_f;  // D_g x O
  NamedParam b_f;  // 1 x 1

  static DensityParams init(std::int64_t out_width, std::int64_t in_width, std::mt19937_64& rng) {
    return {NamedParam::xavier("density.Wf", out_width, in_width, rng),
            NamedParam::zeros("density.bf", 1, 1)};
  }
  ParamSet collect() const { return {W_f, b_f}; }
};

// Log-density matrix g W_f e_hat^T + b_f. Kept in log space; the exp of the
// density function cancels into the softmax.
inline Tensor density(const Tensor& g, const Tensor& e_hat, const Tensor& w_f, const Tensor& b_f) {
  if (g.cols() != w_f.rows() || w_f.cols() != e_hat.cols())
    throw ShapeError("density: width mismatch between outputs, W_f and candidates");
  return add_bias(matmul(matmul(g, w_f), transpose(e_hat)), b_f);
}

// Mean over rows of -log softmax(logdens)[anchor]. Non-negative by
// construction (log-sum-exp dominates any single column).
inline Tensor info_nce_loss(const Tensor& logdens, const std::vector<int>& anchor_cols) {
  Tensor lse = row_logsumexp(logdens);
  Tensor anchors = select_per_row(logdens, anchor_cols);
  return mean_all(sub(lse, anchors));
}

// Shared negative-candidate pool for one step: the (deduplicated) batch
// anchors double as each other's negatives, topped up with uniform samples
// from the vocabulary, drawn without replacement and excluding all anchors.
struct NegativeBatch {
  std::vector<int> anchors;     // entity ids, one per batch row
  std::vector<int> candidates;  // entity ids scored against every row
  std::vector<int> anchor_col;  // column of each row's own anchor

  std::int64_t sample_size() const { return static_cast<std::int64_t>(candidates.size()); }
};

inline NegativeBatch sample_negative_batch(const std::vector<int>& anchors, int vocabulary,
                                           int sample_size, std::uint64_t seed) {
  if (vocabulary < 1) throw ParamError("empty candidate vocabulary");
  NegativeBatch nb;
  nb.anchors = anchors;
  std::unordered_set<int> in_pool;
  for (int a : anchors)
    if (in_pool.insert(a).second) nb.candidates.push_back(a);

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, vocabulary - 1);
  const int want = std::max<int>(sample_size, static_cast<int>(nb.candidates.size()));
  int guard = 0;
  while (static_cast<int>(nb.candidates.size()) < want &&
         static_cast<int>(nb.candidates.size()) < vocabulary) {
    int c = pick(rng);
    if (in_pool.insert(c).second) nb.candidates.push_back(c);
    if (++guard > 100 * want + 1000) break;  // tiny vocabularies
  }
  nb.anchor_col.reserve(anchors.size());
  for (int a : anchors) {
    auto it = std::find(nb.candidates.begin(), nb.candidates.end(), a);
    nb.anchor_col.push_back(static_cast<int>(it - nb.candidates.begin()));
  }
  return nb;
}

// InfoNCE with the second density argument behind a stop gradient: the raw
// embedding acts as a teacher copy and improves only through its
// neighbor-participation gradients in the encoder.
inline Tensor auto_distill_loss(const Tensor& g_full, const Tensor& embeddings,
                                const NegativeBatch& batch, const Tensor& w_f, const Tensor& b_f) {
  Tensor g = gather_rows(g_full, batch.anchors);
  Tensor e_hat = detach(gather_rows(embeddings, batch.candidates));
  return info_nce_loss(density(g, e_hat, w_f, b_f), batch.anchor_col);
}

// Ablation: plain InfoNCE jointly optimizing both density arguments.
inline Tensor info_nce_distill_loss(const Tensor& g_full, const Tensor& embeddings,
                                    const NegativeBatch& batch, const Tensor& w_f, const Tensor& b_f) {
  Tensor g = gather_rows(g_full, batch.anchors);
  Tensor e = gather_rows(embeddings, batch.candidates);
  return info_nce_loss(density(g, e, w_f, b_f), batch.anchor_col);
}

// Ablation: mean squared L2 distance between outputs and detached copies.
// Requires D_g == O, i.e. prediction-style final outputs.
inline Tensor l2_align_loss(const Tensor& g_full, const Tensor& embeddings,
                            const std::vector<int>& anchors) {
  Tensor g = gather_rows(g_full, anchors);
  Tensor e_hat = detach(gather_rows(embeddings, anchors));
  if (g.cols() != e_hat.cols()) throw ShapeError("l2_align_loss: output and embedding widths differ");
  Tensor diff = sub(g, e_hat);
  return mean_all(mul(diff, diff));
}

// Diagnostic InfoNCE bound: log |X| - loss, always <= log |X|.
inline real mi_lower_bound_estimate(real loss, std::int64_t sample_size) {
  return std::log(static_cast<real>(sample_size)) - loss;
}

}  // namespace kgrl
