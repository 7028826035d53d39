#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "kgrl/decoders.hpp"
#include "kgrl/distiller.hpp"
#include "kgrl/encoder.hpp"
#include "kgrl/eval.hpp"
#include "kgrl/gradcheck.hpp"
#include "kgrl/graph.hpp"
#include "kgrl/param.hpp"
#include "kgrl/rng.hpp"
#include "kgrl/synth.hpp"

namespace kgrl {

enum class DistillKind { kAuto, kInfoNCE, kL2, kNone };

inline const char* to_string(DistillKind k) {
  switch (k) {
    case DistillKind::kAuto: return "auto";
    case DistillKind::kInfoNCE: return "infonce";
    case DistillKind::kL2: return "l2";
    case DistillKind::kNone: return "none";
  }
  return "?";
}

inline DistillKind distill_kind_from(const std::string& s) {
  if (s == "auto") return DistillKind::kAuto;
  if (s == "infonce") return DistillKind::kInfoNCE;
  if (s == "l2") return DistillKind::kL2;
  if (s == "none") return DistillKind::kNone;
  throw ParamError("unknown distill objective: " + s);
}

struct AlignConfig {
  real margin = 1.5;      // lambda
  real neg_weight = 0.1;  // alpha
  int negatives_per_pos = 10;
  int batch_size = 0;  // 0 = full batch
  int epochs = 50;
  real learning_rate = 1e-3;
  real distill_weight = 1.0;
  int distill_sample = 64;  // |X|
  DistillKind distill = DistillKind::kAuto;
  EncoderMode mode = EncoderMode::kDan;
  int layers = 4;
  int dim = 256;
  real dropout = 0.2;
  bool inverse_edges = true;
  real val_fraction = 0.1;
  int patience = 5;  // 0 = no early stopping
  std::uint64_t seed = 0;

  void validate() const {
    if (!(margin > 0.0)) throw ParamError("margin must be > 0");
    if (neg_weight < 0.0) throw ParamError("negative weight must be >= 0");
  }
};

struct PredictConfig {
  DecoderKind decoder = DecoderKind::kTransE;
  int negatives = 64;  // candidate objects per query batch
  int batch_size = 512;
  int epochs = 50;
  real learning_rate = 1e-3;
  real distill_weight = 0.001;
  int distill_sample = 256;
  DistillKind distill = DistillKind::kAuto;
  EncoderMode mode = EncoderMode::kDan;
  int layers = 2;
  int dim = 256;
  real dropout = 0.2;
  bool inverse_edges = true;
  bool filtered_eval = true;
  real val_fraction = 0.05;
  int patience = 5;
  std::uint64_t seed = 0;
};

// Margin-based contrastive alignment loss:
// sum_pos ||g_i - g_j|| + alpha * sum_neg [lambda - ||g_i' - g_j'||]_+
inline Tensor alignment_loss(const Tensor& g, const std::vector<std::pair<int, int>>& pos,
                             const std::vector<std::pair<int, int>>& neg, real margin,
                             real neg_weight) {
  std::vector<int> pi, pj;
  for (auto [i, j] : pos) {
    pi.push_back(i);
    pj.push_back(j);
  }
  Tensor loss = sum_all(rowwise_l2norm(sub(gather_rows(g, pi), gather_rows(g, pj))));
  if (!neg.empty()) {
    std::vector<int> ni, nj;
    for (auto [i, j] : neg) {
      ni.push_back(i);
      nj.push_back(j);
    }
    Tensor dist = rowwise_l2norm(sub(gather_rows(g, ni), gather_rows(g, nj)));
    Tensor hinge = relu(add_scalar(scale(dist, -1.0), margin));
    loss = add(loss, scale(sum_all(hinge), neg_weight));
  }
  return loss;
}

// For each positive pair, k corrupted pairs replacing one side (chosen by a
// fair coin) with a uniform entity from that side's pool. Never echoes a
// known positive.
inline std::vector<std::pair<int, int>> sample_negative_pairs(
    const std::vector<std::pair<int, int>>& pos, int k, std::uint64_t seed,
    const std::vector<int>& pool1, const std::vector<int>& pool2,
    const std::set<std::pair<int, int>>& known_positives) {
  std::vector<std::pair<int, int>> out;
  if (k <= 0 || pos.empty()) return out;
  if (pool1.empty() || pool2.empty()) throw ParamError("empty entity pool for negative sampling");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<size_t> p1(0, pool1.size() - 1), p2(0, pool2.size() - 1);
  out.reserve(pos.size() * static_cast<size_t>(k));
  for (auto [i, j] : pos) {
    for (int n = 0; n < k; ++n) {
      for (int attempt = 0; attempt < 64; ++attempt) {
        std::pair<int, int> cand = coin(rng) == 0 ? std::pair{pool1[p1(rng)], j} : std::pair{i, pool2[p2(rng)]};
        if (cand != std::pair{i, j} && !known_positives.count(cand)) {
          out.push_back(cand);
          break;
        }
      }
    }
  }
  return out;
}

struct HistoryRow {
  int epoch = 0;
  real task_loss = 0, distill_loss = 0, mi_bound = 0, val_h1 = 0, val_mrr = 0;
};
using TrainHistory = std::vector<HistoryRow>;

inline void write_history_csv(std::ostream& out, const TrainHistory& hist) {
  out << "epoch,task_loss,distill_loss,mi_bound,val_h1,val_mrr\n";
  out << std::setprecision(12);
  for (const auto& r : hist)
    out << r.epoch << ',' << r.task_loss << ',' << r.distill_loss << ',' << r.mi_bound << ','
        << r.val_h1 << ',' << r.val_mrr << '\n';
}

namespace train_detail {

// `teacher` is the raw-embedding table feeding the density function's second
// argument. In training it is the staged table (live buffer); gradient
// checks pass a frozen snapshot, since the stop-gradient makes the copies
// constants of the step.
inline Tensor distill_term(DistillKind kind, const LayerOutputs& outs, const Tensor& g_final,
                           const NegativeBatch& nb, const Tensor& w_f, const Tensor& b_f,
                           const Tensor& teacher) {
  switch (kind) {
    case DistillKind::kAuto:
      return auto_distill_loss(g_final, teacher, nb, w_f, b_f);
    case DistillKind::kInfoNCE:
      return info_nce_distill_loss(g_final, teacher, nb, w_f, b_f);
    case DistillKind::kL2:
      // Last-layer output, whose width matches the raw embeddings.
      return l2_align_loss(outs.layer(outs.K), teacher, nb.anchors);
    case DistillKind::kNone:
      return Tensor::scalar(0.0);
  }
  throw ParamError("bad distill kind");
}

inline std::vector<int> batch_entities(const std::vector<std::pair<int, int>>& pairs) {
  std::vector<int> out;
  std::set<int> seen;
  for (auto [i, j] : pairs) {
    if (seen.insert(i).second) out.push_back(i);
    if (seen.insert(j).second) out.push_back(j);
  }
  return out;
}

inline void check_finite(real v, const std::string& where) {
  if (!std::isfinite(v)) throw DivergenceError("non-finite loss at " + where);
}

}  // namespace train_detail

// One alignment objective evaluation: task loss + weighted distill term,
// with all parameter leaves exposed for gradient collection. Shared by the
// training loop and the finite-difference checks.
struct AlignmentBatch {
  std::vector<std::pair<int, int>> pos;
  std::vector<std::pair<int, int>> neg;
  NegativeBatch distill;
};

struct StepLosses {
  Tensor total, task, distill;
  std::vector<Tensor> leaves;
};

inline StepLosses alignment_step(Tape& tape, const EncoderParams& enc, const DensityParams& dens,
                                 const NeighborIndex& idx, const AlignmentBatch& batch,
                                 const AlignConfig& cfg, const ForwardOptions& opt,
                                 const Tensor* frozen_teacher = nullptr) {
  StagedEncoder staged = stage_encoder(tape, enc);
  Tensor w_f = dens.W_f.stage(tape);
  Tensor b_f = dens.b_f.stage(tape);
  LayerOutputs outs = encoder_forward(staged, idx, cfg.mode, opt);
  Tensor g = final_output(outs, TaskKind::kAlignment);

  StepLosses out;
  out.task = alignment_loss(g, batch.pos, batch.neg, cfg.margin, cfg.neg_weight);
  out.distill = train_detail::distill_term(cfg.distill, outs, g, batch.distill, w_f, b_f,
                                           frozen_teacher ? *frozen_teacher : staged.E);
  out.total = cfg.distill == DistillKind::kNone
                  ? out.task
                  : add(out.task, scale(out.distill, cfg.distill_weight));
  out.leaves = staged.leaves();
  out.leaves.push_back(w_f);
  out.leaves.push_back(b_f);
  return out;
}

struct AlignmentTrainResult {
  EncoderParams encoder;
  DensityParams density;
  TrainHistory history;
  KnowledgeGraph merged;
  int side1_entities = 0;
  std::vector<std::pair<int, int>> train_pairs;  // merged ids
  std::vector<std::pair<int, int>> val_pairs;    // merged ids
  std::vector<std::pair<int, int>> test_pairs;   // merged ids
  NeighborIndex index;
};

// Joint contrastive + distillation training over the merged graph.
// Deterministic for a fixed seed; non-finite losses abort with a diagnostic.
inline AlignmentTrainResult train_alignment(const KnowledgeGraph& g1, const KnowledgeGraph& g2,
                                            const AlignmentPairs& pairs, const AlignConfig& cfg) {
  cfg.validate();
  AlignmentTrainResult res;
  res.merged = merge_graphs(g1, g2);
  res.side1_entities = g1.num_entities();
  const int n1 = g1.num_entities();
  for (auto [i, j] : pairs.train) res.train_pairs.emplace_back(i, j + n1);
  for (auto [i, j] : pairs.test) res.test_pairs.emplace_back(i, j + n1);

  // Validation slice carved from the training pairs.
  if (cfg.val_fraction > 0.0 && res.train_pairs.size() >= 2) {
    std::mt19937_64 vrng(fanout_seed(cfg.seed, "valsplit"));
    std::shuffle(res.train_pairs.begin(), res.train_pairs.end(), vrng);
    const auto n_val = std::min(res.train_pairs.size() - 1,
                                static_cast<size_t>(std::ceil(cfg.val_fraction * res.train_pairs.size())));
    res.val_pairs.assign(res.train_pairs.end() - static_cast<std::ptrdiff_t>(n_val), res.train_pairs.end());
    res.train_pairs.resize(res.train_pairs.size() - n_val);
  }

  res.index = build_neighbor_index(res.merged, index_mode_for(cfg.mode), cfg.inverse_edges);

  std::mt19937_64 init_rng(fanout_seed(cfg.seed, "init"));
  res.encoder = EncoderParams::init(res.merged.num_entities(), res.index.extended_relations(),
                                    cfg.dim, cfg.layers, init_rng);
  res.density = DensityParams::init(final_width(cfg.layers, cfg.dim, TaskKind::kAlignment), cfg.dim,
                                    init_rng);

  ParamSet params = res.encoder.collect();
  for (auto& p : res.density.collect()) params.push_back(p);
  AdamOptimizer opt(cfg.learning_rate);

  std::vector<int> pool1, pool2;
  for (int i = 0; i < n1; ++i) pool1.push_back(i);
  for (int i = n1; i < res.merged.num_entities(); ++i) pool2.push_back(i);
  std::set<std::pair<int, int>> known(res.train_pairs.begin(), res.train_pairs.end());
  known.insert(res.val_pairs.begin(), res.val_pairs.end());

  const auto& val_slice = res.val_pairs.empty() ? res.train_pairs : res.val_pairs;
  real best_h1 = -1.0;
  int since_best = 0;
  ParamSet best_snapshot;

  std::uint64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::pair<int, int>> order = res.train_pairs;
    std::shuffle(order.begin(), order.end(), std::mt19937_64(fanout_seed(cfg.seed, "shuffle", epoch)));
    const size_t bs = cfg.batch_size <= 0 ? order.size() : static_cast<size_t>(cfg.batch_size);

    real task_sum = 0, distill_sum = 0, xsize_sum = 0;
    size_t batches = 0;
    for (size_t start = 0; start < order.size(); start += bs, ++batches, ++step) {
      AlignmentBatch batch;
      batch.pos.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                       order.begin() + static_cast<std::ptrdiff_t>(std::min(start + bs, order.size())));
      batch.neg = sample_negative_pairs(batch.pos, cfg.negatives_per_pos,
                                        fanout_seed(cfg.seed, "negpairs", step), pool1, pool2, known);
      batch.distill = sample_negative_batch(train_detail::batch_entities(batch.pos),
                                            res.merged.num_entities(), cfg.distill_sample,
                                            fanout_seed(cfg.seed, "distillneg", step));
      ForwardOptions fwd;
      fwd.training = true;
      fwd.dropout_rate = cfg.dropout;
      fwd.seed = fanout_seed(cfg.seed, "dropout");
      fwd.step = step;

      Tape tape;
      StepLosses losses = alignment_step(tape, res.encoder, res.density, res.index, batch, cfg, fwd);
      train_detail::check_finite(losses.total.item(),
                                 "epoch " + std::to_string(epoch) + " step " + std::to_string(step));
      tape.backward(losses.total);
      std::vector<Buffer> grads;
      grads.reserve(losses.leaves.size());
      for (const Tensor& leaf : losses.leaves) grads.push_back(tape.grad(leaf));
      opt.step(params, grads);

      task_sum += losses.task.item();
      distill_sum += losses.distill.item();
      xsize_sum += static_cast<real>(batch.distill.sample_size());
    }

    HistoryRow row;
    row.epoch = epoch;
    const real nb = static_cast<real>(std::max<size_t>(batches, 1));
    row.task_loss = task_sum / nb;
    row.distill_loss = distill_sum / nb;
    row.mi_bound = (cfg.distill == DistillKind::kAuto || cfg.distill == DistillKind::kInfoNCE)
                       ? mi_lower_bound_estimate(row.distill_loss,
                                                 std::max<std::int64_t>(1, std::llround(xsize_sum / nb)))
                       : 0.0;

    LayerOutputs eval_outs = encoder_forward_eval(res.encoder, res.index, cfg.mode);
    Tensor g_eval = final_output(eval_outs, TaskKind::kAlignment);
    RankingReport val = rank_alignment(g_eval, g_eval, val_slice);
    row.val_h1 = val.h1;
    row.val_mrr = val.mrr;
    res.history.push_back(row);

    if (cfg.patience > 0) {
      if (val.h1 > best_h1) {
        best_h1 = val.h1;
        since_best = 0;
        best_snapshot.clear();
        for (const auto& p : params)
          best_snapshot.push_back({p.name, p.rows, p.cols, std::make_shared<Buffer>(*p.value)});
      } else if (++since_best >= cfg.patience) {
        break;
      }
    }
  }
  if (cfg.patience > 0 && !best_snapshot.empty())
    for (size_t i = 0; i < params.size(); ++i) *params[i].value = *best_snapshot[i].value;
  return res;
}

// Finite-difference check of the full training objective: a 4-layer DAN
// forward, the auto-distiller and the alignment loss on a small random
// graph, dropout off and teacher copies frozen at the step's values.
inline GradCheckReport full_model_gradcheck(std::uint64_t seed, real tol = 1e-4) {
  KnowledgeGraph base = generate_synthetic_kg(9, 3, 3.0, fanout_seed(seed, "fullcheck-kg"));
  auto [copy, pairs] = make_aligned_copy(base, fanout_seed(seed, "fullcheck-copy"), 0.0);
  KnowledgeGraph merged = merge_graphs(base, copy);  // 18 entities
  NeighborIndex idx = build_neighbor_index(merged, AggregationMode::kDecentralized, true);

  AlignConfig cfg;
  cfg.dim = 4;
  cfg.layers = 4;
  cfg.dropout = 0.0;
  cfg.distill = DistillKind::kAuto;

  std::mt19937_64 rng(fanout_seed(seed, "fullcheck-init"));
  EncoderParams enc = EncoderParams::init(merged.num_entities(), idx.extended_relations(), cfg.dim,
                                          cfg.layers, rng);
  DensityParams dens = DensityParams::init(final_width(cfg.layers, cfg.dim, TaskKind::kAlignment),
                                           cfg.dim, rng);

  AlignmentBatch batch;
  const int n1 = base.num_entities();
  for (size_t i = 0; i < 4 && i < pairs.test.size(); ++i)
    batch.pos.emplace_back(pairs.test[i].first, pairs.test[i].second + n1);
  std::vector<int> pool1, pool2;
  for (int i = 0; i < n1; ++i) pool1.push_back(i);
  for (int i = n1; i < merged.num_entities(); ++i) pool2.push_back(i);
  std::set<std::pair<int, int>> known(batch.pos.begin(), batch.pos.end());
  batch.neg = sample_negative_pairs(batch.pos, 2, fanout_seed(seed, "fullcheck-neg"), pool1, pool2, known);
  batch.distill = sample_negative_batch(train_detail::batch_entities(batch.pos),
                                        merged.num_entities(), 8, fanout_seed(seed, "fullcheck-x"));

  Tensor teacher = Tensor::from(enc.E.rows, enc.E.cols, *enc.E.value);
  ParamSet ps = enc.collect();
  for (auto& p : dens.collect()) ps.push_back(p);
  ForwardOptions fwd;
  return check_gradients("dan4+distiller+alignment", ps, [&](Tape& t) {
    StepLosses losses = alignment_step(t, enc, dens, idx, batch, cfg, fwd, &teacher);
    return GradProbe{losses.total, losses.leaves};
  }, tol);
}

struct PredictionTrainResult {
  EncoderParams encoder;
  DensityParams density;
  NamedParam decoder_relations;  // 2 nR x D, forward then inverse rows
  TrainHistory history;
  NeighborIndex index;
  std::vector<Triple> train_triples;
  std::vector<Triple> val_triples;
};

// Decoder-based entity prediction with the distiller as a regularizer.
inline PredictionTrainResult train_prediction(const KnowledgeGraph& g, const PredictConfig& cfg) {
  if (cfg.decoder == DecoderKind::kComplEx && cfg.dim % 2 != 0)
    throw ParamError("complex decoder requires an even dimension");
  PredictionTrainResult res;

  std::vector<Triple> triples = g.triples;
  if (cfg.val_fraction > 0.0 && triples.size() >= 20) {
    std::shuffle(triples.begin(), triples.end(), std::mt19937_64(fanout_seed(cfg.seed, "valsplit")));
    const auto n_val = static_cast<size_t>(std::ceil(cfg.val_fraction * triples.size()));
    res.val_triples.assign(triples.end() - static_cast<std::ptrdiff_t>(n_val), triples.end());
    triples.resize(triples.size() - n_val);
  }
  res.train_triples = triples;

  KnowledgeGraph train_graph = g;
  train_graph.triples = triples;
  res.index = build_neighbor_index(train_graph, index_mode_for(cfg.mode), cfg.inverse_edges);

  std::mt19937_64 init_rng(fanout_seed(cfg.seed, "init"));
  res.encoder = EncoderParams::init(g.num_entities(), res.index.extended_relations(), cfg.dim,
                                    cfg.layers, init_rng);
  res.density = DensityParams::init(cfg.dim, cfg.dim, init_rng);
  res.decoder_relations = NamedParam::xavier("decoder.R", 2 * g.num_relations(), cfg.dim, init_rng);

  ParamSet params = res.encoder.collect();
  for (auto& p : res.density.collect()) params.push_back(p);
  params.push_back(res.decoder_relations);
  AdamOptimizer opt(cfg.learning_rate);

  real best_h1 = -1.0;
  int since_best = 0;
  ParamSet best_snapshot;

  std::uint64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<Triple> order = triples;
    std::shuffle(order.begin(), order.end(), std::mt19937_64(fanout_seed(cfg.seed, "shuffle", epoch)));
    const size_t bs = cfg.batch_size <= 0 ? order.size() : static_cast<size_t>(cfg.batch_size);

    real task_sum = 0, distill_sum = 0, xsize_sum = 0;
    size_t batches = 0;
    for (size_t start = 0; start < order.size(); start += bs, ++batches, ++step) {
      const auto end = std::min(start + bs, order.size());
      Tape tape;
      StagedEncoder staged = stage_encoder(tape, res.encoder);
      Tensor w_f = res.density.W_f.stage(tape);
      Tensor b_f = res.density.b_f.stage(tape);
      Tensor dec_rel = res.decoder_relations.stage(tape);

      ForwardOptions fwd;
      fwd.training = true;
      fwd.dropout_rate = cfg.dropout;
      fwd.seed = fanout_seed(cfg.seed, "dropout");
      fwd.step = step;
      LayerOutputs outs = encoder_forward(staged, res.index, cfg.mode, fwd);
      Tensor g_out = final_output(outs, TaskKind::kPrediction);

      // Queries: (s, r, ?o) plus (o, r_inv, ?s).
      std::vector<int> q_entity, q_rel, truth;
      for (size_t t = start; t < end; ++t) {
        q_entity.push_back(order[t].s);
        q_rel.push_back(order[t].r);
        truth.push_back(order[t].o);
      }
      for (size_t t = start; t < end; ++t) {
        q_entity.push_back(order[t].o);
        q_rel.push_back(order[t].r + g.num_relations());
        truth.push_back(order[t].s);
      }
      NegativeBatch cands = sample_negative_batch(truth, g.num_entities(), cfg.negatives,
                                                  fanout_seed(cfg.seed, "prednegs", step));
      Tensor scores = decoder_score_matrix(cfg.decoder, gather_rows(g_out, q_entity),
                                           gather_rows(dec_rel, q_rel), gather_rows(g_out, cands.candidates));
      Tensor task = prediction_loss(scores, cands.anchor_col);

      std::vector<int> anchors;
      std::set<int> seen;
      for (size_t t = start; t < end; ++t) {
        if (seen.insert(order[t].s).second) anchors.push_back(order[t].s);
        if (seen.insert(order[t].o).second) anchors.push_back(order[t].o);
      }
      NegativeBatch nb = sample_negative_batch(anchors, g.num_entities(), cfg.distill_sample,
                                               fanout_seed(cfg.seed, "distillneg", step));
      Tensor distill = train_detail::distill_term(cfg.distill, outs, g_out, nb, w_f, b_f, staged.E);
      Tensor total = cfg.distill == DistillKind::kNone ? task : add(task, scale(distill, cfg.distill_weight));

      train_detail::check_finite(total.item(),
                                 "epoch " + std::to_string(epoch) + " step " + std::to_string(step));
      tape.backward(total);
      std::vector<Tensor> leaves = staged.leaves();
      leaves.push_back(w_f);
      leaves.push_back(b_f);
      leaves.push_back(dec_rel);
      std::vector<Buffer> grads;
      grads.reserve(leaves.size());
      for (const Tensor& leaf : leaves) grads.push_back(tape.grad(leaf));
      opt.step(params, grads);

      task_sum += task.item();
      distill_sum += distill.item();
      xsize_sum += static_cast<real>(nb.sample_size());
    }

    HistoryRow row;
    row.epoch = epoch;
    const real nbatches = static_cast<real>(std::max<size_t>(batches, 1));
    row.task_loss = task_sum / nbatches;
    row.distill_loss = distill_sum / nbatches;
    row.mi_bound = (cfg.distill == DistillKind::kAuto || cfg.distill == DistillKind::kInfoNCE)
                       ? mi_lower_bound_estimate(row.distill_loss,
                                                 std::max<std::int64_t>(1, std::llround(xsize_sum / nbatches)))
                       : 0.0;

    const auto& val_slice = res.val_triples.empty() ? res.train_triples : res.val_triples;
    LayerOutputs eval_outs = encoder_forward_eval(res.encoder, res.index, cfg.mode);
    Tensor g_eval = final_output(eval_outs, TaskKind::kPrediction);
    RankingReport val = rank_prediction(g_eval, cfg.decoder, res.decoder_relations, val_slice,
                                        g.num_relations(), false, g.triples);
    row.val_h1 = val.h1;
    row.val_mrr = val.mrr;
    res.history.push_back(row);

    if (cfg.patience > 0) {
      if (val.h1 > best_h1) {
        best_h1 = val.h1;
        since_best = 0;
        best_snapshot.clear();
        for (const auto& p : params)
          best_snapshot.push_back({p.name, p.rows, p.cols, std::make_shared<Buffer>(*p.value)});
      } else if (++since_best >= cfg.patience) {
        break;
      }
    }
  }
  if (cfg.patience > 0 && !best_snapshot.empty())
    for (size_t i = 0; i < params.size(); ++i) *params[i].value = *best_snapshot[i].value;
  return res;
}

}  // namespace kgrl
