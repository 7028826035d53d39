#pragma once

#include <random>
#include <string>
#include <vector>

#include "kgrl/graph.hpp"
#include "kgrl/param.hpp"
#include "kgrl/rng.hpp"
#include "kgrl/tensor.hpp"

namespace kgrl {

// dan:    neighbor-context queries over a self-loop-free index
// gat:    self queries over a self-loop index
// centrl: dan layers over a self-loop index
enum class EncoderMode { kDan, kGat, kCentRL };

enum class TaskKind { kAlignment, kPrediction };

inline AggregationMode index_mode_for(EncoderMode mode) {
  return mode == EncoderMode::kDan ? AggregationMode::kDecentralized : AggregationMode::kCentralized;
}

inline const char* to_string(EncoderMode m) {
  switch (m) {
    case EncoderMode::kDan: return "dan";
    case EncoderMode::kGat: return "gat";
    case EncoderMode::kCentRL: return "centrl";
  }
  return "?";
}

inline EncoderMode encoder_mode_from(const std::string& s) {
  if (s == "dan") return EncoderMode::kDan;
  if (s == "gat") return EncoderMode::kGat;
  if (s == "centrl") return EncoderMode::kCentRL;
  throw ParamError("unknown encoder mode: " + s);
}

// All layers share width D = O so the three-way residual type-checks.
struct EncoderLayerParams {
  NamedParam W, W1, W2, a, ln_gain, ln_bias;
};

struct EncoderParams {
  int dim = 0;
  int layers = 0;
  NamedParam E;   // |E| x D entity embeddings
  NamedParam R;   // (2 nR + 1) x D relation embeddings, incl. inverse and self rows
  NamedParam W0;  // mean-aggregator transform
  std::vector<EncoderLayerParams> layer;

  static EncoderParams init(int n_entities, int n_extended_relations, int dim, int layers,
                            std::mt19937_64& rng) {
    if (layers < 1) throw ParamError("layer count must be >= 1");
    EncoderParams p;
    p.dim = dim;
    p.layers = layers;
    p.E = NamedParam::xavier("E", n_entities, dim, rng);
    p.R = NamedParam::xavier("R", n_extended_relations, dim, rng);
    p.W0 = NamedParam::xavier("W0", dim, dim, rng);
    for (int k = 1; k <= layers; ++k) {
      const std::string pre = "L" + std::to_string(k) + ".";
      EncoderLayerParams lp;
      lp.W = NamedParam::xavier(pre + "W", dim, dim, rng);
      lp.W1 = NamedParam::xavier(pre + "W1", dim, dim, rng);
      lp.W2 = NamedParam::xavier(pre + "W2", dim, dim, rng);
      lp.a = NamedParam::xavier(pre + "a", 2 * dim, 1, rng);
      lp.ln_gain = NamedParam::ones(pre + "ln_gain", 1, dim);
      lp.ln_bias = NamedParam::zeros(pre + "ln_bias", 1, dim);
      p.layer.push_back(std::move(lp));
    }
    return p;
  }

  ParamSet collect() const {
    ParamSet ps{E, R, W0};
    for (const auto& lp : layer)
      for (const auto* np : {&lp.W, &lp.W1, &lp.W2, &lp.a, &lp.ln_gain, &lp.ln_bias}) ps.push_back(*np);
    return ps;
  }

  static EncoderParams from_param_set(const ParamSet& ps, int dim, int layers) {
    EncoderParams p;
    p.dim = dim;
    p.layers = layers;
    auto grab = [&](const std::string& name) -> NamedParam {
      for (const auto& np : ps)
        if (np.name == name) return np;
      throw ParamError("checkpoint missing parameter: " + name);
    };
    p.E = grab("E");
    p.R = grab("R");
    p.W0 = grab("W0");
    for (int k = 1; k <= layers; ++k) {
      const std::string pre = "L" + std::to_string(k) + ".";
      p.layer.push_back({grab(pre + "W"), grab(pre + "W1"), grab(pre + "W2"), grab(pre + "a"),
                         grab(pre + "ln_gain"), grab(pre + "ln_bias")});
    }
    return p;
  }
};

// Staged (on-tape) tensors for one attention layer.
struct AttentionLayerTensors {
  Tensor W, W1, W2, a, ln_gain, ln_bias;
};

struct ForwardOptions {
  bool training = false;
  real dropout_rate = 0.2;
  real leaky_slope = 0.2;
  std::uint64_t seed = 0;  // root for dropout masks
  std::uint64_t step = 0;  // mixed into mask labels
  bool use_relations = true;
  bool strict_degenerate = false;  // throw instead of zero-filling empty neighborhoods
};

// d^{-1}, d^0, ..., d^K. layer(-1) is exactly the raw embedding table.
struct LayerOutputs {
  std::vector<Tensor> d;
  std::vector<Tensor> attention;  // per attention layer, one weight per edge row
  int K = 0;
  std::vector<int> degenerate;  // entities with empty neighbor lists

  const Tensor& layer(int k) const {
    if (k < -1 || k > K) throw IndexError("layer index outside [-1, K]");
    return d[static_cast<size_t>(k + 1)];
  }
};

// d0[i] = (1/|N_i|) sum_{j in N_i} W0 e_j. Entities with no neighbors fall
// back to the zero vector.
inline Tensor mean_aggregate(const Tensor& embeddings, const NeighborIndex& idx, const Tensor& w0) {
  Tensor transformed = matmul(embeddings, w0);
  Tensor rows = gather_rows(transformed, idx.row_neighbor);
  return segment_mean(rows, idx.segments());
}

// message_row += relation embedding of the row's relation.
inline Tensor relation_combine(const Tensor& messages, const std::vector<int>& rel_ids,
                               const Tensor& relations) {
  return add(messages, gather_rows(relations, rel_ids));
}

// Eq-style three-way residual: mean-aggregator output + previous layer +
// current layer.
inline Tensor residual_combine(const Tensor& g0, const Tensor& g_km1, const Tensor& g_k) {
  if (g0.rows() != g_km1.rows() || g0.cols() != g_km1.cols() || g0.rows() != g_k.rows() ||
      g0.cols() != g_k.cols())
    throw ShapeError("residual_combine: all three inputs must share shape");
  return add(add(g0, g_km1), g_k);
}

namespace encoder_detail {

inline void check_degenerate(const NeighborIndex& idx, bool strict) {
  if (!strict) return;
  for (int i = 0; i < idx.num_entities; ++i)
    if (idx.degree(i) == 0)
      throw DegenerateNeighborhoodError("entity " + std::to_string(i) + " has no neighbors");
}

}  // namespace encoder_detail

// One decentralized attention layer. Queries come from layer k-1 of the
// target entity, keys and values from layer k-2 of each neighbor; the
// attention weight is softmaxed over each entity's neighbor rows.
inline Tensor dan_layer(const Tensor& d_prev, const Tensor& d_prev2, const NeighborIndex& idx,
                        const AttentionLayerTensors& lt, const Tensor* relations = nullptr,
                        real slope = 0.2, bool strict = false, Tensor* attention_out = nullptr) {
  encoder_detail::check_degenerate(idx, strict);
  Tensor q_table = matmul(d_prev, lt.W1);
  Tensor k_table = matmul(d_prev2, lt.W2);
  Tensor v_table = matmul(d_prev2, lt.W);
  Tensor q_rows = gather_rows(q_table, idx.row_target);
  Tensor k_rows = gather_rows(k_table, idx.row_neighbor);
  Tensor scores = leaky_relu(matmul(concat_cols(q_rows, k_rows), lt.a), slope);
  Tensor att = segment_softmax(scores, idx.segments());
  if (attention_out) *attention_out = att;
  Tensor v_rows = gather_rows(v_table, idx.row_neighbor);
  if (relations) v_rows = relation_combine(v_rows, idx.row_relation, *relations);
  return segment_sum(mul_rowwise(v_rows, att), idx.segments());
}

// Vanilla GAT layer: the entity's own representation is the query, and the
// index is expected to carry self-loops.
inline Tensor gat_layer(const Tensor& d_prev, const NeighborIndex& idx,
                        const AttentionLayerTensors& lt, const Tensor* relations = nullptr,
                        real slope = 0.2, bool strict = false, Tensor* attention_out = nullptr) {
  encoder_detail::check_degenerate(idx, strict);
  Tensor q_table = matmul(d_prev, lt.W1);
  Tensor k_table = matmul(d_prev, lt.W2);
  Tensor v_table = matmul(d_prev, lt.W);
  Tensor q_rows = gather_rows(q_table, idx.row_target);
  Tensor k_rows = gather_rows(k_table, idx.row_neighbor);
  Tensor scores = leaky_relu(matmul(concat_cols(q_rows, k_rows), lt.a), slope);
  Tensor att = segment_softmax(scores, idx.segments());
  if (attention_out) *attention_out = att;
  Tensor v_rows = gather_rows(v_table, idx.row_neighbor);
  if (relations) v_rows = relation_combine(v_rows, idx.row_relation, *relations);
  return segment_sum(mul_rowwise(v_rows, att), idx.segments());
}

// Encoder parameters staged for one forward pass, either as tape leaves
// (training) or plain constants (evaluation).
struct StagedEncoder {
  Tensor E, R, W0;
  std::vector<AttentionLayerTensors> layers;

  // Leaves in EncoderParams::collect() order, for gradient collection.
  std::vector<Tensor> leaves() const {
    std::vector<Tensor> out{E, R, W0};
    for (const auto& lt : layers)
      for (const Tensor* t : {&lt.W, &lt.W1, &lt.W2, &lt.a, &lt.ln_gain, &lt.ln_bias}) out.push_back(*t);
    return out;
  }
};

inline StagedEncoder stage_encoder(Tape& tape, const EncoderParams& p) {
  StagedEncoder s{p.E.stage(tape), p.R.stage(tape), p.W0.stage(tape), {}};
  for (const auto& lp : p.layer)
    s.layers.push_back({lp.W.stage(tape), lp.W1.stage(tape), lp.W2.stage(tape), lp.a.stage(tape),
                        lp.ln_gain.stage(tape), lp.ln_bias.stage(tape)});
  return s;
}

// Tape-free view for evaluation: no gradients, no recording.
inline StagedEncoder constant_view(const EncoderParams& p) {
  StagedEncoder s{p.E.constant(), p.R.constant(), p.W0.constant(), {}};
  for (const auto& lp : p.layer)
    s.layers.push_back({lp.W.constant(), lp.W1.constant(), lp.W2.constant(), lp.a.constant(),
                        lp.ln_gain.constant(), lp.ln_bias.constant()});
  return s;
}

// Full stack: raw embeddings, mean-aggregator bootstrap, then K attention
// layers each followed by dropout, layer norm and the three-way residual.
inline LayerOutputs encoder_forward(const StagedEncoder& enc, const NeighborIndex& idx,
                                    EncoderMode mode, const ForwardOptions& opt = {}) {
  if (enc.layers.empty()) throw ParamError("encoder needs K >= 1");
  encoder_detail::check_degenerate(idx, opt.strict_degenerate);

  LayerOutputs outs;
  outs.K = static_cast<int>(enc.layers.size());
  outs.degenerate = idx.degenerate_entities();
  outs.d.push_back(enc.E);
  Tensor d0 = mean_aggregate(enc.E, idx, enc.W0);
  outs.d.push_back(d0);

  const bool drop = opt.training && opt.dropout_rate > 0.0;
  for (int k = 1; k <= outs.K; ++k) {
    const AttentionLayerTensors& lt = enc.layers[static_cast<size_t>(k - 1)];
    const Tensor* rel = opt.use_relations ? &enc.R : nullptr;
    Tensor raw, att;
    if (mode == EncoderMode::kGat) {
      Tensor in = outs.layer(k - 1);
      if (drop) in = dropout(in, opt.dropout_rate, fanout_seed(opt.seed, "drop-in", opt.step * 64 + k), true);
      raw = gat_layer(in, idx, lt, rel, opt.leaky_slope, false, &att);
    } else {
      Tensor q = outs.layer(k - 1);
      Tensor kv = outs.layer(k - 2);
      if (drop) {
        q = dropout(q, opt.dropout_rate, fanout_seed(opt.seed, "drop-q", opt.step * 64 + k), true);
        kv = dropout(kv, opt.dropout_rate, fanout_seed(opt.seed, "drop-kv", opt.step * 64 + k), true);
      }
      raw = dan_layer(q, kv, idx, lt, rel, opt.leaky_slope, false, &att);
    }
    outs.attention.push_back(att);
    if (drop) raw = dropout(raw, opt.dropout_rate, fanout_seed(opt.seed, "drop-out", opt.step * 64 + k), true);
    Tensor normed = layer_norm(raw, lt.ln_gain, lt.ln_bias);
    outs.d.push_back(residual_combine(d0, outs.layer(k - 1), normed));
  }
  return outs;
}

inline LayerOutputs encoder_forward(Tape& tape, const EncoderParams& params, const NeighborIndex& idx,
                                    EncoderMode mode, const ForwardOptions& opt = {}) {
  return encoder_forward(stage_encoder(tape, params), idx, mode, opt);
}

// Evaluation-mode forward: dropout off, nothing recorded.
inline LayerOutputs encoder_forward_eval(const EncoderParams& params, const NeighborIndex& idx,
                                         EncoderMode mode, bool use_relations = true) {
  ForwardOptions opt;
  opt.training = false;
  opt.use_relations = use_relations;
  return encoder_forward(constant_view(params), idx, mode, opt);
}

// Alignment concatenates every layer's output; prediction keeps the last.
inline Tensor final_output(const LayerOutputs& outs, TaskKind task) {
  if (outs.K < 1) throw ParamError("forward incomplete");
  if (task == TaskKind::kPrediction) return outs.layer(outs.K);
  Tensor g = outs.layer(1);
  for (int k = 2; k <= outs.K; ++k) g = concat_cols(g, outs.layer(k));
  return g;
}

inline std::int64_t final_width(int layers, int dim, TaskKind task) {
  return task == TaskKind::kAlignment ? static_cast<std::int64_t>(layers) * dim : dim;
}

}  // namespace kgrl
