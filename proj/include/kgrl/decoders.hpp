#pragma once

#include <span>
#include <string>
#include <vector>

#include "kgrl/distiller.hpp"
#include "kgrl/param.hpp"
#include "kgrl/tensor.hpp"

namespace kgrl {

enum class DecoderKind { kTransE, kDistMult, kComplEx };

inline const char* to_string(DecoderKind k) {
  switch (k) {
    case DecoderKind::kTransE: return "transe";
    case DecoderKind::kDistMult: return "distmult";
    case DecoderKind::kComplEx: return "complex";
  }
  return "?";
}

inline DecoderKind decoder_kind_from(const std::string& s) {
  if (s == "transe") return DecoderKind::kTransE;
  if (s == "distmult") return DecoderKind::kDistMult;
  if (s == "complex") return DecoderKind::kComplEx;
  throw ParamError("unknown decoder: " + s);
}

// Scalar scores on plain vectors; higher is better. These are the reference
// forms used for ranking and as oracles for the batched tensor paths.

// -||g_s + r - g_o||
inline real transe_score(std::span<const real> g_s, std::span<const real> r_emb,
                         std::span<const real> g_o) {
  real acc = 0.0;
  for (size_t i = 0; i < g_s.size(); ++i) {
    const real d = g_s[i] + r_emb[i] - g_o[i];
    acc += d * d;
  }
  return -std::sqrt(acc);
}

// sum_d g_s[d] * r[d] * g_o[d]; symmetric in subject and object.
inline real distmult_score(std::span<const real> g_s, std::span<const real> r_emb,
                           std::span<const real> g_o) {
  real acc = 0.0;
  for (size_t i = 0; i < g_s.size(); ++i) acc += g_s[i] * r_emb[i] * g_o[i];
  return acc;
}

// Re<g_s, r, conj(g_o)> with the first/second halves as real/imaginary parts.
inline real complex_score(std::span<const real> g_s, std::span<const real> r_emb,
                          std::span<const real> g_o) {
  const size_t h = g_s.size() / 2;
  if (g_s.size() % 2 != 0) throw ShapeError("complex_score: width must be even");
  real acc = 0.0;
  for (size_t i = 0; i < h; ++i) {
    const real sr = g_s[i], si = g_s[i + h];
    const real rr = r_emb[i], ri = r_emb[i + h];
    const real or_ = g_o[i], oi = g_o[i + h];
    acc += (sr * rr - si * ri) * or_ + (sr * ri + si * rr) * oi;
  }
  return acc;
}

inline real decoder_score(DecoderKind kind, std::span<const real> g_s, std::span<const real> r_emb,
                          std::span<const real> g_o) {
  switch (kind) {
    case DecoderKind::kTransE: return transe_score(g_s, r_emb, g_o);
    case DecoderKind::kDistMult: return distmult_score(g_s, r_emb, g_o);
    case DecoderKind::kComplEx: return complex_score(g_s, r_emb, g_o);
  }
  throw ParamError("bad decoder kind");
}

// Batched tensor forms: rows are queries (subject x relation), columns the
// shared candidate objects. Used in training where gradients are needed.
inline Tensor decoder_score_matrix(DecoderKind kind, const Tensor& g_s, const Tensor& r_rows,
                                   const Tensor& g_cands) {
  switch (kind) {
    case DecoderKind::kTransE:
      return scale(pairwise_l2(add(g_s, r_rows), g_cands), -1.0);
    case DecoderKind::kDistMult:
      return matmul(mul(g_s, r_rows), transpose(g_cands));
    case DecoderKind::kComplEx: {
      const std::int64_t d = g_s.cols();
      if (d % 2 != 0) throw ShapeError("complex decoder: width must be even");
      // Split halves via constant selector matrices.
      const std::int64_t h = d / 2;
      Buffer re(static_cast<size_t>(d * h), 0.0), im(static_cast<size_t>(d * h), 0.0);
      for (std::int64_t i = 0; i < h; ++i) {
        re[i * h + i] = 1.0;
        im[(i + h) * h + i] = 1.0;
      }
      Tensor sel_re = Tensor::from(d, h, re), sel_im = Tensor::from(d, h, im);
      Tensor sr = matmul(g_s, sel_re), si = matmul(g_s, sel_im);
      Tensor rr = matmul(r_rows, sel_re), ri = matmul(r_rows, sel_im);
      Tensor cross_re = sub(mul(sr, rr), mul(si, ri));
      Tensor cross_im = add(mul(sr, ri), mul(si, rr));
      return matmul(concat_cols(cross_re, cross_im), transpose(g_cands));
    }
  }
  throw ParamError("bad decoder kind");
}

// Softmax cross-entropy over one true candidate plus sampled negatives,
// mirroring the InfoNCE machinery.
inline Tensor prediction_loss(const Tensor& scores, const std::vector<int>& true_cols) {
  return info_nce_loss(scores, true_cols);
}

}  // namespace kgrl
