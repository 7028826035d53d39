#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "kgrl/decoders.hpp"
#include "kgrl/encoder.hpp"
#include "kgrl/graph.hpp"

namespace kgrl {

struct RankingReport {
  std::vector<std::int64_t> ranks;
  std::size_t queries = 0;
  real h1 = 0, h3 = 0, h10 = 0, mr = 0, mrr = 0;
};

// MRR = mean(1/rank), MR = mean(rank), Hits@k = mean(rank <= k).
inline RankingReport make_report(std::vector<std::int64_t> ranks) {
  RankingReport rep;
  rep.ranks = std::move(ranks);
  rep.queries = rep.ranks.size();
  if (rep.queries == 0) throw EvalError("ranking report over zero queries");
  for (std::int64_t r : rep.ranks) {
    if (r < 1) throw EvalError("rank below 1");
    rep.h1 += r <= 1;
    rep.h3 += r <= 3;
    rep.h10 += r <= 10;
    rep.mr += static_cast<real>(r);
    rep.mrr += 1.0 / static_cast<real>(r);
  }
  const real n = static_cast<real>(rep.queries);
  rep.h1 /= n;
  rep.h3 /= n;
  rep.h10 /= n;
  rep.mr /= n;
  rep.mrr /= n;
  return rep;
}

namespace eval_detail {

inline real l2_distance(std::span<const real> a, std::span<const real> b) {
  real acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const real d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

inline std::span<const real> row(const Tensor& t, int r) {
  if (r < 0 || r >= t.rows()) throw EvalError("entity is missing an output row");
  return {t.values().data() + static_cast<size_t>(r) * t.cols(), static_cast<size_t>(t.cols())};
}

}  // namespace eval_detail

// Rank of the true counterpart among the candidates by ascending L2
// distance; ties break by ascending candidate id, so reports are exactly
// reproducible.
inline std::int64_t rank_by_distance(const Tensor& queries_from, int query_id, const Tensor& cands_from,
                                     const std::vector<int>& candidates, int true_id) {
  const auto q = eval_detail::row(queries_from, query_id);
  const real d_true = eval_detail::l2_distance(q, eval_detail::row(cands_from, true_id));
  std::int64_t rank = 1;
  for (int c : candidates) {
    if (c == true_id) continue;
    const real d = eval_detail::l2_distance(q, eval_detail::row(cands_from, c));
    if (d < d_true || (d == d_true && c < true_id)) ++rank;
  }
  return rank;
}

// Candidate pool = test-set entities on the opposite side; both ranking
// directions pooled into one report.
inline RankingReport rank_alignment(const Tensor& g1_out, const Tensor& g2_out,
                                    const std::vector<std::pair<int, int>>& test_pairs) {
  if (test_pairs.empty()) throw EvalError("no test pairs");
  std::vector<int> cands1, cands2;
  for (auto [i, j] : test_pairs) {
    cands1.push_back(i);
    cands2.push_back(j);
  }
  std::sort(cands1.begin(), cands1.end());
  std::sort(cands2.begin(), cands2.end());

  std::vector<std::int64_t> ranks;
  ranks.reserve(2 * test_pairs.size());
  for (auto [i, j] : test_pairs) ranks.push_back(rank_by_distance(g1_out, i, g2_out, cands2, j));
  for (auto [i, j] : test_pairs) ranks.push_back(rank_by_distance(g2_out, j, g1_out, cands1, i));
  return make_report(std::move(ranks));
}

// Object queries plus subject queries via the paired inverse relation.
// Filtered mode removes other known-true candidates before ranking; the
// decoder relation table holds 2 nR rows (forward then inverse).
inline RankingReport rank_prediction(const Tensor& g_out, DecoderKind decoder,
                                     const NamedParam& decoder_relations,
                                     const std::vector<Triple>& test_triples, int num_base_relations,
                                     bool filtered, const std::vector<Triple>& known_triples) {
  if (test_triples.empty()) throw EvalError("no test triples");
  std::set<Triple> known(known_triples.begin(), known_triples.end());
  const int n = static_cast<int>(g_out.rows());
  const std::int64_t d = g_out.cols();
  auto rel_row = [&](int r) {
    return std::span<const real>{decoder_relations.value->data() + static_cast<size_t>(r) * d,
                                 static_cast<size_t>(d)};
  };

  std::vector<std::int64_t> ranks;
  ranks.reserve(2 * test_triples.size());
  for (const Triple& t : test_triples) {
    // (s, r, ?): rank the true object.
    {
      const auto gs = eval_detail::row(g_out, t.s);
      const auto r = rel_row(t.r);
      const real true_score = decoder_score(decoder, gs, r, eval_detail::row(g_out, t.o));
      std::int64_t rank = 1;
      for (int c = 0; c < n; ++c) {
        if (c == t.o) continue;
        if (filtered && known.count({t.s, t.r, c})) continue;
        const real sc = decoder_score(decoder, gs, r, eval_detail::row(g_out, c));
        if (sc > true_score || (sc == true_score && c < t.o)) ++rank;
      }
      ranks.push_back(rank);
    }
    // (?, r, o) as (o, r_inv, ?): rank the true subject.
    {
      const auto go = eval_detail::row(g_out, t.o);
      const auto r = rel_row(t.r + num_base_relations);
      const real true_score = decoder_score(decoder, go, r, eval_detail::row(g_out, t.s));
      std::int64_t rank = 1;
      for (int c = 0; c < n; ++c) {
        if (c == t.s) continue;
        if (filtered && known.count({c, t.r, t.o})) continue;
        const real sc = decoder_score(decoder, go, r, eval_detail::row(g_out, c));
        if (sc > true_score || (sc == true_score && c < t.s)) ++rank;
      }
      ranks.push_back(rank);
    }
  }
  return make_report(std::move(ranks));
}

// One report per layer output (input, mean aggregator, each attention
// layer) plus one for the concatenated representation.
inline std::vector<std::pair<std::string, RankingReport>> per_layer_eval(
    const LayerOutputs& outs, const std::vector<std::pair<int, int>>& test_pairs) {
  std::vector<std::pair<std::string, RankingReport>> reports;
  for (int k = -1; k <= outs.K; ++k) {
    const std::string tag = k == -1 ? "input" : (k == 0 ? "mean_agg" : "L" + std::to_string(k));
    reports.emplace_back(tag, rank_alignment(outs.layer(k), outs.layer(k), test_pairs));
  }
  Tensor concat = final_output(outs, TaskKind::kAlignment);
  reports.emplace_back("concat", rank_alignment(concat, concat, test_pairs));
  return reports;
}

inline void write_report_csv(std::ostream& out, const RankingReport& rep, const std::string& tag = "") {
  const std::string prefix = tag.empty() ? "" : tag + ".";
  out << prefix << "h1," << rep.h1 << '\n'
      << prefix << "h3," << rep.h3 << '\n'
      << prefix << "h10," << rep.h10 << '\n'
      << prefix << "mr," << rep.mr << '\n'
      << prefix << "mrr," << rep.mrr << '\n'
      << prefix << "queries," << rep.queries << '\n';
}

inline void print_report(std::ostream& out, const RankingReport& rep, const std::string& title) {
  out << title << ": H@1 " << rep.h1 << "  H@3 " << rep.h3 << "  H@10 " << rep.h10 << "  MR " << rep.mr
      << "  MRR " << rep.mrr << "  (" << rep.queries << " queries)\n";
}

}  // namespace kgrl
