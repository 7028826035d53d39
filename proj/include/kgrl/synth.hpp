#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "kgrl/graph.hpp"
#include "kgrl/rng.hpp"

namespace kgrl {

// Reproducible random multigraph without self-loop triples. Mean degree
// (counting both endpoints) targets avg_degree, so the triple count is
// n * avg_degree / 2. skew > 0 draws endpoints from a Zipf-like
// distribution, giving the long-tail degree profile typical of real KGs.
inline KnowledgeGraph generate_synthetic_kg(int n_entities, int n_relations, real avg_degree,
                                            std::uint64_t seed, real skew = 0.0) {
  if (n_entities < 1 || n_relations < 1) throw ParamError("entity and relation counts must be >= 1");
  if (avg_degree < 0.0) throw ParamError("avg_degree must be non-negative");
  KnowledgeGraph g;
  for (int i = 0; i < n_entities; ++i) g.intern_entity("e" + std::to_string(i));
  for (int r = 0; r < n_relations; ++r) g.intern_relation("r" + std::to_string(r));
  if (n_entities == 1) return g;  // no non-self-loop triple exists

  std::mt19937_64 rng(fanout_seed(seed, "synth-kg"));
  const auto n_triples = static_cast<std::int64_t>(std::llround(avg_degree * n_entities / 2.0));

  std::vector<real> weights(n_entities, 1.0);
  if (skew > 0.0)
    for (int i = 0; i < n_entities; ++i) weights[i] = 1.0 / std::pow(static_cast<real>(i + 1), skew);
  std::discrete_distribution<int> pick_entity(weights.begin(), weights.end());
  std::uniform_int_distribution<int> pick_relation(0, n_relations - 1);

  for (std::int64_t t = 0; t < n_triples; ++t) {
    int s = pick_entity(rng), o = pick_entity(rng);
    while (o == s) o = pick_entity(rng);
    g.triples.push_back({s, pick_relation(rng), o});
  }
  return g;
}

// Independently drops each triple with probability rate. Entities and
// relations are kept even if they lose all their edges.
inline KnowledgeGraph drop_edges(const KnowledgeGraph& g, real rate, std::uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0) throw ParamError("edge dropout must be in [0,1)");
  KnowledgeGraph out = g;
  if (rate == 0.0) return out;
  out.triples.clear();
  std::mt19937_64 rng(fanout_seed(seed, "edge-drop"));
  std::uniform_real_distribution<real> unif(0.0, 1.0);
  for (const Triple& t : g.triples)
    if (unif(rng) >= rate) out.triples.push_back(t);
  return out;
}

// Isomorphic copy with a permuted, renamed entity vocabulary and optional
// edge dropout on the copy. The returned pairs are the ground-truth
// bijection (id in g, id in copy), all tagged as test; callers carve their
// own training seed pairs.
inline std::pair<KnowledgeGraph, AlignmentPairs> make_aligned_copy(const KnowledgeGraph& g,
                                                                   std::uint64_t rename_seed,
                                                                   real edge_dropout) {
  if (edge_dropout < 0.0 || edge_dropout >= 1.0) throw ParamError("edge dropout must be in [0,1)");
  std::mt19937_64 rng(fanout_seed(rename_seed, "aligned-copy"));
  const int n = g.num_entities();
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);  // perm[i] = id of i's counterpart in the copy

  KnowledgeGraph copy;
  copy.entity_names.resize(n);
  for (int i = 0; i < n; ++i) {
    copy.entity_names[perm[i]] = g.entity_names[i] + "_b";
  }
  for (int i = 0; i < n; ++i) copy.entity_ids.emplace(copy.entity_names[i], i);
  for (const auto& r : g.relation_names) copy.intern_relation(r + "_b");
  for (const Triple& t : g.triples) copy.triples.push_back({perm[t.s], t.r, perm[t.o]});
  copy = drop_edges(copy, edge_dropout, fanout_seed(rename_seed, "copy-drop"));

  AlignmentPairs pairs;
  for (int i = 0; i < n; ++i) pairs.test.emplace_back(i, perm[i]);
  return {std::move(copy), std::move(pairs)};
}

// Open-world split: every triple touching a sampled open entity moves from
// the training pool to the testing pool.
struct OpenSplit {
  std::vector<int> known_entities;  // test entities that stayed closed
  std::vector<int> open_entities;
  std::vector<Triple> train_triples;
  std::vector<Triple> test_triples;
};

inline OpenSplit split_open_world(const KnowledgeGraph& g, const std::vector<int>& test_entities,
                                  real open_fraction, std::uint64_t seed) {
  if (!(open_fraction > 0.0 && open_fraction < 1.0)) throw ParamError("open_fraction must be in (0,1)");
  for (int e : test_entities)
    if (e < 0 || e >= g.num_entities()) throw IndexError("test entity outside vocabulary");

  const auto n_open = static_cast<size_t>(std::ceil(open_fraction * static_cast<real>(test_entities.size())));
  std::vector<int> pool = test_entities;
  std::mt19937_64 rng(fanout_seed(seed, "open-split"));
  std::shuffle(pool.begin(), pool.end(), rng);

  OpenSplit split;
  split.open_entities.assign(pool.begin(), pool.begin() + std::min(n_open, pool.size()));
  std::sort(split.open_entities.begin(), split.open_entities.end());
  std::unordered_set<int> open_set(split.open_entities.begin(), split.open_entities.end());
  for (int e : test_entities)
    if (!open_set.count(e)) split.known_entities.push_back(e);
  std::sort(split.known_entities.begin(), split.known_entities.end());

  for (const Triple& t : g.triples) {
    if (open_set.count(t.s) || open_set.count(t.o))
      split.test_triples.push_back(t);
    else
      split.train_triples.push_back(t);
  }
  return split;
}

}  // namespace kgrl
