#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kgrl/error.hpp"
#include "kgrl/tensor.hpp"

namespace kgrl {

struct Triple {
  int s = 0, r = 0, o = 0;
  friend bool operator==(const Triple&, const Triple&) = default;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

// Entities and relations are interned in first-appearance order, so
// ingestion is deterministic for a given file.
struct KnowledgeGraph {
  std::vector<std::string> entity_names;
  std::vector<std::string> relation_names;
  std::unordered_map<std::string, int> entity_ids;
  std::unordered_map<std::string, int> relation_ids;
  std::vector<Triple> triples;
  std::size_t duplicates_dropped = 0;

  int num_entities() const { return static_cast<int>(entity_names.size()); }
  int num_relations() const { return static_cast<int>(relation_names.size()); }

  int intern_entity(const std::string& name) {
    auto [it, fresh] = entity_ids.try_emplace(name, num_entities());
    if (fresh) entity_names.push_back(name);
    return it->second;
  }
  int intern_relation(const std::string& name) {
    auto [it, fresh] = relation_ids.try_emplace(name, num_relations());
    if (fresh) relation_names.push_back(name);
    return it->second;
  }

  void check_triple_bounds() const {
    for (const Triple& t : triples)
      if (t.s < 0 || t.s >= num_entities() || t.o < 0 || t.o >= num_entities() || t.r < 0 ||
          t.r >= num_relations())
        throw IndexError("triple id outside vocabulary bounds");
  }
};

// One name per line; used to pin entity/relation vocabularies across the
// open-world split (train files alone would miss open entities).
inline std::vector<std::string> load_name_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open name list: " + path);
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) names.push_back(line);
  return names;
}

inline void save_name_list(const std::vector<std::string>& names, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write name list: " + path);
  for (const auto& n : names) out << n << '\n';
}

// One line per triple: subject<TAB>relation<TAB>object. Duplicate lines are
// dropped and counted. Optional pre-interned vocabularies pin the id
// assignment; names beyond them are appended in first-appearance order.
inline KnowledgeGraph load_triples(const std::string& path,
                                   const std::vector<std::string>* entity_vocab = nullptr,
                                   const std::vector<std::string>* relation_vocab = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open triple file: " + path);
  KnowledgeGraph g;
  if (entity_vocab)
    for (const auto& name : *entity_vocab) g.intern_entity(name);
  if (relation_vocab)
    for (const auto& name : *relation_vocab) g.intern_relation(name);
  std::set<Triple> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab1 = line.find('\t');
    const auto tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
    if (tab1 == std::string::npos || tab2 == std::string::npos || line.find('\t', tab2 + 1) != std::string::npos)
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected subject<TAB>relation<TAB>object");
    const std::string s = line.substr(0, tab1);
    const std::string r = line.substr(tab1 + 1, tab2 - tab1 - 1);
    const std::string o = line.substr(tab2 + 1);
    if (s.empty() || r.empty() || o.empty())
      throw ParseError(path + ":" + std::to_string(lineno) + ": empty field");
    Triple t{g.intern_entity(s), g.intern_relation(r), g.intern_entity(o)};
    if (seen.insert(t).second)
      g.triples.push_back(t);
    else
      ++g.duplicates_dropped;
  }
  if (g.triples.empty()) throw ParseError(path + ": empty graph");
  return g;
}

inline void save_triples(const KnowledgeGraph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write triple file: " + path);
  for (const Triple& t : g.triples)
    out << g.entity_names[t.s] << '\t' << g.relation_names[t.r] << '\t' << g.entity_names[t.o] << '\n';
}

// Disjoint union: g2's entity ids are offset by |E1| and relation ids by
// |R1|. Name lookup on the merged graph is not meaningful when the two
// vocabularies overlap; training only ever uses ids.
inline KnowledgeGraph merge_graphs(const KnowledgeGraph& g1, const KnowledgeGraph& g2) {
  KnowledgeGraph g;
  g.entity_names = g1.entity_names;
  g.entity_names.insert(g.entity_names.end(), g2.entity_names.begin(), g2.entity_names.end());
  g.relation_names = g1.relation_names;
  g.relation_names.insert(g.relation_names.end(), g2.relation_names.begin(), g2.relation_names.end());
  for (int i = 0; i < g.num_entities(); ++i) g.entity_ids.try_emplace(g.entity_names[i], i);
  for (int i = 0; i < g.num_relations(); ++i) g.relation_ids.try_emplace(g.relation_names[i], i);
  const int eoff = g1.num_entities(), roff = g1.num_relations();
  g.triples = g1.triples;
  g.triples.reserve(g1.triples.size() + g2.triples.size());
  for (const Triple& t : g2.triples) g.triples.push_back({t.s + eoff, t.r + roff, t.o + eoff});
  return g;
}

enum class AggregationMode { kDecentralized, kCentralized };

// Per-entity adjacency flattened into edge rows grouped by target entity.
// Relation ids are over the extended vocabulary: [0, nR) original edges,
// [nR, 2nR) inverse edges, 2nR the reserved self-relation.
struct NeighborIndex {
  struct Edge {
    int neighbor;
    int relation;  // extended id
    enum Direction : std::uint8_t { kForward, kInverse, kSelf } direction;
  };

  int num_entities = 0;
  int num_base_relations = 0;
  bool inverse_edges = false;
  AggregationMode mode = AggregationMode::kDecentralized;
  std::vector<std::vector<Edge>> lists;

  // Flattened rows, grouped by target entity in ascending id order.
  std::vector<int> row_target;
  std::vector<int> row_neighbor;
  std::vector<int> row_relation;
  std::vector<std::int64_t> offsets;  // per entity, into the row arrays

  int extended_relations() const { return 2 * num_base_relations + 1; }
  int inverse_relation(int r) const { return r + num_base_relations; }
  int self_relation() const { return 2 * num_base_relations; }

  SegmentIndex segments() const { return SegmentIndex{row_target, num_entities}; }

  std::int64_t degree(int entity) const { return offsets[entity + 1] - offsets[entity]; }

  std::vector<int> degenerate_entities() const {
    std::vector<int> out;
    for (int i = 0; i < num_entities; ++i)
      if (degree(i) == 0) out.push_back(i);
    return out;
  }
};

// Decentralized mode never puts i in its own list; centralized mode puts it
// there exactly once under the reserved self-relation id.
inline NeighborIndex build_neighbor_index(const KnowledgeGraph& g, AggregationMode mode,
                                          bool add_inverse = true) {
  NeighborIndex idx;
  idx.num_entities = g.num_entities();
  idx.num_base_relations = g.num_relations();
  idx.inverse_edges = add_inverse;
  idx.mode = mode;
  idx.lists.resize(g.num_entities());
  for (const Triple& t : g.triples) {
    idx.lists[t.s].push_back({t.o, t.r, NeighborIndex::Edge::kForward});
    if (add_inverse) idx.lists[t.o].push_back({t.s, idx.inverse_relation(t.r), NeighborIndex::Edge::kInverse});
  }
  if (mode == AggregationMode::kCentralized)
    for (int i = 0; i < g.num_entities(); ++i)
      idx.lists[i].push_back({i, idx.self_relation(), NeighborIndex::Edge::kSelf});

  idx.offsets.assign(g.num_entities() + 1, 0);
  for (int i = 0; i < g.num_entities(); ++i) idx.offsets[i + 1] = idx.offsets[i] + static_cast<std::int64_t>(idx.lists[i].size());
  const auto rows = static_cast<size_t>(idx.offsets.back());
  idx.row_target.reserve(rows);
  idx.row_neighbor.reserve(rows);
  idx.row_relation.reserve(rows);
  for (int i = 0; i < g.num_entities(); ++i)
    for (const auto& e : idx.lists[i]) {
      idx.row_target.push_back(i);
      idx.row_neighbor.push_back(e.neighbor);
      idx.row_relation.push_back(e.relation);
    }
  return idx;
}

// Ground-truth or training alignment links between two KGs, ids per side.
struct AlignmentPairs {
  std::vector<std::pair<int, int>> train;
  std::vector<std::pair<int, int>> test;

  // One-to-one within each split.
  void check_one_to_one() const {
    for (const auto* side : {&train, &test}) {
      std::unordered_set<int> left, right;
      for (auto [a, b] : *side)
        if (!left.insert(a).second || !right.insert(b).second)
          throw ParamError("alignment pairs are not one-to-one within a split");
    }
  }
};

inline std::vector<std::pair<int, int>> load_pair_file(const std::string& path, const KnowledgeGraph& g1,
                                                       const KnowledgeGraph& g2) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pair file: " + path);
  std::vector<std::pair<int, int>> pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected entity1<TAB>entity2");
    const std::string a = line.substr(0, tab), b = line.substr(tab + 1);
    auto ia = g1.entity_ids.find(a);
    auto ib = g2.entity_ids.find(b);
    if (ia == g1.entity_ids.end() || ib == g2.entity_ids.end())
      throw ParseError(path + ":" + std::to_string(lineno) + ": unknown entity in pair");
    pairs.emplace_back(ia->second, ib->second);
  }
  return pairs;
}

inline void save_pair_file(const std::vector<std::pair<int, int>>& pairs, const KnowledgeGraph& g1,
                           const KnowledgeGraph& g2, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write pair file: " + path);
  for (auto [a, b] : pairs) out << g1.entity_names[a] << '\t' << g2.entity_names[b] << '\n';
}

}  // namespace kgrl
