#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "kgrl/eval.hpp"
#include "kgrl/synth.hpp"

using namespace kgrl;

namespace {

Tensor random_tensor(std::int64_t r, std::int64_t c, std::mt19937_64& rng, real lo = -1, real hi = 1) {
  std::uniform_real_distribution<real> unif(lo, hi);
  Buffer b(static_cast<size_t>(r * c));
  for (real& v : b) v = unif(rng);
  return Tensor::from(r, c, b);
}

// Exhaustive score-sort oracle: sort candidates by (distance asc, id asc)
// and report the true candidate's 1-based position.
std::int64_t alignment_rank_oracle(const Tensor& q_from, int q, const Tensor& c_from,
                                   const std::vector<int>& cands, int truth) {
  std::vector<std::pair<real, int>> scored;
  for (int c : cands) {
    real d = 0;
    for (std::int64_t j = 0; j < q_from.cols(); ++j) {
      const real dd = q_from.at(q, j) - c_from.at(c, j);
      d += dd * dd;
    }
    scored.emplace_back(std::sqrt(d), c);
  }
  std::sort(scored.begin(), scored.end());
  for (size_t i = 0; i < scored.size(); ++i)
    if (scored[i].second == truth) return static_cast<std::int64_t>(i) + 1;
  throw std::logic_error("truth not in candidates");
}

// Random orthogonal matrix via Gram-Schmidt on a Gaussian draw.
Tensor random_orthogonal(std::int64_t d, std::mt19937_64& rng) {
  std::normal_distribution<real> gauss(0.0, 1.0);
  std::vector<Buffer> rows(static_cast<size_t>(d), Buffer(static_cast<size_t>(d)));
  for (auto& row : rows) {
    for (real& v : row) v = gauss(rng);
  }
  for (size_t i = 0; i < rows.size(); ++i) {
    for (size_t k = 0; k < i; ++k) {
      real dot = 0;
      for (std::int64_t j = 0; j < d; ++j) dot += rows[i][static_cast<size_t>(j)] * rows[k][static_cast<size_t>(j)];
      for (std::int64_t j = 0; j < d; ++j) rows[i][static_cast<size_t>(j)] -= dot * rows[k][static_cast<size_t>(j)];
    }
    real norm = 0;
    for (real v : rows[i]) norm += v * v;
    norm = std::sqrt(norm);
    for (real& v : rows[i]) v /= norm;
  }
  Buffer flat;
  for (auto& row : rows) flat.insert(flat.end(), row.begin(), row.end());
  return Tensor::from(d, d, flat);
}

}  // namespace

TEST_CASE("metric identities") {
  RankingReport rep = make_report({1, 2, 4});
  CHECK(rep.mrr == Catch::Approx((1.0 + 0.5 + 0.25) / 3).margin(1e-12));
  CHECK(rep.h1 == Catch::Approx(1.0 / 3).margin(1e-12));
  CHECK(rep.h3 == Catch::Approx(2.0 / 3).margin(1e-12));
  CHECK(rep.h10 == 1.0);
  CHECK(rep.mr == Catch::Approx(7.0 / 3).margin(1e-12));

  // Structural invariants.
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::int64_t> ranks;
    std::uniform_int_distribution<std::int64_t> pick(1, 50);
    for (int i = 0; i < 30; ++i) ranks.push_back(pick(rng));
    RankingReport r = make_report(ranks);
    CHECK(r.mrr > 0.0);
    CHECK(r.mrr <= 1.0);
    CHECK(r.mr >= 1.0);
    CHECK(r.h1 <= r.h3);
    CHECK(r.h3 <= r.h10);
    CHECK(r.h10 <= 1.0);
  }
  CHECK_THROWS_AS(make_report({}), EvalError);
  CHECK_THROWS_AS(make_report({0}), EvalError);
}

TEST_CASE("rank_alignment on an exact copy is perfect") {
  std::mt19937_64 rng(62);
  Tensor g1 = random_tensor(12, 6, rng);
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < 12; ++i) pairs.emplace_back(i, i);
  RankingReport rep = rank_alignment(g1, g1, pairs);
  CHECK(rep.h1 == 1.0);
  CHECK(rep.mr == 1.0);
  CHECK(rep.mrr == 1.0);
}

TEST_CASE("rank_alignment equals the exhaustive oracle including ties") {
  std::mt19937_64 rng(63);
  Tensor g1 = random_tensor(15, 4, rng);
  // Duplicate a few rows on the candidate side to force exact ties.
  Buffer vals = random_tensor(15, 4, rng).values();
  for (int j = 0; j < 4; ++j) {
    vals[3 * 4 + j] = vals[7 * 4 + j];
    vals[11 * 4 + j] = vals[7 * 4 + j];
  }
  Tensor g2 = Tensor::from(15, 4, vals);

  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < 15; ++i) pairs.emplace_back(i, (i * 3) % 15);

  std::vector<int> cands1, cands2;
  for (auto [i, j] : pairs) {
    cands1.push_back(i);
    cands2.push_back(j);
  }
  std::sort(cands1.begin(), cands1.end());
  std::sort(cands2.begin(), cands2.end());

  RankingReport rep = rank_alignment(g1, g2, pairs);
  std::vector<std::int64_t> expect;
  for (auto [i, j] : pairs) expect.push_back(alignment_rank_oracle(g1, i, g2, cands2, j));
  for (auto [i, j] : pairs) expect.push_back(alignment_rank_oracle(g2, j, g1, cands1, i));
  CHECK(rep.ranks == expect);
}

TEST_CASE("random embeddings give a null-model mean rank near half the pool") {
  std::mt19937_64 rng(64);
  real mr_sum = 0;
  const int seeds = 5;
  for (int s = 0; s < seeds; ++s) {
    Tensor g1 = random_tensor(100, 8, rng);
    Tensor g2 = random_tensor(100, 8, rng);
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < 100; ++i) pairs.emplace_back(i, i);
    mr_sum += rank_alignment(g1, g2, pairs).mr;
  }
  const real mr = mr_sum / seeds;
  CHECK(std::abs(mr - 50.5) < 5.0);
}

TEST_CASE("rank_alignment is invariant under a common orthogonal transform") {
  std::mt19937_64 rng(65);
  Tensor g1 = random_tensor(20, 6, rng);
  Tensor g2 = random_tensor(20, 6, rng);
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < 20; ++i) pairs.emplace_back(i, (i + 5) % 20);

  RankingReport before = rank_alignment(g1, g2, pairs);
  Tensor q = random_orthogonal(6, rng);
  RankingReport after = rank_alignment(matmul(g1, q), matmul(g2, q), pairs);
  CHECK(before.ranks == after.ranks);
  CHECK(after.mrr == Catch::Approx(before.mrr).margin(1e-6));
}

TEST_CASE("rank_alignment error paths") {
  std::mt19937_64 rng(66);
  Tensor g1 = random_tensor(5, 3, rng);
  CHECK_THROWS_AS(rank_alignment(g1, g1, {}), EvalError);
  CHECK_THROWS_AS(rank_alignment(g1, g1, {{0, 7}}), EvalError);  // missing output row
}

TEST_CASE("rank_prediction: perfect decoder, filtered never worse, oracle match") {
  KnowledgeGraph g = generate_synthetic_kg(12, 3, 3.5, 67);
  std::mt19937_64 rng(68);
  Tensor g_out = random_tensor(12, 6, rng);
  NamedParam dec = NamedParam::xavier("decoder.R", 2 * 3, 6, rng);

  std::vector<Triple> test(g.triples.begin(), g.triples.begin() + std::min<size_t>(10, g.triples.size()));

  RankingReport raw = rank_prediction(g_out, DecoderKind::kDistMult, dec, test, 3, false, g.triples);
  RankingReport filt = rank_prediction(g_out, DecoderKind::kDistMult, dec, test, 3, true, g.triples);
  REQUIRE(raw.ranks.size() == filt.ranks.size());
  for (size_t i = 0; i < raw.ranks.size(); ++i) CHECK(filt.ranks[i] <= raw.ranks[i]);

  // Exhaustive per-query oracle for the raw protocol.
  std::vector<std::int64_t> expect;
  auto row = [&](int e) {
    return std::span<const real>{g_out.values().data() + static_cast<size_t>(e) * 6, 6};
  };
  auto rel = [&](int r) {
    return std::span<const real>{dec.value->data() + static_cast<size_t>(r) * 6, 6};
  };
  for (const Triple& t : test) {
    std::vector<std::pair<real, int>> scored;
    for (int c = 0; c < 12; ++c) scored.emplace_back(-distmult_score(row(t.s), rel(t.r), row(c)), c);
    std::sort(scored.begin(), scored.end());
    for (size_t i = 0; i < scored.size(); ++i)
      if (scored[i].second == t.o) expect.push_back(static_cast<std::int64_t>(i) + 1);
    scored.clear();
    for (int c = 0; c < 12; ++c) scored.emplace_back(-distmult_score(row(t.o), rel(t.r + 3), row(c)), c);
    std::sort(scored.begin(), scored.end());
    for (size_t i = 0; i < scored.size(); ++i)
      if (scored[i].second == t.s) expect.push_back(static_cast<std::int64_t>(i) + 1);
  }
  // Interleave: implementation emits object then subject per triple.
  std::vector<std::int64_t> expect_interleaved;
  for (size_t t = 0; t < test.size(); ++t) {
    expect_interleaved.push_back(expect[2 * t]);
    expect_interleaved.push_back(expect[2 * t + 1]);
  }
  CHECK(raw.ranks == expect_interleaved);

  // A decoder that always scores the truth highest gives MRR 1. Build it by
  // making outputs one-hot and relations neutral.
  Buffer onehot(12 * 12, 0.0);
  for (int i = 0; i < 12; ++i) onehot[i * 12 + i] = 1.0;
  Tensor ideal = Tensor::from(12, 12, onehot);
  NamedParam ones = NamedParam::ones("decoder.R", 6, 12);
  // distmult with r=1: score(s, r, o) = <g_s, g_o> which is 1 iff o == s.
  std::vector<Triple> self_test;
  for (int i = 0; i < 5; ++i) self_test.push_back({i, 0, i});
  RankingReport perfect = rank_prediction(ideal, DecoderKind::kDistMult, ones, self_test, 3, false, {});
  CHECK(perfect.mrr == 1.0);
}

TEST_CASE("per_layer_eval emits K+2 layer reports plus a tagged concatenation") {
  KnowledgeGraph g = generate_synthetic_kg(14, 3, 4.0, 69);
  NeighborIndex idx = build_neighbor_index(g, AggregationMode::kDecentralized, true);
  std::mt19937_64 rng(70);
  const int K = 2;
  EncoderParams p = EncoderParams::init(14, idx.extended_relations(), 4, K, rng);
  LayerOutputs outs = encoder_forward_eval(p, idx, EncoderMode::kDan);

  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < 7; ++i) pairs.emplace_back(i, i + 7);
  auto reports = per_layer_eval(outs, pairs);
  REQUIRE(reports.size() == static_cast<size_t>(K) + 3);  // K+2 layers + concat
  CHECK(reports.front().first == "input");
  CHECK(reports[1].first == "mean_agg");
  CHECK(reports.back().first == "concat");

  // K = 1: input, mean-agg, layer 1, concatenation.
  EncoderParams p1 = EncoderParams::init(14, idx.extended_relations(), 4, 1, rng);
  LayerOutputs o1 = encoder_forward_eval(p1, idx, EncoderMode::kDan);
  auto r1 = per_layer_eval(o1, pairs);
  CHECK(r1.size() == 4);
}

TEST_CASE("report CSV shape") {
  RankingReport rep = make_report({1, 2, 4});
  std::ostringstream out;
  write_report_csv(out, rep);
  std::string s = out.str();
  CHECK(s.find("h1,") != std::string::npos);
  CHECK(s.find("mrr,") != std::string::npos);
  CHECK(s.find("queries,3") != std::string::npos);
}
