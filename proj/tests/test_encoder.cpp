#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <random>

#include "kgrl/checkpoint.hpp"
#include "kgrl/encoder.hpp"
#include "kgrl/gradcheck.hpp"
#include "kgrl/synth.hpp"

using namespace kgrl;

namespace {

using Vec = std::vector<real>;
using Mat = std::vector<Vec>;

Mat to_mat(const Tensor& t) {
  Mat m(static_cast<size_t>(t.rows()), Vec(static_cast<size_t>(t.cols())));
  for (std::int64_t i = 0; i < t.rows(); ++i)
    for (std::int64_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  return m;
}

Mat param_mat(const NamedParam& p) { return to_mat(p.constant()); }

// row vector x matrix
Vec matvec(const Vec& x, const Mat& w) {
  Vec y(w[0].size(), 0.0);
  for (size_t i = 0; i < x.size(); ++i)
    for (size_t j = 0; j < y.size(); ++j) y[j] += x[i] * w[i][j];
  return y;
}

real dot(const Vec& a, const Vec& b) {
  real s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Scalar per-entity reimplementation of the whole DAN stack, independent of
// the tensor engine. Dropout off, relations on.
struct ScalarDanRef {
  const EncoderParams& p;
  const NeighborIndex& idx;
  real slope = 0.2;

  Vec layer_norm_row(const Vec& x, const Vec& gain, const Vec& bias) const {
    const size_t d = x.size();
    real mu = 0, var = 0;
    for (real v : x) mu += v;
    mu /= static_cast<real>(d);
    for (real v : x) var += (v - mu) * (v - mu);
    var /= static_cast<real>(d);
    const real inv = 1.0 / std::sqrt(var + 1e-6);
    Vec y(d);
    for (size_t j = 0; j < d; ++j) y[j] = (x[j] - mu) * inv * gain[j] + bias[j];
    return y;
  }

  std::vector<Mat> run(bool use_relations = true) const {
    const int n = idx.num_entities;
    const Mat E = param_mat(p.E), R = param_mat(p.R), W0 = param_mat(p.W0);
    std::vector<Mat> d;  // d[0]=d^{-1}
    d.push_back(E);
    Mat d0(static_cast<size_t>(n), Vec(static_cast<size_t>(p.dim), 0.0));
    for (int i = 0; i < n; ++i) {
      const auto& lst = idx.lists[static_cast<size_t>(i)];
      if (lst.empty()) continue;
      for (const auto& e : lst) {
        Vec t = matvec(E[static_cast<size_t>(e.neighbor)], W0);
        for (size_t j = 0; j < t.size(); ++j) d0[static_cast<size_t>(i)][j] += t[j];
      }
      for (real& v : d0[static_cast<size_t>(i)]) v /= static_cast<real>(lst.size());
    }
    d.push_back(d0);

    for (int k = 1; k <= p.layers; ++k) {
      const auto& lp = p.layer[static_cast<size_t>(k - 1)];
      const Mat W = param_mat(lp.W), W1 = param_mat(lp.W1), W2 = param_mat(lp.W2);
      const Mat A = param_mat(lp.a);  // 2D x 1
      Vec a(A.size());
      for (size_t i = 0; i < A.size(); ++i) a[i] = A[i][0];
      const Mat gain = param_mat(lp.ln_gain), bias = param_mat(lp.ln_bias);
      const Mat& dq = d[static_cast<size_t>(k)];      // d^{k-1}
      const Mat& dk = d[static_cast<size_t>(k - 1)];  // d^{k-2}
      Mat out(static_cast<size_t>(n), Vec(static_cast<size_t>(p.dim), 0.0));
      for (int i = 0; i < n; ++i) {
        auto& row = out[static_cast<size_t>(i)];
        const auto& lst = idx.lists[static_cast<size_t>(i)];
        if (!lst.empty()) {
          Vec scores;
          Vec q = matvec(dq[static_cast<size_t>(i)], W1);
          for (const auto& e : lst) {
            Vec key = matvec(dk[static_cast<size_t>(e.neighbor)], W2);
            Vec cat = q;
            cat.insert(cat.end(), key.begin(), key.end());
            real s = dot(a, cat);
            scores.push_back(s > 0 ? s : slope * s);
          }
          real mx = scores[0];
          for (real s : scores) mx = std::max(mx, s);
          real z = 0;
          for (real& s : scores) {
            s = std::exp(s - mx);
            z += s;
          }
          for (real& s : scores) s /= z;
          for (size_t e = 0; e < lst.size(); ++e) {
            Vec msg = matvec(dk[static_cast<size_t>(lst[e].neighbor)], W);
            if (use_relations)
              for (size_t j = 0; j < msg.size(); ++j) msg[j] += R[static_cast<size_t>(lst[e].relation)][j];
            for (size_t j = 0; j < msg.size(); ++j) row[j] += scores[e] * msg[j];
          }
        }
        row = layer_norm_row(row, gain[0], bias[0]);
        for (size_t j = 0; j < row.size(); ++j) row[j] += d0[static_cast<size_t>(i)][j] + dq[static_cast<size_t>(i)][j];
      }
      d.push_back(out);
    }
    return d;
  }
};

KnowledgeGraph chain_graph(int n) {
  KnowledgeGraph g;
  for (int i = 0; i < n; ++i) g.intern_entity("e" + std::to_string(i));
  g.intern_relation("r");
  for (int i = 0; i + 1 < n; ++i) g.triples.push_back({i, 0, i + 1});
  return g;
}

KnowledgeGraph star_graph(int leaves) {
  KnowledgeGraph g;
  g.intern_entity("center");
  for (int i = 0; i < leaves; ++i) g.intern_entity("leaf" + std::to_string(i));
  g.intern_relation("r");
  for (int i = 0; i < leaves; ++i) g.triples.push_back({0, 0, i + 1});
  return g;
}

}  // namespace

TEST_CASE("mean_aggregate examples") {
  // One neighbor with identity transform returns that neighbor's embedding.
  Tensor E = Tensor::from(2, 2, {1, 2, 3, 4});
  Tensor I = Tensor::from(2, 2, {1, 0, 0, 1});
  NeighborIndex idx;
  idx.num_entities = 2;
  idx.row_target = {0};
  idx.row_neighbor = {1};
  idx.row_relation = {0};
  Tensor d0 = mean_aggregate(E, idx, I);
  CHECK(d0.at(0, 0) == 3.0);
  CHECK(d0.at(0, 1) == 4.0);
  CHECK(d0.at(1, 0) == 0.0);  // degenerate fallback

  // Arithmetic mean of [1,2] and [3,4].
  NeighborIndex both;
  both.num_entities = 2;
  both.row_target = {0, 0};
  both.row_neighbor = {0, 1};
  both.row_relation = {0, 0};
  Tensor m = mean_aggregate(E, both, I);
  CHECK(m.at(0, 0) == 2.0);
  CHECK(m.at(0, 1) == 3.0);
}

TEST_CASE("mean_aggregate matches accumulation oracle and neighbor-order permutation") {
  KnowledgeGraph g = generate_synthetic_kg(50, 4, 5.0, 3);
  NeighborIndex idx = build_neighbor_index(g, AggregationMode::kDecentralized, true);
  std::mt19937_64 rng(8);
  EncoderParams p = EncoderParams::init(50, idx.extended_relations(), 6, 1, rng);

  Tensor d0 = mean_aggregate(p.E.constant(), idx, p.W0.constant());
  Mat E = param_mat(p.E), W0 = param_mat(p.W0);
  for (int i = 0; i < 50; ++i) {
    Vec acc(6, 0.0);
    if (!idx.lists[static_cast<size_t>(i)].empty()) {
      for (const auto& e : idx.lists[static_cast<size_t>(i)]) {
        Vec t = matvec(E[static_cast<size_t>(e.neighbor)], W0);
        for (size_t j = 0; j < 6; ++j) acc[j] += t[j];
      }
      for (real& v : acc) v /= static_cast<real>(idx.lists[static_cast<size_t>(i)].size());
    }
    for (size_t j = 0; j < 6; ++j) CHECK(d0.at(i, static_cast<std::int64_t>(j)) == Catch::Approx(acc[j]).margin(1e-12));
  }

  // Permuting each neighbor list leaves the mean unchanged.
  NeighborIndex shuffled = idx;
  std::mt19937_64 prng(4);
  for (auto& lst : shuffled.lists) std::shuffle(lst.begin(), lst.end(), prng);
  shuffled.row_target.clear();
  shuffled.row_neighbor.clear();
  shuffled.row_relation.clear();
  for (int i = 0; i < shuffled.num_entities; ++i)
    for (const auto& e : shuffled.lists[static_cast<size_t>(i)]) {
      shuffled.row_target.push_back(i);
      shuffled.row_neighbor.push_back(e.neighbor);
      shuffled.row_relation.push_back(e.relation);
    }
  Tensor d0p = mean_aggregate(p.E.constant(), shuffled, p.W0.constant());
  for (int i = 0; i < 50; ++i)
    for (int j = 0; j < 6; ++j) CHECK(d0p.at(i, j) == Catch::Approx(d0.at(i, j)).margin(1e-12));
}

TEST_CASE("dan_layer examples") {
  std::mt19937_64 rng(5);
  EncoderParams p = EncoderParams::init(3, 3, 4, 1, rng);
  AttentionLayerTensors lt{p.layer[0].W.constant(),       p.layer[0].W1.constant(),
                           p.layer[0].W2.constant(),      p.layer[0].a.constant(),
                           p.layer[0].ln_gain.constant(), p.layer[0].ln_bias.constant()};
  Tensor d_prev = Tensor::from(3, 4, {0.1, 0.2, 0.3, 0.4, -0.1, 0.5, 0.2, 0.0, 0.3, 0.1, -0.2, 0.6});
  Tensor d_prev2 = Tensor::from(3, 4, {0.5, -0.5, 0.2, 0.1, 0.4, 0.3, -0.2, 0.7, 0.0, 0.1, 0.2, 0.3});

  // Single neighbor: attention is forced to 1, output is the transformed key.
  NeighborIndex single;
  single.num_entities = 3;
  single.row_target = {0};
  single.row_neighbor = {2};
  single.row_relation = {0};
  Tensor out = dan_layer(d_prev, d_prev2, single, lt);
  Tensor expect = matmul(d_prev2, lt.W);
  for (int j = 0; j < 4; ++j) CHECK(out.at(0, j) == expect.at(2, j));

  // Two neighbors with identical key/value rows split attention evenly.
  Tensor dup = Tensor::from(3, 4, {0.5, -0.5, 0.2, 0.1, 0.5, -0.5, 0.2, 0.1, 0.0, 0.1, 0.2, 0.3});
  NeighborIndex two;
  two.num_entities = 3;
  two.row_target = {0, 0};
  two.row_neighbor = {0, 1};
  two.row_relation = {0, 0};
  Tensor att;
  dan_layer(d_prev, dup, two, lt, nullptr, 0.2, false, &att);
  CHECK(att.values()[0] == Catch::Approx(0.5).margin(1e-12));
  CHECK(att.values()[1] == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("dan_layer strict mode rejects empty neighborhoods") {
  std::mt19937_64 rng(6);
  EncoderParams p = EncoderParams::init(2, 3, 4, 1, rng);
  AttentionLayerTensors lt{p.layer[0].W.constant(),       p.layer[0].W1.constant(),
                           p.layer[0].W2.constant(),      p.layer[0].a.constant(),
                           p.layer[0].ln_gain.constant(), p.layer[0].ln_bias.constant()};
  NeighborIndex idx;
  idx.num_entities = 2;
  idx.offsets = {0, 1, 1};  // entity 1 has no rows
  idx.lists.resize(2);
  idx.lists[0].push_back({1, 0, NeighborIndex::Edge::kForward});
  idx.row_target = {0};
  idx.row_neighbor = {1};
  idx.row_relation = {0};
  Tensor d = Tensor::from(2, 4, Buffer(8, 0.5));
  CHECK_THROWS_AS(dan_layer(d, d, idx, lt, nullptr, 0.2, /*strict=*/true), DegenerateNeighborhoodError);
}

TEST_CASE("gat_layer examples") {
  std::mt19937_64 rng(7);
  EncoderParams p = EncoderParams::init(3, 3, 4, 1, rng);
  AttentionLayerTensors lt{p.layer[0].W.constant(),       p.layer[0].W1.constant(),
                           p.layer[0].W2.constant(),      p.layer[0].a.constant(),
                           p.layer[0].ln_gain.constant(), p.layer[0].ln_bias.constant()};
  Tensor d_prev = Tensor::from(3, 4, {0.1, 0.2, 0.3, 0.4, -0.1, 0.5, 0.2, 0.0, 0.3, 0.1, -0.2, 0.6});

  // Isolated entity with only its self-loop: output = its own transform.
  NeighborIndex self_only;
  self_only.num_entities = 3;
  self_only.row_target = {0};
  self_only.row_neighbor = {0};
  self_only.row_relation = {0};
  Tensor out = gat_layer(d_prev, self_only, lt);
  Tensor expect = matmul(d_prev, lt.W);
  for (int j = 0; j < 4; ++j) CHECK(out.at(0, j) == expect.at(0, j));

  // Identical keys give uniform attention.
  Tensor dup = Tensor::from(3, 4, {0.5, -0.5, 0.2, 0.1, 0.5, -0.5, 0.2, 0.1, 0.5, -0.5, 0.2, 0.1});
  NeighborIndex three;
  three.num_entities = 3;
  three.row_target = {0, 0, 0};
  three.row_neighbor = {0, 1, 2};
  three.row_relation = {0, 0, 0};
  Tensor att;
  gat_layer(dup, three, lt, nullptr, 0.2, false, &att);
  for (int i = 0; i < 3; ++i) CHECK(att.values()[static_cast<size_t>(i)] == Catch::Approx(1.0 / 3).margin(1e-12));
}

TEST_CASE("gat_layer matches a scalar oracle on a small graph") {
  KnowledgeGraph g = generate_synthetic_kg(6, 2, 3.0, 27);
  NeighborIndex idx = build_neighbor_index(g, AggregationMode::kCentralized, true);
  std::mt19937_64 rng(28);
  EncoderParams p = EncoderParams::init(6, idx.extended_relations(), 4, 1, rng);
  AttentionLayerTensors lt{p.layer[0].W.constant(),       p.layer[0].W1.constant(),
                           p.layer[0].W2.constant(),      p.layer[0].a.constant(),
                           p.layer[0].ln_gain.constant(), p.layer[0].ln_bias.constant()};
  Tensor got = gat_layer(p.E.constant(), idx, lt, nullptr, 0.2);

  const Mat E = param_mat(p.E), W = param_mat(p.layer[0].W), W1 = param_mat(p.layer[0].W1),
            W2 = param_mat(p.layer[0].W2);
  const Mat A = param_mat(p.layer[0].a);
  Vec a(A.size());
  for (size_t i = 0; i < A.size(); ++i) a[i] = A[i][0];
  for (int i = 0; i < 6; ++i) {
    const auto& lst = idx.lists[static_cast<size_t>(i)];
    Vec scores;
    Vec q = matvec(E[static_cast<size_t>(i)], W1);
    for (const auto& e : lst) {
      Vec key = matvec(E[static_cast<size_t>(e.neighbor)], W2);
      Vec cat = q;
      cat.insert(cat.end(), key.begin(), key.end());
      real s = dot(a, cat);
      scores.push_back(s > 0 ? s : 0.2 * s);
    }
    real mx = scores[0];
    for (real s : scores) mx = std::max(mx, s);
    real z = 0;
    for (real& s : scores) {
      s = std::exp(s - mx);
      z += s;
    }
    for (real& s : scores) s /= z;
    Vec want(4, 0.0);
    for (size_t e = 0; e < lst.size(); ++e) {
      Vec msg = matvec(E[static_cast<size_t>(lst[e].neighbor)], W);
      for (size_t j = 0; j < 4; ++j) want[j] += scores[e] * msg[j];
    }
    for (size_t j = 0; j < 4; ++j) CHECK(got.at(i, static_cast<std::int64_t>(j)) == Catch::Approx(want[j]).margin(1e-10));
  }
}

TEST_CASE("relation_combine") {
  Tensor msgs = Tensor::from(2, 3, {1, 2, 3, 4, 5, 6});
  Tensor zeroR = Tensor::zeros(4, 3);
  CHECK(relation_combine(msgs, {1, 3}, zeroR).values() == msgs.values());

  Tensor R = Tensor::from(2, 3, {10, 20, 30, 1, 1, 1});
  Tensor sum = relation_combine(msgs, {0, 1}, R);
  CHECK(sum.values() == Buffer{11, 22, 33, 5, 6, 7});

  CHECK_THROWS_AS(relation_combine(msgs, {0, 9}, R), IndexError);

  // Gradient flows into the relation table.
  std::mt19937_64 rng(9);
  ParamSet ps{NamedParam::xavier("R", 4, 3, rng), NamedParam::xavier("m", 5, 3, rng)};
  auto rep = check_gradients("relation_combine", ps, [&](Tape& t) {
    Tensor R2 = ps[0].stage(t);
    Tensor m = ps[1].stage(t);
    Tensor c = relation_combine(m, {0, 2, 1, 3, 2}, R2);
    return GradProbe{sum_all(mul(c, c)), {R2, m}};
  });
  CHECK(rep.pass);
}

TEST_CASE("residual_combine") {
  Tensor g0 = Tensor::from(1, 3, {1, 2, 3});
  Tensor z = Tensor::zeros(1, 3);
  CHECK(residual_combine(g0, z, z).values() == g0.values());
  CHECK(residual_combine(g0, g0, g0).values() == Buffer{3, 6, 9});

  // Linearity.
  Tensor x = Tensor::from(1, 3, {0.5, -1, 2}), y = Tensor::from(1, 3, {1, 1, 1}),
         w = Tensor::from(1, 3, {2, 0, -3});
  Tensor lhs = residual_combine(scale(x, 2.5), scale(y, 2.5), scale(w, 2.5));
  Tensor rhs = scale(residual_combine(x, y, w), 2.5);
  for (int j = 0; j < 3; ++j) CHECK(lhs.at(0, j) == Catch::Approx(rhs.at(0, j)).margin(1e-12));

  CHECK_THROWS_AS(residual_combine(g0, z, Tensor::zeros(1, 4)), ShapeError);
}

TEST_CASE("forward matches the scalar reference stack") {
  KnowledgeGraph g = generate_synthetic_kg(12, 3, 4.0, 15);
  NeighborIndex idx = build_neighbor_index(g, AggregationMode::kDecentralized, true);
  std::mt19937_64 rng(21);
  EncoderParams p = EncoderParams::init(12, idx.extended_relations(), 5, 3, rng);

  LayerOutputs outs = encoder_forward_eval(p, idx, EncoderMode::kDan);

  ScalarDanRef ref{p, idx};
  auto expect = ref.run();
  for (int k = -1; k <= 3; ++k) {
    const Tensor& got = outs.layer(k);
    const Mat& want = expect[static_cast<size_t>(k + 1)];
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 5; ++j)
        CHECK(got.at(i, j) ==
              Catch::Approx(want[static_cast<size_t>(i)][static_cast<size_t>(j)]).margin(1e-10));
  }
}

TEST_CASE("forward composition on a single-neighbor chain, K=1") {
  KnowledgeGraph g = chain_graph(2);
  NeighborIndex idx = build_neighbor_index(g, AggregationMode::kDecentralized, true);
  std::mt19937_64 rng(33);
  EncoderParams p = EncoderParams::init(2, idx.extended_relations(), 4, 1, rng);
  LayerOutputs outs = encoder_forward_eval(p, idx, EncoderMode::kDan);
  ScalarDanRef ref{p, idx};
  auto expect = ref.run();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(outs.layer(1).at(i, j) ==
            Catch::Approx(expect[2][static_cast<size_t>(i)][static_cast<size_t>(j)]).margin(1e-10));
}

TEST_CASE("forward is deterministic") {
  KnowledgeGraph g = generate_synthetic_kg(10, 2, 3.0, 44);
  NeighborIndex idx = build_neighbor_index(g, AggregationMode::kDecentralized, true);
  std::mt19937_64 rng(2);
  EncoderParams p = EncoderParams::init(10, idx.extended_relations(), 4, 2, rng);

  ForwardOptions opt;
  opt.training = true;
  opt.dropout_rate = 0.3;
  opt.seed = 77;
  opt.step = 5;
  Tape t1, t2;
  LayerOutputs a = encoder_forward(t1, p, idx, EncoderMode::kDan, opt);
  LayerOutputs b = encoder_forward(t2, p, idx, EncoderMode::kDan, opt);
  CHECK(a.layer(2).values() == b.layer(2).values());

  LayerOutputs e1 = encoder_forward_eval(p, idx, EncoderMode::kDan);
  LayerOutputs e2 = encoder_forward_eval(p, idx, EncoderMode::kDan);
  CHECK(e1.layer(2).values() == e2.layer(2).values());
}

TEST_CASE("final_output widths and slices") {
  KnowledgeGraph g = generate_synthetic_kg(9, 2, 3.0, 55);
  NeighborIndex idx = build_neighbor_index(g, AggregationMode::kDecentralized, true);
  std::mt19937_64 rng(3);

  EncoderParams p1 = EncoderParams::init(9, idx.extended_relations(), 6, 1, rng);
  LayerOutputs o1 = encoder_forward_eval(p1, idx, EncoderMode::kDan);
  CHECK(final_output(o1, TaskKind::kAlignment).values() == o1.layer(1).values());
  CHECK(final_output(o1, TaskKind::kPrediction).values() == o1.layer(1).values());

  EncoderParams p3 = EncoderParams::init(9, idx.extended_relations(), 8, 3, rng);
  LayerOutputs o3 = encoder_forward_eval(p3, idx, EncoderMode::kDan);
  Tensor cat = final_output(o3, TaskKind::kAlignment);
  CHECK(cat.cols() == 24);
  for (int k = 1; k <= 3; ++k)
    for (int i = 0; i < 9; ++i)
      for (int j = 0; j < 8; ++j) CHECK(cat.at(i, (k - 1) * 8 + j) == o3.layer(k).at(i, j));
  CHECK(final_output(o3, TaskKind::kPrediction).values() == o3.layer(3).values());
}

TEST_CASE("attention rows sum to one per entity in every layer") {
  std::mt19937_64 seed_rng(123);
  for (int trial = 0; trial < 20; ++trial) {
    KnowledgeGraph g = generate_synthetic_kg(15, 3, 4.0, seed_rng());
    for (EncoderMode mode : {EncoderMode::kDan, EncoderMode::kGat}) {
      NeighborIndex idx = build_neighbor_index(g, index_mode_for(mode), true);
      std::mt19937_64 rng(seed_rng());
      EncoderParams p = EncoderParams::init(15, idx.extended_relations(), 5, 2, rng);
      LayerOutputs outs = encoder_forward_eval(p, idx, mode);
      REQUIRE(outs.attention.size() == 2);
      for (const Tensor& att : outs.attention) {
        Buffer sums(static_cast<size_t>(idx.num_entities), 0.0);
        for (size_t rrow = 0; rrow < idx.row_target.size(); ++rrow)
          sums[static_cast<size_t>(idx.row_target[rrow])] += att.values()[rrow];
        for (int i = 0; i < idx.num_entities; ++i)
          if (idx.degree(i) > 0) CHECK(sums[static_cast<size_t>(i)] == Catch::Approx(1.0).margin(1e-9));
      }
    }
  }
}

TEST_CASE("inductive independence on an outgoing star") {
  // Inverse edges off: the center aggregates its leaves, nobody aggregates
  // the center. Its own embedding must be unreachable in dan mode.
  KnowledgeGraph g = star_graph(5);
  std::mt19937_64 rng(10);

  auto output_for = [&](EncoderMode mode, const EncoderParams& params) {
    NeighborIndex idx = build_neighbor_index(g, index_mode_for(mode), /*add_inverse=*/false);
    LayerOutputs outs = encoder_forward_eval(params, idx, mode);
    Tensor fin = final_output(outs, TaskKind::kAlignment);
    Buffer row(fin.values().begin(), fin.values().begin() + fin.cols());
    return row;
  };

  for (EncoderMode mode : {EncoderMode::kDan, EncoderMode::kGat, EncoderMode::kCentRL}) {
    EncoderParams p = EncoderParams::init(6, 2 * 1 + 1, 4, 2, rng);
    Buffer before = output_for(mode, p);

    std::mt19937_64 perturb(999);
    std::uniform_real_distribution<real> unif(-1.0, 1.0);
    for (int j = 0; j < 4; ++j) (*p.E.value)[static_cast<size_t>(j)] = unif(perturb);  // center row
    Buffer after = output_for(mode, p);

    real delta = 0.0;
    for (size_t j = 0; j < before.size(); ++j) delta += (before[j] - after[j]) * (before[j] - after[j]);
    delta = std::sqrt(delta);
    if (mode == EncoderMode::kDan) {
      CHECK(before == after);  // bitwise
    } else {
      CHECK(delta > 1e-3);
    }
  }
}

TEST_CASE("second-order structure: a layer reads only d^{k-1} and d^{k-2}") {
  KnowledgeGraph g = generate_synthetic_kg(8, 2, 3.0, 66);
  NeighborIndex idx = build_neighbor_index(g, AggregationMode::kDecentralized, true);
  std::mt19937_64 rng(12);
  EncoderParams p = EncoderParams::init(8, idx.extended_relations(), 4, 3, rng);

  // Compute the stack, then re-run layer 3 with its two inputs staged as
  // fresh leaves; everything reachable must be one of those leaves or a
  // layer parameter.
  LayerOutputs outs = encoder_forward_eval(p, idx, EncoderMode::kDan);
  Tape tape;
  Tensor d_prev = tape.leaf(outs.layer(2).buffer(), 8, 4);
  Tensor d_prev2 = tape.leaf(outs.layer(1).buffer(), 8, 4);
  const auto& lp = p.layer[2];
  AttentionLayerTensors lt{lp.W.stage(tape),  lp.W1.stage(tape),      lp.W2.stage(tape),
                           lp.a.stage(tape),  lp.ln_gain.stage(tape), lp.ln_bias.stage(tape)};
  Tensor R = p.R.stage(tape);
  Tensor out = dan_layer(d_prev, d_prev2, idx, lt, &R);

  std::vector<int> allowed{d_prev.node(), d_prev2.node(), lt.W.node(), lt.W1.node(), lt.W2.node(),
                           lt.a.node(),   R.node()};
  std::sort(allowed.begin(), allowed.end());
  auto leaves = tape.reachable_leaves(out.node());
  CHECK_FALSE(leaves.empty());
  for (int leaf : leaves) CHECK(std::binary_search(allowed.begin(), allowed.end(), leaf));
}

TEST_CASE("degenerate entities are reported and zero-filled") {
  KnowledgeGraph g = star_graph(3);
  NeighborIndex idx = build_neighbor_index(g, AggregationMode::kDecentralized, /*add_inverse=*/false);
  CHECK(idx.degenerate_entities() == std::vector<int>{1, 2, 3});

  std::mt19937_64 rng(14);
  EncoderParams p = EncoderParams::init(4, 3, 4, 1, rng);
  LayerOutputs outs = encoder_forward_eval(p, idx, EncoderMode::kDan);
  CHECK(outs.degenerate == std::vector<int>{1, 2, 3});
  for (int j = 0; j < 4; ++j) CHECK(outs.layer(0).at(1, j) == 0.0);

  ForwardOptions strict;
  strict.strict_degenerate = true;
  CHECK_THROWS_AS(encoder_forward(constant_view(p), idx, EncoderMode::kDan, strict),
                  DegenerateNeighborhoodError);
}

TEST_CASE("full encoder gradients pass finite differences") {
  KnowledgeGraph g = generate_synthetic_kg(7, 2, 3.0, 19);
  NeighborIndex idx = build_neighbor_index(g, AggregationMode::kDecentralized, true);
  std::mt19937_64 rng(23);
  EncoderParams p = EncoderParams::init(7, idx.extended_relations(), 3, 2, rng);
  ParamSet ps = p.collect();

  ForwardOptions opt;
  opt.training = false;
  auto rep = check_gradients("encoder_forward", ps, [&](Tape& t) {
    StagedEncoder staged = stage_encoder(t, p);
    LayerOutputs outs = encoder_forward(staged, idx, EncoderMode::kDan, opt);
    Tensor fin = final_output(outs, TaskKind::kAlignment);
    return GradProbe{sum_all(mul(fin, fin)), staged.leaves()};
  });
  INFO("max rel err " << rep.max_rel_err);
  CHECK(rep.pass);
}

TEST_CASE("checkpoint round-trip is value-exact") {
  std::mt19937_64 rng(31);
  EncoderParams p = EncoderParams::init(5, 7, 4, 2, rng);
  auto path = (std::filesystem::temp_directory_path() / "kgrl_ckpt_test.bin").string();
  save_checkpoint(path, p.collect(), {{"dim", "4"}, {"layers", "2"}, {"mode", "dan"}});

  Checkpoint ck = load_checkpoint(path);
  CHECK(ck.meta_int("dim") == 4);
  CHECK(ck.meta_str("mode") == "dan");
  EncoderParams q = EncoderParams::from_param_set(ck.params, 4, 2);
  CHECK(*q.E.value == *p.E.value);
  CHECK(*q.layer[1].a.value == *p.layer[1].a.value);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.bin"), IoError);
}

TEST_CASE("encoder parameter validation") {
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(EncoderParams::init(3, 3, 4, 0, rng), ParamError);
}
