#pragma once

#include <functional>
#include <string>
#include <vector>

#include "kgrl/param.hpp"
#include "kgrl/rng.hpp"
#include "kgrl/tensor.hpp"

namespace kgrl {

// A forward closure stages the given parameters on the tape (in order) and
// returns the scalar loss plus the staged leaves, so analytic gradients can
// be read back per parameter.
struct GradProbe {
  Tensor loss;
  std::vector<Tensor> staged;
};
using ForwardFn = std::function<GradProbe(Tape&)>;

struct GradCheckReport {
  std::string name;
  real max_rel_err = 0.0;
  bool pass = false;
};

// Central finite differences with step h against the tape's analytic
// gradients. Differences below atol are treated as finite-difference
// cancellation noise (the loss is O(1..1e3) in doubles, so the subtraction
// cannot resolve below ~1e-9); the relative error additionally uses an
// absolute floor so true-zero gradients do not blow up the quotient.
inline real max_rel_grad_error(ParamSet& params, const ForwardFn& forward, real h = 1e-5,
                               real atol = 1e-7) {
  Tape tape;
  GradProbe probe = forward(tape);
  tape.backward(probe.loss);
  std::vector<Buffer> analytic;
  analytic.reserve(probe.staged.size());
  for (const Tensor& leaf : probe.staged) analytic.push_back(tape.grad(leaf));

  real worst = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Buffer& x = *params[pi].value;
    for (size_t j = 0; j < x.size(); ++j) {
      const real orig = x[j];
      x[j] = orig + h;
      Tape tp;
      const real up = forward(tp).loss.item();
      x[j] = orig - h;
      Tape tm;
      const real dn = forward(tm).loss.item();
      x[j] = orig;
      const real numeric = (up - dn) / (2.0 * h);
      const real a = analytic[pi][j];
      const real diff = std::abs(a - numeric);
      if (diff <= atol) continue;
      const real rel = diff / std::max({std::abs(a), std::abs(numeric), 1e-6});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

inline GradCheckReport check_gradients(std::string name, ParamSet& params, const ForwardFn& forward,
                                       real tol = 1e-4, real h = 1e-5) {
  GradCheckReport rep;
  rep.name = std::move(name);
  rep.max_rel_err = max_rel_grad_error(params, forward, h);
  rep.pass = rep.max_rel_err <= tol;
  return rep;
}

namespace gradcheck_detail {

inline NamedParam random_param(const std::string& name, std::int64_t r, std::int64_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<real> unif(-1.0, 1.0);
  auto buf = std::make_shared<Buffer>(static_cast<size_t>(r * c));
  for (real& v : *buf) v = unif(rng);
  return {name, r, c, buf};
}

inline SegmentIndex random_segments(std::int64_t rows, int segments, std::mt19937_64& rng) {
  SegmentIndex idx;
  idx.num_segments = segments;
  idx.segment_of.resize(rows);
  std::uniform_int_distribution<int> pick(0, segments - 1);
  // Guarantee every segment non-empty.
  for (int s = 0; s < segments && s < rows; ++s) idx.segment_of[s] = s;
  for (std::int64_t i = segments; i < rows; ++i) idx.segment_of[i] = pick(rng);
  return idx;
}

}  // namespace gradcheck_detail

// Finite-difference battery over every differentiable tensor op, on
// randomized shapes. Shared by the unit tests and the gradcheck CLI command.
inline std::vector<GradCheckReport> run_op_gradchecks(std::uint64_t seed, real tol = 1e-4) {
  using gradcheck_detail::random_param;
  using gradcheck_detail::random_segments;
  std::vector<GradCheckReport> out;
  std::mt19937_64 rng(fanout_seed(seed, "gradcheck-ops"));

  auto check1 = [&](const std::string& name, std::int64_t r, std::int64_t c,
                    const std::function<Tensor(const Tensor&)>& fn) {
    ParamSet ps{random_param("x", r, c, rng)};
    out.push_back(check_gradients(name, ps, [&](Tape& t) {
      Tensor x = ps[0].stage(t);
      return GradProbe{sum_all(fn(x)), {x}};
    }, tol));
  };

  check1("add", 3, 4, [&](const Tensor& x) { return add(x, x); });
  {
    ParamSet ps{random_param("a", 3, 4, rng), random_param("b", 3, 4, rng)};
    out.push_back(check_gradients("sub", ps, [&](Tape& t) {
      Tensor a = ps[0].stage(t), b = ps[1].stage(t);
      return GradProbe{sum_all(mul(sub(a, b), sub(a, b))), {a, b}};
    }, tol));
  }
  {
    ParamSet ps{random_param("a", 2, 5, rng), random_param("b", 2, 5, rng)};
    out.push_back(check_gradients("mul", ps, [&](Tape& t) {
      Tensor a = ps[0].stage(t), b = ps[1].stage(t);
      return GradProbe{sum_all(mul(a, b)), {a, b}};
    }, tol));
  }
  check1("scale", 3, 3, [&](const Tensor& x) { return scale(x, -2.5); });
  {
    ParamSet ps{random_param("x", 3, 3, rng), random_param("b", 1, 1, rng)};
    out.push_back(check_gradients("add_bias", ps, [&](Tape& t) {
      Tensor x = ps[0].stage(t), b = ps[1].stage(t);
      return GradProbe{sum_all(mul(add_bias(x, b), add_bias(x, b))), {x, b}};
    }, tol));
  }
  {
    ParamSet ps{random_param("a", 3, 4, rng), random_param("b", 4, 2, rng)};
    out.push_back(check_gradients("matmul", ps, [&](Tape& t) {
      Tensor a = ps[0].stage(t), b = ps[1].stage(t);
      return GradProbe{sum_all(mul(matmul(a, b), matmul(a, b))), {a, b}};
    }, tol));
  }
  check1("transpose", 3, 5, [&](const Tensor& x) { return matmul(transpose(x), x); });
  {
    ParamSet ps{random_param("a", 4, 2, rng), random_param("b", 4, 3, rng)};
    out.push_back(check_gradients("concat_cols", ps, [&](Tape& t) {
      Tensor a = ps[0].stage(t), b = ps[1].stage(t);
      Tensor cc = concat_cols(a, b);
      return GradProbe{sum_all(mul(cc, cc)), {a, b}};
    }, tol));
  }
  check1("gather_rows", 5, 3, [&](const Tensor& x) {
    Tensor g = gather_rows(x, {0, 2, 2, 4, 1});
    return mul(g, g);
  });
  check1("select_per_row", 4, 3, [&](const Tensor& x) {
    Tensor s = select_per_row(x, {0, 2, 1, 2});
    return mul(s, s);
  });
  {
    ParamSet ps{random_param("x", 4, 3, rng), random_param("s", 4, 1, rng)};
    out.push_back(check_gradients("mul_rowwise", ps, [&](Tape& t) {
      Tensor x = ps[0].stage(t), s = ps[1].stage(t);
      return GradProbe{sum_all(mul_rowwise(x, s)), {x, s}};
    }, tol));
  }
  check1("exp", 2, 3, [&](const Tensor& x) { return exp_t(x); });
  check1("log", 2, 3, [&](const Tensor& x) { return log_t(add_scalar(mul(x, x), 0.5)); });
  check1("leaky_relu", 4, 4, [&](const Tensor& x) { return leaky_relu(x, 0.2); });
  check1("relu", 4, 4, [&](const Tensor& x) { return relu(x); });
  check1("sum", 3, 4, [&](const Tensor& x) { return sum_all(mul(x, x)); });
  check1("mean", 3, 4, [&](const Tensor& x) { return mean_all(mul(x, x)); });
  check1("rowwise_l2norm", 4, 3, [&](const Tensor& x) { return rowwise_l2norm(add_scalar(x, 2.0)); });
  check1("row_logsumexp", 3, 5, [&](const Tensor& x) { return row_logsumexp(x); });
  {
    ParamSet ps{random_param("x", 3, 4, rng), random_param("y", 5, 4, rng)};
    out.push_back(check_gradients("pairwise_l2", ps, [&](Tape& t) {
      Tensor x = ps[0].stage(t), y = ps[1].stage(t);
      return GradProbe{sum_all(pairwise_l2(x, y)), {x, y}};
    }, tol));
  }
  {
    SegmentIndex idx = random_segments(10, 4, rng);
    ParamSet ps{random_param("scores", 10, 1, rng)};
    out.push_back(check_gradients("segment_softmax", ps, [&](Tape& t) {
      Tensor s = ps[0].stage(t);
      Tensor sm = segment_softmax(s, idx);
      return GradProbe{sum_all(mul(sm, sm)), {s}};
    }, tol));
  }
  {
    SegmentIndex idx = random_segments(10, 4, rng);
    ParamSet ps{random_param("v", 10, 3, rng)};
    out.push_back(check_gradients("segment_sum", ps, [&](Tape& t) {
      Tensor v = ps[0].stage(t);
      Tensor ss = segment_sum(v, idx);
      return GradProbe{sum_all(mul(ss, ss)), {v}};
    }, tol));
  }
  {
    SegmentIndex idx = random_segments(10, 4, rng);
    ParamSet ps{random_param("v", 10, 3, rng)};
    out.push_back(check_gradients("segment_mean", ps, [&](Tape& t) {
      Tensor v = ps[0].stage(t);
      Tensor sm = segment_mean(v, idx);
      return GradProbe{sum_all(mul(sm, sm)), {v}};
    }, tol));
  }
  {
    ParamSet ps{random_param("x", 4, 6, rng), random_param("g", 1, 6, rng), random_param("b", 1, 6, rng)};
    out.push_back(check_gradients("layer_norm", ps, [&](Tape& t) {
      Tensor x = ps[0].stage(t), g = ps[1].stage(t), b = ps[2].stage(t);
      Tensor y = layer_norm(x, g, b);
      return GradProbe{sum_all(mul(y, y)), {x, g, b}};
    }, tol));
  }
  {
    // Mask is seed-fixed, so finite differences see the same network.
    const std::uint64_t mask_seed = fanout_seed(seed, "gradcheck-dropout");
    ParamSet ps{random_param("x", 6, 5, rng)};
    out.push_back(check_gradients("dropout", ps, [&](Tape& t) {
      Tensor x = ps[0].stage(t);
      Tensor y = dropout(x, 0.4, mask_seed, true);
      return GradProbe{sum_all(mul(y, y)), {x}};
    }, tol));
  }
  return out;
}

}  // namespace kgrl
