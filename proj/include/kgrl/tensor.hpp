#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "kgrl/error.hpp"

namespace kgrl {

using real = double;
using Buffer = std::vector<real>;
using BufferPtr = std::shared_ptr<Buffer>;

class Tape;

// Dense 2-d tensor. Values are immutable once created; copies share the
// underlying buffer. A tensor either lives on a tape (node() >= 0) or is a
// plain constant that never accumulates gradient.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::int64_t rows, std::int64_t cols, BufferPtr values, Tape* tape = nullptr, int node = -1)
      : rows_(rows), cols_(cols), values_(std::move(values)), tape_(tape), node_(node) {
    if (rows_ < 0 || cols_ < 0 || static_cast<std::int64_t>(values_->size()) != rows_ * cols_)
      throw ShapeError("buffer length does not match shape");
  }

  static Tensor zeros(std::int64_t rows, std::int64_t cols) {
    return Tensor(rows, cols, std::make_shared<Buffer>(static_cast<size_t>(rows * cols), 0.0));
  }
  static Tensor from(std::int64_t rows, std::int64_t cols, Buffer values) {
    return Tensor(rows, cols, std::make_shared<Buffer>(std::move(values)));
  }
  static Tensor scalar(real v) { return from(1, 1, {v}); }

  std::int64_t rows() const { return rows_; }
  std::int64_t cols() const { return cols_; }
  std::int64_t size() const { return rows_ * cols_; }
  std::vector<std::int64_t> shape() const { return {rows_, cols_}; }

  const Buffer& values() const { return *values_; }
  const BufferPtr& buffer() const { return values_; }
  real at(std::int64_t r, std::int64_t c) const { return (*values_)[r * cols_ + c]; }
  real item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar tensor");
    return (*values_)[0];
  }

  bool tracked() const { return node_ >= 0; }
  int node() const { return node_; }
  Tape* tape() const { return tape_; }

 private:
  std::int64_t rows_ = 0, cols_ = 0;
  BufferPtr values_ = std::make_shared<Buffer>();
  Tape* tape_ = nullptr;
  int node_ = -1;
};

// Define-by-run tape. Operations are recorded in execution order, which is a
// topological order by construction, so the backward pass simply walks node
// ids from the loss down to zero. A tape is built for one step and discarded.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Buffer& upstream)>;

  // Stages an externally owned parameter buffer as a gradient leaf. The
  // buffer is shared, not copied, so optimizer updates between steps are
  // visible to the next staging.
  Tensor leaf(const BufferPtr& values, std::int64_t rows, std::int64_t cols) {
    int id = record({}, static_cast<size_t>(rows * cols), nullptr);
    return Tensor(rows, cols, values, this, id);
  }

  int record(std::vector<int> parents, size_t size, BackwardFn fn) {
    nodes_.push_back(Node{std::move(parents), size, std::move(fn)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  size_t num_nodes() const { return nodes_.size(); }

  // Accumulation target for backward closures.
  Buffer& grad_buffer(int id) {
    auto& g = grads_[id];
    if (g.empty()) g.assign(nodes_[id].size, 0.0);
    touched_[id] = 1;
    return g;
  }

  void backward(const Tensor& loss) {
    if (loss.tape() != this || !loss.tracked()) throw TapeError("loss is not on this tape");
    if (loss.size() != 1) throw ShapeError("backward requires a scalar loss");
    if (backward_done_) throw TapeError("backward already run on this tape");
    backward_done_ = true;
    grads_.assign(nodes_.size(), Buffer{});
    touched_.assign(nodes_.size(), 0);
    grad_buffer(loss.node())[0] = 1.0;
    for (int id = loss.node(); id >= 0; --id) {
      if (!touched_[id] || !nodes_[id].backward) continue;
      nodes_[id].backward(*this, grads_[id]);
    }
  }

  // Gradient of a tracked tensor after backward(); zero if the loss did not
  // reach it.
  const Buffer& grad(const Tensor& t) {
    if (t.tape() != this || !t.tracked()) throw TapeError("tensor is not tracked on this tape");
    if (!backward_done_) throw TapeError("grad() before backward()");
    auto& g = grads_[t.node()];
    if (g.empty()) g.assign(nodes_[t.node()].size, 0.0);
    return g;
  }

  // Node ids of all leaves (nodes with no recorded parents and no backward
  // fn of their own inputs) reachable from `node`, inclusive of itself if it
  // is a leaf. Used by structural tests.
  std::vector<int> reachable_leaves(int node) const {
    std::vector<char> seen(nodes_.size(), 0);
    std::vector<int> stack{node}, out;
    while (!stack.empty()) {
      int id = stack.back();
      stack.pop_back();
      if (id < 0 || seen[id]) continue;
      seen[id] = 1;
      if (nodes_[id].parents.empty())
        out.push_back(id);
      else
        for (int p : nodes_[id].parents) stack.push_back(p);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  struct Node {
    std::vector<int> parents;
    size_t size;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::vector<Buffer> grads_;
  std::vector<char> touched_;
  bool backward_done_ = false;
};

namespace detail {

inline Tape* joint_tape(const Tensor& a, const Tensor& b) {
  if (a.tracked() && b.tracked() && a.tape() != b.tape())
    throw TapeError("operands recorded on different tapes");
  return a.tracked() ? a.tape() : (b.tracked() ? b.tape() : nullptr);
}

inline std::vector<int> parent_ids(std::initializer_list<const Tensor*> ts) {
  std::vector<int> ids;
  for (const Tensor* t : ts)
    if (t->tracked()) ids.push_back(t->node());
  return ids;
}

inline void axpy(Buffer& dst, const Buffer& src) {
  for (size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

// dst[m×n] += a[m×k] * b[k×n], with optional transposes on the inputs.
inline void gemm_acc(Buffer& dst, const Buffer& a, const Buffer& b, std::int64_t m, std::int64_t k,
                     std::int64_t n, bool ta, bool tb) {
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t p = 0; p < k; ++p) {
      const real av = ta ? a[p * m + i] : a[i * k + p];
      if (av == 0.0) continue;
      const real* brow = tb ? nullptr : &b[p * n];
      if (tb) {
        for (std::int64_t j = 0; j < n; ++j) dst[i * n + j] += av * b[j * k + p];
      } else {
        real* drow = &dst[i * n];
        for (std::int64_t j = 0; j < n; ++j) drow[j] += av * brow[j];
      }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and scalar ops
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("add: operand shapes differ");
  auto out = std::make_shared<Buffer>(a.values());
  detail::axpy(*out, b.values());
  Tape* tp = detail::joint_tape(a, b);
  int node = -1;
  if (tp) {
    node = tp->record(detail::parent_ids({&a, &b}), out->size(),
                      [pa = a.node(), pb = b.node()](Tape& t, const Buffer& u) {
                        if (pa >= 0) detail::axpy(t.grad_buffer(pa), u);
                        if (pb >= 0) detail::axpy(t.grad_buffer(pb), u);
                      });
  }
  return Tensor(a.rows(), a.cols(), out, tp, node);
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("sub: operand shapes differ");
  auto out = std::make_shared<Buffer>(a.values());
  for (size_t i = 0; i < out->size(); ++i) (*out)[i] -= b.values()[i];
  Tape* tp = detail::joint_tape(a, b);
  int node = -1;
  if (tp) {
    node = tp->record(detail::parent_ids({&a, &b}), out->size(),
                      [pa = a.node(), pb = b.node()](Tape& t, const Buffer& u) {
                        if (pa >= 0) detail::axpy(t.grad_buffer(pa), u);
                        if (pb >= 0) {
                          Buffer& g = t.grad_buffer(pb);
                          for (size_t i = 0; i < u.size(); ++i) g[i] -= u[i];
                        }
                      });
  }
  return Tensor(a.rows(), a.cols(), out, tp, node);
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("mul: operand shapes differ");
  auto out = std::make_shared<Buffer>(a.size());
  for (std::int64_t i = 0; i < a.size(); ++i) (*out)[i] = a.values()[i] * b.values()[i];
  Tape* tp = detail::joint_tape(a, b);
  int node = -1;
  if (tp) {
    node = tp->record(detail::parent_ids({&a, &b}), out->size(),
                      [pa = a.node(), pb = b.node(), va = a.buffer(), vb = b.buffer()](Tape& t, const Buffer& u) {
                        if (pa >= 0) {
                          Buffer& g = t.grad_buffer(pa);
                          for (size_t i = 0; i < u.size(); ++i) g[i] += u[i] * (*vb)[i];
                        }
                        if (pb >= 0) {
                          Buffer& g = t.grad_buffer(pb);
                          for (size_t i = 0; i < u.size(); ++i) g[i] += u[i] * (*va)[i];
                        }
                      });
  }
  return Tensor(a.rows(), a.cols(), out, tp, node);
}

inline Tensor scale(const Tensor& x, real c) {
  auto out = std::make_shared<Buffer>(x.size());
  for (std::int64_t i = 0; i < x.size(); ++i) (*out)[i] = c * x.values()[i];
  Tape* tp = x.tape();
  int node = -1;
  if (x.tracked()) {
    node = tp->record({x.node()}, out->size(), [p = x.node(), c](Tape& t, const Buffer& u) {
      Buffer& g = t.grad_buffer(p);
      for (size_t i = 0; i < u.size(); ++i) g[i] += c * u[i];
    });
  }
  return Tensor(x.rows(), x.cols(), out, x.tracked() ? tp : nullptr, node);
}

inline Tensor add_scalar(const Tensor& x, real c) {
  auto out = std::make_shared<Buffer>(x.size());
  for (std::int64_t i = 0; i < x.size(); ++i) (*out)[i] = x.values()[i] + c;
  Tape* tp = x.tape();
  int node = -1;
  if (x.tracked()) {
    node = tp->record({x.node()}, out->size(), [p = x.node()](Tape& t, const Buffer& u) {
      detail::axpy(t.grad_buffer(p), u);
    });
  }
  return Tensor(x.rows(), x.cols(), out, x.tracked() ? tp : nullptr, node);
}

// Broadcast-add of a 1x1 tensor (e.g. a scalar bias parameter).
inline Tensor add_bias(const Tensor& x, const Tensor& b) {
  if (b.size() != 1) throw ShapeError("add_bias: bias must be 1x1");
  auto out = std::make_shared<Buffer>(x.size());
  const real bv = b.values()[0];
  for (std::int64_t i = 0; i < x.size(); ++i) (*out)[i] = x.values()[i] + bv;
  Tape* tp = detail::joint_tape(x, b);
  int node = -1;
  if (tp) {
    node = tp->record(detail::parent_ids({&x, &b}), out->size(),
                      [px = x.node(), pb = b.node()](Tape& t, const Buffer& u) {
                        if (px >= 0) detail::axpy(t.grad_buffer(px), u);
                        if (pb >= 0) {
                          real s = 0.0;
                          for (real v : u) s += v;
                          t.grad_buffer(pb)[0] += s;
                        }
                      });
  }
  return Tensor(x.rows(), x.cols(), out, tp, node);
}

inline Tensor exp_t(const Tensor& x) {
  auto out = std::make_shared<Buffer>(x.size());
  for (std::int64_t i = 0; i < x.size(); ++i) (*out)[i] = std::exp(x.values()[i]);
  Tape* tp = x.tape();
  int node = -1;
  if (x.tracked()) {
    node = tp->record({x.node()}, out->size(), [p = x.node(), vo = out](Tape& t, const Buffer& u) {
      Buffer& g = t.grad_buffer(p);
      for (size_t i = 0; i < u.size(); ++i) g[i] += u[i] * (*vo)[i];
    });
  }
  return Tensor(x.rows(), x.cols(), out, x.tracked() ? tp : nullptr, node);
}

inline Tensor log_t(const Tensor& x) {
  auto out = std::make_shared<Buffer>(x.size());
  for (std::int64_t i = 0; i < x.size(); ++i) (*out)[i] = std::log(x.values()[i]);
  Tape* tp = x.tape();
  int node = -1;
  if (x.tracked()) {
    node = tp->record({x.node()}, out->size(), [p = x.node(), vx = x.buffer()](Tape& t, const Buffer& u) {
      Buffer& g = t.grad_buffer(p);
      for (size_t i = 0; i < u.size(); ++i) g[i] += u[i] / (*vx)[i];
    });
  }
  return Tensor(x.rows(), x.cols(), out, x.tracked() ? tp : nullptr, node);
}

// Subgradient at 0 is `slope`, matching the attention-score convention.
inline Tensor leaky_relu(const Tensor& x, real slope = 0.2) {
  if (!(slope > 0.0 && slope < 1.0)) throw ParamError("leaky_relu slope must be in (0,1)");
  auto out = std::make_shared<Buffer>(x.size());
  for (std::int64_t i = 0; i < x.size(); ++i) {
    real v = x.values()[i];
    (*out)[i] = v > 0.0 ? v : slope * v;
  }
  Tape* tp = x.tape();
  int node = -1;
  if (x.tracked()) {
    node = tp->record({x.node()}, out->size(), [p = x.node(), vx = x.buffer(), slope](Tape& t, const Buffer& u) {
      Buffer& g = t.grad_buffer(p);
      for (size_t i = 0; i < u.size(); ++i) g[i] += u[i] * ((*vx)[i] > 0.0 ? 1.0 : slope);
    });
  }
  return Tensor(x.rows(), x.cols(), out, x.tracked() ? tp : nullptr, node);
}

inline Tensor relu(const Tensor& x) {
  auto out = std::make_shared<Buffer>(x.size());
  for (std::int64_t i = 0; i < x.size(); ++i) (*out)[i] = std::max(x.values()[i], 0.0);
  Tape* tp = x.tape();
  int node = -1;
  if (x.tracked()) {
    node = tp->record({x.node()}, out->size(), [p = x.node(), vx = x.buffer()](Tape& t, const Buffer& u) {
      Buffer& g = t.grad_buffer(p);
      for (size_t i = 0; i < u.size(); ++i) g[i] += (*vx)[i] > 0.0 ? u[i] : 0.0;
    });
  }
  return Tensor(x.rows(), x.cols(), out, x.tracked() ? tp : nullptr, node);
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions disagree");
  const std::int64_t m = a.rows(), k = a.cols(), n = b.cols();
  auto out = std::make_shared<Buffer>(static_cast<size_t>(m * n), 0.0);
  detail::gemm_acc(*out, a.values(), b.values(), m, k, n, false, false);
  Tape* tp = detail::joint_tape(a, b);
  int node = -1;
  if (tp) {
    node = tp->record(detail::parent_ids({&a, &b}), out->size(),
                      [pa = a.node(), pb = b.node(), va = a.buffer(), vb = b.buffer(), m, k, n](Tape& t, const Buffer& u) {
                        if (pa >= 0) detail::gemm_acc(t.grad_buffer(pa), u, *vb, m, n, k, false, true);
                        if (pb >= 0) detail::gemm_acc(t.grad_buffer(pb), *va, u, k, m, n, true, false);
                      });
  }
  return Tensor(m, n, out, tp, node);
}

inline Tensor transpose(const Tensor& x) {
  const std::int64_t r = x.rows(), c = x.cols();
  auto out = std::make_shared<Buffer>(x.size());
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) (*out)[j * r + i] = x.values()[i * c + j];
  Tape* tp = x.tape();
  int node = -1;
  if (x.tracked()) {
    node = tp->record({x.node()}, out->size(), [p = x.node(), r, c](Tape& t, const Buffer& u) {
      Buffer& g = t.grad_buffer(p);
      for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) g[i * c + j] += u[j * r + i];
    });
  }
  return Tensor(c, r, out, x.tracked() ? tp : nullptr, node);
}

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) throw ShapeError("concat_cols: row counts differ");
  const std::int64_t r = a.rows(), ca = a.cols(), cb = b.cols();
  auto out = std::make_shared<Buffer>(static_cast<size_t>(r * (ca + cb)));
  for (std::int64_t i = 0; i < r; ++i) {
    std::copy_n(&a.values()[i * ca], ca, &(*out)[i * (ca + cb)]);
    std::copy_n(&b.values()[i * cb], cb, &(*out)[i * (ca + cb) + ca]);
  }
  Tape* tp = detail::joint_tape(a, b);
  int node = -1;
  if (tp) {
    node = tp->record(detail::parent_ids({&a, &b}), out->size(),
                      [pa = a.node(), pb = b.node(), r, ca, cb](Tape& t, const Buffer& u) {
                        if (pa >= 0) {
                          Buffer& g = t.grad_buffer(pa);
                          for (std::int64_t i = 0; i < r; ++i)
                            for (std::int64_t j = 0; j < ca; ++j) g[i * ca + j] += u[i * (ca + cb) + j];
                        }
                        if (pb >= 0) {
                          Buffer& g = t.grad_buffer(pb);
                          for (std::int64_t i = 0; i < r; ++i)
                            for (std::int64_t j = 0; j < cb; ++j) g[i * cb + j] += u[i * (ca + cb) + ca + j];
                        }
                      });
  }
  return Tensor(r, ca + cb, out, tp, node);
}

inline Tensor gather_rows(const Tensor& x, const std::vector<int>& ids) {
  const std::int64_t c = x.cols(), m = static_cast<std::int64_t>(ids.size());
  auto out = std::make_shared<Buffer>(static_cast<size_t>(m * c));
  for (std::int64_t i = 0; i < m; ++i) {
    if (ids[i] < 0 || ids[i] >= x.rows()) throw IndexError("gather_rows: row id out of range");
    std::copy_n(&x.values()[static_cast<std::int64_t>(ids[i]) * c], c, &(*out)[i * c]);
  }
  Tape* tp = x.tape();
  int node = -1;
  if (x.tracked()) {
    node = tp->record({x.node()}, out->size(), [p = x.node(), ids, c](Tape& t, const Buffer& u) {
      Buffer& g = t.grad_buffer(p);
      for (size_t i = 0; i < ids.size(); ++i)
        for (std::int64_t j = 0; j < c; ++j) g[static_cast<std::int64_t>(ids[i]) * c + j] += u[i * c + j];
    });
  }
  return Tensor(m, c, out, x.tracked() ? tp : nullptr, node);
}

// out[r,0] = x[r, cols[r]]
inline Tensor select_per_row(const Tensor& x, const std::vector<int>& cols) {
  if (static_cast<std::int64_t>(cols.size()) != x.rows())
    throw ShapeError("select_per_row: one column index per row required");
  const std::int64_t c = x.cols();
  auto out = std::make_shared<Buffer>(cols.size());
  for (size_t i = 0; i < cols.size(); ++i) {
    if (cols[i] < 0 || cols[i] >= c) throw IndexError("select_per_row: column out of range");
    (*out)[i] = x.values()[i * c + cols[i]];
  }
  Tape* tp = x.tape();
  int node = -1;
  if (x.tracked()) {
    node = tp->record({x.node()}, out->size(), [p = x.node(), cols, c](Tape& t, const Buffer& u) {
      Buffer& g = t.grad_buffer(p);
      for (size_t i = 0; i < cols.size(); ++i) g[i * c + cols[i]] += u[i];
    });
  }
  return Tensor(static_cast<std::int64_t>(cols.size()), 1, out, x.tracked() ? tp : nullptr, node);
}

// out[r,c] = x[r,c] * s[r,0]
inline Tensor mul_rowwise(const Tensor& x, const Tensor& s) {
  if (s.cols() != 1 || s.rows() != x.rows()) throw ShapeError("mul_rowwise: scale must be rows x 1");
  const std::int64_t r = x.rows(), c = x.cols();
  auto out = std::make_shared<Buffer>(x.size());
  for (std::int64_t i = 0; i < r; ++i) {
    const real sv = s.values()[i];
    for (std::int64_t j = 0; j < c; ++j) (*out)[i * c + j] = x.values()[i * c + j] * sv;
  }
  Tape* tp = detail::joint_tape(x, s);
  int node = -1;
  if (tp) {
    node = tp->record(detail::parent_ids({&x, &s}), out->size(),
                      [px = x.node(), ps = s.node(), vx = x.buffer(), vs = s.buffer(), r, c](Tape& t, const Buffer& u) {
                        if (px >= 0) {
                          Buffer& g = t.grad_buffer(px);
                          for (std::int64_t i = 0; i < r; ++i)
                            for (std::int64_t j = 0; j < c; ++j) g[i * c + j] += u[i * c + j] * (*vs)[i];
                        }
                        if (ps >= 0) {
                          Buffer& g = t.grad_buffer(ps);
                          for (std::int64_t i = 0; i < r; ++i) {
                            real acc = 0.0;
                            for (std::int64_t j = 0; j < c; ++j) acc += u[i * c + j] * (*vx)[i * c + j];
                            g[i] += acc;
                          }
                        }
                      });
  }
  return Tensor(r, c, out, tp, node);
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum_all(const Tensor& x) {
  real s = 0.0;
  for (real v : x.values()) s += v;
  auto out = std::make_shared<Buffer>(1, s);
  Tape* tp = x.tape();
  int node = -1;
  if (x.tracked()) {
    node = tp->record({x.node()}, 1, [p = x.node(), n = x.size()](Tape& t, const Buffer& u) {
      Buffer& g = t.grad_buffer(p);
      for (std::int64_t i = 0; i < n; ++i) g[i] += u[0];
    });
  }
  return Tensor(1, 1, out, x.tracked() ? tp : nullptr, node);
}

inline Tensor mean_all(const Tensor& x) {
  if (x.size() == 0) throw ShapeError("mean_all: empty tensor");
  return scale(sum_all(x), 1.0 / static_cast<real>(x.size()));
}

// Per-row L2 norm, rows x 1. Value is exact; the backward pass clamps the
// norm away from zero to keep the quotient finite.
inline Tensor rowwise_l2norm(const Tensor& x) {
  const std::int64_t r = x.rows(), c = x.cols();
  auto out = std::make_shared<Buffer>(static_cast<size_t>(r));
  for (std::int64_t i = 0; i < r; ++i) {
    real s = 0.0;
    for (std::int64_t j = 0; j < c; ++j) s += x.values()[i * c + j] * x.values()[i * c + j];
    (*out)[i] = std::sqrt(s);
  }
  Tape* tp = x.tape();
  int node = -1;
  if (x.tracked()) {
    node = tp->record({x.node()}, out->size(), [p = x.node(), vx = x.buffer(), vo = out, r, c](Tape& t, const Buffer& u) {
      Buffer& g = t.grad_buffer(p);
      for (std::int64_t i = 0; i < r; ++i) {
        const real inv = 1.0 / std::max((*vo)[i], 1e-30);
        for (std::int64_t j = 0; j < c; ++j) g[i * c + j] += u[i] * (*vx)[i * c + j] * inv;
      }
    });
  }
  return Tensor(r, 1, out, x.tracked() ? tp : nullptr, node);
}

// Numerically stable per-row log-sum-exp, rows x 1.
inline Tensor row_logsumexp(const Tensor& x) {
  const std::int64_t r = x.rows(), c = x.cols();
  if (c == 0) throw ShapeError("row_logsumexp: empty rows");
  auto out = std::make_shared<Buffer>(static_cast<size_t>(r));
  auto soft = std::make_shared<Buffer>(x.size());
  for (std::int64_t i = 0; i < r; ++i) {
    real mx = x.values()[i * c];
    for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, x.values()[i * c + j]);
    real s = 0.0;
    for (std::int64_t j = 0; j < c; ++j) {
      (*soft)[i * c + j] = std::exp(x.values()[i * c + j] - mx);
      s += (*soft)[i * c + j];
    }
    (*out)[i] = mx + std::log(s);
    for (std::int64_t j = 0; j < c; ++j) (*soft)[i * c + j] /= s;
  }
  Tape* tp = x.tape();
  int node = -1;
  if (x.tracked()) {
    node = tp->record({x.node()}, out->size(), [p = x.node(), soft, r, c](Tape& t, const Buffer& u) {
      Buffer& g = t.grad_buffer(p);
      for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) g[i * c + j] += u[i] * (*soft)[i * c + j];
    });
  }
  return Tensor(r, 1, out, x.tracked() ? tp : nullptr, node);
}

// out[b,c] = ||X[b,:] - Y[c,:]||_2 for all pairs.
inline Tensor pairwise_l2(const Tensor& x, const Tensor& y) {
  if (x.cols() != y.cols()) throw ShapeError("pairwise_l2: widths differ");
  const std::int64_t b = x.rows(), n = y.rows(), d = x.cols();
  auto out = std::make_shared<Buffer>(static_cast<size_t>(b * n));
  for (std::int64_t i = 0; i < b; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      real s = 0.0;
      for (std::int64_t k = 0; k < d; ++k) {
        const real dlt = x.values()[i * d + k] - y.values()[j * d + k];
        s += dlt * dlt;
      }
      (*out)[i * n + j] = std::sqrt(s);
    }
  Tape* tp = detail::joint_tape(x, y);
  int node = -1;
  if (tp) {
    node = tp->record(detail::parent_ids({&x, &y}), out->size(),
                      [px = x.node(), py = y.node(), vx = x.buffer(), vy = y.buffer(), vo = out, b, n, d](Tape& t, const Buffer& u) {
                        for (std::int64_t i = 0; i < b; ++i)
                          for (std::int64_t j = 0; j < n; ++j) {
                            const real uw = u[i * n + j];
                            if (uw == 0.0) continue;
                            const real inv = 1.0 / std::max((*vo)[i * n + j], 1e-30);
                            for (std::int64_t k = 0; k < d; ++k) {
                              const real dlt = ((*vx)[i * d + k] - (*vy)[j * d + k]) * inv * uw;
                              if (px >= 0) t.grad_buffer(px)[i * d + k] += dlt;
                              if (py >= 0) t.grad_buffer(py)[j * d + k] -= dlt;
                            }
                          }
                      });
  }
  return Tensor(b, n, out, tp, node);
}

// ---------------------------------------------------------------------------
// Segment (per-neighbor-group) ops
// ---------------------------------------------------------------------------

// Maps each neighbor-edge row to its target entity (segment).
struct SegmentIndex {
  std::vector<int> segment_of;  // per row
  int num_segments = 0;

  void validate(std::int64_t rows) const {
    if (static_cast<std::int64_t>(segment_of.size()) != rows)
      throw ShapeError("segment index does not cover all rows");
    for (int s : segment_of)
      if (s < 0 || s >= num_segments) throw IndexError("segment id out of range");
  }
};

// Softmax within each segment, computed with per-segment max subtraction.
inline Tensor segment_softmax(const Tensor& scores, const SegmentIndex& idx) {
  if (scores.cols() != 1) throw ShapeError("segment_softmax: scores must be rows x 1");
  const std::int64_t r = scores.rows();
  idx.validate(r);
  auto out = std::make_shared<Buffer>(static_cast<size_t>(r));
  std::vector<real> mx(idx.num_segments, -std::numeric_limits<real>::infinity());
  for (std::int64_t i = 0; i < r; ++i) mx[idx.segment_of[i]] = std::max(mx[idx.segment_of[i]], scores.values()[i]);
  std::vector<real> denom(idx.num_segments, 0.0);
  for (std::int64_t i = 0; i < r; ++i) {
    (*out)[i] = std::exp(scores.values()[i] - mx[idx.segment_of[i]]);
    denom[idx.segment_of[i]] += (*out)[i];
  }
  for (std::int64_t i = 0; i < r; ++i) (*out)[i] /= denom[idx.segment_of[i]];
  Tape* tp = scores.tape();
  int node = -1;
  if (scores.tracked()) {
    node = tp->record({scores.node()}, out->size(),
                      [p = scores.node(), vo = out, seg = idx.segment_of, ns = idx.num_segments, r](Tape& t, const Buffer& u) {
                        // d/ds_r = o_r * (u_r - sum_{s in segment} u_s o_s)
                        std::vector<real> dot(ns, 0.0);
                        for (std::int64_t i = 0; i < r; ++i) dot[seg[i]] += u[i] * (*vo)[i];
                        Buffer& g = t.grad_buffer(p);
                        for (std::int64_t i = 0; i < r; ++i) g[i] += (*vo)[i] * (u[i] - dot[seg[i]]);
                      });
  }
  return Tensor(r, 1, out, scores.tracked() ? tp : nullptr, node);
}

inline Tensor segment_sum(const Tensor& values, const SegmentIndex& idx) {
  const std::int64_t r = values.rows(), c = values.cols();
  idx.validate(r);
  auto out = std::make_shared<Buffer>(static_cast<size_t>(idx.num_segments) * c, 0.0);
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) (*out)[static_cast<std::int64_t>(idx.segment_of[i]) * c + j] += values.values()[i * c + j];
  Tape* tp = values.tape();
  int node = -1;
  if (values.tracked()) {
    node = tp->record({values.node()}, out->size(),
                      [p = values.node(), seg = idx.segment_of, c](Tape& t, const Buffer& u) {
                        Buffer& g = t.grad_buffer(p);
                        for (size_t i = 0; i < seg.size(); ++i)
                          for (std::int64_t j = 0; j < c; ++j) g[i * c + j] += u[static_cast<std::int64_t>(seg[i]) * c + j];
                      });
  }
  return Tensor(idx.num_segments, c, out, values.tracked() ? tp : nullptr, node);
}

// Empty segments yield zero rows; callers that consider that an error check
// counts themselves.
inline Tensor segment_mean(const Tensor& values, const SegmentIndex& idx) {
  const std::int64_t r = values.rows(), c = values.cols();
  idx.validate(r);
  std::vector<std::int64_t> count(idx.num_segments, 0);
  for (int s : idx.segment_of) ++count[s];
  auto out = std::make_shared<Buffer>(static_cast<size_t>(idx.num_segments) * c, 0.0);
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) (*out)[static_cast<std::int64_t>(idx.segment_of[i]) * c + j] += values.values()[i * c + j];
  for (int s = 0; s < idx.num_segments; ++s)
    if (count[s] > 0)
      for (std::int64_t j = 0; j < c; ++j) (*out)[static_cast<std::int64_t>(s) * c + j] /= static_cast<real>(count[s]);
  Tape* tp = values.tape();
  int node = -1;
  if (values.tracked()) {
    node = tp->record({values.node()}, out->size(),
                      [p = values.node(), seg = idx.segment_of, count, c](Tape& t, const Buffer& u) {
                        Buffer& g = t.grad_buffer(p);
                        for (size_t i = 0; i < seg.size(); ++i) {
                          const real inv = 1.0 / static_cast<real>(count[seg[i]]);
                          for (std::int64_t j = 0; j < c; ++j) g[i * c + j] += u[static_cast<std::int64_t>(seg[i]) * c + j] * inv;
                        }
                      });
  }
  return Tensor(idx.num_segments, c, out, values.tracked() ? tp : nullptr, node);
}

// ---------------------------------------------------------------------------
// Normalization, dropout, stop-gradient
// ---------------------------------------------------------------------------

inline constexpr real kLayerNormEps = 1e-6;

inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  const std::int64_t r = x.rows(), c = x.cols();
  if (gain.size() != c || bias.size() != c) throw ShapeError("layer_norm: gain/bias must have width d");
  auto out = std::make_shared<Buffer>(x.size());
  auto xhat = std::make_shared<Buffer>(x.size());
  auto inv_sigma = std::make_shared<Buffer>(static_cast<size_t>(r));
  for (std::int64_t i = 0; i < r; ++i) {
    real mu = 0.0;
    for (std::int64_t j = 0; j < c; ++j) mu += x.values()[i * c + j];
    mu /= static_cast<real>(c);
    real var = 0.0;
    for (std::int64_t j = 0; j < c; ++j) {
      const real d = x.values()[i * c + j] - mu;
      var += d * d;
    }
    var /= static_cast<real>(c);
    const real inv = 1.0 / std::sqrt(var + kLayerNormEps);
    (*inv_sigma)[i] = inv;
    for (std::int64_t j = 0; j < c; ++j) {
      (*xhat)[i * c + j] = (x.values()[i * c + j] - mu) * inv;
      (*out)[i * c + j] = (*xhat)[i * c + j] * gain.values()[j] + bias.values()[j];
    }
  }
  Tape* tp = detail::joint_tape(x, gain);
  if (!tp) tp = bias.tape();
  if (bias.tracked() && tp && bias.tape() != tp) throw TapeError("layer_norm operands on different tapes");
  int node = -1;
  if (tp) {
    node = tp->record(detail::parent_ids({&x, &gain, &bias}), out->size(),
                      [px = x.node(), pg = gain.node(), pb = bias.node(), xhat, inv_sigma,
                       vg = gain.buffer(), r, c](Tape& t, const Buffer& u) {
                        for (std::int64_t i = 0; i < r; ++i) {
                          if (pg >= 0) {
                            Buffer& gg = t.grad_buffer(pg);
                            for (std::int64_t j = 0; j < c; ++j) gg[j] += u[i * c + j] * (*xhat)[i * c + j];
                          }
                          if (pb >= 0) {
                            Buffer& gb = t.grad_buffer(pb);
                            for (std::int64_t j = 0; j < c; ++j) gb[j] += u[i * c + j];
                          }
                          if (px >= 0) {
                            // dx = inv_sigma * (dy*g - mean(dy*g) - xhat * mean(dy*g*xhat))
                            real m1 = 0.0, m2 = 0.0;
                            for (std::int64_t j = 0; j < c; ++j) {
                              const real dg = u[i * c + j] * (*vg)[j];
                              m1 += dg;
                              m2 += dg * (*xhat)[i * c + j];
                            }
                            m1 /= static_cast<real>(c);
                            m2 /= static_cast<real>(c);
                            Buffer& gx = t.grad_buffer(px);
                            for (std::int64_t j = 0; j < c; ++j) {
                              const real dg = u[i * c + j] * (*vg)[j];
                              gx[i * c + j] += (*inv_sigma)[i] * (dg - m1 - (*xhat)[i * c + j] * m2);
                            }
                          }
                        }
                      });
  }
  return Tensor(r, c, out, tp, node);
}

// Inverted dropout: survivors rescaled by 1/(1-rate) at train time so
// evaluation mode is the identity. Mask is fully determined by the seed.
inline Tensor dropout(const Tensor& x, real rate, std::uint64_t seed, bool training) {
  if (rate < 0.0 || rate >= 1.0) throw ParamError("dropout rate must be in [0,1)");
  if (!training || rate == 0.0) return x;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<real> unif(0.0, 1.0);
  auto mask = std::make_shared<Buffer>(x.size());
  const real keep_scale = 1.0 / (1.0 - rate);
  for (std::int64_t i = 0; i < x.size(); ++i) (*mask)[i] = unif(rng) < rate ? 0.0 : keep_scale;
  auto out = std::make_shared<Buffer>(x.size());
  for (std::int64_t i = 0; i < x.size(); ++i) (*out)[i] = x.values()[i] * (*mask)[i];
  Tape* tp = x.tape();
  int node = -1;
  if (x.tracked()) {
    node = tp->record({x.node()}, out->size(), [p = x.node(), mask](Tape& t, const Buffer& u) {
      Buffer& g = t.grad_buffer(p);
      for (size_t i = 0; i < u.size(); ++i) g[i] += u[i] * (*mask)[i];
    });
  }
  return Tensor(x.rows(), x.cols(), out, x.tracked() ? tp : nullptr, node);
}

// Stop-gradient: same values, no tape handle. No gradient ever flows through
// the result into x.
inline Tensor detach(const Tensor& x) { return Tensor(x.rows(), x.cols(), x.buffer()); }

}  // namespace kgrl
