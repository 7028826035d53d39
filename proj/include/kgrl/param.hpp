#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "kgrl/tensor.hpp"

namespace kgrl {

// A named, externally owned parameter buffer. Staged onto a fresh tape each
// step via Tape::leaf(), which shares the buffer so optimizer writes persist.
struct NamedParam {
  std::string name;
  std::int64_t rows = 0, cols = 0;
  BufferPtr value;

  static NamedParam zeros(std::string name, std::int64_t rows, std::int64_t cols) {
    return {std::move(name), rows, cols, std::make_shared<Buffer>(static_cast<size_t>(rows * cols), 0.0)};
  }
  static NamedParam ones(std::string name, std::int64_t rows, std::int64_t cols) {
    return {std::move(name), rows, cols, std::make_shared<Buffer>(static_cast<size_t>(rows * cols), 1.0)};
  }
  // Uniform fan-scaled (Xavier/Glorot) initialization.
  static NamedParam xavier(std::string name, std::int64_t rows, std::int64_t cols, std::mt19937_64& rng) {
    const real limit = std::sqrt(6.0 / static_cast<real>(rows + cols));
    std::uniform_real_distribution<real> unif(-limit, limit);
    auto buf = std::make_shared<Buffer>(static_cast<size_t>(rows * cols));
    for (real& v : *buf) v = unif(rng);
    return {std::move(name), rows, cols, buf};
  }

  std::int64_t size() const { return rows * cols; }
  Tensor stage(Tape& tape) const { return tape.leaf(value, rows, cols); }
  Tensor constant() const { return Tensor(rows, cols, value); }
};

using ParamSet = std::vector<NamedParam>;

inline NamedParam* find_param(ParamSet& ps, const std::string& name) {
  for (auto& p : ps)
    if (p.name == name) return &p;
  return nullptr;
}

// Adam. One step with lr 0 leaves parameters bit-identical.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(real lr = 1e-3, real beta1 = 0.9, real beta2 = 0.999, real eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamSet& params, const std::vector<Buffer>& grads) {
    if (params.size() != grads.size()) throw ParamError("adam: grad count mismatch");
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
      }
    }
    ++t_;
    const real bc1 = 1.0 - std::pow(beta1_, static_cast<real>(t_));
    const real bc2 = 1.0 - std::pow(beta2_, static_cast<real>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
      Buffer& x = *params[i].value;
      const Buffer& g = grads[i];
      for (size_t j = 0; j < x.size(); ++j) {
        m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g[j];
        v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g[j] * g[j];
        x[j] -= lr_ * (m_[i][j] / bc1) / (std::sqrt(v_[i][j] / bc2) + eps_);
      }
    }
  }

  real learning_rate() const { return lr_; }

 private:
  real lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Buffer> m_, v_;
};

}  // namespace kgrl
