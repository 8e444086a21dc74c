#pragma once

#include <vector>

#include "exstyle/layers.hpp"

/// @file exchange.hpp Feature Exchange blocks. Each block runs two residual
/// message passing units against the shared common code; residuals are added
/// by the caller-side update so a chain of blocks with zero weights is the
/// identity.

namespace exstyle {

template <typename Scalar>
struct ExchangeTriple {
  Vec<Scalar> common;
  Vec<Scalar> unique_c;
  Vec<Scalar> unique_s;
};

/// Residual message passing unit: four 256x256 layers.
///   s   = relu(W1 x) + relu(W2 y)
///   r_x = sigmoid(W3 s) .* s
///   r_y = sigmoid(W4 s) .* s
/// Returns the residuals only; the block applies the additive update.
template <typename Scalar>
class Rmpu {
 public:
  Rmpu() = default;
  explicit Rmpu(const std::string& name)
      : w1_(name + ".w1", kCodeDim, kCodeDim),
        w2_(name + ".w2", kCodeDim, kCodeDim),
        w3_(name + ".w3", kCodeDim, kCodeDim),
        w4_(name + ".w4", kCodeDim, kCodeDim) {}

  void init(Rng& rng) {
    w1_.init(rng);
    w2_.init(rng);
    w3_.init(rng);
    w4_.init(rng);
  }

  struct Cache {
    Vec<Scalar> x, y, a1, a2, s, gx, gy;
  };

  std::pair<Vec<Scalar>, Vec<Scalar>> forward(const Vec<Scalar>& x,
                                              const Vec<Scalar>& y,
                                              Cache* cache = nullptr) const {
    Vec<Scalar> a1 = relu(w1_.forward(x));
    Vec<Scalar> a2 = relu(w2_.forward(y));
    Vec<Scalar> s = a1 + a2;
    Vec<Scalar> gx = sigmoid(w3_.forward(s));
    Vec<Scalar> gy = sigmoid(w4_.forward(s));
    if (cache) *cache = {x, y, a1, a2, s, gx, gy};
    return {gx.cwiseProduct(s), gy.cwiseProduct(s)};
  }

  /// Gradients w.r.t. (x, y) given gradients of the two residuals.
  std::pair<Vec<Scalar>, Vec<Scalar>> backward(const Cache& c,
                                               const Vec<Scalar>& drx,
                                               const Vec<Scalar>& dry) {
    Vec<Scalar> dgx = drx.cwiseProduct(c.s);
    Vec<Scalar> dgy = dry.cwiseProduct(c.s);
    Vec<Scalar> ds = drx.cwiseProduct(c.gx) + dry.cwiseProduct(c.gy);
    ds += w3_.backward(c.s, sigmoid_backward(c.gx, dgx));
    ds += w4_.backward(c.s, sigmoid_backward(c.gy, dgy));
    Vec<Scalar> dx = w1_.backward(c.x, relu_backward(c.a1, ds));
    Vec<Scalar> dy = w2_.backward(c.y, relu_backward(c.a2, ds));
    return {dx, dy};
  }

  void params(ParamRefs<Scalar>& out) {
    w1_.params(out);
    w2_.params(out);
    w3_.params(out);
    w4_.params(out);
  }

 private:
  Dense<Scalar> w1_, w2_, w3_, w4_;
};

/// One Feature Exchange block: the common code talks to each unique code
/// through its own unit and is updated with both residuals.
template <typename Scalar>
class ExchangeBlock {
 public:
  ExchangeBlock() = default;
  explicit ExchangeBlock(const std::string& name)
      : unit_c_(name + ".unit_c"), unit_s_(name + ".unit_s") {}

  void init(Rng& rng) {
    unit_c_.init(rng);
    unit_s_.init(rng);
  }

  struct Cache {
    typename Rmpu<Scalar>::Cache c, s;
  };

  ExchangeTriple<Scalar> forward(const ExchangeTriple<Scalar>& t,
                                 Cache* cache = nullptr) const {
    auto [rc_com, rc_uni] =
        unit_c_.forward(t.common, t.unique_c, cache ? &cache->c : nullptr);
    auto [rs_com, rs_uni] =
        unit_s_.forward(t.common, t.unique_s, cache ? &cache->s : nullptr);
    return {t.common + rc_com + rs_com, t.unique_c + rc_uni, t.unique_s + rs_uni};
  }

  ExchangeTriple<Scalar> backward(const Cache& cache,
                                  const ExchangeTriple<Scalar>& dout) {
    auto [dxc, dyc] = unit_c_.backward(cache.c, dout.common, dout.unique_c);
    auto [dxs, dys] = unit_s_.backward(cache.s, dout.common, dout.unique_s);
    return {dout.common + dxc + dxs, dout.unique_c + dyc, dout.unique_s + dys};
  }

  void params(ParamRefs<Scalar>& out) {
    unit_c_.params(out);
    unit_s_.params(out);
  }

 private:
  Rmpu<Scalar> unit_c_, unit_s_;
};

/// Chain of exchange blocks. `shared` reuses the first block's weights for
/// every iteration (the weight-sharing ablation); `count` may be zero, in
/// which case the chain is the identity.
template <typename Scalar>
class ExchangeChain {
 public:
  ExchangeChain() = default;
  ExchangeChain(int count, bool shared) : count_(count), shared_(shared) {
    check_arg(count >= 0, "block count must be >= 0");
    const int distinct = shared ? (count > 0 ? 1 : 0) : count;
    for (int i = 0; i < distinct; ++i)
      blocks_.emplace_back("exchange.block" + std::to_string(i));
  }

  void init(Rng& rng) {
    for (auto& b : blocks_) b.init(rng);
  }

  int count() const { return count_; }
  bool shared() const { return shared_; }

  using Cache = std::vector<typename ExchangeBlock<Scalar>::Cache>;

  ExchangeTriple<Scalar> forward(const ExchangeTriple<Scalar>& t,
                                 Cache* cache = nullptr) const {
    if (cache) cache->assign(std::size_t(count_), {});
    ExchangeTriple<Scalar> cur = t;
    for (int i = 0; i < count_; ++i)
      cur = block(i).forward(cur, cache ? &(*cache)[std::size_t(i)] : nullptr);
    return cur;
  }

  ExchangeTriple<Scalar> backward(const Cache& cache,
                                  const ExchangeTriple<Scalar>& dout) {
    ExchangeTriple<Scalar> d = dout;
    for (int i = count_ - 1; i >= 0; --i)
      d = block_mut(i).backward(cache[std::size_t(i)], d);
    return d;
  }

  void params(ParamRefs<Scalar>& out) {
    for (auto& b : blocks_) b.params(out);
  }

 private:
  const ExchangeBlock<Scalar>& block(int i) const {
    return blocks_[shared_ ? 0 : std::size_t(i)];
  }
  ExchangeBlock<Scalar>& block_mut(int i) {
    return blocks_[shared_ ? 0 : std::size_t(i)];
  }

  int count_ = 0;
  bool shared_ = false;
  std::vector<ExchangeBlock<Scalar>> blocks_;
};

}  // namespace exstyle
