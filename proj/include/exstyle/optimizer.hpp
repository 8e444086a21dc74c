#pragma once

#include <vector>

#include "exstyle/common.hpp"

/// @file optimizer.hpp Adaptive-moment optimizer with the canonical decay
/// defaults. Moment buffers are exposed for checkpointing so interrupted
/// runs resume bit-exactly.

namespace exstyle {

template <typename Scalar>
class Adam {
 public:
  Adam() = default;
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void attach(const ParamRefs<Scalar>& params) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (m_[i].rows() != params[i]->value.rows() ||
          m_[i].cols() != params[i]->value.cols()) {
        m_[i].setZero(params[i]->value.rows(), params[i]->value.cols());
        v_[i].setZero(params[i]->value.rows(), params[i]->value.cols());
      }
    }
  }

  void step(const ParamRefs<Scalar>& params) {
    check_arg(m_.size() == params.size(), "optimizer not attached to these params");
    ++t_;
    const Scalar b1 = Scalar(beta1_), b2 = Scalar(beta2_);
    const Scalar bc1 = Scalar(1.0 - std::pow(beta1_, double(t_)));
    const Scalar bc2 = Scalar(1.0 - std::pow(beta2_, double(t_)));
    const Scalar lr = Scalar(lr_), eps = Scalar(eps_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& g = params[i]->grad;
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * g;
      v_[i] = b2 * v_[i] + (Scalar(1) - b2) * g.cwiseProduct(g);
      params[i]->value.array() -=
          lr * (m_[i].array() / bc1) /
          ((v_[i].array() / bc2).sqrt() + eps);
    }
  }

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  long long step_count() const { return t_; }
  const std::vector<Mat<Scalar>>& first_moments() const { return m_; }
  const std::vector<Mat<Scalar>>& second_moments() const { return v_; }

  void restore(double lr, long long t, std::vector<Mat<Scalar>> m,
               std::vector<Mat<Scalar>> v) {
    lr_ = lr;
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
    for (std::size_t i = 0; i < m_.size(); ++i)
      check_arg(m_[i].size() > 0 && v_[i].size() > 0,
                "incomplete optimizer state in checkpoint");
  }

 private:
  double lr_ = 1e-4, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long long t_ = 0;
  std::vector<Mat<Scalar>> m_, v_;
};

}  // namespace exstyle
