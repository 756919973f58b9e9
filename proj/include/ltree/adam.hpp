#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ltree/tensor.hpp"

namespace ltree {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a fixed parameter set.
class Adam {
 public:
  explicit Adam(std::vector<Param*> params, AdamConfig cfg = {})
      : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (Param* p : params_) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }

  const std::vector<Param*>& params() const { return params_; }
  std::uint64_t step_count() const { return t_; }

  void zero_grad() {
    for (Param* p : params_) p->zero_grad();
  }

  void step() {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
      Param& p = *params_[pi];
      for (std::size_t i = 0; i < p.size(); ++i) {
        double g = p.grad[i];
        if (!std::isfinite(g))
          throw std::runtime_error("adam: non-finite gradient in " + p.name +
                                   "[" + std::to_string(i) + "]");
        double m = m_[pi][i] = cfg_.beta1 * m_[pi][i] + (1.0 - cfg_.beta1) * g;
        double v = v_[pi][i] = cfg_.beta2 * v_[pi][i] + (1.0 - cfg_.beta2) * g * g;
        p.value[i] -= cfg_.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg_.eps);
      }
    }
  }

  // moment access for checkpointing
  std::vector<std::vector<double>>& m() { return m_; }
  std::vector<std::vector<double>>& v() { return v_; }
  void restore_step_count(std::uint64_t t) { t_ = t; }

 private:
  std::vector<Param*> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace ltree
