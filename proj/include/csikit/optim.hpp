#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "csikit/tensor.hpp"

namespace csikit::nn {

struct AdamWConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// AdamW with decoupled weight decay. Deterministic given identical inputs.
template <typename S>
class AdamWT {
 public:
  explicit AdamWT(AdamWConfig cfg = {}) : cfg_(cfg) {}

  const AdamWConfig& config() const { return cfg_; }
  std::size_t step_count() const { return t_; }

  void step(std::vector<ParameterT<S>>& params) {
    if (m_.empty()) init_state(params);
    require(m_.size() == params.size(), "adamw: parameter set changed");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto& tensor = params[p].tensor;
      const auto& g = tensor.grad();
      auto& w = tensor.mutable_value();
      require(m_[p].size() == w.size(), "adamw: shape changed for " + params[p].name);
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        if (!std::isfinite(gi))
          fail("adamw: NaN gradient in parameter " + params[p].name);
        m_[p][i] = cfg_.beta1 * m_[p][i] + (1.0 - cfg_.beta1) * gi;
        v_[p][i] = cfg_.beta2 * v_[p][i] + (1.0 - cfg_.beta2) * gi * gi;
        const double mhat = m_[p][i] / bc1;
        const double vhat = v_[p][i] / bc2;
        double x = static_cast<double>(w[i]);
        x -= cfg_.lr * cfg_.weight_decay * x;
        x -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        w[i] = static_cast<S>(x);
      }
    }
  }

  void zero_grads(std::vector<ParameterT<S>>& params) {
    for (auto& p : params) p.tensor.zero_grad();
  }

  // Moment accumulators, exposed for exact checkpoint/resume.
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  void set_step_count(std::size_t t) { t_ = t; }
  void init_state(const std::vector<ParameterT<S>>& params) {
    m_.assign(params.size(), {});
    v_.assign(params.size(), {});
    for (std::size_t p = 0; p < params.size(); ++p) {
      m_[p].assign(params[p].tensor.size(), 0.0);
      v_[p].assign(params[p].tensor.size(), 0.0);
    }
  }
  bool has_state() const { return !m_.empty(); }

 private:
  AdamWConfig cfg_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

using AdamW = AdamWT<double>;

}  // namespace csikit::nn
