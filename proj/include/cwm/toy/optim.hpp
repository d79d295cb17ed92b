#pragma once

#include <cmath>
#include <vector>

#include <nlohmann/json.hpp>

#include "cwm/autograd/tensor.hpp"

namespace cwm::toy {

struct AdamWConfig {
  double lr = 2e-4;
  double beta1 = 0.8;
  double beta2 = 0.99;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay. Parameters without a gradient buffer
/// are treated as having a zero gradient.
class AdamW {
 public:
  AdamW() = default;
  AdamW(std::vector<ag::Tensor> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  std::size_t steps() const noexcept { return t_; }
  const AdamWConfig& config() const noexcept { return cfg_; }

  void step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& value = params_[k].mutable_value();
      const auto& grad = params_[k].grad();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = grad.empty() ? 0.0 : grad[i];
        value[i] -= lr * cfg_.weight_decay * value[i];
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
        value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
      }
    }
  }

  nlohmann::json state() const { return {{"t", t_}, {"m", m_}, {"v", v_}}; }

  void load_state(const nlohmann::json& j) {
    auto m = j.at("m").get<std::vector<std::vector<double>>>();
    auto v = j.at("v").get<std::vector<std::vector<double>>>();
    require(m.size() == m_.size() && v.size() == v_.size(), ErrorCode::kParse, "optimizer state size mismatch");
    for (std::size_t k = 0; k < m.size(); ++k)
      require(m[k].size() == m_[k].size() && v[k].size() == v_[k].size(), ErrorCode::kParse,
              "optimizer state shape mismatch");
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = j.at("t").get<std::size_t>();
  }

 private:
  std::vector<ag::Tensor> params_;
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace cwm::toy
