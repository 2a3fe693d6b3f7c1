#include "voxbuild/optim.hpp"

#include <cmath>

namespace voxbuild {

Optimizer::Optimizer(OptimizerConfig config,
                     std::vector<std::pair<Tensor*, const Tensor*>> params)
    : config_(config), params_(std::move(params)) {
  slot_m_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    slot_m_[i].assign(params_[i].first->numel(), 0.0);
  }
  if (config_.kind == OptimizerKind::Adam) {
    slot_v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      slot_v_[i].assign(params_[i].first->numel(), 0.0);
    }
  }
}

void Optimizer::step(double lr) {
  ++t_;
  if (config_.kind == OptimizerKind::SgdMomentum) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      double* p = params_[i].first->data.data();
      const double* g = params_[i].second->data.data();
      double* m = slot_m_[i].data();
      const std::size_t n = params_[i].first->numel();
      for (std::size_t j = 0; j < n; ++j) {
        m[j] = config_.momentum * m[j] + g[j];
        p[j] -= lr * m[j];
      }
    }
    return;
  }
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    double* p = params_[i].first->data.data();
    const double* g = params_[i].second->data.data();
    double* m = slot_m_[i].data();
    double* v = slot_v_[i].data();
    const std::size_t n = params_[i].first->numel();
    for (std::size_t j = 0; j < n; ++j) {
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

}  // namespace voxbuild
