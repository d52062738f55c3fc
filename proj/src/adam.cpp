#include "capsid/adam.hpp"

#include <cmath>

namespace capsid {

Adam::Adam(std::vector<TensorPtr> params, AdamConfig cfg) : cfg_(cfg) {
  slots_.reserve(params.size());
  for (auto& p : params) {
    p->ensure_grad();
    Slot s;
    s.m.assign(p->size(), 0.0);
    s.v.assign(p->size(), 0.0);
    s.p = std::move(p);
    slots_.push_back(std::move(s));
  }
}

void Adam::zero_grad() {
  for (auto& s : slots_) s.p->zero_grad();
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& s : slots_) {
    double* th = s.p->value.data();
    const double* g = s.p->grad.data();
    for (std::size_t i = 0; i < s.m.size(); ++i) {
      s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g[i];
      s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double m_hat = s.m[i] / bc1;
      const double v_hat = s.v[i] / bc2;
      th[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
  }
}

}  // namespace capsid
