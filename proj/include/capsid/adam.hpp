#pragma once

#include <cstdint>
#include <vector>

#include "capsid/tensor.hpp"

namespace capsid {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) with bias-corrected
// first and second moments.
class Adam {
 public:
  explicit Adam(std::vector<TensorPtr> params, AdamConfig cfg = {});

  void zero_grad();
  void step();
  std::int64_t steps() const { return t_; }

 private:
  struct Slot {
    TensorPtr p;
    std::vector<double> m;
    std::vector<double> v;
  };
  std::vector<Slot> slots_;
  AdamConfig cfg_;
  std::int64_t t_ = 0;
};

}  // namespace capsid
