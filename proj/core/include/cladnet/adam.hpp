#pragma once

#include <unordered_map>

#include "cladnet/params.hpp"
#include "cladnet/tape.hpp"

namespace cladnet {

// Adaptive-moment gradient descent. Keeps first/second moment estimates per
// parameter name; only parameters present in the gradient map are touched.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParameterStore& params, const Gradients& grads);
  void reset() { moments_.clear(); }
  double learning_rate() const { return lr_; }

 private:
  struct Moments {
    Tensor m;
    Tensor v;
    long long t = 0;
  };

  double lr_, beta1_, beta2_, eps_;
  std::unordered_map<std::string, Moments> moments_;
};

}  // namespace cladnet
