#include "cladnet/adam.hpp"

#include <cmath>

namespace cladnet {

void AdamOptimizer::step(ParameterStore& params, const Gradients& grads) {
  for (const auto& [name, grad] : grads.by_param) {
    Tensor& value = params.at(name);
    check_same_shape(value, grad, "adam step");
    Moments& st = moments_[name];
    if (st.m.empty()) {
      st.m = Tensor(value.shape());
      st.v = Tensor(value.shape());
    }
    st.t += 1;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(st.t));
    double* m = st.m.values().data();
    double* v = st.v.values().data();
    double* p = value.values().data();
    const double* g = grad.data().data();
    for (std::size_t i = 0; i < value.numel(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

}  // namespace cladnet
