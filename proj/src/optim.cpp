// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "aedit/optim.hpp"

#include <cmath>

#include "aedit/errors.hpp"

namespace aedit {

Adam::Adam(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(epsilon) {
  if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be > 0");
}

void Adam::step(NamedTensors& params, const NamedTensors& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw ValidationError("gradient for unknown parameter '" + name + "'");
    Tensor& p = it->second;
    require_same_shape(p, g, name.c_str());
    auto [mit, fresh] = m_.try_emplace(name, Tensor(p.shape));
    Tensor& m = mit->second;
    Tensor& v = v_.try_emplace(name, Tensor(p.shape)).first->second;
    for (std::size_t i = 0; i < p.numel(); ++i) {
      m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
      v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
      p[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

}  // namespace aedit
