// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "aedit/tensor.hpp"

namespace aedit {

/// Adam with bias correction, no weight decay.
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

  /// Updates every entry of `params` that has a gradient under the same name.
  void step(NamedTensors& params, const NamedTensors& grads);

  long steps_taken() const { return t_; }
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  NamedTensors m_, v_;
};

}  // namespace aedit
