#pragma once

#include <vector>

#include "motion/tape.hpp"

namespace motion::train {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(std::vector<diff::Parameter*> params, AdamConfig cfg = {});

  /// Applies one update from the accumulated gradients. lr_scale multiplies
  /// the base learning rate (used for the epoch decay schedule).
  void step(double lr_scale = 1.0);
  void zero_grad();

 private:
  struct State {
    Tensor m, v;
  };
  std::vector<diff::Parameter*> params_;
  std::vector<State> state_;
  AdamConfig cfg_;
  long t_ = 0;
};

/// Per-epoch learning-rate decay: 1 - max(0, epoch - 100) / 400.
double lr_decay(int epoch);

}  // namespace motion::train
