#include "motion/optim.hpp"

#include <algorithm>
#include <cmath>

#include "motion/errors.hpp"

namespace motion::train {

Adam::Adam(std::vector<diff::Parameter*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  state_.reserve(params_.size());
  for (const diff::Parameter* p : params_)
    state_.push_back(
        {Tensor(p->value().rows(), p->value().cols()),
         Tensor(p->value().rows(), p->value().cols())});
}

void Adam::step(double lr_scale) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const double lr = cfg_.lr * lr_scale;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& value = params_[i]->value();
    const Tensor& grad = params_[i]->grad();
    Tensor& m = state_[i].m;
    Tensor& v = state_[i].v;
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double g = grad.data()[k];
      m.data()[k] = cfg_.beta1 * m.data()[k] + (1.0 - cfg_.beta1) * g;
      v.data()[k] = cfg_.beta2 * v.data()[k] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m.data()[k] / bc1;
      const double vhat = v.data()[k] / bc2;
      value.data()[k] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    if (!value.all_finite())
      throw TrainingError("adam: parameter '" + params_[i]->name() +
                          "' became non-finite");
  }
}

void Adam::zero_grad() {
  for (diff::Parameter* p : params_) p->zero_grad();
}

double lr_decay(int epoch) {
  return 1.0 - std::max(0.0, static_cast<double>(epoch) - 100.0) / 400.0;
}

}  // namespace motion::train
