#include "tokflow/optim.hpp"

#include <cmath>

namespace tokflow {

AdamW::AdamW(std::vector<Tensor> params, double beta1, double beta2,
             double weight_decay, double eps)
    : params_(std::move(params)),
      beta1_(beta1),
      beta2_(beta2),
      weight_decay_(weight_decay),
      eps_(eps) {
  for (const Tensor& p : params_) {
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
    size_t nontrivial = 0;
    for (size_t d : p->shape)
      if (d > 1) ++nontrivial;
    decay_mask_.push_back(p->shape.size() >= 2 && nontrivial >= 2);
  }
}

void AdamW::step(double lr) {
  ++step_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& p = params_[pi];
    p->ensure_grad();
    if (p->grad.size() != p->val.size())
      throw DimError("adamw_step: gradient size mismatch");
    double wd = decay_mask_[pi] ? weight_decay_ : 0.0;
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (size_t i = 0; i < p->val.size(); ++i) {
      double g = p->grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p->val[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) + wd * p->val[i]);
    }
  }
}

void AdamW::zero_grad() {
  for (Tensor& p : params_) p->zero_grad();
}

double WsdSchedule::lr_at(double epoch_fraction) const {
  if (epoch_fraction < 0.0) throw ContractError("wsd_lr: negative epoch fraction");
  if (epoch_fraction > total_epochs() + 1e-12)
    throw ContractError("wsd_lr: epoch fraction past end of schedule");
  if (epoch_fraction < warmup_epochs)
    return warmup_lr + (peak_lr - warmup_lr) * (epoch_fraction / warmup_epochs);
  if (epoch_fraction <= warmup_epochs + stable_epochs) return peak_lr;
  double u = (epoch_fraction - warmup_epochs - stable_epochs) / decay_epochs;
  return min_lr + 0.5 * (peak_lr - min_lr) * (1.0 + std::cos(3.14159265358979323846 * u));
}

EmaState::EmaState(const std::vector<Tensor>& live, double decay) : decay_(decay) {
  for (const Tensor& p : live) shadow_.push_back(p->val);
}

void EmaState::update(const std::vector<Tensor>& live) {
  if (live.size() != shadow_.size()) throw DimError("ema_update: parameter count mismatch");
  for (size_t i = 0; i < live.size(); ++i) {
    if (live[i]->val.size() != shadow_[i].size())
      throw DimError("ema_update: shape mismatch");
    auto& s = shadow_[i];
    const auto& l = live[i]->val;
    for (size_t j = 0; j < s.size(); ++j)
      s[j] = decay_ * s[j] + (1.0 - decay_) * l[j];
  }
}

std::vector<Tensor> EmaState::snapshot(const std::vector<Tensor>& live) const {
  std::vector<Tensor> out;
  out.reserve(live.size());
  for (size_t i = 0; i < live.size(); ++i)
    out.push_back(constant(live[i]->shape, shadow_[i]));
  return out;
}

}  // namespace tokflow
