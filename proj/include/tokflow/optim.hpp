#pragma once

#include <vector>

#include "tokflow/tensor.hpp"

namespace tokflow {

// Decoupled-weight-decay Adam. Decay applies only to parameters with >= 2
// dimensions (weight matrices); 1-D gains, biases and embededded scalars are
// exempt.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, double beta1, double beta2,
        double weight_decay, double eps = 1e-8);

  // Consumes the gradients currently stored on the parameters.
  void step(double lr);
  void zero_grad();

  long long step_count() const { return step_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  std::vector<bool> decay_mask_;
  double beta1_, beta2_, weight_decay_, eps_;
  long long step_ = 0;
};

// Warmup-stable-decay learning-rate schedule: linear ramp, constant peak,
// cosine decay to the floor. Continuous at both phase boundaries.
struct WsdSchedule {
  double warmup_epochs = 5.0;
  double stable_epochs = 40.0;
  double decay_epochs = 5.0;
  double warmup_lr = 1e-6;
  double peak_lr = 1e-4;
  double min_lr = 1e-8;

  double total_epochs() const { return warmup_epochs + stable_epochs + decay_epochs; }
  double lr_at(double epoch_fraction) const;
};

// Shadow copy of a parameter set, updated as shadow = d*shadow + (1-d)*live.
class EmaState {
 public:
  EmaState() = default;
  EmaState(const std::vector<Tensor>& live, double decay);
  void update(const std::vector<Tensor>& live);
  // Materializes the shadow values as non-grad tensors shaped like the live set.
  std::vector<Tensor> snapshot(const std::vector<Tensor>& live) const;
  const std::vector<std::vector<double>>& shadow() const { return shadow_; }
  std::vector<std::vector<double>>& shadow() { return shadow_; }
  double decay() const { return decay_; }

 private:
  std::vector<std::vector<double>> shadow_;
  double decay_ = 0.9995;
};

}  // namespace tokflow
