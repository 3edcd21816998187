#pragma once

#include <functional>
#include <vector>

#include "tokflow/checkpoint.hpp"
#include "tokflow/optim.hpp"
#include "tokflow/transformer.hpp"

namespace tokflow {

struct FlowConfig {
  size_t tokens = 8;       // latent sequence length T
  size_t latent_dim = 8;   // d
  size_t model_dim = 64;
  size_t heads = 4;
  size_t depth = 6;
  size_t num_classes = 4;

  double kappa = 3.0;
  size_t euler_steps = 50;
  double cfg_weight = 4.5;
  double cfg_t_lo = 0.225;
  double cfg_t_hi = 1.0;
  double label_dropout = 0.1;
  double ema_decay = 0.9995;

  void validate() const;
};

// t' = t / (kappa - (kappa-1) t); bijection on [0,1], t' <= t for kappa >= 1.
double time_shift(double t, double kappa);

// Linear interpolant z_t = (1-t) z0 + t z1.
std::vector<double> interpolate(const std::vector<double>& z0,
                                const std::vector<double>& z1, double t);

// DiT-style velocity model over the 1D latent sequence.
struct VelocityModel {
  FlowConfig cfg;
  Tensor in_w, in_b;   // d -> model_dim
  Tensor pos;          // [T, model_dim]
  ConditioningParams cond;
  std::vector<BlockParams> blocks;  // adaLN-conditioned
  Tensor final_mod_w, final_mod_b;  // model_dim -> 2*model_dim (shift, scale)
  Tensor out_w, out_b;              // model_dim -> d, zero-initialized

  std::vector<Tensor> parameters() const;
  NamedTensors named() const;
};

VelocityModel make_velocity_model(const FlowConfig& cfg, RngStream& rng);

// Batched forward: z:[B*T, d], one (t, label) pair per sample. Output [B*T, d].
Tensor velocity_forward(const VelocityModel& m, const Tensor& z,
                        const std::vector<double>& t, const std::vector<size_t>& labels);

// Plain-vector forward for sampling (no tape).
std::vector<double> velocity_eval(const VelocityModel& m, const std::vector<double>& z,
                                  double t, size_t label);

// Conditional flow-matching loss on a batch of clean latents z1 (one row of
// length T*d per sample). Draws z0 and t internally from rng; per-sample
// squared L2 between model velocity and (z1 - z0), batch-mean.
Tensor fm_loss(const VelocityModel& m, const std::vector<std::vector<double>>& z1,
               const std::vector<size_t>& labels, RngStream& rng);

// CFG combination: inside [t_lo, t_hi] v = v_u + w (v_c - v_u); outside (or at
// w == 1) the conditional velocity is returned untouched.
std::vector<double> guided_velocity(const VelocityModel& m, const std::vector<double>& z,
                                    double t, size_t label, const FlowConfig& cfg);

using VelocityFn =
    std::function<std::vector<double>(const std::vector<double>& z, double t)>;

// Euler integration over an explicit (already shifted) time grid.
std::vector<double> euler_integrate(const VelocityFn& v, std::vector<double> z,
                                    const std::vector<double>& t_grid);

// Uniform grid of `steps`+1 points through time_shift.
std::vector<double> shifted_time_grid(size_t steps, double kappa);

// Model-backed sampler: Gaussian z0 from rng, guided velocity, shifted grid.
std::vector<double> euler_sample(const VelocityModel& m, size_t label,
                                 const FlowConfig& cfg, RngStream& rng);

struct LatentStats {
  std::vector<double> mean, stddev;  // per coordinate (T*d entries)
};

LatentStats latent_stats(const std::vector<std::vector<double>>& latents);
void standardize_latents(std::vector<std::vector<double>>& latents, const LatentStats& s);
void destandardize_latent(std::vector<double>& z, const LatentStats& s);

struct FlowTrainOptions {
  size_t steps = 5000;
  size_t batch_size = 32;
  double lr = 2e-4;
  uint64_t seed = 1;
  size_t log_every = 100;
  size_t holdout_size = 64;
};

struct FlowStepLog {
  size_t step = 0;
  double loss = 0;
  double ema_val_loss = 0;
};

struct FlowTrainResult {
  std::vector<FlowStepLog> log;
  EmaState ema;
};

// Constant-LR AdamW (0.9, 0.95) with a per-step EMA update.
FlowTrainResult train_flow(VelocityModel& m,
                           const std::vector<std::vector<double>>& latents,
                           const std::vector<size_t>& labels,
                           const FlowTrainOptions& opts);

}  // namespace tokflow
