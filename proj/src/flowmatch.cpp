#include "tokflow/flowmatch.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tokflow/errors.hpp"

namespace tokflow {

namespace {
constexpr double kLnEps = 1e-6;

Tensor linear_init(size_t in, size_t out, RngStream& rng) {
  double stddev = std::sqrt(2.0 / static_cast<double>(in + out));
  return param_randn({in, out}, rng, stddev);
}
}  // namespace

void FlowConfig::validate() const {
  if (kappa < 1.0) throw ConfigError("flow: kappa must be >= 1");
  if (euler_steps == 0) throw ConfigError("flow: euler_steps must be positive");
  if (cfg_weight < 1.0) throw ConfigError("flow: cfg_weight must be >= 1");
  if (!(cfg_t_lo < cfg_t_hi) || cfg_t_lo < 0.0 || cfg_t_hi > 1.0)
    throw ConfigError("flow: cfg interval must satisfy 0 <= t_lo < t_hi <= 1");
  if (label_dropout < 0.0 || label_dropout >= 1.0)
    throw ConfigError("flow: label_dropout must be in [0,1)");
  if (ema_decay < 0.0 || ema_decay > 1.0)
    throw ConfigError("flow: ema_decay must be in [0,1]");
  if (model_dim % heads != 0) throw ConfigError("flow: heads must divide model_dim");
}

double time_shift(double t, double kappa) {
  if (kappa < 1.0) throw ConfigError("time_shift: kappa must be >= 1");
  if (t < 0.0 || t > 1.0) throw ContractError("time_shift: t out of [0,1]");
  return t / (kappa - (kappa - 1.0) * t);
}

std::vector<double> interpolate(const std::vector<double>& z0,
                                const std::vector<double>& z1, double t) {
  if (z0.size() != z1.size()) throw DimError("interpolate: shape mismatch");
  if (t < 0.0 || t > 1.0) throw ContractError("interpolate: t out of [0,1]");
  std::vector<double> zt(z0.size());
  for (size_t i = 0; i < zt.size(); ++i) zt[i] = (1.0 - t) * z0[i] + t * z1[i];
  return zt;
}

std::vector<Tensor> VelocityModel::parameters() const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : named()) out.push_back(t);
  return out;
}

NamedTensors VelocityModel::named() const {
  NamedTensors out;
  out.emplace_back("dit.in_w", in_w);
  out.emplace_back("dit.in_b", in_b);
  out.emplace_back("dit.pos", pos);
  cond.collect("dit.cond", out);
  for (size_t i = 0; i < blocks.size(); ++i)
    blocks[i].collect("dit.block" + std::to_string(i), out);
  out.emplace_back("dit.final_mod_w", final_mod_w);
  out.emplace_back("dit.final_mod_b", final_mod_b);
  out.emplace_back("dit.out_w", out_w);
  out.emplace_back("dit.out_b", out_b);
  return out;
}

VelocityModel make_velocity_model(const FlowConfig& cfg, RngStream& rng) {
  cfg.validate();
  VelocityModel m;
  m.cfg = cfg;
  RngStream r = rng.sub("dit-init");
  m.in_w = linear_init(cfg.latent_dim, cfg.model_dim, r);
  m.in_b = param_zeros({1, cfg.model_dim});
  m.pos = param_randn({cfg.tokens, cfg.model_dim}, r, 0.02);
  m.cond = make_conditioning(cfg.model_dim, cfg.num_classes, r);
  for (size_t i = 0; i < cfg.depth; ++i)
    m.blocks.push_back(make_block(cfg.model_dim, cfg.heads, r, true));
  m.final_mod_w = param_zeros({cfg.model_dim, 2 * cfg.model_dim});
  m.final_mod_b = param_zeros({1, 2 * cfg.model_dim});
  m.out_w = param_zeros({cfg.model_dim, cfg.latent_dim});
  m.out_b = param_zeros({1, cfg.latent_dim});
  return m;
}

Tensor velocity_forward(const VelocityModel& m, const Tensor& z,
                        const std::vector<double>& t, const std::vector<size_t>& labels) {
  size_t B = t.size(), T = m.cfg.tokens, D = m.cfg.model_dim;
  if (z->rows() != B * T || z->cols() != m.cfg.latent_dim)
    throw DimError("velocity_forward: latent batch shape mismatch");
  Tensor x = add_rowvec(mm(z, m.in_w), m.in_b);
  x = add(x, tile_rows(m.pos, B));
  Tensor c = conditioning_vector(m.cond, t, labels);
  for (const BlockParams& b : m.blocks) x = adaln_block_forward(b, x, c, B, T);
  // Final adaLN-modulated norm, then projection back to the latent dim.
  Tensor mod = add_rowvec(mm(silu(c), m.final_mod_w), m.final_mod_b);
  Tensor shift = col_slice(mod, 0, D);
  Tensor sc = col_slice(mod, D, 2 * D);
  Tensor ones = constant({1, D}, std::vector<double>(D, 1.0));
  Tensor zeros_b = constant({1, D}, std::vector<double>(D, 0.0));
  Tensor h = layer_norm(x, ones, zeros_b, kLnEps);
  h = add(mul(h, expand_rows(add_scalar(sc, 1.0), T)), expand_rows(shift, T));
  return add_rowvec(mm(h, m.out_w), m.out_b);
}

std::vector<double> velocity_eval(const VelocityModel& m, const std::vector<double>& z,
                                  double t, size_t label) {
  NoGrad ng;
  Tensor zt = constant({m.cfg.tokens, m.cfg.latent_dim}, z);
  return velocity_forward(m, zt, {t}, {label})->val;
}

Tensor fm_loss(const VelocityModel& m, const std::vector<std::vector<double>>& z1,
               const std::vector<size_t>& labels, RngStream& rng) {
  size_t B = z1.size();
  if (B == 0) throw ContractError("fm_loss: empty batch");
  if (labels.size() != B) throw DimError("fm_loss: label count mismatch");
  size_t n = m.cfg.tokens * m.cfg.latent_dim;
  std::vector<double> zt_flat(B * n), target_flat(B * n), t_shifted(B);
  std::vector<size_t> batch_labels(B);
  for (size_t b = 0; b < B; ++b) {
    if (z1[b].size() != n) throw DimError("fm_loss: latent size mismatch");
    double t_raw = rng.uniform();
    double t = time_shift(t_raw, m.cfg.kappa);
    t_shifted[b] = t;
    batch_labels[b] =
        rng.uniform() < m.cfg.label_dropout ? kNullClass : labels[b];
    for (size_t i = 0; i < n; ++i) {
      double z0 = rng.normal();
      zt_flat[b * n + i] = (1.0 - t) * z0 + t * z1[b][i];
      target_flat[b * n + i] = z1[b][i] - z0;
    }
  }
  Tensor zt = constant({B * m.cfg.tokens, m.cfg.latent_dim}, std::move(zt_flat));
  Tensor target = constant({B * m.cfg.tokens, m.cfg.latent_dim}, std::move(target_flat));
  Tensor v = velocity_forward(m, zt, t_shifted, batch_labels);
  Tensor diff = sub(v, target);
  // Per-sample squared L2 summed over T*d entries, averaged over the batch.
  return scale(sum_all(mul(diff, diff)), 1.0 / static_cast<double>(B));
}

std::vector<double> guided_velocity(const VelocityModel& m, const std::vector<double>& z,
                                    double t, size_t label, const FlowConfig& cfg) {
  std::vector<double> v_cond = velocity_eval(m, z, t, label);
  if (cfg.cfg_weight == 1.0 || t < cfg.cfg_t_lo || t > cfg.cfg_t_hi) return v_cond;
  std::vector<double> v_uncond = velocity_eval(m, z, t, kNullClass);
  for (size_t i = 0; i < v_cond.size(); ++i)
    v_cond[i] = v_uncond[i] + cfg.cfg_weight * (v_cond[i] - v_uncond[i]);
  return v_cond;
}

std::vector<double> euler_integrate(const VelocityFn& vfn, std::vector<double> z,
                                    const std::vector<double>& t_grid) {
  if (t_grid.size() < 2) throw ContractError("euler_integrate: need at least two grid points");
  for (size_t k = 0; k + 1 < t_grid.size(); ++k) {
    double t = t_grid[k];
    double dt = t_grid[k + 1] - t_grid[k];
    std::vector<double> v = vfn(z, t);
    if (v.size() != z.size()) throw DimError("euler_integrate: velocity size mismatch");
    for (size_t i = 0; i < z.size(); ++i) {
      z[i] += dt * v[i];
      if (!std::isfinite(z[i]))
        throw NumericError("euler_integrate: non-finite state at step " +
                           std::to_string(k));
    }
  }
  return z;
}

std::vector<double> shifted_time_grid(size_t steps, double kappa) {
  std::vector<double> grid(steps + 1);
  for (size_t k = 0; k <= steps; ++k)
    grid[k] = time_shift(static_cast<double>(k) / static_cast<double>(steps), kappa);
  return grid;
}

std::vector<double> euler_sample(const VelocityModel& m, size_t label,
                                 const FlowConfig& cfg, RngStream& rng) {
  size_t n = m.cfg.tokens * m.cfg.latent_dim;
  std::vector<double> z(n);
  for (double& x : z) x = rng.normal();
  auto vfn = [&](const std::vector<double>& zz, double t) {
    return guided_velocity(m, zz, t, label, cfg);
  };
  return euler_integrate(vfn, std::move(z), shifted_time_grid(cfg.euler_steps, cfg.kappa));
}

LatentStats latent_stats(const std::vector<std::vector<double>>& latents) {
  if (latents.empty()) throw ContractError("latent_stats: empty set");
  size_t n = latents[0].size();
  LatentStats s;
  s.mean.assign(n, 0.0);
  s.stddev.assign(n, 0.0);
  for (const auto& z : latents)
    for (size_t i = 0; i < n; ++i) s.mean[i] += z[i];
  for (size_t i = 0; i < n; ++i) s.mean[i] /= static_cast<double>(latents.size());
  for (const auto& z : latents)
    for (size_t i = 0; i < n; ++i) {
      double c = z[i] - s.mean[i];
      s.stddev[i] += c * c;
    }
  for (size_t i = 0; i < n; ++i)
    s.stddev[i] = std::max(1e-8, std::sqrt(s.stddev[i] / static_cast<double>(latents.size())));
  return s;
}

void standardize_latents(std::vector<std::vector<double>>& latents, const LatentStats& s) {
  for (auto& z : latents)
    for (size_t i = 0; i < z.size(); ++i) z[i] = (z[i] - s.mean[i]) / s.stddev[i];
}

void destandardize_latent(std::vector<double>& z, const LatentStats& s) {
  for (size_t i = 0; i < z.size(); ++i) z[i] = z[i] * s.stddev[i] + s.mean[i];
}

FlowTrainResult train_flow(VelocityModel& m,
                           const std::vector<std::vector<double>>& latents,
                           const std::vector<size_t>& labels,
                           const FlowTrainOptions& opts) {
  if (latents.empty()) throw ContractError("train_flow: empty latent set");
  if (latents.size() != labels.size()) throw DimError("train_flow: label count mismatch");
  std::vector<Tensor> params = m.parameters();
  AdamW opt(params, 0.9, 0.95, 0.0);
  FlowTrainResult result;
  result.ema = EmaState(params, m.cfg.ema_decay);

  RngStream batch_rng = RngStream(opts.seed).sub("flow-batch");
  RngStream noise_rng = RngStream(opts.seed).sub("flow-noise");

  // Fixed held-out batch with frozen (z0, t, dropout) draws, so the EMA metric
  // is comparable across steps.
  size_t hn = std::min(opts.holdout_size, latents.size());
  std::vector<std::vector<double>> hold_z;
  std::vector<size_t> hold_labels;
  RngStream hold_pick = RngStream(opts.seed).sub("flow-holdout");
  for (size_t i = 0; i < hn; ++i) {
    size_t j = hold_pick.uniform_index(latents.size());
    hold_z.push_back(latents[j]);
    hold_labels.push_back(labels[j]);
  }

  for (size_t step = 1; step <= opts.steps; ++step) {
    std::vector<std::vector<double>> z1;
    std::vector<size_t> lab;
    for (size_t b = 0; b < opts.batch_size; ++b) {
      size_t j = batch_rng.uniform_index(latents.size());
      z1.push_back(latents[j]);
      lab.push_back(labels[j]);
    }
    opt.zero_grad();
    Tensor loss = fm_loss(m, z1, lab, noise_rng);
    if (!std::isfinite(loss->val[0]))
      throw TrainingError("flow loss diverged at step " + std::to_string(step));
    backward(loss);
    opt.step(opts.lr);
    result.ema.update(params);

    if (step % opts.log_every == 0 || step == opts.steps) {
      FlowStepLog log;
      log.step = step;
      log.loss = loss->val[0];
      // Evaluate the EMA weights on the held-out batch with a fresh but
      // step-keyed noise stream.
      std::vector<std::vector<double>> saved;
      for (const Tensor& t : params) saved.push_back(t->val);
      const auto& shadow = result.ema.shadow();
      for (size_t i = 0; i < params.size(); ++i) params[i]->val = shadow[i];
      {
        NoGrad ng;
        RngStream hrng = RngStream(opts.seed).sub("flow-holdout-noise");
        log.ema_val_loss = fm_loss(m, hold_z, hold_labels, hrng)->val[0];
      }
      for (size_t i = 0; i < params.size(); ++i) params[i]->val = saved[i];
      result.log.push_back(log);
    }
  }
  return result;
}

}  // namespace tokflow
