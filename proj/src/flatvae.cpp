#include "tokflow/flatvae.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tokflow/errors.hpp"

namespace tokflow {

double beta_for(size_t tokens, size_t latent_dim, double beta_ref, size_t dim_ref) {
  if (tokens == 0 || latent_dim == 0 || dim_ref == 0 || beta_ref <= 0.0)
    throw ContractError("beta_for: dimensions and reference must be positive");
  return beta_ref * static_cast<double>(dim_ref) /
         static_cast<double>(tokens * latent_dim);
}

double VaeConfig::beta() const { return beta_for(tokens, latent_dim, beta_ref, dim_ref); }

namespace {
constexpr double kLnEps = 1e-6;

Tensor linear_init(size_t in, size_t out, RngStream& rng) {
  double stddev = std::sqrt(2.0 / static_cast<double>(in + out));
  return param_randn({in, out}, rng, stddev);
}
}  // namespace

std::vector<Tensor> VaeParams::parameters() const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : named()) out.push_back(t);
  return out;
}

NamedTensors VaeParams::named() const {
  NamedTensors out;
  out.emplace_back("vae.in_w", in_w);
  out.emplace_back("vae.in_b", in_b);
  out.emplace_back("vae.patch_pos", patch_pos);
  out.emplace_back("vae.registers", registers.embeddings);
  for (size_t i = 0; i < enc_blocks.size(); ++i)
    enc_blocks[i].collect("vae.enc" + std::to_string(i), out);
  out.emplace_back("vae.enc_ln_g", enc_ln_g);
  out.emplace_back("vae.enc_ln_b", enc_ln_b);
  out.emplace_back("vae.mu_w", mu_w);
  out.emplace_back("vae.mu_b", mu_b);
  out.emplace_back("vae.lv_w", lv_w);
  out.emplace_back("vae.lv_b", lv_b);
  out.emplace_back("vae.dec_in_w", dec_in_w);
  out.emplace_back("vae.dec_in_b", dec_in_b);
  out.emplace_back("vae.latent_pos", latent_pos);
  out.emplace_back("vae.queries", queries.embeddings);
  for (size_t i = 0; i < dec_blocks.size(); ++i)
    dec_blocks[i].collect("vae.dec" + std::to_string(i), out);
  out.emplace_back("vae.dec_ln_g", dec_ln_g);
  out.emplace_back("vae.dec_ln_b", dec_ln_b);
  out.emplace_back("vae.out_w", out_w);
  out.emplace_back("vae.out_b", out_b);
  return out;
}

VaeParams make_vae(const VaeConfig& cfg, size_t grid_h, size_t grid_w,
                   size_t feature_dim, RngStream& rng) {
  size_t P = grid_h * grid_w;
  if (cfg.tokens > P) throw ConfigError("make_vae: more latent tokens than patches");
  VaeParams p;
  p.cfg = cfg;
  p.grid_h = grid_h;
  p.grid_w = grid_w;
  p.feature_dim = feature_dim;
  RngStream r = rng.sub("vae-init");
  p.in_w = linear_init(feature_dim, cfg.model_dim, r);
  p.in_b = param_zeros({1, cfg.model_dim});
  p.patch_pos = param_randn({P, cfg.model_dim}, r, 0.02);
  p.registers = make_register_bank(cfg.tokens, cfg.model_dim, r);
  for (size_t i = 0; i < cfg.enc_depth; ++i)
    p.enc_blocks.push_back(make_block(cfg.model_dim, cfg.heads, r, false));
  p.enc_ln_g = param({1, cfg.model_dim}, std::vector<double>(cfg.model_dim, 1.0));
  p.enc_ln_b = param_zeros({1, cfg.model_dim});
  p.mu_w = param_randn({cfg.model_dim, cfg.latent_dim}, r, 0.02);
  p.mu_b = param_zeros({1, cfg.latent_dim});
  p.lv_w = param_randn({cfg.model_dim, cfg.latent_dim}, r, 0.02);
  p.lv_b = param_zeros({1, cfg.latent_dim});
  p.dec_in_w = linear_init(cfg.latent_dim, cfg.model_dim, r);
  p.dec_in_b = param_zeros({1, cfg.model_dim});
  p.latent_pos = param_randn({cfg.tokens, cfg.model_dim}, r, 0.02);
  p.queries = make_register_bank(P, cfg.model_dim, r);
  for (size_t i = 0; i < cfg.dec_depth; ++i)
    p.dec_blocks.push_back(make_block(cfg.model_dim, cfg.heads, r, false));
  p.dec_ln_g = param({1, cfg.model_dim}, std::vector<double>(cfg.model_dim, 1.0));
  p.dec_ln_b = param_zeros({1, cfg.model_dim});
  p.out_w = param_randn({cfg.model_dim, feature_dim}, r, 0.02);
  p.out_b = param_zeros({1, feature_dim});
  return p;
}

Posterior vae_encode(const VaeParams& p, const Tensor& feats, size_t B) {
  size_t P = p.patches();
  if (feats->cols() != p.feature_dim || feats->rows() != B * P)
    throw ConfigError("vae_encode: features do not match configured grid");
  Tensor x = add_rowvec(mm(feats, p.in_w), p.in_b);
  x = add(x, tile_rows(p.patch_pos, B));
  x = concat_registers(x, p.registers, B, P);
  size_t S = p.cfg.tokens + P;
  for (const BlockParams& b : p.enc_blocks) x = block_forward(b, x, B, S);
  x = layer_norm(x, p.enc_ln_g, p.enc_ln_b, kLnEps);
  Tensor regs = extract_registers(x, B, S, p.cfg.tokens);
  Posterior post;
  post.mu = add_rowvec(mm(regs, p.mu_w), p.mu_b);
  post.logvar = clamp_op(add_rowvec(mm(regs, p.lv_w), p.lv_b), kLogvarFloor, kLogvarCeil);
  return post;
}

Tensor reparameterize(const Posterior& post, RngStream& rng) {
  std::vector<double> eps(post.mu->size());
  for (double& e : eps) e = rng.normal();
  Tensor sigma = exp_op(scale(post.logvar, 0.5));
  return add(post.mu, mul(sigma, constant_like(post.mu, std::move(eps))));
}

Tensor kl_tensor(const Posterior& post) {
  Tensor t = add(exp_op(post.logvar), mul(post.mu, post.mu));
  t = sub(add_scalar(t, -1.0), post.logvar);
  return scale(sum_all(t), 0.5);
}

double kl_divergence(const std::vector<double>& mu, const std::vector<double>& logvar) {
  if (mu.size() != logvar.size()) throw DimError("kl_divergence: size mismatch");
  double s = 0.0;
  for (size_t i = 0; i < mu.size(); ++i)
    s += 0.5 * (std::exp(logvar[i]) + mu[i] * mu[i] - 1.0 - logvar[i]);
  return s;
}

Tensor vae_decode(const VaeParams& p, const Tensor& z, size_t B) {
  size_t T = p.cfg.tokens, P = p.patches();
  if (z->cols() != p.cfg.latent_dim || z->rows() != B * T)
    throw ConfigError("vae_decode: latent does not match configured shape");
  Tensor zin = add_rowvec(mm(z, p.dec_in_w), p.dec_in_b);
  zin = add(zin, tile_rows(p.latent_pos, B));
  // Queries occupy the first P positions of every sequence; the decoder runs
  // self-attention over [queries; latents].
  std::vector<Tensor> parts;
  parts.reserve(2 * B);
  for (size_t b = 0; b < B; ++b) {
    parts.push_back(p.queries.embeddings);
    parts.push_back(row_slice(zin, b * T, (b + 1) * T));
  }
  Tensor x = concat_rows(parts);
  size_t S = P + T;
  for (const BlockParams& b : p.dec_blocks) x = block_forward(b, x, B, S);
  x = layer_norm(x, p.dec_ln_g, p.dec_ln_b, kLnEps);
  Tensor out_tokens = extract_registers(x, B, S, P);
  return add_rowvec(mm(out_tokens, p.out_w), p.out_b);
}

Tensor vae_loss(const VaeParams& p, const Tensor& feats, size_t B, double beta,
                RngStream& rng, VaeLossReport* report) {
  Posterior post = vae_encode(p, feats, B);
  Tensor z = reparameterize(post, rng);
  Tensor recon = vae_decode(p, z, B);
  Tensor mse = mean_all(mul(sub(recon, feats), sub(recon, feats)));
  Tensor kl_mean = scale(kl_tensor(post), 1.0 / static_cast<double>(B));
  Tensor total = add(mse, scale(kl_mean, beta));
  if (report) {
    report->recon = mse->val[0];
    report->kl = kl_mean->val[0];
    report->beta = beta;
    report->total = total->val[0];
  }
  return total;
}

Tensor batch_features(const std::vector<FeatureGrid>& grids,
                      const std::vector<size_t>& idx) {
  if (idx.empty()) throw ContractError("batch_features: empty batch");
  size_t P = grids[idx[0]].patches(), D = grids[idx[0]].feature_dim;
  std::vector<double> v;
  v.reserve(idx.size() * P * D);
  for (size_t i : idx) {
    const FeatureGrid& g = grids[i];
    v.insert(v.end(), g.features.begin(), g.features.end());
  }
  return constant({idx.size() * P, D}, std::move(v));
}

std::vector<double> encode_mean(const VaeParams& p, const FeatureGrid& grid) {
  NoGrad ng;
  Tensor feats = constant({grid.patches(), grid.feature_dim}, grid.features);
  Posterior post = vae_encode(p, feats, 1);
  return post.mu->val;
}

std::vector<double> decode_latent(const VaeParams& p, const std::vector<double>& z) {
  NoGrad ng;
  Tensor zt = constant({p.cfg.tokens, p.cfg.latent_dim}, z);
  return vae_decode(p, zt, 1)->val;
}

double eval_recon_mse(const VaeParams& p, const std::vector<FeatureGrid>& grids,
                      double* kl_out) {
  NoGrad ng;
  double mse_sum = 0.0, kl_sum = 0.0;
  size_t entries = 0;
  for (const FeatureGrid& g : grids) {
    Tensor feats = constant({g.patches(), g.feature_dim}, g.features);
    Posterior post = vae_encode(p, feats, 1);
    Tensor recon = vae_decode(p, post.mu, 1);
    for (size_t i = 0; i < recon->size(); ++i) {
      double d = recon->val[i] - feats->val[i];
      mse_sum += d * d;
    }
    entries += recon->size();
    kl_sum += kl_divergence(post.mu->val, post.logvar->val);
  }
  if (kl_out) *kl_out = kl_sum / static_cast<double>(grids.size());
  return mse_sum / static_cast<double>(entries);
}

VaeTrainResult train_vae(VaeParams& p, const std::vector<FeatureGrid>& train,
                         const std::vector<FeatureGrid>& val, const WsdSchedule& schedule,
                         const VaeTrainOptions& opts) {
  if (train.empty()) throw ContractError("train_vae: empty training set");
  double beta = p.cfg.beta();
  std::vector<Tensor> params = p.parameters();
  AdamW opt(params, 0.9, 0.999, 0.02);
  RngStream shuffle_rng = RngStream(opts.seed).sub("vae-shuffle");
  RngStream sample_rng = RngStream(opts.seed).sub("vae-sample");

  size_t epochs = static_cast<size_t>(std::llround(schedule.total_epochs()));
  size_t batches_per_epoch = (train.size() + opts.batch_size - 1) / opts.batch_size;

  VaeTrainResult result;
  result.best_val_recon = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_vals;

  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  size_t step = 0;
  for (size_t epoch = 0; epoch < epochs; ++epoch) {
    // Deterministic Fisher-Yates shuffle.
    for (size_t i = order.size(); i > 1; --i) {
      size_t j = shuffle_rng.uniform_index(i);
      std::swap(order[i - 1], order[j]);
    }
    double recon_acc = 0.0, kl_acc = 0.0, lr_last = 0.0;
    for (size_t bi = 0; bi < batches_per_epoch; ++bi) {
      size_t lo = bi * opts.batch_size;
      size_t hi = std::min(train.size(), lo + opts.batch_size);
      std::vector<size_t> idx(order.begin() + lo, order.begin() + hi);
      Tensor feats = batch_features(train, idx);
      VaeLossReport rep;
      opt.zero_grad();
      Tensor loss = vae_loss(p, feats, idx.size(), beta, sample_rng, &rep);
      if (!std::isfinite(loss->val[0]))
        throw TrainingError("vae loss diverged at step " + std::to_string(step));
      backward(loss);
      double frac = static_cast<double>(epoch) +
                    static_cast<double>(bi) / static_cast<double>(batches_per_epoch);
      lr_last = schedule.lr_at(frac);
      opt.step(lr_last);
      recon_acc += rep.recon;
      kl_acc += rep.kl;
      ++step;
    }
    VaeEpochLog log;
    log.epoch = epoch;
    log.lr = lr_last;
    log.train_recon = recon_acc / static_cast<double>(batches_per_epoch);
    log.train_kl = kl_acc / static_cast<double>(batches_per_epoch);
    double val_kl = 0.0;
    log.val_recon = val.empty() ? log.train_recon : eval_recon_mse(p, val, &val_kl);
    log.val_kl = val_kl;
    log.total = log.train_recon + beta * log.train_kl;
    result.log.push_back(log);
    if (log.val_recon < result.best_val_recon) {
      result.best_val_recon = log.val_recon;
      result.best_epoch = epoch;
      best_vals.clear();
      for (const Tensor& t : params) best_vals.push_back(t->val);
    }
  }
  // Restore the checkpoint with minimum validation reconstruction loss.
  if (!best_vals.empty())
    for (size_t i = 0; i < params.size(); ++i) params[i]->val = best_vals[i];
  return result;
}

}  // namespace tokflow
