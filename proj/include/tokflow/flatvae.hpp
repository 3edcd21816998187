#pragma once

#include <string>
#include <vector>

#include "tokflow/checkpoint.hpp"
#include "tokflow/optim.hpp"
#include "tokflow/synthdata.hpp"
#include "tokflow/transformer.hpp"

namespace tokflow {

struct VaeConfig {
  size_t tokens = 8;       // T
  size_t latent_dim = 8;   // d
  size_t enc_depth = 2;
  size_t dec_depth = 3;
  size_t model_dim = 48;
  size_t heads = 4;
  double beta_ref = 1e-6;
  size_t dim_ref = 512;

  double beta() const;
};

// beta_ref * dim_ref / (T*d): constant per-dimension KL pressure.
double beta_for(size_t tokens, size_t latent_dim, double beta_ref, size_t dim_ref);

// Register-token compressor over a patch grid: encoder retains T registers as
// the latent, decoder reconstructs all P patches from learnable queries.
struct VaeParams {
  VaeConfig cfg;
  size_t grid_h = 0, grid_w = 0, feature_dim = 0;
  size_t patches() const { return grid_h * grid_w; }

  Tensor in_w, in_b;        // feature_dim -> model_dim
  Tensor patch_pos;         // [P, model_dim] learned positional embeddings
  RegisterBank registers;   // [T, model_dim]
  std::vector<BlockParams> enc_blocks;
  Tensor enc_ln_g, enc_ln_b;
  Tensor mu_w, mu_b, lv_w, lv_b;  // model_dim -> d

  Tensor dec_in_w, dec_in_b;  // d -> model_dim
  Tensor latent_pos;          // [T, model_dim]
  RegisterBank queries;       // [P, model_dim]
  std::vector<BlockParams> dec_blocks;
  Tensor dec_ln_g, dec_ln_b;
  Tensor out_w, out_b;  // model_dim -> feature_dim

  std::vector<Tensor> parameters() const;
  NamedTensors named() const;
};

VaeParams make_vae(const VaeConfig& cfg, size_t grid_h, size_t grid_w,
                   size_t feature_dim, RngStream& rng);

struct Posterior {
  Tensor mu;      // [B*T, d]
  Tensor logvar;  // [B*T, d], clamped to [-30, 20]
};

constexpr double kLogvarFloor = -30.0;
constexpr double kLogvarCeil = 20.0;

Posterior vae_encode(const VaeParams& p, const Tensor& feats, size_t B);
Tensor reparameterize(const Posterior& post, RngStream& rng);

// Closed-form KL against the unit Gaussian prior, summed over all entries.
Tensor kl_tensor(const Posterior& post);
double kl_divergence(const std::vector<double>& mu, const std::vector<double>& logvar);

Tensor vae_decode(const VaeParams& p, const Tensor& z, size_t B);

struct VaeLossReport {
  double recon = 0, kl = 0, beta = 0, total = 0;
};

// recon: mean squared error over all B*P*D entries; kl: batch-mean of the
// per-sample KL sum; total = recon + beta*kl.
Tensor vae_loss(const VaeParams& p, const Tensor& feats, size_t B, double beta,
                RngStream& rng, VaeLossReport* report);

// ---- evaluation helpers (no tape) ----
std::vector<double> encode_mean(const VaeParams& p, const FeatureGrid& grid);
std::vector<double> decode_latent(const VaeParams& p, const std::vector<double>& z);
double eval_recon_mse(const VaeParams& p, const std::vector<FeatureGrid>& grids,
                      double* kl_out = nullptr);

struct VaeTrainOptions {
  size_t batch_size = 32;
  uint64_t seed = 1;
};

struct VaeEpochLog {
  size_t epoch = 0;
  double lr = 0, train_recon = 0, train_kl = 0, val_recon = 0, val_kl = 0, total = 0;
};

struct VaeTrainResult {
  std::vector<VaeEpochLog> log;
  size_t best_epoch = 0;
  double best_val_recon = 0;
};

// AdamW + WSD loop over standardized grids; the parameter set ends at the
// checkpoint with minimum validation reconstruction loss.
VaeTrainResult train_vae(VaeParams& p, const std::vector<FeatureGrid>& train,
                         const std::vector<FeatureGrid>& val, const WsdSchedule& schedule,
                         const VaeTrainOptions& opts);

Tensor batch_features(const std::vector<FeatureGrid>& grids,
                      const std::vector<size_t>& idx);

}  // namespace tokflow
