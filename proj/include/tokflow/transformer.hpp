#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tokflow/optim.hpp"
#include "tokflow/tensor.hpp"

namespace tokflow {

// Parameter-matched SwiGLU width. The network uses the rounded integer; the
// cost model keeps the exact rational 8D/3.
inline size_t swiglu_hidden(size_t model_dim) {
  return static_cast<size_t>(std::llround(8.0 * static_cast<double>(model_dim) / 3.0));
}

// One transformer block: multi-head attention + SwiGLU FFN with pre-norm
// layer norms. The same parameter set serves the plain pre-norm path (VAE)
// and the adaLN-modulated path (velocity model).
struct BlockParams {
  size_t model_dim = 0;
  size_t heads = 0;
  size_t ffn_hidden = 0;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor w_gate, b_gate, w_val, b_val, w_down, b_down;
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;
  // adaLN conditioning projection producing (shift,scale,gate) x (attn,ffn).
  // Zero-initialized so a conditioned block starts as the identity map.
  Tensor mod_w, mod_b;

  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, Tensor>>& out) const;
};

BlockParams make_block(size_t model_dim, size_t heads, RngStream& rng, bool with_adaln);

// Scaled dot-product multi-head attention over a batch of B sequences of
// length S packed as x:[B*S, model_dim].
Tensor attention(const BlockParams& p, const Tensor& x, size_t B, size_t S);

Tensor swiglu(const BlockParams& p, const Tensor& x);

// Pre-norm residual block (no conditioning).
Tensor block_forward(const BlockParams& p, const Tensor& x, size_t B, size_t S);

// adaLN-Zero conditioned block; cond is one conditioning row per sequence,
// shape [B, model_dim].
Tensor adaln_block_forward(const BlockParams& p, const Tensor& x, const Tensor& cond,
                           size_t B, size_t S);

// Learnable token bank (registers / decoder queries / positional embeddings).
struct RegisterBank {
  size_t count = 0;
  Tensor embeddings;  // [count, model_dim]
};

RegisterBank make_register_bank(size_t count, size_t model_dim, RngStream& rng,
                                double stddev = 0.02);

// Prepend the bank's rows to each sequence of a packed batch:
// patches:[B*P, D] -> [(T+P)*B, D] with registers occupying rows 0..T-1 of
// every sequence.
Tensor concat_registers(const Tensor& patches, const RegisterBank& bank, size_t B,
                        size_t P);

// Extract the first T rows of every sequence of a packed batch.
Tensor extract_registers(const Tensor& x, size_t B, size_t S, size_t T);

// Sinusoidal timestep features (64 frequencies -> 128 dims), as a constant.
Tensor timestep_features(const std::vector<double>& t);
constexpr size_t kTimestepFeatureDim = 128;

// Two-layer projection of timestep features plus a learned class table with a
// trailing null entry for unconditional passes.
struct ConditioningParams {
  size_t model_dim = 0;
  size_t num_classes = 0;  // table has num_classes + 1 rows, last is null
  Tensor t_w1, t_b1, t_w2, t_b2;
  Tensor class_table;

  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, Tensor>>& out) const;
};

ConditioningParams make_conditioning(size_t model_dim, size_t num_classes, RngStream& rng);

constexpr size_t kNullClass = static_cast<size_t>(-1);

// cond row per sample: timestep embedding + class embedding.
// labels may contain kNullClass for unconditional entries.
Tensor conditioning_vector(const ConditioningParams& p, const std::vector<double>& t,
                           const std::vector<size_t>& labels);

}  // namespace tokflow
