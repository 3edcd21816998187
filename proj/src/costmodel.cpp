#include "tokflow/costmodel.hpp"

#include <chrono>

#include "tokflow/errors.hpp"

namespace tokflow {

namespace {

long long checked(__int128 v, const char* what) {
  if (v > static_cast<__int128>(INT64_MAX) || v < 0)
    throw NumericError(std::string(what) + ": FLOP count overflows 64-bit range");
  return static_cast<long long>(v);
}

}  // namespace

CostBreakdown layer_flops(const LayerSpec& spec) {
  if (spec.batch <= 0 || spec.seq_len <= 0 || spec.hidden <= 0)
    throw ContractError("layer_flops: dimensions must be positive");
  __int128 B = spec.batch, S = spec.seq_len, D = spec.hidden;
  CostBreakdown c;
  // Attention 4BSD^2 + FFN 8BSD^2 (SwiGLU at exact H = 8D/3).
  c.linear_flops = checked(12 * B * S * D * D, "layer_flops");
  c.attention_flops = checked(2 * B * S * S * D, "layer_flops");
  return c;
}

CostBreakdown model_flops(const ModelSpec& spec) {
  if (spec.layers.empty()) throw ContractError("model_flops: empty layer stack");
  __int128 lin = 0, attn = 0;
  for (const auto& [layer, count] : spec.layers) {
    if (count < 0) throw ContractError("model_flops: negative layer count");
    if (layer.seq_len == 0) continue;
    CostBreakdown c = layer_flops(layer);
    lin += static_cast<__int128>(c.linear_flops) * count;
    attn += static_cast<__int128>(c.attention_flops) * count;
  }
  CostBreakdown out;
  out.linear_flops = checked(lin, "model_flops");
  out.attention_flops = checked(attn, "model_flops");
  return out;
}

long long encoding_flops(const ModelSpec& spec) { return model_flops(spec).total(); }

long long model_tenths(const ModelSpec& spec) {
  if (spec.layers.empty()) throw ContractError("model_tenths: empty layer stack");
  long long tenths = 0;
  for (const auto& [layer, count] : spec.layers) {
    if (layer.seq_len == 0) continue;
    ModelSpec group{spec.name, {{layer, count}}};
    tenths += round_tenths_gflops(model_flops(group).total());
  }
  return tenths;
}

long long round_tenths_gflops(long long flops) {
  constexpr long long kUnit = 100000000LL;  // 0.1 GFLOP
  long long q = flops / kUnit;
  long long r = flops % kUnit;
  if (2 * r > kUnit) return q + 1;
  if (2 * r < kUnit) return q;
  return (q % 2 == 0) ? q : q + 1;  // half-even
}

double tenths_to_gflops(long long tenths) { return static_cast<double>(tenths) / 10.0; }

double flops_to_gflops(long long flops) { return static_cast<double>(flops) / 1e9; }

TrainingCost training_cost(const ModelSpec& dit, const std::vector<ModelSpec>& encoders) {
  TrainingCost t;
  for (const ModelSpec& e : encoders)
    t.encoding_tenths += round_tenths_gflops(encoding_flops(e));
  t.forward_tenths = model_tenths(dit);
  t.backward_tenths = 2 * t.forward_tenths;
  t.total_tenths = t.encoding_tenths + t.forward_tenths + t.backward_tenths;
  return t;
}

double reduction_ratio(const TrainingCost& baseline, const TrainingCost& ours) {
  if (ours.total_tenths <= 0) throw ContractError("reduction_ratio: zero cost");
  return static_cast<double>(baseline.total_tenths) /
         static_cast<double>(ours.total_tenths);
}

ModelSpec dit_spec(const std::string& name, long long layers, long long hidden,
                   long long seq_len) {
  return ModelSpec{name, {{LayerSpec{1, seq_len, hidden}, layers}}};
}

ModelSpec dit_dh_spec(const std::string& name, long long layers, long long hidden,
                      long long extra_layers, long long extra_hidden, long long seq_len) {
  return ModelSpec{name,
                   {{LayerSpec{1, seq_len, hidden}, layers},
                    {LayerSpec{1, seq_len, extra_hidden}, extra_layers}}};
}

ModelSpec vit_encoder_spec(const std::string& name, long long layers, long long hidden,
                           long long seq_len) {
  return ModelSpec{name, {{LayerSpec{1, seq_len, hidden}, layers}}};
}

std::vector<ThroughputCell> throughput_bench(const std::vector<size_t>& seq_lens,
                                             const std::vector<size_t>& batches,
                                             double seconds_per_cell, size_t model_dim,
                                             size_t depth, uint64_t seed) {
  if (seconds_per_cell <= 0.0)
    throw ContractError("throughput_bench: duration must be positive");
  std::vector<ThroughputCell> cells;
  for (size_t S : seq_lens) {
    FlowConfig cfg;
    cfg.tokens = S;
    cfg.latent_dim = 8;
    cfg.model_dim = model_dim;
    cfg.depth = depth;
    cfg.num_classes = 4;
    RngStream rng(seed);
    VelocityModel m = make_velocity_model(cfg, rng);
    for (size_t B : batches) {
      RngStream drng = rng.sub("bench-data").sub(B);
      std::vector<double> z(B * S * cfg.latent_dim);
      for (double& x : z) x = drng.normal();
      std::vector<double> t(B, 0.5);
      std::vector<size_t> labels(B, 0);
      NoGrad ng;
      Tensor zt = constant({B * S, cfg.latent_dim}, z);
      // Warmup.
      for (int i = 0; i < 3; ++i) velocity_forward(m, zt, t, labels);
      auto start = std::chrono::steady_clock::now();
      size_t passes = 0;
      double elapsed = 0.0;
      do {
        velocity_forward(m, zt, t, labels);
        ++passes;
        elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                      .count();
      } while (elapsed < seconds_per_cell);
      ThroughputCell cell;
      cell.seq_len = S;
      cell.batch = B;
      cell.passes_per_sec = static_cast<double>(passes * B) / elapsed;
      cells.push_back(cell);
    }
  }
  return cells;
}

}  // namespace tokflow
