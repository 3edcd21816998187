#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tokflow/flowmatch.hpp"

namespace tokflow {

// One multiply-add counts as one FLOP; all values are exact integers (SwiGLU
// enters at the exact rational width 8D/3, whose FFN total 8BSD^2 is integral).
struct LayerSpec {
  long long batch = 1;
  long long seq_len = 0;
  long long hidden = 0;
};

struct CostBreakdown {
  long long linear_flops = 0;     // 12*B*S*D^2
  long long attention_flops = 0;  // 2*B*S^2*D
  long long total() const { return linear_flops + attention_flops; }
};

CostBreakdown layer_flops(const LayerSpec& spec);

// Heterogeneous stack: list of (layer spec, layer count).
struct ModelSpec {
  std::string name;
  std::vector<std::pair<LayerSpec, long long>> layers;
};

CostBreakdown model_flops(const ModelSpec& spec);

// Same formula applied to an encoder stack.
long long encoding_flops(const ModelSpec& spec);

// Display rounding: tenths of a GFLOP, round-half-even, computed in integer
// arithmetic. Derived tables (backward, per-training-step) are built from
// these rounded tenths, matching the published table convention.
long long round_tenths_gflops(long long flops);
double tenths_to_gflops(long long tenths);
double flops_to_gflops(long long flops);

// Display total for a heterogeneous stack: each homogeneous layer group is
// rounded to tenths separately, then the rounded subtotals are summed. This is
// the published table convention and can differ from rounding the exact sum.
long long model_tenths(const ModelSpec& spec);

struct TrainingCost {
  long long encoding_tenths = 0;  // sum over encoder stacks
  long long forward_tenths = 0;   // rounded model forward
  long long backward_tenths = 0;  // == 2 * forward_tenths
  long long total_tenths = 0;     // encoding + forward + backward
};

TrainingCost training_cost(const ModelSpec& dit, const std::vector<ModelSpec>& encoders);

// baseline total / this total, both in tenths.
double reduction_ratio(const TrainingCost& baseline, const TrainingCost& ours);

// ---- reference model zoo (the published comparison set) ----
ModelSpec dit_spec(const std::string& name, long long layers, long long hidden,
                   long long seq_len);
ModelSpec dit_dh_spec(const std::string& name, long long layers, long long hidden,
                      long long extra_layers, long long extra_hidden, long long seq_len);
ModelSpec vit_encoder_spec(const std::string& name, long long layers, long long hidden,
                           long long seq_len);

struct ThroughputCell {
  size_t seq_len = 0;
  size_t batch = 0;
  double passes_per_sec = 0.0;
};

// Wall-clock forward throughput of the local velocity model at several
// sequence lengths and batch sizes. Warmup iterations are excluded.
std::vector<ThroughputCell> throughput_bench(const std::vector<size_t>& seq_lens,
                                             const std::vector<size_t>& batches,
                                             double seconds_per_cell,
                                             size_t model_dim = 64, size_t depth = 6,
                                             uint64_t seed = 7);

}  // namespace tokflow
