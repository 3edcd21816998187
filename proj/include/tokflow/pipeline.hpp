#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tokflow/costmodel.hpp"
#include "tokflow/flatvae.hpp"
#include "tokflow/flowmatch.hpp"
#include "tokflow/report.hpp"
#include "tokflow/synthdata.hpp"

namespace tokflow {

// One process, one command. Every field has the published default where one
// exists; paths are created on demand. All randomness flows from `seed`
// through labeled sub-streams (data / init / training / sampling).
struct RunConfig {
  std::string command;
  uint64_t seed = 1;

  std::string dataset_dir = "data";
  std::string checkpoint_dir = "checkpoints";
  std::string report_dir = "reports";

  // gen-data
  size_t train_count = 2000;
  size_t val_count = 200;
  size_t num_classes = 4;

  // train-vae
  VaeConfig vae;
  size_t vae_epochs = 30;
  size_t batch_size = 32;

  // train-flow / sample
  FlowConfig flow;
  size_t flow_steps = 5000;
  double flow_lr = 2e-4;
  size_t sample_count = 8;        // per class
  long long sample_class = -1;    // -1 means every class

  // ablate
  long long ablate_token = -1;    // -1 means every token

  // bench
  double bench_seconds = 0.2;

  std::string command_line;  // verbatim invocation, for provenance headers

  void validate() const;
};

int dispatch(const RunConfig& cfg);

// ---- flops tables (shared by the CLI and the acceptance checks) ----

struct FlopsRow {
  std::string model;
  std::string latent;
  long long seq = 0;
  std::vector<long long> hidden;                // one entry per layer group
  std::vector<double> per_layer_linear_gf;      // displayed per-layer values
  std::vector<double> per_layer_attention_gf;
  long long forward_tenths = 0;   // whole-model forward, tenths of a GFLOP
  long long backward_tenths = 0;  // 2x forward
  long long train_tenths = 0;     // 3x forward
  long long encoding_tenths = 0;
  long long grand_total_tenths = 0;  // encoding + train
};

struct FlopsReport {
  std::vector<FlopsRow> rows;  // grid row then token row, per model
  std::vector<double> forward_reduction;   // per model pair
  std::vector<double> training_reduction;  // per model pair, encoding included
  long long backbone_tenths = 0;    // shared feature-extractor forward
  long long compressor_tenths = 0;  // extra compressor-encoder forward
  std::string text;
  std::string csv;
};

FlopsReport build_flops_report();

// ---- individual commands (exposed for tests) ----

void run_gen_data(const RunConfig& cfg);
VaeTrainResult run_train_vae(const RunConfig& cfg);
FlowTrainResult run_train_flow(const RunConfig& cfg);
void run_sample(const RunConfig& cfg);
void run_ablate(const RunConfig& cfg);
void run_analyze(const RunConfig& cfg);
void run_sweep_cfg(const RunConfig& cfg);
void run_sweep_latent(const RunConfig& cfg);
void run_flops(const RunConfig& cfg);
void run_bench(const RunConfig& cfg);

// Class centroids of mean-pooled raw features, one row per class.
std::vector<std::vector<double>> class_centroids(const std::vector<FeatureGrid>& grids,
                                                 size_t num_classes);
size_t nearest_centroid(const std::vector<double>& pooled,
                        const std::vector<std::vector<double>>& centroids);

}  // namespace tokflow
