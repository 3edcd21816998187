#pragma once

#include <vector>

#include "tokflow/flatvae.hpp"
#include "tokflow/synthdata.hpp"

namespace tokflow {

struct AblationHeatmap {
  size_t grid_h = 0, grid_w = 0;
  std::vector<double> error;  // Ph*Pw mean per-patch L2 deltas, nonnegative
  size_t samples = 0;
};

// Zero latent token `token_index`, decode, and accumulate the per-patch L2
// distance between clean and ablated reconstructions over the dataset.
AblationHeatmap token_ablation(const VaeParams& p, const std::vector<FeatureGrid>& grids,
                               size_t token_index);

// Spatial variance of the normalized heatmap; low values mean a localized token.
double locality_score(const AblationHeatmap& h);

// Half-vs-half split correlation of per-patch means; a convergence diagnostic
// for the heatmap sample size.
double heatmap_split_correlation(const VaeParams& p,
                                 const std::vector<FeatureGrid>& grids,
                                 size_t token_index);

struct PcaReport {
  std::vector<double> eigenvalues;  // descending, nonnegative
  size_t dims_for_threshold = 0;
  double threshold = 0.95;
  double compression_ratio = 0.0;  // D / dims_for_threshold
};

// Center columns, eigendecompose the covariance, report the smallest r whose
// cumulative variance reaches the threshold.
PcaReport pca_compressibility(const std::vector<std::vector<double>>& rows,
                              double threshold = 0.95);

struct SimilarityCurve {
  std::vector<double> distance;    // integer patch-unit bins
  std::vector<double> similarity;  // mean cosine per bin
  std::vector<size_t> pair_count;
};

SimilarityCurve spatial_similarity(const std::vector<FeatureGrid>& grids);

struct NoiseSweep {
  std::vector<double> sigma;
  std::vector<double> error;  // mean squared feature error vs the clean input
};

// z <- posterior mean + sigma*eps, decode, mean squared error against the
// clean features, averaged over the dataset and `draws` noise draws.
NoiseSweep noise_sweep(const VaeParams& p, const std::vector<FeatureGrid>& grids,
                       const std::vector<double>& sigma_grid, RngStream& rng,
                       size_t draws = 4);

struct KnnReport {
  size_t k = 0;
  double top1_accuracy = 0.0;
};

// Mean-pool rows, L2-normalize, majority vote among the k nearest cosine
// neighbors; ties broken by smallest summed distance.
KnnReport knn_eval(const std::vector<std::vector<double>>& train_feats,
                   const std::vector<size_t>& train_labels,
                   const std::vector<std::vector<double>>& val_feats,
                   const std::vector<size_t>& val_labels, size_t k, size_t row_dim);

// Mean over rows of a row-major [rows, dim] feature matrix.
std::vector<double> mean_pool(const std::vector<double>& features, size_t dim);

}  // namespace tokflow
