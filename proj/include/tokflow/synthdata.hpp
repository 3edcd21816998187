#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tokflow/rng.hpp"

namespace tokflow {

struct SyntheticImage {
  size_t height = 0, width = 0;
  std::vector<double> pixels;  // [0,1], row-major, single channel
  size_t class_id = 0;
};

struct FeatureGrid {
  size_t grid_h = 0, grid_w = 0;
  size_t feature_dim = 0;
  std::vector<double> features;  // (grid_h*grid_w) x feature_dim, row-major
  size_t class_id = 0;

  size_t patches() const { return grid_h * grid_w; }
};

struct ImageGenConfig {
  size_t height = 32, width = 32;
  size_t num_classes = 4;
  double noise = 0.05;   // per-pixel gaussian noise amplitude
  double deform = 1.5;   // smooth displacement amplitude, in pixels
};

// Class-structured image: oriented grating + class blob, warped by a smooth
// random deformation, plus pixel noise. Pure function of (class_id, rng state).
SyntheticImage generate_image(size_t class_id, RngStream& rng, const ImageGenConfig& cfg);

struct FrozenEncoderConfig {
  size_t patch_size = 4;
  size_t window = 6;       // pixel window gathered around each patch
  size_t feature_dim = 16;
  double center_weight = 0.5;  // 3x3 binomial blend, rest split binomially
};

// Deterministic stand-in for a frozen pretrained backbone: windowed pixels ->
// fixed random projection -> tanh -> spatial binomial blend. Never trained.
FeatureGrid frozen_encode(const SyntheticImage& img, uint64_t encoder_seed,
                          const FrozenEncoderConfig& cfg);

struct DatasetManifest {
  size_t num_classes = 4;
  size_t train_count = 2000;
  size_t val_count = 200;
  uint64_t generator_seed = 0;
  uint64_t encoder_seed = 0;
  // Train-split standardization statistics, one entry per feature dim.
  std::vector<double> feature_mean;
  std::vector<double> feature_std;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<FeatureGrid> train;
  std::vector<FeatureGrid> val;
};

// Generates both splits (disjoint per-image sub-seeds) and fills the
// standardization statistics from the train split. Grids are returned raw;
// call standardize() to apply the manifest statistics in place.
Dataset generate_dataset(DatasetManifest manifest, const ImageGenConfig& img_cfg,
                         const FrozenEncoderConfig& enc_cfg);

void standardize(std::vector<FeatureGrid>& grids, const DatasetManifest& m);
void destandardize_features(std::vector<double>& features, const DatasetManifest& m);

// FGRD binary container: "FGRD", u32 version=1, u32 count, u32 Ph, u32 Pw,
// u32 D, then per grid u32 class_id + Ph*Pw*D little-endian f32.
void write_fgrd(const std::string& path, const std::vector<FeatureGrid>& grids);
std::vector<FeatureGrid> read_fgrd(const std::string& path);

void write_manifest(const std::string& path, const DatasetManifest& m);
DatasetManifest read_manifest(const std::string& path);

}  // namespace tokflow
