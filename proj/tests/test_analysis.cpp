#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "tokflow/analysis.hpp"
#include "tokflow/flatvae.hpp"

using namespace tokflow;

namespace {

VaeConfig toy_cfg() {
  VaeConfig c;
  c.tokens = 2;
  c.latent_dim = 3;
  c.enc_depth = 1;
  c.dec_depth = 1;
  c.model_dim = 8;
  c.heads = 2;
  return c;
}

std::vector<FeatureGrid> toy_grids(size_t n, uint64_t seed) {
  std::vector<FeatureGrid> out(n);
  RngStream rng(seed);
  for (size_t i = 0; i < n; ++i) {
    out[i].grid_h = 2;
    out[i].grid_w = 2;
    out[i].feature_dim = 5;
    out[i].class_id = i % 2;
    out[i].features.resize(4 * 5);
    for (double& x : out[i].features) x = rng.normal();
  }
  return out;
}

// Independent brute-force ablation: re-encodes and decodes per sample with no
// shared state with the library implementation.
std::vector<double> naive_ablation(const VaeParams& p,
                                   const std::vector<FeatureGrid>& grids,
                                   size_t token_index) {
  size_t P = grids.front().patches();
  std::vector<double> acc(P, 0.0);
  size_t d = p.cfg.latent_dim;
  for (const FeatureGrid& g : grids) {
    std::vector<double> z = encode_mean(p, g);
    std::vector<double> clean = decode_latent(p, z);
    std::vector<double> zz = z;
    for (size_t c = 0; c < d; ++c) zz[token_index * d + c] = 0.0;
    std::vector<double> abl = decode_latent(p, zz);
    for (size_t patch = 0; patch < P; ++patch) {
      double s = 0;
      for (size_t c = 0; c < g.feature_dim; ++c) {
        double diff = clean[patch * g.feature_dim + c] - abl[patch * g.feature_dim + c];
        s += diff * diff;
      }
      acc[patch] += std::sqrt(s);
    }
  }
  for (double& x : acc) x /= static_cast<double>(grids.size());
  return acc;
}

}  // namespace

TEST_CASE("token ablation equals brute force to 1e-10 and is nonnegative") {
  VaeConfig cfg = toy_cfg();
  RngStream rng(1);
  VaeParams p = make_vae(cfg, 2, 2, 5, rng);
  std::vector<FeatureGrid> grids = toy_grids(16, 2);
  for (size_t tok = 0; tok < cfg.tokens; ++tok) {
    AblationHeatmap h = token_ablation(p, grids, tok);
    std::vector<double> ref = naive_ablation(p, grids, tok);
    REQUIRE(h.error.size() == ref.size());
    for (size_t i = 0; i < ref.size(); ++i) {
      CHECK(std::abs(h.error[i] - ref[i]) < 1e-10);
      CHECK(h.error[i] >= 0.0);
    }
  }
  CHECK_THROWS_AS(token_ablation(p, grids, cfg.tokens), ContractError);
}

TEST_CASE("single-sample heatmap equals the direct per-patch L2") {
  VaeConfig cfg = toy_cfg();
  RngStream rng(3);
  VaeParams p = make_vae(cfg, 2, 2, 5, rng);
  std::vector<FeatureGrid> one = toy_grids(1, 4);
  AblationHeatmap h = token_ablation(p, one, 0);
  std::vector<double> ref = naive_ablation(p, one, 0);
  for (size_t i = 0; i < ref.size(); ++i) CHECK(h.error[i] == doctest::Approx(ref[i]));
  CHECK(h.samples == 1);
}

TEST_CASE("heatmap split correlation is a sane diagnostic") {
  VaeConfig cfg = toy_cfg();
  RngStream rng(5);
  VaeParams p = make_vae(cfg, 2, 2, 5, rng);
  std::vector<FeatureGrid> grids = toy_grids(40, 6);
  double corr = heatmap_split_correlation(p, grids, 0);
  CHECK(corr >= -1.0);
  CHECK(corr <= 1.0);
}

TEST_CASE("pca rank-1 data needs exactly one dimension") {
  std::vector<std::vector<double>> rows;
  RngStream rng(7);
  std::vector<double> dir = {1.0, -2.0, 0.5, 3.0};
  for (int i = 0; i < 50; ++i) {
    double a = rng.normal();
    std::vector<double> r(4);
    for (size_t d = 0; d < 4; ++d) r[d] = 5.0 + a * dir[d];
    rows.push_back(r);
  }
  PcaReport rep = pca_compressibility(rows);
  CHECK(rep.dims_for_threshold == 1);
  CHECK(rep.compression_ratio == doctest::Approx(4.0));
}

TEST_CASE("pca isotropic gaussian in 20 dims needs 19 +/- 1") {
  std::vector<std::vector<double>> rows;
  RngStream rng(8);
  for (int i = 0; i < 100000; ++i) {
    std::vector<double> r(20);
    for (double& x : r) x = rng.normal();
    rows.push_back(std::move(r));
  }
  PcaReport rep = pca_compressibility(rows);
  CHECK(rep.dims_for_threshold >= 18);
  CHECK(rep.dims_for_threshold <= 20);
}

TEST_CASE("pca threshold definition: r components reach it, r-1 do not") {
  std::vector<std::vector<double>> rows;
  RngStream rng(9);
  for (int i = 0; i < 2000; ++i) {
    std::vector<double> r(6);
    for (size_t d = 0; d < 6; ++d) r[d] = rng.normal() * (1.0 + 2.0 * d);
    rows.push_back(std::move(r));
  }
  PcaReport rep = pca_compressibility(rows, 0.9);
  double total = 0, cum = 0;
  for (double e : rep.eigenvalues) total += e;
  for (size_t i = 0; i < rep.dims_for_threshold; ++i) cum += rep.eigenvalues[i];
  CHECK(cum / total >= 0.9);
  if (rep.dims_for_threshold > 1)
    CHECK((cum - rep.eigenvalues[rep.dims_for_threshold - 1]) / total < 0.9);
  // spectrum sorted descending, nonnegative
  for (size_t i = 1; i < rep.eigenvalues.size(); ++i) {
    CHECK(rep.eigenvalues[i] <= rep.eigenvalues[i - 1] + 1e-12);
    CHECK(rep.eigenvalues[i] >= -1e-12);
  }
  CHECK_THROWS_AS(pca_compressibility({{1.0, 2.0}}), ContractError);
}

TEST_CASE("similarity curve: identical patches give 1 everywhere") {
  FeatureGrid g;
  g.grid_h = 3;
  g.grid_w = 3;
  g.feature_dim = 4;
  std::vector<double> v = {1, 2, 3, 4};
  for (int p = 0; p < 9; ++p) g.features.insert(g.features.end(), v.begin(), v.end());
  SimilarityCurve c = spatial_similarity({g});
  for (size_t i = 0; i < c.similarity.size(); ++i)
    CHECK(c.similarity[i] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(c.similarity[0] == 1.0);  // self-similarity bin, exact
}

TEST_CASE("similarity curve: orthogonal patches give 0 beyond bin 0") {
  FeatureGrid g;
  g.grid_h = 2;
  g.grid_w = 2;
  g.feature_dim = 4;
  // 4 mutually orthogonal one-hot rows
  for (int p = 0; p < 4; ++p)
    for (int d = 0; d < 4; ++d) g.features.push_back(p == d ? 1.0 : 0.0);
  SimilarityCurve c = spatial_similarity({g});
  CHECK(c.similarity[0] == 1.0);
  for (size_t i = 1; i < c.similarity.size(); ++i)
    CHECK(std::abs(c.similarity[i]) < 1e-12);
}

TEST_CASE("noise sweep: sigma 0 equals baseline exactly, grid validated") {
  VaeConfig cfg = toy_cfg();
  RngStream rng(10);
  VaeParams p = make_vae(cfg, 2, 2, 5, rng);
  std::vector<FeatureGrid> grids = toy_grids(8, 11);
  RngStream nrng(12);
  NoiseSweep sweep = noise_sweep(p, grids, {0.0, 0.5, 1.0}, nrng);
  double baseline = eval_recon_mse(p, grids);
  CHECK(sweep.error[0] == baseline);  // exact equality
  RngStream nrng2(12);
  CHECK_THROWS_AS(noise_sweep(p, grids, {0.5, 0.0}, nrng2), ContractError);
  RngStream nrng3(12);
  CHECK_THROWS_AS(noise_sweep(p, grids, {0.1, 0.5}, nrng3), ContractError);
}

TEST_CASE("knn separable clusters reach 100% and self-match works") {
  RngStream rng(13);
  std::vector<std::vector<double>> train, val;
  std::vector<size_t> trl, vl;
  for (int i = 0; i < 60; ++i) {
    size_t cls = i % 2;
    std::vector<double> f(8);
    for (double& x : f) x = 0.05 * rng.normal() + (cls ? 3.0 : -3.0);
    if (i < 50) {
      train.push_back(f);
      trl.push_back(cls);
    } else {
      val.push_back(f);
      vl.push_back(cls);
    }
  }
  KnnReport rep = knn_eval(train, trl, val, vl, 5, 8);
  CHECK(rep.top1_accuracy == 1.0);

  // duplicated train point with k=1 returns its own label
  KnnReport self = knn_eval(train, trl, {train[7]}, {trl[7]}, 1, 8);
  CHECK(self.top1_accuracy == 1.0);
}

TEST_CASE("knn predictions are exactly scale invariant") {
  RngStream rng(14);
  std::vector<std::vector<double>> train, val;
  std::vector<size_t> trl, vl;
  for (int i = 0; i < 40; ++i) {
    std::vector<double> f(6);
    for (double& x : f) x = rng.normal();
    if (i < 32) {
      train.push_back(f);
      trl.push_back(i % 3);
    } else {
      val.push_back(f);
      vl.push_back(i % 3);
    }
  }
  KnnReport base = knn_eval(train, trl, val, vl, 3, 6);
  std::vector<std::vector<double>> strain = train, sval = val;
  for (auto& r : strain)
    for (double& x : r) x *= 37.5;
  for (auto& r : sval)
    for (double& x : r) x *= 37.5;
  KnnReport scaled = knn_eval(strain, trl, sval, vl, 3, 6);
  CHECK(base.top1_accuracy == scaled.top1_accuracy);
  CHECK_THROWS_AS(knn_eval({}, {}, val, vl, 3, 6), ContractError);
}

TEST_CASE("mean pool averages rows") {
  std::vector<double> feats = {1, 2, 3, 4, 5, 6};
  std::vector<double> pooled = mean_pool(feats, 2);
  CHECK(pooled == std::vector<double>{3, 4});
}
