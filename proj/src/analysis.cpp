#include "tokflow/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "tokflow/errors.hpp"

namespace tokflow {

namespace {

std::vector<double> ablated_decode(const VaeParams& p, std::vector<double> z,
                                   size_t token_index) {
  size_t d = p.cfg.latent_dim;
  std::fill(z.begin() + token_index * d, z.begin() + (token_index + 1) * d, 0.0);
  return decode_latent(p, z);
}

void accumulate_patch_l2(const VaeParams& p, const std::vector<double>& clean,
                         const std::vector<double>& ablated, std::vector<double>& acc) {
  size_t D = p.feature_dim;
  for (size_t patch = 0; patch < p.patches(); ++patch) {
    double s = 0.0;
    for (size_t f = 0; f < D; ++f) {
      double diff = clean[patch * D + f] - ablated[patch * D + f];
      s += diff * diff;
    }
    acc[patch] += std::sqrt(s);
  }
}

}  // namespace

AblationHeatmap token_ablation(const VaeParams& p, const std::vector<FeatureGrid>& grids,
                               size_t token_index) {
  if (token_index >= p.cfg.tokens)
    throw ContractError("token_ablation: token index out of range");
  if (grids.empty()) throw ContractError("token_ablation: empty dataset");
  AblationHeatmap h;
  h.grid_h = p.grid_h;
  h.grid_w = p.grid_w;
  h.samples = grids.size();
  h.error.assign(p.patches(), 0.0);
  for (const FeatureGrid& g : grids) {
    std::vector<double> z = encode_mean(p, g);
    std::vector<double> clean = decode_latent(p, z);
    std::vector<double> abl = ablated_decode(p, z, token_index);
    accumulate_patch_l2(p, clean, abl, h.error);
  }
  for (double& e : h.error) e /= static_cast<double>(grids.size());
  return h;
}

double locality_score(const AblationHeatmap& h) {
  double mass = std::accumulate(h.error.begin(), h.error.end(), 0.0);
  if (mass <= 0.0) return 0.0;
  double cy = 0.0, cx = 0.0;
  for (size_t y = 0; y < h.grid_h; ++y)
    for (size_t x = 0; x < h.grid_w; ++x) {
      double w = h.error[y * h.grid_w + x] / mass;
      cy += w * y;
      cx += w * x;
    }
  double var = 0.0;
  for (size_t y = 0; y < h.grid_h; ++y)
    for (size_t x = 0; x < h.grid_w; ++x) {
      double w = h.error[y * h.grid_w + x] / mass;
      var += w * ((y - cy) * (y - cy) + (x - cx) * (x - cx));
    }
  return var;
}

double heatmap_split_correlation(const VaeParams& p,
                                 const std::vector<FeatureGrid>& grids,
                                 size_t token_index) {
  size_t half = grids.size() / 2;
  if (half == 0) throw ContractError("heatmap_split_correlation: need >= 2 samples");
  std::vector<FeatureGrid> a(grids.begin(), grids.begin() + half);
  std::vector<FeatureGrid> b(grids.begin() + half, grids.end());
  AblationHeatmap ha = token_ablation(p, a, token_index);
  AblationHeatmap hb = token_ablation(p, b, token_index);
  double ma = std::accumulate(ha.error.begin(), ha.error.end(), 0.0) / ha.error.size();
  double mb = std::accumulate(hb.error.begin(), hb.error.end(), 0.0) / hb.error.size();
  double num = 0.0, da = 0.0, db = 0.0;
  for (size_t i = 0; i < ha.error.size(); ++i) {
    double xa = ha.error[i] - ma, xb = hb.error[i] - mb;
    num += xa * xb;
    da += xa * xa;
    db += xb * xb;
  }
  if (da <= 0.0 || db <= 0.0) return 0.0;
  return num / std::sqrt(da * db);
}

namespace {

// Cyclic Jacobi eigendecomposition of a symmetric matrix (column-major
// irrelevant: symmetric). Adequate for the feature dims used here.
void jacobi_eigen(std::vector<double>& a, size_t n, std::vector<double>& eigvals) {
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (size_t i = 0; i < n; ++i)
      for (size_t j = i + 1; j < n; ++j) off += a[i * n + j] * a[i * n + j];
    if (off < 1e-22) break;
    for (size_t p = 0; p < n; ++p)
      for (size_t q = p + 1; q < n; ++q) {
        double apq = a[p * n + q];
        if (std::abs(apq) < 1e-18) continue;
        double app = a[p * n + p], aqq = a[q * n + q];
        double phi = 0.5 * std::atan2(2.0 * apq, aqq - app);
        double c = std::cos(phi), s = std::sin(phi);
        for (size_t k = 0; k < n; ++k) {
          double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (size_t k = 0; k < n; ++k) {
          double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
      }
  }
  eigvals.resize(n);
  for (size_t i = 0; i < n; ++i) eigvals[i] = a[i * n + i];
}

}  // namespace

PcaReport pca_compressibility(const std::vector<std::vector<double>>& rows,
                              double threshold) {
  if (rows.size() < 2) throw ContractError("pca_compressibility: need N >= 2 rows");
  size_t N = rows.size(), D = rows[0].size();
  std::vector<double> mean(D, 0.0);
  for (const auto& r : rows)
    for (size_t d = 0; d < D; ++d) mean[d] += r[d];
  for (double& m : mean) m /= static_cast<double>(N);
  std::vector<double> cov(D * D, 0.0);
  for (const auto& r : rows)
    for (size_t i = 0; i < D; ++i) {
      double ci = r[i] - mean[i];
      for (size_t j = i; j < D; ++j) cov[i * D + j] += ci * (r[j] - mean[j]);
    }
  for (size_t i = 0; i < D; ++i)
    for (size_t j = i; j < D; ++j) {
      cov[i * D + j] /= static_cast<double>(N - 1);
      cov[j * D + i] = cov[i * D + j];
    }
  PcaReport rep;
  rep.threshold = threshold;
  jacobi_eigen(cov, D, rep.eigenvalues);
  for (double& e : rep.eigenvalues) e = std::max(0.0, e);
  std::sort(rep.eigenvalues.rbegin(), rep.eigenvalues.rend());
  double total = std::accumulate(rep.eigenvalues.begin(), rep.eigenvalues.end(), 0.0);
  double cum = 0.0;
  rep.dims_for_threshold = D;
  for (size_t i = 0; i < D; ++i) {
    cum += rep.eigenvalues[i];
    if (cum >= threshold * total) {
      rep.dims_for_threshold = i + 1;
      break;
    }
  }
  rep.compression_ratio =
      static_cast<double>(D) / static_cast<double>(rep.dims_for_threshold);
  return rep;
}

SimilarityCurve spatial_similarity(const std::vector<FeatureGrid>& grids) {
  if (grids.empty()) throw ContractError("spatial_similarity: empty dataset");
  std::map<size_t, std::pair<double, size_t>> bins;  // bin -> (sum, count)
  for (const FeatureGrid& g : grids) {
    size_t P = g.patches(), D = g.feature_dim;
    std::vector<double> norms(P);
    for (size_t p = 0; p < P; ++p) {
      double s = 0.0;
      for (size_t d = 0; d < D; ++d) s += g.features[p * D + d] * g.features[p * D + d];
      norms[p] = std::sqrt(s);
    }
    for (size_t p = 0; p < P; ++p) {
      size_t py = p / g.grid_w, px = p % g.grid_w;
      for (size_t q = p; q < P; ++q) {
        size_t qy = q / g.grid_w, qx = q % g.grid_w;
        double dy = static_cast<double>(py) - static_cast<double>(qy);
        double dx = static_cast<double>(px) - static_cast<double>(qx);
        size_t bin = static_cast<size_t>(std::llround(std::sqrt(dy * dy + dx * dx)));
        double cosim;
        if (p == q) {
          cosim = 1.0;
        } else if (norms[p] <= 0.0 || norms[q] <= 0.0) {
          cosim = 0.0;
        } else {
          double dot = 0.0;
          for (size_t d = 0; d < g.feature_dim; ++d)
            dot += g.features[p * D + d] * g.features[q * D + d];
          cosim = dot / (norms[p] * norms[q]);
        }
        auto& [sum, count] = bins[bin];
        sum += cosim;
        ++count;
      }
    }
  }
  SimilarityCurve curve;
  for (const auto& [bin, sc] : bins) {
    curve.distance.push_back(static_cast<double>(bin));
    curve.similarity.push_back(sc.first / static_cast<double>(sc.second));
    curve.pair_count.push_back(sc.second);
  }
  return curve;
}

NoiseSweep noise_sweep(const VaeParams& p, const std::vector<FeatureGrid>& grids,
                       const std::vector<double>& sigma_grid, RngStream& rng,
                       size_t draws) {
  if (sigma_grid.empty() || sigma_grid.front() != 0.0 ||
      !std::is_sorted(sigma_grid.begin(), sigma_grid.end()))
    throw ContractError("noise_sweep: sigma grid must be sorted and start at 0");
  NoiseSweep sweep;
  sweep.sigma = sigma_grid;
  sweep.error.assign(sigma_grid.size(), 0.0);
  size_t n_lat = p.cfg.tokens * p.cfg.latent_dim;
  for (const FeatureGrid& g : grids) {
    std::vector<double> z = encode_mean(p, g);
    for (size_t si = 1; si < sigma_grid.size(); ++si) {
      double sigma = sigma_grid[si];
      double acc = 0.0;
      for (size_t d = 0; d < draws; ++d) {
        std::vector<double> zn = z;
        for (size_t i = 0; i < n_lat; ++i) zn[i] += sigma * rng.normal();
        std::vector<double> rec = decode_latent(p, zn);
        double mse = 0.0;
        for (size_t i = 0; i < rec.size(); ++i) {
          double diff = rec[i] - g.features[i];
          mse += diff * diff;
        }
        acc += mse / static_cast<double>(rec.size());
      }
      sweep.error[si] += acc / static_cast<double>(draws);
    }
  }
  for (double& e : sweep.error) e /= static_cast<double>(grids.size());
  // The sigma = 0 cell is by definition the clean reconstruction error; compute
  // it with the shared evaluation routine so the two agree exactly.
  sweep.error[0] = eval_recon_mse(p, grids);
  return sweep;
}

std::vector<double> mean_pool(const std::vector<double>& features, size_t dim) {
  if (dim == 0 || features.size() % dim != 0)
    throw DimError("mean_pool: feature length not divisible by dim");
  size_t rows = features.size() / dim;
  std::vector<double> out(dim, 0.0);
  for (size_t r = 0; r < rows; ++r)
    for (size_t d = 0; d < dim; ++d) out[d] += features[r * dim + d];
  for (double& x : out) x /= static_cast<double>(rows);
  return out;
}

KnnReport knn_eval(const std::vector<std::vector<double>>& train_feats,
                   const std::vector<size_t>& train_labels,
                   const std::vector<std::vector<double>>& val_feats,
                   const std::vector<size_t>& val_labels, size_t k, size_t row_dim) {
  if (train_feats.empty() || val_feats.empty())
    throw ContractError("knn_eval: empty feature sets");
  if (k == 0 || k > train_feats.size())
    throw ContractError("knn_eval: k must be in [1, train size]");
  auto pool_norm = [&](const std::vector<double>& f) {
    std::vector<double> v = mean_pool(f, row_dim);
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n > 0.0)
      for (double& x : v) x /= n;
    return v;
  };
  std::vector<std::vector<double>> tr;
  tr.reserve(train_feats.size());
  for (const auto& f : train_feats) tr.push_back(pool_norm(f));

  size_t correct = 0;
  for (size_t vi = 0; vi < val_feats.size(); ++vi) {
    std::vector<double> q = pool_norm(val_feats[vi]);
    std::vector<std::pair<double, size_t>> dist(tr.size());
    for (size_t ti = 0; ti < tr.size(); ++ti) {
      double dot = 0.0;
      for (size_t d = 0; d < q.size(); ++d) dot += q[d] * tr[ti][d];
      dist[ti] = {1.0 - dot, ti};
    }
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    std::map<size_t, std::pair<size_t, double>> votes;  // label -> (count, dist sum)
    for (size_t i = 0; i < k; ++i) {
      auto& [count, dsum] = votes[train_labels[dist[i].second]];
      ++count;
      dsum += dist[i].first;
    }
    size_t best_label = 0, best_count = 0;
    double best_dsum = 0.0;
    for (const auto& [label, cd] : votes) {
      if (cd.first > best_count ||
          (cd.first == best_count && cd.second < best_dsum)) {
        best_label = label;
        best_count = cd.first;
        best_dsum = cd.second;
      }
    }
    if (best_label == val_labels[vi]) ++correct;
  }
  KnnReport rep;
  rep.k = k;
  rep.top1_accuracy =
      static_cast<double>(correct) / static_cast<double>(val_feats.size());
  return rep;
}

}  // namespace tokflow
