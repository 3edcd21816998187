#include "tokflow/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "tokflow/analysis.hpp"
#include "tokflow/checkpoint.hpp"
#include "tokflow/errors.hpp"

namespace tokflow {

namespace fs = std::filesystem;

namespace {

const char* kKnownCommands[] = {"gen-data",  "train-vae", "train-flow", "sample",
                                "ablate",    "analyze",   "sweep-cfg",  "sweep-latent",
                                "flops",     "bench"};

std::string config_text(const RunConfig& c) {
  std::ostringstream os;
  os << "command=" << c.command << "\nseed=" << c.seed << "\ndataset_dir="
     << c.dataset_dir << "\ncheckpoint_dir=" << c.checkpoint_dir
     << "\nreport_dir=" << c.report_dir << "\ntrain_count=" << c.train_count
     << "\nval_count=" << c.val_count << "\nnum_classes=" << c.num_classes
     << "\ntokens=" << c.vae.tokens << "\nlatent_dim=" << c.vae.latent_dim
     << "\nenc_depth=" << c.vae.enc_depth << "\ndec_depth=" << c.vae.dec_depth
     << "\nvae_model_dim=" << c.vae.model_dim << "\nvae_heads=" << c.vae.heads
     << "\nbeta_ref=" << format_double(c.vae.beta_ref) << "\ndim_ref=" << c.vae.dim_ref
     << "\nvae_epochs=" << c.vae_epochs << "\nbatch_size=" << c.batch_size
     << "\nflow_model_dim=" << c.flow.model_dim << "\nflow_heads=" << c.flow.heads
     << "\nflow_depth=" << c.flow.depth << "\nkappa=" << format_double(c.flow.kappa)
     << "\neuler_steps=" << c.flow.euler_steps
     << "\ncfg_weight=" << format_double(c.flow.cfg_weight)
     << "\ncfg_t_lo=" << format_double(c.flow.cfg_t_lo)
     << "\ncfg_t_hi=" << format_double(c.flow.cfg_t_hi)
     << "\nlabel_dropout=" << format_double(c.flow.label_dropout)
     << "\nema_decay=" << format_double(c.flow.ema_decay)
     << "\nflow_steps=" << c.flow_steps << "\nflow_lr=" << format_double(c.flow_lr)
     << "\nsample_count=" << c.sample_count << "\nsample_class=" << c.sample_class
     << "\nablate_token=" << c.ablate_token
     << "\nbench_seconds=" << format_double(c.bench_seconds) << "\n";
  return os.str();
}

Provenance make_prov(const RunConfig& cfg) {
  Provenance p;
  p.command = cfg.command_line.empty() ? cfg.command : cfg.command_line;
  p.seed = cfg.seed;
  p.config_hash = hash_config_text(config_text(cfg));
  return p;
}

std::string path_join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path))
    throw ConfigError(std::string(what) + " not found: " + path +
                      " (run the producing command first)");
}

struct LoadedData {
  DatasetManifest manifest;
  std::vector<FeatureGrid> train, val;
};

LoadedData load_dataset(const RunConfig& cfg, bool standardized) {
  std::string mpath = path_join(cfg.dataset_dir, "manifest.txt");
  require_file(mpath, "dataset manifest");
  LoadedData d;
  d.manifest = read_manifest(mpath);
  d.train = read_fgrd(path_join(cfg.dataset_dir, "train.fgrd"));
  d.val = read_fgrd(path_join(cfg.dataset_dir, "val.fgrd"));
  if (standardized) {
    standardize(d.train, d.manifest);
    standardize(d.val, d.manifest);
  }
  return d;
}

WsdSchedule schedule_for(size_t epochs) {
  // Published split is 5/40/5 over 50 epochs; keep the 10/80/10 proportions.
  WsdSchedule s;
  double e = static_cast<double>(epochs);
  s.warmup_epochs = 0.1 * e;
  s.decay_epochs = 0.1 * e;
  s.stable_epochs = e - s.warmup_epochs - s.decay_epochs;
  return s;
}

VaeParams load_vae(const RunConfig& cfg, const LoadedData& d) {
  std::string path = path_join(cfg.checkpoint_dir, "vae.fdck");
  require_file(path, "compressor checkpoint");
  const FeatureGrid& g = d.train.empty() ? d.val.front() : d.train.front();
  RngStream rng(cfg.seed);
  VaeParams p = make_vae(cfg.vae, g.grid_h, g.grid_w, g.feature_dim, rng);
  load_into(read_fdck(path), p.named());
  return p;
}

FlowConfig flow_config_for(const RunConfig& cfg) {
  FlowConfig f = cfg.flow;
  f.tokens = cfg.vae.tokens;
  f.latent_dim = cfg.vae.latent_dim;
  f.num_classes = cfg.num_classes;
  f.validate();
  return f;
}

struct LoadedFlow {
  VelocityModel model;
  LatentStats stats;
};

LoadedFlow load_flow(const RunConfig& cfg, bool ema) {
  std::string path = path_join(cfg.checkpoint_dir, ema ? "flow_ema.fdck" : "flow.fdck");
  require_file(path, "velocity-model checkpoint");
  FlowConfig f = flow_config_for(cfg);
  RngStream rng(cfg.seed);
  LoadedFlow out{make_velocity_model(f, rng), {}};
  NamedTensors loaded = read_fdck(path);
  load_into(loaded, out.model.named());
  for (const auto& [name, t] : loaded) {
    if (name == "stats.mean") out.stats.mean = t->val;
    if (name == "stats.stddev") out.stats.stddev = t->val;
  }
  if (out.stats.mean.empty() || out.stats.stddev.empty())
    throw FormatError("checkpoint lacks latent statistics: " + path);
  return out;
}

std::vector<double> sample_decoded_features(const VaeParams& vae,
                                            const VelocityModel& model,
                                            const LatentStats& stats,
                                            const DatasetManifest& man,
                                            const FlowConfig& f, size_t label,
                                            RngStream rng) {
  std::vector<double> z = euler_sample(model, label, f, rng);
  destandardize_latent(z, stats);
  std::vector<double> feats = decode_latent(vae, z);
  destandardize_features(feats, man);
  return feats;
}

std::string row_str(std::initializer_list<std::string> cells) {
  std::string out;
  bool first = true;
  for (const auto& c : cells) {
    if (!first) out += ",";
    out += c;
    first = false;
  }
  return out;
}

}  // namespace

void RunConfig::validate() const {
  bool known = false;
  for (const char* c : kKnownCommands)
    if (command == c) known = true;
  if (!known) throw ConfigError("unknown command: " + command);
  if (train_count == 0 || val_count == 0)
    throw ConfigError("dataset split counts must be positive");
  if (num_classes == 0) throw ConfigError("num_classes must be positive");
  if (vae.tokens == 0 || vae.latent_dim == 0 || vae.model_dim == 0 || vae.heads == 0 ||
      vae.enc_depth == 0 || vae.dec_depth == 0)
    throw ConfigError("compressor dimensions must be positive");
  if (vae.model_dim % vae.heads != 0)
    throw ConfigError("vae model_dim must be divisible by heads");
  if (vae_epochs == 0 || batch_size == 0)
    throw ConfigError("training epochs and batch size must be positive");
  flow.validate();
  if (flow.model_dim % flow.heads != 0)
    throw ConfigError("flow model_dim must be divisible by heads");
  if (flow_steps == 0) throw ConfigError("flow_steps must be positive");
  if (flow_lr <= 0) throw ConfigError("flow_lr must be positive");
  if (sample_count == 0) throw ConfigError("sample_count must be positive");
  if (sample_class >= static_cast<long long>(num_classes))
    throw ConfigError("sample_class out of range");
  if (ablate_token >= static_cast<long long>(vae.tokens))
    throw ConfigError("ablate_token out of range");
  if (bench_seconds <= 0) throw ConfigError("bench_seconds must be positive");
}

void run_gen_data(const RunConfig& cfg) {
  DatasetManifest man;
  man.num_classes = cfg.num_classes;
  man.train_count = cfg.train_count;
  man.val_count = cfg.val_count;
  man.generator_seed = RngStream(cfg.seed).sub("data").next_u64();
  man.encoder_seed = RngStream(cfg.seed).sub("frozen-encoder").next_u64();
  Dataset ds = generate_dataset(man, ImageGenConfig{}, FrozenEncoderConfig{});
  fs::create_directories(cfg.dataset_dir);
  write_fgrd(path_join(cfg.dataset_dir, "train.fgrd"), ds.train);
  write_fgrd(path_join(cfg.dataset_dir, "val.fgrd"), ds.val);
  write_manifest(path_join(cfg.dataset_dir, "manifest.txt"), ds.manifest);
  std::cout << "wrote " << ds.train.size() << " train / " << ds.val.size()
            << " val grids to " << cfg.dataset_dir << "\n";
}

VaeTrainResult run_train_vae(const RunConfig& cfg) {
  LoadedData d = load_dataset(cfg, true);
  const FeatureGrid& g = d.train.front();
  RngStream init = RngStream(cfg.seed).sub("init");
  VaeParams p = make_vae(cfg.vae, g.grid_h, g.grid_w, g.feature_dim, init);

  VaeTrainOptions opts;
  opts.batch_size = cfg.batch_size;
  opts.seed = RngStream(cfg.seed).sub("training").next_u64();
  VaeTrainResult res = train_vae(p, d.train, d.val, schedule_for(cfg.vae_epochs), opts);

  fs::create_directories(cfg.checkpoint_dir);
  write_fdck(path_join(cfg.checkpoint_dir, "vae.fdck"), p.named());

  std::vector<std::vector<std::string>> rows;
  for (const auto& e : res.log)
    rows.push_back({std::to_string(e.epoch), format_double(e.lr),
                    format_double(e.train_recon), format_double(e.train_kl),
                    format_double(e.val_recon), format_double(e.val_kl),
                    format_double(e.total)});
  write_file_atomic(path_join(cfg.report_dir, "vae_train_log.csv"),
                    csv_table(make_prov(cfg),
                              {"epoch", "lr", "train_recon", "train_kl", "val_recon",
                               "val_kl", "total"},
                              rows));
  std::cout << "best val recon " << format_double(res.best_val_recon) << " at epoch "
            << res.best_epoch << "\n";
  return res;
}

FlowTrainResult run_train_flow(const RunConfig& cfg) {
  LoadedData d = load_dataset(cfg, true);
  VaeParams vae = load_vae(cfg, d);

  std::vector<std::vector<double>> latents;
  std::vector<size_t> labels;
  for (const FeatureGrid& g : d.train) {
    latents.push_back(encode_mean(vae, g));
    labels.push_back(g.class_id);
  }
  LatentStats stats = latent_stats(latents);
  standardize_latents(latents, stats);

  FlowConfig f = flow_config_for(cfg);
  RngStream init = RngStream(cfg.seed).sub("init");
  VelocityModel m = make_velocity_model(f, init);

  FlowTrainOptions opts;
  opts.steps = cfg.flow_steps;
  opts.batch_size = cfg.batch_size;
  opts.lr = cfg.flow_lr;
  opts.seed = RngStream(cfg.seed).sub("training").next_u64();
  FlowTrainResult res = train_flow(m, latents, labels, opts);

  size_t coords = f.tokens * f.latent_dim;
  NamedTensors stat_entries = {
      {"stats.mean", constant({1, coords}, stats.mean)},
      {"stats.stddev", constant({1, coords}, stats.stddev)}};

  fs::create_directories(cfg.checkpoint_dir);
  NamedTensors live = m.named();
  NamedTensors live_out = live;
  live_out.insert(live_out.end(), stat_entries.begin(), stat_entries.end());
  write_fdck(path_join(cfg.checkpoint_dir, "flow.fdck"), live_out);

  std::vector<Tensor> shadow = res.ema.snapshot(m.parameters());
  NamedTensors ema_out;
  for (size_t i = 0; i < live.size(); ++i) ema_out.push_back({live[i].first, shadow[i]});
  ema_out.insert(ema_out.end(), stat_entries.begin(), stat_entries.end());
  write_fdck(path_join(cfg.checkpoint_dir, "flow_ema.fdck"), ema_out);

  std::vector<std::vector<std::string>> rows;
  for (const auto& e : res.log)
    rows.push_back({std::to_string(e.step), format_double(e.loss),
                    format_double(e.ema_val_loss)});
  write_file_atomic(path_join(cfg.report_dir, "flow_train_log.csv"),
                    csv_table(make_prov(cfg), {"step", "loss", "ema_val_loss"}, rows));
  if (!res.log.empty())
    std::cout << "final ema holdout loss "
              << format_double(res.log.back().ema_val_loss) << "\n";
  return res;
}

std::vector<std::vector<double>> class_centroids(const std::vector<FeatureGrid>& grids,
                                                 size_t num_classes) {
  if (grids.empty()) throw ContractError("class_centroids: empty dataset");
  size_t dim = grids.front().feature_dim;
  std::vector<std::vector<double>> cent(num_classes, std::vector<double>(dim, 0.0));
  std::vector<size_t> counts(num_classes, 0);
  for (const FeatureGrid& g : grids) {
    if (g.class_id >= num_classes) throw ContractError("class_centroids: label range");
    std::vector<double> pooled = mean_pool(g.features, dim);
    for (size_t i = 0; i < dim; ++i) cent[g.class_id][i] += pooled[i];
    ++counts[g.class_id];
  }
  for (size_t c = 0; c < num_classes; ++c) {
    if (counts[c] == 0) throw ContractError("class_centroids: empty class");
    for (double& x : cent[c]) x /= static_cast<double>(counts[c]);
  }
  return cent;
}

size_t nearest_centroid(const std::vector<double>& pooled,
                        const std::vector<std::vector<double>>& centroids) {
  size_t best = 0;
  double best_d = 0.0;
  for (size_t c = 0; c < centroids.size(); ++c) {
    double d = 0.0;
    for (size_t i = 0; i < pooled.size(); ++i) {
      double diff = pooled[i] - centroids[c][i];
      d += diff * diff;
    }
    if (c == 0 || d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

void run_sample(const RunConfig& cfg) {
  LoadedData d = load_dataset(cfg, false);
  std::vector<std::vector<double>> centroids = class_centroids(d.train, cfg.num_classes);
  standardize(d.train, d.manifest);
  VaeParams vae = load_vae(cfg, d);
  LoadedFlow flow = load_flow(cfg, true);
  FlowConfig f = flow_config_for(cfg);

  std::vector<size_t> classes;
  if (cfg.sample_class >= 0)
    classes.push_back(static_cast<size_t>(cfg.sample_class));
  else
    for (size_t c = 0; c < cfg.num_classes; ++c) classes.push_back(c);

  const FeatureGrid& ref = d.train.front();
  std::vector<FeatureGrid> out_grids;
  std::vector<std::vector<std::string>> rows;
  size_t hits = 0, total = 0;
  RngStream root = RngStream(cfg.seed).sub("sampling");
  for (size_t c : classes) {
    for (size_t i = 0; i < cfg.sample_count; ++i) {
      RngStream rng = root.sub(c).sub(i);
      std::vector<double> feats = sample_decoded_features(
          vae, flow.model, flow.stats, d.manifest, f, c, rng);
      std::vector<double> pooled = mean_pool(feats, ref.feature_dim);
      size_t pred = nearest_centroid(pooled, centroids);
      hits += pred == c;
      ++total;
      rows.push_back({std::to_string(c), std::to_string(i), std::to_string(pred),
                      pred == c ? "1" : "0"});
      FeatureGrid g;
      g.grid_h = ref.grid_h;
      g.grid_w = ref.grid_w;
      g.feature_dim = ref.feature_dim;
      g.features = feats;
      g.class_id = c;
      out_grids.push_back(std::move(g));
    }
  }
  fs::create_directories(cfg.report_dir);
  write_fgrd(path_join(cfg.report_dir, "samples.fgrd"), out_grids);
  write_file_atomic(path_join(cfg.report_dir, "samples.csv"),
                    csv_table(make_prov(cfg),
                              {"class", "sample", "centroid_class", "match"}, rows));
  std::cout << "centroid match " << hits << "/" << total << "\n";
}

void run_ablate(const RunConfig& cfg) {
  LoadedData d = load_dataset(cfg, true);
  VaeParams vae = load_vae(cfg, d);
  std::vector<size_t> toks;
  if (cfg.ablate_token >= 0)
    toks.push_back(static_cast<size_t>(cfg.ablate_token));
  else
    for (size_t t = 0; t < cfg.vae.tokens; ++t) toks.push_back(t);

  Provenance prov = make_prov(cfg);
  std::vector<std::vector<std::string>> rows;
  for (size_t t : toks) {
    AblationHeatmap h = token_ablation(vae, d.val, t);
    double mean_err = 0.0;
    for (double e : h.error) mean_err += e;
    mean_err /= static_cast<double>(h.error.size());
    rows.push_back({std::to_string(t), format_double(locality_score(h)),
                    format_double(mean_err)});
    write_file_atomic(
        path_join(cfg.report_dir, "ablation_token" + std::to_string(t) + ".svg"),
        svg_heatmap(prov, h.grid_h, h.grid_w, h.error,
                    "token " + std::to_string(t) + " ablation error"));
  }
  write_file_atomic(path_join(cfg.report_dir, "ablation.csv"),
                    csv_table(prov, {"token", "locality", "mean_error"}, rows));
  std::cout << "ablation heatmaps written for " << toks.size() << " tokens\n";
}

void run_analyze(const RunConfig& cfg) {
  LoadedData d = load_dataset(cfg, false);
  Provenance prov = make_prov(cfg);
  size_t dim = d.train.front().feature_dim;

  SimilarityCurve curve = spatial_similarity(d.val);
  std::vector<std::vector<std::string>> srows;
  for (size_t i = 0; i < curve.distance.size(); ++i)
    srows.push_back({format_double(curve.distance[i]),
                     format_double(curve.similarity[i]),
                     std::to_string(curve.pair_count[i])});
  write_file_atomic(path_join(cfg.report_dir, "spatial_similarity.csv"),
                    csv_table(prov, {"distance", "similarity", "pairs"}, srows));
  write_file_atomic(path_join(cfg.report_dir, "spatial_similarity.svg"),
                    svg_line_chart(prov, curve.distance, {curve.similarity},
                                   {"cosine similarity"},
                                   "patch similarity vs distance"));

  std::vector<std::vector<double>> pooled_train, pooled_val;
  std::vector<size_t> train_labels, val_labels;
  for (const FeatureGrid& g : d.train) {
    pooled_train.push_back(mean_pool(g.features, dim));
    train_labels.push_back(g.class_id);
  }
  for (const FeatureGrid& g : d.val) {
    pooled_val.push_back(mean_pool(g.features, dim));
    val_labels.push_back(g.class_id);
  }
  PcaReport pca = pca_compressibility(pooled_train);
  std::vector<std::vector<std::string>> prow;
  for (size_t i = 0; i < pca.eigenvalues.size(); ++i)
    prow.push_back({std::to_string(i), format_double(pca.eigenvalues[i])});
  prow.push_back({"dims_for_95pct", std::to_string(pca.dims_for_threshold)});
  prow.push_back({"compression_ratio", format_double(pca.compression_ratio)});
  write_file_atomic(path_join(cfg.report_dir, "pca.csv"),
                    csv_table(prov, {"component", "eigenvalue"}, prow));

  std::vector<std::vector<double>> flat_train, flat_val;
  for (const FeatureGrid& g : d.train) flat_train.push_back(g.features);
  for (const FeatureGrid& g : d.val) flat_val.push_back(g.features);
  KnnReport knn = knn_eval(flat_train, train_labels, flat_val, val_labels, 10, dim);
  std::vector<std::vector<std::string>> krows;
  krows.push_back({"features", std::to_string(knn.k),
                   format_double(knn.top1_accuracy)});

  std::string vae_path = path_join(cfg.checkpoint_dir, "vae.fdck");
  if (fs::exists(vae_path)) {
    LoadedData ds = d;
    standardize(ds.train, ds.manifest);
    standardize(ds.val, ds.manifest);
    VaeParams vae = load_vae(cfg, ds);
    std::vector<std::vector<double>> lat_train, lat_val;
    for (const FeatureGrid& g : ds.train) lat_train.push_back(encode_mean(vae, g));
    for (const FeatureGrid& g : ds.val) lat_val.push_back(encode_mean(vae, g));
    KnnReport lknn = knn_eval(lat_train, train_labels, lat_val, val_labels, 10,
                              cfg.vae.latent_dim);
    krows.push_back({"latents", std::to_string(lknn.k),
                     format_double(lknn.top1_accuracy)});

    std::vector<double> sigmas = {0.0, 0.1, 0.25, 0.5, 1.0, 2.0};
    RngStream nrng = RngStream(cfg.seed).sub("noise-sweep");
    NoiseSweep sweep = noise_sweep(vae, ds.val, sigmas, nrng);
    std::vector<std::vector<std::string>> nrows;
    for (size_t i = 0; i < sweep.sigma.size(); ++i)
      nrows.push_back({format_double(sweep.sigma[i]), format_double(sweep.error[i])});
    write_file_atomic(path_join(cfg.report_dir, "noise_sweep.csv"),
                      csv_table(prov, {"sigma", "recon_error"}, nrows));
  }
  write_file_atomic(path_join(cfg.report_dir, "knn.csv"),
                    csv_table(prov, {"space", "k", "top1"}, krows));
  std::cout << "analysis reports written to " << cfg.report_dir << "\n";
}

void run_sweep_cfg(const RunConfig& cfg) {
  LoadedData d = load_dataset(cfg, false);
  std::vector<std::vector<double>> centroids = class_centroids(d.train, cfg.num_classes);
  standardize(d.train, d.manifest);
  VaeParams vae = load_vae(cfg, d);
  LoadedFlow flow = load_flow(cfg, true);
  size_t dim = d.train.front().feature_dim;

  const std::vector<double> weights = {1.5, 2.0, 3.0, 4.5, 6.0};
  const std::vector<double> t_los = {0.0, 0.1, 0.2, 0.3, 0.4};
  std::vector<std::vector<std::string>> rows;
  RngStream root = RngStream(cfg.seed).sub("sampling");
  for (double w : weights) {
    for (double t_lo : t_los) {
      FlowConfig f = flow_config_for(cfg);
      f.cfg_weight = w;
      f.cfg_t_lo = t_lo;
      std::vector<std::vector<double>> pooled;
      size_t hits = 0, total = 0;
      for (size_t c = 0; c < cfg.num_classes; ++c)
        for (size_t i = 0; i < cfg.sample_count; ++i) {
          RngStream rng = root.sub(c).sub(i);
          std::vector<double> feats = sample_decoded_features(
              vae, flow.model, flow.stats, d.manifest, f, c, rng);
          std::vector<double> p = mean_pool(feats, dim);
          hits += nearest_centroid(p, centroids) == c;
          ++total;
          pooled.push_back(std::move(p));
        }
      double pair_dist = 0.0;
      size_t pairs = 0;
      for (size_t i = 0; i < pooled.size(); ++i)
        for (size_t j = i + 1; j < pooled.size(); ++j) {
          double s = 0.0;
          for (size_t k = 0; k < dim; ++k) {
            double diff = pooled[i][k] - pooled[j][k];
            s += diff * diff;
          }
          pair_dist += std::sqrt(s);
          ++pairs;
        }
      rows.push_back({format_double(w), format_double(t_lo),
                      format_double(static_cast<double>(hits) /
                                    static_cast<double>(total)),
                      format_double(pairs ? pair_dist / pairs : 0.0)});
    }
  }
  write_file_atomic(path_join(cfg.report_dir, "cfg_sweep.csv"),
                    csv_table(make_prov(cfg),
                              {"weight", "t_lo", "centroid_accuracy",
                               "mean_pairwise_distance"},
                              rows));
  std::cout << "guidance sweep written (" << rows.size() << " cells)\n";
}

void run_sweep_latent(const RunConfig& cfg) {
  LoadedData d = load_dataset(cfg, true);
  const FeatureGrid& g = d.train.front();
  size_t budget = cfg.vae.tokens * cfg.vae.latent_dim;
  std::vector<std::pair<size_t, size_t>> configs;
  for (size_t t = 2; t <= g.grid_h * g.grid_w && t <= budget; t *= 2)
    if (budget % t == 0) configs.push_back({t, budget / t});

  std::vector<std::vector<std::string>> rows;
  for (auto [T, dim] : configs) {
    VaeConfig vc = cfg.vae;
    vc.tokens = T;
    vc.latent_dim = dim;
    RngStream init = RngStream(cfg.seed).sub("init");
    VaeParams p = make_vae(vc, g.grid_h, g.grid_w, g.feature_dim, init);
    VaeTrainOptions opts;
    opts.batch_size = cfg.batch_size;
    opts.seed = RngStream(cfg.seed).sub("training").next_u64();
    VaeTrainResult res = train_vae(p, d.train, d.val, schedule_for(cfg.vae_epochs), opts);
    rows.push_back({std::to_string(T), std::to_string(dim), std::to_string(T * dim),
                    format_double(vc.beta()), format_double(res.best_val_recon)});
    std::cout << "T=" << T << " d=" << dim << " val MSE "
              << format_double(res.best_val_recon) << "\n";
  }
  write_file_atomic(path_join(cfg.report_dir, "latent_sweep.csv"),
                    csv_table(make_prov(cfg),
                              {"tokens", "latent_dim", "total_dim", "beta", "val_mse"},
                              rows));
}

namespace {

std::string fmt_layer_gf(double gf) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), gf >= 0.005 ? "%.2f" : "%.3f", gf);
  return buf;
}

std::string fmt_tenths(long long tenths) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", static_cast<double>(tenths) / 10.0);
  return buf;
}

std::string join_slash(const std::vector<std::string>& parts) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) out += (i ? "/" : "") + parts[i];
  return out;
}

}  // namespace

FlopsReport build_flops_report() {
  struct ModelDef {
    std::string name;
    std::vector<std::pair<long long, long long>> groups;  // (layers, hidden)
  };
  const std::vector<ModelDef> models = {
      {"DiT-L (24L)", {{24, 1024}}},
      {"DiT-XL (28L)", {{28, 1152}}},
      {"DiT-DH-XL (28L+2L)", {{28, 1152}, {2, 2048}}},
  };
  const std::vector<std::pair<std::string, long long>> latents = {
      {"patch-grid", 256}, {"token-seq", 32}};

  ModelSpec backbone = vit_encoder_spec("backbone-vitb", 12, 768, 261);
  ModelSpec compressor = vit_encoder_spec("compressor-vitb", 12, 768, 288);

  FlopsReport rep;
  rep.backbone_tenths = round_tenths_gflops(encoding_flops(backbone));
  rep.compressor_tenths = round_tenths_gflops(encoding_flops(compressor));

  for (const ModelDef& md : models) {
    for (const auto& [lname, S] : latents) {
      ModelSpec spec{md.name};
      FlopsRow row;
      row.model = md.name;
      row.latent = lname;
      row.seq = S;
      for (const auto& [layers, hidden] : md.groups) {
        spec.layers.push_back({LayerSpec{1, S, hidden}, layers});
        CostBreakdown per = layer_flops(LayerSpec{1, S, hidden});
        row.hidden.push_back(hidden);
        row.per_layer_linear_gf.push_back(flops_to_gflops(per.linear_flops));
        row.per_layer_attention_gf.push_back(flops_to_gflops(per.attention_flops));
      }
      row.forward_tenths = model_tenths(spec);
      row.backward_tenths = 2 * row.forward_tenths;
      row.train_tenths = 3 * row.forward_tenths;
      row.encoding_tenths =
          rep.backbone_tenths + (lname == "token-seq" ? rep.compressor_tenths : 0);
      row.grand_total_tenths = row.encoding_tenths + row.train_tenths;
      rep.rows.push_back(std::move(row));
    }
    const FlopsRow& grid = rep.rows[rep.rows.size() - 2];
    const FlopsRow& tok = rep.rows.back();
    rep.forward_reduction.push_back(static_cast<double>(grid.forward_tenths) /
                                    static_cast<double>(tok.forward_tenths));
    rep.training_reduction.push_back(static_cast<double>(grid.grand_total_tenths) /
                                     static_cast<double>(tok.grand_total_tenths));
  }

  std::ostringstream txt;
  txt << "Forward FLOPs per sample (GFLOPs; one multiply-add = one FLOP)\n";
  txt << "model              latent      S    D          linear/layer attn/layer  total\n";
  for (const FlopsRow& r : rep.rows) {
    std::vector<std::string> hid, lin, att;
    for (size_t i = 0; i < r.hidden.size(); ++i) {
      hid.push_back(std::to_string(r.hidden[i]));
      lin.push_back(fmt_layer_gf(r.per_layer_linear_gf[i]));
      att.push_back(fmt_layer_gf(r.per_layer_attention_gf[i]));
    }
    char line[160];
    std::snprintf(line, sizeof(line), "%-18s %-10s %4lld  %-10s %-12s %-10s %s\n",
                  r.model.c_str(), r.latent.c_str(), r.seq, join_slash(hid).c_str(),
                  join_slash(lin).c_str(), join_slash(att).c_str(),
                  fmt_tenths(r.forward_tenths).c_str());
    txt << line;
  }
  txt << "\nTraining-step FLOPs (backward = 2x forward)\n";
  txt << "model              latent      forward  backward  step\n";
  for (const FlopsRow& r : rep.rows) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-18s %-10s %8s %9s %6s\n", r.model.c_str(),
                  r.latent.c_str(), fmt_tenths(r.forward_tenths).c_str(),
                  fmt_tenths(r.backward_tenths).c_str(),
                  fmt_tenths(r.train_tenths).c_str());
    txt << line;
  }
  txt << "\nTraining-step FLOPs with encoding overhead\n";
  txt << "model              latent      encoding  step     total    reduction\n";
  for (size_t i = 0; i < rep.rows.size(); ++i) {
    const FlopsRow& r = rep.rows[i];
    char red[16] = "";
    if (i % 2 == 1)
      std::snprintf(red, sizeof(red), "%.1fx", rep.training_reduction[i / 2]);
    char line[160];
    std::snprintf(line, sizeof(line), "%-18s %-10s %8s %7s %8s   %s\n", r.model.c_str(),
                  r.latent.c_str(), fmt_tenths(r.encoding_tenths).c_str(),
                  fmt_tenths(r.train_tenths).c_str(),
                  fmt_tenths(r.grand_total_tenths).c_str(), red);
    txt << line;
  }
  txt << "\nEncoding costs: backbone " << fmt_tenths(rep.backbone_tenths)
      << " GFLOPs, compressor " << fmt_tenths(rep.compressor_tenths) << " GFLOPs\n";
  txt << "Forward reductions:";
  for (double x : rep.forward_reduction) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), " %.1fx", x);
    txt << buf;
  }
  txt << "\n";
  rep.text = txt.str();

  std::vector<std::vector<std::string>> rows;
  for (size_t i = 0; i < rep.rows.size(); ++i) {
    const FlopsRow& r = rep.rows[i];
    std::vector<std::string> hid, lin, att;
    for (size_t k = 0; k < r.hidden.size(); ++k) {
      hid.push_back(std::to_string(r.hidden[k]));
      lin.push_back(fmt_layer_gf(r.per_layer_linear_gf[k]));
      att.push_back(fmt_layer_gf(r.per_layer_attention_gf[k]));
    }
    char fred[16], tred[16];
    std::snprintf(fred, sizeof(fred), "%.1f", rep.forward_reduction[i / 2]);
    std::snprintf(tred, sizeof(tred), "%.1f", rep.training_reduction[i / 2]);
    rows.push_back({r.model, r.latent, std::to_string(r.seq), join_slash(hid),
                    join_slash(lin), join_slash(att), fmt_tenths(r.forward_tenths),
                    fmt_tenths(r.backward_tenths), fmt_tenths(r.train_tenths),
                    fmt_tenths(r.encoding_tenths), fmt_tenths(r.grand_total_tenths),
                    fred, tred});
  }
  Provenance prov;
  prov.command = "flops";
  rep.csv = csv_table(prov,
                      {"model", "latent", "seq", "hidden", "linear_gf_per_layer",
                       "attention_gf_per_layer", "forward_gf", "backward_gf",
                       "train_step_gf", "encoding_gf", "total_gf",
                       "forward_reduction", "training_reduction"},
                      rows);
  return rep;
}

void run_flops(const RunConfig& cfg) {
  FlopsReport rep = build_flops_report();
  std::cout << rep.text;
  Provenance prov = make_prov(cfg);
  std::vector<std::string> lines;
  // Re-emit the CSV under this run's provenance header.
  std::istringstream in(rep.csv);
  std::string line, body;
  std::getline(in, line);  // drop the placeholder header
  while (std::getline(in, line)) body += line + "\n";
  write_file_atomic(path_join(cfg.report_dir, "flops.csv"),
                    prov.header_line() + "\n" + body);
}

void run_bench(const RunConfig& cfg) {
  std::vector<ThroughputCell> cells = throughput_bench(
      {8, 16, 32, 64}, {1, 8, 32}, cfg.bench_seconds, cfg.flow.model_dim,
      cfg.flow.depth, cfg.seed);
  std::vector<std::vector<std::string>> rows;
  for (const ThroughputCell& c : cells) {
    rows.push_back({std::to_string(c.seq_len), std::to_string(c.batch),
                    format_double(c.passes_per_sec)});
    std::cout << "S=" << c.seq_len << " B=" << c.batch << "  "
              << format_double(c.passes_per_sec) << " samples/s\n";
  }
  write_file_atomic(path_join(cfg.report_dir, "throughput.csv"),
                    csv_table(make_prov(cfg),
                              {"seq_len", "batch", "samples_per_sec"}, rows));
}

int dispatch(const RunConfig& cfg) {
  try {
    cfg.validate();
    if (cfg.command == "gen-data") run_gen_data(cfg);
    else if (cfg.command == "train-vae") run_train_vae(cfg);
    else if (cfg.command == "train-flow") run_train_flow(cfg);
    else if (cfg.command == "sample") run_sample(cfg);
    else if (cfg.command == "ablate") run_ablate(cfg);
    else if (cfg.command == "analyze") run_analyze(cfg);
    else if (cfg.command == "sweep-cfg") run_sweep_cfg(cfg);
    else if (cfg.command == "sweep-latent") run_sweep_latent(cfg);
    else if (cfg.command == "flops") run_flops(cfg);
    else if (cfg.command == "bench") run_bench(cfg);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const TrainingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 6;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace tokflow
