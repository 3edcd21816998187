#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "tokflow/pipeline.hpp"

namespace {

std::string join_args(int argc, char** argv) {
  std::ostringstream os;
  for (int i = 0; i < argc; ++i) os << (i ? " " : "") << argv[i];
  return os.str();
}

void add_common(CLI::App* sub, tokflow::RunConfig& cfg) {
  sub->add_option("--seed", cfg.seed, "top-level seed; all streams derive from it")
      ->envname("TOKFLOW_SEED");
  sub->add_option("--dataset-dir", cfg.dataset_dir)->envname("TOKFLOW_DATASET_DIR");
  sub->add_option("--checkpoint-dir", cfg.checkpoint_dir)
      ->envname("TOKFLOW_CHECKPOINT_DIR");
  sub->add_option("--report-dir", cfg.report_dir)->envname("TOKFLOW_REPORT_DIR");
  sub->set_config("--config", "", "flat key=value config file; flags take precedence");
  sub->allow_config_extras(false);
}

void add_vae_opts(CLI::App* sub, tokflow::RunConfig& cfg) {
  sub->add_option("--tokens", cfg.vae.tokens, "latent token count T");
  sub->add_option("--latent-dim", cfg.vae.latent_dim, "per-token dimension d");
  sub->add_option("--vae-model-dim", cfg.vae.model_dim);
  sub->add_option("--vae-heads", cfg.vae.heads);
  sub->add_option("--enc-depth", cfg.vae.enc_depth);
  sub->add_option("--dec-depth", cfg.vae.dec_depth);
  sub->add_option("--epochs", cfg.vae_epochs);
  sub->add_option("--batch-size", cfg.batch_size);
}

void add_flow_opts(CLI::App* sub, tokflow::RunConfig& cfg) {
  sub->add_option("--tokens", cfg.vae.tokens, "latent token count T");
  sub->add_option("--latent-dim", cfg.vae.latent_dim, "per-token dimension d");
  sub->add_option("--flow-model-dim", cfg.flow.model_dim);
  sub->add_option("--flow-heads", cfg.flow.heads);
  sub->add_option("--depth", cfg.flow.depth);
  sub->add_option("--steps", cfg.flow_steps);
  sub->add_option("--batch-size", cfg.batch_size);
  sub->add_option("--lr", cfg.flow_lr);
  sub->add_option("--kappa", cfg.flow.kappa, "time-shift strength, >= 1")
      ->check(CLI::Range(1.0, 1e9));
  sub->add_option("--euler-steps", cfg.flow.euler_steps);
  sub->add_option("--cfg-weight", cfg.flow.cfg_weight);
  sub->add_option("--cfg-t-lo", cfg.flow.cfg_t_lo);
  sub->add_option("--cfg-t-hi", cfg.flow.cfg_t_hi);
  sub->add_option("--label-dropout", cfg.flow.label_dropout);
  sub->add_option("--ema-decay", cfg.flow.ema_decay);
}

}  // namespace

int main(int argc, char** argv) {
  tokflow::RunConfig cfg;
  cfg.command_line = join_args(argc, argv);

  CLI::App app{"feature-grid compression and flow-matching pipeline"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic feature dataset");
  add_common(gen, cfg);
  gen->add_option("--train-count", cfg.train_count);
  gen->add_option("--val-count", cfg.val_count);
  gen->add_option("--num-classes", cfg.num_classes);

  auto* tv = app.add_subcommand("train-vae", "train the register-token compressor");
  add_common(tv, cfg);
  add_vae_opts(tv, cfg);

  auto* tf = app.add_subcommand("train-flow", "train the latent velocity model");
  add_common(tf, cfg);
  add_flow_opts(tf, cfg);
  tf->add_option("--vae-model-dim", cfg.vae.model_dim);
  tf->add_option("--vae-heads", cfg.vae.heads);
  tf->add_option("--enc-depth", cfg.vae.enc_depth);
  tf->add_option("--dec-depth", cfg.vae.dec_depth);

  auto* sm = app.add_subcommand("sample", "draw class-conditional samples");
  add_common(sm, cfg);
  add_flow_opts(sm, cfg);
  sm->add_option("--vae-model-dim", cfg.vae.model_dim);
  sm->add_option("--vae-heads", cfg.vae.heads);
  sm->add_option("--enc-depth", cfg.vae.enc_depth);
  sm->add_option("--dec-depth", cfg.vae.dec_depth);
  sm->add_option("--count", cfg.sample_count, "samples per class");
  sm->add_option("--class", cfg.sample_class, "single class id, or -1 for all");
  sm->add_option("--num-classes", cfg.num_classes);

  auto* ab = app.add_subcommand("ablate", "token-ablation heatmaps");
  add_common(ab, cfg);
  add_vae_opts(ab, cfg);
  ab->add_option("--token", cfg.ablate_token, "single token index, or -1 for all");

  auto* an = app.add_subcommand("analyze",
                                "similarity curve, PCA, k-NN, noise robustness");
  add_common(an, cfg);
  add_vae_opts(an, cfg);

  auto* sc = app.add_subcommand("sweep-cfg", "guidance weight x interval grid");
  add_common(sc, cfg);
  add_flow_opts(sc, cfg);
  sc->add_option("--vae-model-dim", cfg.vae.model_dim);
  sc->add_option("--vae-heads", cfg.vae.heads);
  sc->add_option("--enc-depth", cfg.vae.enc_depth);
  sc->add_option("--dec-depth", cfg.vae.dec_depth);
  sc->add_option("--count", cfg.sample_count, "samples per class per cell");
  sc->add_option("--num-classes", cfg.num_classes);

  auto* sl = app.add_subcommand("sweep-latent",
                                "latent-shape grid at fixed total dimensionality");
  add_common(sl, cfg);
  add_vae_opts(sl, cfg);

  auto* fl = app.add_subcommand("flops", "analytic transformer cost tables");
  add_common(fl, cfg);

  auto* be = app.add_subcommand("bench", "forward-pass throughput benchmark");
  add_common(be, cfg);
  be->add_option("--bench-seconds", cfg.bench_seconds, "measurement window per cell");
  be->add_option("--flow-model-dim", cfg.flow.model_dim);
  be->add_option("--depth", cfg.flow.depth);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  cfg.command = app.get_subcommands().front()->get_name();
  return tokflow::dispatch(cfg);
}
