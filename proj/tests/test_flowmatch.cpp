#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "tokflow/flowmatch.hpp"

using namespace tokflow;

namespace {

FlowConfig toy_cfg() {
  FlowConfig c;
  c.tokens = 2;
  c.latent_dim = 2;
  c.model_dim = 8;
  c.heads = 2;
  c.depth = 1;
  c.num_classes = 2;
  return c;
}

}  // namespace

TEST_CASE("time shift fixed points and exact values") {
  CHECK(time_shift(0.0, 3.0) == 0.0);
  CHECK(time_shift(1.0, 3.0) == 1.0);
  CHECK(time_shift(0.5, 3.0) == 0.25);
  for (double t : {0.0, 0.1, 0.37, 0.5, 0.99, 1.0})
    CHECK(time_shift(t, 1.0) == t);
  CHECK_THROWS_AS(time_shift(0.5, 0.5), ConfigError);
  CHECK_THROWS_AS(time_shift(-0.1, 2.0), ContractError);
  CHECK_THROWS_AS(time_shift(1.1, 2.0), ContractError);
}

TEST_CASE("time shift is increasing, contractive, and invertible") {
  double kappa = 3.0;
  double prev = -1.0;
  for (int i = 0; i <= 100; ++i) {
    double t = i / 100.0;
    double s = time_shift(t, kappa);
    CHECK(s > prev);
    prev = s;
    CHECK(s <= t + 1e-15);
    if (t > 0 && t < 1) CHECK(s < t);
    // algebraic inverse: t = kappa*s / (1 + (kappa-1)*s)
    double back = kappa * s / (1.0 + (kappa - 1.0) * s);
    CHECK(std::abs(back - t) < 1e-12);
  }
}

TEST_CASE("interpolant endpoints and midpoint") {
  std::vector<double> z0 = {0, 0}, z1 = {2, 4};
  CHECK(interpolate(z0, z1, 0.0) == z0);
  CHECK(interpolate(z0, z1, 1.0) == z1);
  std::vector<double> mid = interpolate(z0, z1, 0.5);
  CHECK(mid == std::vector<double>{1, 2});
  CHECK_THROWS_AS(interpolate(z0, z1, 1.5), ContractError);
}

TEST_CASE("velocity model output preserves latent shape and starts near zero") {
  FlowConfig cfg = toy_cfg();
  RngStream rng(1);
  VelocityModel m = make_velocity_model(cfg, rng);
  std::vector<double> z(2 * cfg.tokens * cfg.latent_dim, 0.5);
  Tensor zt = constant({2 * cfg.tokens, cfg.latent_dim}, z);
  Tensor v = velocity_forward(m, zt, {0.3, 0.8}, {0, 1});
  CHECK(v->rows() == zt->rows());
  CHECK(v->cols() == zt->cols());
  // zero-initialized output projection: the field starts at exactly zero
  for (double x : v->val) CHECK(x == 0.0);
}

TEST_CASE("plain-vector eval agrees with tensor forward") {
  FlowConfig cfg = toy_cfg();
  RngStream rng(2);
  VelocityModel m = make_velocity_model(cfg, rng);
  // push the output projection away from zero so the check is non-trivial
  RngStream wr(3);
  for (double& x : m.out_w->val) x = 0.3 * wr.normal();
  std::vector<double> z(cfg.tokens * cfg.latent_dim);
  for (double& x : z) x = wr.normal();
  std::vector<double> v = velocity_eval(m, z, 0.4, 1);
  Tensor vt = velocity_forward(m, constant({cfg.tokens, cfg.latent_dim}, z), {0.4}, {1});
  REQUIRE(v.size() == vt->size());
  for (size_t i = 0; i < v.size(); ++i)
    CHECK(v[i] == doctest::Approx(vt->val[i]).epsilon(1e-12));
}

TEST_CASE("fm loss on a zero model equals the interpolant gap energy") {
  FlowConfig cfg = toy_cfg();
  RngStream rng(4);
  VelocityModel m = make_velocity_model(cfg, rng);  // outputs exactly zero
  size_t coords = cfg.tokens * cfg.latent_dim;
  std::vector<std::vector<double>> z1(64, std::vector<double>(coords));
  RngStream dr(5);
  for (auto& row : z1)
    for (double& x : row) x = dr.normal();
  std::vector<size_t> labels(64, 0);
  // E ||z1 - z0||^2 = sum(z1^2) + coords per sample
  double expect = 0;
  for (const auto& row : z1)
    for (double x : row) expect += x * x;
  expect = expect / 64.0 + coords;
  double acc = 0;
  const int trials = 200;
  RngStream lr(6);
  for (int i = 0; i < trials; ++i) {
    Tensor loss = fm_loss(m, z1, labels, lr);
    acc += loss->val[0];
  }
  CHECK(std::abs(acc / trials - expect) / expect < 0.02);
}

TEST_CASE("fm loss gradient passes grad_check on a 2-token 2-dim toy") {
  FlowConfig cfg = toy_cfg();
  RngStream rng(7);
  VelocityModel m = make_velocity_model(cfg, rng);
  std::vector<std::vector<double>> z1 = {{0.3, -0.8, 1.1, 0.2}, {-0.5, 0.9, 0.1, -1.2}};
  std::vector<size_t> labels = {0, 1};
  auto loss = [&] {
    RngStream lrng(8);
    return fm_loss(m, z1, labels, lrng);
  };
  CHECK(grad_check(loss, m.parameters(), 1e-5) < 1e-4);
}

TEST_CASE("guidance algebra: w=1 and interval gating are bitwise") {
  FlowConfig cfg = toy_cfg();
  RngStream rng(9);
  VelocityModel m = make_velocity_model(cfg, rng);
  RngStream wr(10);
  for (double& x : m.out_w->val) x = 0.3 * wr.normal();
  std::vector<double> z(cfg.tokens * cfg.latent_dim);
  for (double& x : z) x = wr.normal();

  FlowConfig c1 = cfg;
  c1.cfg_weight = 1.0;
  for (double t : {0.1, 0.3, 0.7}) {
    std::vector<double> g = guided_velocity(m, z, t, 1, c1);
    std::vector<double> v = velocity_eval(m, z, t, 1);
    CHECK(g == v);  // bitwise
  }

  FlowConfig c2 = cfg;
  c2.cfg_weight = 4.5;
  c2.cfg_t_lo = 0.225;
  c2.cfg_t_hi = 1.0;
  std::vector<double> below = guided_velocity(m, z, 0.1, 1, c2);
  CHECK(below == velocity_eval(m, z, 0.1, 1));  // outside interval: untouched

  // inside the interval the formula must act: with distinct cond/uncond
  // velocities, w=2 gives v_u + 2(v_c - v_u)
  std::vector<double> vc = velocity_eval(m, z, 0.5, 1);
  std::vector<double> vu = velocity_eval(m, z, 0.5, kNullClass);
  FlowConfig c3 = c2;
  c3.cfg_weight = 2.0;
  std::vector<double> inside = guided_velocity(m, z, 0.5, 1, c3);
  for (size_t i = 0; i < inside.size(); ++i)
    CHECK(inside[i] == doctest::Approx(vu[i] + 2.0 * (vc[i] - vu[i])).epsilon(1e-12));
}

TEST_CASE("euler integration oracles") {
  // constant field: exact for any step count
  std::vector<double> c = {0.7, -1.3};
  for (size_t steps : {1u, 7u, 50u}) {
    std::vector<double> grid(steps + 1);
    for (size_t i = 0; i <= steps; ++i) grid[i] = static_cast<double>(i) / steps;
    std::vector<double> z =
        euler_integrate([&](const std::vector<double>&, double) { return c; },
                        {0.0, 0.0}, grid);
    CHECK(std::abs(z[0] - 0.7) < 1e-12);
    CHECK(std::abs(z[1] + 1.3) < 1e-12);
  }

  // linear field v = -z: ||z(1)|| ~= e^-1 ||z0|| at 1000 steps
  {
    std::vector<double> grid(1001);
    for (size_t i = 0; i <= 1000; ++i) grid[i] = i / 1000.0;
    std::vector<double> z = euler_integrate(
        [](const std::vector<double>& zz, double) {
          std::vector<double> v(zz.size());
          for (size_t i = 0; i < zz.size(); ++i) v[i] = -zz[i];
          return v;
        },
        {2.0}, grid);
    CHECK(std::abs(z[0] - 2.0 * std::exp(-1.0)) / (2.0 * std::exp(-1.0)) < 0.01);
  }

  // straight-path oracle: v = z1* - z0 lands on z1*
  {
    std::vector<double> z0 = {0.2, -0.4}, z1 = {1.5, 2.5};
    std::vector<double> v0 = {z1[0] - z0[0], z1[1] - z0[1]};
    std::vector<double> grid = shifted_time_grid(50, 3.0);
    std::vector<double> z = euler_integrate(
        [&](const std::vector<double>&, double) { return v0; }, z0, grid);
    CHECK(std::abs(z[0] - z1[0]) < 1e-6);
    CHECK(std::abs(z[1] - z1[1]) < 1e-6);
  }
}

TEST_CASE("shifted grid endpoints, monotonicity, and late-time bias") {
  std::vector<double> grid = shifted_time_grid(50, 3.0);
  REQUIRE(grid.size() == 51);
  CHECK(grid.front() == 0.0);
  CHECK(grid.back() == 1.0);
  for (size_t i = 1; i < grid.size(); ++i) CHECK(grid[i] > grid[i - 1]);
  // kappa > 1 pushes mass toward late raw times: midpoint maps below 0.5
  CHECK(grid[25] == doctest::Approx(0.25));
}

TEST_CASE("sampling differs only at steps inside the guidance interval") {
  FlowConfig cfg = toy_cfg();
  cfg.euler_steps = 20;
  RngStream rng(11);
  VelocityModel m = make_velocity_model(cfg, rng);
  RngStream wr(12);
  // perturb every parameter: the conditioning path is zero-gated at init, so
  // a fresh model produces identical guided and unguided velocities
  for (Tensor& p : m.parameters())
    for (double& x : p->val) x += 0.2 * wr.normal();

  std::vector<double> grid = shifted_time_grid(cfg.euler_steps, cfg.kappa);
  std::vector<double> z0(cfg.tokens * cfg.latent_dim);
  for (double& x : z0) x = wr.normal();

  FlowConfig a = cfg;
  a.cfg_weight = 1.0;
  FlowConfig b = cfg;
  b.cfg_weight = 4.0;
  // trace both trajectories; before any t >= t_lo they must agree bitwise
  std::vector<double> za = z0, zb = z0;
  for (size_t i = 0; i + 1 < grid.size(); ++i) {
    double t = grid[i], dt = grid[i + 1] - grid[i];
    std::vector<double> va = guided_velocity(m, za, t, 1, a);
    std::vector<double> vb = guided_velocity(m, zb, t, 1, b);
    for (size_t k = 0; k < za.size(); ++k) {
      za[k] += dt * va[k];
      zb[k] += dt * vb[k];
    }
    if (grid[i + 1] < b.cfg_t_lo) CHECK(za == zb);
  }
  CHECK(za != zb);  // guidance did act inside the interval
}

TEST_CASE("latent standardization round trip and moments") {
  std::vector<std::vector<double>> latents(100, std::vector<double>(4));
  RngStream rng(13);
  for (auto& row : latents)
    for (size_t d = 0; d < 4; ++d) row[d] = 2.0 * rng.normal() + d;
  LatentStats s = latent_stats(latents);
  std::vector<std::vector<double>> orig = latents;
  standardize_latents(latents, s);
  for (size_t d = 0; d < 4; ++d) {
    double mean = 0, var = 0;
    for (const auto& row : latents) mean += row[d];
    mean /= latents.size();
    for (const auto& row : latents) var += (row[d] - mean) * (row[d] - mean);
    var /= latents.size();
    CHECK(std::abs(mean) < 1e-12);
    CHECK(std::abs(var - 1.0) < 1e-9);
  }
  for (size_t i = 0; i < latents.size(); ++i) {
    std::vector<double> z = latents[i];
    destandardize_latent(z, s);
    for (size_t d = 0; d < 4; ++d)
      CHECK(z[d] == doctest::Approx(orig[i][d]).epsilon(1e-12));
  }
}

TEST_CASE("flow training is deterministic and reduces the loss") {
  FlowConfig cfg = toy_cfg();
  size_t coords = cfg.tokens * cfg.latent_dim;
  std::vector<std::vector<double>> latents(64, std::vector<double>(coords));
  std::vector<size_t> labels(64);
  RngStream dr(14);
  for (size_t i = 0; i < latents.size(); ++i) {
    labels[i] = i % 2;
    for (size_t d = 0; d < coords; ++d)
      latents[i][d] = dr.normal() + (labels[i] ? 1.5 : -1.5);
  }
  auto run = [&] {
    RngStream rng(15);
    VelocityModel m = make_velocity_model(cfg, rng);
    FlowTrainOptions opts;
    opts.steps = 500;
    opts.batch_size = 16;
    opts.lr = 2e-3;
    opts.seed = 16;
    opts.log_every = 10;
    return train_flow(m, latents, labels, opts);
  };
  FlowTrainResult r1 = run();
  FlowTrainResult r2 = run();
  REQUIRE(!r1.log.empty());
  CHECK(r1.log.back().loss == r2.log.back().loss);
  CHECK(r1.log.back().ema_val_loss == r2.log.back().ema_val_loss);
  // loss after 500 steps < 0.8x the early loss
  CHECK(r1.log.back().loss < 0.8 * r1.log.front().loss);
}

TEST_CASE("flow config validation") {
  FlowConfig c = toy_cfg();
  c.kappa = 0.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = toy_cfg();
  c.cfg_t_lo = 0.8;
  c.cfg_t_hi = 0.3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = toy_cfg();
  c.label_dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
