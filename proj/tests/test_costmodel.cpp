#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "tokflow/costmodel.hpp"
#include "tokflow/pipeline.hpp"

using namespace tokflow;

TEST_CASE("layer flops published cells and unit case") {
  CostBreakdown c = layer_flops({1, 256, 1024});
  CHECK(c.linear_flops == 12LL * 256 * 1024 * 1024);
  CHECK(c.linear_flops / 1e9 == doctest::Approx(3.221).epsilon(1e-3));
  CHECK(c.attention_flops / 1e9 == doctest::Approx(0.134).epsilon(1e-2));

  CostBreakdown d = layer_flops({1, 32, 1152});
  CHECK(d.linear_flops / 1e9 == doctest::Approx(0.510).epsilon(1e-3));

  CostBreakdown unit = layer_flops({1, 1, 1});
  CHECK(unit.linear_flops == 12);
  CHECK(unit.attention_flops == 2);
  CHECK(unit.total() == 14);

  CHECK_THROWS_AS(layer_flops({1, 0, 64}), ContractError);
}

TEST_CASE("model totals reproduce the published table") {
  CHECK(model_tenths(dit_spec("l", 24, 1024, 256)) == 805);
  CHECK(model_tenths(dit_spec("l", 24, 1024, 32)) == 97);
  CHECK(model_tenths(dit_spec("xl", 28, 1152, 256)) == 1184);
  CHECK(model_tenths(dit_spec("xl", 28, 1152, 32)) == 143);
  CHECK(model_tenths(dit_dh_spec("dh", 28, 1152, 2, 2048, 256)) == 1447);
  CHECK(model_tenths(dit_dh_spec("dh", 28, 1152, 2, 2048, 32)) == 175);
}

TEST_CASE("encoding costs and the zero-length stack") {
  CHECK(round_tenths_gflops(encoding_flops(vit_encoder_spec("b", 12, 768, 261))) == 234);
  CHECK(round_tenths_gflops(encoding_flops(vit_encoder_spec("b", 12, 768, 288))) == 260);
  ModelSpec empty_seq{"none", {{LayerSpec{1, 0, 768}, 12}}};
  CHECK(encoding_flops(empty_seq) == 0);
}

TEST_CASE("tenths rounding is half-even") {
  CHECK(round_tenths_gflops(50'000'000) == 0);    // exactly 0.05 -> even 0
  CHECK(round_tenths_gflops(150'000'000) == 2);   // exactly 0.15 -> even 2
  CHECK(round_tenths_gflops(149'999'999) == 1);
  CHECK(round_tenths_gflops(150'000'001) == 2);
  CHECK(round_tenths_gflops(0) == 0);
}

TEST_CASE("training cost composition and published reductions") {
  ModelSpec xl_grid = dit_spec("xl", 28, 1152, 256);
  ModelSpec xl_tok = dit_spec("xl", 28, 1152, 32);
  ModelSpec backbone = vit_encoder_spec("b", 12, 768, 261);
  ModelSpec compressor = vit_encoder_spec("c", 12, 768, 288);

  TrainingCost grid = training_cost(xl_grid, {backbone});
  TrainingCost tok = training_cost(xl_tok, {backbone, compressor});
  CHECK(grid.backward_tenths == 2 * grid.forward_tenths);
  CHECK(grid.total_tenths == grid.encoding_tenths + 3 * grid.forward_tenths);
  CHECK(grid.total_tenths == 3786);
  CHECK(tok.total_tenths == 923);
  double red = reduction_ratio(grid, tok);
  CHECK(std::abs(red - 4.1) < 0.05);

  TrainingCost same = training_cost(xl_grid, {backbone});
  CHECK(reduction_ratio(grid, same) == 1.0);
}

TEST_CASE("forward reduction for DiT-XL equals 8.28 to three figures") {
  double ratio = 1184.0 / 143.0;
  CHECK(std::abs(ratio - 8.28) < 0.005);
}

TEST_CASE("attention share below 5% on patch-grid configs") {
  for (long long D : {1024LL, 1152LL, 2048LL}) {
    CostBreakdown c = layer_flops({1, 256, D});
    double share = static_cast<double>(c.attention_flops) / c.total();
    CHECK(share < 0.05);
  }
}

TEST_CASE("overflow is detected, not wrapped") {
  CHECK_THROWS_AS(layer_flops({1'000'000'000, 1'000'000, 1'000'000}), NumericError);
}

TEST_CASE("full table report carries every published cell") {
  FlopsReport rep = build_flops_report();
  REQUIRE(rep.rows.size() == 6);
  CHECK(rep.rows[0].forward_tenths == 805);
  CHECK(rep.rows[1].forward_tenths == 97);
  CHECK(rep.rows[2].forward_tenths == 1184);
  CHECK(rep.rows[3].forward_tenths == 143);
  CHECK(rep.rows[4].forward_tenths == 1447);
  CHECK(rep.rows[5].forward_tenths == 175);
  CHECK(rep.rows[5].backward_tenths == 350);
  CHECK(rep.rows[5].train_tenths == 525);
  CHECK(rep.backbone_tenths == 234);
  CHECK(rep.compressor_tenths == 260);
  CHECK(rep.rows[1].encoding_tenths == 494);
  CHECK(rep.rows[1].grand_total_tenths == 785);
  CHECK(rep.rows[3].grand_total_tenths == 923);
  CHECK(rep.rows[5].grand_total_tenths == 1019);
  CHECK(std::abs(rep.training_reduction[0] - 3.4) < 0.05);
  CHECK(std::abs(rep.training_reduction[1] - 4.1) < 0.05);
  CHECK(std::abs(rep.training_reduction[2] - 4.5) < 0.05);
  for (double r : rep.forward_reduction) CHECK(std::abs(r - 8.3) < 0.05);
}

TEST_CASE("zero-duration benchmark request is rejected") {
  CHECK_THROWS_AS(throughput_bench({8}, {1}, 0.0), ContractError);
}
