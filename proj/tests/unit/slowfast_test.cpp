#include <gtest/gtest.h>

#include "sftmn/errors.hpp"
#include "sftmn/objective.hpp"
#include "sftmn/slowfast.hpp"
#include "test_support.hpp"

namespace sftmn {
namespace {

using testing::random_tensor;

const PoolingMode kMax{PoolKind::Max};
const PoolingMode kAvg{PoolKind::Average};

SfTmnConfig tiny(BackboneKind backbone, Design design, int L) {
  SfTmnConfig c;
  c.backbone = backbone;
  c.design = design;
  c.segment_length = L;
  c.input_dim = 5;
  c.num_classes = 3;
  c.layers = 2;
  c.feature_maps = 4;
  c.refinement_stages = 2;
  c.seed = 9;
  return c;
}

TEST(SegmentPool, HandExamples) {
  EXPECT_EQ(segment_pool(Tensor::from_rows({{1, 3, 2, 5}}), 2, kMax), Tensor::from_rows({{3, 5}}));
  EXPECT_EQ(segment_pool(Tensor::from_rows({{1, 3, 2}}), 2, kMax), Tensor::from_rows({{3, 2}}));
  EXPECT_EQ(segment_pool(Tensor::from_rows({{2, 4}, {6, 0}}), 2, kAvg), Tensor::from_rows({{3}, {3}}));
  const Tensor p = segment_pool(Tensor::from_rows({{3, 4, 1}}), 2, PoolingMode{PoolKind::PowerAverage, 2});
  EXPECT_NEAR(p(0, 0), std::sqrt(12.5), 1e-12);
  EXPECT_NEAR(p(0, 1), 1.0, 1e-12);
}

TEST(SegmentPool, WidthIsCeilTOverL) {
  for (std::size_t T : {1u, 2u, 7u, 31u, 32u, 33u, 100u})
    for (int L : {1, 2, 3, 32, 64})
      EXPECT_EQ(segment_pool(Tensor(2, T, 1.0), L, kMax).cols(), (T + L - 1) / L);
  EXPECT_THROW(segment_pool(Tensor(1, 4), 0, kMax), ShapeError);
}

TEST(Upsample, RepeatsAndTruncates) {
  EXPECT_EQ(upsample_repeat(Tensor::from_rows({{3, 5}}), 2, 4), Tensor::from_rows({{3, 3, 5, 5}}));
  EXPECT_EQ(upsample_repeat(Tensor::from_rows({{3, 5}}), 2, 3), Tensor::from_rows({{3, 3, 5}}));
  EXPECT_THROW(upsample_repeat(Tensor::from_rows({{3, 5}}), 2, 5), ShapeError);
}

TEST(PoolingGradients, MatchFiniteDifferences) {
  Rng rng(1);
  Var x = parameter(random_tensor(rng, 2, 7));
  for (PoolingMode mode : {kMax, kAvg, PoolingMode{PoolKind::PowerAverage, 3.0}}) {
    if (mode.kind == PoolKind::PowerAverage)
      for (double& v : x.mutable_value().values()) v = std::abs(v) + 0.1;
    const Tensor w = random_tensor(rng, 2, 3);
    x.zero_grad();
    backward(testing::project(segment_pool(x, 3, mode), w));
    const auto r = testing::check_gradient(x, x.grad(), [&] {
      return testing::project(constant(segment_pool(x.value(), 3, mode)), w).value()(0, 0);
    });
    EXPECT_LT(r.max_rel_error, 1e-6) << to_string(mode.kind) << " " << r.worst;
  }
}

TEST(Fuse, ArithmeticAndIdentity) {
  EXPECT_EQ(fuse(Tensor::from_rows({{2}}), Tensor::from_rows({{4}}), 0.5, 0.5), Tensor::from_rows({{3}}));
  Rng rng(2);
  const Tensor s = random_tensor(rng, 3, 4), f = random_tensor(rng, 3, 4);
  EXPECT_EQ(fuse(s, f, 1.0, 0.0), s);
  Tensor scaled_s = s, scaled_f = f;
  for (double& v : scaled_s.values()) v *= 2.5;
  for (double& v : scaled_f.values()) v *= 2.5;
  const Tensor lhs = fuse(scaled_s, scaled_f, 0.3, 0.9), rhs = fuse(s, f, 0.3, 0.9);
  for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_NEAR(lhs.values()[i], 2.5 * rhs.values()[i], 1e-12);
}

TEST(Fuse, WeightGradientsAreTheOperands) {
  Rng rng(3);
  const Tensor s = random_tensor(rng, 2, 3), f = random_tensor(rng, 2, 3), probe = random_tensor(rng, 2, 3);
  FusionWeights w{parameter(Tensor(1, 1, 0.5)), parameter(Tensor(1, 1, 0.5))};
  backward(testing::project(fuse(constant(s), constant(f), w), probe));
  double ds = 0, df = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    ds += probe.values()[i] * s.values()[i];
    df += probe.values()[i] * f.values()[i];
  }
  EXPECT_NEAR(w.w1.grad()(0, 0), ds, 1e-12);
  EXPECT_NEAR(w.w2.grad()(0, 0), df, 1e-12);
  auto loss = [&] { return testing::project(constant(fuse(s, f, w.w1.value()(0, 0), w.w2.value()(0, 0))), probe).value()(0, 0); };
  EXPECT_LT(testing::check_gradient(w.w1, w.w1.grad(), loss).max_rel_error, 1e-6);
  EXPECT_LT(testing::check_gradient(w.w2, w.w2.grad(), loss).max_rel_error, 1e-6);
}

TEST(SfTmnConfig, KeyValueRoundTrip) {
  SfTmnConfig c = tiny(BackboneKind::Asformer, Design::D, 7);
  c.pooling = PoolingMode{PoolKind::PowerAverage, 3.5};
  const SfTmnConfig back = SfTmnConfig::from_key_values(KeyValues::parse(c.to_key_values().to_text()));
  EXPECT_EQ(back.to_key_values().to_text(), c.to_key_values().to_text());
}

TEST(SfTmnConfig, RejectsInvalidValues) {
  SfTmnConfig c = tiny(BackboneKind::MsTcn, Design::A, 4);
  c.segment_length = 0;
  EXPECT_THROW(c.validate(), ConstructionError);
  EXPECT_THROW(design_from_string("e"), ParseError);
  EXPECT_THROW(pool_kind_from_string("median"), ParseError);
}

TEST(SfTmnNetwork, ReferenceShapes) {
  SfTmnConfig c;
  c.input_dim = 64;
  c.layers = 3;
  c.feature_maps = 8;
  const SfTmnNetwork net(c);
  Rng rng(4);
  const StageOutputs out = net.forward(random_tensor(rng, 64, 600));
  ASSERT_EQ(out.combined.size(), 4u);
  for (const Var& v : out.combined) {
    EXPECT_EQ(v.rows(), 7u);
    EXPECT_EQ(v.cols(), 600u);
  }
  EXPECT_EQ(out.fast.front().logits.cols(), 19u);
}

TEST(SfTmnNetwork, BoundarySweepShapes) {
  Rng rng(5);
  for (auto backbone : {BackboneKind::MsTcn, BackboneKind::Asformer})
    for (auto design : {Design::A, Design::B, Design::C, Design::D})
      for (int L : {1, 4}) {
        const SfTmnNetwork net(tiny(backbone, design, L));
        for (std::size_t T : {std::size_t{1}, std::size_t(L), std::size_t(L + 1), std::size_t(10 * L + 3)}) {
          const StageOutputs out = net.forward(random_tensor(rng, 5, T));
          ASSERT_EQ(out.combined.size(), 3u);
          for (const Var& v : out.combined) {
            EXPECT_EQ(v.rows(), 3u);
            EXPECT_EQ(v.cols(), T);
          }
        }
      }
}

TEST(SfTmnNetwork, FusionWeightsStartAtOneHalf) {
  const SfTmnNetwork net(tiny(BackboneKind::Asformer, Design::A, 3));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(net.logit_fusion(i).w1.value()(0, 0), 0.5);
    EXPECT_EQ(net.feature_fusion(i).w2.value()(0, 0), 0.5);
  }
}

TEST(SfTmnNetwork, DesignWiringOfRefinementInputs) {
  Rng rng(6);
  const Tensor x = random_tensor(rng, 5, 17);
  for (auto design : {Design::A, Design::B, Design::C, Design::D}) {
    const SfTmnNetwork net(tiny(BackboneKind::MsTcn, design, 4));
    const StageOutputs base = net.forward(x);
    ForwardOptions zero;
    zero.zero_fast_stage = 0;
    const StageOutputs z = net.forward(x, zero);
    const bool slow_same = base.slow_inputs[0].input.value() == z.slow_inputs[0].input.value();
    const bool slow_uses_combined = design == Design::A || design == Design::D;
    EXPECT_EQ(slow_same, !slow_uses_combined) << to_string(design);
    const Tensor expected_slow = softmax_channels(
        (slow_uses_combined ? base.combined[0] : base.slow[0].logits).value());
    EXPECT_EQ(base.slow_inputs[0].input.value(), expected_slow);
  }
}

TEST(SfTmnNetwork, SingleModelHasOnlySlowPath) {
  SfTmnConfig c = tiny(BackboneKind::MsTcn, Design::A, 4);
  c.model = ModelKind::Single;
  const SfTmnNetwork net(c);
  Rng rng(7);
  const StageOutputs out = net.forward(random_tensor(rng, 5, 9));
  EXPECT_EQ(out.combined.size(), 3u);
  EXPECT_TRUE(out.fast.empty());
  EXPECT_EQ(out.combined[1].value(), out.slow[1].logits.value());
  for (const auto& [name, var] : net.params().entries()) EXPECT_EQ(name.rfind("fast.", 0), std::string::npos);
}

TEST(SfTmnNetwork, EndToEndGradientCheck) {
  Rng rng(8);
  for (auto backbone : {BackboneKind::MsTcn, BackboneKind::Asformer}) {
    SfTmnConfig c = tiny(backbone, Design::A, 3);
    c.num_classes = 4;
    c.refinement_stages = 1;
    SfTmnNetwork net(c);
    const Tensor x = random_tensor(rng, 5, 12);
    const auto labels = testing::random_labels(rng, 12, 4);
    LossConfig cfg;
    cfg.stop_gradient_previous = false;
    auto loss = [&] {
      NoGradGuard g;
      std::vector<Tensor> outs;
      for (const Var& v : net.forward(x).combined) outs.push_back(v.value());
      return total_loss(outs, labels, cfg);
    };
    backward(total_loss(net.forward(x).combined, labels, cfg));
    for (const auto& [name, var] : net.params().entries()) {
      const bool selected = name.find("fusion") == 0 || name.find("stage0.input_proj.weight") != std::string::npos ||
                            name.find("stage0.layer0.dilated.weight") != std::string::npos ||
                            name.find("stage0.block0.feed_forward.weight") != std::string::npos;
      if (!selected) continue;
      const auto r = testing::check_gradient(var, var.grad(), loss, 1e-4, 12);
      EXPECT_LT(r.max_rel_error, 1e-4) << to_string(backbone) << " " << name << " " << r.worst;
    }
  }
}

}  // namespace
}  // namespace sftmn
