#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "dear/errors.hpp"
#include "dear/experiment.hpp"
#include "dear/ops.hpp"
#include "dear/training.hpp"
#include "test_support.hpp"

namespace dear::training {
namespace {

using dear::testing::micro_gen;
using dear::testing::micro_model;

NamedTensor param(std::vector<double> v) {
  const std::size_t n = v.size();
  return {"p", Tensor({n}, std::move(v), true)};
}

void set_grad(Tensor& t, std::vector<double> g) {
  backward(sum(mul(t, Tensor(t.shape(), std::move(g)))));
}

TEST(OneHot, RowsAreOneHot) {
  const Tensor y = one_hot({2, 0}, 3);
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()),
            (std::vector<double>{0, 0, 1, 1, 0, 0}));
  EXPECT_THROW(one_hot({3}, 3), ContractError);
}

TEST(TrainConfig, ValidateNamesField) {
  TrainConfig c;
  c.beta2 = 1.0;
  try {
    c.validate();
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("beta2"), std::string::npos);
  }
  c = TrainConfig{};
  c.lr = 0.0;
  EXPECT_THROW(c.validate(), ContractError);
}

TEST(AdamW, ZeroGradientNoDecayIsFixedPoint) {
  ParamList ps{param({1.5, -2.0})};
  AdamState st = AdamState::zeros_like(ps);
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  adamw_step(ps, st, cfg, 0.1);
  EXPECT_EQ(ps[0].tensor.at(0), 1.5);
  EXPECT_EQ(ps[0].tensor.at(1), -2.0);
  EXPECT_EQ(st.step, 1u);
}

TEST(AdamW, ZeroGradientDecaysExactly) {
  ParamList ps{param({1.5, -2.0})};
  AdamState st = AdamState::zeros_like(ps);
  TrainConfig cfg;
  cfg.weight_decay = 0.05;
  const double lr = 0.01;
  adamw_step(ps, st, cfg, lr);
  EXPECT_EQ(ps[0].tensor.at(0), 1.5 * (1 - lr * 0.05));
  EXPECT_EQ(ps[0].tensor.at(1), -2.0 * (1 - lr * 0.05));
}

TEST(AdamW, FirstStepMovesByLr) {
  ParamList ps{param({0.7})};
  AdamState st = AdamState::zeros_like(ps);
  set_grad(ps[0].tensor, {1.0});
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  cfg.eps = 0.0;
  adamw_step(ps, st, cfg, 1e-3);
  EXPECT_NEAR(ps[0].tensor.at(0), 0.7 - 1e-3, 1e-15);
}

TEST(AdamW, NanGradientAbortsWithoutChanges) {
  ParamList ps{param({1.0}), param({2.0})};
  AdamState st = AdamState::zeros_like(ps);
  set_grad(ps[0].tensor, {0.5});
  set_grad(ps[1].tensor, {NAN});
  TrainConfig cfg;
  EXPECT_THROW(adamw_step(ps, st, cfg, 0.1), NumericError);
  EXPECT_EQ(ps[0].tensor.at(0), 1.0);
  EXPECT_EQ(st.step, 0u);
  EXPECT_EQ(st.m[0][0], 0.0);
}

TEST(AdamW, RejectsFrozenTensor) {
  ParamList ps{{"frozen", Tensor({1}, {1.0}, false)}};
  AdamState st = AdamState::zeros_like(ps);
  EXPECT_THROW(adamw_step(ps, st, TrainConfig{}, 0.1), ContractError);
}

TEST(SampleLoss, AuxWeightAddsStreamLosses) {
  const model::DearModel m(micro_model());
  const auto f = m.encode_frozen(synthvid::make_training_clip(0, 1, micro_gen()));
  const model::ModelOutput out = m.forward(f);
  TrainConfig cfg;
  const double base = sample_loss(out, 0, 2, cfg).item();
  EXPECT_NEAR(base, -std::log(out.probs.at(0)), 1e-12);
  cfg.aux_loss_weight = 0.5;
  const double with_aux = sample_loss(out, 0, 2, cfg).item();
  const double la = -std::log(softmax(out.logits_a).at(0));
  const double lb = -std::log(softmax(out.logits_b).at(0));
  EXPECT_NEAR(with_aux, base + 0.5 * (la + lb), 1e-12);
}

TEST(Score, OracleAndConstantPredictors) {
  std::vector<Prediction> oracle, constant;
  for (std::uint32_t i = 0; i < 60; ++i) {
    oracle.push_back({i % 6, i % 6});
    constant.push_back({i % 6, 2});
  }
  const MetricsRecord a = score(oracle, 6);
  EXPECT_EQ(a.val_top1, 1.0);
  for (double v : a.per_class) EXPECT_EQ(v, 1.0);
  const MetricsRecord b = score(constant, 6);
  EXPECT_NEAR(b.val_top1, 1.0 / 6, 1e-15);
  EXPECT_EQ(b.per_class[2], 1.0);
  EXPECT_EQ(b.per_class[0], 0.0);
}

TEST(Score, EmptyClassReportsZero) {
  const MetricsRecord r = score({{0, 0}, {0, 0}}, 3);
  EXPECT_EQ(r.per_class, (std::vector<double>{1.0, 0.0, 0.0}));
}

TEST(Score, RandomPredictionsNearChance) {
  Rng rng(4);
  std::vector<Prediction> ps;
  for (std::uint32_t i = 0; i < 600; ++i) ps.push_back({i % 6, static_cast<std::uint32_t>(rng.below(6))});
  EXPECT_NEAR(score(ps, 6).val_top1, 1.0 / 6, 0.05);
}

TEST(PerClassDelta, SortedAndChecked) {
  MetricsRecord fused, base;
  fused.per_class = {0.9, 0.5, 0.8};
  base.per_class = {0.5, 0.5, 0.2};
  const auto d = per_class_delta(fused, base);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d[0].class_id, 2u);
  EXPECT_NEAR(d[0].delta, 0.6, 1e-15);
  EXPECT_EQ(d[1].class_id, 0u);
  EXPECT_EQ(d[2].delta, 0.0);
  for (const auto& x : per_class_delta(base, base)) EXPECT_EQ(x.delta, 0.0);
  MetricsRecord other;
  other.per_class = {0.1};
  EXPECT_THROW(per_class_delta(fused, other), ContractError);
}

TEST(PerClassDelta, WorkedExample) {
  MetricsRecord fused, base;
  fused.per_class = {0.729};
  base.per_class = {0.617};
  EXPECT_NEAR(per_class_delta(fused, base)[0].delta, 0.112, 1e-12);
}

class MicroTraining : public ::testing::Test {
 protected:
  void SetUp() override {
    cfg = dear::testing::micro_experiment();
    cfg.resolve();
    const auto split = experiment::dataset_split(cfg);
    const model::DearModel encoder(cfg.model);
    train = experiment::encode_records(encoder, split.train, cfg.gen);
    val = experiment::encode_records(encoder, split.val, cfg.gen);
  }
  experiment::ExperimentConfig cfg;
  Dataset train, val;
};

TEST_F(MicroTraining, EmptyDatasetRejected) {
  model::DearModel m(cfg.model);
  EXPECT_THROW(training::train(m, {}, val, cfg.train), ContractError);
}

TEST_F(MicroTraining, SeededRunsAreBitIdentical) {
  model::DearModel a(cfg.model), b(cfg.model);
  const auto ra = training::train(a, train, val, cfg.train);
  const auto rb = training::train(b, train, val, cfg.train);
  ASSERT_EQ(ra.metrics.size(), rb.metrics.size());
  for (std::size_t i = 0; i < ra.metrics.size(); ++i) {
    EXPECT_EQ(ra.metrics[i].train_loss, rb.metrics[i].train_loss);
    EXPECT_EQ(ra.metrics[i].val_top1, rb.metrics[i].val_top1);
  }
  const auto pa = a.trainable(), pb = b.trainable();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(content_hash(pa[i].tensor), content_hash(pb[i].tensor));
}

TEST_F(MicroTraining, BackboneUnchangedAndTrainablesMove) {
  model::DearModel m(cfg.model);
  Trainer t(m, cfg.train);
  const std::uint64_t frozen_before = t.frozen_hash();
  std::vector<std::uint64_t> before;
  for (const auto& p : m.trainable()) before.push_back(content_hash(p.tensor));
  t.fit(train, val);
  EXPECT_EQ(t.frozen_hash(), frozen_before);
  std::size_t moved = 0;
  const auto after = m.trainable();
  for (std::size_t i = 0; i < after.size(); ++i) moved += content_hash(after[i].tensor) != before[i];
  EXPECT_GT(moved, after.size() / 2);
  for (const auto& p : m.frozen()) EXPECT_FALSE(p.tensor.has_grad()) << p.name;
}

TEST_F(MicroTraining, MetricsShape) {
  model::DearModel m(cfg.model);
  const auto r = training::train(m, train, val, cfg.train);
  ASSERT_EQ(r.metrics.size(), cfg.train.epochs);
  for (std::size_t i = 0; i < r.metrics.size(); ++i) {
    EXPECT_EQ(r.metrics[i].epoch, i + 1);
    EXPECT_EQ(r.metrics[i].per_class.size(), 2u);
    EXPECT_GE(r.metrics[i].val_top1, 0.0);
    EXPECT_LE(r.metrics[i].val_top1, 1.0);
  }
  EXPECT_FALSE(r.checkpoint.empty());
}

TEST_F(MicroTraining, EvaluateIgnoresOrder) {
  model::DearModel m(cfg.model);
  training::train(m, train, val, cfg.train);
  Dataset reversed(train.rbegin(), train.rend());
  const MetricsRecord a = evaluate(m, train, cfg.train);
  const MetricsRecord b = evaluate(m, reversed, cfg.train);
  EXPECT_EQ(a.val_top1, b.val_top1);
  EXPECT_EQ(a.per_class, b.per_class);
}

TEST_F(MicroTraining, CosineScheduleDiffersFromConstant) {
  TrainConfig cosine = cfg.train;
  cosine.schedule = LrSchedule::kCosine;
  model::DearModel a(cfg.model), b(cfg.model);
  const auto ra = training::train(a, train, val, cfg.train);
  const auto rb = training::train(b, train, val, cosine);
  EXPECT_EQ(ra.metrics[0].train_loss, rb.metrics[0].train_loss);  // first step uses full lr
  EXPECT_NE(ra.metrics[1].train_loss, rb.metrics[1].train_loss);
}

}  // namespace
}  // namespace dear::training
