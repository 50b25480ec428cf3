#include <gtest/gtest.h>

#include <cmath>

#include "advreg/errors.hpp"
#include "advreg/training.hpp"

using namespace advreg;

namespace {

ModelParams one_param(const std::string& name, double value) {
  ModelParams p;
  p.tensors.push_back({name, Tensor({1}, {value})});
  return p;
}

TrainingConfig flat(double lr, double momentum, double wd) {
  TrainingConfig c;
  c.peak_lr = lr;
  c.momentum = momentum;
  c.weight_decay = wd;
  return c;
}

Dataset blobs(std::size_t m) {
  SyntheticOptions o;
  o.blob_spread = 0.02;
  return make_synthetic_dataset(SyntheticKind::blobs, m, 2, 4, o);
}

ModelConfig blob_mlp() {
  ModelConfig c;
  c.input_shape = {2};
  c.hidden = {16};
  c.num_classes = 2;
  return c;
}

TrainingConfig short_run(std::size_t epochs) {
  TrainingConfig t;
  t.epochs = epochs;
  t.warmup_epochs = 2;
  t.decay_epochs = {epochs - 2};
  t.batch_size = 32;
  t.seed = 3;
  return t;
}

}  // namespace

TEST(Schedule, FullScheduleValues) {
  const TrainingConfig p = TrainingConfig::full_schedule();
  EXPECT_DOUBLE_EQ(lr_at_epoch(p, 0), 0.01);
  EXPECT_DOUBLE_EQ(lr_at_epoch(p, 5), 0.1);
  EXPECT_DOUBLE_EQ(lr_at_epoch(p, 99), 0.1);
  EXPECT_DOUBLE_EQ(lr_at_epoch(p, 100), 0.01);
  EXPECT_DOUBLE_EQ(lr_at_epoch(p, 150), 0.001);
  // linear warmup: 0.01 + 0.09 * 2/5
  EXPECT_DOUBLE_EQ(lr_at_epoch(p, 2), 0.01 + 0.09 * 0.4);
  EXPECT_THROW(lr_at_epoch(p, 200), Error);
}

TEST(Schedule, Validation) {
  TrainingConfig c;
  c.decay_epochs = {20, 10};
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Momentum, HandIteration) {
  ModelParams p = one_param("w", 1.0);
  OptimizerState s = OptimizerState::zeros_for(p);
  const std::vector<Tensor> g{Tensor({1}, {1.0})};
  const TrainingConfig c = flat(0.1, 0.9, 0.0);
  momentum_update(p, g, s, 0.1, c);
  EXPECT_DOUBLE_EQ(s.velocity[0][0], 1.0);
  EXPECT_DOUBLE_EQ(p.tensors[0].value[0], 0.9);
  momentum_update(p, g, s, 0.1, c);
  EXPECT_DOUBLE_EQ(s.velocity[0][0], 1.9);
  EXPECT_NEAR(p.tensors[0].value[0], 0.71, 1e-15);
  EXPECT_EQ(s.step, 2u);
}

TEST(Momentum, DegenerateCases) {
  ModelParams p = one_param("w", 2.0);
  OptimizerState s = OptimizerState::zeros_for(p);
  momentum_update(p, std::vector<Tensor>{Tensor({1}, {0.5})}, s, 0.1, flat(0.1, 0.0, 0.0));
  EXPECT_DOUBLE_EQ(p.tensors[0].value[0], 2.0 - 0.05);

  ModelParams still = one_param("w", 2.0);
  OptimizerState zero = OptimizerState::zeros_for(still);
  momentum_update(still, std::vector<Tensor>{Tensor({1}, {0.0})}, zero, 0.1, flat(0.1, 0.9, 0.0));
  EXPECT_EQ(still.tensors[0].value[0], 2.0);

  EXPECT_THROW(momentum_update(still, std::vector<Tensor>{Tensor({1}, {NAN})}, zero, 0.1, flat(0.1, 0.9, 0.0)),
               NumericError);
  EXPECT_THROW(momentum_update(still, std::vector<Tensor>{Tensor({2})}, zero, 0.1, flat(0.1, 0.9, 0.0)), ShapeError);
}

TEST(Momentum, WeightDecayShrinksGeometrically) {
  ModelParams p = one_param("w", 3.0);
  const TrainingConfig c = flat(0.1, 0.0, 0.01);
  OptimizerState s = OptimizerState::zeros_for(p);
  double expected = 3.0;
  for (int i = 0; i < 10; ++i) {
    const double before = p.tensors[0].value[0];
    momentum_update(p, std::vector<Tensor>{Tensor({1}, {0.0})}, s, 0.1, c);
    expected *= 1.0 - 0.1 * 0.01;
    EXPECT_LT(std::abs(p.tensors[0].value[0]), std::abs(before));
    EXPECT_NEAR(p.tensors[0].value[0], expected, 1e-14);
  }
}

TEST(Momentum, BiasesSkipDecayUnlessAsked) {
  TrainingConfig c = flat(0.1, 0.0, 0.5);
  ModelParams p = one_param("head.bias", 1.0);
  OptimizerState s = OptimizerState::zeros_for(p);
  momentum_update(p, std::vector<Tensor>{Tensor({1}, {0.0})}, s, 0.1, c);
  EXPECT_EQ(p.tensors[0].value[0], 1.0);
  c.decay_biases = true;
  momentum_update(p, std::vector<Tensor>{Tensor({1}, {0.0})}, s, 0.1, c);
  EXPECT_DOUBLE_EQ(p.tensors[0].value[0], 0.95);
}

TEST(Train, SeparableBlobsAreFit) {
  const Dataset d = blobs(200);
  TrainingConfig t = short_run(50);
  const TrainingResult r = train(blob_mlp(), d, t, ObjectiveConfig{}, std::nullopt);
  EXPECT_EQ(argmax_rows(forward_logits(r.model, d.examples)), d.labels);
  EXPECT_LT(r.log.back().loss, r.log.front().loss);
  EXPECT_EQ(r.log.size(), 50u);
  EXPECT_EQ(r.steps, 50u * 7);
  ASSERT_EQ(r.snapshots.size(), 1u);
  EXPECT_EQ(r.snapshots[0].epoch, 48u);
}

TEST(Train, DeterministicPerSeed) {
  const Dataset d = blobs(100);
  ObjectiveConfig o;
  o.defense = Defense::alp;
  ThreatModel th;
  th.epsilon = 0.05;
  th.step_size = 0.02;
  th.steps = 3;
  const TrainingConfig t = short_run(4);
  const TrainingResult a = train(blob_mlp(), d, t, o, th);
  const TrainingResult b = train(blob_mlp(), d, t, o, th);
  EXPECT_EQ(a.model.params, b.model.params);
  EXPECT_EQ(to_json_line(a.log.back()), to_json_line(b.log.back()));
  TrainingConfig other = t;
  other.seed = 4;
  EXPECT_NE(train(blob_mlp(), d, other, o, th).model.params, a.model.params);
}

TEST(Train, AdversarialEpochCostsStepsPlusOnePasses) {
  const Dataset d = blobs(96);
  TrainingConfig t = short_run(3);
  const TrainingResult plain = train(blob_mlp(), d, t, ObjectiveConfig{}, std::nullopt);
  ObjectiveConfig adv;
  adv.defense = Defense::adv_train;
  adv.alpha = 0.5;
  ThreatModel th;
  th.epsilon = 0.05;
  th.step_size = 0.02;
  th.steps = 7;
  const TrainingResult robust = train(blob_mlp(), d, t, adv, th);
  const EpochRecord& p = plain.log[0];
  const EpochRecord& r = robust.log[0];
  EXPECT_EQ(p.backward_passes, p.steps);
  EXPECT_EQ(r.backward_passes, (th.steps + 1) * p.backward_passes);
}

TEST(Train, PreconditionsAndDivergence) {
  const Dataset d = blobs(64);
  ObjectiveConfig adv;
  adv.defense = Defense::adv_train;
  EXPECT_THROW(train(blob_mlp(), d, short_run(3), adv, std::nullopt), ConfigError);
  ModelConfig wrong = blob_mlp();
  wrong.num_classes = 3;
  EXPECT_THROW(train(wrong, d, short_run(3), ObjectiveConfig{}, std::nullopt), ConfigError);

  TrainingConfig wild = short_run(20);
  wild.peak_lr = 1e150;
  wild.warmup_epochs = 0;
  EXPECT_THROW(train(blob_mlp(), d, wild, ObjectiveConfig{}, std::nullopt), NumericError);
}

TEST(Train, LogLineIsJson) {
  EpochRecord r;
  r.epoch = 2;
  r.lr = 0.1;
  r.components["adv_ce"] = 1.5;
  const std::string line = to_json_line(r);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  EXPECT_NE(line.find("\"epoch\":2"), std::string::npos);
  EXPECT_NE(line.find("\"adv_ce\":1.5"), std::string::npos);
}
