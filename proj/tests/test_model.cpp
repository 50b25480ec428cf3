#include <gtest/gtest.h>

#include <random>

#include "advreg/errors.hpp"
#include "advreg/model.hpp"
#include "advreg/ops.hpp"
#include "helpers.hpp"

using namespace advreg;
using advreg::testing::random_tensor;

namespace {

ModelConfig mnist_mlp() {
  ModelConfig c;
  c.input_shape = {784};
  c.hidden = {128};
  c.num_classes = 10;
  return c;
}

ModelConfig tiny_conv() {
  ModelConfig c;
  c.arch = Architecture::small_conv;
  c.input_shape = {1, 6, 6};
  c.channels = 3;
  c.residual_blocks = 1;
  c.num_classes = 4;
  return c;
}

}  // namespace

TEST(Model, MlpParameterCount) {
  EXPECT_EQ(init_model(mnist_mlp(), 1).parameter_count(), 784u * 128 + 128 + 128 * 10 + 10);
  EXPECT_EQ(init_model(mnist_mlp(), 1).parameter_count(), 101770u);
}

TEST(Model, InitIsDeterministicPerSeed) {
  for (const ModelConfig& c : {mnist_mlp(), tiny_conv()}) {
    EXPECT_EQ(init_model(c, 9), init_model(c, 9));
    EXPECT_NE(init_model(c, 9).tensors, init_model(c, 10).tensors);
  }
}

TEST(Model, OutputShapeAndZeroParameters) {
  std::mt19937_64 rng(1);
  Model m = make_model(mnist_mlp(), 3);
  const Tensor batch = random_tensor({4, 784}, rng, 0, 1);
  EXPECT_EQ(forward_logits(m, batch).shape(), (Shape{4, 10}));
  for (auto& t : m.params.tensors) t.value = Tensor::zeros_like(t.value);
  const Tensor zero_logits = forward_logits(m, batch);
  for (double v : zero_logits.data()) EXPECT_EQ(v, 0.0);

  Model conv = make_model(tiny_conv(), 3);
  EXPECT_EQ(forward_logits(conv, random_tensor({5, 1, 6, 6}, rng, 0, 1)).shape(), (Shape{5, 4}));
  EXPECT_THROW(forward_logits(conv, random_tensor({5, 1, 5, 6}, rng)), ShapeError);
}

TEST(Model, RowsAreIndependent) {
  std::mt19937_64 rng(2);
  const Model m = make_model(tiny_conv(), 4);
  Tensor batch = random_tensor({3, 1, 6, 6}, rng, 0, 1);
  const Tensor logits = forward_logits(m, batch);
  // row 2 := row 0, and a reversed batch
  const std::size_t row = 36;
  Tensor dup = batch;
  std::copy_n(batch.data().begin(), row, dup.data().begin() + 2 * row);
  const Tensor dup_logits = forward_logits(m, dup);
  EXPECT_EQ(dup_logits.slice_rows(2, 3).values(), logits.slice_rows(0, 1).values());
  Tensor rev(batch.shape());
  for (std::size_t i = 0; i < 3; ++i) {
    std::copy_n(batch.data().begin() + static_cast<std::ptrdiff_t>(i * row), row,
                rev.data().begin() + static_cast<std::ptrdiff_t>((2 - i) * row));
  }
  const Tensor rev_logits = forward_logits(m, rev);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(rev_logits.slice_rows(2 - i, 3 - i).values(), logits.slice_rows(i, i + 1).values());
  }
}

TEST(Model, GradientFlowsAtInit) {
  std::mt19937_64 rng(3);
  for (const ModelConfig& c : {mnist_mlp(), tiny_conv()}) {
    const Model m = make_model(c, 5);
    Shape shape{8};
    shape.insert(shape.end(), c.input_shape.begin(), c.input_shape.end());
    Graph g;
    std::vector<Var> vars;
    for (const auto& t : m.params.tensors) vars.push_back(g.input(t.value, true));
    Var logits = forward_logits(c, vars, g.constant(random_tensor(shape, rng, 0, 1)));
    Tensor target(Shape{8, c.num_classes});
    for (std::size_t i = 0; i < 8; ++i) target[i * c.num_classes + i % c.num_classes] = 1.0;
    Var loss = ops::scale(ops::sum(ops::mul(g.constant(target), ops::log_softmax(logits))), -1.0 / 8);
    const Gradients grads = g.backward(loss);
    for (std::size_t i = 0; i < vars.size(); ++i) {
      double norm = 0.0;
      for (double v : grads.of(vars[i]).data()) norm += v * v;
      EXPECT_GT(norm, 0.0) << m.params.tensors[i].name;
    }
  }
}

TEST(Model, FingerprintGuardsParams) {
  const ModelParams p = init_model(mnist_mlp(), 1);
  EXPECT_NO_THROW(check_fingerprint(mnist_mlp(), p));
  ModelConfig other = mnist_mlp();
  other.hidden = {64};
  EXPECT_NE(fingerprint(other), fingerprint(mnist_mlp()));
  EXPECT_THROW(check_fingerprint(other, p), Error);
}

TEST(Model, ConfigValidation) {
  ModelConfig c = mnist_mlp();
  c.num_classes = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = mnist_mlp();
  c.hidden = {0};
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(parse_architecture("resnet"), ConfigError);
  EXPECT_EQ(argmax_rows(Tensor({2, 3}, {1, 3, 3, 2, 0, 2})), (std::vector<int>{1, 0}));
}
