#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "advreg/attacks.hpp"
#include "advreg/errors.hpp"
#include "helpers.hpp"

using namespace advreg;
using advreg::testing::random_tensor;

namespace {

// loss_i = w . x_i, so the gradient is w for every row.
class LinearTarget final : public AttackTarget {
 public:
  explicit LinearTarget(std::vector<double> w) : w_(std::move(w)) {}
  LossAndGrad loss_and_grad(const Tensor& x) const override {
    LossAndGrad out{loss(x), Tensor(x.shape())};
    const std::size_t d = w_.size();
    for (std::size_t i = 0; i < x.size(); ++i) out.input_grad[i] = w_[i % d];
    return out;
  }
  Score score(const Tensor& x) const override {
    Score s{loss(x), std::vector<bool>(x.dim(0), false)};
    return s;
  }

 private:
  std::vector<double> loss(const Tensor& x) const {
    const std::size_t d = w_.size();
    std::vector<double> l(x.dim(0), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) l[i / d] += w_[i % d] * x[i];
    return l;
  }
  std::vector<double> w_;
};

ThreatModel threat(double eps, double step, std::size_t steps) {
  ThreatModel t;
  t.epsilon = eps;
  t.step_size = step;
  t.steps = steps;
  return t;
}

void expect_within_budget(const Tensor& adv, const Tensor& origin, const ThreatModel& t) {
  for (std::size_t i = 0; i < adv.size(); ++i) {
    EXPECT_LE(std::abs(adv[i] - origin[i]), t.epsilon + 1e-9);
    EXPECT_GE(adv[i], t.low);
    EXPECT_LE(adv[i], t.high);
  }
}

Model random_model(std::uint64_t seed) {
  ModelConfig c;
  c.input_shape = {6};
  c.hidden = {12};
  c.num_classes = 3;
  return make_model(c, seed);
}

}  // namespace

TEST(Projection, ClampCases) {
  const ThreatModel t = threat(0.1, 0.01, 1);
  EXPECT_NEAR(project_linf_ball(Tensor({1}, {0.9}), Tensor({1}, {0.5}), t)[0], 0.6, 1e-15);
  EXPECT_EQ(project_linf_ball(Tensor({1}, {0.55}), Tensor({1}, {0.5}), t)[0], 0.55);
  EXPECT_EQ(project_linf_ball(Tensor({1}, {-0.1}), Tensor({1}, {0.02}), threat(0.05, 0.01, 1))[0], 0.0);
  EXPECT_THROW(project_linf_ball(Tensor({2}), Tensor({1}), t), ShapeError);
}

TEST(Projection, SignTreatsZeroAsZero) {
  EXPECT_EQ(sign(Tensor({3}, {-2.0, 0.0, 1e-300})), Tensor({3}, {-1.0, 0.0, 1.0}));
}

TEST(Threat, Validation) {
  EXPECT_THROW(threat(0.0, 0.01, 1).validate(false), ConfigError);
  EXPECT_THROW(threat(0.1, 0.0, 1).validate(true), ConfigError);
  EXPECT_THROW(threat(0.1, 0.01, 0).validate(true), ConfigError);
  ThreatModel inverted = threat(0.1, 0.01, 1);
  inverted.low = 1.0;
  EXPECT_THROW(inverted.validate(false), ConfigError);
  ThreatModel zero = threat(0.0, 0.01, 1);
  zero.allow_zero_budget = true;
  EXPECT_NO_THROW(zero.validate(false));
}

TEST(Fgsm, LinearLossClosedForm) {
  const LinearTarget target({1.0, -2.0});
  const AttackOutcome out = fgsm_attack(target, Tensor({1, 2}, {0.5, 0.5}), threat(0.1, 0.1, 1));
  EXPECT_NEAR(out.adversarial[0], 0.6, 1e-15);
  EXPECT_NEAR(out.adversarial[1], 0.4, 1e-15);
  EXPECT_EQ(out.backward_passes, 1u);
}

TEST(Fgsm, ZeroBudgetAndZeroGradientLeaveInputAlone) {
  ThreatModel zero = threat(0.0, 0.1, 1);
  zero.allow_zero_budget = true;
  const Tensor x({1, 3}, {0.2, 0.5, 0.9});
  EXPECT_EQ(fgsm_attack(LinearTarget({1.0, -1.0, 3.0}), x, zero).adversarial, x);
  const AttackOutcome partial = fgsm_attack(LinearTarget({1.0, 0.0, -1.0}), x, threat(0.05, 0.05, 1));
  EXPECT_EQ(partial.adversarial[1], 0.5);
  EXPECT_NEAR(partial.adversarial[0], 0.25, 1e-15);
}

TEST(Pgd, DeterministicPerSeedAndWithinBudget) {
  std::mt19937_64 rng(1);
  const Model m = random_model(2);
  const Tensor x = random_tensor({16, 6}, rng, 0, 1);
  std::vector<int> y(16);
  for (std::size_t i = 0; i < 16; ++i) y[i] = static_cast<int>(i % 3);
  const ThreatModel t = threat(0.1, 0.025, 10);
  const AttackOutcome a = pgd_attack(m, x, y, t, 5);
  const AttackOutcome b = pgd_attack(m, x, y, t, 5);
  EXPECT_EQ(a.adversarial, b.adversarial);
  EXPECT_NE(a.adversarial, pgd_attack(m, x, y, t, 6).adversarial);
  expect_within_budget(a.adversarial, x, t);
  EXPECT_EQ(a.backward_passes, 10u);
}

TEST(Pgd, IncreasingLossEndsOnBoundary) {
  const LinearTarget target({1.0});
  const ThreatModel t = threat(0.1, 0.03, 20);
  const Tensor x({1, 1}, {0.5});
  const double adv = pgd_attack(target, x, t, 3).adversarial[0];
  // brute force over the feasible interval
  double best = 0.4, best_loss = -1e9;
  for (int k = 0; k <= 2000; ++k) {
    const double c = 0.4 + 0.2 * k / 2000.0;
    if (c > best_loss) best_loss = c, best = c;
  }
  EXPECT_NEAR(adv, best, 1e-12);
  EXPECT_NEAR(adv, 0.6, 1e-12);
}

TEST(Pgd, MoreStepsDoNotWeakenTheMedianLoss) {
  std::mt19937_64 rng(2);
  const Model m = random_model(3);
  const Tensor x = random_tensor({64, 6}, rng, 0, 1);
  std::vector<int> y(64);
  for (std::size_t i = 0; i < 64; ++i) y[i] = static_cast<int>(i % 3);
  auto median_loss = [&](std::size_t steps) {
    auto l = pgd_attack(m, x, y, threat(0.1, 0.01, steps), 9).final_loss;
    std::nth_element(l.begin(), l.begin() + 32, l.end());
    return l[32];
  };
  EXPECT_GE(median_loss(20), median_loss(5));
}

TEST(Pgd, OneZeroInitStepOfSizeEpsilonIsFgsm) {
  std::mt19937_64 rng(3);
  const Model m = random_model(4);
  const Tensor x = random_tensor({20, 6}, rng, 0, 1);
  std::vector<int> y(20, 1);
  PgdOptions zero_init;
  zero_init.random_init = false;
  const ThreatModel t = threat(0.07, 0.07, 1);
  EXPECT_EQ(pgd_attack(m, x, y, t, 1, zero_init).adversarial, fgsm_attack(m, x, y, t).adversarial);
}

TEST(Pgd, RestartsKeepTheStrongestRun) {
  std::mt19937_64 rng(4);
  const Model m = random_model(5);
  const Tensor x = random_tensor({32, 6}, rng, 0, 1);
  std::vector<int> y(32, 2);
  PgdOptions three;
  three.restarts = 3;
  const ThreatModel t = threat(0.1, 0.02, 5);
  const AttackOutcome single = pgd_attack(m, x, y, t, 7);
  const AttackOutcome multi = pgd_attack(m, x, y, t, 7, three);
  expect_within_budget(multi.adversarial, x, t);
  const auto fooled = [](const AttackOutcome& o) { return std::count(o.success.begin(), o.success.end(), true); };
  EXPECT_GE(fooled(multi), fooled(single));
}

TEST(Spsa, ConstantLossGivesZeroEstimate) {
  Rng rng(1);
  const Tensor est =
      spsa_gradient_estimate([](const Tensor& x) { return std::vector<double>(x.dim(0), 3.0); },
                             Tensor({2, 3}, 0.5), 0.01, 64, rng);
  for (double v : est.data()) EXPECT_EQ(v, 0.0);
}

TEST(Spsa, QuadraticEstimateNearTrueDerivative) {
  Rng rng(2);
  const Tensor est = spsa_gradient_estimate(
      [](const Tensor& x) {
        std::vector<double> l(x.dim(0));
        for (std::size_t i = 0; i < x.dim(0); ++i) l[i] = x[i] * x[i];
        return l;
      },
      Tensor({1, 1}, {1.0}), 1e-3, 10000, rng);
  EXPECT_NEAR(est[0], 2.0, 0.1);
}

TEST(Spsa, ProjectsAndNeverDifferentiates) {
  std::mt19937_64 rng(5);
  const Model m = random_model(6);
  const Tensor x = random_tensor({8, 6}, rng, 0, 1);
  std::vector<int> y(8, 0);
  SpsaOptions opts;
  opts.samples_per_step = 16;
  const ThreatModel t = threat(0.05, 0.02, 4);
  const AttackOutcome out = spsa_attack(m, x, y, t, opts, 3);
  expect_within_budget(out.adversarial, x, t);
  EXPECT_EQ(out.backward_passes, 0u);
  EXPECT_EQ(out.adversarial, spsa_attack(m, x, y, t, opts, 3).adversarial);

  // constant loss: the estimate is zero and the attack stays at x
  const class Flat final : public AttackTarget {
    LossAndGrad loss_and_grad(const Tensor& v) const override { return {std::vector<double>(v.dim(0)), Tensor(v.shape())}; }
    Score score(const Tensor& v) const override { return {std::vector<double>(v.dim(0)), std::vector<bool>(v.dim(0))}; }
  } flat;
  EXPECT_EQ(spsa_attack(flat, x, t, opts, 3).adversarial, x);
  SpsaOptions bad;
  bad.samples_per_step = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Attacks, FuzzedOutputsStayFeasible) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> eps(0.001, 0.3);
  const Model m = random_model(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = random_tensor({4, 6}, rng, 0, 1);
    std::vector<int> y{0, 1, 2, 0};
    const double e = eps(rng);
    const ThreatModel t = threat(e, e / 3, 3);
    expect_within_budget(fgsm_attack(m, x, y, t).adversarial, x, t);
    expect_within_budget(pgd_attack(m, x, y, t, static_cast<std::uint64_t>(trial)).adversarial, x, t);
  }
}
