#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "advreg/data.hpp"
#include "advreg/model.hpp"
#include "advreg/seed.hpp"
#include "advreg/tensor.hpp"

namespace advreg {

// L-infinity threat model shared by every attack.
struct ThreatModel {
  double epsilon = 0.03;
  double step_size = 0.0078;
  std::size_t steps = 10;
  double low = 0.0;
  double high = 1.0;
  // Lets epsilon be 0 so an attack can be checked to be the identity.
  bool allow_zero_budget = false;

  void validate(bool iterative) const;
};

struct AttackOutcome {
  Tensor adversarial;
  std::vector<bool> success;      // prediction != label on the final iterate
  std::vector<double> final_loss;  // per-example loss on the final iterate
  std::size_t forward_passes = 0;
  std::size_t backward_passes = 0;
};

struct LossAndGrad {
  std::vector<double> loss;  // per example
  Tensor input_grad;          // gradient of sum(loss) w.r.t. the input batch
};

struct Score {
  std::vector<double> loss;
  std::vector<bool> misclassified;
};

// What an attack maximizes. Implementations must treat examples
// independently: loss i depends only on row i of the input.
class AttackTarget {
 public:
  virtual ~AttackTarget() = default;

  virtual LossAndGrad loss_and_grad(const Tensor& x) const = 0;
  // Forward only.
  virtual Score score(const Tensor& x) const = 0;
};

// Untargeted cross-entropy of `targets` (one-hot of the true labels unless
// given) for a model. Only the input receives gradients.
class ModelTarget final : public AttackTarget {
 public:
  ModelTarget(const Model& model, std::span<const int> labels);
  ModelTarget(const Model& model, std::span<const int> labels, LabelDistribution targets);

  LossAndGrad loss_and_grad(const Tensor& x) const override;
  Score score(const Tensor& x) const override;

 private:
  const Model& model_;
  std::vector<int> labels_;
  LabelDistribution targets_;
};

// Elementwise sign with sign(0) = 0.
Tensor sign(const Tensor& x);

// Clamp into [origin - eps, origin + eps], then into [low, high].
Tensor project_linf_ball(const Tensor& candidate, const Tensor& origin, const ThreatModel& threat);

// x + eps * sign(grad), clamped to the data range. One forward+backward pass
// (plus one forward to score the result).
AttackOutcome fgsm_attack(const AttackTarget& target, const Tensor& x, const ThreatModel& threat);

struct PgdOptions {
  std::size_t restarts = 1;
  bool random_init = true;     // uniform(-eps, eps) start; zero start when false
  bool best_iterate = false;   // keep the highest-loss iterate per example
};

// `threat.steps` iterations of x <- project(x + step * sign(grad)).
// With several restarts each example keeps its strongest run (a successful
// run beats an unsuccessful one, then higher loss wins).
AttackOutcome pgd_attack(const AttackTarget& target, const Tensor& x, const ThreatModel& threat, std::uint64_t seed,
                         const PgdOptions& options = {});

struct SpsaOptions {
  std::size_t samples_per_step = 128;  // paired +/- evaluations per step
  double perturbation = 0.01;          // delta

  void validate() const;
};

using BatchLossFn = std::function<std::vector<double>(const Tensor&)>;

// Per-example estimate mean_s [(L(x + d v_s) - L(x - d v_s)) / 2d] * v_s with
// Rademacher v_s, drawn independently for each example.
Tensor spsa_gradient_estimate(const BatchLossFn& loss, const Tensor& x, double delta, std::size_t samples, Rng& rng);

// Gradient-free: starts at x and takes `threat.steps` signed steps along the
// SPSA estimate, projecting after each.
AttackOutcome spsa_attack(const AttackTarget& target, const Tensor& x, const ThreatModel& threat,
                          const SpsaOptions& options, std::uint64_t seed);

// Model conveniences (untargeted cross-entropy on the true labels).
AttackOutcome fgsm_attack(const Model& model, const Tensor& x, std::span<const int> labels, const ThreatModel& threat);
AttackOutcome pgd_attack(const Model& model, const Tensor& x, std::span<const int> labels, const ThreatModel& threat,
                         std::uint64_t seed, const PgdOptions& options = {});
AttackOutcome spsa_attack(const Model& model, const Tensor& x, std::span<const int> labels, const ThreatModel& threat,
                          const SpsaOptions& options, std::uint64_t seed);

}  // namespace advreg
