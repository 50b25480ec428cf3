#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include "advreg/attacks.hpp"
#include "advreg/data.hpp"
#include "advreg/graph.hpp"
#include "advreg/model.hpp"

namespace advreg {

enum class Defense { plain, adv_train, alp, logit_squeeze, decoupled };

std::string to_string(Defense defense);
Defense parse_defense(const std::string& text);

// How the pairing term is weighted: a fixed lambda, or a coefficient that
// keeps the pairing term at `ratio_constant` times the adversarial loss.
enum class PairingWeight { fixed, ratio };

std::string to_string(PairingWeight weight);
PairingWeight parse_pairing_weight(const std::string& text);

enum class TrainAttack { pgd, fgsm };

struct ObjectiveConfig {
  Defense defense = Defense::plain;
  double alpha = 0.5;           // weight of clean cross-entropy
  double lambda = 0.5;          // fixed pairing coefficient
  double beta = 0.0;            // logit-norm regularization weight
  double ratio_constant = 0.125;
  PairingWeight pairing_weight = PairingWeight::fixed;
  double smoothing = 0.0;
  bool smooth_adversarial = true;  // smoothing also applies to the adversarial term
  MixConfig mix;
  TrainAttack train_attack = TrainAttack::pgd;

  void validate() const;
  // True when the objective needs adversarial examples (and a threat model).
  bool uses_adversarial() const;
};

struct LossBreakdown {
  double total = 0.0;
  std::map<std::string, double> components;  // unweighted values
  std::map<std::string, double> weights;     // total = sum(weights[k] * components[k])

  double reconstituted_total() const;
};

// mean over rows of -sum_c p_c log softmax(logits)_c
Var cross_entropy(const Var& logits, const LabelDistribution& targets);
double cross_entropy(const Tensor& logits, const LabelDistribution& targets);

// mean over rows of 1/2 sum_c (clean_c - adv_c)^2
Var alp_pairing_term(const Var& clean_logits, const Var& adv_logits);
double alp_pairing_term(const Tensor& clean_logits, const Tensor& adv_logits);

// weight * mean over rows of sum_c logit_c^2
Var logit_squeeze(const Var& logits, double weight);
double logit_squeeze(const Tensor& logits, double weight);

// mean over rows of cross-entropy with softmax(clean) as the target
// distribution and softmax(adv) as the prediction; gradients reach both sides.
Var decoupled_similarity(const Var& clean_logits, const Var& adv_logits);
// similarity + beta * (mean sum clean^2 + mean sum adv^2)
Var decoupled_pairing_objective(const Var& clean_logits, const Var& adv_logits, double beta);
double decoupled_pairing_objective(const Tensor& clean_logits, const Tensor& adv_logits, double beta);

inline constexpr double kPairingFloor = 1e-8;

struct RatioCoefficient {
  double value = 0.0;
  bool clamped = false;  // pairing loss was below kPairingFloor
};

// ratio_constant * adv_loss / max(pairing_loss, floor). A plain number: no
// gradient flows through it.
RatioCoefficient ratio_coefficient(double adv_loss, double pairing_loss, double ratio_constant);

// (|clean - adv|^2, |clean|^2 - 2 clean.adv + |adv|^2) over all elements.
std::pair<double, double> pairing_expansion_check(const Tensor& clean_logits, const Tensor& adv_logits);

struct ObjectiveResult {
  Var total;
  LossBreakdown breakdown;
  Tensor clean_logits;  // empty shape when clean examples were not forwarded
  std::size_t attack_forward_passes = 0;
  std::size_t attack_backward_passes = 0;
  bool ratio_clamped = false;
};

struct ObjectiveInputs {
  const Tensor& examples;
  std::span<const int> labels;               // hard labels for the attack's success flags
  const LabelDistribution& attack_targets;   // what the attack maximizes cross-entropy of
  const LabelDistribution& clean_targets;
  const LabelDistribution& adv_targets;
};

// Builds the configured training loss on `graph`. `params` are the graph Vars
// of model.params (in order); `model` supplies current values for attack
// generation, which is treated as data (no gradient through it).
ObjectiveResult build_objective(Graph& graph, const Model& model, std::span<const Var> params,
                                const ObjectiveInputs& inputs, const ObjectiveConfig& config,
                                const std::optional<ThreatModel>& threat, std::uint64_t seed);

// alpha * CE(clean) + (1 - alpha) * CE(adversarial), evaluated without
// recording parameter gradients.
LossBreakdown adv_training_objective(const Model& model, const Tensor& examples, std::span<const int> labels,
                                     const ThreatModel& threat, const ObjectiveConfig& config, std::uint64_t seed);

}  // namespace advreg
