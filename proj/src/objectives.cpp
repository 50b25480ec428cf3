#include "advreg/objectives.hpp"

#include <cmath>
#include <vector>

#include "advreg/errors.hpp"
#include "advreg/ops.hpp"

namespace advreg {

std::string to_string(Defense defense) {
  switch (defense) {
    case Defense::plain: return "plain";
    case Defense::adv_train: return "adv-train";
    case Defense::alp: return "alp";
    case Defense::logit_squeeze: return "logit-squeeze";
    case Defense::decoupled: return "decoupled";
  }
  return "?";
}

Defense parse_defense(const std::string& text) {
  for (Defense d : {Defense::plain, Defense::adv_train, Defense::alp, Defense::logit_squeeze, Defense::decoupled}) {
    if (to_string(d) == text) return d;
  }
  throw ConfigError("unknown defense '" + text + "' (expected plain, adv-train, alp, logit-squeeze or decoupled)");
}

std::string to_string(PairingWeight weight) { return weight == PairingWeight::fixed ? "fixed" : "ratio"; }

PairingWeight parse_pairing_weight(const std::string& text) {
  if (text == "fixed") return PairingWeight::fixed;
  if (text == "ratio") return PairingWeight::ratio;
  throw ConfigError("unknown pairing weight '" + text + "' (expected fixed or ratio)");
}

void ObjectiveConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must be in [0,1]");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (!(beta >= 0.0)) throw ConfigError("beta must be non-negative");
  if (!(ratio_constant > 0.0)) throw ConfigError("ratio constant must be positive");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw ConfigError("smoothing must be in [0,1)");
  mix.validate();
}

bool ObjectiveConfig::uses_adversarial() const {
  switch (defense) {
    case Defense::plain: return false;
    case Defense::logit_squeeze: return alpha < 1.0;
    default: return true;
  }
}

double LossBreakdown::reconstituted_total() const {
  double total = 0.0;
  for (const auto& [name, value] : components) total += weights.at(name) * value;
  return total;
}

namespace {

void require_pair(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape() || a.value().rank() != 2) {
    throw ShapeError(std::string(op) + ": logits " + shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()) + " must be equal (B,C) shapes");
  }
}

double rows_of(const Var& logits) { return static_cast<double>(logits.shape()[0]); }

// mean over rows of sum over classes of logits^2
Var mean_squared_norm(const Var& logits) {
  return ops::scale(ops::sum(ops::square(logits)), 1.0 / rows_of(logits));
}

template <typename Fn>
double evaluate(Fn&& fn) {
  Graph graph(false);
  return fn(graph).value().item();
}

}  // namespace

Var cross_entropy(const Var& logits, const LabelDistribution& targets) {
  if (logits.shape() != targets.probs.shape() || logits.value().rank() != 2) {
    throw ShapeError("cross_entropy: logits " + shape_to_string(logits.shape()) + " vs targets " +
                     shape_to_string(targets.probs.shape()));
  }
  Graph& g = logits.graph();
  Var weighted = ops::mul(g.constant(targets.probs), ops::log_softmax(logits));
  return ops::scale(ops::sum(weighted), -1.0 / rows_of(logits));
}

double cross_entropy(const Tensor& logits, const LabelDistribution& targets) {
  return evaluate([&](Graph& g) { return cross_entropy(g.constant(logits), targets); });
}

Var alp_pairing_term(const Var& clean_logits, const Var& adv_logits) {
  require_pair(clean_logits, adv_logits, "alp_pairing_term");
  Var diff = ops::sub(clean_logits, adv_logits);
  return ops::scale(ops::sum(ops::square(diff)), 0.5 / rows_of(clean_logits));
}

double alp_pairing_term(const Tensor& clean_logits, const Tensor& adv_logits) {
  return evaluate([&](Graph& g) { return alp_pairing_term(g.constant(clean_logits), g.constant(adv_logits)); });
}

Var logit_squeeze(const Var& logits, double weight) {
  if (!(weight >= 0.0)) throw ConfigError("logit squeeze weight must be non-negative");
  if (logits.value().rank() != 2) throw ShapeError("logit_squeeze needs (B,C) logits");
  return ops::scale(mean_squared_norm(logits), weight);
}

double logit_squeeze(const Tensor& logits, double weight) {
  return evaluate([&](Graph& g) { return logit_squeeze(g.constant(logits), weight); });
}

Var decoupled_similarity(const Var& clean_logits, const Var& adv_logits) {
  require_pair(clean_logits, adv_logits, "decoupled_similarity");
  Var weighted = ops::mul(ops::softmax(clean_logits), ops::log_softmax(adv_logits));
  return ops::scale(ops::sum(weighted), -1.0 / rows_of(clean_logits));
}

Var decoupled_pairing_objective(const Var& clean_logits, const Var& adv_logits, double beta) {
  if (!(beta >= 0.0)) throw ConfigError("beta must be non-negative");
  Var h = decoupled_similarity(clean_logits, adv_logits);
  Var norms = ops::add(mean_squared_norm(clean_logits), mean_squared_norm(adv_logits));
  return ops::add(h, ops::scale(norms, beta));
}

double decoupled_pairing_objective(const Tensor& clean_logits, const Tensor& adv_logits, double beta) {
  return evaluate(
      [&](Graph& g) { return decoupled_pairing_objective(g.constant(clean_logits), g.constant(adv_logits), beta); });
}

RatioCoefficient ratio_coefficient(double adv_loss, double pairing_loss, double ratio_constant) {
  if (!(ratio_constant > 0.0)) throw ConfigError("ratio constant must be positive");
  if (!std::isfinite(adv_loss) || !std::isfinite(pairing_loss)) throw NumericError("ratio of non-finite losses");
  const bool clamped = pairing_loss < kPairingFloor;
  const double denom = clamped ? kPairingFloor : pairing_loss;
  return {ratio_constant * adv_loss / denom, clamped};
}

std::pair<double, double> pairing_expansion_check(const Tensor& clean_logits, const Tensor& adv_logits) {
  if (clean_logits.shape() != adv_logits.shape()) {
    throw ShapeError("pairing_expansion_check: shapes " + shape_to_string(clean_logits.shape()) + " and " +
                     shape_to_string(adv_logits.shape()));
  }
  double lhs = 0.0, clean_sq = 0.0, cross = 0.0, adv_sq = 0.0;
  for (std::size_t i = 0; i < clean_logits.size(); ++i) {
    const double a = clean_logits[i], b = adv_logits[i];
    lhs += (a - b) * (a - b);
    clean_sq += a * a;
    cross += a * b;
    adv_sq += b * b;
  }
  return {lhs, clean_sq - 2.0 * cross + adv_sq};
}

ObjectiveResult build_objective(Graph& graph, const Model& model, std::span<const Var> params,
                                const ObjectiveInputs& inputs, const ObjectiveConfig& config,
                                const std::optional<ThreatModel>& threat, std::uint64_t seed) {
  config.validate();
  const bool need_adv = config.uses_adversarial();
  const bool pairing = config.defense == Defense::alp || config.defense == Defense::decoupled;
  const bool need_clean = !need_adv || config.alpha > 0.0 || pairing || config.defense == Defense::logit_squeeze;
  if (need_adv && !threat) throw ConfigError(to_string(config.defense) + " objective needs a threat model");

  ObjectiveResult result;
  Tensor adversarial;
  if (need_adv) {
    ModelTarget target(model, inputs.labels, inputs.attack_targets);
    const std::uint64_t attack_seed = derive_seed(seed, "train-attack");
    AttackOutcome outcome = config.train_attack == TrainAttack::pgd
                                ? pgd_attack(target, inputs.examples, *threat, attack_seed)
                                : fgsm_attack(target, inputs.examples, *threat);
    result.attack_forward_passes = outcome.forward_passes;
    result.attack_backward_passes = outcome.backward_passes;
    adversarial = std::move(outcome.adversarial);
  }

  std::optional<Var> clean, adv;
  const std::size_t rows = inputs.examples.shape()[0];
  if (need_clean && need_adv) {
    Var both = forward_logits(model.config, params, graph.constant(concat_rows(inputs.examples, adversarial)));
    clean = ops::slice_rows(both, 0, rows);
    adv = ops::slice_rows(both, rows, 2 * rows);
  } else if (need_adv) {
    adv = forward_logits(model.config, params, graph.constant(adversarial));
  } else {
    clean = forward_logits(model.config, params, graph.constant(inputs.examples));
  }
  if (clean) result.clean_logits = clean->value();

  std::vector<std::pair<std::string, Var>> terms;
  LossBreakdown& bd = result.breakdown;
  auto add_term = [&](const std::string& name, const Var& value, double weight) {
    bd.components[name] = value.value().item();
    bd.weights[name] = weight;
    terms.emplace_back(name, value);
  };

  if (!need_adv) {
    add_term("clean_ce", cross_entropy(*clean, inputs.clean_targets), 1.0);
  } else {
    if (clean) add_term("clean_ce", cross_entropy(*clean, inputs.clean_targets), config.alpha);
    add_term("adv_ce", cross_entropy(*adv, inputs.adv_targets), 1.0 - config.alpha);
  }

  if (pairing) {
    Var pair = config.defense == Defense::alp ? alp_pairing_term(*clean, *adv) : decoupled_similarity(*clean, *adv);
    double weight = config.lambda;
    if (config.pairing_weight == PairingWeight::ratio) {
      const double adv_loss = config.alpha * bd.components["clean_ce"] + (1.0 - config.alpha) * bd.components["adv_ce"];
      const RatioCoefficient coef = ratio_coefficient(adv_loss, pair.value().item(), config.ratio_constant);
      weight = coef.value;
      result.ratio_clamped = coef.clamped;
    }
    add_term("pairing", pair, weight);
  }

  if (config.defense == Defense::logit_squeeze || config.defense == Defense::decoupled) {
    Var reg = clean ? mean_squared_norm(*clean) : mean_squared_norm(*adv);
    if (clean && adv) reg = ops::add(reg, mean_squared_norm(*adv));
    add_term("regularization", reg, config.beta);
  }

  Var total = ops::scale(terms.front().second, bd.weights[terms.front().first]);
  for (std::size_t i = 1; i < terms.size(); ++i) {
    total = ops::add(total, ops::scale(terms[i].second, bd.weights[terms[i].first]));
  }
  result.total = total;
  bd.total = total.value().item();
  return result;
}

LossBreakdown adv_training_objective(const Model& model, const Tensor& examples, std::span<const int> labels,
                                     const ThreatModel& threat, const ObjectiveConfig& config, std::uint64_t seed) {
  if (config.defense != Defense::adv_train) throw ConfigError("adv_training_objective needs defense adv-train");
  Graph graph(false);
  std::vector<Var> params;
  for (const auto& t : model.params.tensors) params.push_back(graph.constant(t.value));
  const LabelDistribution hard = one_hot(labels, model.config.num_classes);
  const LabelDistribution smoothed = smooth_labels(labels, model.config.num_classes, config.smoothing);
  const ObjectiveInputs inputs{examples, labels, hard, smoothed, config.smooth_adversarial ? smoothed : hard};
  return build_objective(graph, model, params, inputs, config, threat, seed).breakdown;
}

}  // namespace advreg
