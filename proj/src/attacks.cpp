#include "advreg/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "advreg/errors.hpp"
#include "advreg/graph.hpp"
#include "advreg/ops.hpp"

namespace advreg {

void ThreatModel::validate(bool iterative) const {
  if (allow_zero_budget ? !(epsilon >= 0.0) : !(epsilon > 0.0)) throw ConfigError("threat epsilon must be positive");
  if (!(low < high)) throw ConfigError("threat data range needs low < high");
  if (iterative) {
    if (!(step_size > 0.0)) throw ConfigError("threat step size must be positive");
    if (steps < 1) throw ConfigError("threat step count must be at least 1");
  }
}

void SpsaOptions::validate() const {
  if (samples_per_step < 1) throw ConfigError("SPSA needs at least one sample per step");
  if (!(perturbation > 0.0)) throw ConfigError("SPSA perturbation must be positive");
}

ModelTarget::ModelTarget(const Model& model, std::span<const int> labels)
    : ModelTarget(model, labels, one_hot(labels, model.config.num_classes)) {}

ModelTarget::ModelTarget(const Model& model, std::span<const int> labels, LabelDistribution targets)
    : model_(model), labels_(labels.begin(), labels.end()), targets_(std::move(targets)) {
  check_fingerprint(model_.config, model_.params);
  if (targets_.rows() != labels_.size() || targets_.classes() != model_.config.num_classes) {
    throw ShapeError("attack targets " + shape_to_string(targets_.probs.shape()) + " do not match " +
                     std::to_string(labels_.size()) + " labels");
  }
}

namespace {

struct CrossEntropyRows {
  Var total;
  Var logits;
  std::vector<double> per_example;
};

CrossEntropyRows per_example_ce(Graph& graph, const Model& model, const Var& input, const LabelDistribution& targets) {
  std::vector<Var> params;
  params.reserve(model.params.tensors.size());
  for (const auto& t : model.params.tensors) params.push_back(graph.constant(t.value));
  Var logits = forward_logits(model.config, params, input);
  if (logits.shape() != targets.probs.shape()) {
    throw ShapeError("logits " + shape_to_string(logits.shape()) + " vs targets " +
                     shape_to_string(targets.probs.shape()));
  }
  Var weighted = ops::mul(graph.constant(targets.probs), ops::log_softmax(logits));
  const std::size_t rows = targets.rows(), cols = targets.classes();
  std::vector<double> per(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) per[r] -= weighted.value()[r * cols + c];
  }
  return {ops::scale(ops::sum(weighted), -1.0), logits, std::move(per)};
}

}  // namespace

LossAndGrad ModelTarget::loss_and_grad(const Tensor& x) const {
  Graph graph(true);
  Var input = graph.input(x, true);
  auto ce = per_example_ce(graph, model_, input, targets_);
  Gradients grads = graph.backward(ce.total);
  return {std::move(ce.per_example), grads.of(input)};
}

Score ModelTarget::score(const Tensor& x) const {
  Graph graph(false);
  auto ce = per_example_ce(graph, model_, graph.constant(x), targets_);
  const auto predicted = argmax_rows(ce.logits.value());
  Score out{std::move(ce.per_example), std::vector<bool>(labels_.size())};
  for (std::size_t i = 0; i < labels_.size(); ++i) out.misclassified[i] = predicted[i] != labels_[i];
  return out;
}

Tensor sign(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data()) v = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
  return out;
}

Tensor project_linf_ball(const Tensor& candidate, const Tensor& origin, const ThreatModel& threat) {
  if (candidate.shape() != origin.shape()) {
    throw ShapeError("projection of " + shape_to_string(candidate.shape()) + " onto ball around " +
                     shape_to_string(origin.shape()));
  }
  Tensor out = candidate;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = std::clamp(out[i], origin[i] - threat.epsilon, origin[i] + threat.epsilon);
    out[i] = std::clamp(v, threat.low, threat.high);
  }
  return out;
}

namespace {

void require_finite(const Tensor& grad, const char* attack) {
  if (!grad.all_finite()) throw NumericError(std::string(attack) + ": non-finite gradient");
}

void require_finite(const std::vector<double>& loss, const char* attack) {
  for (double v : loss) {
    if (!std::isfinite(v)) throw NumericError(std::string(attack) + ": non-finite loss");
  }
}

void finish(const AttackTarget& target, AttackOutcome& out) {
  Score s = target.score(out.adversarial);
  ++out.forward_passes;
  out.final_loss = std::move(s.loss);
  out.success = std::move(s.misclassified);
}

std::size_t batch_rows(const Tensor& x) {
  if (x.rank() == 0) throw ShapeError("attack input needs a batch axis");
  return x.shape()[0];
}

// Copies rows of `from` into `into` where `take[row]` holds.
void copy_rows(const Tensor& from, Tensor& into, const std::vector<bool>& take) {
  const std::size_t per = from.size() / take.size();
  for (std::size_t r = 0; r < take.size(); ++r) {
    if (!take[r]) continue;
    std::copy_n(from.data().begin() + static_cast<std::ptrdiff_t>(r * per), per,
                into.data().begin() + static_cast<std::ptrdiff_t>(r * per));
  }
}

}  // namespace

AttackOutcome fgsm_attack(const AttackTarget& target, const Tensor& x, const ThreatModel& threat) {
  threat.validate(false);
  AttackOutcome out;
  LossAndGrad lg = target.loss_and_grad(x);
  ++out.forward_passes;
  ++out.backward_passes;
  require_finite(lg.input_grad, "fgsm");
  const Tensor direction = sign(lg.input_grad);
  out.adversarial = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.adversarial[i] = std::clamp(x[i] + threat.epsilon * direction[i], threat.low, threat.high);
  }
  finish(target, out);
  return out;
}

namespace {

AttackOutcome pgd_single(const AttackTarget& target, const Tensor& x, const ThreatModel& threat, Rng& rng,
                         const PgdOptions& options) {
  AttackOutcome out;
  Tensor adv = x;
  if (options.random_init) {
    std::uniform_real_distribution<double> noise(-threat.epsilon, threat.epsilon);
    for (std::size_t i = 0; i < adv.size(); ++i) adv[i] = std::clamp(x[i] + noise(rng), threat.low, threat.high);
  }
  const std::size_t rows = batch_rows(x);
  Tensor best = adv;
  std::vector<double> best_loss(rows, -INFINITY);
  for (std::size_t step = 0; step < threat.steps; ++step) {
    LossAndGrad lg = target.loss_and_grad(adv);
    ++out.forward_passes;
    ++out.backward_passes;
    require_finite(lg.input_grad, "pgd");
    require_finite(lg.loss, "pgd");
    if (options.best_iterate) {
      std::vector<bool> better(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        better[r] = lg.loss[r] > best_loss[r];
        if (better[r]) best_loss[r] = lg.loss[r];
      }
      copy_rows(adv, best, better);
    }
    const Tensor direction = sign(lg.input_grad);
    Tensor stepped = adv;
    for (std::size_t i = 0; i < adv.size(); ++i) stepped[i] += threat.step_size * direction[i];
    adv = project_linf_ball(stepped, x, threat);
  }
  out.adversarial = std::move(adv);
  finish(target, out);
  if (options.best_iterate) {
    std::vector<bool> better(rows);
    for (std::size_t r = 0; r < rows; ++r) better[r] = best_loss[r] > out.final_loss[r];
    if (std::find(better.begin(), better.end(), true) != better.end()) {
      copy_rows(best, out.adversarial, better);
      finish(target, out);
    }
  }
  return out;
}

}  // namespace

AttackOutcome pgd_attack(const AttackTarget& target, const Tensor& x, const ThreatModel& threat, std::uint64_t seed,
                         const PgdOptions& options) {
  threat.validate(true);
  if (options.restarts < 1) throw ConfigError("PGD needs at least one restart");
  const std::size_t rows = batch_rows(x);
  AttackOutcome best;
  for (std::size_t restart = 0; restart < options.restarts; ++restart) {
    Rng rng = make_rng(seed, "pgd/restart" + std::to_string(restart));
    AttackOutcome run = pgd_single(target, x, threat, rng, options);
    if (restart == 0) {
      best = std::move(run);
      continue;
    }
    best.forward_passes += run.forward_passes;
    best.backward_passes += run.backward_passes;
    std::vector<bool> take(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      take[r] = (run.success[r] && !best.success[r]) ||
                (run.success[r] == best.success[r] && run.final_loss[r] > best.final_loss[r]);
      if (take[r]) {
        best.success[r] = run.success[r];
        best.final_loss[r] = run.final_loss[r];
      }
    }
    copy_rows(run.adversarial, best.adversarial, take);
  }
  return best;
}

Tensor spsa_gradient_estimate(const BatchLossFn& loss, const Tensor& x, double delta, std::size_t samples, Rng& rng) {
  if (!(delta > 0.0) || samples < 1) throw ConfigError("SPSA needs delta > 0 and at least one sample");
  const std::size_t rows = batch_rows(x);
  const std::size_t per = x.size() / rows;
  std::bernoulli_distribution coin(0.5);
  Tensor estimate = Tensor::zeros_like(x);
  Tensor v = Tensor::zeros_like(x);
  Tensor plus = x, minus = x;
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      v[i] = coin(rng) ? 1.0 : -1.0;
      plus[i] = x[i] + delta * v[i];
      minus[i] = x[i] - delta * v[i];
    }
    const auto up = loss(plus);
    const auto down = loss(minus);
    if (up.size() != rows || down.size() != rows) throw ShapeError("SPSA loss must return one value per example");
    for (std::size_t r = 0; r < rows; ++r) {
      if (!std::isfinite(up[r]) || !std::isfinite(down[r])) throw NumericError("spsa: non-finite loss");
      const double slope = (up[r] - down[r]) / (2.0 * delta);
      for (std::size_t i = r * per; i < (r + 1) * per; ++i) estimate[i] += slope * v[i];
    }
  }
  for (double& g : estimate.data()) g /= static_cast<double>(samples);
  return estimate;
}

AttackOutcome spsa_attack(const AttackTarget& target, const Tensor& x, const ThreatModel& threat,
                          const SpsaOptions& options, std::uint64_t seed) {
  threat.validate(true);
  options.validate();
  AttackOutcome out;
  Rng rng = make_rng(seed, "spsa");
  std::size_t forwards = 0;
  const BatchLossFn loss = [&](const Tensor& probe) {
    ++forwards;
    return target.score(probe).loss;
  };
  Tensor adv = x;
  for (std::size_t step = 0; step < threat.steps; ++step) {
    const Tensor direction = sign(spsa_gradient_estimate(loss, adv, options.perturbation, options.samples_per_step, rng));
    Tensor stepped = adv;
    for (std::size_t i = 0; i < adv.size(); ++i) stepped[i] += threat.step_size * direction[i];
    adv = project_linf_ball(stepped, x, threat);
  }
  out.adversarial = std::move(adv);
  out.forward_passes = forwards;
  finish(target, out);
  return out;
}

AttackOutcome fgsm_attack(const Model& model, const Tensor& x, std::span<const int> labels, const ThreatModel& threat) {
  return fgsm_attack(ModelTarget(model, labels), x, threat);
}

AttackOutcome pgd_attack(const Model& model, const Tensor& x, std::span<const int> labels, const ThreatModel& threat,
                         std::uint64_t seed, const PgdOptions& options) {
  return pgd_attack(ModelTarget(model, labels), x, threat, seed, options);
}

AttackOutcome spsa_attack(const Model& model, const Tensor& x, std::span<const int> labels, const ThreatModel& threat,
                          const SpsaOptions& options, std::uint64_t seed) {
  return spsa_attack(ModelTarget(model, labels), x, threat, options, seed);
}

}  // namespace advreg
