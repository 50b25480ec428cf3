#include "advreg/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "advreg/errors.hpp"
#include "advreg/seed.hpp"

namespace advreg {

TrainingConfig TrainingConfig::full_schedule() {
  TrainingConfig c;
  c.epochs = 200;
  c.decay_epochs = {100, 150};
  return c;
}

void TrainingConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (!(peak_lr > 0.0)) throw ConfigError("peak learning rate must be positive");
  if (!(decay_factor > 0.0)) throw ConfigError("decay factor must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0,1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  if (!std::is_sorted(decay_epochs.begin(), decay_epochs.end()) ||
      std::adjacent_find(decay_epochs.begin(), decay_epochs.end()) != decay_epochs.end()) {
    throw ConfigError("decay epochs must be strictly ascending");
  }
}

double lr_at_epoch(const TrainingConfig& config, std::size_t epoch) {
  if (epoch >= config.epochs) {
    throw Error("epoch " + std::to_string(epoch) + " outside schedule of " + std::to_string(config.epochs));
  }
  const double start = config.peak_lr / 10.0;
  if (epoch < config.warmup_epochs) {
    return start + (config.peak_lr - start) * static_cast<double>(epoch) / static_cast<double>(config.warmup_epochs);
  }
  double lr = config.peak_lr;
  for (std::size_t d : config.decay_epochs) {
    if (epoch >= d) lr /= config.decay_factor;
  }
  return lr;
}

OptimizerState OptimizerState::zeros_for(const ModelParams& params) {
  OptimizerState state;
  for (const auto& t : params.tensors) state.velocity.push_back(Tensor::zeros_like(t.value));
  return state;
}

namespace {

bool is_bias(const std::string& name) { return name.ends_with(".bias"); }

}  // namespace

void momentum_update(ModelParams& params, std::span<const Tensor> grads, OptimizerState& state, double lr,
                     const TrainingConfig& config) {
  if (state.velocity.empty()) state = OptimizerState::zeros_for(params);
  if (grads.size() != params.tensors.size() || state.velocity.size() != params.tensors.size()) {
    throw ShapeError("momentum_update: " + std::to_string(params.tensors.size()) + " params, " +
                     std::to_string(grads.size()) + " grads, " + std::to_string(state.velocity.size()) +
                     " velocities");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto& p = params.tensors[i];
    if (grads[i].shape() != p.value.shape() || state.velocity[i].shape() != p.value.shape()) {
      throw ShapeError("momentum_update: shape mismatch for " + p.name);
    }
    if (!grads[i].all_finite()) throw NumericError("non-finite gradient for " + p.name);
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto& p = params.tensors[i];
    const double wd = (config.decay_biases || !is_bias(p.name)) ? config.weight_decay : 0.0;
    auto theta = p.value.data();
    auto v = state.velocity[i].data();
    const auto g = grads[i].data();
    for (std::size_t k = 0; k < theta.size(); ++k) {
      v[k] = config.momentum * v[k] + (g[k] + wd * theta[k]);
      theta[k] -= lr * v[k];
    }
  }
  ++state.step;
}

std::string to_json_line(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["lr"] = r.lr;
  j["loss"] = r.loss;
  j["components"] = r.components;
  j["clean_accuracy"] = r.clean_accuracy;
  j["forward_passes"] = r.forward_passes;
  j["backward_passes"] = r.backward_passes;
  j["ratio_clamped_steps"] = r.ratio_clamped_steps;
  j["steps"] = r.steps;
  return j.dump();
}

namespace {

struct StepOutput {
  LossBreakdown breakdown;
  std::size_t correct = 0;
  std::size_t forward_passes = 0;
  std::size_t backward_passes = 0;
  bool ratio_clamped = false;
};

StepOutput train_step(Model& model, OptimizerState& state, Tensor examples, const std::vector<int>& labels,
                      const TrainingConfig& training, const ObjectiveConfig& objective,
                      const std::optional<ThreatModel>& threat, double lr, const std::string& tag) {
  const std::size_t classes = model.config.num_classes;
  const std::uint64_t seed = training.seed;
  if (training.augment_pad > 0 || training.augment_flip) {
    examples = standard_augment(examples, training.augment_pad, training.augment_flip,
                                derive_seed(seed, "augment/" + tag));
  }
  const Tensor clean_examples = examples;

  LabelDistribution hard = one_hot(labels, classes);
  LabelDistribution smoothed = smooth_labels(labels, classes, objective.smoothing);
  if (objective.mix.mode != MixMode::off) {
    std::vector<std::size_t> perm(labels.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng = make_rng(seed, "mix-pair/" + tag);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor partner(examples.shape());
    const std::size_t row = examples.size() / labels.size();
    auto pick = [&](const LabelDistribution& d) {
      LabelDistribution out{Tensor(d.probs.shape())};
      for (std::size_t i = 0; i < perm.size(); ++i) {
        for (std::size_t c = 0; c < classes; ++c) out.probs[i * classes + c] = d.probs[perm[i] * classes + c];
      }
      return out;
    };
    for (std::size_t i = 0; i < perm.size(); ++i) {
      std::copy_n(examples.data().begin() + static_cast<std::ptrdiff_t>(perm[i] * row), row,
                  partner.data().begin() + static_cast<std::ptrdiff_t>(i * row));
    }
    // Same seed for both calls, so lambdas and split fractions agree.
    const std::uint64_t mix_seed = derive_seed(seed, "mix/" + tag);
    MixedBatch mixed_hard = mix_examples(examples, hard, partner, pick(hard), objective.mix, mix_seed);
    MixedBatch mixed_smooth = mix_examples(examples, smoothed, partner, pick(smoothed), objective.mix, mix_seed);
    examples = std::move(mixed_hard.examples);
    hard = std::move(mixed_hard.targets);
    smoothed = std::move(mixed_smooth.targets);
  }

  const LabelDistribution& adv_targets = objective.smooth_adversarial ? smoothed : hard;
  const ObjectiveInputs inputs{examples, labels, hard, smoothed, adv_targets};

  Graph graph(true);
  std::vector<Var> vars;
  vars.reserve(model.params.tensors.size());
  for (const auto& t : model.params.tensors) vars.push_back(graph.input(t.value, true));
  ObjectiveResult result =
      build_objective(graph, model, vars, inputs, objective, threat, derive_seed(seed, "attack/" + tag));
  // Clean accuracy on the unmixed batch, with the pre-update parameters.
  const bool reuse = result.clean_logits.rank() == 2 && objective.mix.mode == MixMode::off;
  const std::vector<int> predicted = argmax_rows(reuse ? result.clean_logits : forward_logits(model, clean_examples));
  Gradients grads = graph.backward(result.total);
  std::vector<Tensor> grad_values;
  grad_values.reserve(vars.size());
  for (const Var& v : vars) grad_values.push_back(grads.of(v));
  momentum_update(model.params, grad_values, state, lr, training);

  StepOutput out;
  out.breakdown = std::move(result.breakdown);
  out.forward_passes = result.attack_forward_passes + 1;
  out.backward_passes = result.attack_backward_passes + 1;
  out.ratio_clamped = result.ratio_clamped;
  for (std::size_t i = 0; i < labels.size(); ++i) out.correct += predicted[i] == labels[i] ? 1 : 0;
  return out;
}

}  // namespace

TrainingResult train(const ModelConfig& model_config, const Dataset& data, const TrainingConfig& training,
                     const ObjectiveConfig& objective, const std::optional<ThreatModel>& threat,
                     const EpochCallback& on_epoch) {
  model_config.validate();
  training.validate();
  objective.validate();
  data.validate();
  if (objective.uses_adversarial() && !threat) {
    throw ConfigError(to_string(objective.defense) + " training needs a threat model");
  }
  if (data.num_classes != model_config.num_classes) {
    throw ConfigError("dataset has " + std::to_string(data.num_classes) + " classes, model expects " +
                      std::to_string(model_config.num_classes));
  }
  if (data.example_shape() != model_config.input_shape) {
    throw ConfigError("dataset examples are " + shape_to_string(data.example_shape()) + ", model expects " +
                      shape_to_string(model_config.input_shape));
  }

  TrainingResult result;
  result.model = make_model(model_config, derive_seed(training.seed, "init"));
  OptimizerState state = OptimizerState::zeros_for(result.model.params);

  for (std::size_t epoch = 0; epoch < training.epochs; ++epoch) {
    EpochRecord record;
    record.epoch = epoch;
    record.lr = lr_at_epoch(training, epoch);
    const auto batches = epoch_batches(data.size(), training.batch_size, training.shuffle, training.seed, epoch);
    std::size_t seen = 0, correct = 0;
    for (std::size_t s = 0; s < batches.size(); ++s) {
      const auto& idx = batches[s];
      const std::string tag = "epoch" + std::to_string(epoch) + "/step" + std::to_string(s);
      Tensor x = gather_examples(data, idx);
      const std::vector<int> y = gather_labels(data, idx);
      StepOutput step;
      try {
        step = train_step(result.model, state, std::move(x), y, training, objective, threat, record.lr, tag);
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + " step " + std::to_string(s) +
                           ": " + e.what());
      }
      const double w = static_cast<double>(idx.size());
      record.loss += w * step.breakdown.total;
      for (const auto& [name, value] : step.breakdown.components) record.components[name] += w * value;
      record.forward_passes += step.forward_passes;
      record.backward_passes += step.backward_passes;
      record.ratio_clamped_steps += step.ratio_clamped ? 1 : 0;
      correct += step.correct;
      seen += idx.size();
      ++record.steps;
    }
    record.loss /= static_cast<double>(seen);
    for (auto& [name, value] : record.components) value /= static_cast<double>(seen);
    record.clean_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    result.steps += record.steps;
    result.log.push_back(record);
    if (on_epoch) on_epoch(record);
    if (std::find(training.decay_epochs.begin(), training.decay_epochs.end(), epoch) != training.decay_epochs.end()) {
      result.snapshots.push_back({epoch, result.model.params});
    }
  }
  return result;
}

}  // namespace advreg
