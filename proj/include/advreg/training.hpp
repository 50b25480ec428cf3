#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advreg/attacks.hpp"
#include "advreg/data.hpp"
#include "advreg/model.hpp"
#include "advreg/objectives.hpp"

namespace advreg {

// Defaults are the compressed desk schedule; full_schedule() gives the long one.
struct TrainingConfig {
  std::size_t epochs = 30;
  std::size_t warmup_epochs = 5;
  double peak_lr = 0.1;
  std::vector<std::size_t> decay_epochs{15, 23};
  double decay_factor = 10.0;
  double momentum = 0.9;
  double weight_decay = 2e-4;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  bool decay_biases = false;  // weight decay on *.bias tensors too
  std::size_t augment_pad = 0;  // random-crop padding for image data, 0 = off
  bool augment_flip = false;
  bool shuffle = true;

  static TrainingConfig full_schedule();
  void validate() const;
};

// Linear warmup from peak/10 to peak over warmup_epochs, then division by
// decay_factor at each decay epoch.
double lr_at_epoch(const TrainingConfig& config, std::size_t epoch);

struct OptimizerState {
  std::vector<Tensor> velocity;  // one per parameter tensor, same shapes
  std::size_t step = 0;

  static OptimizerState zeros_for(const ModelParams& params);
};

// g = grad + wd * theta; v = momentum * v + g; theta -= lr * v.
// Tensors named *.bias skip weight decay unless config.decay_biases.
void momentum_update(ModelParams& params, std::span<const Tensor> grads, OptimizerState& state, double lr,
                     const TrainingConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;                         // example-weighted mean of batch totals
  std::map<std::string, double> components;  // same averaging, unweighted terms
  double clean_accuracy = 0.0;               // on the (augmented, unmixed) training batches
  std::size_t forward_passes = 0;
  std::size_t backward_passes = 0;
  std::size_t ratio_clamped_steps = 0;
  std::size_t steps = 0;
};

std::string to_json_line(const EpochRecord& record);

struct Snapshot {
  std::size_t epoch = 0;  // params as of the end of this epoch
  ModelParams params;
};

struct TrainingResult {
  Model model;
  std::vector<EpochRecord> log;
  // Taken at the end of the first epoch run at each decayed learning rate.
  std::vector<Snapshot> snapshots;
  std::size_t steps = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Deterministic per (configs, dataset, training.seed). Throws ConfigError when
// the objective needs a threat model and none is given, NumericError (with the
// epoch and step) when the loss diverges.
TrainingResult train(const ModelConfig& model_config, const Dataset& data, const TrainingConfig& training,
                     const ObjectiveConfig& objective, const std::optional<ThreatModel>& threat,
                     const EpochCallback& on_epoch = {});

}  // namespace advreg
