#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "advreg/config.hpp"
#include "advreg/errors.hpp"
#include "advreg/evaluation.hpp"

namespace advreg {

// A failure inside one pipeline stage ("data", "training", ...). Config
// errors keep their type and get the stage prefixed to the message.
class PipelineError : public Error {
 public:
  PipelineError(const std::string& stage, const std::string& what) : Error(stage + ": " + what), stage_(stage) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct ExperimentData {
  Dataset train;
  Dataset test;
};

ExperimentData load_experiment_data(const ExperimentConfig& config);
// config.model with the input shape and class count of the data filled in.
ModelConfig resolve_model_config(const ExperimentConfig& config, const Dataset& train);
// Row label for the experiment's reports: the name, or the defense when unnamed.
std::string experiment_label(const ExperimentConfig& config);

std::uint64_t training_seed(const ExperimentConfig& config);
std::uint64_t evaluation_seed(const ExperimentConfig& config);

struct RunOptions {
  bool evaluate_only = false;
  std::optional<std::filesystem::path> checkpoint;  // default: <out>/checkpoint.bin
  std::function<void(const std::string&)> progress;
};

struct ArtifactPaths {
  std::filesystem::path checkpoint, training_log, report, tables;
};

ArtifactPaths artifact_paths(const std::filesystem::path& out_dir);

// Trains (unless evaluate_only), evaluates and writes the checkpoint,
// training log, report.json and tables.md into config.out_dir.
RobustnessReport run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

// Black-box matrix over the [transfer] checkpoints on the test split; writes
// transfer.json and transfer.md.
TransferMatrix run_transfer(const ExperimentConfig& config, const RunOptions& options = {});

struct ProbeResult {
  MaskingReport masking;
  PairingProbeReport pairing;
};

// Masking probe and pairing-gradient probe on the trained checkpoint; writes
// probe.json.
ProbeResult run_probe(const ExperimentConfig& config, const RunOptions& options = {});

}  // namespace advreg
