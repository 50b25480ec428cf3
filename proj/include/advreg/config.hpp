#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "advreg/attacks.hpp"
#include "advreg/data.hpp"
#include "advreg/evaluation.hpp"
#include "advreg/model.hpp"
#include "advreg/objectives.hpp"
#include "advreg/training.hpp"

namespace advreg {

enum class DataSource { synthetic, idx };

struct DataSpec {
  DataSource source = DataSource::synthetic;
  SyntheticKind kind = SyntheticKind::blobs;
  std::size_t size = 1000;  // synthetic: total examples before the split
  std::size_t test_size = 200;
  std::size_t classes = 2;
  SyntheticOptions synthetic;
  std::filesystem::path train_images, train_labels, test_images, test_labels;  // idx
};

struct EvaluationSpec {
  std::vector<AttackSpec> attacks{AttackSpec::natural(), AttackSpec::fgsm(), AttackSpec::pgd(10)};
  EvalOptions options;
  std::size_t logit_bins = 20;
  std::vector<std::size_t> probe_depths{10, 100};
  std::size_t probe_subsample = 0;
  std::vector<double> probe_gammas{-1.0, 0.5, 1.0, 2.0};
};

struct TransferSpec {
  std::vector<std::pair<std::string, std::filesystem::path>> sources;  // id, checkpoint
  std::vector<std::pair<std::string, std::filesystem::path>> targets;  // empty = same as sources
  AttackSpec attack = AttackSpec::pgd(10);
};

// Every field has a default; a config file only overrides what it names.
// Sections: [experiment] [data] [model] [training] [objective] [threat]
// [evaluation] [transfer]. The threat model exists only when [threat] does;
// without it the default attack list is just natural accuracy.
struct ExperimentConfig {
  std::string name;  // report row label; empty means the defense name
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "out";
  DataSpec data;
  ModelConfig model;  // input shape and class count come from the data
  TrainingConfig training;
  ObjectiveConfig objective;
  std::optional<ThreatModel> threat;
  EvaluationSpec evaluation;
  TransferSpec transfer;
};

// Throws ConfigError carrying the offending line for unknown sections or
// keys, malformed values, and inconsistent combinations. Relative paths are
// resolved against `base_dir`.
ExperimentConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir = ".");
ExperimentConfig parse_config(const std::filesystem::path& path);

// The shipped threat-model defaults: eps 0.03, step 0.0078, 10 steps.
ThreatModel default_threat();

}  // namespace advreg
