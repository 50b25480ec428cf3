#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advreg/attacks.hpp"
#include "advreg/data.hpp"
#include "advreg/model.hpp"

namespace advreg {

struct AttackSpec {
  enum class Kind { natural, fgsm, pgd, spsa };
  Kind kind = Kind::natural;
  std::size_t steps = 0;  // pgd only

  static AttackSpec natural() { return {Kind::natural, 0}; }
  static AttackSpec fgsm() { return {Kind::fgsm, 0}; }
  static AttackSpec pgd(std::size_t steps) { return {Kind::pgd, steps}; }
  static AttackSpec spsa() { return {Kind::spsa, 0}; }

  // "natural", "fgsm", "pgd-10", "spsa"
  std::string label() const;
  // Column heading: "Natural", "FGSM", "PGD-10", "SPSA"
  std::string title() const;
  static AttackSpec parse(const std::string& text);

  friend bool operator==(const AttackSpec&, const AttackSpec&) = default;
};

struct EvalOptions {
  std::size_t batch_size = 250;  // attack chunk size; seeds are derived per chunk
  PgdOptions pgd;
  SpsaOptions spsa;
  // Evaluate SPSA on this many examples (fixed-seed subsample); 0 = all.
  std::size_t spsa_subsample = 0;
};

struct AccuracyCount {
  std::size_t correct = 0;
  std::size_t total = 0;

  double fraction() const;
};

// Adversarial version of every example, generated against `source` in chunks
// of options.batch_size with per-chunk seeds. The natural spec returns the
// examples unchanged.
Tensor generate_adversarial(const Model& source, const Tensor& examples, std::span<const int> labels,
                            const AttackSpec& spec, const std::optional<ThreatModel>& threat, std::uint64_t seed,
                            const EvalOptions& options = {});

// Predictions (argmax, lowest index on ties) that match the labels.
AccuracyCount count_correct(const Model& model, const Tensor& examples, std::span<const int> labels);

// Throws ConfigError when a non-natural spec has no threat model. For pgd-N
// the threat's step count is replaced by N.
AccuracyCount accuracy_under_attack(const Model& model, const Dataset& data, const AttackSpec& spec,
                                    const std::optional<ThreatModel>& threat, std::uint64_t seed,
                                    const EvalOptions& options = {});

struct LogitStats {
  double mean = 0.0;
  double variance = 0.0;  // population
  double min = 0.0;
  double max = 0.0;
  std::vector<double> bin_edges;    // bins + 1 edges from min to max
  std::vector<std::size_t> counts;  // sums to the number of logit values
};

LogitStats logit_statistics(const Tensor& logits, std::size_t bins = 20);
LogitStats logit_statistics(const Model& model, const Dataset& data, std::size_t bins = 20);

struct AdversaryResult {
  AttackSpec spec;
  AccuracyCount count;
  std::vector<std::size_t> subsample;  // evaluated indices when not the full set
};

struct RobustnessReport {
  std::string model_id;  // training-method label, the table row name
  std::size_t num_classes = 0;
  std::optional<ThreatModel> threat;
  std::uint64_t seed = 0;
  std::vector<AdversaryResult> results;
  std::optional<LogitStats> logits;

  const AdversaryResult& at(const AttackSpec& spec) const;
};

// Every spec is measured on the same examples, except SPSA when
// options.spsa_subsample is set (the subsample is recorded).
RobustnessReport evaluate_robustness(const std::string& model_id, const Model& model, const Dataset& data,
                                     std::span<const AttackSpec> specs, const std::optional<ThreatModel>& threat,
                                     std::uint64_t seed, const EvalOptions& options = {}, bool with_logit_stats = true);

// Fixed-seed sample of `count` distinct indices from [0, m), ascending.
std::vector<std::size_t> subsample_indices(std::size_t m, std::size_t count, std::uint64_t seed);

struct ModelEntry {
  std::string id;
  Model model;
};

struct TransferMatrix {
  AttackSpec spec;
  std::vector<std::string> sources;
  std::vector<std::string> targets;
  std::vector<std::vector<AccuracyCount>> cells;  // [target][source]
  std::size_t num_classes = 0;

  double accuracy(std::size_t target, std::size_t source) const { return cells[target][source].fraction(); }
};

// Adversarial examples are generated once per source (seeded exactly as
// accuracy_under_attack would seed them) and evaluated on every target, so
// the diagonal equals the white-box accuracy. Throws Error when models
// disagree on input shape or class count.
TransferMatrix blackbox_transfer(std::span<const ModelEntry> sources, std::span<const ModelEntry> targets,
                                 const AttackSpec& spec, const Dataset& data, const std::optional<ThreatModel>& threat,
                                 std::uint64_t seed, const EvalOptions& options = {});

inline constexpr double kMaskingThresholdPoints = 2.0;

struct MaskingReport {
  std::vector<AdversaryResult> pgd;  // ascending depth
  AdversaryResult spsa;
  double depth_drop_points = 0.0;  // shallowest minus deepest PGD accuracy
  double spsa_gap_points = 0.0;    // SPSA minus deepest PGD accuracy
  bool flagged = false;            // deepest PGD beats SPSA by more than the threshold
  std::vector<std::size_t> subsample;
};

// All attacks run on the same examples (the subsample when `subsample` > 0).
// Needs at least two distinct PGD depths.
MaskingReport masking_probe(const Model& model, const Dataset& data, const ThreatModel& threat,
                            std::vector<std::size_t> pgd_steps, const SpsaOptions& spsa, std::size_t subsample,
                            std::uint64_t seed, const EvalOptions& options = {});

struct GammaProbe {
  double gamma = 0.0;
  double analytic = 0.0;           // gamma * sum (l - l~)^2 / B
  double autodiff = 0.0;           // through the graph
  double finite_difference = 0.0;  // central difference in gamma
  double relative_error = 0.0;     // autodiff vs finite difference
  bool sign_agrees = false;        // dL/dgamma has the sign of gamma (or both are zero)
};

struct PairingProbeReport {
  Tensor clean_gradient;  // d/dl of 1/2 sum (l - l~)^2, per element
  Tensor adv_gradient;    // d/dl~ of the same
  std::vector<GammaProbe> gammas;
};

// L(gamma) = 1/2 * mean over rows of sum_c (gamma l - gamma l~)^2.
PairingProbeReport pairing_gradient_probe(const Tensor& clean_logits, const Tensor& adv_logits,
                                          std::span<const double> gammas);

}  // namespace advreg
