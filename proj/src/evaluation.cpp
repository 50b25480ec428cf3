#include "advreg/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "advreg/errors.hpp"
#include "advreg/gradcheck.hpp"
#include "advreg/ops.hpp"
#include "advreg/seed.hpp"

namespace advreg {

std::string AttackSpec::label() const {
  switch (kind) {
    case Kind::natural: return "natural";
    case Kind::fgsm: return "fgsm";
    case Kind::pgd: return "pgd-" + std::to_string(steps);
    case Kind::spsa: return "spsa";
  }
  return "?";
}

std::string AttackSpec::title() const {
  switch (kind) {
    case Kind::natural: return "Natural";
    case Kind::fgsm: return "FGSM";
    case Kind::pgd: return "PGD-" + std::to_string(steps);
    case Kind::spsa: return "SPSA";
  }
  return "?";
}

AttackSpec AttackSpec::parse(const std::string& text) {
  if (text == "natural") return natural();
  if (text == "fgsm") return fgsm();
  if (text == "spsa") return spsa();
  if (text.starts_with("pgd-")) {
    const std::string digits = text.substr(4);
    if (!digits.empty() && digits.size() < 9 && std::all_of(digits.begin(), digits.end(), ::isdigit)) {
      const auto n = static_cast<std::size_t>(std::stoul(digits));
      if (n > 0) return pgd(n);
    }
  }
  throw ConfigError("unknown attack '" + text + "' (expected natural, fgsm, pgd-N or spsa)");
}

double AccuracyCount::fraction() const {
  if (total == 0) throw Error("accuracy of an empty example set");
  return static_cast<double>(correct) / static_cast<double>(total);
}

namespace {

const ThreatModel& require_threat(const AttackSpec& spec, const std::optional<ThreatModel>& threat) {
  if (!threat) throw ConfigError(spec.label() + " evaluation needs a threat model");
  return *threat;
}

double points(double fraction) { return 100.0 * fraction; }

}  // namespace

Tensor generate_adversarial(const Model& source, const Tensor& examples, std::span<const int> labels,
                            const AttackSpec& spec, const std::optional<ThreatModel>& threat, std::uint64_t seed,
                            const EvalOptions& options) {
  if (spec.kind == AttackSpec::Kind::natural) return examples;
  ThreatModel tm = require_threat(spec, threat);
  if (spec.kind == AttackSpec::Kind::pgd) tm.steps = spec.steps;
  if (options.batch_size == 0) throw ConfigError("evaluation batch size must be positive");
  const std::size_t m = labels.size();
  if (examples.rank() == 0 || examples.shape()[0] != m) throw ShapeError("examples and labels disagree in count");

  Tensor out(examples.shape());
  const std::size_t row = m == 0 ? 0 : examples.size() / m;
  for (std::size_t begin = 0, chunk = 0; begin < m; begin += options.batch_size, ++chunk) {
    const std::size_t end = std::min(m, begin + options.batch_size);
    const Tensor xs = examples.slice_rows(begin, end);
    const auto ys = labels.subspan(begin, end - begin);
    const std::uint64_t chunk_seed = derive_seed(seed, spec.label() + "/chunk" + std::to_string(chunk));
    AttackOutcome outcome;
    switch (spec.kind) {
      case AttackSpec::Kind::fgsm: outcome = fgsm_attack(source, xs, ys, tm); break;
      case AttackSpec::Kind::pgd: outcome = pgd_attack(source, xs, ys, tm, chunk_seed, options.pgd); break;
      case AttackSpec::Kind::spsa: outcome = spsa_attack(source, xs, ys, tm, options.spsa, chunk_seed); break;
      case AttackSpec::Kind::natural: break;
    }
    std::copy(outcome.adversarial.data().begin(), outcome.adversarial.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(begin * row));
  }
  return out;
}

AccuracyCount count_correct(const Model& model, const Tensor& examples, std::span<const int> labels) {
  const std::size_t m = labels.size();
  if (examples.rank() == 0 || examples.shape()[0] != m) throw ShapeError("examples and labels disagree in count");
  constexpr std::size_t chunk = 1000;
  AccuracyCount count{0, m};
  for (std::size_t begin = 0; begin < m; begin += chunk) {
    const std::size_t end = std::min(m, begin + chunk);
    const std::vector<int> predicted = argmax_rows(forward_logits(model, examples.slice_rows(begin, end)));
    for (std::size_t i = begin; i < end; ++i) count.correct += predicted[i - begin] == labels[i] ? 1 : 0;
  }
  return count;
}

AccuracyCount accuracy_under_attack(const Model& model, const Dataset& data, const AttackSpec& spec,
                                    const std::optional<ThreatModel>& threat, std::uint64_t seed,
                                    const EvalOptions& options) {
  if (data.size() == 0) throw Error("accuracy on an empty dataset");
  const Tensor adversarial = generate_adversarial(model, data.examples, data.labels, spec, threat, seed, options);
  return count_correct(model, adversarial, data.labels);
}

LogitStats logit_statistics(const Tensor& logits, std::size_t bins) {
  if (logits.size() == 0 || logits.rank() == 0) throw Error("logit statistics of an empty set");
  if (bins == 0) throw ConfigError("histogram needs at least one bin");
  const auto v = logits.data();
  LogitStats s;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  s.min = *lo;
  s.max = *hi;
  const double n = static_cast<double>(v.size());
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.variance = ss / n;
  const double width = (s.max - s.min) / static_cast<double>(bins);
  for (std::size_t b = 0; b <= bins; ++b) s.bin_edges.push_back(b == bins ? s.max : s.min + width * static_cast<double>(b));
  s.counts.assign(bins, 0);
  for (double x : v) {
    std::size_t b = 0;
    if (width > 0.0) b = std::min(bins - 1, static_cast<std::size_t>((x - s.min) / width));
    ++s.counts[b];
  }
  return s;
}

LogitStats logit_statistics(const Model& model, const Dataset& data, std::size_t bins) {
  if (data.size() == 0) throw Error("logit statistics of an empty dataset");
  return logit_statistics(forward_logits(model, data.examples), bins);
}

const AdversaryResult& RobustnessReport::at(const AttackSpec& spec) const {
  for (const auto& r : results) {
    if (r.spec == spec) return r;
  }
  throw Error("report for " + model_id + " has no " + spec.label() + " result");
}

std::vector<std::size_t> subsample_indices(std::size_t m, std::size_t count, std::uint64_t seed) {
  if (count > m) throw ConfigError("subsample of " + std::to_string(count) + " from " + std::to_string(m) + " examples");
  std::vector<std::size_t> all(m);
  std::iota(all.begin(), all.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

RobustnessReport evaluate_robustness(const std::string& model_id, const Model& model, const Dataset& data,
                                     std::span<const AttackSpec> specs, const std::optional<ThreatModel>& threat,
                                     std::uint64_t seed, const EvalOptions& options, bool with_logit_stats) {
  if (specs.empty()) throw ConfigError("no adversaries configured");
  RobustnessReport report;
  report.model_id = model_id;
  report.num_classes = model.config.num_classes;
  report.threat = threat;
  report.seed = seed;
  for (const AttackSpec& spec : specs) {
    AdversaryResult r{spec, {}, {}};
    if (spec.kind == AttackSpec::Kind::spsa && options.spsa_subsample > 0 && options.spsa_subsample < data.size()) {
      r.subsample = subsample_indices(data.size(), options.spsa_subsample, derive_seed(seed, "spsa-subsample"));
      r.count = accuracy_under_attack(model, subset(data, r.subsample), spec, threat, seed, options);
    } else {
      r.count = accuracy_under_attack(model, data, spec, threat, seed, options);
    }
    report.results.push_back(std::move(r));
  }
  if (with_logit_stats) report.logits = logit_statistics(model, data);
  return report;
}

TransferMatrix blackbox_transfer(std::span<const ModelEntry> sources, std::span<const ModelEntry> targets,
                                 const AttackSpec& spec, const Dataset& data, const std::optional<ThreatModel>& threat,
                                 std::uint64_t seed, const EvalOptions& options) {
  if (sources.empty() || targets.empty()) throw ConfigError("transfer needs at least one source and one target");
  const ModelConfig& ref = sources.front().model.config;
  auto check = [&](const ModelEntry& e) {
    if (e.model.config.input_shape != ref.input_shape || e.model.config.num_classes != ref.num_classes) {
      throw Error("model " + e.id + " is incompatible with " + sources.front().id + " (input " +
                  shape_to_string(e.model.config.input_shape) + ", " + std::to_string(e.model.config.num_classes) +
                  " classes)");
    }
  };
  for (const auto& e : sources) check(e);
  for (const auto& e : targets) check(e);

  TransferMatrix matrix;
  matrix.spec = spec;
  matrix.num_classes = ref.num_classes;
  for (const auto& e : sources) matrix.sources.push_back(e.id);
  for (const auto& e : targets) matrix.targets.push_back(e.id);
  matrix.cells.assign(targets.size(), std::vector<AccuracyCount>(sources.size()));
  for (std::size_t s = 0; s < sources.size(); ++s) {
    const Tensor adversarial =
        generate_adversarial(sources[s].model, data.examples, data.labels, spec, threat, seed, options);
    for (std::size_t t = 0; t < targets.size(); ++t) {
      matrix.cells[t][s] = count_correct(targets[t].model, adversarial, data.labels);
    }
  }
  return matrix;
}

MaskingReport masking_probe(const Model& model, const Dataset& data, const ThreatModel& threat,
                            std::vector<std::size_t> pgd_steps, const SpsaOptions& spsa, std::size_t subsample,
                            std::uint64_t seed, const EvalOptions& options) {
  std::sort(pgd_steps.begin(), pgd_steps.end());
  pgd_steps.erase(std::unique(pgd_steps.begin(), pgd_steps.end()), pgd_steps.end());
  if (pgd_steps.size() < 2 || pgd_steps.front() == 0) {
    throw ConfigError("masking probe needs at least two distinct positive PGD depths");
  }
  spsa.validate();

  MaskingReport report;
  Dataset probe_data = data;
  if (subsample > 0 && subsample < data.size()) {
    report.subsample = subsample_indices(data.size(), subsample, derive_seed(seed, "probe-subsample"));
    probe_data = subset(data, report.subsample);
  }
  EvalOptions opts = options;
  opts.spsa = spsa;
  for (std::size_t n : pgd_steps) {
    const AttackSpec spec = AttackSpec::pgd(n);
    report.pgd.push_back({spec, accuracy_under_attack(model, probe_data, spec, threat, seed, opts), report.subsample});
  }
  report.spsa = {AttackSpec::spsa(), accuracy_under_attack(model, probe_data, AttackSpec::spsa(), threat, seed, opts),
                 report.subsample};
  const double shallow = points(report.pgd.front().count.fraction());
  const double deep = points(report.pgd.back().count.fraction());
  const double gradient_free = points(report.spsa.count.fraction());
  report.depth_drop_points = shallow - deep;
  report.spsa_gap_points = gradient_free - deep;
  report.flagged = deep - gradient_free > kMaskingThresholdPoints;
  return report;
}

PairingProbeReport pairing_gradient_probe(const Tensor& clean_logits, const Tensor& adv_logits,
                                          std::span<const double> gammas) {
  if (clean_logits.shape() != adv_logits.shape() || clean_logits.rank() != 2) {
    throw ShapeError("pairing probe needs equal (B,C) logits, got " + shape_to_string(clean_logits.shape()) + " and " +
                     shape_to_string(adv_logits.shape()));
  }
  const double rows = static_cast<double>(clean_logits.shape()[0]);
  PairingProbeReport report;
  {
    Graph g;
    Var l = g.input(clean_logits, true);
    Var lt = g.input(adv_logits, true);
    Var loss = ops::scale(ops::sum(ops::square(ops::sub(l, lt))), 0.5);
    Gradients grads = g.backward(loss);
    report.clean_gradient = grads.of(l);
    report.adv_gradient = grads.of(lt);
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < clean_logits.size(); ++i) {
    const double d = clean_logits[i] - adv_logits[i];
    sq += d * d;
  }
  auto closed_form = [&](double gamma) {
    double total = 0.0;
    for (std::size_t i = 0; i < clean_logits.size(); ++i) {
      const double d = gamma * clean_logits[i] - gamma * adv_logits[i];
      total += d * d;
    }
    return 0.5 * total / rows;
  };
  for (double gamma : gammas) {
    GammaProbe p;
    p.gamma = gamma;
    p.analytic = gamma * sq / rows;
    Graph g;
    Var gv = g.input(Tensor::scalar(gamma), true);
    Var diff = ops::sub(ops::scale_by(g.constant(clean_logits), gv), ops::scale_by(g.constant(adv_logits), gv));
    Var loss = ops::scale(ops::sum(ops::square(diff)), 0.5 / rows);
    p.autodiff = g.backward(loss).of(gv).item();
    p.finite_difference = finite_difference_gradient(
        [&](const Tensor& t) { return closed_form(t.item()); }, Tensor::scalar(gamma), 1e-4)[0];
    p.relative_error = relative_error(p.autodiff, p.finite_difference);
    const auto sgn = [](double x) { return (x > 0.0) - (x < 0.0); };
    p.sign_agrees = sgn(p.autodiff) == sgn(gamma) || (p.autodiff == 0.0 && sq == 0.0);
    report.gammas.push_back(p);
  }
  return report;
}

}  // namespace advreg
