// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Usage: advreg_acceptance [criterion numbers...]   (default: all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "advreg/attacks.hpp"
#include "advreg/config.hpp"
#include "advreg/data.hpp"
#include "advreg/evaluation.hpp"
#include "advreg/experiment.hpp"
#include "advreg/gradcheck.hpp"
#include "advreg/objectives.hpp"
#include "advreg/ops.hpp"
#include "advreg/seed.hpp"

using namespace advreg;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

const fs::path kConfigs = ADVREG_CONFIG_DIR;
const std::vector<std::uint64_t> kSeeds{11, 12, 13};

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Desk runs ------------------------------------------------------------------

struct DeskRun {
  RobustnessReport report;
  double seconds = 0.0;
};

fs::path scratch() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "advreg_acceptance";
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

const DeskRun& desk(const std::string& config_name, std::uint64_t seed) {
  static std::map<std::pair<std::string, std::uint64_t>, DeskRun> cache;
  const auto key = std::make_pair(config_name, seed);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  ExperimentConfig c = parse_config(kConfigs / (config_name + ".ini"));
  c.seed = seed;
  c.out_dir = scratch() / (config_name + "-" + std::to_string(seed));
  const auto start = Clock::now();
  DeskRun run{run_experiment(c), 0.0};
  run.seconds = seconds_since(start);
  std::fprintf(stderr, "  [%s seed %llu: %.0f s]\n", config_name.c_str(), static_cast<unsigned long long>(seed),
               run.seconds);
  return cache.emplace(key, std::move(run)).first->second;
}

double points(const DeskRun& r, const AttackSpec& spec) { return 100.0 * r.report.at(spec).count.fraction(); }

// Criteria -------------------------------------------------------------------

Verdict gradient_correctness() {
  const auto start = Clock::now();
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> pick(0, 1);
  double worst = 0.0;
  std::size_t models = 0, checked = 0;
  for (; models < 24; ++models) {
    ModelConfig c;
    c.num_classes = 2 + models % 4;
    if (pick(rng) == 0) {
      c.input_shape = {3 + models % 5};
      c.hidden = {4 + models % 7};
      if (models % 3 == 0) c.hidden.push_back(5);
    } else {
      c.arch = Architecture::small_conv;
      c.input_shape = {1 + models % 2, 4 + 2 * (models % 2), 4 + 2 * (models % 2)};
      c.channels = 2 + models % 2;
      c.residual_blocks = models % 2;
    }
    const Model m = make_model(c, 100 + models);
    if (m.params.parameter_count() > 1000) return {false, "model over 1000 parameters"};
    Shape batch_shape{3};
    batch_shape.insert(batch_shape.end(), c.input_shape.begin(), c.input_shape.end());
    const Tensor x = random_tensor(batch_shape, rng, 0, 1);
    std::vector<int> y{0, 1, static_cast<int>(c.num_classes - 1)};
    const LabelDistribution target = one_hot(y, c.num_classes);

    auto loss_at = [&](const std::vector<Tensor>& values, Graph& g, std::vector<Var>& vars) {
      vars.clear();
      for (const auto& v : values) vars.push_back(g.input(v, g.recording()));
      return cross_entropy(forward_logits(c, vars, g.constant(x)), target);
    };
    std::vector<Tensor> values;
    // zero biases behind a dead relu layer put pre-activations exactly on the kink
    std::uniform_real_distribution<double> jitter(-0.1, 0.1);
    for (const auto& t : m.params.tensors) {
      Tensor v = t.value;
      for (std::size_t k = 0; k < v.size(); ++k) v[k] += jitter(rng);
      values.push_back(std::move(v));
    }
    Graph g;
    std::vector<Var> vars;
    const Gradients grads = g.backward(loss_at(values, g, vars));
    for (std::size_t i = 0; i < values.size(); ++i) {
      const Tensor numeric = finite_difference_gradient(
          [&](const Tensor& p) {
            std::vector<Tensor> moved = values;
            moved[i] = p;
            Graph fg(false);
            std::vector<Var> fv;
            return loss_at(moved, fg, fv).value().item();
          },
          values[i], 1e-5);
      const Tensor& analytic = grads.of(vars[i]);
      for (std::size_t k = 0; k < numeric.size(); ++k) {
        if (std::abs(analytic[k]) > 1e-6 || std::abs(numeric[k]) > 1e-6) {
          worst = std::max(worst, relative_error(analytic[k], numeric[k]));
          ++checked;
        }
      }
    }
  }
  const double secs = seconds_since(start);
  return {worst < 1e-4 && secs < 60.0,
          fmt("%zu models, %zu coordinates, worst relative error %.2e, %.1f s", models, checked, worst, secs)};
}

Verdict expansion_identity() {
  std::mt19937_64 rng(2);
  double worst = 0.0;
  for (std::size_t c : {2, 10, 100}) {
    for (int i = 0; i < 10000; ++i) {
      const auto [lhs, rhs] =
          pairing_expansion_check(random_tensor({1, c}, rng, -10, 10), random_tensor({1, c}, rng, -10, 10));
      worst = std::max(worst, std::abs(lhs - rhs));
    }
  }
  return {worst <= 1e-10, fmt("3 x 10^4 pairs, worst |lhs - rhs| %.2e", worst)};
}

Verdict pairing_probes() {
  std::mt19937_64 rng(3);
  const std::vector<double> gammas{-1.0, 0.5, 1.0, 2.0};
  bool exact = true, signs = true, zeros = true;
  double worst_fd = 0.0, worst_ad = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t b = 1 + trial % 4, c = 2 + trial % 9;
    const Tensor l = random_tensor({b, c}, rng, -5, 5), la = random_tensor({b, c}, rng, -5, 5);
    const PairingProbeReport r = pairing_gradient_probe(l, la, gammas);
    // gradient of the summed 1/2 sum (l - l~)^2 is l - l~ exactly
    exact = exact && r.clean_gradient == l - la && r.adv_gradient == la - l;
    for (const GammaProbe& g : r.gammas) {
      worst_fd = std::max(worst_fd, relative_error(g.finite_difference, g.analytic));
      worst_ad = std::max(worst_ad, relative_error(g.autodiff, g.analytic));
      signs = signs && g.sign_agrees;
    }
    for (const GammaProbe& g : pairing_gradient_probe(l, l, gammas).gammas) {
      zeros = zeros && g.autodiff == 0.0 && g.finite_difference == 0.0 && g.analytic == 0.0;
    }
  }
  return {exact && signs && zeros && worst_fd <= 1e-6 && worst_ad <= 1e-6,
          fmt("gradient exact: %s, worst d/dgamma error fd %.1e autodiff %.1e, signs %s, identical logits zero: %s",
              exact ? "yes" : "no", worst_fd, worst_ad, signs ? "ok" : "bad", zeros ? "yes" : "no")};
}

Verdict smoothing_rows() {
  std::mt19937_64 rng(4);
  double worst = 0.0;
  bool endpoints = true;
  for (std::size_t c = 2; c <= 100; ++c) {
    std::vector<int> y(8);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(rng() % c);
    const double cap = 1.0 - 1.0 / static_cast<double>(c);
    std::uniform_real_distribution<double> s(0.0, cap);
    for (double strength : {s(rng), s(rng), s(rng)}) {
      const LabelDistribution d = smooth_labels(y, c, strength);
      for (std::size_t i = 0; i < y.size(); ++i) {
        double sum = 0.0;
        for (std::size_t k = 0; k < c; ++k) sum += d.probs[i * c + k];
        worst = std::max(worst, std::abs(sum - 1.0));
      }
    }
    endpoints = endpoints && smooth_labels(y, c, 0.0).probs == one_hot(y, c).probs;
    const LabelDistribution u = smooth_labels(y, c, cap);
    endpoints = endpoints && std::all_of(u.probs.data().begin(), u.probs.data().end(),
                                         [&](double p) { return p == 1.0 / static_cast<double>(c); });
  }
  return {worst <= 1e-9 && endpoints, fmt("C = 2..100, worst row-sum error %.2e, endpoints exact: %s", worst,
                                          endpoints ? "yes" : "no")};
}

Verdict attack_contracts() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Model> models;
  for (std::uint64_t s = 0; s < 4; ++s) {
    ModelConfig c;
    c.input_shape = {6};
    c.hidden = {8};
    c.num_classes = 3;
    models.push_back(make_model(c, s));
  }
  std::size_t cases = 0, violations = 0, fgsm_mismatch = 0, fgsm_cases = 0;
  double worst = 0.0;
  SpsaOptions spsa;
  spsa.samples_per_step = 4;
  for (; cases < 10000; ++cases) {
    const Model& m = models[cases % models.size()];
    // origins piled up near the range boundaries
    Tensor x({2, 6});
    for (double& v : x.data()) {
      const double r = unit(rng);
      v = r < 0.3 ? 0.02 * unit(rng) : r < 0.6 ? 1.0 - 0.02 * unit(rng) : unit(rng);
      if (r < 0.05) v = 0.0;
      if (r > 0.95) v = 1.0;
    }
    const std::vector<int> y{static_cast<int>(rng() % 3), static_cast<int>(rng() % 3)};
    ThreatModel t;
    t.epsilon = std::exp(std::log(1e-4) + unit(rng) * (std::log(0.5) - std::log(1e-4)));
    t.step_size = t.epsilon * (0.1 + unit(rng));
    t.steps = 1 + rng() % 4;
    Tensor adv;
    switch (cases % 3) {
      case 0: {
        adv = fgsm_attack(m, x, y, t).adversarial;
        ThreatModel one = t;
        one.step_size = t.epsilon;
        one.steps = 1;
        PgdOptions zero_init;
        zero_init.random_init = false;
        ++fgsm_cases;
        fgsm_mismatch += pgd_attack(m, x, y, one, cases, zero_init).adversarial == adv ? 0 : 1;
        break;
      }
      case 1: adv = pgd_attack(m, x, y, t, cases).adversarial; break;
      default: adv = spsa_attack(m, x, y, t, spsa, cases).adversarial; break;
    }
    for (std::size_t i = 0; i < adv.size(); ++i) {
      const double d = std::abs(adv[i] - x[i]);
      worst = std::max(worst, d - t.epsilon);
      if (d > t.epsilon + 1e-9 || adv[i] < t.low || adv[i] > t.high) ++violations;
    }
  }
  return {violations == 0 && fgsm_mismatch == 0,
          fmt("%zu cases, %zu violations (max excess %.1e), FGSM vs 1-step PGD mismatches %zu of %zu", cases,
              violations, std::max(worst, 0.0), fgsm_mismatch, fgsm_cases)};
}

Verdict spsa_estimator() {
  // seed fixed before the first run
  Rng rng(6);
  const Tensor x({1, 10}, 1.0);
  const Tensor est = spsa_gradient_estimate(
      [](const Tensor& v) {
        std::vector<double> out(v.dim(0), 0.0);
        const std::size_t d = v.size() / v.dim(0);
        for (std::size_t i = 0; i < v.size(); ++i) out[i / d] += v[i] * v[i];
        return out;
      },
      x, 1e-3, 10000, rng);
  double worst = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) worst = std::max(worst, std::abs(est[i] - 2.0) / 2.0);
  double mean = 0.0;
  for (double v : est.data()) mean += v / 10.0;
  return {worst <= 0.05, fmt("worst coordinate off by %.2f%% (mean over coordinates %.4f)", 100 * worst, mean)};
}

Verdict logit_variance() {
  std::vector<double> squeeze, pgd;
  double secs = 0.0;
  for (std::uint64_t seed : {kSeeds[0], kSeeds[1]}) {
    const DeskRun& s = desk("desk_logit_squeeze", seed);
    const DeskRun& p = desk("desk_adv_train", seed);
    squeeze.push_back(s.report.logits->variance);
    pgd.push_back(p.report.logits->variance);
    secs += s.seconds + p.seconds;
  }
  bool ok = secs < 1800.0;
  std::string detail;
  for (std::size_t i = 0; i < squeeze.size(); ++i) {
    ok = ok && squeeze[i] < 0.7 * pgd[i];
    detail += fmt("seed %llu: squeeze %.3f vs PGD %.3f (ratio %.3f); ", static_cast<unsigned long long>(kSeeds[i]),
                  squeeze[i], pgd[i], squeeze[i] / pgd[i]);
  }
  return {ok, detail + fmt("%.0f s", secs)};
}

Verdict label_smoothing_gain() {
  std::vector<double> gain, drop;
  std::string detail;
  for (std::uint64_t seed : kSeeds) {
    const DeskRun& base = desk("desk_plain", seed);
    const DeskRun& ls = desk("desk_label_smoothing", seed);
    gain.push_back(points(ls, AttackSpec::fgsm()) - points(base, AttackSpec::fgsm()));
    drop.push_back(points(base, AttackSpec::natural()) - points(ls, AttackSpec::natural()));
    detail += fmt("seed %llu: FGSM %.1f -> %.1f, natural %.1f -> %.1f; ", static_cast<unsigned long long>(seed),
                  points(base, AttackSpec::fgsm()), points(ls, AttackSpec::fgsm()), points(base, AttackSpec::natural()),
                  points(ls, AttackSpec::natural()));
  }
  const double g = median(gain), d = median(drop);
  return {g >= 15.0 && d <= 3.0, detail + fmt("median gain %.1f, median natural drop %.1f", g, d)};
}

Verdict defense_ordering() {
  std::vector<double> pgd, alp, dec;
  for (std::uint64_t seed : kSeeds) {
    pgd.push_back(points(desk("desk_adv_train", seed), AttackSpec::pgd(10)));
    alp.push_back(points(desk("desk_alp", seed), AttackSpec::pgd(10)));
    dec.push_back(points(desk("desk_decoupled", seed), AttackSpec::pgd(10)));
  }
  const double p = median(pgd), a = median(alp), d = median(dec);
  return {d >= a - 1.0 && a >= p - 1.0,
          fmt("median PGD-10: decoupled %.1f, ALP %.1f, PGD %.1f (seeds: %.1f/%.1f/%.1f, %.1f/%.1f/%.1f, "
              "%.1f/%.1f/%.1f)",
              d, a, p, dec[0], dec[1], dec[2], alp[0], alp[1], alp[2], pgd[0], pgd[1], pgd[2])};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Verdict harness() {
  ExperimentConfig c = parse_config(kConfigs / "smoke.ini");
  c.out_dir = scratch() / "harness-a";
  run_experiment(c);
  ExperimentConfig again = c;
  again.out_dir = scratch() / "harness-b";
  run_experiment(again);
  const bool identical = slurp(c.out_dir / "report.json") == slurp(again.out_dir / "report.json") &&
                         slurp(c.out_dir / "tables.md") == slurp(again.out_dir / "tables.md");

  const ExperimentData data = load_experiment_data(c);
  const ModelConfig mc = resolve_model_config(c, data.train);
  std::vector<ModelEntry> models;
  for (std::uint64_t s = 0; s < 3; ++s) {
    TrainingConfig t = c.training;
    t.seed = s;
    ObjectiveConfig o = c.objective;
    if (s == 0) o.defense = Defense::plain;
    models.push_back({"m" + std::to_string(s), train(mc, data.train, t, o, c.threat).model});
  }
  EvalOptions opts = c.evaluation.options;
  opts.batch_size = 64;
  std::size_t diagonal_mismatch = 0, identity_mismatch = 0;
  for (const AttackSpec& spec : {AttackSpec::fgsm(), AttackSpec::pgd(10)}) {
    const TransferMatrix m = blackbox_transfer(models, models, spec, data.test, c.threat, 21, opts);
    for (std::size_t i = 0; i < models.size(); ++i) {
      const AccuracyCount white = accuracy_under_attack(models[i].model, data.test, spec, c.threat, 21, opts);
      diagonal_mismatch += m.cells[i][i].correct == white.correct ? 0 : 1;
    }
  }
  const TransferMatrix id = blackbox_transfer(models, models, AttackSpec::natural(), data.test, c.threat, 21, opts);
  for (std::size_t t = 0; t < models.size(); ++t) {
    const AccuracyCount natural = count_correct(models[t].model, data.test.examples, data.test.labels);
    for (std::size_t s = 0; s < models.size(); ++s) identity_mismatch += id.cells[t][s].correct == natural.correct ? 0 : 1;
  }
  return {identical && diagonal_mismatch == 0 && identity_mismatch == 0,
          fmt("diagonal mismatches %zu, identity-attack mismatches %zu, rerun byte-identical: %s", diagonal_mismatch,
              identity_mismatch, identical ? "yes" : "no")};
}

Verdict masking_depth() {
  std::vector<double> drop;
  std::string detail;
  for (std::uint64_t seed : kSeeds) {
    const DeskRun& ls = desk("desk_label_smoothing", seed);
    const double shallow = points(ls, AttackSpec::pgd(10)), deep = points(ls, AttackSpec::pgd(200));
    drop.push_back(shallow - deep);
    detail += fmt("seed %llu: PGD-10 %.1f, PGD-200 %.1f; ", static_cast<unsigned long long>(seed), shallow, deep);
  }
  const double d = median(drop);
  return {d >= 10.0, detail + fmt("median drop %.1f points", d)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"gradient check on random small models", gradient_correctness},
      {"pairing expansion identity", expansion_identity},
      {"pairing gradient and scale probes", pairing_probes},
      {"label smoothing rows and endpoints", smoothing_rows},
      {"attack budget, range and FGSM equivalence", attack_contracts},
      {"SPSA estimate on a quadratic", spsa_estimator},
      {"logit squeezing lowers clean logit variance", logit_variance},
      {"label smoothing raises FGSM accuracy", label_smoothing_gain},
      {"decoupled >= ALP >= PGD at PGD-10", defense_ordering},
      {"transfer diagonal, identity attack, rerun", harness},
      {"label smoothing loses accuracy with PGD depth", masking_depth},
  };
  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoul(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected.empty() && !selected.contains(i + 1)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] %2zu. %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), v.detail.c_str());
    std::fflush(stdout);
    failures += v.pass ? 0 : 1;
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
