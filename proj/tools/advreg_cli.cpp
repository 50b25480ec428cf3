// advreg: train, evaluate, transfer, probe, report.
// Exit status: 0 success, 1 config error, 2 runtime error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "advreg/config.hpp"
#include "advreg/errors.hpp"
#include "advreg/experiment.hpp"
#include "advreg/report.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string checkpoint;
  std::string format = "markdown";
  bool quiet = false;
};

advreg::ExperimentConfig load(const Flags& f) {
  if (f.config.empty()) throw advreg::ConfigError("--config is required");
  advreg::ExperimentConfig c = advreg::parse_config(f.config);
  if (f.seed) c.seed = *f.seed;
  if (!f.out.empty()) c.out_dir = f.out;
  return c;
}

advreg::RunOptions run_options(const Flags& f, bool evaluate_only) {
  advreg::RunOptions o;
  o.evaluate_only = evaluate_only;
  if (!f.checkpoint.empty()) o.checkpoint = f.checkpoint;
  if (!f.quiet) o.progress = [](const std::string& line) { std::cerr << line << "\n"; };
  return o;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw advreg::Error("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw advreg::FormatError(path.string() + ": " + e.what());
  }
}

// Renders every report.json / transfer.json found in the given directories.
int report(const Flags& f, const std::vector<std::string>& dirs) {
  const advreg::ReportFormat format = advreg::parse_report_format(f.format);
  std::vector<std::filesystem::path> roots;
  for (const auto& d : dirs) roots.emplace_back(d);
  if (roots.empty()) roots.push_back(f.out.empty() ? load(f).out_dir : std::filesystem::path(f.out));
  std::vector<advreg::RobustnessReport> reports;
  std::vector<advreg::TransferMatrix> matrices;
  for (const auto& root : roots) {
    if (std::filesystem::exists(root / "report.json")) reports.push_back(advreg::report_from_json(read_json(root / "report.json")));
    if (std::filesystem::exists(root / "transfer.json")) {
      matrices.push_back(advreg::transfer_from_json(read_json(root / "transfer.json")));
    }
  }
  if (reports.empty() && matrices.empty()) throw advreg::Error("no report.json or transfer.json found");
  if (!reports.empty()) std::cout << advreg::render_report(reports, format);
  for (const auto& m : matrices) {
    if (!reports.empty() || &m != &matrices.front()) std::cout << "\n";
    std::cout << advreg::render_transfer(m, format);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial robustness experiments on small models"};
  app.require_subcommand(1);
  Flags f;
  std::vector<std::string> report_dirs;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "Experiment config (INI)")->check(CLI::ExistingFile);
    sub->add_option("--seed", f.seed, "Override the master seed");
    sub->add_option("--out", f.out, "Override the output directory");
    sub->add_option("--checkpoint", f.checkpoint, "Checkpoint path (default <out>/checkpoint.bin)");
    sub->add_option("--format", f.format, "Table format")->check(CLI::IsMember({"markdown", "csv"}));
    sub->add_flag("-q,--quiet", f.quiet, "No progress output");
  };
  CLI::App* train = app.add_subcommand("train", "Train, evaluate and write all artifacts");
  CLI::App* evaluate = app.add_subcommand("evaluate", "Evaluate an existing checkpoint");
  CLI::App* transfer = app.add_subcommand("transfer", "Black-box transfer matrix between checkpoints");
  CLI::App* probe = app.add_subcommand("probe", "Gradient-masking and pairing-gradient probes");
  CLI::App* rep = app.add_subcommand("report", "Render saved reports as tables");
  for (CLI::App* sub : {train, evaluate, transfer, probe, rep}) common(sub);
  rep->add_option("dirs", report_dirs, "Output directories to collect reports from");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    const advreg::ReportFormat format = advreg::parse_report_format(f.format);
    if (train->parsed() || evaluate->parsed()) {
      const auto config = load(f);
      const advreg::RobustnessReport r = advreg::run_experiment(config, run_options(f, evaluate->parsed()));
      std::cout << advreg::render_report(std::span(&r, 1), format);
    } else if (transfer->parsed()) {
      const auto config = load(f);
      std::cout << advreg::render_transfer(advreg::run_transfer(config, run_options(f, true)), format);
    } else if (probe->parsed()) {
      const auto config = load(f);
      const advreg::ProbeResult p = advreg::run_probe(config, run_options(f, true));
      for (const auto& r : p.masking.pgd) {
        std::cout << r.spec.title() << ": " << advreg::format_percent(r.count.correct, r.count.total) << "\n";
      }
      std::cout << "SPSA: " << advreg::format_percent(p.masking.spsa.count.correct, p.masking.spsa.count.total)
                << "\nmasking suspected: " << (p.masking.flagged ? "yes" : "no") << "\n";
      for (const auto& g : p.pairing.gammas) {
        std::cout << "gamma " << g.gamma << ": dL/dgamma " << g.autodiff << " (finite difference "
                  << g.finite_difference << ")\n";
      }
    } else {
      return report(f, report_dirs);
    }
    return kOk;
  } catch (const advreg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}
