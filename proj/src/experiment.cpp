#include "advreg/experiment.hpp"

#include <fstream>

#include "advreg/checkpoint.hpp"
#include "advreg/idx.hpp"
#include "advreg/report.hpp"
#include "advreg/seed.hpp"
#include "advreg/training.hpp"

namespace advreg {

namespace {

template <typename Fn>
auto stage(const std::string& name, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(name + ": " + e.what());
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(name, e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

void say(const RunOptions& options, const std::string& text) {
  if (options.progress) options.progress(text);
}

Dataset with_channel_axis(Dataset d) {
  if (d.examples.rank() == 3) {
    const Shape& s = d.examples.shape();
    d.examples = d.examples.reshaped({s[0], 1, s[1], s[2]});
  }
  return d;
}

Model load_model(const ExperimentConfig& config, const Dataset& train, const std::filesystem::path& path) {
  const ModelConfig mc = resolve_model_config(config, train);
  return Model{mc, load_checkpoint(path, mc).params};
}

std::filesystem::path checkpoint_path(const ExperimentConfig& config, const RunOptions& options) {
  return options.checkpoint ? *options.checkpoint : artifact_paths(config.out_dir).checkpoint;
}

}  // namespace

ExperimentData load_experiment_data(const ExperimentConfig& config) {
  const DataSpec& d = config.data;
  if (d.source == DataSource::idx) {
    Dataset train = with_channel_axis(load_idx_dataset(d.train_images, d.train_labels, d.classes, Split::train));
    Dataset test = with_channel_axis(load_idx_dataset(d.test_images, d.test_labels, d.classes, Split::test));
    return {std::move(train), std::move(test)};
  }
  Dataset all = make_synthetic_dataset(d.kind, d.size, d.classes, derive_seed(config.seed, "data"), d.synthetic);
  auto [train, test] = split_train_test(all, d.test_size);
  return {std::move(train), std::move(test)};
}

ModelConfig resolve_model_config(const ExperimentConfig& config, const Dataset& train) {
  ModelConfig mc = config.model;
  mc.input_shape = train.example_shape();
  mc.num_classes = train.num_classes;
  mc.validate();
  return mc;
}

std::string experiment_label(const ExperimentConfig& config) {
  return config.name.empty() ? to_string(config.objective.defense) : config.name;
}

std::uint64_t training_seed(const ExperimentConfig& config) { return derive_seed(config.seed, "train"); }
std::uint64_t evaluation_seed(const ExperimentConfig& config) { return derive_seed(config.seed, "eval"); }

ArtifactPaths artifact_paths(const std::filesystem::path& out_dir) {
  return {out_dir / "checkpoint.bin", out_dir / "training_log.jsonl", out_dir / "report.json", out_dir / "tables.md"};
}

RobustnessReport run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  const ArtifactPaths paths = artifact_paths(config.out_dir);
  const ExperimentData data = stage("data", [&] { return load_experiment_data(config); });
  stage("output", [&] { std::filesystem::create_directories(config.out_dir); return 0; });

  Model model;
  if (options.evaluate_only) {
    model = stage("checkpoint", [&] { return load_model(config, data.train, checkpoint_path(config, options)); });
    say(options, "loaded " + checkpoint_path(config, options).string());
  } else {
    model = stage("training", [&] {
      TrainingConfig tc = config.training;
      tc.seed = training_seed(config);
      std::ofstream log(paths.training_log, std::ios::binary | std::ios::trunc);
      if (!log) throw Error("cannot write " + paths.training_log.string());
      TrainingResult result =
          train(resolve_model_config(config, data.train), data.train, tc, config.objective, config.threat,
                [&](const EpochRecord& r) {
                  log << to_json_line(r) << "\n";
                  say(options, "epoch " + std::to_string(r.epoch) + " loss " + std::to_string(r.loss) + " acc " +
                                   format_percent(r.clean_accuracy));
                });
      if (!log) throw Error("failed writing " + paths.training_log.string());
      save_checkpoint({result.model.params, result.steps}, checkpoint_path(config, options));
      return result.model;
    });
  }

  RobustnessReport report = stage("evaluation", [&] {
    return evaluate_robustness(experiment_label(config), model, data.test, config.evaluation.attacks, config.threat,
                               evaluation_seed(config), config.evaluation.options, true);
  });
  if (report.logits) report.logits = logit_statistics(model, data.test, config.evaluation.logit_bins);

  stage("report", [&] {
    write_text(paths.report, to_json(report).dump(2) + "\n");
    std::string tables = "## White-box accuracy\n\n" + render_report(std::span(&report, 1), ReportFormat::markdown);
    if (report.logits) {
      tables += "\nClean logits: mean " + std::to_string(report.logits->mean) + ", variance " +
                std::to_string(report.logits->variance) + "\n";
    }
    write_text(paths.tables, tables);
    return 0;
  });
  return report;
}

TransferMatrix run_transfer(const ExperimentConfig& config, const RunOptions& options) {
  if (config.transfer.sources.empty()) throw ConfigError("transfer needs [transfer] sources");
  const ExperimentData data = stage("data", [&] { return load_experiment_data(config); });
  auto load_all = [&](const auto& list) {
    std::vector<ModelEntry> out;
    for (const auto& [id, path] : list) out.push_back({id, load_model(config, data.train, path)});
    return out;
  };
  const std::vector<ModelEntry> sources = stage("checkpoint", [&] { return load_all(config.transfer.sources); });
  const std::vector<ModelEntry> targets = config.transfer.targets.empty()
                                              ? sources
                                              : stage("checkpoint", [&] { return load_all(config.transfer.targets); });
  say(options, "transfer " + config.transfer.attack.label() + " over " + std::to_string(sources.size()) +
                   " sources and " + std::to_string(targets.size()) + " targets");
  TransferMatrix matrix = stage("transfer", [&] {
    return blackbox_transfer(sources, targets, config.transfer.attack, data.test, config.threat,
                             evaluation_seed(config), config.evaluation.options);
  });
  stage("report", [&] {
    std::filesystem::create_directories(config.out_dir);
    write_text(config.out_dir / "transfer.json", to_json(matrix).dump(2) + "\n");
    write_text(config.out_dir / "transfer.md", "## Black-box accuracy (" + matrix.spec.title() + ")\n\n" +
                                                   render_transfer(matrix, ReportFormat::markdown));
    return 0;
  });
  return matrix;
}

ProbeResult run_probe(const ExperimentConfig& config, const RunOptions& options) {
  if (!config.threat) throw ConfigError("probe needs a [threat] section");
  const ExperimentData data = stage("data", [&] { return load_experiment_data(config); });
  const Model model = stage("checkpoint", [&] { return load_model(config, data.train, checkpoint_path(config, options)); });
  ProbeResult result;
  result.masking = stage("masking probe", [&] {
    return masking_probe(model, data.test, *config.threat, config.evaluation.probe_depths,
                         config.evaluation.options.spsa, config.evaluation.probe_subsample, evaluation_seed(config),
                         config.evaluation.options);
  });
  result.pairing = stage("pairing probe", [&] {
    const Dataset probe_data = result.masking.subsample.empty() ? data.test : subset(data.test, result.masking.subsample);
    const Tensor adversarial =
        generate_adversarial(model, probe_data.examples, probe_data.labels, AttackSpec::pgd(config.threat->steps),
                             config.threat, evaluation_seed(config), config.evaluation.options);
    return pairing_gradient_probe(forward_logits(model, probe_data.examples), forward_logits(model, adversarial),
                                  config.evaluation.probe_gammas);
  });
  stage("report", [&] {
    std::filesystem::create_directories(config.out_dir);
    nlohmann::ordered_json j;
    j["model"] = experiment_label(config);
    j["masking"] = to_json(result.masking);
    j["pairing"] = to_json(result.pairing);
    write_text(config.out_dir / "probe.json", j.dump(2) + "\n");
    return 0;
  });
  say(options, "depth drop " + std::to_string(result.masking.depth_drop_points) + " points, SPSA gap " +
                   std::to_string(result.masking.spsa_gap_points) + (result.masking.flagged ? " (flagged)" : ""));
  return result;
}

}  // namespace advreg
