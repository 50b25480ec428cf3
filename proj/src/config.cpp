#include "advreg/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "advreg/errors.hpp"

namespace advreg {

ThreatModel default_threat() { return ThreatModel{0.03, 0.0078, 10, 0.0, 1.0, false}; }

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Typed readers. `key` and `line` only feed error messages.
struct Reader {
  std::string key;
  std::size_t line;

  [[noreturn]] void fail(const std::string& what) const { throw ConfigError(key + ": " + what, line); }

  double number(const std::string& v) const {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) fail("expected a number, got '" + v + "'");
    return out;
  }

  std::uint64_t integer(const std::string& v) const {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) fail("expected a non-negative integer, got '" + v + "'");
    return out;
  }

  std::size_t count(const std::string& v) const { return static_cast<std::size_t>(integer(v)); }

  bool boolean(const std::string& v) const {
    if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
    if (v == "false" || v == "no" || v == "off" || v == "0") return false;
    fail("expected true or false, got '" + v + "'");
  }

  std::vector<std::size_t> counts(const std::string& v) const {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(v)) out.push_back(count(item));
    return out;
  }

  std::vector<double> numbers(const std::string& v) const {
    std::vector<double> out;
    for (const auto& item : split_list(v)) out.push_back(number(item));
    return out;
  }

  // Rethrows a library ConfigError (bad enum names and the like) at this line.
  template <typename Fn>
  auto wrap(Fn&& fn) const {
    try {
      return fn();
    } catch (const ConfigError& e) {
      fail(e.what());
    }
  }
};

using Handler = std::function<void(const Reader&, const std::string&)>;

std::vector<std::pair<std::string, std::filesystem::path>> parse_models(const Reader& r, const std::string& v,
                                                                         const std::filesystem::path& base) {
  std::vector<std::pair<std::string, std::filesystem::path>> out;
  for (const auto& item : split_list(v)) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == item.size()) {
      r.fail("expected id=checkpoint entries, got '" + item + "'");
    }
    out.emplace_back(trim(item.substr(0, eq)), base / trim(item.substr(eq + 1)));
  }
  return out;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  ThreatModel threat = default_threat();
  bool has_threat = false;
  std::size_t defense_line = 0;
  bool attacks_given = false;
  std::size_t schedule_line = 0;
  bool explicit_decays = false, explicit_epochs = false;
  std::string schedule = "desk";

  auto path = [&](const std::string& v) { return base_dir / v; };

  std::map<std::string, std::map<std::string, Handler>> sections;
  sections["experiment"] = {
      {"name", [&](const Reader&, const std::string& v) { c.name = v; }},
      {"seed", [&](const Reader& r, const std::string& v) { c.seed = r.integer(v); }},
      {"out", [&](const Reader&, const std::string& v) { c.out_dir = path(v); }},
  };
  sections["data"] = {
      {"source",
       [&](const Reader& r, const std::string& v) {
         if (v == "synthetic") c.data.source = DataSource::synthetic;
         else if (v == "idx") c.data.source = DataSource::idx;
         else r.fail("expected synthetic or idx, got '" + v + "'");
       }},
      {"kind", [&](const Reader& r, const std::string& v) { c.data.kind = r.wrap([&] { return parse_synthetic_kind(v); }); }},
      {"size", [&](const Reader& r, const std::string& v) { c.data.size = r.count(v); }},
      {"test_size", [&](const Reader& r, const std::string& v) { c.data.test_size = r.count(v); }},
      {"classes", [&](const Reader& r, const std::string& v) { c.data.classes = r.count(v); }},
      {"dim", [&](const Reader& r, const std::string& v) { c.data.synthetic.dim = r.count(v); }},
      {"blob_spread", [&](const Reader& r, const std::string& v) { c.data.synthetic.blob_spread = r.number(v); }},
      {"ring_noise", [&](const Reader& r, const std::string& v) { c.data.synthetic.ring_noise = r.number(v); }},
      {"image_side", [&](const Reader& r, const std::string& v) { c.data.synthetic.image_side = r.count(v); }},
      {"glyph_noise", [&](const Reader& r, const std::string& v) { c.data.synthetic.glyph_noise = r.number(v); }},
      {"train_images", [&](const Reader&, const std::string& v) { c.data.train_images = path(v); }},
      {"train_labels", [&](const Reader&, const std::string& v) { c.data.train_labels = path(v); }},
      {"test_images", [&](const Reader&, const std::string& v) { c.data.test_images = path(v); }},
      {"test_labels", [&](const Reader&, const std::string& v) { c.data.test_labels = path(v); }},
  };
  sections["model"] = {
      {"arch", [&](const Reader& r, const std::string& v) { c.model.arch = r.wrap([&] { return parse_architecture(v); }); }},
      {"hidden", [&](const Reader& r, const std::string& v) { c.model.hidden = r.counts(v); }},
      {"channels", [&](const Reader& r, const std::string& v) { c.model.channels = r.count(v); }},
      {"residual_blocks", [&](const Reader& r, const std::string& v) { c.model.residual_blocks = r.count(v); }},
  };
  sections["training"] = {
      {"schedule",
       [&](const Reader& r, const std::string& v) {
         if (v != "desk" && v != "full") r.fail("expected desk or full, got '" + v + "'");
         schedule = v;
         schedule_line = r.line;
       }},
      {"epochs", [&](const Reader& r, const std::string& v) { c.training.epochs = r.count(v); explicit_epochs = true; }},
      {"warmup_epochs", [&](const Reader& r, const std::string& v) { c.training.warmup_epochs = r.count(v); }},
      {"peak_lr", [&](const Reader& r, const std::string& v) { c.training.peak_lr = r.number(v); }},
      {"decay_epochs",
       [&](const Reader& r, const std::string& v) { c.training.decay_epochs = r.counts(v); explicit_decays = true; }},
      {"decay_factor", [&](const Reader& r, const std::string& v) { c.training.decay_factor = r.number(v); }},
      {"momentum", [&](const Reader& r, const std::string& v) { c.training.momentum = r.number(v); }},
      {"weight_decay", [&](const Reader& r, const std::string& v) { c.training.weight_decay = r.number(v); }},
      {"batch_size", [&](const Reader& r, const std::string& v) { c.training.batch_size = r.count(v); }},
      {"decay_biases", [&](const Reader& r, const std::string& v) { c.training.decay_biases = r.boolean(v); }},
      {"augment_pad", [&](const Reader& r, const std::string& v) { c.training.augment_pad = r.count(v); }},
      {"augment_flip", [&](const Reader& r, const std::string& v) { c.training.augment_flip = r.boolean(v); }},
      {"shuffle", [&](const Reader& r, const std::string& v) { c.training.shuffle = r.boolean(v); }},
  };
  sections["objective"] = {
      {"defense",
       [&](const Reader& r, const std::string& v) {
         c.objective.defense = r.wrap([&] { return parse_defense(v); });
         defense_line = r.line;
       }},
      {"alpha", [&](const Reader& r, const std::string& v) { c.objective.alpha = r.number(v); }},
      {"lambda", [&](const Reader& r, const std::string& v) { c.objective.lambda = r.number(v); }},
      {"beta", [&](const Reader& r, const std::string& v) { c.objective.beta = r.number(v); }},
      {"ratio_constant", [&](const Reader& r, const std::string& v) { c.objective.ratio_constant = r.number(v); }},
      {"pairing_weight",
       [&](const Reader& r, const std::string& v) {
         c.objective.pairing_weight = r.wrap([&] { return parse_pairing_weight(v); });
       }},
      {"smoothing", [&](const Reader& r, const std::string& v) { c.objective.smoothing = r.number(v); }},
      {"smooth_adversarial", [&](const Reader& r, const std::string& v) { c.objective.smooth_adversarial = r.boolean(v); }},
      {"mix", [&](const Reader& r, const std::string& v) { c.objective.mix.mode = r.wrap([&] { return parse_mix_mode(v); }); }},
      {"mix_beta", [&](const Reader& r, const std::string& v) { c.objective.mix.beta_a = r.number(v); }},
      {"train_attack",
       [&](const Reader& r, const std::string& v) {
         if (v == "pgd") c.objective.train_attack = TrainAttack::pgd;
         else if (v == "fgsm") c.objective.train_attack = TrainAttack::fgsm;
         else r.fail("expected pgd or fgsm, got '" + v + "'");
       }},
  };
  sections["threat"] = {
      {"epsilon", [&](const Reader& r, const std::string& v) { threat.epsilon = r.number(v); }},
      {"step_size", [&](const Reader& r, const std::string& v) { threat.step_size = r.number(v); }},
      {"steps", [&](const Reader& r, const std::string& v) { threat.steps = r.count(v); }},
      {"low", [&](const Reader& r, const std::string& v) { threat.low = r.number(v); }},
      {"high", [&](const Reader& r, const std::string& v) { threat.high = r.number(v); }},
  };
  sections["evaluation"] = {
      {"attacks",
       [&](const Reader& r, const std::string& v) {
         attacks_given = true;
         c.evaluation.attacks.clear();
         for (const auto& item : split_list(v)) {
           c.evaluation.attacks.push_back(r.wrap([&] { return AttackSpec::parse(item); }));
         }
       }},
      {"batch_size", [&](const Reader& r, const std::string& v) { c.evaluation.options.batch_size = r.count(v); }},
      {"pgd_restarts", [&](const Reader& r, const std::string& v) { c.evaluation.options.pgd.restarts = r.count(v); }},
      {"pgd_random_init",
       [&](const Reader& r, const std::string& v) { c.evaluation.options.pgd.random_init = r.boolean(v); }},
      {"spsa_samples",
       [&](const Reader& r, const std::string& v) { c.evaluation.options.spsa.samples_per_step = r.count(v); }},
      {"spsa_perturbation",
       [&](const Reader& r, const std::string& v) { c.evaluation.options.spsa.perturbation = r.number(v); }},
      {"spsa_subsample", [&](const Reader& r, const std::string& v) { c.evaluation.options.spsa_subsample = r.count(v); }},
      {"logit_bins", [&](const Reader& r, const std::string& v) { c.evaluation.logit_bins = r.count(v); }},
      {"probe_depths", [&](const Reader& r, const std::string& v) { c.evaluation.probe_depths = r.counts(v); }},
      {"probe_subsample", [&](const Reader& r, const std::string& v) { c.evaluation.probe_subsample = r.count(v); }},
      {"probe_gammas", [&](const Reader& r, const std::string& v) { c.evaluation.probe_gammas = r.numbers(v); }},
  };
  sections["transfer"] = {
      {"sources", [&](const Reader& r, const std::string& v) { c.transfer.sources = parse_models(r, v, base_dir); }},
      {"targets", [&](const Reader& r, const std::string& v) { c.transfer.targets = parse_models(r, v, base_dir); }},
      {"attack", [&](const Reader& r, const std::string& v) { c.transfer.attack = r.wrap([&] { return AttackSpec::parse(v); }); }},
  };

  std::map<std::string, std::size_t> section_lines;
  std::map<std::string, std::map<std::string, Handler>>::iterator current = sections.end();
  std::string current_name;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  for (std::size_t line = 1; std::getline(in, raw); ++line) {
    const auto comment = raw.find_first_of("#;");
    const std::string s = trim(comment == std::string::npos ? raw : raw.substr(0, comment));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError("malformed section header '" + s + "'", line);
      current_name = trim(s.substr(1, s.size() - 2));
      current = sections.find(current_name);
      if (current == sections.end()) throw ConfigError("unknown section [" + current_name + "]", line);
      if (section_lines.contains(current_name)) throw ConfigError("duplicate section [" + current_name + "]", line);
      section_lines[current_name] = line;
      if (current_name == "threat") has_threat = true;
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key = value, got '" + s + "'", line);
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (current == sections.end()) throw ConfigError("key '" + key + "' outside any section", line);
    const auto handler = current->second.find(key);
    if (handler == current->second.end()) {
      throw ConfigError("unknown key '" + key + "' in [" + current_name + "]", line);
    }
    if (!seen.insert(current_name + "." + key).second) {
      throw ConfigError("duplicate key '" + key + "' in [" + current_name + "]", line);
    }
    if (value.empty()) throw ConfigError(key + ": missing value", line);
    handler->second(Reader{key, line}, value);
  }

  if (schedule == "full") {
    const TrainingConfig full = TrainingConfig::full_schedule();
    if (!explicit_epochs) c.training.epochs = full.epochs;
    if (!explicit_decays) c.training.decay_epochs = full.decay_epochs;
  }
  if (has_threat) c.threat = threat;

  // Cross-field checks, reported at the most relevant line.
  auto at = [&](const std::string& section) { return section_lines.contains(section) ? section_lines[section] : 0; };
  auto check = [&](std::size_t line, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      throw ConfigError(e.what(), line);
    }
  };
  check(at("training") ? at("training") : schedule_line, [&] { c.training.validate(); });
  check(at("objective"), [&] { c.objective.validate(); });
  if (c.objective.uses_adversarial() && !c.threat) {
    throw ConfigError(to_string(c.objective.defense) + " objective needs a [threat] section", defense_line);
  }
  if (c.threat) check(at("threat"), [&] { c.threat->validate(true); });
  // the default attack list only keeps what it can run
  if (!attacks_given && !c.threat) c.evaluation.attacks = {AttackSpec::natural()};
  check(at("evaluation"), [&] {
    if (c.evaluation.attacks.empty()) throw ConfigError("evaluation needs at least one attack");
    c.evaluation.options.spsa.validate();
    if (c.evaluation.options.batch_size == 0) throw ConfigError("evaluation batch size must be positive");
    for (const auto& a : c.evaluation.attacks) {
      if (a.kind != AttackSpec::Kind::natural && !c.threat) {
        throw ConfigError("attack " + a.label() + " needs a [threat] section");
      }
    }
  });
  check(at("data"), [&] {
    if (c.data.classes < 2) throw ConfigError("data needs at least 2 classes");
    if (c.data.source == DataSource::synthetic) {
      if (c.data.test_size >= c.data.size) throw ConfigError("test_size must be smaller than size");
    } else {
      for (const auto* p : {&c.data.train_images, &c.data.train_labels, &c.data.test_images, &c.data.test_labels}) {
        if (p->empty()) throw ConfigError("idx data needs train_images, train_labels, test_images and test_labels");
        if (!std::filesystem::exists(*p)) throw ConfigError("file not found: " + p->string());
      }
    }
  });
  return c;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str(), path.parent_path());
}

}  // namespace advreg
