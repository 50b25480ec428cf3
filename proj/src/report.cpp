#include "advreg/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>

#include "advreg/errors.hpp"

namespace advreg {

ReportFormat parse_report_format(const std::string& text) {
  if (text == "markdown") return ReportFormat::markdown;
  if (text == "csv") return ReportFormat::csv;
  throw ConfigError("unknown report format '" + text + "' (expected markdown or csv)");
}

std::string format_percent(std::size_t correct, std::size_t total) {
  if (total == 0) throw Error("percentage of an empty count");
  if (correct > total) throw Error("more correct than total");
  // tenths of a percent, half-up: floor((correct * 1000 + total / 2) / total)
  if (total > (std::uint64_t{1} << 50)) throw Error("count too large to format exactly");
  const std::uint64_t t = (std::uint64_t{correct} * 2000 + total) / (2 * std::uint64_t{total});
  return std::to_string(t / 10) + "." + std::to_string(t % 10) + "%";
}

std::string format_percent(double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw Error("accuracy outside [0,1]");
  const auto t = static_cast<std::uint64_t>(std::floor(fraction * 1000.0 + 0.5));
  return std::to_string(t / 10) + "." + std::to_string(t % 10) + "%";
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string render_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows,
                         ReportFormat format) {
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    if (format == ReportFormat::csv) {
      for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << csv_field(cells[i]);
    } else {
      out << "|";
      for (const auto& c : cells) out << " " << c << " |";
    }
    out << "\n";
  };
  line(header);
  if (format == ReportFormat::markdown) {
    out << "|";
    for (std::size_t i = 0; i < header.size(); ++i) out << (i == 0 ? " --- |" : " ---: |");
    out << "\n";
  }
  for (const auto& r : rows) line(r);
  return out.str();
}

}  // namespace

std::string render_report(std::span<const RobustnessReport> reports, ReportFormat format) {
  if (reports.empty()) throw Error("no reports to render");
  std::vector<AttackSpec> columns;
  for (const auto& r : reports) {
    if (r.num_classes != reports.front().num_classes) {
      throw Error("reports mix class counts (" + std::to_string(reports.front().num_classes) + " and " +
                  std::to_string(r.num_classes) + ")");
    }
    for (const auto& a : r.results) {
      if (std::find(columns.begin(), columns.end(), a.spec) == columns.end()) columns.push_back(a.spec);
    }
  }
  std::vector<std::string> header{"Method"};
  for (const auto& c : columns) header.push_back(c.title());
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : reports) {
    std::vector<std::string> row{r.model_id};
    for (const auto& c : columns) {
      auto it = std::find_if(r.results.begin(), r.results.end(), [&](const AdversaryResult& a) { return a.spec == c; });
      row.push_back(it == r.results.end() ? "-" : format_percent(it->count.correct, it->count.total));
    }
    rows.push_back(std::move(row));
  }
  return render_table(header, rows, format);
}

std::string render_transfer(const TransferMatrix& matrix, ReportFormat format) {
  if (matrix.sources.empty() || matrix.targets.empty()) throw Error("empty transfer matrix");
  std::vector<std::string> header{"Target \\ Source"};
  header.insert(header.end(), matrix.sources.begin(), matrix.sources.end());
  std::vector<std::vector<std::string>> rows;
  for (std::size_t t = 0; t < matrix.targets.size(); ++t) {
    std::vector<std::string> row{matrix.targets[t]};
    for (std::size_t s = 0; s < matrix.sources.size(); ++s) {
      row.push_back(format_percent(matrix.cells[t][s].correct, matrix.cells[t][s].total));
    }
    rows.push_back(std::move(row));
  }
  return render_table(header, rows, format);
}

namespace {

nlohmann::ordered_json count_json(const AccuracyCount& c) {
  nlohmann::ordered_json j;
  j["correct"] = c.correct;
  j["total"] = c.total;
  j["accuracy"] = c.fraction();
  j["percent"] = format_percent(c.correct, c.total);
  return j;
}

nlohmann::ordered_json result_json(const AdversaryResult& r) {
  nlohmann::ordered_json j = count_json(r.count);
  j["attack"] = r.spec.label();
  if (!r.subsample.empty()) j["subsample"] = r.subsample;
  return j;
}

}  // namespace

nlohmann::ordered_json to_json(const RobustnessReport& report) {
  nlohmann::ordered_json j;
  j["model"] = report.model_id;
  j["num_classes"] = report.num_classes;
  j["seed"] = report.seed;
  if (report.threat) {
    j["threat"] = {{"epsilon", report.threat->epsilon}, {"step_size", report.threat->step_size},
                   {"steps", report.threat->steps},     {"low", report.threat->low},
                   {"high", report.threat->high}};
  }
  j["results"] = nlohmann::ordered_json::array();
  for (const auto& r : report.results) j["results"].push_back(result_json(r));
  if (report.logits) {
    const auto& s = *report.logits;
    j["logits"] = {{"mean", s.mean},          {"variance", s.variance}, {"min", s.min},
                   {"max", s.max},            {"bin_edges", s.bin_edges}, {"counts", s.counts}};
  }
  return j;
}

RobustnessReport report_from_json(const nlohmann::json& j) {
  try {
    RobustnessReport r;
    r.model_id = j.at("model").get<std::string>();
    r.num_classes = j.at("num_classes").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("threat")) {
      const auto& t = j["threat"];
      r.threat = ThreatModel{t.at("epsilon").get<double>(), t.at("step_size").get<double>(),
                             t.at("steps").get<std::size_t>(), t.at("low").get<double>(), t.at("high").get<double>(),
                             false};
    }
    for (const auto& e : j.at("results")) {
      AdversaryResult a;
      a.spec = AttackSpec::parse(e.at("attack").get<std::string>());
      a.count = {e.at("correct").get<std::size_t>(), e.at("total").get<std::size_t>()};
      if (e.contains("subsample")) a.subsample = e["subsample"].get<std::vector<std::size_t>>();
      r.results.push_back(std::move(a));
    }
    if (j.contains("logits")) {
      const auto& l = j["logits"];
      r.logits = LogitStats{l.at("mean").get<double>(), l.at("variance").get<double>(), l.at("min").get<double>(),
                            l.at("max").get<double>(), l.at("bin_edges").get<std::vector<double>>(),
                            l.at("counts").get<std::vector<std::size_t>>()};
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed report: ") + e.what());
  }
}

nlohmann::ordered_json to_json(const TransferMatrix& matrix) {
  nlohmann::ordered_json j;
  j["attack"] = matrix.spec.label();
  j["num_classes"] = matrix.num_classes;
  j["sources"] = matrix.sources;
  j["targets"] = matrix.targets;
  j["cells"] = nlohmann::ordered_json::array();
  for (std::size_t t = 0; t < matrix.targets.size(); ++t) {
    auto row = nlohmann::ordered_json::array();
    for (std::size_t s = 0; s < matrix.sources.size(); ++s) row.push_back(count_json(matrix.cells[t][s]));
    j["cells"].push_back(std::move(row));
  }
  return j;
}

TransferMatrix transfer_from_json(const nlohmann::json& j) {
  try {
    TransferMatrix m;
    m.spec = AttackSpec::parse(j.at("attack").get<std::string>());
    m.num_classes = j.at("num_classes").get<std::size_t>();
    m.sources = j.at("sources").get<std::vector<std::string>>();
    m.targets = j.at("targets").get<std::vector<std::string>>();
    for (const auto& row : j.at("cells")) {
      std::vector<AccuracyCount> cells;
      for (const auto& c : row) cells.push_back({c.at("correct").get<std::size_t>(), c.at("total").get<std::size_t>()});
      m.cells.push_back(std::move(cells));
    }
    if (m.cells.size() != m.targets.size()) throw FormatError("transfer matrix row count mismatch");
    for (const auto& row : m.cells) {
      if (row.size() != m.sources.size()) throw FormatError("transfer matrix column count mismatch");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed transfer matrix: ") + e.what());
  }
}

nlohmann::ordered_json to_json(const MaskingReport& report) {
  nlohmann::ordered_json j;
  j["pgd"] = nlohmann::ordered_json::array();
  for (const auto& r : report.pgd) j["pgd"].push_back(result_json(r));
  j["spsa"] = result_json(report.spsa);
  j["depth_drop_points"] = report.depth_drop_points;
  j["spsa_gap_points"] = report.spsa_gap_points;
  j["flagged"] = report.flagged;
  if (!report.subsample.empty()) j["subsample"] = report.subsample;
  return j;
}

nlohmann::ordered_json to_json(const PairingProbeReport& report) {
  nlohmann::ordered_json j;
  j["clean_gradient"] = report.clean_gradient.values();
  j["adv_gradient"] = report.adv_gradient.values();
  j["gammas"] = nlohmann::ordered_json::array();
  for (const auto& g : report.gammas) {
    j["gammas"].push_back({{"gamma", g.gamma},
                           {"analytic", g.analytic},
                           {"autodiff", g.autodiff},
                           {"finite_difference", g.finite_difference},
                           {"relative_error", g.relative_error},
                           {"sign_agrees", g.sign_agrees}});
  }
  return j;
}

}  // namespace advreg
