#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "advreg/evaluation.hpp"

namespace advreg {

enum class ReportFormat { markdown, csv };

ReportFormat parse_report_format(const std::string& text);

// One decimal, half-up, computed exactly from the counts: 4567/10000 -> "45.7%".
std::string format_percent(std::size_t correct, std::size_t total);
// Same rule on a fraction (rounded half-up at the third decimal).
std::string format_percent(double fraction);

// Rows are models, columns the adversaries in order of first appearance.
// Throws Error on an empty set or mixed class counts.
std::string render_report(std::span<const RobustnessReport> reports, ReportFormat format);
// Target rows by source columns.
std::string render_transfer(const TransferMatrix& matrix, ReportFormat format);

nlohmann::ordered_json to_json(const RobustnessReport& report);
RobustnessReport report_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const TransferMatrix& matrix);
TransferMatrix transfer_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const MaskingReport& report);
nlohmann::ordered_json to_json(const PairingProbeReport& report);

}  // namespace advreg
