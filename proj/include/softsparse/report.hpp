#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

namespace softsparse {

/// One row of a MAC/accuracy report. Counts are means per image.
struct ReportRow {
    std::string layer;
    std::string mode;
    std::string threshold; // "" for exact / zeroskip, else e.g. "f:0.3"
    double exact = 0;
    double nonzero = 0;
    double performed = 0;
    std::optional<double> sparsity;
    std::optional<double> accuracy;
};

/// layer,mode,threshold,exact,nonzero,performed,sparsity,accuracy
inline constexpr const char* kReportHeader = "layer,mode,threshold,exact,nonzero,performed,sparsity,accuracy";

/// Shortest round-trippable decimal, integers without a fraction.
std::string format_number(double v);

void write_report_csv(std::ostream& out, const std::vector<ReportRow>& rows);
nlohmann::ordered_json report_json(const std::vector<ReportRow>& rows);

/// Writes <stem>.csv and <stem>.json.
void write_report_files(const std::filesystem::path& stem, const std::vector<ReportRow>& rows);

/// Writes a JSON document, pretty-printed, followed by a newline.
void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& doc);

} // namespace softsparse
