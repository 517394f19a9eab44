#include "softsparse/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "softsparse/error.hpp"

namespace softsparse {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        throw Error("cannot write " + path.string());
    }
    return f;
}

std::string optional_cell(const std::optional<double>& v) {
    return v ? format_number(*v) : "";
}

} // namespace

std::string format_number(double v) {
    if (std::isfinite(v) && v == std::round(v) && std::fabs(v) < 1e15) {
        return std::to_string(static_cast<long long>(v));
    }
    char buf[32];
    for (int precision = 6; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof buf, "%.*g", precision, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

void write_report_csv(std::ostream& out, const std::vector<ReportRow>& rows) {
    out << kReportHeader << '\n';
    for (const auto& r : rows) {
        out << r.layer << ',' << r.mode << ',' << r.threshold << ',' << format_number(r.exact) << ','
            << format_number(r.nonzero) << ',' << format_number(r.performed) << ',' << optional_cell(r.sparsity)
            << ',' << optional_cell(r.accuracy) << '\n';
    }
}

nlohmann::ordered_json report_json(const std::vector<ReportRow>& rows) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        nlohmann::ordered_json j;
        j["layer"] = r.layer;
        j["mode"] = r.mode;
        j["threshold"] = r.threshold.empty() ? nlohmann::ordered_json() : nlohmann::ordered_json(r.threshold);
        j["exact"] = r.exact;
        j["nonzero"] = r.nonzero;
        j["performed"] = r.performed;
        j["sparsity"] = r.sparsity ? nlohmann::ordered_json(*r.sparsity) : nlohmann::ordered_json();
        j["accuracy"] = r.accuracy ? nlohmann::ordered_json(*r.accuracy) : nlohmann::ordered_json();
        arr.push_back(std::move(j));
    }
    return arr;
}

void write_report_files(const std::filesystem::path& stem, const std::vector<ReportRow>& rows) {
    auto csv = open_out(stem.string() + ".csv");
    write_report_csv(csv, rows);
    write_json_file(stem.string() + ".json", report_json(rows));
}

void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& doc) {
    auto f = open_out(path);
    f << doc.dump(2) << '\n';
    if (!f) {
        throw Error("failed writing " + path.string());
    }
}

} // namespace softsparse
