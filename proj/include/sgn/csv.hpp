#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgn/optimizers.hpp"

namespace sgn {

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    Index column(const std::string& name) const {
        for (size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<Index>(i);
        throw std::invalid_argument("CsvTable: no column named " + name);
    }
};

// Comma separator, '.' decimal point, one header row, deterministic order.
inline void emit_csv(const CsvTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("emit_csv: cannot open " + path);
    for (size_t i = 0; i < table.header.size(); ++i)
        out << table.header[i] << (i + 1 < table.header.size() ? "," : "");
    out << "\n";
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size())
            throw std::invalid_argument("emit_csv: row width mismatch");
        for (size_t i = 0; i < row.size(); ++i)
            out << row[i] << (i + 1 < row.size() ? "," : "");
        out << "\n";
    }
    if (!out) throw std::runtime_error("emit_csv: write failed for " + path);
}

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_csv: cannot open " + path);
    CsvTable table;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (!line.empty() && line.back() == ',') fields.push_back("");
        if (first) {
            table.header = fields;
            first = false;
        } else {
            table.rows.push_back(fields);
        }
    }
    return table;
}

inline const std::vector<std::string>& trace_csv_header() {
    static const std::vector<std::string> header = {
        "iteration",       "loss",       "step_size",         "cumulative_tau",
        "residual_norm",   "sketch_rank", "sufficiency",      "alignment_mismatch",
        "alignment_funcgrad", "line_search_failed", "sketch_fallback"};
    return header;
}

inline CsvTable traces_to_csv(const std::vector<TrainTrace>& traces) {
    CsvTable table;
    table.header = trace_csv_header();
    auto opt_num = [](double v) { return std::isnan(v) ? std::string() : format_double(v); };
    for (const auto& t : traces) {
        table.rows.push_back({std::to_string(t.iteration), format_double(t.loss),
                              format_double(t.step_size), format_double(t.cumulative_tau),
                              opt_num(t.residual_norm),
                              t.sketch_rank < 0 ? std::string() : std::to_string(t.sketch_rank),
                              opt_num(t.sufficiency), opt_num(t.alignment_mismatch),
                              opt_num(t.alignment_funcgrad),
                              t.line_search_failed ? "1" : "0", t.sketch_fallback ? "1" : "0"});
    }
    return table;
}

inline std::vector<TrainTrace> traces_from_csv(const CsvTable& table) {
    std::vector<TrainTrace> traces;
    auto parse_opt = [](const std::string& s) {
        return s.empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(s);
    };
    for (const auto& row : table.rows) {
        TrainTrace t;
        t.iteration = std::stoi(row[0]);
        t.loss = std::stod(row[1]);
        t.step_size = std::stod(row[2]);
        t.cumulative_tau = std::stod(row[3]);
        t.residual_norm = parse_opt(row[4]);
        t.sketch_rank = row[5].empty() ? -1 : std::stol(row[5]);
        t.sufficiency = parse_opt(row[6]);
        t.alignment_mismatch = parse_opt(row[7]);
        t.alignment_funcgrad = parse_opt(row[8]);
        t.line_search_failed = row[9] == "1";
        t.sketch_fallback = row[10] == "1";
        traces.push_back(t);
    }
    return traces;
}

}  // namespace sgn
