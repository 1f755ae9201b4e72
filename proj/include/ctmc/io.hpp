#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "ctmc/core.hpp"
#include "ctmc/errors.hpp"

namespace ctmc {

// ---------------------------------------------------------------------------
// Deterministic number formatting

/// 6 significant digits, '.' decimal separator, locale-independent; NaN
/// serializes as NA (the missing-value convention for all emitted tables).
inline std::string format_number(double v) {
    if (std::isnan(v)) return "NA";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 6);
    if (ec != std::errc()) throw numeric_error("format_number: conversion failed");
    return std::string(buf, ptr);
}

// ---------------------------------------------------------------------------
// Tables

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> row) {
        if (row.size() != columns.size())
            throw dimension_error("Table: row width does not match header");
        rows.push_back(std::move(row));
    }
};

enum class TableFormat { Delimited, Json };

/// Byte-deterministic table emission: fixed column order, '\n' endings.
inline void emit_table(const Table& table, const std::string& path,
                       TableFormat format = TableFormat::Delimited) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("emit_table: cannot open '" + path + "' for writing");
    if (format == TableFormat::Delimited) {
        for (std::size_t c = 0; c < table.columns.size(); ++c)
            out << (c ? "," : "") << table.columns[c];
        out << '\n';
        for (const auto& row : table.rows) {
            for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
            out << '\n';
        }
    } else {
        out << "[\n";
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
            out << "  {";
            for (std::size_t c = 0; c < table.columns.size(); ++c) {
                out << (c ? ", " : "") << '"' << table.columns[c] << "\": \"" << table.rows[r][c]
                    << '"';
            }
            out << (r + 1 < table.rows.size() ? "},\n" : "}\n");
        }
        out << "]\n";
    }
    if (!out) throw data_error("emit_table: write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// Loading

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(field);
            field.clear();
        } else if (ch != '\r') {
            field += ch;
        }
    }
    out.push_back(field);
    return out;
}

} // namespace detail

/// Reads one period id per line; defines the period order for panels whose
/// ids do not sort lexicographically.
inline std::vector<std::string> load_period_order(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("load_period_order: cannot open '" + path + "'");
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

/// Loads a panel file: header `id,period,state`, one observation per row.
/// Periods sort lexicographically unless an explicit order is supplied.
inline PanelDataset load_panel(const std::string& path, const StateSpace& space,
                               const std::vector<std::string>& period_order = {}) {
    std::ifstream in(path);
    if (!in) throw data_error("load_panel: cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line))
        throw data_error("load_panel: '" + path + "' is empty");
    auto header = detail::split_csv_line(line);
    if (header != std::vector<std::string>{"id", "period", "state"})
        throw data_error("load_panel: expected header 'id,period,state' in '" + path + "'");

    struct RawRecord {
        std::string id, period;
        std::uint16_t state;
    };
    std::vector<RawRecord> raw;
    std::map<std::string, std::size_t> seen_periods;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != 3)
            throw data_error("load_panel: malformed row at line " + std::to_string(line_no) +
                             " of '" + path + "'");
        if (!space.contains(fields[2]))
            throw data_error("load_panel: unknown state '" + fields[2] + "' at line " +
                             std::to_string(line_no) + " of '" + path + "'");
        seen_periods.emplace(fields[1], seen_periods.size());
        raw.push_back({fields[0], fields[1],
                       static_cast<std::uint16_t>(space.index(fields[2]))});
    }

    std::vector<std::string> periods;
    if (!period_order.empty()) {
        for (const auto& p : period_order)
            if (seen_periods.count(p)) periods.push_back(p);
        for (const auto& [p, _] : seen_periods)
            if (std::find(periods.begin(), periods.end(), p) == periods.end())
                throw data_error("load_panel: period '" + p + "' missing from the period "
                                 "order file");
    } else {
        for (const auto& [p, _] : seen_periods) periods.push_back(p); // map is sorted
    }
    std::map<std::string, std::uint32_t> index;
    for (std::size_t i = 0; i < periods.size(); ++i)
        index[periods[i]] = static_cast<std::uint32_t>(i);

    std::vector<PanelRecord> records;
    records.reserve(raw.size());
    for (auto& r : raw) records.push_back({std::move(r.id), index[r.period], r.state});
    return PanelDataset(space, std::move(periods), std::move(records));
}

/// Loads aggregated counts: header `period,from,to,count`, one cell per row.
/// Returns one TransitionCounts per period, in period order.
inline std::vector<TransitionCounts> load_counts(const std::string& path,
                                                 const StateSpace& space,
                                                 const std::vector<std::string>& period_order = {}) {
    std::ifstream in(path);
    if (!in) throw data_error("load_counts: cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line))
        throw data_error("load_counts: '" + path + "' is empty");
    auto header = detail::split_csv_line(line);
    if (header != std::vector<std::string>{"period", "from", "to", "count"})
        throw data_error("load_counts: expected header 'period,from,to,count' in '" + path + "'");

    std::map<std::string, TransitionCounts> by_period;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != 4)
            throw data_error("load_counts: malformed row at line " + std::to_string(line_no) +
                             " of '" + path + "'");
        for (int f : {1, 2})
            if (!space.contains(fields[f]))
                throw data_error("load_counts: unknown state '" + fields[f] + "' at line " +
                                 std::to_string(line_no) + " of '" + path + "'");
        std::int64_t count = 0;
        auto [ptr, ec] = std::from_chars(fields[3].data(), fields[3].data() + fields[3].size(),
                                         count);
        if (ec != std::errc() || ptr != fields[3].data() + fields[3].size() || count < 0)
            throw data_error("load_counts: bad count at line " + std::to_string(line_no) +
                             " of '" + path + "'");
        auto it = by_period.find(fields[0]);
        if (it == by_period.end())
            it = by_period.emplace(fields[0], TransitionCounts::zero(space, fields[0])).first;
        it->second.at(space.index(fields[1]), space.index(fields[2])) += count;
    }

    std::vector<TransitionCounts> out;
    if (!period_order.empty()) {
        for (const auto& p : period_order) {
            auto it = by_period.find(p);
            if (it != by_period.end()) out.push_back(it->second);
        }
        if (out.size() != by_period.size())
            throw data_error("load_counts: some periods missing from the period order file");
    } else {
        for (const auto& [_, counts] : by_period) out.push_back(counts);
    }
    return out;
}

/// Writes a panel in the `id,period,state` interchange format.
inline void emit_panel(const PanelDataset& panel, const std::string& path) {
    Table t;
    t.columns = {"id", "period", "state"};
    for (const auto& r : panel.records())
        t.add_row({r.id, panel.periods()[r.period], panel.space().label(r.state)});
    emit_table(t, path);
}

/// Loads a rate matrix from `from,to,rate` rows (optionally prefixed with a
/// `season` column for a seasonal schedule). Diagonals are derived.
inline std::vector<GeneratorMatrix> load_rate_schedule(const std::string& path,
                                                       const StateSpace& space) {
    std::ifstream in(path);
    if (!in) throw data_error("load_rate_schedule: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line))
        throw data_error("load_rate_schedule: '" + path + "' is empty");
    auto header = detail::split_csv_line(line);
    bool seasonal = false;
    if (header == std::vector<std::string>{"season", "from", "to", "rate"})
        seasonal = true;
    else if (header != std::vector<std::string>{"from", "to", "rate"})
        throw data_error("load_rate_schedule: expected header 'from,to,rate' or "
                         "'season,from,to,rate' in '" + path + "'");

    const std::size_t k = space.size();
    std::map<long, Matrix> seasons;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != (seasonal ? 4u : 3u))
            throw data_error("load_rate_schedule: malformed row at line " +
                             std::to_string(line_no) + " of '" + path + "'");
        long season = 0;
        std::size_t at = 0;
        if (seasonal) {
            try {
                season = std::stol(fields[0]);
            } catch (...) {
                throw data_error("load_rate_schedule: bad season at line " +
                                 std::to_string(line_no));
            }
            at = 1;
        }
        const std::string& from = fields[at];
        const std::string& to = fields[at + 1];
        for (const auto* s : {&from, &to})
            if (!space.contains(*s))
                throw data_error("load_rate_schedule: unknown state '" + *s + "' at line " +
                                 std::to_string(line_no) + " of '" + path + "'");
        double rate = 0.0;
        try {
            rate = std::stod(fields[at + 2]);
        } catch (...) {
            throw data_error("load_rate_schedule: bad rate at line " + std::to_string(line_no));
        }
        auto it = seasons.find(season);
        if (it == seasons.end()) it = seasons.emplace(season, Matrix(k, k)).first;
        if (from == to)
            throw data_error("load_rate_schedule: diagonal rates are derived, not given "
                             "(line " + std::to_string(line_no) + ")");
        it->second(space.index(from), space.index(to)) = rate;
    }
    if (seasons.empty()) throw data_error("load_rate_schedule: no rates in '" + path + "'");

    std::vector<GeneratorMatrix> out;
    for (auto& [season, m] : seasons) {
        for (std::size_t i = 0; i < k; ++i) {
            double off = 0.0;
            for (std::size_t j = 0; j < k; ++j)
                if (j != i) off += m(i, j);
            m(i, i) = -off;
        }
        out.emplace_back(space, std::move(m));
    }
    return out;
}

} // namespace ctmc
