// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vicl/report.hpp"

#include <charconv>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "vicl/error.hpp"

namespace vicl {

std::string format_double(double v) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw Error("format_double: conversion failed");
    return std::string(buf, p);
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) throw Error("mean_of: empty input");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

void Table::add_row(std::string name, std::vector<double> values) {
    if (values.size() != columns.size()) {
        throw ShapeError("table '" + title + "': row '" + name + "' has " + std::to_string(values.size()) +
                         " values for " + std::to_string(columns.size()) + " columns");
    }
    rows.push_back({std::move(name), std::move(values)});
}

const Table::Row& Table::row(const std::string& name) const {
    for (const auto& r : rows) {
        if (r.name == name) return r;
    }
    throw Error("table '" + title + "' has no row '" + name + "'");
}

bool Table::has_row(const std::string& name) const {
    for (const auto& r : rows) {
        if (r.name == name) return true;
    }
    return false;
}

std::string Table::to_csv() const {
    std::string out = row_header;
    for (const auto& c : columns) out += "," + c;
    out += "\n";
    for (const auto& r : rows) {
        out += r.name;
        for (double v : r.values) out += "," + format_double(v);
        out += "\n";
    }
    return out;
}

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

} // namespace

Table Table::from_csv(const std::string& text, std::string title) {
    Table t;
    t.title = std::move(title);
    std::stringstream ss(text);
    std::string line;
    if (!std::getline(ss, line)) throw Error("table csv '" + t.title + "' is empty");
    auto head = split(line);
    if (head.empty()) throw Error("table csv '" + t.title + "' has no header");
    t.row_header = head[0];
    t.columns.assign(head.begin() + 1, head.end());
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        auto cells = split(line);
        if (cells.size() != head.size()) throw Error("table csv '" + t.title + "': ragged row '" + line + "'");
        std::vector<double> values;
        for (std::size_t i = 1; i < cells.size(); ++i) {
            double v = 0.0;
            const auto& c = cells[i];
            const auto [p, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
            if (ec != std::errc() || p != c.data() + c.size()) {
                throw Error("table csv '" + t.title + "': bad number '" + c + "'");
            }
            values.push_back(v);
        }
        t.add_row(cells[0], std::move(values));
    }
    return t;
}

std::string Table::to_markdown(double scale, int digits) const {
    std::string out;
    if (!title.empty()) out += "### " + title + "\n\n";
    out += "| " + row_header + " |";
    for (const auto& c : columns) out += " " + c + " |";
    out += "\n|---|";
    for (std::size_t i = 0; i < columns.size(); ++i) out += "---:|";
    out += "\n";
    char buf[64];
    for (const auto& r : rows) {
        out += "| " + r.name + " |";
        for (double v : r.values) {
            std::snprintf(buf, sizeof(buf), " %.*f |", digits, v * scale);
            out += buf;
        }
        out += "\n";
    }
    return out;
}

} // namespace vicl
